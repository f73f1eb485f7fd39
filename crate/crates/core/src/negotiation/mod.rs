//! Decentralized conflict resolution between agents that share one floor.
//!
//! A [`Fleet`] holds every agent's current trajectory. Agents that need a
//! plan either take turns holding the token ([`Fleet::token_pass`]) or plan
//! greedily and settle each conflict in a bilateral negotiation
//! ([`Fleet::resolve_agent`]).
//!
//! When a committed counterpart has to give way, it replans around every
//! other committed trajectory plus the initiator's candidate, not just the
//! agents it has negotiated with. That keeps the committed set mutually
//! conflict-free.

mod rules;

pub use rules::{
    apply_karma_update, negotiate_altruistic, negotiate_egoistic, negotiate_karma,
    select_priority_conflict, DeltaCost, MechanismKind, Side,
};

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conflicts::{detect_conflicts, AgentId, Conflict, ConflictKind, Time, Trajectory};
use crate::error::{ContractError, SimError};
use crate::planner::{plan, AstarCounter, SearchQuery};
use crate::world::{Cell, GridMap, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanStatus {
    /// Standing still with no plan, e.g. idle or waiting for its turn.
    Parked,
    Committed,
    /// No plan could be found; stays put this step and retries next step.
    WaitFallback,
}

#[derive(Debug, Clone)]
pub struct FleetAgent {
    pub goal: Option<Cell>,
    pub trajectory: Trajectory,
    pub status: PlanStatus,
    pub karma: i64,
    version: u64,
}

/// Record of one bilateral negotiation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NegotiationOutcome {
    pub time: Time,
    pub initiator: AgentId,
    pub counterpart: AgentId,
    pub conflict: Conflict,
    pub delta_initiator: DeltaCost,
    pub delta_counterpart: DeltaCost,
    pub replanner: AgentId,
    pub delta_replanner: DeltaCost,
    pub karma_transfer: i64,
    /// `[initiator, counterpart]`
    pub karma_before: [i64; 2],
    pub karma_after: [i64; 2],
    /// `None` marks a wait fallback of the initiator.
    pub new_trajectory: Option<Trajectory>,
    /// False when the initiator later fell back and the whole resolution
    /// was rolled back.
    pub committed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanResult {
    Committed,
    WaitFallback,
}

/// One agent's planning attempt within a round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanEvent {
    pub time: Time,
    pub agent: AgentId,
    pub result: PlanResult,
    pub cost: Option<u32>,
    pub astar_calls: u64,
    pub negotiations: usize,
}

#[derive(Debug, Clone, Default)]
pub struct RoundReport {
    pub events: Vec<PlanEvent>,
    pub negotiations: Vec<NegotiationOutcome>,
}

#[derive(Debug, Clone)]
pub struct Fleet {
    map: GridMap,
    now: Time,
    horizon: u32,
    agents: Vec<FleetAgent>,
    counter: AstarCounter,
}

impl Fleet {
    pub fn new(map: GridMap, horizon: u32, poses: &[Pose]) -> Self {
        let agents = poses
            .iter()
            .enumerate()
            .map(|(i, &pose)| FleetAgent {
                goal: None,
                trajectory: Trajectory::parked(AgentId(i as u32), 0, pose),
                status: PlanStatus::Parked,
                karma: 0,
                version: 0,
            })
            .collect();
        Self {
            map,
            now: 0,
            horizon,
            agents,
            counter: AstarCounter::new(),
        }
    }

    pub fn map(&self) -> &GridMap {
        &self.map
    }

    pub fn now(&self) -> Time {
        self.now
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = AgentId> {
        (0..self.agents.len() as u32).map(AgentId)
    }

    pub fn agent(&self, id: AgentId) -> &FleetAgent {
        &self.agents[id.0 as usize]
    }

    fn agent_mut(&mut self, id: AgentId) -> &mut FleetAgent {
        &mut self.agents[id.0 as usize]
    }

    pub fn pose(&self, id: AgentId) -> Pose {
        self.agent(id).trajectory.first()
    }

    pub fn karma(&self, id: AgentId) -> i64 {
        self.agent(id).karma
    }

    pub fn astar_calls(&self) -> u64 {
        self.counter.count()
    }

    pub fn trajectories(&self) -> impl Iterator<Item = &Trajectory> {
        self.agents.iter().map(|a| &a.trajectory)
    }

    /// Gives the agent a new destination (or none) and drops its plan.
    pub fn set_goal(&mut self, id: AgentId, goal: Option<Cell>) {
        let now = self.now;
        let agent = self.agent_mut(id);
        let pose = agent.trajectory.first();
        agent.goal = goal;
        agent.trajectory = Trajectory::parked(id, now, pose);
        agent.status = PlanStatus::Parked;
        agent.version += 1;
    }

    pub fn reset_karma(&mut self, id: AgentId) {
        self.agent_mut(id).karma = 0;
    }

    pub fn set_karma(&mut self, id: AgentId, karma: i64) {
        self.agent_mut(id).karma = karma;
    }

    /// Installs `traj` as the agent's committed plan. It must start at the
    /// agent's current pose and time.
    pub fn commit_trajectory(&mut self, id: AgentId, traj: Trajectory) -> Result<(), ContractError> {
        if id.0 as usize >= self.agents.len() {
            return Err(ContractError::UnknownAgent(id));
        }
        if traj.agent != id || traj.start_time != self.now || traj.first() != self.pose(id) {
            return Err(ContractError::Invalid(format!(
                "trajectory for {id} must start at its pose at t={}",
                self.now
            )));
        }
        if !traj.is_kinematically_valid(&self.map) {
            return Err(ContractError::Invalid(format!("trajectory for {id} is not kinematically valid")));
        }
        self.commit(id, traj);
        Ok(())
    }

    /// Cost increase for `id` if it replans around every static agent plus
    /// `extra_avoid`, with the candidate plan.
    pub fn delta_cost_against(&mut self, id: AgentId, extra_avoid: AgentId) -> (DeltaCost, Option<Trajectory>) {
        let mut avoid: Vec<AgentId> = self
            .ids()
            .filter(|&k| k != id && k != extra_avoid && !self.is_negotiable(k))
            .collect();
        avoid.push(extra_avoid);
        let baseline = self.agent(id).trajectory.cost();
        self.delta_cost(id, &avoid, None, baseline)
    }

    pub fn needs_plan(&self, id: AgentId) -> bool {
        let a = self.agent(id);
        a.goal.is_some() && a.status != PlanStatus::Committed
    }

    /// Committed agents with a goal can be asked to give way; parked and
    /// waiting agents are static obstacles.
    pub fn is_negotiable(&self, id: AgentId) -> bool {
        let a = self.agent(id);
        a.goal.is_some() && a.status == PlanStatus::Committed
    }

    /// The agent has executed its whole plan and stands on its goal.
    pub fn has_arrived(&self, id: AgentId) -> bool {
        let a = self.agent(id);
        a.status == PlanStatus::Committed
            && a.trajectory.poses.len() == 1
            && Some(a.trajectory.first().cell) == a.goal
    }

    /// Plans every agent that needs a plan, in `order`.
    pub fn plan_round<R: Rng + ?Sized>(
        &mut self,
        mechanism: MechanismKind,
        order: &[AgentId],
        rng: &mut R,
    ) -> RoundReport {
        match mechanism {
            MechanismKind::TokenPassing => self.token_pass(order),
            _ => {
                let mut report = RoundReport::default();
                for &id in order {
                    if !self.needs_plan(id) {
                        continue;
                    }
                    let (event, mut negotiations) = self.resolve_agent(id, mechanism, rng);
                    report.events.push(event);
                    report.negotiations.append(&mut negotiations);
                }
                report
            }
        }
    }

    /// Each agent in `order` that needs a plan plans once around every other
    /// agent's current trajectory, which stays fixed.
    pub fn token_pass(&mut self, order: &[AgentId]) -> RoundReport {
        let mut report = RoundReport::default();
        for &id in order {
            if !self.needs_plan(id) {
                continue;
            }
            let before = self.counter.count();
            let avoid: Vec<_> = self.ids().filter(|&k| k != id).collect();
            let found = self.plan_for(id, &avoid, None);
            let event = match found {
                Some(traj) => {
                    let cost = traj.cost();
                    self.commit(id, traj);
                    PlanEvent {
                        time: self.now,
                        agent: id,
                        result: PlanResult::Committed,
                        cost: Some(cost),
                        astar_calls: self.counter.count() - before,
                        negotiations: 0,
                    }
                }
                None => {
                    self.fall_back(id);
                    PlanEvent {
                        time: self.now,
                        agent: id,
                        result: PlanResult::WaitFallback,
                        cost: None,
                        astar_calls: self.counter.count() - before,
                        negotiations: 0,
                    }
                }
            };
            report.events.push(event);
        }
        report
    }

    fn plan_for(&mut self, id: AgentId, avoid_ids: &[AgentId], extra: Option<&Trajectory>) -> Option<Trajectory> {
        let agent = &self.agents[id.0 as usize];
        let goal = agent.goal?;
        let mut avoid: Vec<&Trajectory> = avoid_ids
            .iter()
            .filter(|&&k| k != id)
            .map(|k| &self.agents[k.0 as usize].trajectory)
            .collect();
        if let Some(t) = extra {
            avoid.push(t);
        }
        let query = SearchQuery {
            agent: id,
            start: agent.trajectory.first(),
            start_time: self.now,
            goal,
            avoid,
            horizon: self.horizon,
        };
        plan(&self.map, &query, &mut self.counter)
    }

    fn commit(&mut self, id: AgentId, traj: Trajectory) {
        let agent = self.agent_mut(id);
        agent.trajectory = traj;
        agent.status = PlanStatus::Committed;
        agent.version += 1;
    }

    fn fall_back(&mut self, id: AgentId) {
        let now = self.now;
        let agent = self.agent_mut(id);
        let pose = agent.trajectory.first();
        agent.trajectory = Trajectory::parked(id, now, pose);
        agent.status = PlanStatus::WaitFallback;
        agent.version += 1;
    }

    /// Cost increase for `id` when it replans around `avoid_ids` plus
    /// `extra`, relative to `baseline`.
    fn delta_cost(
        &mut self,
        id: AgentId,
        avoid_ids: &[AgentId],
        extra: Option<&Trajectory>,
        baseline: u32,
    ) -> (DeltaCost, Option<Trajectory>) {
        match self.plan_for(id, avoid_ids, extra) {
            Some(t) => (DeltaCost::Finite(t.cost() as i64 - baseline as i64), Some(t)),
            None => (DeltaCost::Infeasible, None),
        }
    }

    /// Plans agent `i` and negotiates its conflicts with committed agents
    /// one at a time until its candidate is conflict-free.
    ///
    /// Returns the plan event plus every negotiation held. If the agent ends
    /// up waiting, all changes made during the call (counterpart plans and
    /// Karma) are undone and the negotiations are marked uncommitted.
    pub fn resolve_agent<R: Rng + ?Sized>(
        &mut self,
        i: AgentId,
        mechanism: MechanismKind,
        rng: &mut R,
    ) -> (PlanEvent, Vec<NegotiationOutcome>) {
        let calls_before = self.counter.count();
        let snapshot = self.agents.clone();
        let mut outcomes = Vec::new();

        let result = self.negotiate_loop(i, mechanism, rng, &mut outcomes);
        let event_cost = match result {
            Some(traj) => {
                let cost = traj.cost();
                self.commit(i, traj);
                Some(cost)
            }
            None => {
                self.agents = snapshot;
                self.fall_back(i);
                for o in &mut outcomes {
                    o.committed = false;
                }
                None
            }
        };
        let event = PlanEvent {
            time: self.now,
            agent: i,
            result: if event_cost.is_some() {
                PlanResult::Committed
            } else {
                PlanResult::WaitFallback
            },
            cost: event_cost,
            astar_calls: self.counter.count() - calls_before,
            negotiations: outcomes.len(),
        };
        (event, outcomes)
    }

    fn negotiate_loop<R: Rng + ?Sized>(
        &mut self,
        i: AgentId,
        mechanism: MechanismKind,
        rng: &mut R,
        outcomes: &mut Vec<NegotiationOutcome>,
    ) -> Option<Trajectory> {
        let fixed: Vec<AgentId> = self
            .ids()
            .filter(|&k| k != i && !self.is_negotiable(k))
            .collect();
        let mut considered: BTreeSet<AgentId> = BTreeSet::new();
        let avoid_of = |considered: &BTreeSet<AgentId>| -> Vec<AgentId> {
            fixed.iter().chain(considered.iter()).copied().collect()
        };

        let mut candidate = self.plan_for(i, &avoid_of(&considered), None)?;
        // (counterpart, counterpart version, considered epoch) -> Δ_i and plan
        let mut cache: BTreeMap<(AgentId, u64, u64), (DeltaCost, Option<Trajectory>)> = BTreeMap::new();
        let mut epoch = 0u64;
        let cap = 10 * self.agents.len().max(1);

        for _ in 0..cap {
            let conflicts = detect_conflicts(
                &candidate,
                self.agents.iter().map(|a| &a.trajectory),
            );
            if conflicts.is_empty() {
                return Some(candidate);
            }

            let counterparts: BTreeSet<AgentId> = conflicts.iter().map(|c| c.agent_b).collect();
            let mut deltas = BTreeMap::new();
            for &j in &counterparts {
                let key = (j, self.agent(j).version, epoch);
                let entry = cache.entry(key).or_insert_with(|| {
                    let mut avoid = avoid_of(&considered);
                    avoid.push(j);
                    self.delta_cost(i, &avoid, None, candidate.cost())
                });
                deltas.insert(j, entry.0);
            }
            let conflict = select_priority_conflict(&conflicts, &deltas)
                .expect("every counterpart has a delta");
            let j = conflict.agent_b;
            let (delta_i, plan_i) = cache[&(j, self.agent(j).version, epoch)].clone();

            // j gives way around everyone else plus i's candidate
            let others: Vec<AgentId> = self.ids().filter(|&k| k != i && k != j).collect();
            let j_cost = self.agent(j).trajectory.cost();
            let (delta_j, plan_j) = self.delta_cost(j, &others, Some(&candidate), j_cost);

            let (ki, kj) = (self.karma(i), self.karma(j));
            let decision = match mechanism {
                MechanismKind::Egoistic => Some(negotiate_egoistic(delta_i, delta_j)),
                MechanismKind::Altruistic => negotiate_altruistic(delta_i, delta_j, rng),
                MechanismKind::Karma { tau } => negotiate_karma(delta_i, delta_j, ki, kj, tau, rng),
                MechanismKind::TokenPassing => unreachable!("token passing does not negotiate"),
            };

            let mut outcome = NegotiationOutcome {
                time: self.now,
                initiator: i,
                counterpart: j,
                conflict,
                delta_initiator: delta_i,
                delta_counterpart: delta_j,
                replanner: i,
                delta_replanner: DeltaCost::Infeasible,
                karma_transfer: 0,
                karma_before: [ki, kj],
                karma_after: [ki, kj],
                new_trajectory: None,
                committed: true,
            };

            let side = match decision {
                Some(side) => side,
                None => {
                    outcomes.push(outcome);
                    return None;
                }
            };
            let (replanner, delta_r, new_plan) = match side {
                Side::Initiator => (i, delta_i, plan_i),
                Side::Counterpart => (j, delta_j, plan_j),
            };
            outcome.replanner = replanner;
            outcome.delta_replanner = delta_r;
            let (Some(d), Some(new_plan)) = (delta_r.finite(), new_plan) else {
                outcomes.push(outcome);
                return None;
            };

            if mechanism.is_karma() {
                let (ki2, kj2) = apply_karma_update(ki, kj, side, d);
                self.agent_mut(i).karma = ki2;
                self.agent_mut(j).karma = kj2;
                outcome.karma_transfer = d;
                outcome.karma_after = [ki2, kj2];
            }
            outcome.new_trajectory = Some(new_plan.clone());
            outcomes.push(outcome);

            match side {
                Side::Initiator => {
                    considered.insert(j);
                    candidate = new_plan;
                    epoch += 1;
                }
                Side::Counterpart => {
                    self.commit(j, new_plan);
                    if considered.contains(&j) {
                        epoch += 1;
                    }
                }
            }
        }
        None
    }

    /// Moves every agent one step along its trajectory. Fails if two agents
    /// would share a cell or swap cells.
    pub fn execute_step(&mut self) -> Result<(), SimError> {
        let t = self.now;
        let moves: Vec<(Cell, Cell)> = self
            .agents
            .iter()
            .map(|a| (a.trajectory.cell_at(t), a.trajectory.cell_at(t + 1)))
            .collect();
        if let Some(conflict) = step_conflict(&moves, t) {
            return Err(SimError::Collision { time: t, conflict });
        }
        self.now += 1;
        let now = self.now;
        for a in &mut self.agents {
            a.trajectory.advance_to(now);
        }
        Ok(())
    }

    /// Conflicts among the currently held trajectories.
    pub fn committed_conflicts(&self) -> Vec<Conflict> {
        let mut out = Vec::new();
        for (n, a) in self.agents.iter().enumerate() {
            out.extend(detect_conflicts(
                &a.trajectory,
                self.agents[n + 1..].iter().map(|b| &b.trajectory),
            ));
        }
        out
    }
}

/// First vertex or swap conflict among simultaneous one-step moves.
pub fn step_conflict(moves: &[(Cell, Cell)], t: Time) -> Option<Conflict> {
    for a in 0..moves.len() {
        for b in a + 1..moves.len() {
            let (fa, ta) = moves[a];
            let (fb, tb) = moves[b];
            let kind = if ta == tb {
                Some(ConflictKind::Vertex { cell: ta })
            } else if fa != ta && fa == tb && ta == fb {
                Some(ConflictKind::Edge { from: fa, to: ta })
            } else {
                None
            };
            if let Some(kind) = kind {
                return Some(Conflict {
                    agent_a: AgentId(a as u32),
                    agent_b: AgentId(b as u32),
                    time: if matches!(kind, ConflictKind::Vertex { .. }) { t + 1 } else { t },
                    kind,
                });
            }
        }
    }
    None
}

#[cfg(test)]
mod tests;
