//! Centralized solvers for one-shot instances: conflict-based search, a
//! joint-state brute force used to check it, and a one-shot replay of the
//! decentralized mechanisms on the same instance.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::conflicts::{detect_conflicts, AgentId, Conflict, ConflictKind, Time, Trajectory};
use crate::error::OracleError;
use crate::negotiation::{Fleet, MechanismKind, PlanResult};
use crate::planner::{plan_constrained, AstarCounter, SpaceTimeConstraints};
use crate::world::{successors, Cell, DistanceTable, GridMap, Pose};

/// Default cap on constraint-tree expansions.
pub const DEFAULT_MAX_EXPANSIONS: usize = 50_000;

/// Brute force refuses instances with more agents than this.
pub const BRUTE_FORCE_MAX_AGENTS: usize = 3;
/// Brute force refuses maps with more traversable cells than this.
pub const BRUTE_FORCE_MAX_CELLS: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ConstraintKind {
    Vertex { cell: Cell, time: Time },
    /// Forbids the move `from → to` between `time` and `time + 1`.
    Edge { from: Cell, to: Cell, time: Time },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CbsConstraint {
    pub agent: AgentId,
    pub kind: ConstraintKind,
}

/// A constraint-tree node.
#[derive(Debug, Clone)]
pub struct CtNode {
    pub constraints: Vec<CbsConstraint>,
    pub solution: Vec<Trajectory>,
    pub cost: u32,
    pub parent: Option<usize>,
}

/// Cost of one generated tree node and the node it was split from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CtRecord {
    pub parent: Option<usize>,
    pub cost: u32,
}

#[derive(Debug, Clone)]
pub struct CbsSolution {
    pub trajectories: Vec<Trajectory>,
    pub cost: u32,
    pub expansions: usize,
    /// Every node that entered the open list, in generation order.
    pub tree: Vec<CtRecord>,
    pub low_level_calls: u64,
}

/// One agent's constraints, as seen by the low-level planner.
#[derive(Debug, Default)]
struct AgentConstraints {
    vertex: HashSet<(Cell, Time)>,
    edge: HashSet<(Cell, Cell, Time)>,
    last_vertex: HashMap<Cell, Time>,
    settle: Time,
}

impl AgentConstraints {
    fn collect(agent: AgentId, constraints: &[CbsConstraint]) -> Self {
        let mut out = Self::default();
        for c in constraints.iter().filter(|c| c.agent == agent) {
            match c.kind {
                ConstraintKind::Vertex { cell, time } => {
                    out.vertex.insert((cell, time));
                    let last = out.last_vertex.entry(cell).or_insert(time);
                    *last = (*last).max(time);
                    out.settle = out.settle.max(time);
                }
                ConstraintKind::Edge { from, to, time } => {
                    out.edge.insert((from, to, time));
                    out.settle = out.settle.max(time + 1);
                }
            }
        }
        out
    }
}

impl SpaceTimeConstraints for AgentConstraints {
    fn is_free(&self, cell: Cell, t: Time) -> bool {
        !self.vertex.contains(&(cell, t))
    }

    fn is_edge_free(&self, from: Cell, to: Cell, t: Time) -> bool {
        !self.edge.contains(&(from, to, t))
    }

    fn is_free_from(&self, cell: Cell, t: Time) -> bool {
        self.last_vertex.get(&cell).is_none_or(|&last| last < t)
    }

    fn settle_time(&self) -> Time {
        self.settle
    }
}

fn check_instance(map: &GridMap, starts: &[Pose], goals: &[Cell]) -> Result<(), OracleError> {
    if starts.len() != goals.len() {
        return Err(OracleError::Invalid(format!(
            "{} starts but {} goals",
            starts.len(),
            goals.len()
        )));
    }
    for (n, s) in starts.iter().enumerate() {
        if !map.is_traversable(s.cell) {
            return Err(OracleError::Invalid(format!("start of agent {n} at {} is not traversable", s.cell)));
        }
        if starts[..n].iter().any(|o| o.cell == s.cell) {
            return Err(OracleError::Invalid(format!("two agents start on {}", s.cell)));
        }
    }
    if let Some((n, g)) = goals.iter().enumerate().find(|(_, g)| !map.is_traversable(**g)) {
        return Err(OracleError::Invalid(format!("goal of agent {n} at {g} is not traversable")));
    }
    Ok(())
}

fn earliest_conflict(solution: &[Trajectory]) -> Option<Conflict> {
    let mut best: Option<Conflict> = None;
    for (n, a) in solution.iter().enumerate() {
        if let Some(c) = detect_conflicts(a, &solution[n + 1..]).into_iter().next() {
            if best.is_none_or(|b| c.time < b.time) {
                best = Some(c);
            }
        }
    }
    best
}

fn split(conflict: &Conflict) -> [CbsConstraint; 2] {
    let t = conflict.time;
    match conflict.kind {
        ConflictKind::Vertex { cell } => [
            CbsConstraint {
                agent: conflict.agent_a,
                kind: ConstraintKind::Vertex { cell, time: t },
            },
            CbsConstraint {
                agent: conflict.agent_b,
                kind: ConstraintKind::Vertex { cell, time: t },
            },
        ],
        ConflictKind::Edge { from, to } => [
            CbsConstraint {
                agent: conflict.agent_a,
                kind: ConstraintKind::Edge { from, to, time: t },
            },
            CbsConstraint {
                agent: conflict.agent_b,
                kind: ConstraintKind::Edge { from: to, to: from, time: t },
            },
        ],
    }
}

/// Optimal sum-of-costs solution by conflict-based search.
pub fn cbs_solve(map: &GridMap, starts: &[Pose], goals: &[Cell], horizon: u32) -> Result<CbsSolution, OracleError> {
    cbs_solve_with_limit(map, starts, goals, horizon, DEFAULT_MAX_EXPANSIONS)
}

pub fn cbs_solve_with_limit(
    map: &GridMap,
    starts: &[Pose],
    goals: &[Cell],
    horizon: u32,
    max_expansions: usize,
) -> Result<CbsSolution, OracleError> {
    check_instance(map, starts, goals)?;
    let mut counter = AstarCounter::new();
    let low_level = |agent: usize, constraints: &[CbsConstraint], counter: &mut AstarCounter| {
        let id = AgentId(agent as u32);
        let table = AgentConstraints::collect(id, constraints);
        plan_constrained(map, id, starts[agent], 0, goals[agent], horizon, &table, counter)
    };

    let mut root = Vec::with_capacity(starts.len());
    for n in 0..starts.len() {
        match low_level(n, &[], &mut counter) {
            Some(t) => root.push(t),
            None => return Err(OracleError::NoSolution),
        }
    }
    let cost = root.iter().map(Trajectory::cost).sum();
    let mut nodes = vec![CtNode {
        constraints: Vec::new(),
        solution: root,
        cost,
        parent: None,
    }];
    let mut tree = vec![CtRecord { parent: None, cost }];
    // lowest cost, then fewest constraints, then first generated
    let mut open = BinaryHeap::new();
    open.push(Reverse((cost, 0usize, 0usize)));
    let mut expansions = 0;

    while let Some(Reverse((_, _, idx))) = open.pop() {
        let Some(conflict) = earliest_conflict(&nodes[idx].solution) else {
            let node = &nodes[idx];
            return Ok(CbsSolution {
                trajectories: node.solution.clone(),
                cost: node.cost,
                expansions,
                tree,
                low_level_calls: counter.count(),
            });
        };
        if expansions >= max_expansions {
            return Err(OracleError::ExpansionLimit(expansions));
        }
        expansions += 1;

        for constraint in split(&conflict) {
            let parent = &nodes[idx];
            if parent.constraints.contains(&constraint) {
                continue;
            }
            let mut constraints = parent.constraints.clone();
            constraints.push(constraint);
            let agent = constraint.agent.0 as usize;
            let Some(traj) = low_level(agent, &constraints, &mut counter) else {
                continue;
            };
            let mut solution = parent.solution.clone();
            solution[agent] = traj;
            let cost = solution.iter().map(Trajectory::cost).sum();
            let n_constraints = constraints.len();
            nodes.push(CtNode {
                constraints,
                solution,
                cost,
                parent: Some(idx),
            });
            tree.push(CtRecord { parent: Some(idx), cost });
            open.push(Reverse((cost, n_constraints, nodes.len() - 1)));
        }
    }
    Err(OracleError::NoSolution)
}

/// Exact optimum by uniform-cost search over the joint pose space.
///
/// An agent stops paying once it declares itself finished on its goal;
/// from then on it stays there. Only small instances are accepted.
pub fn joint_brute_force(map: &GridMap, starts: &[Pose], goals: &[Cell], horizon: u32) -> Result<u32, OracleError> {
    check_instance(map, starts, goals)?;
    if starts.len() > BRUTE_FORCE_MAX_AGENTS {
        return Err(OracleError::GuardViolation(format!(
            "{} agents (at most {BRUTE_FORCE_MAX_AGENTS})",
            starts.len()
        )));
    }
    if map.traversable_area() > BRUTE_FORCE_MAX_CELLS {
        return Err(OracleError::GuardViolation(format!(
            "{} traversable cells (at most {BRUTE_FORCE_MAX_CELLS})",
            map.traversable_area()
        )));
    }
    let n = starts.len();
    if n == 0 {
        return Ok(0);
    }
    let dist = DistanceTable::new(map);
    let all_done = (1u8 << n) - 1;

    #[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
    struct State {
        poses: [Option<Pose>; BRUTE_FORCE_MAX_AGENTS],
        done: u8,
        t: Time,
    }
    let h = |s: &State| -> Option<u32> {
        let mut sum = 0;
        for (i, &goal) in goals.iter().enumerate() {
            if s.done & (1 << i) == 0 {
                sum += dist.cost(s.poses[i]?, goal)?;
            }
        }
        Some(sum)
    };

    let mut start = State {
        poses: [None; BRUTE_FORCE_MAX_AGENTS],
        done: 0,
        t: 0,
    };
    for (i, p) in starts.iter().enumerate() {
        start.poses[i] = Some(*p);
    }
    let Some(h0) = h(&start) else {
        return Err(OracleError::NoSolution);
    };
    let mut best: HashMap<State, u32> = HashMap::new();
    let mut open = BinaryHeap::new();
    best.insert(start, 0);
    open.push(Reverse((h0, 0u32, start)));

    while let Some(Reverse((_, g, s))) = open.pop() {
        if best.get(&s).is_some_and(|&b| b < g) {
            continue;
        }
        if s.done == all_done {
            return Ok(g);
        }
        let mut push = |next: State, ng: u32, open: &mut BinaryHeap<_>| {
            if best.get(&next).is_some_and(|&b| b <= ng) {
                return;
            }
            if let Some(hn) = h(&next) {
                best.insert(next, ng);
                open.push(Reverse((ng + hn, ng, next)));
            }
        };

        for (i, &goal) in goals.iter().enumerate() {
            let bit = 1 << i;
            if s.done & bit == 0 && s.poses[i].map(|p| p.cell) == Some(goal) {
                push(State { done: s.done | bit, ..s }, g, &mut open);
            }
        }
        if s.t >= horizon {
            continue;
        }

        let options: Vec<Vec<Pose>> = (0..n)
            .map(|i| {
                let p = s.poses[i].expect("agent pose");
                if s.done & (1 << i) != 0 {
                    vec![p]
                } else {
                    successors(map, p).into_iter().map(|(_, q)| q).collect()
                }
            })
            .collect();
        let paying = (0..n).filter(|i| s.done & (1 << i) == 0).count() as u32;
        let mut pick = vec![0usize; n];
        'combos: loop {
            let next: Vec<Pose> = (0..n).map(|i| options[i][pick[i]]).collect();
            let legal = (0..n).all(|a| {
                (a + 1..n).all(|b| {
                    let (fa, ta) = (s.poses[a].unwrap().cell, next[a].cell);
                    let (fb, tb) = (s.poses[b].unwrap().cell, next[b].cell);
                    ta != tb && !(fa != ta && fa == tb && ta == fb)
                })
            });
            if legal {
                let mut ns = State { t: s.t + 1, ..s };
                for (i, p) in next.iter().enumerate() {
                    ns.poses[i] = Some(*p);
                }
                push(ns, g + paying, &mut open);
            }
            for i in 0..n {
                pick[i] += 1;
                if pick[i] < options[i].len() {
                    continue 'combos;
                }
                pick[i] = 0;
            }
            break;
        }
    }
    Err(OracleError::NoSolution)
}

/// Result of planning a one-shot instance with a decentralized mechanism.
#[derive(Debug, Clone)]
pub struct OneShotResult {
    pub trajectories: Vec<Trajectory>,
    pub cost: u32,
    pub astar_calls: u64,
}

/// Plans every agent once, in ascending id order, with `mechanism`.
/// `None` when some agent could not commit a plan in that single round.
pub fn decentralized_solve<R: Rng + ?Sized>(
    map: &GridMap,
    starts: &[Pose],
    goals: &[Cell],
    horizon: u32,
    mechanism: MechanismKind,
    rng: &mut R,
) -> Result<Option<OneShotResult>, OracleError> {
    check_instance(map, starts, goals)?;
    let mut fleet = Fleet::new(map.clone(), horizon, starts);
    let order: Vec<AgentId> = fleet.ids().collect();
    for (&id, &g) in order.iter().zip(goals) {
        fleet.set_goal(id, Some(g));
    }
    let report = fleet.plan_round(mechanism, &order, rng);
    if report.events.iter().any(|e| e.result == PlanResult::WaitFallback) {
        return Ok(None);
    }
    let trajectories: Vec<Trajectory> = fleet.trajectories().cloned().collect();
    let cost = trajectories.iter().map(Trajectory::cost).sum();
    Ok(Some(OneShotResult {
        trajectories,
        cost,
        astar_calls: fleet.astar_calls(),
    }))
}
