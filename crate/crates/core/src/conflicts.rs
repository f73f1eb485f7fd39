//! Timed trajectories, their space-time occupancy and conflict detection.
//!
//! Occupancy semantics: before its `start_time` an agent sits on its first
//! cell, and after its last pose it stays on its final cell forever.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ContractError;
use crate::world::{Action, Cell, GridMap, Pose};

/// Discrete simulation time step.
pub type Time = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u32);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

/// Sequence of poses at `start_time, start_time + 1, ...`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Trajectory {
    pub agent: AgentId,
    pub start_time: Time,
    pub poses: Vec<Pose>,
}

impl Trajectory {
    pub fn new(agent: AgentId, start_time: Time, poses: Vec<Pose>) -> Self {
        assert!(!poses.is_empty(), "trajectory needs at least one pose");
        Self {
            agent,
            start_time,
            poses,
        }
    }

    /// A trajectory that never moves: the agent is parked at `pose`.
    pub fn parked(agent: AgentId, start_time: Time, pose: Pose) -> Self {
        Self::new(agent, start_time, vec![pose])
    }

    /// Number of time steps, i.e. `poses.len() - 1`.
    pub fn cost(&self) -> u32 {
        (self.poses.len() - 1) as u32
    }

    pub fn end_time(&self) -> Time {
        self.start_time + self.cost()
    }

    pub fn first(&self) -> Pose {
        self.poses[0]
    }

    pub fn last(&self) -> Pose {
        *self.poses.last().expect("non-empty")
    }

    pub fn pose_at(&self, t: Time) -> Pose {
        if t <= self.start_time {
            self.poses[0]
        } else {
            let i = (t - self.start_time) as usize;
            self.poses.get(i).copied().unwrap_or_else(|| self.last())
        }
    }

    pub fn cell_at(&self, t: Time) -> Cell {
        self.pose_at(t).cell
    }

    /// Checks that consecutive poses are one legal action apart on `map`.
    pub fn is_kinematically_valid(&self, map: &GridMap) -> bool {
        self.poses.iter().all(|p| map.is_traversable(p.cell))
            && self.poses.windows(2).all(|w| match Action::between(w[0], w[1]) {
                Some(Action::Forward) => map.is_traversable(w[1].cell),
                Some(_) => true,
                None => false,
            })
    }

    /// Drops poses before `t` so the trajectory starts at `t`.
    pub fn advance_to(&mut self, t: Time) {
        if t <= self.start_time {
            return;
        }
        let drop = ((t - self.start_time) as usize).min(self.poses.len() - 1);
        self.poses.drain(..drop);
        self.start_time = t;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ConflictKind {
    Vertex { cell: Cell },
    /// `agent_a` moves `from → to` while `agent_b` moves `to → from`
    /// between `time` and `time + 1`.
    Edge { from: Cell, to: Cell },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Conflict {
    pub agent_a: AgentId,
    pub agent_b: AgentId,
    pub time: Time,
    pub kind: ConflictKind,
}

/// Every vertex and swap conflict between `candidate` and each trajectory
/// in `others`, sorted by `(time, other agent)`. Trajectories belonging to
/// the candidate's own agent are skipped.
pub fn detect_conflicts<'a>(
    candidate: &Trajectory,
    others: impl IntoIterator<Item = &'a Trajectory>,
) -> Vec<Conflict> {
    let mut out = Vec::new();
    for other in others {
        if other.agent == candidate.agent {
            continue;
        }
        pairwise_conflicts(candidate, other, &mut out);
    }
    out.sort_by_key(|c| (c.time, c.agent_b, c.kind));
    out
}

fn pairwise_conflicts(a: &Trajectory, b: &Trajectory, out: &mut Vec<Conflict>) {
    let from = a.start_time.min(b.start_time);
    let to = a.end_time().max(b.end_time());
    for t in from..=to {
        let (ca, cb) = (a.cell_at(t), b.cell_at(t));
        if ca == cb {
            out.push(Conflict {
                agent_a: a.agent,
                agent_b: b.agent,
                time: t,
                kind: ConflictKind::Vertex { cell: ca },
            });
        }
        if t < to {
            let (na, nb) = (a.cell_at(t + 1), b.cell_at(t + 1));
            if ca != na && ca == nb && na == cb {
                out.push(Conflict {
                    agent_a: a.agent,
                    agent_b: b.agent,
                    time: t,
                    kind: ConflictKind::Edge { from: ca, to: na },
                });
            }
        }
    }
}

/// Space-time occupancy index over a set of registered trajectories.
///
/// Several agents may hold the same slot; the planner only asks whether a
/// slot is free, and conflicting trajectories can legitimately be avoided
/// at the same time.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReservationTable {
    vertex: HashMap<(Cell, Time), Vec<AgentId>>,
    edge: HashMap<(Cell, Cell, Time), Vec<AgentId>>,
    // cell -> (agent, occupied from this time on)
    terminal: HashMap<Cell, Vec<(AgentId, Time)>>,
    // cell -> (agent, occupied strictly before this time)
    initial: HashMap<Cell, Vec<(AgentId, Time)>>,
    // latest vertex time per cell
    last_vertex: HashMap<Cell, Time>,
    registered: BTreeMap<AgentId, Trajectory>,
}

fn push_slot<K: std::hash::Hash + Eq, V: PartialEq>(map: &mut HashMap<K, Vec<V>>, key: K, v: V) {
    map.entry(key).or_default().push(v);
}

fn pull_slot<K: std::hash::Hash + Eq, V: PartialEq>(map: &mut HashMap<K, Vec<V>>, key: K, v: &V) {
    if let Some(list) = map.get_mut(&key) {
        if let Some(pos) = list.iter().position(|x| x == v) {
            list.remove(pos);
        }
        if list.is_empty() {
            map.remove(&key);
        }
    }
}

impl ReservationTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_trajectories<'a>(trajs: impl IntoIterator<Item = &'a Trajectory>) -> Self {
        let mut table = Self::new();
        for traj in trajs {
            // Several trajectories of one agent never occur in a query.
            let _ = table.register(traj.clone());
        }
        table
    }

    pub fn is_registered(&self, agent: AgentId) -> bool {
        self.registered.contains_key(&agent)
    }

    pub fn register(&mut self, traj: Trajectory) -> Result<(), ContractError> {
        if self.registered.contains_key(&traj.agent) {
            return Err(ContractError::AlreadyRegistered(traj.agent));
        }
        let agent = traj.agent;
        for (i, pose) in traj.poses.iter().enumerate() {
            let t = traj.start_time + i as Time;
            push_slot(&mut self.vertex, (pose.cell, t), agent);
            let last = self.last_vertex.entry(pose.cell).or_insert(t);
            *last = (*last).max(t);
            if let Some(next) = traj.poses.get(i + 1) {
                if next.cell != pose.cell {
                    push_slot(&mut self.edge, (pose.cell, next.cell, t), agent);
                }
            }
        }
        push_slot(&mut self.terminal, traj.last().cell, (agent, traj.end_time()));
        if traj.start_time > 0 {
            push_slot(&mut self.initial, traj.first().cell, (agent, traj.start_time));
        }
        self.registered.insert(agent, traj);
        Ok(())
    }

    pub fn deregister(&mut self, agent: AgentId) -> Result<Trajectory, ContractError> {
        let traj = self
            .registered
            .remove(&agent)
            .ok_or(ContractError::UnknownAgent(agent))?;
        for (i, pose) in traj.poses.iter().enumerate() {
            let t = traj.start_time + i as Time;
            pull_slot(&mut self.vertex, (pose.cell, t), &agent);
            if let Some(next) = traj.poses.get(i + 1) {
                if next.cell != pose.cell {
                    pull_slot(&mut self.edge, (pose.cell, next.cell, t), &agent);
                }
            }
        }
        pull_slot(&mut self.terminal, traj.last().cell, &(agent, traj.end_time()));
        if traj.start_time > 0 {
            pull_slot(&mut self.initial, traj.first().cell, &(agent, traj.start_time));
        }
        self.rebuild_last_vertex();
        Ok(traj)
    }

    fn rebuild_last_vertex(&mut self) {
        self.last_vertex.clear();
        for &(cell, t) in self.vertex.keys() {
            let e = self.last_vertex.entry(cell).or_insert(t);
            *e = (*e).max(t);
        }
    }

    /// Whether nobody occupies `cell` at time `t`.
    pub fn is_free(&self, cell: Cell, t: Time) -> bool {
        if self.vertex.contains_key(&(cell, t)) {
            return false;
        }
        if let Some(list) = self.terminal.get(&cell) {
            if list.iter().any(|&(_, from)| t >= from) {
                return false;
            }
        }
        if let Some(list) = self.initial.get(&cell) {
            if list.iter().any(|&(_, until)| t < until) {
                return false;
            }
        }
        true
    }

    /// Whether moving `from → to` between `t` and `t + 1` swaps with anyone.
    pub fn is_edge_free(&self, from: Cell, to: Cell, t: Time) -> bool {
        !self.edge.contains_key(&(to, from, t))
    }

    /// Whether `cell` stays free for every time `>= t`.
    pub fn is_free_from(&self, cell: Cell, t: Time) -> bool {
        if self.terminal.contains_key(&cell) {
            return false;
        }
        if let Some(&last) = self.last_vertex.get(&cell) {
            if last >= t {
                return false;
            }
        }
        if let Some(list) = self.initial.get(&cell) {
            if list.iter().any(|&(_, until)| until > t) {
                return false;
            }
        }
        true
    }

    /// Time after which occupancy no longer changes.
    pub fn settle_time(&self) -> Time {
        let v = self.last_vertex.values().copied().max().unwrap_or(0);
        let i = self
            .initial
            .values()
            .flatten()
            .map(|&(_, until)| until)
            .max()
            .unwrap_or(0);
        v.max(i)
    }

    pub fn trajectories(&self) -> impl Iterator<Item = &Trajectory> {
        self.registered.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::Orientation;
    use proptest::prelude::*;

    const E: Orientation = Orientation::East;

    fn traj(agent: u32, start: Time, cells: &[(i32, i32)]) -> Trajectory {
        Trajectory::new(
            AgentId(agent),
            start,
            cells.iter().map(|&(x, y)| Pose::new(Cell::new(x, y), E)).collect(),
        )
    }

    #[test]
    fn shared_vertex_is_a_conflict() {
        let a = traj(0, 0, &[(0, 2), (1, 2), (2, 2), (2, 2), (2, 2), (2, 2), (3, 2)]);
        let b = traj(1, 5, &[(2, 2), (2, 3)]);
        let got = detect_conflicts(&a, [&b]);
        assert!(got.contains(&Conflict {
            agent_a: AgentId(0),
            agent_b: AgentId(1),
            time: 5,
            kind: ConflictKind::Vertex { cell: Cell::new(2, 2) },
        }));
    }

    #[test]
    fn swap_is_an_edge_conflict() {
        let a = traj(0, 3, &[(1, 0), (2, 0)]);
        let b = traj(1, 3, &[(2, 0), (1, 0)]);
        let got = detect_conflicts(&a, [&b]);
        assert_eq!(
            got,
            vec![Conflict {
                agent_a: AgentId(0),
                agent_b: AgentId(1),
                time: 3,
                kind: ConflictKind::Edge {
                    from: Cell::new(1, 0),
                    to: Cell::new(2, 0)
                },
            }]
        );
    }

    #[test]
    fn following_into_vacated_cell_is_legal() {
        let a = traj(0, 0, &[(0, 0), (1, 0), (2, 0)]);
        let b = traj(1, 0, &[(1, 0), (2, 0), (3, 0)]);
        assert!(detect_conflicts(&a, [&b]).is_empty());
    }

    #[test]
    fn disjoint_trajectories_do_not_conflict() {
        let a = traj(0, 0, &[(0, 0), (1, 0), (2, 0)]);
        let b = traj(1, 0, &[(0, 4), (1, 4), (2, 4)]);
        assert!(detect_conflicts(&a, [&b]).is_empty());
    }

    #[test]
    fn finished_agent_blocks_its_cell() {
        let parked = traj(1, 0, &[(4, 3), (5, 3)]);
        // waits twice, then reaches (5,3) at t=7
        let cells = [(0, 3), (0, 3), (0, 3), (1, 3), (2, 3), (3, 3), (4, 3), (5, 3)];
        let crossing = traj(0, 0, &cells);
        let got = detect_conflicts(&crossing, [&parked]);
        assert!(got
            .iter()
            .any(|c| c.time == 7 && c.kind == ConflictKind::Vertex { cell: Cell::new(5, 3) }));
    }

    #[test]
    fn own_trajectory_is_ignored() {
        let a = traj(0, 0, &[(0, 0), (1, 0)]);
        assert!(detect_conflicts(&a, [&a.clone()]).is_empty());
    }

    #[test]
    fn register_blocks_slots() {
        let mut table = ReservationTable::new();
        table.register(traj(0, 0, &[(0, 0), (1, 0)])).unwrap();
        assert!(!table.is_free(Cell::new(1, 0), 1));
        assert!(!table.is_free(Cell::new(1, 0), 50));
        assert!(table.is_free(Cell::new(1, 0), 0));
        assert!(!table.is_edge_free(Cell::new(1, 0), Cell::new(0, 0), 0));
        assert!(table.is_edge_free(Cell::new(0, 0), Cell::new(1, 0), 0));
    }

    #[test]
    fn register_deregister_restores_table() {
        let mut table = ReservationTable::new();
        table.register(traj(0, 0, &[(0, 0), (1, 0), (1, 1)])).unwrap();
        let before = table.clone();
        table.register(traj(1, 2, &[(1, 0), (2, 0)])).unwrap();
        assert_ne!(table, before);
        table.deregister(AgentId(1)).unwrap();
        assert_eq!(table, before);
    }

    #[test]
    fn registrations_commute() {
        let a = traj(0, 0, &[(0, 0), (1, 0)]);
        let b = traj(1, 0, &[(3, 3), (3, 4)]);
        let mut ab = ReservationTable::new();
        ab.register(a.clone()).unwrap();
        ab.register(b.clone()).unwrap();
        let mut ba = ReservationTable::new();
        ba.register(b).unwrap();
        ba.register(a).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn contract_violations() {
        let mut table = ReservationTable::new();
        table.register(traj(0, 0, &[(0, 0)])).unwrap();
        assert_eq!(
            table.register(traj(0, 0, &[(1, 1)])),
            Err(ContractError::AlreadyRegistered(AgentId(0)))
        );
        assert_eq!(table.deregister(AgentId(9)), Err(ContractError::UnknownAgent(AgentId(9))));
    }

    #[test]
    fn pre_start_occupancy() {
        let mut table = ReservationTable::new();
        table.register(traj(0, 4, &[(2, 2), (3, 2)])).unwrap();
        assert!(!table.is_free(Cell::new(2, 2), 1));
        assert!(!table.is_free_from(Cell::new(2, 2), 2));
        assert!(table.is_free_from(Cell::new(2, 2), 5));
    }

    #[test]
    fn advance_trims_history() {
        let mut t = traj(0, 2, &[(0, 0), (1, 0), (2, 0)]);
        t.advance_to(3);
        assert_eq!(t.start_time, 3);
        assert_eq!(t.first().cell, Cell::new(1, 0));
        t.advance_to(10);
        assert_eq!(t.poses.len(), 1);
        assert_eq!(t.first().cell, Cell::new(2, 0));
    }

    // Naive double loop over every time step.
    fn naive(a: &Trajectory, b: &Trajectory) -> Vec<(Time, ConflictKind)> {
        let end = a.end_time().max(b.end_time());
        let start = a.start_time.min(b.start_time);
        let mut out = Vec::new();
        for t in start..=end {
            if a.cell_at(t) == b.cell_at(t) {
                out.push((t, ConflictKind::Vertex { cell: a.cell_at(t) }));
            }
        }
        for t in start..end {
            let (a0, a1, b0, b1) = (a.cell_at(t), a.cell_at(t + 1), b.cell_at(t), b.cell_at(t + 1));
            if a0 != a1 && a0 == b1 && a1 == b0 {
                out.push((t, ConflictKind::Edge { from: a0, to: a1 }));
            }
        }
        out.sort();
        out
    }

    fn random_walk() -> impl Strategy<Value = (Time, Vec<(i32, i32)>)> {
        (0u32..3, 0i32..3, 0i32..3, prop::collection::vec(0usize..5, 0..8)).prop_map(
            |(start, x0, y0, moves)| {
                let mut cells = vec![(x0, y0)];
                let (mut x, mut y) = (x0, y0);
                for m in moves {
                    match m {
                        0 if x < 2 => x += 1,
                        1 if x > 0 => x -= 1,
                        2 if y < 2 => y += 1,
                        3 if y > 0 => y -= 1,
                        _ => {}
                    }
                    cells.push((x, y));
                }
                (start, cells)
            },
        )
    }

    proptest! {
        #[test]
        fn matches_naive_and_is_symmetric(
            walks in prop::collection::vec(random_walk(), 2..=4)
        ) {
            let trajs: Vec<_> = walks.iter().enumerate()
                .map(|(i, (s, cells))| traj(i as u32, *s, cells)).collect();
            for a in &trajs {
                prop_assert!(detect_conflicts(a, [a]).is_empty());
                for b in &trajs {
                    if a.agent == b.agent { continue; }
                    let mut got: Vec<_> = detect_conflicts(a, [b]).iter().map(|c| (c.time, c.kind)).collect();
                    got.sort();
                    prop_assert_eq!(&got, &naive(a, b));
                    // swapping roles mirrors edge direction
                    let mut back: Vec<_> = detect_conflicts(b, [a]).iter().map(|c| (c.time, match c.kind {
                        ConflictKind::Edge { from, to } => ConflictKind::Edge { from: to, to: from },
                        k => k,
                    })).collect();
                    back.sort();
                    prop_assert_eq!(got, back);
                }
            }
        }
    }
}
