//! Space-time A* over the kinematic pose graph.
//!
//! Every call to [`plan`] or [`plan_constrained`] counts as one A* call,
//! whether or not a path is found.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::conflicts::{AgentId, ReservationTable, Time, Trajectory};
use crate::world::{successors, Action, Cell, GridMap, Orientation, Pose};

/// Anything the planner has to route around.
pub trait SpaceTimeConstraints {
    /// `cell` may be occupied at time `t`.
    fn is_free(&self, cell: Cell, t: Time) -> bool;
    /// The move `from → to` between `t` and `t + 1` is allowed.
    fn is_edge_free(&self, from: Cell, to: Cell, t: Time) -> bool;
    /// `cell` may be occupied at every time `>= t`.
    fn is_free_from(&self, cell: Cell, t: Time) -> bool;
    /// After this time the constraints no longer change.
    fn settle_time(&self) -> Time;
}

impl SpaceTimeConstraints for ReservationTable {
    fn is_free(&self, cell: Cell, t: Time) -> bool {
        ReservationTable::is_free(self, cell, t)
    }

    fn is_edge_free(&self, from: Cell, to: Cell, t: Time) -> bool {
        ReservationTable::is_edge_free(self, from, to, t)
    }

    fn is_free_from(&self, cell: Cell, t: Time) -> bool {
        ReservationTable::is_free_from(self, cell, t)
    }

    fn settle_time(&self) -> Time {
        ReservationTable::settle_time(self)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AstarCounter {
    count: u64,
}

impl AstarCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    fn bump(&mut self) {
        self.count += 1;
    }
}

#[derive(Debug, Clone)]
pub struct SearchQuery<'a> {
    pub agent: AgentId,
    pub start: Pose,
    pub start_time: Time,
    pub goal: Cell,
    pub avoid: Vec<&'a Trajectory>,
    pub horizon: u32,
}

/// Default search depth: four times the bordered map's perimeter half.
pub fn default_horizon(map: &GridMap) -> u32 {
    4 * (map.total_width() + map.total_height())
}

/// Minimum-time trajectory to `query.goal` that avoids every trajectory in
/// `query.avoid`, including their stay-at-target occupancy, and can stay on
/// the goal cell afterwards. `None` when no such path arrives within the
/// horizon.
pub fn plan(map: &GridMap, query: &SearchQuery<'_>, counter: &mut AstarCounter) -> Option<Trajectory> {
    let table = ReservationTable::from_trajectories(query.avoid.iter().copied());
    plan_constrained(
        map,
        query.agent,
        query.start,
        query.start_time,
        query.goal,
        query.horizon,
        &table,
        counter,
    )
}

/// Lower bound on the remaining steps: Manhattan distance plus the turns
/// needed before facing a direction that makes progress.
pub fn heuristic(pose: Pose, goal: Cell) -> u32 {
    if pose.cell == goal {
        return 0;
    }
    let dx = goal.x - pose.cell.x;
    let dy = goal.y - pose.cell.y;
    let mut needed = Vec::with_capacity(2);
    if dx > 0 {
        needed.push(Orientation::East);
    } else if dx < 0 {
        needed.push(Orientation::West);
    }
    if dy > 0 {
        needed.push(Orientation::South);
    } else if dy < 0 {
        needed.push(Orientation::North);
    }
    let turns = needed
        .into_iter()
        .map(|d| pose.heading.quarter_turns_to(d))
        .min()
        .unwrap_or(0);
    pose.cell.manhattan(goal) + turns
}

struct Node {
    pose: Pose,
    g: u32,
    parent: Option<usize>,
}

#[derive(PartialEq, Eq)]
struct OpenEntry {
    f: u32,
    g: u32,
    action: Action,
    seq: u64,
    node: usize,
}

impl Ord for OpenEntry {
    // BinaryHeap pops the greatest: lowest f, then deepest g, then action
    // order, then first inserted.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .cmp(&self.f)
            .then(self.g.cmp(&other.g))
            .then(other.action.cmp(&self.action))
            .then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for OpenEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[allow(clippy::too_many_arguments)]
pub fn plan_constrained<C: SpaceTimeConstraints + ?Sized>(
    map: &GridMap,
    agent: AgentId,
    start: Pose,
    start_time: Time,
    goal: Cell,
    horizon: u32,
    constraints: &C,
    counter: &mut AstarCounter,
) -> Option<Trajectory> {
    counter.bump();
    if !map.is_traversable(goal) || !map.is_traversable(start.cell) {
        return None;
    }

    // Past the settle time nothing changes, so arriving at a pose earlier
    // dominates arriving later and all such times share one closed slot.
    let settle_rel = constraints.settle_time().saturating_sub(start_time);
    let time_slots = (settle_rel + 1).min(horizon) as usize + 1;
    let slot = |pose: Pose, g: u32| map.pose_index(pose) * time_slots + (g as usize).min(time_slots - 1);
    let mut best_g = vec![u32::MAX; map.pose_count() * time_slots];

    let mut nodes = vec![Node {
        pose: start,
        g: 0,
        parent: None,
    }];
    let mut open = BinaryHeap::new();
    let mut seq = 0u64;
    best_g[slot(start, 0)] = 0;
    open.push(OpenEntry {
        f: heuristic(start, goal),
        g: 0,
        action: Action::Wait,
        seq,
        node: 0,
    });

    while let Some(entry) = open.pop() {
        let Node { pose, g, .. } = nodes[entry.node];
        if g > best_g[slot(pose, g)] {
            continue;
        }
        let t = start_time + g;
        if pose.cell == goal && constraints.is_free_from(goal, t) {
            return Some(rebuild(&nodes, entry.node, agent, start_time));
        }
        if g >= horizon {
            continue;
        }
        for (action, next) in successors(map, pose) {
            if !constraints.is_free(next.cell, t + 1) {
                continue;
            }
            if next.cell != pose.cell && !constraints.is_edge_free(pose.cell, next.cell, t) {
                continue;
            }
            let ng = g + 1;
            let key = slot(next, ng);
            if ng >= best_g[key] {
                continue;
            }
            best_g[key] = ng;
            nodes.push(Node {
                pose: next,
                g: ng,
                parent: Some(entry.node),
            });
            seq += 1;
            open.push(OpenEntry {
                f: ng + heuristic(next, goal),
                g: ng,
                action,
                seq,
                node: nodes.len() - 1,
            });
        }
    }
    None
}

fn rebuild(nodes: &[Node], mut idx: usize, agent: AgentId, start_time: Time) -> Trajectory {
    let mut poses = vec![nodes[idx].pose];
    while let Some(parent) = nodes[idx].parent {
        poses.push(nodes[parent].pose);
        idx = parent;
    }
    poses.reverse();
    Trajectory::new(agent, start_time, poses)
}
