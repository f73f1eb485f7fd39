//! Shared helpers for the integration tests: an exhaustive space-time
//! search used as a reference planner, random instance generators, and the
//! paired statistics used by the trend checks.

#![allow(dead_code)]

use std::collections::BTreeSet;

use karma_mapf::world::successors;
use karma_mapf::{AgentId, Cell, GridMap, Orientation, Pose, Time, Trajectory};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, StudentsT};

pub const HEADINGS: [Orientation; 4] = [
    Orientation::North,
    Orientation::East,
    Orientation::South,
    Orientation::West,
];

/// Cell held by `traj` at time `t`: the first pose before it starts, the
/// last one after it ends.
pub fn held_cell(traj: &Trajectory, t: Time) -> Cell {
    if t <= traj.start_time {
        return traj.poses[0].cell;
    }
    let i = (t - traj.start_time) as usize;
    traj.poses.get(i).unwrap_or(traj.poses.last().unwrap()).cell
}

fn occupied(others: &[Trajectory], cell: Cell, t: Time) -> bool {
    others.iter().any(|o| held_cell(o, t) == cell)
}

fn swapped(others: &[Trajectory], from: Cell, to: Cell, t: Time) -> bool {
    others
        .iter()
        .any(|o| held_cell(o, t) == to && held_cell(o, t + 1) == from)
}

/// Earliest arrival time (relative to `start_time`) at `goal` such that the
/// robot can stay there for good, found by expanding every reachable pose
/// one time layer at a time. Moves into occupied cells and swaps with other
/// robots are forbidden.
pub fn exhaustive_arrival(
    map: &GridMap,
    start: Pose,
    start_time: Time,
    goal: Cell,
    horizon: u32,
    others: &[Trajectory],
) -> Option<u32> {
    if !map.is_traversable(goal) || !map.is_traversable(start.cell) {
        return None;
    }
    let last_change = others
        .iter()
        .map(|o| o.start_time + o.poses.len() as Time)
        .max()
        .unwrap_or(0);
    let stays_free = |t: Time| (t..=last_change.max(t) + 1).all(|s| !occupied(others, goal, s));

    let mut layer: BTreeSet<Pose> = BTreeSet::from([start]);
    for g in 0..=horizon {
        let t = start_time + g;
        if layer.iter().any(|p| p.cell == goal) && stays_free(t) {
            return Some(g);
        }
        let mut next = BTreeSet::new();
        for &p in &layer {
            for (_, q) in successors(map, p) {
                if occupied(others, q.cell, t + 1) {
                    continue;
                }
                if q.cell != p.cell && swapped(others, p.cell, q.cell, t) {
                    continue;
                }
                next.insert(q);
            }
        }
        if next.is_empty() {
            return None;
        }
        layer = next;
    }
    None
}

/// Vertex or swap clash between two trajectories at any time from `from`.
pub fn clashes(a: &Trajectory, b: &Trajectory, from: Time) -> bool {
    let end = (a.start_time + a.poses.len() as Time).max(b.start_time + b.poses.len() as Time) + 1;
    (from..=end).any(|t| {
        held_cell(a, t) == held_cell(b, t)
            || (held_cell(a, t) == held_cell(b, t + 1)
                && held_cell(a, t + 1) == held_cell(b, t)
                && held_cell(a, t) != held_cell(a, t + 1))
    })
}

pub fn random_pose<R: Rng>(rng: &mut R, map: &GridMap) -> Pose {
    let cells: Vec<Cell> = map.cells().collect();
    Pose::new(*cells.choose(rng).unwrap(), *HEADINGS.choose(rng).unwrap())
}

/// A random legal walk: `len` actions starting at `start` from time
/// `start_time`.
pub fn random_walk<R: Rng>(rng: &mut R, map: &GridMap, agent: u32, start: Pose, start_time: Time, len: usize) -> Trajectory {
    let mut poses = vec![start];
    for _ in 0..len {
        let succ = successors(map, *poses.last().unwrap());
        poses.push(succ.choose(rng).unwrap().1);
    }
    Trajectory::new(AgentId(agent), start_time, poses)
}

/// Map with `blocked` random interior obstacles.
pub fn random_map<R: Rng>(rng: &mut R, w: u32, h: u32, border: u32, blocked: usize) -> GridMap {
    let map = GridMap::new(w, h, border);
    let cells: Vec<Cell> = map.interior_cells().collect();
    let picks: Vec<Cell> = cells.choose_multiple(rng, blocked).copied().collect();
    map.with_blocked(picks)
}

/// One-shot instance with distinct starts and distinct goals.
pub fn random_instance<R: Rng>(rng: &mut R, map: &GridMap, agents: usize) -> (Vec<Pose>, Vec<Cell>) {
    let cells: Vec<Cell> = map.cells().collect();
    let starts = cells
        .choose_multiple(rng, agents)
        .map(|&c| Pose::new(c, *HEADINGS.choose(rng).unwrap()))
        .collect();
    let goals = cells.choose_multiple(rng, agents).copied().collect();
    (starts, goals)
}

pub struct Query {
    pub map: GridMap,
    pub others: Vec<Trajectory>,
    pub start: Pose,
    pub start_time: u32,
    pub goal: Cell,
    pub horizon: u32,
}

/// Random single-robot query on a small bordered map with up to three
/// other robots wandering around.
pub fn random_query(seed: u64) -> Query {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rng.random_range(2..=5);
    let h = rng.random_range(1..=4);
    let blocked = rng.random_range(0..=(w * h / 3) as usize);
    let map = random_map(&mut rng, w, h, 1, blocked);
    let n_others = rng.random_range(0..=3);
    let others: Vec<Trajectory> = (0..n_others)
        .map(|k| {
            let p = random_pose(&mut rng, &map);
            let st = rng.random_range(0..=3);
            let len = rng.random_range(0..=12);
            random_walk(&mut rng, &map, k + 1, p, st, len)
        })
        .collect();
    let start_time = rng.random_range(0..=3);
    let start = loop {
        let p = random_pose(&mut rng, &map);
        if free_at(&others, p.cell, start_time) {
            break p;
        }
    };
    let goal = random_pose(&mut rng, &map).cell;
    Query {
        map,
        others,
        start,
        start_time,
        goal,
        horizon: rng.random_range(4..=30),
    }
}

fn free_at(others: &[Trajectory], cell: Cell, t: u32) -> bool {
    others.iter().all(|o| held_cell(o, t) != cell)
}

/// One-sided paired t-test of mean(a - b) > 0.
pub fn paired_t_greater(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return if mean > 0.0 { 0.0 } else { 1.0 };
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).unwrap();
    1.0 - dist.cdf(t)
}

/// One-sided sign test that `a < b` more often than not; ties dropped.
/// Returns (wins, non-tied pairs, p).
pub fn sign_test_less(a: &[f64], b: &[f64]) -> (u64, u64, f64) {
    let wins = a.iter().zip(b).filter(|(x, y)| x < y).count() as u64;
    let losses = a.iter().zip(b).filter(|(x, y)| x > y).count() as u64;
    let n = wins + losses;
    if n == 0 {
        return (0, 0, 1.0);
    }
    let p = if wins == 0 {
        1.0
    } else {
        Binomial::new(0.5, n).unwrap().sf(wins - 1)
    };
    (wins, n, p)
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
