use super::*;
use crate::world::Orientation;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const E: Orientation = Orientation::East;
const W: Orientation = Orientation::West;
const S: Orientation = Orientation::South;

fn pose(x: i32, y: i32, h: Orientation) -> Pose {
    Pose::new(Cell::new(x, y), h)
}

fn path(agent: u32, cells: &[(i32, i32, Orientation)]) -> Trajectory {
    Trajectory::new(AgentId(agent), 0, cells.iter().map(|&(x, y, h)| pose(x, y, h)).collect())
}

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(11)
}

#[test]
fn conflict_free_first_plan_commits_without_negotiation() {
    let map = GridMap::warehouse(5, 5);
    let mut fleet = Fleet::new(map, 64, &[pose(1, 1, E), pose(1, 5, E)]);
    fleet.set_goal(AgentId(0), Some(Cell::new(5, 1)));
    fleet.set_goal(AgentId(1), Some(Cell::new(5, 5)));
    let report = fleet.plan_round(MechanismKind::Altruistic, &[AgentId(0), AgentId(1)], &mut rng());
    assert!(report.negotiations.is_empty());
    assert_eq!(report.events.len(), 2);
    assert!(report.events.iter().all(|e| e.result == PlanResult::Committed));
    assert_eq!(fleet.agent(AgentId(0)).trajectory.cost(), 4);
}

#[test]
fn head_on_conflict_single_negotiation() {
    let map = GridMap::new(7, 3, 0);
    let mut fleet = Fleet::new(map, 40, &[pose(0, 1, E), pose(6, 1, W)]);
    fleet.set_goal(AgentId(1), Some(Cell::new(1, 1)));
    let (ev, outs) = fleet.resolve_agent(AgentId(1), MechanismKind::Altruistic, &mut rng());
    assert_eq!(ev.result, PlanResult::Committed);
    assert!(outs.is_empty());
    fleet.set_goal(AgentId(0), Some(Cell::new(5, 1)));
    let (ev, outs) = fleet.resolve_agent(AgentId(0), MechanismKind::Altruistic, &mut rng());
    assert_eq!(ev.result, PlanResult::Committed);
    assert_eq!(outs.len(), 1);
    let o = &outs[0];
    assert!(o.committed);
    let loser = o.new_trajectory.as_ref().unwrap();
    let winner = if o.replanner == AgentId(0) { AgentId(1) } else { AgentId(0) };
    assert!(detect_conflicts(loser, [&fleet.agent(winner).trajectory]).is_empty());
    assert!(fleet.committed_conflicts().is_empty());
}

#[test]
fn three_agent_chain_takes_several_rounds() {
    // agent 0 drives along row 2; waiting for agent 1 makes it meet agent 2
    let map = GridMap::new(7, 5, 0);
    let mut fleet = Fleet::new(map, 60, &[pose(0, 2, E), pose(2, 0, S), pose(6, 0, W)]);
    fleet.set_goal(AgentId(1), Some(Cell::new(2, 4)));
    fleet.set_goal(AgentId(2), Some(Cell::new(4, 4)));
    let mut r = rng();
    fleet.plan_round(MechanismKind::Egoistic, &[AgentId(1), AgentId(2)], &mut r);
    assert!(fleet.committed_conflicts().is_empty());
    fleet.set_goal(AgentId(0), Some(Cell::new(6, 2)));
    let (ev, outs) = fleet.resolve_agent(AgentId(0), MechanismKind::Egoistic, &mut r);
    assert_eq!(ev.result, PlanResult::Committed);
    assert!(outs.len() >= 2, "got {} negotiations", outs.len());
    let counterparts: BTreeSet<_> = outs.iter().map(|o| o.counterpart).collect();
    assert_eq!(counterparts.len(), 2);
    assert!(fleet.committed_conflicts().is_empty());
}

#[test]
fn delta_zero_for_equal_cost_alternative() {
    let map = GridMap::new(4, 3, 0);
    let mut fleet = Fleet::new(map, 32, &[pose(0, 1, E), pose(1, 0, S)]);
    fleet.set_goal(AgentId(0), Some(Cell::new(3, 1)));
    fleet.set_goal(AgentId(1), Some(Cell::new(1, 2)));
    // agent 0 already holds a plan that idles one step
    fleet
        .commit_trajectory(AgentId(0), path(0, &[(0, 1, E), (0, 1, E), (1, 1, E), (2, 1, E), (3, 1, E)]))
        .unwrap();
    fleet
        .commit_trajectory(AgentId(1), path(1, &[(1, 0, S), (1, 1, S), (1, 2, S)]))
        .unwrap();
    let (d, plan) = fleet.delta_cost_against(AgentId(0), AgentId(1));
    assert_eq!(d, DeltaCost::Finite(0));
    assert!(detect_conflicts(&plan.unwrap(), [&fleet.agent(AgentId(1)).trajectory]).is_empty());
}

#[test]
fn delta_two_for_forced_wait() {
    let map = GridMap::new(4, 3, 0);
    let mut fleet = Fleet::new(map, 32, &[pose(0, 1, E), pose(1, 0, S)]);
    fleet.set_goal(AgentId(0), Some(Cell::new(3, 1)));
    fleet.set_goal(AgentId(1), Some(Cell::new(1, 2)));
    fleet
        .commit_trajectory(AgentId(0), path(0, &[(0, 1, E), (1, 1, E), (2, 1, E), (3, 1, E)]))
        .unwrap();
    fleet
        .commit_trajectory(AgentId(1), path(1, &[(1, 0, S), (1, 1, S), (1, 1, S), (1, 2, S)]))
        .unwrap();
    let (d, _) = fleet.delta_cost_against(AgentId(0), AgentId(1));
    assert_eq!(d, DeltaCost::Finite(2));
}

#[test]
fn delta_infeasible_in_blocked_corridor() {
    let map = GridMap::new(4, 1, 0);
    let mut fleet = Fleet::new(map, 32, &[pose(0, 0, E), pose(2, 0, W)]);
    fleet.set_goal(AgentId(0), Some(Cell::new(3, 0)));
    fleet.set_goal(AgentId(1), Some(Cell::new(2, 0)));
    fleet
        .commit_trajectory(AgentId(1), path(1, &[(2, 0, W)]))
        .unwrap();
    let (d, plan) = fleet.delta_cost_against(AgentId(0), AgentId(1));
    assert_eq!(d, DeltaCost::Infeasible);
    assert!(plan.is_none());
}

#[test]
fn token_passing_keeps_earlier_plans() {
    let map = GridMap::new(5, 3, 0);
    let mut fleet = Fleet::new(map, 40, &[pose(0, 1, E), pose(2, 0, S)]);
    fleet.set_goal(AgentId(0), Some(Cell::new(4, 1)));
    fleet.set_goal(AgentId(1), Some(Cell::new(2, 1)));
    let report = fleet.token_pass(&[AgentId(0), AgentId(1)]);
    assert_eq!(report.events.len(), 2);
    assert_eq!(fleet.astar_calls(), 2);
    let first = fleet.agent(AgentId(0)).trajectory.clone();
    assert_eq!(first.cost(), 4);
    // agent 1 may only park on (2,1) after agent 0 has passed it at t=2
    let second = &fleet.agent(AgentId(1)).trajectory;
    assert!(second.cost() > 2);
    assert!(fleet.committed_conflicts().is_empty());
}

#[test]
fn token_passing_disjoint_routes_are_unconstrained() {
    let map = GridMap::warehouse(6, 6);
    let starts = [pose(1, 1, E), pose(1, 6, E), pose(6, 3, W)];
    let goals = [Cell::new(6, 1), Cell::new(6, 6), Cell::new(3, 3)];
    let mut fleet = Fleet::new(map.clone(), 64, &starts);
    for (i, g) in goals.iter().enumerate() {
        fleet.set_goal(AgentId(i as u32), Some(*g));
    }
    let ids: Vec<_> = fleet.ids().collect();
    fleet.token_pass(&ids);
    assert_eq!(fleet.astar_calls(), 3);
    for (i, g) in goals.iter().enumerate() {
        let cost = fleet.agent(AgentId(i as u32)).trajectory.cost();
        assert_eq!(Some(cost), crate::world::unconstrained_cost(&map, starts[i], *g));
    }
}

#[test]
fn karma_transfer_matches_replanner_delta() {
    let map = GridMap::new(6, 3, 0);
    let mut fleet = Fleet::new(map, 40, &[pose(0, 1, E), pose(5, 1, W), pose(3, 0, S)]);
    fleet.set_goal(AgentId(1), Some(Cell::new(1, 1)));
    fleet.set_goal(AgentId(2), Some(Cell::new(3, 2)));
    let mut r = rng();
    let mech = MechanismKind::Karma { tau: 0.5 };
    fleet.plan_round(mech, &[AgentId(1), AgentId(2)], &mut r);
    fleet.set_goal(AgentId(0), Some(Cell::new(5, 1)));
    let (_, outs) = fleet.resolve_agent(AgentId(0), mech, &mut r);
    for o in &outs {
        assert_eq!(Some(o.karma_transfer), o.delta_replanner.finite());
        assert_eq!(o.karma_before.iter().sum::<i64>(), o.karma_after.iter().sum::<i64>());
    }
    let total: i64 = fleet.ids().map(|id| fleet.karma(id)).sum();
    assert_eq!(total, 0);
}

#[test]
fn reset_karma_zeroes_balance() {
    let mut fleet = Fleet::new(GridMap::warehouse(3, 3), 16, &[pose(1, 1, E)]);
    for k in [17, -5, 0] {
        fleet.agents[0].karma = k;
        fleet.reset_karma(AgentId(0));
        assert_eq!(fleet.karma(AgentId(0)), 0);
    }
}

#[test]
fn commit_trajectory_validates_input() {
    let mut fleet = Fleet::new(GridMap::warehouse(3, 3), 16, &[pose(1, 1, E)]);
    assert!(fleet.commit_trajectory(AgentId(3), path(3, &[(1, 1, E)])).is_err());
    assert!(fleet.commit_trajectory(AgentId(0), path(0, &[(2, 2, E)])).is_err());
    assert!(fleet
        .commit_trajectory(AgentId(0), path(0, &[(1, 1, E), (3, 1, E)]))
        .is_err());
}

#[test]
fn execute_step_moves_and_trims() {
    let map = GridMap::warehouse(4, 4);
    let mut fleet = Fleet::new(map, 32, &[pose(1, 1, E)]);
    fleet.set_goal(AgentId(0), Some(Cell::new(3, 1)));
    fleet.plan_round(MechanismKind::Altruistic, &[AgentId(0)], &mut rng());
    fleet.execute_step().unwrap();
    assert_eq!(fleet.now(), 1);
    assert_eq!(fleet.pose(AgentId(0)).cell, Cell::new(2, 1));
    assert!(!fleet.has_arrived(AgentId(0)));
    fleet.execute_step().unwrap();
    assert!(fleet.has_arrived(AgentId(0)));
}

#[test]
fn step_conflict_detects_swaps_and_collisions() {
    let a = Cell::new(0, 0);
    let b = Cell::new(1, 0);
    let c = Cell::new(2, 0);
    assert!(step_conflict(&[(a, b), (b, a)], 0).is_some());
    assert!(step_conflict(&[(a, b), (c, b)], 0).is_some());
    assert!(step_conflict(&[(a, b), (b, c)], 0).is_none());
}

fn random_scenario(seed: u64) -> (Fleet, MechanismKind) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let map = GridMap::warehouse(6, 6);
    let n = r.random_range(2..=6usize);
    let mut cells: Vec<Cell> = map.cells().collect();
    let mut poses = Vec::new();
    for _ in 0..n {
        let c = cells.swap_remove(r.random_range(0..cells.len()));
        poses.push(Pose::new(c, Orientation::ALL[r.random_range(0..4)]));
    }
    let mut fleet = Fleet::new(map.clone(), 64, &poses);
    let interior: Vec<Cell> = map.interior_cells().collect();
    for id in fleet.ids().collect::<Vec<_>>() {
        fleet.set_goal(id, Some(interior[r.random_range(0..interior.len())]));
    }
    let mech = match seed % 3 {
        0 => MechanismKind::Egoistic,
        1 => MechanismKind::Altruistic,
        _ => MechanismKind::Karma { tau: 0.5 },
    };
    (fleet, mech)
}

#[test]
fn resolution_keeps_committed_set_conflict_free() {
    for seed in 0..60 {
        let (mut fleet, mech) = random_scenario(seed);
        let mut r = ChaCha8Rng::seed_from_u64(seed + 1000);
        let ids: Vec<_> = fleet.ids().collect();
        for _step in 0..25 {
            fleet.plan_round(mech, &ids, &mut r);
            assert!(
                fleet.committed_conflicts().is_empty(),
                "seed {seed}: {:?}",
                fleet.committed_conflicts()
            );
            fleet.execute_step().unwrap();
            for &id in &ids {
                if fleet.has_arrived(id) {
                    fleet.set_goal(id, None);
                }
            }
        }
    }
}
