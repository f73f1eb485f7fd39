//! Two robots on a collision course, planned once with every mechanism.
//! Prints who replanned and the resulting Karma balances.

use karma_mapf::negotiation::PlanResult;
use karma_mapf::planner::default_horizon;
use karma_mapf::{AgentId, Cell, Fleet, GridMap, MechanismKind, Orientation, Pose};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let map = GridMap::warehouse(6, 1);
    let starts = [
        Pose::new(Cell::new(1, 1), Orientation::East),
        Pose::new(Cell::new(6, 1), Orientation::West),
    ];
    let goals = [Cell::new(5, 1), Cell::new(2, 1)];
    let order = [AgentId(0), AgentId(1)];

    for mechanism in [
        MechanismKind::TokenPassing,
        MechanismKind::Egoistic,
        MechanismKind::Altruistic,
        MechanismKind::Karma { tau: 0.5 },
    ] {
        let mut fleet = Fleet::new(map.clone(), default_horizon(&map), &starts);
        for (id, goal) in order.iter().zip(goals) {
            fleet.set_goal(*id, Some(goal));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let report = fleet.plan_round(mechanism, &order, &mut rng);

        println!("== {}", mechanism.name());
        for e in &report.events {
            let result = match e.result {
                PlanResult::Committed => "committed",
                PlanResult::WaitFallback => "waits",
            };
            println!("  {} {result} cost={:?} astar_calls={}", e.agent, e.cost, e.astar_calls);
        }
        for n in &report.negotiations {
            println!(
                "  negotiation: {} vs {} (d={} / {}), {} replans, karma {:?} -> {:?}",
                n.initiator, n.counterpart, n.delta_initiator, n.delta_counterpart, n.replanner, n.karma_before, n.karma_after
            );
        }
        let conflicts = fleet.committed_conflicts();
        println!("  conflicts left: {}", conflicts.len());
    }
}
