//! Optimal sum of costs on a small instance with CBS, checked against the
//! exhaustive joint search and compared with one decentralized round.

use karma_mapf::cbs::{cbs_solve, decentralized_solve, joint_brute_force};
use karma_mapf::{Cell, GridMap, MechanismKind, Orientation, Pose};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    // 4x2 with a single nook below (1,0): the robots must swap ends
    let map = GridMap::new(4, 2, 0).with_blocked([Cell::new(0, 1), Cell::new(2, 1), Cell::new(3, 1)]);
    let starts = [
        Pose::new(Cell::new(0, 0), Orientation::East),
        Pose::new(Cell::new(3, 0), Orientation::West),
    ];
    let goals = [Cell::new(3, 0), Cell::new(0, 0)];
    let horizon = 24;

    let sol = cbs_solve(&map, &starts, &goals, horizon).expect("solvable");
    println!("CBS cost {} after {} expansions", sol.cost, sol.expansions);
    for t in &sol.trajectories {
        let path: Vec<String> = t.poses.iter().map(|p| p.to_string()).collect();
        println!("  {}: {}", t.agent, path.join(" "));
    }
    let brute = joint_brute_force(&map, &starts, &goals, horizon).expect("small enough");
    println!("joint brute force: {brute}");

    for m in [MechanismKind::TokenPassing, MechanismKind::Karma { tau: 0.5 }] {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        match decentralized_solve(&map, &starts, &goals, horizon, m, &mut rng).unwrap() {
            Some(r) => println!("{}: cost {}", m.name(), r.cost),
            None => println!("{}: someone has to wait, no one-shot solution", m.name()),
        }
    }

    // something the decentralized planner can solve
    let open = GridMap::new(4, 4, 0);
    let starts = [
        Pose::new(Cell::new(0, 0), Orientation::East),
        Pose::new(Cell::new(3, 0), Orientation::South),
        Pose::new(Cell::new(0, 3), Orientation::North),
    ];
    let goals = [Cell::new(3, 3), Cell::new(0, 2), Cell::new(2, 0)];
    let sol = cbs_solve(&open, &starts, &goals, 16).unwrap();
    println!("open 4x4, three robots: CBS {}", sol.cost);
    for m in [MechanismKind::TokenPassing, MechanismKind::Egoistic, MechanismKind::Altruistic, MechanismKind::Karma { tau: 0.5 }] {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let cost = decentralized_solve(&open, &starts, &goals, 16, m, &mut rng)
            .unwrap()
            .map(|r| r.cost.to_string())
            .unwrap_or_else(|| "unsolved".into());
        println!("  {}: {cost}", m.name());
    }
}
