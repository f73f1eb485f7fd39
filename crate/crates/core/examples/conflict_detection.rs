//! Vertex and swap conflicts between timed trajectories, including the
//! stay-at-target occupancy after a robot arrives.

use karma_mapf::{detect_conflicts, AgentId, Cell, Orientation, Pose, Trajectory};

fn row(agent: u32, xs: &[i32], heading: Orientation) -> Trajectory {
    let poses = xs.iter().map(|&x| Pose::new(Cell::new(x, 0), heading)).collect();
    Trajectory::new(AgentId(agent), 0, poses)
}

fn main() {
    let east = row(0, &[0, 1, 2, 3], Orientation::East);
    let west = row(1, &[3, 2, 1, 0], Orientation::West);
    for c in detect_conflicts(&east, [&west]) {
        println!("head-on: {c:?}");
    }

    let swap_a = row(0, &[1, 2], Orientation::East);
    let swap_b = row(1, &[2, 1], Orientation::West);
    for c in detect_conflicts(&swap_a, [&swap_b]) {
        println!("swap: {c:?}");
    }

    // a2 arrives at (2,0) at t=1 and stays; a3 drives through at t=4
    let parks = row(2, &[1, 2], Orientation::East);
    let later = row(3, &[5, 4, 3, 2, 1], Orientation::West);
    for c in detect_conflicts(&later, [&parks]) {
        println!("parked robot: {c:?}");
    }
}
