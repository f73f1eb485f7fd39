//! Poses, the four actions, and the unconstrained cost of reaching a cell
//! when turning takes a step of its own.

use karma_mapf::{successors, unconstrained_cost, Action, Cell, GridMap, Orientation, Pose};

fn main() {
    // 5x5 interior with a one-cell ring road around it
    let map = GridMap::warehouse(5, 5);
    println!(
        "map {}x{} ({} traversable cells)",
        map.total_width(),
        map.total_height(),
        map.traversable_area()
    );

    let start = Pose::new(Cell::new(1, 1), Orientation::East);
    for (action, next) in successors(&map, start) {
        println!("{start} --{action:?}--> {next}");
    }

    // behind the robot: needs two quarter turns before it can drive
    let goal = Cell::new(0, 1);
    println!(
        "cost {start} -> {goal}: {}",
        unconstrained_cost(&map, start, goal).unwrap()
    );
    let goal = Cell::new(4, 4);
    println!(
        "cost {start} -> {goal}: {}",
        unconstrained_cost(&map, start, goal).unwrap()
    );

    let mut p = start;
    for a in [Action::Forward, Action::RotateCw, Action::Forward, Action::Forward] {
        p = p.apply(a);
    }
    println!("after F, CW, F, F: {p}");
}
