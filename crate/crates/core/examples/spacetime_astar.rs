//! Space-time A*: plan one robot, then plan a second one around it.

use karma_mapf::planner::default_horizon;
use karma_mapf::{detect_conflicts, plan, AgentId, AstarCounter, Cell, GridMap, Orientation, Pose, SearchQuery};

fn main() {
    let map = GridMap::warehouse(6, 1);
    let horizon = default_horizon(&map);
    let mut counter = AstarCounter::new();

    // a0 drives east along the middle row
    let a0 = plan(
        &map,
        &SearchQuery {
            agent: AgentId(0),
            start: Pose::new(Cell::new(1, 1), Orientation::East),
            start_time: 0,
            goal: Cell::new(6, 1),
            avoid: vec![],
            horizon,
        },
        &mut counter,
    )
    .expect("free corridor");
    println!("a0 cost {}: {:?}", a0.cost(), a0.poses.iter().map(|p| p.to_string()).collect::<Vec<_>>());

    // a1 wants to go west along the same row and has to use the ring road
    let a1 = plan(
        &map,
        &SearchQuery {
            agent: AgentId(1),
            start: Pose::new(Cell::new(6, 1), Orientation::West),
            start_time: 0,
            goal: Cell::new(1, 1),
            avoid: vec![&a0],
            horizon,
        },
        &mut counter,
    )
    .expect("ring road is free");
    println!("a1 cost {}: {:?}", a1.cost(), a1.poses.iter().map(|p| p.to_string()).collect::<Vec<_>>());

    assert!(detect_conflicts(&a1, [&a0]).is_empty());
    println!("conflict-free, {} A* calls", counter.count());
}
