//! Task assignment as a linear sum assignment problem.

use karma_mapf::assignment::{assignment_cost, hungarian};

fn main() {
    // rows are robots, columns are tasks, entries are travel costs
    let costs = vec![
        vec![4.0, 1.0, 3.0],
        vec![2.0, 0.0, 5.0],
        vec![3.0, 2.0, 2.0],
    ];
    let pairs = hungarian(&costs);
    for &(r, c) in &pairs {
        println!("robot {r} -> task {c} ({})", costs[r][c]);
    }
    println!("total {}", assignment_cost(&costs, &pairs));

    // more robots than tasks: one robot stays idle
    let wide = vec![vec![7.0, 2.0], vec![1.0, 9.0], vec![3.0, 3.0]];
    let pairs = hungarian(&wide);
    println!("3 robots, 2 tasks: {pairs:?}, total {}", assignment_cost(&wide, &pairs));
}
