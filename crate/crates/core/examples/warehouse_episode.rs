//! One lifelong pickup-and-delivery episode with Karma negotiation, checked
//! for collisions and Karma bookkeeping afterwards.
//!
//!     cargo run --release --example warehouse_episode -- 42

use karma_mapf::sim::{run, SimConfig};
use karma_mapf::trace::{check_trace, replay};
use karma_mapf::MechanismKind;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(0);
    let config = SimConfig::new(10, 10, 8, MechanismKind::Karma { tau: 0.5 }, seed);
    let out = run(config)?;
    let s = &out.summary;
    println!("spawned {} tasks, delivered {}", s.spawned_tasks, s.completed_tasks);
    println!(
        "service time {:.2} (sd {:.2}), increase over baseline {:.2}",
        s.mean_service_time.unwrap_or(f64::NAN),
        s.std_service_time.unwrap_or(f64::NAN),
        s.mean_service_time_increase.unwrap_or(f64::NAN)
    );
    println!(
        "{} negotiations, {} plan events, {} A* calls",
        s.negotiations, s.plan_events, s.astar_calls
    );

    let report = check_trace(&out.trace)?;
    println!("trace: {} steps, {} violations", report.steps, report.violations.len());
    assert_eq!(&replay(&out.trace)?, s);
    Ok(())
}
