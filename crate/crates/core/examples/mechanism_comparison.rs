//! Runs every mechanism on the same seeds and prints the averages.
//!
//!     cargo run --release --example mechanism_comparison -- 10

use karma_mapf::sim::{mean_std, run, SimConfig};
use karma_mapf::MechanismKind;
use rayon::prelude::*;

fn main() {
    let seeds: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(10);
    let mechanisms = [
        MechanismKind::TokenPassing,
        MechanismKind::Egoistic,
        MechanismKind::Altruistic,
        MechanismKind::Karma { tau: 0.5 },
        MechanismKind::Karma { tau: 100.0 },
    ];
    println!("10x10, 8 robots, {seeds} seeds");
    println!("{:<18} {:>9} {:>9} {:>9} {:>9}", "mechanism", "delivered", "service", "sd", "increase");
    for m in mechanisms {
        let rows: Vec<_> = (0..seeds)
            .into_par_iter()
            .map(|seed| run(SimConfig::new(10, 10, 8, m, seed)).unwrap().summary)
            .collect();
        let avg = |f: &dyn Fn(&karma_mapf::sim::MetricsSummary) -> Option<f64>| {
            let v: Vec<f64> = rows.iter().filter_map(f).collect();
            mean_std(&v).0.unwrap_or(f64::NAN)
        };
        let name = match m {
            MechanismKind::Karma { tau } => format!("karma tau={tau}"),
            _ => m.name().to_string(),
        };
        println!(
            "{name:<18} {:>9.1} {:>9.2} {:>9.2} {:>9.2}",
            avg(&|s| Some(s.completed_tasks as f64)),
            avg(&|s| s.mean_service_time),
            avg(&|s| s.std_service_time),
            avg(&|s| s.mean_service_time_increase)
        );
    }
}
