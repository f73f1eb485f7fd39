//! Sweep file driven run through the library API, the same thing the
//! `sweep` command does.

use karma_mapf::cli::{main_with, AGGREGATE_CSV};

const SPEC: &str = r#"
[base]
agents = 6
mechanism = "karma"
steps = 60

[base.grid]
interior_width = 8
interior_height = 8

[sweep]
tau = [0.0, 0.5, 2.0, 100.0]
seeds = [1, 2, 3]
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let spec = dir.path().join("sweep.toml");
    std::fs::write(&spec, SPEC)?;
    let out = dir.path().join("out");
    let args = ["karma-mapf", "sweep", spec.to_str().unwrap(), "--out", out.to_str().unwrap()];
    let code = main_with(args, &mut std::io::stdout(), &mut std::io::stderr());
    if code != 0 {
        std::process::exit(code);
    }
    for line in std::fs::read_to_string(out.join(AGGREGATE_CSV))?.lines() {
        if line.starts_with("aggregate") {
            let cols: Vec<&str> = line.split(',').collect();
            println!("tau={:<6} mean service time increase {}", cols[6], cols[16]);
        }
    }
    Ok(())
}
