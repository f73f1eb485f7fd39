//! Command-line front end: `run`, `sweep`, `oracle` and `check-trace`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cbs::{cbs_solve, decentralized_solve, joint_brute_force};
use crate::error::{ConfigError, OracleError, SimError, TraceError};
use crate::negotiation::MechanismKind;
use crate::scenario::{GridSection, MechanismName, OracleInstance, ScenarioFile, SweepSpec};
use crate::sim::{mean_std, run, MetricsSummary, RunOutput, SimConfig, TaskRecord};
use crate::trace::{check_trace, read_jsonl, replay, write_records, SCHEMA_VERSION};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NO_SOLUTION: i32 = 3;
pub const EXIT_REFUSED: i32 = 4;
pub const EXIT_MISMATCH: i32 = 5;
pub const EXIT_LIMIT: i32 = 6;

pub const TASKS_CSV: &str = "tasks.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const TRACE_JSONL: &str = "trace.jsonl";
pub const AGGREGATE_CSV: &str = "aggregate.csv";

#[derive(Debug, Parser)]
#[command(name = "karma-mapf", version, about = "Decentralized MAPF with Karma negotiation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one pickup-and-delivery episode.
    Run(RunArgs),
    /// Run every combination of a sweep file, once per seed.
    Sweep(SweepArgs),
    /// Solve a one-shot instance optimally with CBS.
    Oracle(OracleArgs),
    /// Check a trace.jsonl for collisions and Karma bookkeeping errors.
    CheckTrace(CheckTraceArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario TOML file; flags below override its values.
    pub scenario: Option<PathBuf>,
    /// Interior grid size as WxH, e.g. 10x10.
    #[arg(long, value_parser = parse_grid)]
    pub grid: Option<GridSection>,
    #[arg(long)]
    pub agents: Option<usize>,
    #[arg(long, value_parser = parse_mechanism)]
    pub mechanism: Option<MechanismName>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub steps: Option<u32>,
    #[arg(long)]
    pub task_rate: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub horizon: Option<u32>,
    /// Output directory (default: the scenario's output_dir, else "out").
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    pub spec: PathBuf,
    #[arg(long, default_value = "sweep-out")]
    pub out: PathBuf,
    /// Also keep tasks.csv, summary.json and trace.jsonl for every row.
    #[arg(long)]
    pub row_files: bool,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    pub instance: PathBuf,
    /// Cross-check the optimum against exhaustive joint search.
    #[arg(long)]
    pub brute_force: bool,
    /// Also plan the instance once with each decentralized mechanism.
    #[arg(long)]
    pub mechanisms: bool,
    /// Seed for negotiation tie-breaks with --mechanisms.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct CheckTraceArgs {
    pub trace: PathBuf,
    /// summary.json to compare the replayed metrics against.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

fn parse_grid(s: &str) -> Result<GridSection, String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WxH, e.g. 10x10")?;
    Ok(GridSection {
        interior_width: w.trim().parse().map_err(|e| format!("width: {e}"))?,
        interior_height: h.trim().parse().map_err(|e| format!("height: {e}"))?,
    })
}

fn parse_mechanism(s: &str) -> Result<MechanismName, String> {
    match s {
        "token" => Ok(MechanismName::Token),
        "egoistic" => Ok(MechanismName::Egoistic),
        "altruistic" => Ok(MechanismName::Altruistic),
        "karma" => Ok(MechanismName::Karma),
        other => Err(format!("unknown mechanism `{other}` (token|egoistic|altruistic|karma)")),
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Failed(String),
    #[error("{0}")]
    Mismatch(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Oracle(OracleError::NoSolution) => EXIT_NO_SOLUTION,
            CliError::Oracle(OracleError::GuardViolation(_)) => EXIT_REFUSED,
            CliError::Oracle(OracleError::ExpansionLimit(_)) => EXIT_LIMIT,
            CliError::Oracle(OracleError::Invalid(_)) => EXIT_CONFIG,
            CliError::Mismatch(_) => EXIT_MISMATCH,
            _ => EXIT_FAILURE,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub schema_version: u32,
    pub config: SimConfig,
    #[serde(flatten)]
    pub metrics: MetricsSummary,
}

/// Parses `args` (program name first) and runs the command. Normal output
/// goes to `out`, errors to `err`; returns the process exit code.
pub fn main_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = if e.use_stderr() {
                write!(err, "{e}")
            } else {
                write!(out, "{e}")
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a, out).map(|_| EXIT_OK),
        Command::Sweep(a) => cmd_sweep(&a, out),
        Command::Oracle(a) => cmd_oracle(&a, out),
        Command::CheckTrace(a) => cmd_check_trace(&a, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

fn scenario_from_args(a: &RunArgs) -> Result<ScenarioFile, CliError> {
    let mut s = match &a.scenario {
        Some(path) => ScenarioFile::load(path)?,
        None => {
            let missing = |key: &str| ConfigError::invalid(key, "required when no scenario file is given");
            ScenarioFile {
                grid: a.grid.ok_or_else(|| missing("grid"))?,
                agents: a.agents.ok_or_else(|| missing("agents"))?,
                mechanism: a.mechanism.ok_or_else(|| missing("mechanism"))?,
                tau: None,
                steps: None,
                task_rate: None,
                seed: None,
                horizon: None,
                output_dir: None,
                token_order: None,
                max_queue: None,
            }
        }
    };
    if let Some(g) = a.grid {
        s.grid = g;
    }
    if let Some(n) = a.agents {
        s.agents = n;
    }
    if let Some(m) = a.mechanism {
        s.mechanism = m;
    }
    s.tau = a.tau.or(s.tau);
    s.steps = a.steps.or(s.steps);
    s.task_rate = a.task_rate.or(s.task_rate);
    s.seed = a.seed.or(s.seed);
    s.horizon = a.horizon.or(s.horizon);
    Ok(s)
}

pub fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> Result<MetricsSummary, CliError> {
    let scenario = scenario_from_args(a)?;
    let config = scenario.to_config()?;
    let dir = a
        .out
        .clone()
        .or_else(|| scenario.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let output = run(config.clone())?;
    fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write_run_files(&dir, &config, &output)?;
    let _ = writeln!(out, "{}", summary_line(&config, &output.summary));
    Ok(output.summary)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |v| format!("{v:.3}"))
}

pub fn summary_line(config: &SimConfig, s: &MetricsSummary) -> String {
    format!(
        "{}x{} agents={} mechanism={} seed={} completed={} mean_task_time={} mean_service_time={} std_service_time={} mean_service_time_increase={} astar_calls={}",
        config.interior_width,
        config.interior_height,
        config.agents,
        mechanism_label(config.mechanism),
        config.seed,
        s.completed_tasks,
        fmt_opt(s.mean_task_time),
        fmt_opt(s.mean_service_time),
        fmt_opt(s.std_service_time),
        fmt_opt(s.mean_service_time_increase),
        s.astar_calls
    )
}

fn mechanism_label(m: MechanismKind) -> String {
    match m {
        MechanismKind::Karma { tau } => format!("karma(tau={tau})"),
        other => other.name().to_string(),
    }
}

const TASK_COLUMNS: [&str; 9] = [
    "task_id",
    "spawn_t",
    "assign_t",
    "pickup_t",
    "deliver_t",
    "agent_id",
    "task_time",
    "service_time",
    "service_time_increase",
];

pub fn write_tasks_csv<W: Write>(w: W, tasks: &[TaskRecord]) -> csv::Result<()> {
    let mut wr = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    wr.write_record(TASK_COLUMNS)?;
    for t in tasks {
        wr.serialize(t)?;
    }
    wr.flush()?;
    Ok(())
}

/// Writes `tasks.csv`, `summary.json` and `trace.jsonl` into `dir`.
pub fn write_run_files(dir: &Path, config: &SimConfig, output: &RunOutput) -> Result<(), CliError> {
    let path = dir.join(TASKS_CSV);
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    write_tasks_csv(std::io::BufWriter::new(file), &output.summary.tasks)
        .map_err(|e| CliError::Failed(format!("writing {}: {e}", path.display())))?;

    let path = dir.join(SUMMARY_JSON);
    let summary = SummaryFile {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        metrics: output.summary.clone(),
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    fs::write(&path, text).map_err(io_err(&path))?;

    let path = dir.join(TRACE_JSONL);
    let file = fs::File::create(&path).map_err(io_err(&path))?;
    let mut w = std::io::BufWriter::new(file);
    write_records(&mut w, &output.trace).map_err(io_err(&path))?;
    w.flush().map_err(io_err(&path))
}

pub fn read_summary(path: &Path) -> Result<SummaryFile, CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| CliError::Failed(format!("{}: {e}", path.display())))
}

/// Metrics reported per row of `aggregate.csv`.
pub const METRICS: [&str; 9] = [
    "completed_tasks",
    "mean_task_time",
    "std_task_time",
    "mean_service_time",
    "std_service_time",
    "mean_service_time_increase",
    "std_service_time_increase",
    "astar_calls",
    "negotiations",
];

fn metric_values(s: &MetricsSummary) -> [Option<f64>; 9] {
    [
        Some(s.completed_tasks as f64),
        s.mean_task_time,
        s.std_task_time,
        s.mean_service_time,
        s.std_service_time,
        s.mean_service_time_increase,
        s.std_service_time_increase,
        Some(s.astar_calls as f64),
        Some(s.negotiations as f64),
    ]
}

struct RowResult {
    combo: usize,
    seed: u64,
    config: Option<SimConfig>,
    result: Result<MetricsSummary, String>,
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Header of `aggregate.csv`. Data rows leave the `seed_std_*` columns
/// empty; aggregate rows hold the across-seed mean in the metric columns
/// and the across-seed population standard deviation in `seed_std_*`.
pub fn aggregate_header() -> Vec<String> {
    let mut h: Vec<String> = [
        "row_type",
        "combo",
        "interior_width",
        "interior_height",
        "agents",
        "mechanism",
        "tau",
        "task_rate",
        "seed",
        "status",
        "runs",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend(METRICS.iter().map(|m| m.to_string()));
    h.extend(METRICS.iter().map(|m| format!("seed_std_{m}")));
    h.push("error".into());
    h
}

fn combo_columns(s: &ScenarioFile, config: Option<&SimConfig>) -> Vec<String> {
    let tau = match s.mechanism {
        MechanismName::Karma => s.tau().to_string(),
        _ => String::new(),
    };
    vec![
        s.grid.interior_width.to_string(),
        s.grid.interior_height.to_string(),
        s.agents.to_string(),
        match s.mechanism {
            MechanismName::Token => "token",
            MechanismName::Egoistic => "egoistic",
            MechanismName::Altruistic => "altruistic",
            MechanismName::Karma => "karma",
        }
        .to_string(),
        tau,
        config.map(|c| c.task_rate.to_string()).unwrap_or_default(),
    ]
}

pub fn cmd_sweep(a: &SweepArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let spec = SweepSpec::load(&a.spec)?;
    let combos = spec.combinations();
    let seeds = spec.seeds();
    let _ = writeln!(
        out,
        "sweep: {} combinations x {} seeds = {} runs",
        combos.len(),
        seeds.len(),
        combos.len() * seeds.len()
    );
    fs::create_dir_all(&a.out).map_err(io_err(&a.out))?;

    let jobs: Vec<(usize, u64)> = combos
        .iter()
        .flat_map(|c| seeds.iter().map(move |&s| (c.index, s)))
        .collect();
    let rows: Vec<RowResult> = jobs
        .par_iter()
        .map(|&(combo, seed)| {
            let scenario = ScenarioFile {
                seed: Some(seed),
                ..combos[combo].scenario.clone()
            };
            let config = scenario.to_config();
            let result = match &config {
                Ok(cfg) => match run(cfg.clone()) {
                    Ok(output) => {
                        let saved = if a.row_files {
                            save_row(&a.out, combo, seed, cfg, &output)
                        } else {
                            Ok(())
                        };
                        saved.map(|_| output.summary).map_err(|e| e.to_string())
                    }
                    Err(e) => Err(e.to_string()),
                },
                Err(e) => Err(e.to_string()),
            };
            RowResult {
                combo,
                seed,
                config: config.ok(),
                result,
            }
        })
        .collect();

    let failed = rows.iter().filter(|r| r.result.is_err()).count();
    let path = a.out.join(AGGREGATE_CSV);
    let mut tmp = tempfile::NamedTempFile::new_in(&a.out).map_err(io_err(&a.out))?;
    write_aggregate(tmp.as_file_mut(), &combos, &rows)
        .map_err(|e| CliError::Failed(format!("writing {}: {e}", path.display())))?;
    tmp.persist(&path).map_err(|e| CliError::Io {
        path: path.clone(),
        source: e.error,
    })?;
    let _ = writeln!(out, "wrote {} ({} failed rows)", path.display(), failed);
    Ok(if failed > 0 { EXIT_FAILURE } else { EXIT_OK })
}

fn save_row(root: &Path, combo: usize, seed: u64, config: &SimConfig, output: &RunOutput) -> Result<(), CliError> {
    let runs = root.join("runs");
    fs::create_dir_all(&runs).map_err(io_err(&runs))?;
    let target = runs.join(format!("c{combo:03}_s{seed}"));
    let tmp = tempfile::Builder::new()
        .prefix(".row")
        .tempdir_in(&runs)
        .map_err(io_err(&runs))?;
    write_run_files(tmp.path(), config, output)?;
    if target.exists() {
        fs::remove_dir_all(&target).map_err(io_err(&target))?;
    }
    let tmp = tmp.keep();
    fs::rename(&tmp, &target).map_err(io_err(&target))
}

fn write_aggregate<W: Write>(w: W, combos: &[crate::scenario::Combination], rows: &[RowResult]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(aggregate_header())?;
    let blank = vec![String::new(); METRICS.len()];
    for c in combos {
        let mine: Vec<&RowResult> = rows.iter().filter(|r| r.combo == c.index).collect();
        let config = mine.iter().find_map(|r| r.config.as_ref());
        for r in &mine {
            let mut rec = vec!["data".to_string(), c.index.to_string()];
            rec.extend(combo_columns(&c.scenario, r.config.as_ref()));
            rec.push(r.seed.to_string());
            match &r.result {
                Ok(s) => {
                    rec.push("ok".into());
                    rec.push("1".into());
                    rec.extend(metric_values(s).into_iter().map(opt_cell));
                    rec.extend(blank.iter().cloned());
                    rec.push(String::new());
                }
                Err(e) => {
                    rec.push("failed".into());
                    rec.push("0".into());
                    rec.extend(blank.iter().cloned());
                    rec.extend(blank.iter().cloned());
                    rec.push(e.clone());
                }
            }
            wr.write_record(&rec)?;
        }
        let ok: Vec<[Option<f64>; 9]> = mine
            .iter()
            .filter_map(|r| r.result.as_ref().ok().map(metric_values))
            .collect();
        let mut rec = vec!["aggregate".to_string(), c.index.to_string()];
        rec.extend(combo_columns(&c.scenario, config));
        rec.push(String::new());
        rec.push(if ok.len() == mine.len() { "ok" } else { "partial" }.into());
        rec.push(ok.len().to_string());
        let stats: Vec<(Option<f64>, Option<f64>)> = (0..METRICS.len())
            .map(|m| {
                let vals: Vec<f64> = ok.iter().filter_map(|v| v[m]).collect();
                mean_std(&vals)
            })
            .collect();
        rec.extend(stats.iter().map(|s| opt_cell(s.0)));
        rec.extend(stats.iter().map(|s| opt_cell(s.1)));
        rec.push(String::new());
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

fn format_path(traj: &crate::conflicts::Trajectory) -> String {
    traj.poses
        .iter()
        .map(|p| format!("{}{}", p.cell, p.heading.symbol()))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn cmd_oracle(a: &OracleArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let inst = OracleInstance::load(&a.instance)?;
    let (map, starts, goals, horizon) = (inst.map(), inst.starts(), inst.goals(), inst.horizon());
    let brute = if a.brute_force {
        match joint_brute_force(&map, &starts, &goals, horizon) {
            Err(e @ OracleError::GuardViolation(_)) => return Err(e.into()),
            other => Some(other),
        }
    } else {
        None
    };
    let sol = cbs_solve(&map, &starts, &goals, horizon)?;
    let _ = writeln!(out, "cost={}", sol.cost);
    let _ = writeln!(out, "expansions={}", sol.expansions);
    for t in &sol.trajectories {
        let _ = writeln!(out, "{} cost={}: {}", t.agent, t.cost(), format_path(t));
    }
    if let Some(bf) = brute {
        match bf {
            Ok(c) if c == sol.cost => {
                let _ = writeln!(out, "brute_force={c} (match)");
            }
            Ok(c) => return Err(CliError::Mismatch(format!("brute force optimum {c} != cbs {}", sol.cost))),
            Err(e) => return Err(CliError::Mismatch(format!("brute force: {e}, cbs found cost {}", sol.cost))),
        }
    }
    if a.mechanisms {
        for m in [
            MechanismKind::TokenPassing,
            MechanismKind::Egoistic,
            MechanismKind::Altruistic,
            MechanismKind::Karma { tau: 0.5 },
        ] {
            let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
            match decentralized_solve(&map, &starts, &goals, horizon, m, &mut rng)? {
                Some(r) => {
                    let _ = writeln!(out, "{}={}", m.name(), r.cost);
                }
                None => {
                    let _ = writeln!(out, "{}=unsolved", m.name());
                }
            }
        }
    }
    Ok(EXIT_OK)
}

pub fn cmd_check_trace(a: &CheckTraceArgs, out: &mut dyn Write) -> Result<i32, CliError> {
    let records = read_jsonl(&a.trace)?;
    let report = check_trace(&records)?;
    let _ = writeln!(
        out,
        "steps={} negotiations={} pickups={} violations={}",
        report.steps,
        report.negotiations,
        report.pickups,
        report.violations.len()
    );
    for v in &report.violations {
        let _ = writeln!(out, "{}", serde_json::to_string(v).expect("violation serializes"));
    }
    let mut code = if report.is_clean() { EXIT_OK } else { EXIT_FAILURE };
    if let Some(path) = &a.summary {
        let summary = read_summary(path)?;
        let replayed = replay(&records)?;
        if replayed == summary.metrics {
            let _ = writeln!(out, "replay matches {}", path.display());
        } else {
            let _ = writeln!(out, "replay differs from {}", path.display());
            code = EXIT_MISMATCH;
        }
    }
    Ok(code)
}
