//! TOML inputs: single-episode scenarios, parameter sweeps and one-shot
//! oracle instances.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;
use crate::negotiation::MechanismKind;
use crate::planner::default_horizon;
use crate::sim::{default_max_queue, default_task_rate, SimConfig, TokenOrder};
use crate::world::{Cell, GridMap, Orientation, Pose};

pub const DEFAULT_STEPS: u32 = 100;
pub const DEFAULT_TAU: f64 = 0.5;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_SWEEP_SEEDS: u64 = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MechanismName {
    Token,
    Egoistic,
    Altruistic,
    Karma,
}

impl MechanismName {
    pub fn with_tau(self, tau: f64) -> Result<MechanismKind, ConfigError> {
        Ok(match self {
            MechanismName::Token => MechanismKind::TokenPassing,
            MechanismName::Egoistic => MechanismKind::Egoistic,
            MechanismName::Altruistic => MechanismKind::Altruistic,
            MechanismName::Karma => MechanismKind::karma(tau).map_err(|e| ConfigError::invalid("tau", e.to_string()))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub interior_width: u32,
    pub interior_height: u32,
}

/// One episode. Absent optional keys take their defaults when converted
/// with [`ScenarioFile::to_config`] and stay absent when re-serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub grid: GridSection,
    pub agents: usize,
    pub mechanism: MechanismName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_order: Option<TokenOrder>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_queue: Option<usize>,
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str, path: &Path) -> Result<T, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse {
        path: path.to_path_buf(),
        message: e.message().to_string(),
    })
}

impl ScenarioFile {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        parse(text, Path::new("<scenario>"))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        parse(&read(path)?, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or(DEFAULT_TAU)
    }

    pub fn to_config(&self) -> Result<SimConfig, ConfigError> {
        let GridSection {
            interior_width,
            interior_height,
        } = self.grid;
        if interior_width == 0 {
            return Err(ConfigError::invalid("grid.interior_width", "must be positive"));
        }
        if interior_height == 0 {
            return Err(ConfigError::invalid("grid.interior_height", "must be positive"));
        }
        let map = GridMap::warehouse(interior_width, interior_height);
        let config = SimConfig {
            interior_width,
            interior_height,
            border: 1,
            agents: self.agents,
            mechanism: self.mechanism.with_tau(self.tau())?,
            steps: self.steps.unwrap_or(DEFAULT_STEPS),
            task_rate: self.task_rate.unwrap_or_else(|| default_task_rate(self.agents)),
            seed: self.seed.unwrap_or(DEFAULT_SEED),
            horizon: self.horizon.unwrap_or_else(|| default_horizon(&map)),
            token_order: self.token_order.unwrap_or_default(),
            max_queue: self.max_queue.unwrap_or_else(|| default_max_queue(self.agents)),
        };
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SeedSpec {
    List(Vec<u64>),
    Range { from: u64, to: u64 },
}

impl SeedSpec {
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::List(v) => v.clone(),
            SeedSpec::Range { from, to } => (*from..=*to).collect(),
        }
    }
}

impl Default for SeedSpec {
    fn default() -> Self {
        SeedSpec::Range {
            from: 1,
            to: DEFAULT_SWEEP_SEEDS,
        }
    }
}

/// Lists of values for the swept keys; every combination runs once per
/// seed. Keys left out keep the base scenario's value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_size: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agents: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mechanism: Option<Vec<MechanismName>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task_rate: Option<Vec<f64>>,
    #[serde(default)]
    pub seeds: SeedSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub base: ScenarioFile,
    #[serde(default)]
    pub sweep: SweepAxes,
}

/// One swept parameter setting, before the seed is applied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Combination {
    pub index: usize,
    pub scenario: ScenarioFile,
}

impl SweepSpec {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        parse(text, Path::new("<sweep>"))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        parse(&read(path)?, path)
    }

    /// Cross product in the order grid size, agents, mechanism, tau,
    /// task rate (outermost first). Mechanisms other than karma only take
    /// the first tau value.
    pub fn combinations(&self) -> Vec<Combination> {
        let ax = &self.sweep;
        let b = &self.base;
        let grids: Vec<GridSection> = match &ax.grid_size {
            Some(v) => v
                .iter()
                .map(|&s| GridSection {
                    interior_width: s,
                    interior_height: s,
                })
                .collect(),
            None => vec![b.grid],
        };
        let agents = ax.agents.clone().unwrap_or_else(|| vec![b.agents]);
        let mechs = ax.mechanism.clone().unwrap_or_else(|| vec![b.mechanism]);
        let taus: Vec<Option<f64>> = match &ax.tau {
            Some(v) => v.iter().copied().map(Some).collect(),
            None => vec![b.tau],
        };
        let rates: Vec<Option<f64>> = match &ax.task_rate {
            Some(v) => v.iter().copied().map(Some).collect(),
            None => vec![b.task_rate],
        };
        let mut out = Vec::new();
        for &grid in &grids {
            for &n in &agents {
                for &mechanism in &mechs {
                    // tau only matters for karma
                    let taus = if mechanism == MechanismName::Karma { &taus[..] } else { &taus[..1] };
                    for &tau in taus {
                        for &task_rate in &rates {
                            out.push(Combination {
                                index: out.len(),
                                scenario: ScenarioFile {
                                    grid,
                                    agents: n,
                                    mechanism,
                                    tau,
                                    task_rate,
                                    ..b.clone()
                                },
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.sweep.seeds.seeds()
    }

    /// Number of episodes the sweep will run.
    pub fn size(&self) -> usize {
        self.combinations().len() * self.seeds().len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleAgent {
    pub start: [i32; 2],
    pub heading: Orientation,
    pub goal: [i32; 2],
}

/// A one-shot instance: a map, starts and goals.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleInstance {
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub border: u32,
    #[serde(default)]
    pub blocked: Vec<[i32; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<u32>,
    pub agents: Vec<OracleAgent>,
}

impl OracleInstance {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        parse(text, Path::new("<instance>"))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        parse(&read(path)?, path)
    }

    pub fn map(&self) -> GridMap {
        GridMap::new(self.width, self.height, self.border)
            .with_blocked(self.blocked.iter().map(|&[x, y]| Cell::new(x, y)))
    }

    pub fn starts(&self) -> Vec<Pose> {
        self.agents
            .iter()
            .map(|a| Pose::new(Cell::new(a.start[0], a.start[1]), a.heading))
            .collect()
    }

    pub fn goals(&self) -> Vec<Cell> {
        self.agents.iter().map(|a| Cell::new(a.goal[0], a.goal[1])).collect()
    }

    pub fn horizon(&self) -> u32 {
        self.horizon.unwrap_or_else(|| default_horizon(&self.map()))
    }
}
