//! Versioned run manifests: every invocation writes the fully resolved
//! configuration, and `rerun` replays one.

use serde::{Deserialize, Serialize};

use qpsel_core::{PriorConfig, RunConfig};

pub const MANIFEST_SCHEMA: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    #[serde(flatten)]
    pub command: CommandConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum CommandConfig {
    Fit(FitConfig),
    Simulate(SimulateConfig),
    Diagnose(DiagnoseConfig),
    OracleCheck(OracleCheckConfig),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvInputConfig {
    pub input: String,
    pub add_intercept: bool,
    pub standardize: bool,
    pub force_in: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    #[serde(flatten)]
    pub csv: CsvInputConfig,
    pub family: String,
    pub theta: Option<f64>,
    pub prior: PriorConfig,
    pub run: RunConfig,
    pub beta_draws: usize,
    pub mh_correction: bool,
    pub dump_cache: bool,
    pub dump_draws: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub scenarios: Vec<String>,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub methods: Vec<String>,
    pub jobs: Option<usize>,
    pub prior: PriorConfig,
    pub run: RunConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnoseConfig {
    #[serde(flatten)]
    pub csv: CsvInputConfig,
    pub methods: Vec<String>,
    pub folds: usize,
    pub prior: PriorConfig,
    pub run: RunConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleCheckConfig {
    #[serde(flatten)]
    pub csv: CsvInputConfig,
    pub family: String,
    pub theta: Option<f64>,
    pub w: f64,
    pub prior: PriorConfig,
    pub run: RunConfig,
}

impl Manifest {
    pub fn new(command: CommandConfig) -> Self {
        Self {
            schema: MANIFEST_SCHEMA,
            command,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}
