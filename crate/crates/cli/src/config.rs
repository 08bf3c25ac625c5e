//! The JSON run configuration shared by all subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use qmgeo::flsim::FlConfig;
use qmgeo::privacy::DEFAULT_ORACLE_GRID;
use qmgeo::QuantizerConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Default output directory when neither `--out` nor `output_dir` is given.
pub const DEFAULT_OUTPUT_DIR: &str = "out";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantizer: Option<QuantizerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pmf: Option<PmfBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantize: Option<QuantizeBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub privacy: Option<PrivacyBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fl: Option<FlConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bound: Option<BoundBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MechanismKind {
    #[default]
    Qmgeo,
    KLevel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmfBlock {
    /// Input values; one table section per value.
    pub w: Vec<f64>,
    #[serde(default)]
    pub mechanism: MechanismKind,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizeBlock {
    pub values: Vec<f64>,
    /// Clip to `[-w_max, w_max]` first; otherwise out-of-range input is an error.
    #[serde(default = "yes")]
    pub clip: bool,
}

fn default_alpha() -> f64 {
    2.0
}

fn default_grid() -> usize {
    DEFAULT_ORACLE_GRID
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrivacyBlock {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// When set, the vector RDP value is also converted to `(eps, delta)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub d: usize,
    pub kappa: f64,
    #[serde(default = "default_grid")]
    pub oracle_grid: usize,
    #[serde(default)]
    pub mechanism: MechanismKind,
    /// `p` values for the scalar pure-DP sweep.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub eps_vs_p: Vec<f64>,
    /// Orders for the scalar RDP sweep.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rdp_vs_alpha: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundBlock {
    /// Metrics CSV written by `simulate`.
    pub metrics: PathBuf,
    #[serde(rename = "L")]
    pub smoothness: f64,
    pub mu: f64,
    pub eta: f64,
    #[serde(rename = "F_star", default, skip_serializing_if = "Option::is_none")]
    pub f_star: Option<f64>,
    /// Defaults to every step in the metrics file.
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub rounds: Option<usize>,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Strict parse; errors name the offending key path.
    pub fn parse(text: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("at `{path}`: {}", e.into_inner()))
        })
    }

    pub fn require<'a, T>(block: &'a Option<T>, name: &str) -> CliResult<&'a T> {
        block
            .as_ref()
            .ok_or_else(|| CliError::Config(format!("missing `{name}` block")))
    }

    pub fn seed(&self, cli_seed: Option<u64>) -> u64 {
        cli_seed.or(self.master_seed).unwrap_or(0)
    }

    pub fn output_dir(&self, cli_out: Option<&Path>) -> PathBuf {
        cli_out
            .map(Path::to_path_buf)
            .or_else(|| self.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_DIR))
    }
}
