//! JSON run configurations. Unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::lindblad::Dissipator;
use crate::lindblad::Vec3;
use crate::relaxation::{ScanConstraint, ThreeStateRates};

use super::CliError;

pub const DEFAULT_PRECISION: usize = 17;

fn default_precision() -> usize {
    DEFAULT_PRECISION
}

fn default_true() -> bool {
    true
}

/// Fields shared by every configuration.
pub trait Common {
    fn seed(&self) -> u64;
    fn out(&self) -> Option<&Path>;
    fn precision(&self) -> usize;
}

macro_rules! common {
    ($t:ty) => {
        impl Common for $t {
            fn seed(&self) -> u64 {
                self.seed
            }
            fn out(&self) -> Option<&Path> {
                self.out.as_deref()
            }
            fn precision(&self) -> usize {
                self.precision
            }
        }
    };
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PmeSolveConfig {
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    pub p0: Vec<f64>,
    pub t_end: f64,
    pub dt: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    #[serde(default = "default_precision")]
    pub precision: usize,
}
common!(PmeSolveConfig);

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QtFitConfig {
    #[serde(rename = "W")]
    pub w: Vec<Vec<f64>>,
    pub max_restarts: Option<usize>,
    /// Accepted residual, default 1e-8.
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    #[serde(default = "default_precision")]
    pub precision: usize,
}
common!(QtFitConfig);

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxClassifyConfig {
    /// `[a, b, c, d, e, f]`.
    pub rates: ThreeStateRates,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    #[serde(default = "default_precision")]
    pub precision: usize,
}
common!(RelaxClassifyConfig);

fn default_low() -> f64 {
    0.0
}

fn default_high() -> f64 {
    1.0
}

fn default_bins() -> usize {
    10
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxScanConfig {
    pub samples: usize,
    #[serde(default = "default_low")]
    pub low: f64,
    #[serde(default = "default_high")]
    pub high: f64,
    #[serde(default)]
    pub constraint: ScanConstraint,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    #[serde(default = "default_precision")]
    pub precision: usize,
}
common!(RelaxScanConfig);

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LindbladConfig {
    #[serde(default)]
    pub h: Vec3,
    pub dissipators: Vec<Dissipator>,
    #[serde(rename = "P0")]
    pub p0: [f64; 3],
    pub t_end: f64,
    pub dt: Option<f64>,
    #[serde(default = "default_true")]
    pub gradient_check: bool,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    #[serde(default = "default_precision")]
    pub precision: usize,
}
common!(LindbladConfig);

fn default_k() -> f64 {
    1.0
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositeConfig {
    pub a: f64,
    pub c: f64,
    #[serde(default = "default_k")]
    pub k: f64,
    #[serde(default)]
    pub seed: u64,
    pub out: Option<PathBuf>,
    #[serde(default = "default_precision")]
    pub precision: usize,
}
common!(CompositeConfig);

/// Reads and parses a configuration file, then checks the shared fields.
pub fn load<T: DeserializeOwned + Common>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Invalid(format!("cannot read config {}: {e}", path.display())))?;
    let cfg: T = serde_json::from_str(&text)
        .map_err(|e| CliError::Invalid(format!("bad config {}: {e}", path.display())))?;
    if !(1..=17).contains(&cfg.precision()) {
        return Err(CliError::Invalid(format!(
            "precision must be between 1 and 17, got {}",
            cfg.precision()
        )));
    }
    Ok(cfg)
}
