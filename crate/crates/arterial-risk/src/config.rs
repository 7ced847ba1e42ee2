//! Command configuration files.
//!
//! Every command takes one JSON config (`--config`). Unknown fields are
//! rejected so typos fail loudly. The master seed is deliberately *not*
//! defaulted: it must be given in the config or as `--seed` (which wins),
//! and there is no wall-clock fallback — identical invocations must
//! produce identical bytes. Relative paths inside a config resolve against
//! the config file's directory, so a config travels with its data.

use std::path::{Path, PathBuf};

use arterial_core::case_control::MatchConfig;
use arterial_core::evaluation::ScoreMode;
use arterial_core::features::SpeedFilterConfig;
use arterial_core::likelihoods::{ModelSpec, PriorSpec};
use arterial_core::mcmc::SamplerConfig;
use arterial_core::time::TimeWindow;
use serde::Deserialize;
use serde_json::Value;

use crate::artifacts::SplitChoice;
use crate::error::CliError;
use crate::iso::parse_ts;

/// Reads and parses a JSON config file; all failures here are
/// configuration errors.
pub fn load_json(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Deserializes a parsed config into its schema type.
pub fn from_value<T: serde::de::DeserializeOwned>(path: &Path, value: Value) -> Result<T, CliError> {
    serde_json::from_value(value)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Resolves the mandatory master seed: the `--seed` flag wins, otherwise
/// the config value at `pointer` (a JSON pointer such as `/seed` or
/// `/sampler/seed`) must be a nonnegative integer.
pub fn resolve_seed(config: &Value, pointer: &str, flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(seed) = flag {
        return Ok(seed);
    }
    match config.pointer(pointer) {
        Some(v) => v.as_u64().ok_or_else(|| {
            CliError::config(format!("seed at {pointer:?} must be an unsigned integer"))
        }),
        None => Err(CliError::config(format!(
            "seed is required: set {pointer:?} in the config or pass --seed (runs never seed from the clock)"
        ))),
    }
}

/// Resolves a config-relative path against the config file's directory.
pub fn resolve_path(config_path: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config_path.parent().unwrap_or(Path::new(".")).join(p)
    }
}

/// Checks a referenced input file exists — a config invariant, checked
/// before any work starts.
pub fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::config(format!("referenced file does not exist: {}", path.display())))
    }
}

/// A study period given as ISO-8601 instants, `[start, end)`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeriodConfig {
    /// Inclusive start.
    pub start: String,
    /// Exclusive end.
    pub end: String,
}

impl PeriodConfig {
    /// Parses and validates the window.
    pub fn to_window(&self) -> Result<TimeWindow, CliError> {
        let start = parse_ts(&self.start).map_err(CliError::Config)?;
        let end = parse_ts(&self.end).map_err(CliError::Config)?;
        if start >= end {
            return Err(CliError::config("period start must precede its end"));
        }
        Ok(TimeWindow::new(start, end))
    }
}

fn default_split_fraction() -> f64 {
    0.8
}

fn default_score_mode() -> ScoreMode {
    ScoreMode::LeaveOneOut
}

/// `prepare` config: where the detector logs live and how to build the
/// matched dataset from them.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrepareConfig {
    /// Master seed (control sampling and the train/validation split); may
    /// instead come from `--seed`.
    #[serde(default)]
    pub seed: Option<u64>,
    /// Segment inventory CSV.
    pub segments: PathBuf,
    /// Bluetooth traversal CSV.
    pub bluetooth: PathBuf,
    /// Signal phase CSV.
    pub phases: PathBuf,
    /// Turning-movement volume CSV.
    pub volumes: PathBuf,
    /// Weather observation CSV.
    pub weather: PathBuf,
    /// Crash log CSV.
    pub crashes: PathBuf,
    /// Study period; candidate control moments must fall inside it.
    pub period: PeriodConfig,
    /// Matching parameters (controls per case, exclusion window,
    /// granularity).
    #[serde(default)]
    pub matching: MatchConfig,
    /// Rolling speed-filter settings.
    #[serde(default)]
    pub filter: SpeedFilterConfig,
    /// Fraction of strata assigned to training (whole strata, rounded).
    #[serde(default = "default_split_fraction")]
    pub split_fraction: f64,
}

impl PrepareConfig {
    /// Resolves every input path against the config's directory and checks
    /// existence.
    pub fn resolve_inputs(&mut self, config_path: &Path) -> Result<(), CliError> {
        for p in [
            &mut self.segments,
            &mut self.bluetooth,
            &mut self.phases,
            &mut self.volumes,
            &mut self.weather,
            &mut self.crashes,
        ] {
            *p = resolve_path(config_path, p);
            require_file(p)?;
        }
        Ok(())
    }

    /// Validates the non-path settings.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.matching.m < 1 {
            return Err(CliError::config("matching.m must be at least 1"));
        }
        if self.matching.exclusion_s < 0 {
            return Err(CliError::config("matching.exclusion_s must be nonnegative"));
        }
        if self.filter.window == 0 {
            return Err(CliError::config("filter.window must be at least 1"));
        }
        if !(self.filter.band_iqr_multiplier > 0.0 && self.filter.band_iqr_multiplier.is_finite()) {
            return Err(CliError::config("filter.band_iqr_multiplier must be positive"));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(CliError::config("split_fraction must lie strictly between 0 and 1"));
        }
        Ok(())
    }
}

/// `fit` config.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Prepared dataset CSV.
    pub dataset: PathBuf,
    /// Model to fit.
    pub model: ModelSpec,
    /// Sampler settings; the seed may instead come from `--seed`.
    #[serde(default)]
    pub sampler: SamplerConfig,
    /// Which rows to fit (default: training).
    #[serde(default)]
    pub split: SplitChoice,
}

/// `evaluate` config.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Prepared dataset CSV.
    pub dataset: PathBuf,
    /// `summary.json` produced by `fit`.
    pub summary: PathBuf,
    /// How a control's within-stratum reference mean is formed.
    #[serde(default = "default_score_mode")]
    pub score_mode: ScoreMode,
}

/// One fixed/random covariate combination in a sweep.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Combination {
    /// Covariates in the model.
    pub covariates: Vec<String>,
    /// The subset given random (stratum-level) coefficients; empty means
    /// the fixed-coefficient family.
    #[serde(default)]
    pub random: Vec<String>,
}

/// `sweep` config: one dataset, one sampler, many model combinations.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Prepared dataset CSV.
    pub dataset: PathBuf,
    /// Sampler settings shared by every combination; the seed may instead
    /// come from `--seed`.
    #[serde(default)]
    pub sampler: SamplerConfig,
    /// Which 5-minute slice supplies the covariates (may be overridden by
    /// `--slice`).
    pub slice: u8,
    /// Prior hyperparameters shared by every combination.
    #[serde(default)]
    pub priors: PriorSpec,
    /// Whether to z-score covariates for sampling.
    #[serde(default)]
    pub standardize: bool,
    /// How a control's reference mean is formed when scoring.
    #[serde(default = "default_score_mode")]
    pub score_mode: ScoreMode,
    /// The combinations to fit and compare; must be nonempty.
    pub combinations: Vec<Combination>,
}
