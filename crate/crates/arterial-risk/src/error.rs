//! Command failures classified by exit code.
//!
//! Every failure a command can hit is either a *configuration* problem —
//! the run was mis-specified and rerunning without changes cannot succeed
//! (malformed config JSON, missing referenced files, invalid model or
//! sampler settings) — or a *runtime* problem in the data or environment
//! (corrupt input rows, degenerate datasets, I/O failures). The process
//! exits with 2 for the former and 1 for the latter; 0 means success.

use std::fmt;
use std::process::ExitCode;

use arterial_core::case_control::CaseControlError;
use arterial_core::evaluation::EvalError;
use arterial_core::features::FeatureError;
use arterial_core::likelihoods::ModelError;
use arterial_core::mcmc::SamplerError;
use arterial_core::synthetic_world::WorldError;

/// A command failure.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration; the process exits with code 2.
    Config(String),
    /// Runtime or data failure; the process exits with code 1.
    Runtime(String),
}

impl CliError {
    /// Builds a configuration error.
    pub fn config(msg: impl Into<String>) -> CliError {
        CliError::Config(msg.into())
    }

    /// Builds a runtime/data error.
    pub fn runtime(msg: impl Into<String>) -> CliError {
        CliError::Runtime(msg.into())
    }

    /// The process exit code this failure maps to.
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Config(_) => ExitCode::from(2),
            CliError::Runtime(_) => ExitCode::from(1),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        match e {
            // A chain blowing up is a property of the run, not the config.
            SamplerError::NonFiniteInit { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<CaseControlError> for CliError {
    fn from(e: CaseControlError) -> Self {
        match e {
            CaseControlError::BadFraction | CaseControlError::UnknownCovariate(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<WorldError> for CliError {
    fn from(e: WorldError) -> Self {
        match e {
            WorldError::BadConfig(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}
