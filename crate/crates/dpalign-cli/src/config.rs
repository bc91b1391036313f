use std::path::{Path, PathBuf};
use std::time::Duration;

use dpalign::solver::SolverConfig;
use serde::Deserialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config `{path}`: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid config `{path}`: {source}")]
    Parse {
        path: String,
        source: toml::de::Error,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Settings from a TOML file. Every key is optional; command-line flags
/// take precedence.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub solver: Option<PathBuf>,
    pub solver_args: Option<Vec<String>>,
    pub timeout: Option<f64>,
    pub big_m: Option<i64>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub format: Option<Format>,
    pub keep_smt: Option<PathBuf>,
    pub integer_distances: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub big_m: i64,
    pub seed: u64,
    pub trials: usize,
    pub format: Format,
}

/// Flags that override the file.
#[derive(Debug, Default)]
pub struct Overrides {
    pub solver: Option<PathBuf>,
    pub timeout: Option<f64>,
    pub big_m: Option<i64>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub json: bool,
    pub keep_smt: Option<PathBuf>,
    pub integer_distances: bool,
}

impl RunConfig {
    pub fn resolve(file: FileConfig, o: Overrides) -> Result<Self, ConfigError> {
        let mut solver = SolverConfig::default();
        if let Some(p) = o.solver.or(file.solver) {
            solver.path = p;
        }
        if let Some(a) = file.solver_args {
            solver.args = a;
        }
        let timeout = o.timeout.or(file.timeout).unwrap_or(30.0);
        if !(timeout > 0.0 && timeout.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "timeout must be positive, got {timeout}"
            )));
        }
        solver.timeout = Duration::from_secs_f64(timeout);
        solver.keep_smt = o.keep_smt.or(file.keep_smt);
        solver.integer_dvars = o.integer_distances || file.integer_distances.unwrap_or(false);
        let trials = o.trials.or(file.trials).unwrap_or(1000);
        if trials == 0 {
            return Err(ConfigError::Invalid("trials must be positive".into()));
        }
        let big_m = o.big_m.or(file.big_m).unwrap_or(10_000);
        if big_m <= 0 {
            return Err(ConfigError::Invalid(format!(
                "big-m must be positive, got {big_m}"
            )));
        }
        Ok(RunConfig {
            solver,
            big_m,
            seed: o.seed.or(file.seed).unwrap_or(0),
            trials,
            format: if o.json {
                Format::Json
            } else {
                file.format.unwrap_or_default()
            },
        })
    }
}
