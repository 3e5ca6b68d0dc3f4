//! Strict JSON configs for each subcommand.

use std::fs;
use std::path::{Path, PathBuf};

use mtbo_core::analysis::CurveConfig;
use mtbo_core::bench::HartmannProblem;
use mtbo_core::bo_loop::LoopConfig;
use mtbo_core::mtgp::StandardizeMode;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Parse `text` as `T`, rejecting unknown keys and reporting the key path on type errors.
pub fn parse_config<T: DeserializeOwned>(text: &str) -> Result<T, CliError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let value: T = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path.is_empty() || path == "." {
            CliError::Config(inner.to_string())
        } else {
            CliError::Config(format!("at `{path}`: {inner}"))
        }
    })?;
    de.end().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(value)
}

pub fn load_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            parse_config(&text).map_err(|e| match e {
                CliError::Config(m) => CliError::Config(format!("{}: {m}", p.display())),
                other => other,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitCommand {
    pub dataset: Option<PathBuf>,
    pub rank: usize,
    pub restarts: usize,
    pub seed: u64,
    pub standardize: StandardizeMode,
}

impl Default for FitCommand {
    fn default() -> Self {
        Self {
            dataset: None,
            rank: 2,
            restarts: 10,
            seed: 0,
            standardize: StandardizeMode::PerTask,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LooCommand {
    pub dataset: Option<PathBuf>,
    pub target_task: usize,
    pub rank: usize,
    pub restarts: usize,
    pub seed: u64,
    pub standardize: StandardizeMode,
}

impl Default for LooCommand {
    fn default() -> Self {
        Self {
            dataset: None,
            target_task: 0,
            rank: 2,
            restarts: 10,
            seed: 0,
            standardize: StandardizeMode::PerTask,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeCommand {
    pub problem: HartmannProblem,
    #[serde(rename = "loop")]
    pub loop_config: LoopConfig,
}

/// Where learning-curve data come from. Task 0 is online, task 1 offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Dataset {
        path: PathBuf,
    },
    Synthetic {
        dim: usize,
        output_variance: f64,
        lengthscales: Vec<f64>,
        rho: f64,
        online: usize,
        offline: usize,
        noise_variance: f64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningCurveCommand {
    pub source: DataSource,
    /// `[n_T, n_S]` pairs.
    pub grid: Vec<[usize; 2]>,
    /// Sizes for the single-task curve on offline data; empty skips it and the bound.
    pub single_task_sizes: Vec<usize>,
    /// Correlation used in the bound; estimated from a two-task fit on all data when absent.
    pub rho: Option<f64>,
    /// `n_T` values for the kernel-transfer curves; empty skips them.
    pub transfer_grid: Vec<usize>,
    pub force_diagonal: bool,
    pub curve: CurveConfig,
}

impl Default for LearningCurveCommand {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic {
                dim: 3,
                output_variance: 1.0,
                lengthscales: vec![0.4; 3],
                rho: 0.9,
                online: 20,
                offline: 100,
                noise_variance: 0.01,
                seed: 0,
            },
            grid: vec![[2, 0], [5, 0], [10, 0], [2, 40], [5, 40], [10, 40]],
            single_task_sizes: vec![2, 5, 10, 20, 35, 50],
            rho: None,
            transfer_grid: vec![2, 5, 10],
            force_diagonal: false,
            curve: CurveConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundCheckCommand {
    pub instances: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for BoundCheckCommand {
    fn default() -> Self {
        Self { instances: 500, dim: 3, seed: 0 }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use mtbo_core::bench::BenchmarkConfig;

    #[test]
    fn empty_benchmark_config_gives_defaults() {
        let c: BenchmarkConfig = parse_config("{}").unwrap();
        assert_eq!((c.n_t, c.n_s, c.n_o, c.replicates), (5, 20, 20, 30));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = parse_config::<FitCommand>(r#"{"rnak": 2}"#).unwrap_err();
        assert!(err.to_string().contains("rnak"), "{err}");
        let err = parse_config::<OptimizeCommand>(r#"{"loop": {"n_t": 3, "bogus": true}}"#).unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn type_errors_report_key_path() {
        let err = parse_config::<OptimizeCommand>(r#"{"loop": {"n_t": "five"}}"#).unwrap_err();
        assert!(err.to_string().contains("loop.n_t"), "{err}");
    }

    #[test]
    fn malformed_json_reports_position() {
        let err = parse_config::<BoundCheckCommand>("{\n  \"dim\": 3,\n  oops\n}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3") && msg.contains("column"), "{msg}");
    }

    #[test]
    fn configs_round_trip() {
        let c = LearningCurveCommand::default();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(parse_config::<LearningCurveCommand>(&text).unwrap(), c);
        let o = OptimizeCommand::default();
        let text = serde_json::to_string(&o).unwrap();
        assert_eq!(parse_config::<OptimizeCommand>(&text).unwrap(), o);
    }
}
