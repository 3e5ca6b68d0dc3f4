mod commands;
mod config;
mod error;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mtbo_core::bench::{BenchmarkConfig, Method};
use mtbo_core::bo_loop::LoopVariant;
use serde::Serialize;

use config::{load_config, BoundCheckCommand, FitCommand, LearningCurveCommand, LooCommand, OptimizeCommand};
use error::{CliError, ErrorRecord};
use output::{OutputDir, CONFIG_ECHO, ERROR_FILE};

#[derive(Parser)]
#[command(name = "mtbo", version, about = "Multi-task Bayesian optimization with online and offline experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file; flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "mtbo-out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Worker thread cap
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    replicates: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a multi-task GP to a dataset and write a model summary
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Leave-one-out cross-validation on one task
    Loo {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        target_task: Option<usize>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Run the online/offline optimization loop on the constrained Hartmann-6 problem
    Optimize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long, value_parser = parse_variant)]
        variant: Option<LoopVariant>,
    },
    /// Compare single-task, init-only and interleaved optimization over replicates
    Benchmark {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        batches: Option<usize>,
        /// Comma-separated subset of single_task, mtgp_init_only, mtgp_full
        #[arg(long, value_delimiter = ',', value_parser = parse_method)]
        methods: Option<Vec<Method>>,
    },
    /// Empirical learning curves, the two-task bound and kernel-transfer curves
    LearningCurve {
        #[command(flatten)]
        common: Common,
        /// Two-task dataset (task 0 online, task 1 offline) instead of the configured source
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Randomized check of the fixed-kernel two-task variance inequality
    BoundCheck {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
    },
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_variant(s: &str) -> Result<LoopVariant, String> {
    parse_enum(s)
}

fn parse_method(s: &str) -> Result<Method, String> {
    parse_enum(s)
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Fit { .. } => "fit",
            Command::Loo { .. } => "loo",
            Command::Optimize { .. } => "optimize",
            Command::Benchmark { .. } => "benchmark",
            Command::LearningCurve { .. } => "learning-curve",
            Command::BoundCheck { .. } => "bound-check",
        }
    }

    fn common(&self) -> &Common {
        match self {
            Command::Fit { common, .. }
            | Command::Loo { common, .. }
            | Command::Optimize { common, .. }
            | Command::Benchmark { common, .. }
            | Command::LearningCurve { common, .. }
            | Command::BoundCheck { common, .. } => common,
        }
    }
}

fn no_replicates(common: &Common, command: &str) -> Result<(), CliError> {
    match common.replicates {
        Some(_) => Err(CliError::Config(format!("--replicates does not apply to `{command}`"))),
        None => Ok(()),
    }
}

/// Resolve the config, echo it, run, and commit outputs.
fn execute<C, F>(config: C, out_dir: &Path, run: F) -> Result<String, CliError>
where
    C: Serialize,
    F: FnOnce(&C, &mut OutputDir) -> Result<String, CliError>,
{
    let mut out = OutputDir::create(out_dir)?;
    out.write_json(CONFIG_ECHO, &config)?;
    let message = run(&config, &mut out)?;
    out.commit()?;
    Ok(message)
}

fn dispatch(command: Command) -> Result<String, CliError> {
    let name = command.name();
    let common = command.common().clone();
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let cfg_path = common.config.as_deref();
    let out = common.out.as_path();
    match command {
        Command::Fit { dataset, rank, restarts, .. } => {
            no_replicates(&common, name)?;
            let mut cfg: FitCommand = load_config(cfg_path)?;
            cfg.dataset = dataset.or(cfg.dataset);
            cfg.rank = rank.unwrap_or(cfg.rank);
            cfg.restarts = restarts.unwrap_or(cfg.restarts);
            cfg.seed = common.seed.unwrap_or(cfg.seed);
            execute(cfg, out, commands::fit_model)
        }
        Command::Loo { dataset, target_task, rank, restarts, .. } => {
            no_replicates(&common, name)?;
            let mut cfg: LooCommand = load_config(cfg_path)?;
            cfg.dataset = dataset.or(cfg.dataset);
            cfg.target_task = target_task.unwrap_or(cfg.target_task);
            cfg.rank = rank.unwrap_or(cfg.rank);
            cfg.restarts = restarts.unwrap_or(cfg.restarts);
            cfg.seed = common.seed.unwrap_or(cfg.seed);
            execute(cfg, out, commands::loo)
        }
        Command::Optimize { iterations, variant, .. } => {
            no_replicates(&common, name)?;
            let mut cfg: OptimizeCommand = load_config(cfg_path)?;
            cfg.loop_config.iterations = iterations.unwrap_or(cfg.loop_config.iterations);
            cfg.loop_config.variant = variant.unwrap_or(cfg.loop_config.variant);
            cfg.loop_config.seed = common.seed.unwrap_or(cfg.loop_config.seed);
            cfg.loop_config.validate()?;
            execute(cfg, out, commands::optimize)
        }
        Command::Benchmark { batches, methods, .. } => {
            let mut cfg: BenchmarkConfig = load_config(cfg_path)?;
            cfg.batches = batches.unwrap_or(cfg.batches);
            cfg.methods = methods.unwrap_or(cfg.methods);
            cfg.replicates = common.replicates.unwrap_or(cfg.replicates);
            cfg.seed = common.seed.unwrap_or(cfg.seed);
            cfg.validate()?;
            execute(cfg, out, commands::benchmark)
        }
        Command::LearningCurve { dataset, .. } => {
            let mut cfg: LearningCurveCommand = load_config(cfg_path)?;
            if let Some(path) = dataset {
                cfg.source = config::DataSource::Dataset { path };
            }
            cfg.curve.replicates = common.replicates.unwrap_or(cfg.curve.replicates);
            cfg.curve.seed = common.seed.unwrap_or(cfg.curve.seed);
            cfg.curve.validate()?;
            execute(cfg, out, commands::learning_curve)
        }
        Command::BoundCheck { instances, dim, .. } => {
            no_replicates(&common, name)?;
            let mut cfg: BoundCheckCommand = load_config(cfg_path)?;
            cfg.instances = instances.unwrap_or(cfg.instances);
            cfg.dim = dim.unwrap_or(cfg.dim);
            cfg.seed = common.seed.unwrap_or(cfg.seed);
            execute(cfg, out, commands::bound_check)
        }
    }
}

fn write_error_record(dir: &Path, command: &str, err: &CliError) {
    let record = ErrorRecord {
        command,
        kind: err.kind(),
        message: err.to_string(),
    };
    let written = std::fs::create_dir_all(dir).and_then(|_| {
        let text = serde_json::to_string_pretty(&record).unwrap_or_default() + "\n";
        std::fs::write(dir.join(ERROR_FILE), text)
    });
    if let Err(e) = written {
        eprintln!("could not write {}: {e}", dir.join(ERROR_FILE).display());
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let name = cli.command.name();
    let out = cli.command.common().out.clone();
    match dispatch(cli.command) {
        Ok(message) => {
            println!("{message}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("error: {err}");
            write_error_record(&out, name, &err);
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
