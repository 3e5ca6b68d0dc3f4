use std::fs;
use std::path::Path;

use mtbo_core::analysis::{
    bound_comparison, draw_two_task_dataset, empirical_learning_curve, kernel_transfer_curves, variance_bound_battery,
    single_task_learning_curve, write_bound_csv, write_curve_csv, write_single_curve_csv, write_transfer_csv,
    OFFLINE_TASK, ONLINE_TASK,
};
use mtbo_core::bench::{run_comparison, BenchmarkConfig};
use mtbo_core::bo_loop::run_loop;
use mtbo_core::kernels::{SpatialHyperparams, TaskCovariance};
use mtbo_core::mtgp::{fit, loo_cross_validation, Dataset, FitConfig};
use mtbo_core::synthetic::IcmPrior;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{
    BoundCheckCommand, DataSource, FitCommand, LearningCurveCommand, LooCommand, OptimizeCommand,
};
use crate::error::CliError;
use crate::output::OutputDir;

fn read_dataset(path: Option<&Path>) -> Result<Dataset, CliError> {
    let path = path.ok_or_else(|| CliError::Config("`dataset` is required".into()))?;
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(Dataset::from_json(&text)?)
}

fn csv<F>(write: F) -> Result<Vec<u8>, CliError>
where
    F: FnOnce(&mut Vec<u8>) -> mtbo_core::Result<()>,
{
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

pub fn fit_model(cfg: &FitCommand, out: &mut OutputDir) -> Result<String, CliError> {
    let data = read_dataset(cfg.dataset.as_deref())?;
    let fc = FitConfig::new(cfg.rank, cfg.restarts, cfg.seed).with_standardize(cfg.standardize);
    let model = fit(&data, &fc)?;
    let summary = model.summary();
    out.write_json("model_summary.json", &summary)?;
    let rho = summary
        .correlations
        .iter()
        .map(|c| format!("rho({},{}) = {:.4}", c.task_a, c.task_b, c.rho))
        .collect::<Vec<_>>()
        .join(", ");
    Ok(format!("log marginal likelihood {:.4}; {rho}", summary.log_marginal_likelihood))
}

pub fn loo(cfg: &LooCommand, out: &mut OutputDir) -> Result<String, CliError> {
    let data = read_dataset(cfg.dataset.as_deref())?;
    let fc = FitConfig::new(cfg.rank, cfg.restarts, cfg.seed).with_standardize(cfg.standardize);
    let result = loo_cross_validation(&data, cfg.target_task, &fc)?;
    let mut text = String::from("index,predicted_mean,predicted_variance,actual\n");
    for f in &result.folds {
        text.push_str(&format!("{},{},{},{}\n", f.index, f.predicted_mean, f.predicted_variance, f.actual));
    }
    out.write("loo.csv", text)?;
    out.write_json("loo_summary.json", &result)?;
    Ok(format!("leave-one-out MSE (standardized) {:.4} over {} folds", result.mse, result.folds.len()))
}

pub fn optimize(cfg: &OptimizeCommand, out: &mut OutputDir) -> Result<String, CliError> {
    let trace = run_loop(&cfg.problem, &cfg.loop_config)?;
    out.write("trace.jsonl", csv(|w| trace.write_jsonl(w))?)?;
    out.write("incumbent.csv", csv(|w| trace.write_incumbent_csv(w))?)?;
    #[derive(Serialize)]
    struct Final<'a> {
        outcome_names: &'a [String],
        online_observations: usize,
        final_policy: &'a Option<mtbo_core::acquisition::Incumbent>,
        error: &'a Option<String>,
    }
    out.write_json(
        "final.json",
        &Final {
            outcome_names: &trace.outcome_names,
            online_observations: trace.online_count(),
            final_policy: &trace.final_policy,
            error: &trace.error,
        },
    )?;
    if let Some(e) = &trace.error {
        return Err(mtbo_core::Error::AcquisitionFailed(e.clone()).into());
    }
    Ok(match &trace.final_policy {
        Some(p) => format!("{} online observations; final policy {:?}", trace.online_count(), p.point),
        None => format!("{} online observations; no feasible policy", trace.online_count()),
    })
}

pub fn benchmark(cfg: &BenchmarkConfig, out: &mut OutputDir) -> Result<String, CliError> {
    let result = run_comparison(cfg)?;
    out.write("results.csv", csv(|w| result.write_csv(w))?)?;
    out.write("summary.json", result.summary_json()? + "\n")?;
    let lines: Vec<String> = result
        .methods
        .iter()
        .map(|m| format!("{:<15} final best feasible {:.4} ± {:.4}", m.method.name(), m.final_mean(), 2.0 * m.final_se()))
        .collect();
    Ok(lines.join("\n"))
}

fn load_source(source: &DataSource) -> Result<Dataset, CliError> {
    match source {
        DataSource::Dataset { path } => read_dataset(Some(path)),
        DataSource::Synthetic {
            dim,
            output_variance,
            lengthscales,
            rho,
            online,
            offline,
            noise_variance,
            seed,
        } => {
            if lengthscales.len() != *dim {
                return Err(CliError::Config(format!("{} lengthscales for dimension {dim}", lengthscales.len())));
            }
            let prior = IcmPrior::new(
                SpatialHyperparams::new(*output_variance, lengthscales.clone())?,
                TaskCovariance::two_task(*rho),
            );
            let design = mtbo_core::analysis::GenerativeDesign {
                online: *online,
                offline: *offline,
                noise_variance: *noise_variance,
            };
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            Ok(draw_two_task_dataset(&prior, &design, &mut rng)?)
        }
    }
}

pub fn learning_curve(cfg: &LearningCurveCommand, out: &mut OutputDir) -> Result<String, CliError> {
    let data = load_source(&cfg.source)?;
    let grid: Vec<(usize, usize)> = cfg.grid.iter().map(|g| (g[0], g[1])).collect();
    let mut report = Vec::new();

    let points = empirical_learning_curve(&data, &grid, &cfg.curve)?;
    out.write("curve.csv", csv(|w| write_curve_csv(&points, w))?)?;
    report.push(format!("{} learning-curve points over {} replicates", points.len(), cfg.curve.replicates));

    #[derive(Serialize)]
    struct Summary {
        rho: Option<f64>,
        rho_estimated: bool,
        frozen_kernel: Option<(f64, Vec<f64>)>,
    }
    let mut summary = Summary { rho: None, rho_estimated: false, frozen_kernel: None };

    if !cfg.single_task_sizes.is_empty() {
        let offline = data.single_task(OFFLINE_TASK);
        let single = single_task_learning_curve(&offline, &cfg.single_task_sizes, &cfg.curve)?;
        out.write("single_task_curve.csv", csv(|w| write_single_curve_csv(&single, w))?)?;
        let rho = match cfg.rho {
            Some(r) => r,
            None => {
                let model = fit(&data, &FitConfig::new(2, cfg.curve.fit_restarts, cfg.curve.seed))?;
                summary.rho_estimated = true;
                model.inter_task_correlation(ONLINE_TASK, OFFLINE_TASK)?
            }
        };
        summary.rho = Some(rho);
        let rows = bound_comparison(&points, &single, rho)?;
        out.write("bound.csv", csv(|w| write_bound_csv(&rows, w))?)?;
        report.push(format!("bound evaluated at rho = {rho:.4}"));
    }

    if !cfg.transfer_grid.is_empty() {
        let curves = kernel_transfer_curves(
            &data.single_task(ONLINE_TASK),
            &data.single_task(OFFLINE_TASK),
            &cfg.transfer_grid,
            &cfg.curve,
            cfg.force_diagonal,
        )?;
        out.write("transfer.csv", csv(|w| write_transfer_csv(&curves, w))?)?;
        summary.frozen_kernel = Some((curves.frozen_output_variance, curves.frozen_lengthscales.clone()));
        report.push(format!("kernel-transfer curves at {} online sizes", cfg.transfer_grid.len()));
    }
    out.write_json("learning_curve_summary.json", &summary)?;
    Ok(report.join("\n"))
}

pub fn bound_check(cfg: &BoundCheckCommand, out: &mut OutputDir) -> Result<String, CliError> {
    if cfg.instances == 0 || cfg.dim == 0 {
        return Err(CliError::Config("instances and dim must be positive".into()));
    }
    let report = variance_bound_battery(cfg.instances, cfg.dim, cfg.seed)?;
    out.write_json("bound_check.json", &report)?;
    Ok(format!("violations: {} / {}", report.violations, report.instances))
}
