//! Empirical learning curves, the two-task lower bound built from single-task
//! curves, and the kernel-transfer experiment.
//!
//! Two-task datasets use task 0 for online and task 1 for offline
//! observations. Predictive variance is the latent posterior variance at
//! held-out online points; MSE compares the posterior mean against the
//! held-out observed values, so the two agree in expectation when
//! observation noise is negligible.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bench::mean_and_se;
use crate::bo_loop::{fixed_hyperparameters, KernelMode};
use crate::error::{Error, Result};
use crate::kernels::{HyperparamLayout, HyperparamVector, SpatialHyperparams, TaskStructure};
use crate::mtgp::{fit, Dataset, FitConfig, FittedModel, Observation, StandardizeMode};
use crate::qmc::derive_seed;
use crate::synthetic::{uniform_queries, IcmPrior};

pub const ONLINE_TASK: usize = 0;
pub const OFFLINE_TASK: usize = 1;
pub const VARIANCE_BOUND_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurveConfig {
    pub replicates: usize,
    pub seed: u64,
    /// `Infer` refits hyperparameters on every subsample.
    pub kernel: KernelMode,
    pub fit_restarts: usize,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            replicates: 500,
            seed: 0,
            kernel: KernelMode::Infer,
            fit_restarts: 3,
        }
    }
}

impl CurveConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("replicates must be at least 1".into()));
        }
        if self.fit_restarts == 0 {
            return Err(Error::InvalidConfig("fit_restarts must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurvePoint {
    pub n_t: usize,
    pub n_s: usize,
    pub mean_mse: f64,
    pub mse_se: f64,
    pub mean_variance: f64,
    pub variance_se: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleTaskPoint {
    pub n: usize,
    pub mean_variance: f64,
    pub variance_se: f64,
}

/// Single-task learning curve; `n` strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleTaskCurve {
    pub points: Vec<SingleTaskPoint>,
}

impl SingleTaskCurve {
    pub fn new(points: Vec<SingleTaskPoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidConfig("empty learning curve".into()));
        }
        if points.windows(2).any(|w| w[0].n >= w[1].n) {
            return Err(Error::InvalidConfig("curve sizes must be strictly increasing".into()));
        }
        Ok(Self { points })
    }

    /// Build from `(n, variance)` pairs.
    pub fn from_values(values: &[(usize, f64)]) -> Result<Self> {
        Self::new(
            values
                .iter()
                .map(|&(n, v)| SingleTaskPoint { n, mean_variance: v, variance_se: 0.0 })
                .collect(),
        )
    }

    /// Linear interpolation of mean variance; no extrapolation.
    pub fn variance_at(&self, n: f64) -> Result<f64> {
        let first = &self.points[0];
        let last = &self.points[self.points.len() - 1];
        let (min, max) = (first.n as f64, last.n as f64);
        if !(min..=max).contains(&n) {
            return Err(Error::InsufficientCurveSupport { n, min, max });
        }
        let i = self.points.partition_point(|p| (p.n as f64) < n);
        let hi = &self.points[i];
        if hi.n as f64 == n || i == 0 {
            return Ok(hi.mean_variance);
        }
        let lo = &self.points[i - 1];
        let w = (n - lo.n as f64) / (hi.n - lo.n) as f64;
        Ok(lo.mean_variance + w * (hi.mean_variance - lo.mean_variance))
    }
}

/// `ρ² ε(n_T + n_S) + (1 − ρ²) ε(n_T)`.
pub fn two_task_bound(curve: &SingleTaskCurve, rho: f64, n_t: usize, n_s: usize) -> Result<f64> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::InvalidConfig(format!("correlation {rho} outside [-1, 1]")));
    }
    let r2 = rho * rho;
    let pooled = curve.variance_at((n_t + n_s) as f64)?;
    let online = curve.variance_at(n_t as f64)?;
    Ok(r2 * pooled + (1.0 - r2) * online)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundRow {
    pub n_t: usize,
    pub n_s: usize,
    pub empirical: f64,
    pub bound: f64,
}

pub fn bound_comparison(points: &[LearningCurvePoint], curve: &SingleTaskCurve, rho: f64) -> Result<Vec<BoundRow>> {
    points
        .iter()
        .map(|p| {
            Ok(BoundRow {
                n_t: p.n_t,
                n_s: p.n_s,
                empirical: p.mean_variance,
                bound: two_task_bound(curve, rho, p.n_t, p.n_s)?,
            })
        })
        .collect()
}

// --- subsampling -----------------------------------------------------------

#[derive(Debug, Clone, Copy)]
struct HeldOut {
    mse: f64,
    variance: f64,
}

fn held_out(model: &FittedModel, data: &Dataset, indices: &[usize]) -> Result<HeldOut> {
    let queries: Vec<(usize, Vec<f64>)> = indices
        .iter()
        .map(|&i| (ONLINE_TASK, data.observations[i].point.clone()))
        .collect();
    let post = model.posterior(&queries)?;
    let n = indices.len() as f64;
    let mse = indices
        .iter()
        .enumerate()
        .map(|(j, &i)| (data.observations[i].mean - post.mean[j]).powi(2))
        .sum::<f64>()
        / n;
    let variance = (0..indices.len()).map(|j| post.variance(j)).sum::<f64>() / n;
    Ok(HeldOut { mse, variance })
}

fn fit_subset(train: &Dataset, tasks: usize, cfg: &CurveConfig, seed: u64) -> Result<FittedModel> {
    let structure = TaskStructure::LowRank { tasks, rank: tasks };
    match fixed_hyperparameters(structure, train.dim, &cfg.kernel)? {
        Some(hyper) => FittedModel::new(train.clone(), hyper, StandardizeMode::None),
        None => fit(train, &FitConfig::new(tasks, cfg.fit_restarts, seed)),
    }
}

fn aggregate(n_t: usize, n_s: usize, samples: &[HeldOut]) -> LearningCurvePoint {
    let mses: Vec<f64> = samples.iter().map(|s| s.mse).collect();
    let vars: Vec<f64> = samples.iter().map(|s| s.variance).collect();
    let (mean_mse, mse_se) = mean_and_se(&mses);
    let (mean_variance, variance_se) = mean_and_se(&vars);
    LearningCurvePoint {
        n_t,
        n_s,
        mean_mse,
        mse_se,
        mean_variance,
        variance_se,
        replicates: samples.len(),
    }
}

/// `per_rep[r][g]` → one point per grid entry.
fn collect_grid(grid: &[(usize, usize)], per_rep: &[Vec<HeldOut>]) -> Vec<LearningCurvePoint> {
    grid.iter()
        .enumerate()
        .map(|(g, &(n_t, n_s))| {
            let col: Vec<HeldOut> = per_rep.iter().map(|r| r[g]).collect();
            aggregate(n_t, n_s, &col)
        })
        .collect()
}

fn check_grid(grid: &[(usize, usize)], online: usize, offline: usize) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("empty learning-curve grid".into()));
    }
    for &(n_t, n_s) in grid {
        if n_t >= online {
            return Err(Error::InvalidConfig(format!(
                "n_T = {n_t} leaves no held-out online point ({online} available)"
            )));
        }
        if n_s > offline {
            return Err(Error::InvalidConfig(format!("n_S = {n_s} exceeds {offline} offline observations")));
        }
        if n_t + n_s == 0 {
            return Err(Error::InvalidConfig("grid point with no training data".into()));
        }
    }
    Ok(())
}

fn draw<R: Rng>(pool: &[usize], k: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut shuffled = pool.to_vec();
    shuffled.shuffle(rng);
    let rest = shuffled.split_off(k);
    (shuffled, rest)
}

fn curve_replicate(dataset: &Dataset, grid: &[(usize, usize)], cfg: &CurveConfig, rep_seed: u64) -> Result<Vec<HeldOut>> {
    let online = dataset.task_indices(ONLINE_TASK);
    let offline = dataset.task_indices(OFFLINE_TASK);
    grid.iter()
        .enumerate()
        .map(|(g, &(n_t, n_s))| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(rep_seed, g as u64));
            let (train_t, test) = draw(&online, n_t, &mut rng);
            let (train_s, _) = draw(&offline, n_s, &mut rng);
            let train = dataset.subset(&[train_t, train_s].concat());
            let model = fit_subset(&train, 2, cfg, derive_seed(rep_seed, 0x100 + g as u64))?;
            held_out(&model, dataset, &test)
        })
        .collect()
}

/// Subsample `n_T` online and `n_S` offline observations, fit, and score on
/// the remaining online observations; averaged over replicates.
pub fn empirical_learning_curve(
    dataset: &Dataset,
    grid: &[(usize, usize)],
    cfg: &CurveConfig,
) -> Result<Vec<LearningCurvePoint>> {
    cfg.validate()?;
    dataset.validate()?;
    check_grid(grid, dataset.task_count(ONLINE_TASK), dataset.task_count(OFFLINE_TASK))?;
    let per_rep = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| curve_replicate(dataset, grid, cfg, derive_seed(cfg.seed, r as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(collect_grid(grid, &per_rep))
}

/// Sizes and noise for datasets drawn from a known prior.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerativeDesign {
    pub online: usize,
    pub offline: usize,
    pub noise_variance: f64,
}

/// Two-task dataset with uniform inputs drawn from `prior`.
pub fn draw_two_task_dataset<R: Rng>(prior: &IcmPrior, design: &GenerativeDesign, rng: &mut R) -> Result<Dataset> {
    let dim = prior.spatial.dim();
    let mut queries = uniform_queries(design.online, dim, ONLINE_TASK, rng);
    queries.extend(uniform_queries(design.offline, dim, OFFLINE_TASK, rng));
    Ok(prior.sample_dataset(&queries, design.noise_variance, rng)?.0)
}

/// As [`empirical_learning_curve`], with a fresh dataset drawn from `prior` for every replicate.
pub fn generative_learning_curve(
    prior: &IcmPrior,
    design: &GenerativeDesign,
    grid: &[(usize, usize)],
    cfg: &CurveConfig,
) -> Result<Vec<LearningCurvePoint>> {
    cfg.validate()?;
    check_grid(grid, design.online, design.offline)?;
    let per_rep = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let rep_seed = derive_seed(cfg.seed, r as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(rep_seed, u64::MAX));
            let data = draw_two_task_dataset(prior, design, &mut rng)?;
            curve_replicate(&data, grid, cfg, rep_seed)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(collect_grid(grid, &per_rep))
}

/// Nested subsamples of a single-task dataset, scored on the points held out
/// from the largest training set.
pub fn single_task_learning_curve(dataset: &Dataset, sizes: &[usize], cfg: &CurveConfig) -> Result<SingleTaskCurve> {
    cfg.validate()?;
    let data = dataset.pooled();
    data.validate()?;
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidConfig("sizes must be nonempty and strictly increasing".into()));
    }
    if sizes[0] == 0 {
        return Err(Error::InvalidConfig("training size must be at least 1".into()));
    }
    let n_max = sizes[sizes.len() - 1];
    if n_max >= data.len() {
        return Err(Error::InvalidConfig(format!(
            "n = {n_max} leaves no held-out point ({} available)",
            data.len()
        )));
    }
    let all: Vec<usize> = (0..data.len()).collect();
    let per_rep = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let rep_seed = derive_seed(cfg.seed, r as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(rep_seed);
            let (order, test) = draw(&all, n_max, &mut rng);
            sizes
                .iter()
                .enumerate()
                .map(|(g, &n)| {
                    let model = fit_subset(&data.subset(&order[..n]), 1, cfg, derive_seed(rep_seed, 0x100 + g as u64))?;
                    held_out(&model, &data, &test)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let points = sizes
        .iter()
        .enumerate()
        .map(|(g, &n)| {
            let vars: Vec<f64> = per_rep.iter().map(|r| r[g].variance).collect();
            let (mean_variance, variance_se) = mean_and_se(&vars);
            SingleTaskPoint { n, mean_variance, variance_se }
        })
        .collect();
    SingleTaskCurve::new(points)
}

// --- fixed-kernel inequality --------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarianceBoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

fn two_task_hyper(spatial: &SpatialHyperparams, rho: f64) -> Result<HyperparamVector> {
    let layout = HyperparamLayout::new(spatial.dim(), TaskStructure::LowRank { tasks: 2, rank: 2 })?;
    let params = [1.0, rho, (1.0 - rho * rho).max(0.0).sqrt()];
    HyperparamVector::pack(layout, spatial, &params, &[])
}

fn online_variance(
    spatial: &SpatialHyperparams,
    rho: f64,
    data: &Dataset,
    x_star: &[f64],
) -> Result<f64> {
    let model = FittedModel::new(data.clone(), two_task_hyper(spatial, rho)?, StandardizeMode::None)?;
    Ok(model.posterior_standardized(&[(ONLINE_TASK, x_star.to_vec())])?.variance(0))
}

/// Compares `σ²(ρ)` against `ρ² σ²(1) + (1 − ρ²) σ²(0)` at `x*` for a fixed
/// kernel with unit task variances.
pub fn check_variance_bound(
    spatial: &SpatialHyperparams,
    rho: f64,
    x_online: &[Vec<f64>],
    x_offline: &[Vec<f64>],
    x_star: &[f64],
    noise_variance: f64,
) -> Result<VarianceBoundCheck> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::InvalidConfig(format!("correlation {rho} outside [-1, 1]")));
    }
    let observations = x_online
        .iter()
        .map(|x| (ONLINE_TASK, x))
        .chain(x_offline.iter().map(|x| (OFFLINE_TASK, x)))
        .map(|(t, x)| Observation::new(x.clone(), t, 0.0, noise_variance))
        .collect();
    let data = Dataset::from_observations("bound", spatial.dim(), observations)?;
    let lhs = online_variance(spatial, rho, &data, x_star)?;
    let r2 = rho * rho;
    let rhs = r2 * online_variance(spatial, 1.0, &data, x_star)? + (1.0 - r2) * online_variance(spatial, 0.0, &data, x_star)?;
    Ok(VarianceBoundCheck {
        lhs,
        rhs,
        holds: lhs >= rhs - VARIANCE_BOUND_SLACK,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub instances: usize,
    pub violations: usize,
    /// Largest `rhs − lhs` seen.
    pub worst_gap: f64,
}

/// Randomized instances of [`check_variance_bound`].
pub fn variance_bound_battery(instances: usize, dim: usize, seed: u64) -> Result<BatteryReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = 0;
    let mut worst_gap = f64::NEG_INFINITY;
    for _ in 0..instances {
        let rho = rng.random_range(-1.0..=1.0);
        let lengthscales = (0..dim).map(|_| rng.random_range(0.1..1.0)).collect();
        let spatial = SpatialHyperparams::new(rng.random_range(0.5..2.0), lengthscales)?;
        let noise = 10f64.powf(rng.random_range(-4.0..-1.0));
        let n_t = rng.random_range(1..=6);
        let n_s = rng.random_range(1..=12);
        let mut points = |k: usize| -> Vec<Vec<f64>> {
            (0..k).map(|_| (0..dim).map(|_| rng.random::<f64>()).collect()).collect()
        };
        let x_t = points(n_t);
        let x_s = points(n_s);
        let x_star = points(1).remove(0);
        let check = check_variance_bound(&spatial, rho, &x_t, &x_s, &x_star, noise)?;
        worst_gap = worst_gap.max(check.rhs - check.lhs);
        if !check.holds {
            violations += 1;
        }
    }
    Ok(BatteryReport { instances, violations, worst_gap })
}

// --- kernel transfer ------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTransferCurves {
    /// Single-task GP, kernel inferred from the online subsample.
    pub inferred: Vec<LearningCurvePoint>,
    /// Single-task GP with the kernel frozen at the offline fit.
    pub offline_kernel: Vec<LearningCurvePoint>,
    /// Two-task GP on the online subsample plus all offline data.
    pub multitask: Vec<LearningCurvePoint>,
    /// Frozen kernel in raw units.
    pub frozen_output_variance: f64,
    pub frozen_lengthscales: Vec<f64>,
    pub frozen_mean: f64,
}

/// Kernel frozen at a single-task fit, expressed in raw units.
struct FrozenKernel {
    spatial: SpatialHyperparams,
    mean: f64,
}

impl FrozenKernel {
    fn from_fit(model: &FittedModel) -> Result<Self> {
        let scale = model.standardization().scale(0);
        let variance = model.spatial().output_variance() * model.task_covariance().get(0, 0) * scale.sd * scale.sd;
        Ok(Self {
            spatial: SpatialHyperparams::new(variance, model.spatial().lengthscales().to_vec())?,
            mean: scale.mean + scale.sd * model.mean_offsets()[0],
        })
    }

    fn centred(&self, data: &Dataset) -> Dataset {
        let mut out = data.clone();
        for o in &mut out.observations {
            o.mean -= self.mean;
        }
        out
    }

    fn single(&self, train: Dataset) -> Result<FittedModel> {
        let layout = HyperparamLayout::new(self.spatial.dim(), TaskStructure::single_task())?;
        FittedModel::new(train, HyperparamVector::pack(layout, &self.spatial, &[1.0], &[])?, StandardizeMode::None)
    }

    fn diagonal(&self, train: Dataset) -> Result<FittedModel> {
        FittedModel::new(train, two_task_hyper(&self.spatial, 0.0)?, StandardizeMode::None)
    }
}

/// Three learning curves over `n_T` for one online and one offline dataset:
/// inferred single-task, frozen offline kernel, and the two-task model.
/// With `force_diagonal` the two-task model uses the frozen kernel and a
/// diagonal task covariance.
pub fn kernel_transfer_curves(
    online: &Dataset,
    offline: &Dataset,
    n_t_grid: &[usize],
    cfg: &CurveConfig,
    force_diagonal: bool,
) -> Result<KernelTransferCurves> {
    cfg.validate()?;
    let online = online.pooled();
    let offline = offline.pooled();
    if online.dim != offline.dim {
        return Err(Error::DimensionMismatch { expected: online.dim, found: offline.dim });
    }
    let grid: Vec<(usize, usize)> = n_t_grid.iter().map(|&n| (n, 0)).collect();
    check_grid(&grid, online.len(), 0)?;
    if n_t_grid.contains(&0) {
        return Err(Error::InvalidConfig("n_T must be at least 1".into()));
    }
    let offline_fit = fit(&offline, &FitConfig::new(1, cfg.fit_restarts, derive_seed(cfg.seed, u64::MAX)))?;
    let frozen = FrozenKernel::from_fit(&offline_fit)?;
    let centred_online = frozen.centred(&online);
    let mut joint = online.clone();
    joint.observations.extend(offline.observations.iter().map(|o| Observation { task: OFFLINE_TASK, ..o.clone() }));
    let mut centred_joint = frozen.centred(&joint);
    centred_joint.outcome_name = online.outcome_name.clone();

    let all: Vec<usize> = (0..online.len()).collect();
    let offline_idx: Vec<usize> = (online.len()..joint.len()).collect();
    let per_rep = (0..cfg.replicates)
        .into_par_iter()
        .map(|r| {
            let rep_seed = derive_seed(cfg.seed, r as u64);
            n_t_grid
                .iter()
                .enumerate()
                .map(|(g, &n_t)| {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(rep_seed, g as u64));
                    let (train, test) = draw(&all, n_t, &mut rng);
                    let fit_seed = derive_seed(rep_seed, 0x100 + g as u64);
                    let a = fit_subset(&online.subset(&train), 1, cfg, fit_seed)?;
                    let a = held_out(&a, &online, &test)?;
                    let b = frozen.single(centred_online.subset(&train))?;
                    let b = held_out(&b, &centred_online, &test)?;
                    let with_offline = [train.clone(), offline_idx.clone()].concat();
                    let c = if force_diagonal {
                        let m = frozen.diagonal(centred_joint.subset(&with_offline))?;
                        held_out(&m, &centred_joint, &test)?
                    } else {
                        let m = fit_subset(&joint.subset(&with_offline), 2, cfg, derive_seed(fit_seed, 1))?;
                        held_out(&m, &joint, &test)?
                    };
                    Ok([a, b, c])
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let curve = |k: usize, n_s: usize| -> Vec<LearningCurvePoint> {
        n_t_grid
            .iter()
            .enumerate()
            .map(|(g, &n_t)| {
                let col: Vec<HeldOut> = per_rep.iter().map(|r| r[g][k]).collect();
                aggregate(n_t, n_s, &col)
            })
            .collect()
    };
    Ok(KernelTransferCurves {
        inferred: curve(0, 0),
        offline_kernel: curve(1, 0),
        multitask: curve(2, offline.len()),
        frozen_output_variance: frozen.spatial.output_variance(),
        frozen_lengthscales: frozen.spatial.lengthscales().to_vec(),
        frozen_mean: frozen.mean,
    })
}

// --- output -----------------------------------------------------------------

pub fn write_curve_csv<W: Write>(points: &[LearningCurvePoint], mut w: W) -> Result<()> {
    writeln!(w, "n_T,n_S,mean_mse,mse_se,mean_var,var_se")?;
    for p in points {
        writeln!(w, "{},{},{},{},{},{}", p.n_t, p.n_s, p.mean_mse, p.mse_se, p.mean_variance, p.variance_se)?;
    }
    Ok(())
}

pub fn write_single_curve_csv<W: Write>(curve: &SingleTaskCurve, mut w: W) -> Result<()> {
    writeln!(w, "n,mean_var,var_se")?;
    for p in &curve.points {
        writeln!(w, "{},{},{}", p.n, p.mean_variance, p.variance_se)?;
    }
    Ok(())
}

pub fn write_bound_csv<W: Write>(rows: &[BoundRow], mut w: W) -> Result<()> {
    writeln!(w, "n_T,n_S,empirical,bound")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.n_t, r.n_s, r.empirical, r.bound)?;
    }
    Ok(())
}

pub fn write_transfer_csv<W: Write>(curves: &KernelTransferCurves, mut w: W) -> Result<()> {
    writeln!(w, "model,n_T,n_S,mean_mse,mse_se,mean_var,var_se")?;
    for (name, points) in [
        ("inferred", &curves.inferred),
        ("offline_kernel", &curves.offline_kernel),
        ("multitask", &curves.multitask),
    ] {
        for p in points {
            writeln!(
                w,
                "{name},{},{},{},{},{},{}",
                p.n_t, p.n_s, p.mean_mse, p.mse_se, p.mean_variance, p.variance_se
            )?;
        }
    }
    Ok(())
}
