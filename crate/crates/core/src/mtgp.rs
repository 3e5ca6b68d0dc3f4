//! Multi-task GP regression with an ICM kernel: datasets, per-task
//! standardization, marginal-likelihood fitting, kriging posterior and
//! leave-one-out cross-validation.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{
    scaled_sq_dist, HyperparamLayout, HyperparamVector, SpatialHyperparams, TaskCovariance,
    TaskStructure,
};
use crate::optim::{self, LbfgsbConfig};
use crate::qmc::{derive_seed, ScrambledSobol};

/// Relative diagonal jitter added before factorization.
pub const BASE_JITTER: f64 = 1e-6;
/// Largest relative jitter tried before a factorization is declared failed.
pub const MAX_JITTER: f64 = 1e-2;

/// One noisy measurement of an outcome at a design point on a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Observation {
    #[serde(rename = "x")]
    pub point: Vec<f64>,
    pub task: usize,
    pub batch: usize,
    #[serde(rename = "y")]
    pub mean: f64,
    #[serde(rename = "noise_var")]
    pub noise_variance: f64,
}

impl Observation {
    pub fn new(point: Vec<f64>, task: usize, mean: f64, noise_variance: f64) -> Self {
        Self {
            point,
            task,
            batch: 0,
            mean,
            noise_variance,
        }
    }

    pub fn with_batch(mut self, batch: usize) -> Self {
        self.batch = batch;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Dataset {
    #[serde(rename = "outcome")]
    pub outcome_name: String,
    pub dim: usize,
    pub observations: Vec<Observation>,
}

impl Dataset {
    pub fn new(outcome_name: impl Into<String>, dim: usize) -> Self {
        Self {
            outcome_name: outcome_name.into(),
            dim,
            observations: Vec::new(),
        }
    }

    pub fn from_observations(
        outcome_name: impl Into<String>,
        dim: usize,
        observations: Vec<Observation>,
    ) -> Result<Self> {
        let ds = Self {
            outcome_name: outcome_name.into(),
            dim,
            observations,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn push(&mut self, obs: Observation) -> Result<()> {
        validate_observation(&obs, self.dim)?;
        self.observations.push(obs);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidDataset("zero dimension".into()));
        }
        self.observations
            .iter()
            .try_for_each(|o| validate_observation(o, self.dim))
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn num_tasks(&self) -> usize {
        self.observations.iter().map(|o| o.task + 1).max().unwrap_or(0)
    }

    pub fn task_indices(&self, task: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.observations[i].task == task)
            .collect()
    }

    pub fn task_count(&self, task: usize) -> usize {
        self.observations.iter().filter(|o| o.task == task).count()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            outcome_name: self.outcome_name.clone(),
            dim: self.dim,
            observations: indices.iter().map(|&i| self.observations[i].clone()).collect(),
        }
    }

    /// Observations of a single task, relabelled as task 0.
    pub fn single_task(&self, task: usize) -> Dataset {
        Dataset {
            outcome_name: self.outcome_name.clone(),
            dim: self.dim,
            observations: self
                .observations
                .iter()
                .filter(|o| o.task == task)
                .map(|o| Observation { task: 0, ..o.clone() })
                .collect(),
        }
    }

    /// All observations relabelled onto task 0.
    pub fn pooled(&self) -> Dataset {
        Dataset {
            outcome_name: self.outcome_name.clone(),
            dim: self.dim,
            observations: self
                .observations
                .iter()
                .map(|o| Observation { task: 0, ..o.clone() })
                .collect(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ds: Dataset = serde_json::from_str(text)?;
        ds.validate()?;
        Ok(ds)
    }
}

fn validate_observation(o: &Observation, dim: usize) -> Result<()> {
    if o.point.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: o.point.len(),
        });
    }
    if o.point.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::InvalidDataset(format!(
            "point {:?} outside the unit cube",
            o.point
        )));
    }
    if !(o.noise_variance >= 0.0 && o.noise_variance.is_finite()) {
        return Err(Error::InvalidDataset(format!(
            "noise variance {} must be nonnegative",
            o.noise_variance
        )));
    }
    if !o.mean.is_finite() {
        return Err(Error::InvalidDataset("non-finite observation".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskScale {
    pub mean: f64,
    pub sd: f64,
}

/// Per-task affine transform applied to observed means (and, squared, to noise).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    scales: Vec<TaskScale>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StandardizeMode {
    #[default]
    PerTask,
    None,
}

impl Standardization {
    pub fn identity(num_tasks: usize) -> Self {
        Self {
            scales: vec![TaskScale { mean: 0.0, sd: 1.0 }; num_tasks],
        }
    }

    /// Each task to mean 0 and unit sample standard deviation. Tasks with
    /// fewer than two observations, or no spread, keep unit scale.
    pub fn per_task(dataset: &Dataset, num_tasks: usize) -> Self {
        let scales = (0..num_tasks)
            .map(|t| {
                let ys: Vec<f64> = dataset
                    .observations
                    .iter()
                    .filter(|o| o.task == t)
                    .map(|o| o.mean)
                    .collect();
                if ys.is_empty() {
                    return TaskScale { mean: 0.0, sd: 1.0 };
                }
                let mean = ys.iter().sum::<f64>() / ys.len() as f64;
                let sd = if ys.len() > 1 {
                    (ys.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / (ys.len() - 1) as f64)
                        .sqrt()
                } else {
                    0.0
                };
                let sd = if sd > 1e-12 * mean.abs().max(1.0) { sd } else { 1.0 };
                TaskScale { mean, sd }
            })
            .collect();
        Self { scales }
    }

    pub fn from_mode(mode: StandardizeMode, dataset: &Dataset, num_tasks: usize) -> Self {
        match mode {
            StandardizeMode::PerTask => Self::per_task(dataset, num_tasks),
            StandardizeMode::None => Self::identity(num_tasks),
        }
    }

    pub fn scale(&self, task: usize) -> TaskScale {
        self.scales[task]
    }

    pub fn scales(&self) -> &[TaskScale] {
        &self.scales
    }
}

/// Standardized training arrays.
#[derive(Debug, Clone)]
pub(crate) struct Training {
    pub dim: usize,
    /// row-major `n × dim`
    pub x: Vec<f64>,
    pub tasks: Vec<usize>,
    pub y: Vec<f64>,
    pub noise: Vec<f64>,
}

impl Training {
    fn new(dataset: &Dataset, std: &Standardization) -> Self {
        let n = dataset.len();
        let mut x = Vec::with_capacity(n * dataset.dim);
        let mut tasks = Vec::with_capacity(n);
        let mut y = Vec::with_capacity(n);
        let mut noise = Vec::with_capacity(n);
        for o in &dataset.observations {
            let s = std.scale(o.task);
            x.extend_from_slice(&o.point);
            tasks.push(o.task);
            y.push((o.mean - s.mean) / s.sd);
            noise.push(o.noise_variance / (s.sd * s.sd));
        }
        Self {
            dim: dataset.dim,
            x,
            tasks,
            y,
            noise,
        }
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }
}

fn spatial_gram(train: &Training, spatial: &SpatialHyperparams) -> DMatrix<f64> {
    let n = train.len();
    let tau2 = spatial.output_variance();
    let ls = spatial.lengthscales();
    let mut kappa = DMatrix::zeros(n, n);
    for a in 0..n {
        kappa[(a, a)] = tau2;
        for b in 0..a {
            let v = tau2 * (-0.5 * scaled_sq_dist(train.point(a), train.point(b), ls)).exp();
            kappa[(a, b)] = v;
            kappa[(b, a)] = v;
        }
    }
    kappa
}

fn mean_prior_diagonal(train: &Training, spatial: &SpatialHyperparams, tasks: &TaskCovariance) -> f64 {
    let n = train.len().max(1) as f64;
    spatial.output_variance() * train.tasks.iter().map(|&t| tasks.get(t, t)).sum::<f64>() / n
}

struct Factorized {
    kappa: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    /// jitter relative to the mean prior diagonal
    relative_jitter: f64,
    jitter: f64,
}

fn factorize(
    train: &Training,
    spatial: &SpatialHyperparams,
    tasks: &TaskCovariance,
) -> Result<Factorized> {
    let n = train.len();
    let kappa = spatial_gram(train, spatial);
    let scale = mean_prior_diagonal(train, spatial, tasks);
    let base = DMatrix::from_fn(n, n, |a, b| {
        let v = tasks.get(train.tasks[a], train.tasks[b]) * kappa[(a, b)];
        if a == b {
            v + train.noise[a]
        } else {
            v
        }
    });
    let mut relative_jitter = BASE_JITTER;
    loop {
        let jitter = relative_jitter * scale;
        let mut k = base.clone();
        for a in 0..n {
            k[(a, a)] += jitter;
        }
        if let Some(chol) = Cholesky::new(k) {
            if chol.l_dirty().diagonal().iter().all(|d| d.is_finite() && *d > 0.0) {
                return Ok(Factorized {
                    kappa,
                    chol,
                    relative_jitter,
                    jitter,
                });
            }
        }
        if relative_jitter >= MAX_JITTER {
            return Err(Error::NotPositiveDefinite { jitter });
        }
        relative_jitter *= 10.0;
    }
}

/// Log marginal likelihood and its gradient for standardized training data.
/// Returns `(-∞, 0)` when the Gram matrix cannot be factorized.
pub(crate) fn lml_with_gradient(train: &Training, hv: &HyperparamVector) -> (f64, Vec<f64>) {
    let layout = *hv.layout();
    let reject = (f64::NEG_INFINITY, vec![0.0; layout.len()]);
    let spatial = hv.spatial();
    let tasks = hv.task_covariance();
    let offsets = hv.task_offsets();
    let Ok(fac) = factorize(train, &spatial, &tasks) else {
        return reject;
    };
    let n = train.len();
    let resid = DVector::from_fn(n, |a, _| train.y[a] - offsets[train.tasks[a]]);
    let alpha = fac.chol.solve(&resid);
    let log_det: f64 = fac.chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>() * 2.0;
    let value = -0.5 * resid.dot(&alpha) - 0.5 * log_det - 0.5 * n as f64 * (2.0 * PI).ln();
    if !value.is_finite() {
        return reject;
    }

    // W = ααᵀ - K⁻¹; every gradient entry is ½ tr(W ∂K).
    let kinv = fac.chol.inverse();
    let dim = layout.dim;
    let ls = spatial.lengthscales();
    let d_tasks = tasks.num_tasks();
    let mut grad = vec![0.0; layout.len()];
    let mut g_task = DMatrix::<f64>::zeros(d_tasks, d_tasks);
    let mut g_ls = vec![0.0; dim];
    let mut g_tau = 0.0;
    for a in 0..n {
        let ta = train.tasks[a];
        let pa = train.point(a);
        for b in 0..=a {
            let w = alpha[a] * alpha[b] - kinv[(a, b)];
            // off-diagonal pairs appear twice in the trace
            let mult = if a == b { 0.5 } else { 1.0 };
            let kab = fac.kappa[(a, b)];
            let tb = train.tasks[b];
            let bkw = mult * w * kab * tasks.get(ta, tb);
            g_tau += bkw;
            if a != b {
                let pb = train.point(b);
                for j in 0..dim {
                    let d = (pa[j] - pb[j]) / ls[j];
                    g_ls[j] += bkw * d * d;
                }
            }
            let gw = mult * w * kab;
            g_task[(ta, tb)] += 0.5 * gw;
            g_task[(tb, ta)] += 0.5 * gw;
        }
    }
    // the jitter tracks the mean prior diagonal, so it moves with τ² and B_dd
    let trace_w: f64 = (0..n).map(|a| alpha[a] * alpha[a] - kinv[(a, a)]).sum();
    let jitter_weight = 0.5 * trace_w * fac.relative_jitter;
    g_tau += jitter_weight * fac.jitter / fac.relative_jitter;
    let tau2 = spatial.output_variance();
    for &t in &train.tasks {
        g_task[(t, t)] += jitter_weight * tau2 / n as f64;
    }
    grad[0] = g_tau;
    grad[1..=dim].copy_from_slice(&g_ls);
    // ∂/∂F = (G + Gᵀ) F with G the gradient with respect to B
    let d_factor = (&g_task + g_task.transpose()) * tasks.factor();
    let tg = layout
        .structure
        .factor_gradient(hv.task_params(), &d_factor);
    grad[layout.task_range()].copy_from_slice(&tg);
    let off_range = layout.offset_range();
    for k in 0..off_range.len() {
        let task = layout.structure.offset_task(k);
        grad[off_range.start + k] = (0..n)
            .filter(|&a| train.tasks[a] == task)
            .map(|a| alpha[a])
            .sum();
    }
    (value, grad)
}

/// Log marginal likelihood of `dataset` (used as given, no standardization)
/// under hyperparameters `hv`, with its analytic gradient.
pub fn log_marginal_likelihood(dataset: &Dataset, hv: &HyperparamVector) -> (f64, Vec<f64>) {
    let std = Standardization::identity(hv.layout().structure.num_tasks());
    if dataset.num_tasks() > hv.layout().structure.num_tasks() || dataset.dim != hv.layout().dim {
        return (f64::NEG_INFINITY, vec![0.0; hv.layout().len()]);
    }
    lml_with_gradient(&Training::new(dataset, &std), hv)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitConfig {
    /// Rank of the task covariance factor when `structure` is not given.
    pub rank: usize,
    pub restarts: usize,
    pub seed: u64,
    #[serde(default)]
    pub standardize: StandardizeMode,
    #[serde(default)]
    pub structure: Option<TaskStructure>,
    #[serde(skip)]
    pub warm_starts: Vec<Vec<f64>>,
    #[serde(skip, default = "default_optimizer")]
    pub optimizer: LbfgsbConfig,
}

fn default_optimizer() -> LbfgsbConfig {
    LbfgsbConfig {
        max_iters: 150,
        pg_tol: 1e-5,
        f_rel_tol: 1e-9,
        ..LbfgsbConfig::default()
    }
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            rank: 2,
            restarts: 10,
            seed: 0,
            standardize: StandardizeMode::PerTask,
            structure: None,
            warm_starts: Vec::new(),
            optimizer: default_optimizer(),
        }
    }
}

impl FitConfig {
    pub fn new(rank: usize, restarts: usize, seed: u64) -> Self {
        Self {
            rank,
            restarts,
            seed,
            ..Self::default()
        }
    }

    pub fn with_structure(mut self, structure: TaskStructure) -> Self {
        self.structure = Some(structure);
        self
    }

    pub fn with_standardize(mut self, mode: StandardizeMode) -> Self {
        self.standardize = mode;
        self
    }

    pub fn with_warm_start(mut self, values: Vec<f64>) -> Self {
        self.warm_starts.push(values);
        self
    }

    pub fn resolve_structure(&self, dataset: &Dataset) -> TaskStructure {
        self.structure.unwrap_or_else(|| {
            let tasks = dataset.num_tasks().max(1);
            TaskStructure::LowRank {
                tasks,
                rank: self.rank.clamp(1, tasks),
            }
        })
    }
}

/// Hyperparameters, dataset and cached factorization for posterior queries.
#[derive(Debug, Clone)]
pub struct FittedModel {
    dataset: Dataset,
    hyper: HyperparamVector,
    spatial: SpatialHyperparams,
    tasks: TaskCovariance,
    offsets: Vec<f64>,
    standardization: Standardization,
    pub(crate) train: Training,
    pub(crate) chol: Cholesky<f64, Dyn>,
    pub(crate) alpha: DVector<f64>,
    jitter: f64,
    log_likelihood: f64,
}

/// Joint posterior over a list of `(task, point)` queries.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorPrediction {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl PosteriorPrediction {
    pub fn variance(&self, i: usize) -> f64 {
        self.covariance[(i, i)].max(0.0)
    }
}

impl FittedModel {
    /// Builds a model at fixed hyperparameters.
    pub fn new(dataset: Dataset, hyper: HyperparamVector, standardize: StandardizeMode) -> Result<Self> {
        dataset.validate()?;
        if dataset.is_empty() {
            return Err(Error::InvalidDataset("empty dataset".into()));
        }
        let layout = *hyper.layout();
        if layout.dim != dataset.dim {
            return Err(Error::DimensionMismatch {
                expected: layout.dim,
                found: dataset.dim,
            });
        }
        let num_tasks = layout.structure.num_tasks();
        if dataset.num_tasks() > num_tasks {
            return Err(Error::TaskOutOfRange {
                task: dataset.num_tasks() - 1,
                num_tasks,
            });
        }
        let standardization = Standardization::from_mode(standardize, &dataset, num_tasks);
        let train = Training::new(&dataset, &standardization);
        let spatial = hyper.spatial();
        let tasks = hyper.task_covariance();
        let offsets = hyper.task_offsets();
        let fac = factorize(&train, &spatial, &tasks)?;
        let resid = DVector::from_fn(train.len(), |a, _| train.y[a] - offsets[train.tasks[a]]);
        let alpha = fac.chol.solve(&resid);
        let (log_likelihood, _) = lml_with_gradient(&train, &hyper);
        Ok(Self {
            dataset,
            hyper,
            spatial,
            tasks,
            offsets,
            standardization,
            train,
            chol: fac.chol,
            alpha,
            jitter: fac.jitter,
            log_likelihood,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn hyperparameters(&self) -> &HyperparamVector {
        &self.hyper
    }

    pub fn spatial(&self) -> &SpatialHyperparams {
        &self.spatial
    }

    pub fn task_covariance(&self) -> &TaskCovariance {
        &self.tasks
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    /// Mean function on the standardized scale (zero for online/reference
    /// tasks, the fitted offset for later simulator batches).
    pub fn mean_offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_likelihood
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn num_tasks(&self) -> usize {
        self.tasks.num_tasks()
    }

    pub fn dim(&self) -> usize {
        self.dataset.dim
    }

    /// Normalized cross-task correlation `B_{dd'} / sqrt(B_{dd} B_{d'd'})`.
    pub fn inter_task_correlation(&self, d: usize, e: usize) -> Result<f64> {
        self.tasks.correlation(d, e)
    }

    /// Prior covariance between a training row and a query, standardized scale.
    #[inline]
    pub(crate) fn train_cross(&self, a: usize, task: usize, x: &[f64]) -> f64 {
        self.tasks.get(self.train.tasks[a], task)
            * self.spatial.output_variance()
            * (-0.5 * scaled_sq_dist(self.train.point(a), x, self.spatial.lengthscales())).exp()
    }

    #[inline]
    pub(crate) fn prior_cross(&self, t1: usize, x1: &[f64], t2: usize, x2: &[f64]) -> f64 {
        self.tasks.get(t1, t2)
            * self.spatial.output_variance()
            * (-0.5 * scaled_sq_dist(x1, x2, self.spatial.lengthscales())).exp()
    }

    fn check_queries(&self, queries: &[(usize, Vec<f64>)]) -> Result<()> {
        for (t, x) in queries {
            if x.len() != self.dim() {
                return Err(Error::DimensionMismatch {
                    expected: self.dim(),
                    found: x.len(),
                });
            }
            if *t >= self.num_tasks() {
                return Err(Error::TaskOutOfRange {
                    task: *t,
                    num_tasks: self.num_tasks(),
                });
            }
        }
        Ok(())
    }

    /// Posterior on the standardized scale of each query's task.
    pub fn posterior_standardized(&self, queries: &[(usize, Vec<f64>)]) -> Result<PosteriorPrediction> {
        self.check_queries(queries)?;
        let n = self.train.len();
        let q = queries.len();
        let kq = DMatrix::from_fn(n, q, |a, j| self.train_cross(a, queries[j].0, &queries[j].1));
        let mean = DVector::from_fn(q, |j, _| {
            self.offsets[queries[j].0] + kq.column(j).dot(&self.alpha)
        });
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&kq)
            .expect("cholesky factor has a positive diagonal");
        let vtv = v.transpose() * &v;
        let mut cov = DMatrix::from_fn(q, q, |i, j| {
            self.prior_cross(queries[i].0, &queries[i].1, queries[j].0, &queries[j].1) - vtv[(i, j)]
        });
        for i in 0..q {
            for j in 0..i {
                let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
                cov[(i, j)] = s;
                cov[(j, i)] = s;
            }
        }
        Ok(PosteriorPrediction {
            mean,
            covariance: cov,
        })
    }

    /// Kriging posterior mean and joint covariance on the original scale.
    pub fn posterior(&self, queries: &[(usize, Vec<f64>)]) -> Result<PosteriorPrediction> {
        let mut p = self.posterior_standardized(queries)?;
        let scales: Vec<TaskScale> = queries
            .iter()
            .map(|(t, _)| self.standardization.scale(*t))
            .collect();
        for (i, s) in scales.iter().enumerate() {
            p.mean[i] = s.mean + s.sd * p.mean[i];
        }
        for i in 0..queries.len() {
            for j in 0..queries.len() {
                p.covariance[(i, j)] *= scales[i].sd * scales[j].sd;
            }
        }
        Ok(p)
    }

    /// Same kernel, new data.
    pub fn refit_data(&self, dataset: Dataset) -> Result<Self> {
        let mode = if self.standardization.scales().iter().all(|s| s.mean == 0.0 && s.sd == 1.0) {
            StandardizeMode::None
        } else {
            StandardizeMode::PerTask
        };
        Self::new(dataset, self.hyper.clone(), mode)
    }

    /// Compact description for reports.
    pub fn summary(&self) -> ModelSummary {
        let b = self.tasks.matrix();
        let d = self.num_tasks();
        let mut correlations = Vec::new();
        for i in 0..d {
            for j in 0..i {
                if let Ok(r) = self.tasks.correlation(j, i) {
                    correlations.push(TaskCorrelation { task_a: j, task_b: i, rho: r });
                }
            }
        }
        ModelSummary {
            outcome: self.dataset.outcome_name.clone(),
            observations: self.dataset.len(),
            dim: self.dim(),
            num_tasks: d,
            structure: self.hyper.layout().structure,
            log_marginal_likelihood: self.log_likelihood,
            output_variance: self.spatial.output_variance(),
            lengthscales: self.spatial.lengthscales().to_vec(),
            task_covariance: (0..d).map(|i| (0..d).map(|j| b[(i, j)]).collect()).collect(),
            mean_offsets: self.offsets.clone(),
            correlations,
            standardization: self.standardization.clone(),
            hyperparameters: self.hyper.values().to_vec(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaskCorrelation {
    pub task_a: usize,
    pub task_b: usize,
    pub rho: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSummary {
    pub outcome: String,
    pub observations: usize,
    pub dim: usize,
    pub num_tasks: usize,
    pub structure: TaskStructure,
    pub log_marginal_likelihood: f64,
    pub output_variance: f64,
    pub lengthscales: Vec<f64>,
    pub task_covariance: Vec<Vec<f64>>,
    pub mean_offsets: Vec<f64>,
    pub correlations: Vec<TaskCorrelation>,
    pub standardization: Standardization,
    pub hyperparameters: Vec<f64>,
}

/// Starting box for randomized restarts.
fn start_box(layout: &HyperparamLayout) -> (Vec<f64>, Vec<f64>) {
    let mut lo = Vec::with_capacity(layout.len());
    let mut hi = Vec::with_capacity(layout.len());
    lo.push(0.2f64.ln());
    hi.push(5.0f64.ln());
    let ls_hi = (2.0 * (layout.dim as f64).sqrt()).ln();
    for _ in 0..layout.dim {
        lo.push(0.1f64.ln());
        hi.push(ls_hi);
    }
    match layout.structure {
        TaskStructure::LowRank { tasks, rank } => {
            for i in 0..tasks {
                for j in 0..=i.min(rank.min(tasks) - 1) {
                    if i == j || j == 0 {
                        lo.push(0.2);
                        hi.push(1.5);
                    } else {
                        lo.push(-1.0);
                        hi.push(1.0);
                    }
                }
            }
        }
        TaskStructure::BatchComposite { batches } => {
            lo.extend([0.2, -1.5, 0.1]);
            hi.extend([1.5, 1.5, 1.0]);
            for _ in 1..batches {
                lo.push(0.5);
                hi.push(1.5);
            }
            for _ in 1..batches {
                lo.push(-1.0);
                hi.push(1.0);
            }
        }
    }
    (lo, hi)
}

fn default_start(layout: &HyperparamLayout) -> Vec<f64> {
    let mut v = vec![0.0];
    v.extend(std::iter::repeat_n((0.3 * (layout.dim as f64).sqrt()).ln(), layout.dim));
    v.extend(layout.structure.default_task_params());
    v.extend(std::iter::repeat_n(0.0, layout.structure.num_offset_params()));
    v
}

/// Maximum-marginal-likelihood fit over `restarts` bounded quasi-Newton runs.
pub fn fit(dataset: &Dataset, config: &FitConfig) -> Result<FittedModel> {
    dataset.validate()?;
    if dataset.len() < 2 {
        return Err(Error::InvalidDataset("fit needs at least two observations".into()));
    }
    if config.rank == 0 {
        return Err(Error::InvalidConfig("rank must be at least 1".into()));
    }
    let structure = config.resolve_structure(dataset);
    let layout = HyperparamLayout::new(dataset.dim, structure)?;
    let num_tasks = structure.num_tasks();
    if dataset.num_tasks() > num_tasks {
        return Err(Error::TaskOutOfRange {
            task: dataset.num_tasks() - 1,
            num_tasks,
        });
    }
    let standardization = Standardization::from_mode(config.standardize, dataset, num_tasks);
    let train = Training::new(dataset, &standardization);

    let restarts = config.restarts.max(1);
    let mut starts: Vec<Vec<f64>> = config
        .warm_starts
        .iter()
        .filter(|w| w.len() == layout.len())
        .cloned()
        .collect();
    if starts.len() < restarts {
        starts.push(default_start(&layout));
    }
    let (slo, shi) = start_box(&layout);
    let seq = ScrambledSobol::new(layout.len(), derive_seed(config.seed, 0xf17));
    let mut k = 0;
    while starts.len() < restarts {
        starts.push(seq.points_in_box(k + 1, &slo, &shi).pop().expect("one point"));
        k += 1;
    }

    let lo = layout.lower_bounds();
    let hi = layout.upper_bounds();
    let runs: Vec<Option<(f64, Vec<f64>)>> = starts
        .par_iter()
        .map(|x0| {
            let objective = |x: &[f64], g: &mut [f64]| {
                let Ok(hv) = HyperparamVector::from_values(layout, x.to_vec()) else {
                    return f64::INFINITY;
                };
                let (v, grad) = lml_with_gradient(&train, &hv);
                for (gi, d) in g.iter_mut().zip(grad) {
                    *gi = -d;
                }
                -v
            };
            let m = optim::minimize(objective, x0, &lo, &hi, &config.optimizer);
            m.f.is_finite().then_some((-m.f, m.x))
        })
        .collect();

    let best = runs
        .into_iter()
        .flatten()
        .fold(None::<(f64, Vec<f64>)>, |acc, r| match acc {
            Some(a) if a.0 >= r.0 => Some(a),
            _ => Some(r),
        });
    let Some((_, values)) = best else {
        return Err(Error::FitFailed { restarts });
    };
    let hv = HyperparamVector::from_values(layout, values)?;
    FittedModel::new(dataset.clone(), hv, config.standardize)
}

/// One held-out prediction from leave-one-out cross-validation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LooFold {
    pub index: usize,
    pub predicted_mean: f64,
    pub predicted_variance: f64,
    pub actual: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LooResult {
    /// Folds on the original scale.
    pub folds: Vec<LooFold>,
    /// Mean squared error on the target task's standardized scale.
    pub mse: f64,
    pub target_task: usize,
}

/// Leave-one-out over the target task's observations; other tasks' data are
/// kept in every fold.
pub fn loo_cross_validation(dataset: &Dataset, target_task: usize, config: &FitConfig) -> Result<LooResult> {
    let targets = dataset.task_indices(target_task);
    if targets.len() < 3 {
        return Err(Error::InvalidDataset(format!(
            "target task {target_task} has {} observations, need at least 3",
            targets.len()
        )));
    }
    let full = fit(dataset, config)?;
    let structure = full.hyperparameters().layout().structure;
    let full_values = full.hyperparameters().values().to_vec();
    let scale = Standardization::per_task(dataset, dataset.num_tasks()).scale(target_task);

    let folds: Vec<Result<LooFold>> = targets
        .par_iter()
        .map(|&held| {
            let keep: Vec<usize> = (0..dataset.len()).filter(|&i| i != held).collect();
            let sub = dataset.subset(&keep);
            let cfg = FitConfig {
                structure: Some(structure),
                warm_starts: vec![full_values.clone()],
                seed: derive_seed(config.seed, held as u64 + 1),
                ..config.clone()
            };
            let model = fit(&sub, &cfg)?;
            let obs = &dataset.observations[held];
            let p = model.posterior(&[(target_task, obs.point.clone())])?;
            Ok(LooFold {
                index: held,
                predicted_mean: p.mean[0],
                predicted_variance: p.variance(0),
                actual: obs.mean,
            })
        })
        .collect();
    let folds = folds.into_iter().collect::<Result<Vec<_>>>()?;
    let mse = folds
        .iter()
        .map(|f| ((f.predicted_mean - f.actual) / scale.sd).powi(2))
        .sum::<f64>()
        / folds.len() as f64;
    Ok(LooResult {
        folds,
        mse,
        target_task,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::TaskStructure;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_task_layout(dim: usize) -> HyperparamLayout {
        HyperparamLayout::new(dim, TaskStructure::LowRank { tasks: 2, rank: 2 }).unwrap()
    }

    /// Two-task hyperparameters with B = [[b00, r],[r, b11]] given as its factor.
    fn hyper(dim: usize, tau2: f64, ls: f64, factor: [f64; 3]) -> HyperparamVector {
        let spatial = SpatialHyperparams::isotropic(dim, tau2, ls).unwrap();
        HyperparamVector::pack(two_task_layout(dim), &spatial, &factor, &[]).unwrap()
    }

    fn random_dataset(rng: &mut ChaCha8Rng, n: usize, dim: usize, tasks: usize, noise: f64) -> Dataset {
        let obs = (0..n)
            .map(|i| {
                let x: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
                Observation::new(x, i % tasks, rng.random_range(-2.0..2.0), noise)
            })
            .collect();
        Dataset::from_observations("y", dim, obs).unwrap()
    }

    fn dense_log_density(y: &[f64], k: &DMatrix<f64>) -> f64 {
        let n = y.len();
        let lu = k.clone().lu();
        let yv = DVector::from_column_slice(y);
        let sol = lu.solve(&yv).unwrap();
        -0.5 * yv.dot(&sol) - 0.5 * lu.determinant().ln() - 0.5 * n as f64 * (2.0 * PI).ln()
    }

    #[test]
    fn lml_of_single_standard_normal_observation() {
        let layout = HyperparamLayout::new(1, TaskStructure::single_task()).unwrap();
        let spatial = SpatialHyperparams::new(0.5, vec![0.2]).unwrap();
        let hv = HyperparamVector::pack(layout, &spatial, &[1.0], &[]).unwrap();
        let ds = Dataset::from_observations("y", 1, vec![Observation::new(vec![0.3], 0, 0.0, 0.5)]).unwrap();
        let (v, _) = log_marginal_likelihood(&ds, &hv);
        assert!((v + 0.918_938_533_204_672_7).abs() < 1e-6, "{v}");
    }

    #[test]
    fn lml_of_duplicated_point_matches_dense_density() {
        let layout = HyperparamLayout::new(1, TaskStructure::single_task()).unwrap();
        let spatial = SpatialHyperparams::new(1.0, vec![0.5]).unwrap();
        let hv = HyperparamVector::pack(layout, &spatial, &[1.0], &[]).unwrap();
        let obs = vec![
            Observation::new(vec![0.4], 0, 0.0, 1.0),
            Observation::new(vec![0.4], 0, 0.0, 1.0),
        ];
        let ds = Dataset::from_observations("y", 1, obs).unwrap();
        let (v, _) = log_marginal_likelihood(&ds, &hv);
        let k = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        assert!((v - dense_log_density(&[0.0, 0.0], &k)).abs() < 1e-5);
    }

    #[test]
    fn lml_matches_dense_oracle_with_jitter() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ds = random_dataset(&mut rng, 7, 2, 2, 0.05);
        let hv = hyper(2, 1.7, 0.4, [1.2, 0.5, 0.3]);
        let (v, _) = log_marginal_likelihood(&ds, &hv);
        let tasks = hv.task_covariance();
        let spatial = hv.spatial();
        let n = ds.len();
        let mut k = DMatrix::from_fn(n, n, |a, b| {
            let (oa, ob) = (&ds.observations[a], &ds.observations[b]);
            crate::kernels::icm_covariance(oa.task, &oa.point, ob.task, &ob.point, &tasks, &spatial).unwrap()
        });
        let jitter = 1e-6 * k.diagonal().mean();
        for a in 0..n {
            k[(a, a)] += ds.observations[a].noise_variance + jitter;
        }
        let y: Vec<f64> = ds.observations.iter().map(|o| o.mean).collect();
        assert_relative_eq!(v, dense_log_density(&y, &k), max_relative = 1e-10);
    }

    fn check_gradient(ds: &Dataset, hv: &HyperparamVector) {
        let (_, g) = log_marginal_likelihood(ds, hv);
        let h = 1e-5;
        for i in 0..g.len() {
            let mut up = hv.values().to_vec();
            let mut dn = up.clone();
            up[i] += h;
            dn[i] -= h;
            let fu = log_marginal_likelihood(ds, &HyperparamVector::from_values(*hv.layout(), up).unwrap()).0;
            let fd = log_marginal_likelihood(ds, &HyperparamVector::from_values(*hv.layout(), dn).unwrap()).0;
            let numeric = (fu - fd) / (2.0 * h);
            let err = (numeric - g[i]).abs() / numeric.abs().max(g[i].abs()).max(1e-3);
            assert!(err < 1e-4, "param {i}: analytic {} numeric {numeric}", g[i]);
        }
    }

    #[test]
    fn gradient_matches_finite_differences_low_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5 {
            let ds = random_dataset(&mut rng, 5, 3, 3, 0.1);
            let layout = HyperparamLayout::new(3, TaskStructure::LowRank { tasks: 3, rank: 2 }).unwrap();
            let values: Vec<f64> = (0..layout.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            check_gradient(&ds, &HyperparamVector::from_values(layout, values).unwrap());
        }
    }

    #[test]
    fn gradient_matches_finite_differences_batch_composite() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let ds = random_dataset(&mut rng, 9, 2, 4, 0.2);
        let layout = HyperparamLayout::new(2, TaskStructure::BatchComposite { batches: 3 }).unwrap();
        let values: Vec<f64> = (0..layout.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        check_gradient(&ds, &HyperparamVector::from_values(layout, values).unwrap());
    }

    #[test]
    fn failed_factorization_is_rejected() {
        // noiseless duplicates at full correlation cannot be rescued by jitter
        // unless it escalates, which it does; a NaN hyperparameter cannot
        let ds = Dataset::from_observations(
            "y",
            1,
            vec![Observation::new(vec![0.5], 0, 1.0, 0.0), Observation::new(vec![0.5], 0, 1.0, 0.0)],
        )
        .unwrap();
        let layout = HyperparamLayout::new(1, TaskStructure::single_task()).unwrap();
        let hv = HyperparamVector::from_values(layout, vec![0.0, 0.0, 1.0]).unwrap();
        assert!(log_marginal_likelihood(&ds, &hv).0.is_finite());
        let zero_task = HyperparamVector::from_values(layout, vec![0.0, 0.0, 0.0]).unwrap();
        assert_eq!(log_marginal_likelihood(&ds, &zero_task).0, f64::NEG_INFINITY);
    }

    #[test]
    fn noiseless_interpolation_and_prior_reversion() {
        let hv = hyper(1, 1.0, 0.1, [1.0, 0.0, 1.0]);
        let ds = Dataset::from_observations("y", 1, vec![Observation::new(vec![0.0], 0, 0.7, 0.0)]).unwrap();
        let m = FittedModel::new(ds, hv, StandardizeMode::None).unwrap();
        let p = m.posterior(&[(0, vec![0.0]), (0, vec![1.0])]).unwrap();
        assert!((p.mean[0] - 0.7).abs() < 1e-5);
        assert!(p.variance(0) <= 1e-6);
        assert!(p.mean[1].abs() < 1e-10);
        assert!((p.variance(1) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn posterior_matches_direct_conditioning() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ds = random_dataset(&mut rng, 3, 2, 2, 0.3);
        let hv = hyper(2, 1.3, 0.5, [1.0, 0.8, 0.5]);
        let model = FittedModel::new(ds.clone(), hv.clone(), StandardizeMode::None).unwrap();
        let queries = vec![(0, vec![0.2, 0.9]), (1, vec![0.6, 0.1])];
        let p = model.posterior(&queries).unwrap();

        let tasks = hv.task_covariance();
        let spatial = hv.spatial();
        let mut all: Vec<(usize, Vec<f64>)> = ds.observations.iter().map(|o| (o.task, o.point.clone())).collect();
        all.extend(queries.iter().cloned());
        let joint = DMatrix::from_fn(5, 5, |i, j| {
            crate::kernels::icm_covariance(all[i].0, &all[i].1, all[j].0, &all[j].1, &tasks, &spatial).unwrap()
        });
        let mut koo = joint.view((0, 0), (3, 3)).into_owned();
        let jitter = 1e-6 * koo.diagonal().mean();
        for i in 0..3 {
            koo[(i, i)] += 0.3 + jitter;
        }
        let kqo = joint.view((3, 0), (2, 3)).into_owned();
        let kqq = joint.view((3, 3), (2, 2)).into_owned();
        let y = DVector::from_iterator(3, ds.observations.iter().map(|o| o.mean));
        let lu = koo.lu();
        let mean = &kqo * lu.solve(&y).unwrap();
        let cov = kqq - &kqo * lu.solve(&kqo.transpose()).unwrap();
        for i in 0..2 {
            assert!((p.mean[i] - mean[i]).abs() < 1e-8);
            for j in 0..2 {
                assert!((p.covariance[(i, j)] - cov[(i, j)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn perfectly_correlated_tasks_pool_the_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let ds = random_dataset(&mut rng, 8, 2, 2, 0.2);
        let mt = FittedModel::new(ds.clone(), hyper(2, 1.0, 0.3, [1.0, 1.0, 0.0]), StandardizeMode::None).unwrap();
        let layout = HyperparamLayout::new(2, TaskStructure::single_task()).unwrap();
        let spatial = SpatialHyperparams::isotropic(2, 1.0, 0.3).unwrap();
        let st_hv = HyperparamVector::pack(layout, &spatial, &[1.0], &[]).unwrap();
        let st = FittedModel::new(ds.pooled(), st_hv, StandardizeMode::None).unwrap();
        let q = vec![0.3, 0.55];
        let a = mt.posterior(&[(0, q.clone())]).unwrap();
        let b = st.posterior(&[(0, q)]).unwrap();
        assert!((a.mean[0] - b.mean[0]).abs() < 1e-8);
        assert!((a.covariance[(0, 0)] - b.covariance[(0, 0)]).abs() < 1e-8);
    }

    #[test]
    fn independent_tasks_ignore_the_secondary_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let ds = random_dataset(&mut rng, 8, 2, 2, 0.2);
        let mt = FittedModel::new(ds.clone(), hyper(2, 1.0, 0.3, [1.0, 0.0, 1.0]), StandardizeMode::None).unwrap();
        let layout = HyperparamLayout::new(2, TaskStructure::single_task()).unwrap();
        let spatial = SpatialHyperparams::isotropic(2, 1.0, 0.3).unwrap();
        let st_hv = HyperparamVector::pack(layout, &spatial, &[1.0], &[]).unwrap();
        let st = FittedModel::new(ds.single_task(0), st_hv, StandardizeMode::None).unwrap();
        let q = vec![0.8, 0.15];
        let a = mt.posterior(&[(0, q.clone())]).unwrap();
        let b = st.posterior(&[(0, q)]).unwrap();
        assert!((a.mean[0] - b.mean[0]).abs() < 1e-8);
        assert!((a.covariance[(0, 0)] - b.covariance[(0, 0)]).abs() < 1e-8);
    }

    #[test]
    fn covariance_ignores_observed_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ds = random_dataset(&mut rng, 6, 2, 2, 0.1);
        let mut altered = ds.clone();
        altered.observations.iter_mut().for_each(|o| o.mean = rng.random_range(-5.0..5.0));
        let hv = hyper(2, 0.8, 0.35, [1.0, 0.6, 0.7]);
        let q = vec![(0, vec![0.1, 0.2]), (1, vec![0.9, 0.4])];
        let a = FittedModel::new(ds, hv.clone(), StandardizeMode::None).unwrap().posterior(&q).unwrap();
        let b = FittedModel::new(altered, hv, StandardizeMode::None).unwrap().posterior(&q).unwrap();
        assert_eq!(a.covariance, b.covariance);
    }

    #[test]
    fn adding_data_never_increases_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ds = random_dataset(&mut rng, 10, 2, 2, 0.05);
        let hv = hyper(2, 1.0, 0.25, [1.0, 0.7, 0.5]);
        let q = vec![(0, vec![0.45, 0.6])];
        let mut last = f64::INFINITY;
        for n in 1..=ds.len() {
            let idx: Vec<usize> = (0..n).collect();
            let m = FittedModel::new(ds.subset(&idx), hv.clone(), StandardizeMode::None).unwrap();
            let v = m.posterior(&q).unwrap().variance(0);
            assert!(v <= last + 1e-12, "n={n}: {v} > {last}");
            last = v;
        }
    }

    #[test]
    fn correlation_examples() {
        let ds = Dataset::from_observations("y", 1, vec![Observation::new(vec![0.5], 0, 0.0, 0.1)]).unwrap();
        let m = FittedModel::new(ds, hyper(1, 1.0, 0.3, [2.0, 0.6, 0.8]), StandardizeMode::None).unwrap();
        assert_relative_eq!(m.inter_task_correlation(0, 1).unwrap(), 0.6, epsilon = 1e-12);
    }

    #[test]
    fn standardization_scales_noise_and_guards_constant_tasks() {
        let obs = vec![
            Observation::new(vec![0.1], 0, 1.0, 0.5),
            Observation::new(vec![0.2], 0, 3.0, 0.5),
            Observation::new(vec![0.3], 1, 7.0, 0.5),
        ];
        let ds = Dataset::from_observations("y", 1, obs).unwrap();
        let s = Standardization::per_task(&ds, 2);
        assert_relative_eq!(s.scale(0).mean, 2.0);
        assert_relative_eq!(s.scale(0).sd, 2f64.sqrt());
        assert_eq!(s.scale(1), TaskScale { mean: 7.0, sd: 1.0 });
        let t = Training::new(&ds, &s);
        assert_relative_eq!(t.noise[0], 0.25);
    }

    #[test]
    fn dataset_json_round_trip_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ds = random_dataset(&mut rng, 5, 3, 2, 0.123456789);
        let text = ds.to_json().unwrap();
        assert!(text.contains("\"noise_var\"") && text.contains("\"outcome\""));
        let back = Dataset::from_json(&text).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn invalid_observations_are_rejected() {
        let mut ds = Dataset::new("y", 2);
        assert!(matches!(
            ds.push(Observation::new(vec![0.1], 0, 0.0, 0.0)),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(ds.push(Observation::new(vec![0.1, 1.5], 0, 0.0, 0.0)).is_err());
        assert!(ds.push(Observation::new(vec![0.1, 0.5], 0, 0.0, -1.0)).is_err());
        assert!(ds.push(Observation::new(vec![0.1, 0.5], 0, 0.0, 0.0)).is_ok());
    }

    #[test]
    fn query_errors() {
        let ds = Dataset::from_observations("y", 1, vec![Observation::new(vec![0.5], 0, 0.0, 0.1)]).unwrap();
        let m = FittedModel::new(ds, hyper(1, 1.0, 0.3, [1.0, 0.0, 1.0]), StandardizeMode::None).unwrap();
        assert!(matches!(m.posterior(&[(0, vec![0.1, 0.2])]), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(m.posterior(&[(2, vec![0.1])]), Err(Error::TaskOutOfRange { .. })));
    }

    #[test]
    fn fit_is_deterministic_and_improves_on_the_default_start() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let ds = random_dataset(&mut rng, 12, 2, 2, 0.05);
        let cfg = FitConfig::new(2, 4, 99);
        let a = fit(&ds, &cfg).unwrap();
        let b = fit(&ds, &cfg).unwrap();
        assert_eq!(a.hyperparameters(), b.hyperparameters());
        let std = Standardization::per_task(&ds, 2);
        let train = Training::new(&ds, &std);
        let layout = *a.hyperparameters().layout();
        let start = HyperparamVector::from_values(layout, default_start(&layout)).unwrap();
        assert!(a.log_marginal_likelihood() >= lml_with_gradient(&train, &start).0);
    }

    #[test]
    fn fit_rejects_tiny_datasets() {
        let ds = Dataset::from_observations("y", 1, vec![Observation::new(vec![0.5], 0, 0.0, 0.1)]).unwrap();
        assert!(fit(&ds, &FitConfig::default()).is_err());
    }

    #[test]
    fn loo_on_constant_target() {
        let obs = (0..5)
            .map(|i| Observation::new(vec![i as f64 / 4.0], 0, 3.5, 0.0))
            .collect();
        let ds = Dataset::from_observations("y", 1, obs).unwrap();
        let r = loo_cross_validation(&ds, 0, &FitConfig::new(1, 2, 0)).unwrap();
        assert!(r.mse <= 0.1);
        for f in &r.folds {
            assert!((f.predicted_mean - 3.5).abs() <= 2.0 * f.predicted_variance.sqrt() + 1e-9);
        }
    }
}
