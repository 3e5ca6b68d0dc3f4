//! Constrained Hartmann-6 benchmark with a biased offline channel, and the
//! three-method comparison harness.

use std::io::Write;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::CandidateConfig;
use crate::bo_loop::{run_loop, BatchKind, Channel, Evaluation, LoopConfig, LoopVariant, OptimizationTrace, Problem};
use crate::error::{Error, Result};
use crate::mtgp::StandardizeMode;

const ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const A: [[f64; 6]; 4] = [
    [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
    [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
    [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
    [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
];
const P: [[f64; 6]; 4] = [
    [0.1312, 0.1696, 0.5569, 0.0124, 0.8283, 0.5886],
    [0.2329, 0.4135, 0.8307, 0.3736, 0.1004, 0.9991],
    [0.2348, 0.1451, 0.3522, 0.2883, 0.3047, 0.6650],
    [0.4047, 0.8828, 0.8732, 0.5743, 0.1091, 0.0381],
];

pub const HARTMANN6_MINIMIZER: [f64; 6] = [0.20169, 0.150011, 0.476874, 0.275332, 0.311652, 0.6573];
pub const HARTMANN6_MINIMUM: f64 = -3.32237;

/// Hartmann-6 on the unit cube.
pub fn hartmann6(x: &[f64]) -> Result<f64> {
    if x.len() != 6 {
        return Err(Error::DimensionMismatch { expected: 6, found: x.len() });
    }
    if x.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::OutOfDomain(format!("{x:?} outside [0,1]^6")));
    }
    Ok(hartmann6_unchecked(x))
}

pub(crate) fn hartmann6_unchecked(x: &[f64]) -> f64 {
    -ALPHA
        .iter()
        .zip(A.iter().zip(&P))
        .map(|(alpha, (a, p))| {
            let e: f64 = (0..6).map(|j| a[j] * (x[j] - p[j]).powi(2)).sum();
            alpha * (-e).exp()
        })
        .sum::<f64>()
}

/// Piecewise-linear hinge: slope `alpha1` below `m`, `alpha2` above, fixed point at `m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasTransform {
    pub m: f64,
    pub alpha1: f64,
    pub alpha2: f64,
}

impl BiasTransform {
    pub const OBJECTIVE: Self = Self { m: 0.75, alpha1: 0.4, alpha2: 0.8 };
    pub const CONSTRAINT: Self = Self { m: 1.25, alpha1: 0.8, alpha2: 4.0 };

    pub fn apply(&self, v: f64) -> f64 {
        offline_transform(v, self)
    }
}

pub fn offline_transform(v: f64, t: &BiasTransform) -> f64 {
    if v <= t.m {
        t.alpha1 * (v - t.m) + t.m
    } else {
        t.alpha2 * (v - t.m) + t.m
    }
}

/// Minimize Hartmann-6 subject to `‖x‖₂ ≤ threshold`; the offline channel
/// sees both outcomes through bias transforms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HartmannProblem {
    pub noise_sd: f64,
    pub threshold: f64,
    pub objective_transform: BiasTransform,
    pub constraint_transform: BiasTransform,
}

impl Default for HartmannProblem {
    fn default() -> Self {
        Self {
            noise_sd: 0.1,
            threshold: 1.25,
            objective_transform: BiasTransform::OBJECTIVE,
            constraint_transform: BiasTransform::CONSTRAINT,
        }
    }
}

impl HartmannProblem {
    pub fn constraint_norm(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_feasible(&self, x: &[f64]) -> bool {
        Self::constraint_norm(x) <= self.threshold
    }

    /// Noiseless `(f, g)` on a channel, in the problem's own sense (minimize f, g ≤ threshold).
    pub fn raw_values(&self, x: &[f64], channel: Channel) -> Result<(f64, f64)> {
        let f = hartmann6(x)?;
        let g = Self::constraint_norm(x);
        Ok(match channel {
            Channel::Online => (f, g),
            Channel::Offline => (self.objective_transform.apply(f), self.constraint_transform.apply(g)),
        })
    }
}

impl Problem for HartmannProblem {
    fn dim(&self) -> usize {
        6
    }

    fn num_constraints(&self) -> usize {
        1
    }

    fn outcome_names(&self) -> Vec<String> {
        vec!["neg_hartmann6".into(), "norm_slack".into()]
    }

    fn evaluate(&self, x: &[f64], channel: Channel, rng: &mut ChaCha8Rng) -> Result<Evaluation> {
        let (f, g) = self.raw_values(x, channel)?;
        let (ef, eg) = if self.noise_sd > 0.0 {
            let n = Normal::new(0.0, self.noise_sd).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            (n.sample(rng), n.sample(rng))
        } else {
            (0.0, 0.0)
        };
        let var = self.noise_sd * self.noise_sd;
        Ok(Evaluation {
            // maximize -f subject to threshold - g ≥ 0
            values: vec![-(f + ef), self.threshold - (g + eg)],
            noise_variances: vec![var, var],
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    SingleTask,
    MtgpInitOnly,
    MtgpFull,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::SingleTask, Method::MtgpInitOnly, Method::MtgpFull];

    pub fn name(&self) -> &'static str {
        match self {
            Method::SingleTask => "single_task",
            Method::MtgpInitOnly => "mtgp_init_only",
            Method::MtgpFull => "mtgp_full",
        }
    }

    fn variant(&self) -> LoopVariant {
        match self {
            Method::SingleTask => LoopVariant::OnlineOnly,
            Method::MtgpInitOnly => LoopVariant::InitOnly,
            Method::MtgpFull => LoopVariant::Interleaved,
        }
    }
}

/// Benchmark settings; `batches` counts online batches including the initial one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    pub methods: Vec<Method>,
    pub replicates: usize,
    #[serde(alias = "n_T")]
    pub n_t: usize,
    #[serde(alias = "n_S")]
    pub n_s: usize,
    pub n_o: usize,
    pub batches: usize,
    pub noise_sd: f64,
    pub threshold: f64,
    pub objective_transform: BiasTransform,
    pub constraint_transform: BiasTransform,
    pub anchor_count: usize,
    pub rank_batch: usize,
    pub seed: u64,
    pub fit_restarts: usize,
    pub qmc_samples: usize,
    pub thompson_draws: usize,
    pub candidates: CandidateConfig,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            replicates: 30,
            n_t: 5,
            n_s: 20,
            n_o: 20,
            batches: 4,
            noise_sd: 0.1,
            threshold: 1.25,
            objective_transform: BiasTransform::OBJECTIVE,
            constraint_transform: BiasTransform::CONSTRAINT,
            anchor_count: 5,
            rank_batch: 1,
            seed: 0,
            fit_restarts: 3,
            qmc_samples: 64,
            thompson_draws: 1000,
            candidates: CandidateConfig::default(),
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidConfig("replicates must be at least 1".into()));
        }
        if self.batches == 0 {
            return Err(Error::InvalidConfig("batches must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidConfig("no methods selected".into()));
        }
        if self.noise_sd < 0.0 {
            return Err(Error::InvalidConfig("noise_sd must be nonnegative".into()));
        }
        self.loop_config(Method::MtgpFull, 0).validate()
    }

    pub fn problem(&self) -> HartmannProblem {
        HartmannProblem {
            noise_sd: self.noise_sd,
            threshold: self.threshold,
            objective_transform: self.objective_transform,
            constraint_transform: self.constraint_transform,
        }
    }

    pub fn loop_config(&self, method: Method, replicate: usize) -> LoopConfig {
        LoopConfig {
            n_t: self.n_t,
            n_s: self.n_s,
            n_o: self.n_o,
            iterations: self.batches - 1,
            anchor_count: self.anchor_count,
            rank_batch: self.rank_batch,
            variant: method.variant(),
            seed: self.seed.wrapping_add(replicate as u64),
            fit_restarts: self.fit_restarts,
            qmc_samples: self.qmc_samples,
            thompson_draws: self.thompson_draws,
            candidates: self.candidates,
            kernel: crate::bo_loop::KernelMode::Infer,
            standardize: StandardizeMode::PerTask,
            warm_start: true,
        }
    }
}

/// Value reported before any truly feasible point has been observed online.
/// Hartmann-6 is negative everywhere, so this is worse than any feasible value.
pub const NO_FEASIBLE_VALUE: f64 = 0.0;

/// Best true (noiseless) feasible objective among online points after each online batch.
pub fn best_feasible_curve(problem: &HartmannProblem, trace: &OptimizationTrace) -> Vec<f64> {
    let mut best = f64::INFINITY;
    trace
        .records
        .iter()
        .filter(|r| r.kind == BatchKind::Online)
        .map(|r| {
            for p in &r.policies {
                if problem.is_feasible(p) {
                    best = best.min(hartmann6_unchecked(p));
                }
            }
            if best.is_finite() {
                best
            } else {
                NO_FEASIBLE_VALUE
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: usize,
    pub online_observations: usize,
    pub mean: f64,
    pub two_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    /// `curves[r][i]`: replicate `r`, online batch `i`.
    pub curves: Vec<Vec<f64>>,
    pub replicates: Vec<usize>,
    pub summary: Vec<IterationSummary>,
}

impl MethodResult {
    pub fn final_mean(&self) -> f64 {
        self.summary.last().map_or(f64::NAN, |s| s.mean)
    }

    pub fn final_se(&self) -> f64 {
        self.summary.last().map_or(f64::NAN, |s| s.two_se / 2.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonResult {
    pub methods: Vec<MethodResult>,
    pub failures: Vec<ReplicateFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFailure {
    pub method: Method,
    pub replicate: usize,
    pub error: String,
}

/// Mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

impl ComparisonResult {
    pub fn method(&self, m: Method) -> Option<&MethodResult> {
        self.methods.iter().find(|r| r.method == m)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "method,replicate,iteration,best_feasible")?;
        for m in &self.methods {
            for (curve, rep) in m.curves.iter().zip(&m.replicates) {
                for (i, v) in curve.iter().enumerate() {
                    writeln!(w, "{},{},{},{}", m.method.name(), rep, i, v)?;
                }
            }
        }
        Ok(())
    }

    pub fn summary_json(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Summary<'a> {
            method: Method,
            replicates: usize,
            iterations: &'a [IterationSummary],
        }
        #[derive(Serialize)]
        struct Doc<'a> {
            methods: Vec<Summary<'a>>,
            failures: &'a [ReplicateFailure],
        }
        let doc = Doc {
            methods: self
                .methods
                .iter()
                .map(|m| Summary {
                    method: m.method,
                    replicates: m.curves.len(),
                    iterations: &m.summary,
                })
                .collect(),
            failures: &self.failures,
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }
}

/// Runs every method on every replicate. Replicate `r` uses seed `seed + r`
/// for all methods, so they share the initial online batch.
pub fn run_comparison(config: &BenchmarkConfig) -> Result<ComparisonResult> {
    config.validate()?;
    let problem = config.problem();
    let jobs: Vec<(Method, usize)> = config
        .methods
        .iter()
        .flat_map(|&m| (0..config.replicates).map(move |r| (m, r)))
        .collect();
    let outcomes: Vec<(Method, usize, Result<Vec<f64>>)> = jobs
        .par_iter()
        .map(|&(m, r)| {
            let res = run_loop(&problem, &config.loop_config(m, r)).and_then(|t| match t.error {
                Some(e) => Err(Error::AcquisitionFailed(e)),
                None => Ok(best_feasible_curve(&problem, &t)),
            });
            (m, r, res)
        })
        .collect();

    let mut failures = Vec::new();
    let mut methods = Vec::new();
    for &m in &config.methods {
        let mut curves = Vec::new();
        let mut replicates = Vec::new();
        for (mm, r, res) in &outcomes {
            if *mm != m {
                continue;
            }
            match res {
                Ok(c) => {
                    curves.push(c.clone());
                    replicates.push(*r);
                }
                Err(e) => failures.push(ReplicateFailure { method: m, replicate: *r, error: e.to_string() }),
            }
        }
        let iterations = curves.first().map_or(0, |c| c.len());
        let summary = (0..iterations)
            .map(|i| {
                let col: Vec<f64> = curves.iter().map(|c| c[i]).collect();
                let (mean, se) = mean_and_se(&col);
                IterationSummary {
                    iteration: i,
                    online_observations: config.n_t * (i + 1),
                    mean,
                    two_se: 2.0 * se,
                }
            })
            .collect();
        methods.push(MethodResult { method: m, curves, replicates, summary });
    }
    let total = jobs.len();
    if !failures.is_empty() {
        for f in &failures {
            log::warn!("{} replicate {} failed: {}", f.method.name(), f.replicate, f.error);
        }
        if failures.len() * 10 >= total {
            return Err(Error::ReplicatesFailed { failed: failures.len(), total });
        }
    }
    Ok(ComparisonResult { methods, failures })
}
