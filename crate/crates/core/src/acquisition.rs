//! Constrained noisy expected improvement by quasi-Monte-Carlo integration,
//! sequential-greedy batch generation and Thompson-sampling selection.
//!
//! Every model is queried at the online task. For a conditioning set `C`
//! (observed online points plus pending candidates) the joint posterior of
//! each outcome at `C` is sampled with fixed base normals; the value at `x`
//! averages the closed-form constrained EI of `x` conditioned on each sample.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::scaled_sq_dist;
use crate::mtgp::FittedModel;
use crate::optim::{self, LbfgsbConfig};
use crate::qmc::{derive_seed, norm_cdf, norm_pdf, norm_ppf, ScrambledSobol};
use crate::synthetic::psd_factor;

/// Objective and constraint models; a constraint is satisfied when its value is ≥ 0.
#[derive(Debug, Clone)]
pub struct ModelSet {
    pub objective: FittedModel,
    pub constraints: Vec<FittedModel>,
    pub online_task: usize,
}

impl ModelSet {
    pub fn new(objective: FittedModel, constraints: Vec<FittedModel>) -> Result<Self> {
        for c in &constraints {
            if c.dim() != objective.dim() {
                return Err(Error::DimensionMismatch {
                    expected: objective.dim(),
                    found: c.dim(),
                });
            }
            if c.num_tasks() != objective.num_tasks() {
                return Err(Error::InvalidConfig(
                    "objective and constraint models must share a task set".into(),
                ));
            }
        }
        Ok(Self {
            objective,
            constraints,
            online_task: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.objective.dim()
    }

    fn all(&self) -> impl Iterator<Item = &FittedModel> {
        std::iter::once(&self.objective).chain(self.constraints.iter())
    }

    fn count(&self) -> usize {
        1 + self.constraints.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QmcConfig {
    pub sample_count: usize,
    pub seed: u64,
}

impl Default for QmcConfig {
    fn default() -> Self {
        Self {
            sample_count: 64,
            seed: 0,
        }
    }
}

impl QmcConfig {
    pub fn new(sample_count: usize, seed: u64) -> Result<Self> {
        let cfg = Self { sample_count, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_count < 8 {
            return Err(Error::InvalidConfig(format!(
                "qmc sample_count {} below 8",
                self.sample_count
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcquisitionValue {
    pub value: f64,
    pub per_sample: Vec<f64>,
}

/// Base jitter for noiseless conditioning, relative to each diagonal entry.
const CONDITIONING_JITTER: f64 = 1e-9;
const MAX_CONDITIONING_JITTER: f64 = 1e-3;

/// Precomputed posterior of one outcome over the conditioning set.
#[derive(Debug, Clone)]
struct OutcomePlan {
    /// standardized-scale `K⁻¹ K(X, C)`
    weights: DMatrix<f64>,
    /// raw-scale lower factor of the posterior covariance at `C`
    factor: DMatrix<f64>,
    /// raw-scale posterior draws at `C`, one row per sample
    draws: DMatrix<f64>,
    mean_shift: f64,
    sd: f64,
}

/// Posterior moments at a query, with derivatives with respect to the query.
struct QueryMoments {
    mean: Vec<f64>,
    variance: f64,
    d_mean: DMatrix<f64>,
    d_variance: Vec<f64>,
}

/// Conditioning set, base samples and per-sample incumbents for one
/// candidate-generation call.
#[derive(Debug, Clone)]
pub struct NeiPlan<'a> {
    models: &'a ModelSet,
    points: Vec<Vec<f64>>,
    base: Vec<DMatrix<f64>>,
    outcomes: Vec<OutcomePlan>,
    incumbents: Vec<Option<f64>>,
    samples: usize,
    seed: u64,
    jitter: f64,
}

impl<'a> NeiPlan<'a> {
    pub fn new(models: &'a ModelSet, online_points: &[Vec<f64>], qmc: &QmcConfig) -> Result<Self> {
        qmc.validate()?;
        if online_points.is_empty() {
            return Err(Error::InvalidDataset("no online points to condition on".into()));
        }
        for p in online_points {
            if p.len() != models.dim() {
                return Err(Error::DimensionMismatch {
                    expected: models.dim(),
                    found: p.len(),
                });
            }
        }
        let mut plan = Self {
            models,
            points: online_points.to_vec(),
            base: Vec::new(),
            outcomes: Vec::new(),
            incumbents: Vec::new(),
            samples: qmc.sample_count,
            seed: qmc.seed,
            jitter: CONDITIONING_JITTER,
        };
        plan.rebuild()?;
        Ok(plan)
    }

    pub fn conditioning_points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// Adds a pending point whose values are fantasized from the current draws.
    pub fn add_pending(&mut self, point: Vec<f64>) -> Result<()> {
        self.points.push(point);
        self.rebuild()
    }

    fn rebuild(&mut self) -> Result<()> {
        let c = self.points.len();
        // one sequence per outcome, one dimension per conditioning point, so
        // existing columns are unchanged as points are appended
        self.base = (0..self.models.count())
            .map(|k| {
                let seq = ScrambledSobol::new(c, derive_seed(self.seed, k as u64));
                DMatrix::from_fn(self.samples, c, |s, i| norm_ppf(seq.coordinate(s, i)))
            })
            .collect();
        let task = self.models.online_task;
        loop {
            let built: Result<Vec<OutcomePlan>> = self
                .models
                .all()
                .zip(&self.base)
                .map(|(model, z)| outcome_plan(model, task, &self.points, z, self.jitter))
                .collect();
            match built {
                Ok(outcomes) => {
                    self.outcomes = outcomes;
                    break;
                }
                Err(Error::NotPositiveDefinite { .. }) if self.jitter < MAX_CONDITIONING_JITTER => {
                    self.jitter *= 10.0;
                }
                Err(e) => return Err(e),
            }
        }
        self.incumbents = (0..self.samples)
            .map(|s| {
                (0..c)
                    .filter(|&i| self.outcomes[1..].iter().all(|o| o.draws[(s, i)] >= 0.0))
                    .map(|i| self.outcomes[0].draws[(s, i)])
                    .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
            })
            .collect();
        Ok(())
    }

    fn moments(&self, k: usize, x: &[f64], with_grad: bool) -> QueryMoments {
        let model = if k == 0 {
            &self.models.objective
        } else {
            &self.models.constraints[k - 1]
        };
        let plan = &self.outcomes[k];
        let task = self.models.online_task;
        let dim = x.len();
        let n = model.train.len();
        let ls = model.spatial().lengthscales();
        let kx = DVector::from_fn(n, |a, _| model.train_cross(a, task, x));
        let dkx = if with_grad {
            DMatrix::from_fn(n, dim, |a, j| {
                -kx[a] * (x[j] - model.train.point(a)[j]) / (ls[j] * ls[j])
            })
        } else {
            DMatrix::zeros(0, 0)
        };
        let v = model.chol.solve(&kx);
        let sd = plan.sd;
        let mu_x = plan.mean_shift + sd * kx.dot(&model.alpha);
        let var_x = sd * sd * (model.prior_cross(task, x, task, x) - kx.dot(&v));

        let c = self.points.len();
        let mut cross = DVector::from_fn(c, |i, _| {
            model.prior_cross(task, &self.points[i], task, x) - plan.weights.column(i).dot(&kx)
        });
        cross *= sd * sd;
        let r = plan
            .factor
            .solve_lower_triangular(&cross)
            .expect("conditioning factor has a positive diagonal");
        let z = &self.base[k];
        let mean: Vec<f64> = (0..self.samples).map(|s| mu_x + z.row(s).transpose().dot(&r)).collect();
        let variance = var_x - r.norm_squared();

        if !with_grad {
            return QueryMoments {
                mean,
                variance,
                d_mean: DMatrix::zeros(0, 0),
                d_variance: Vec::new(),
            };
        }
        let d_mu = dkx.transpose() * &model.alpha * sd;
        let d_var = dkx.transpose() * &v * (-2.0 * sd * sd);
        let mut d_cross = DMatrix::from_fn(c, dim, |i, j| {
            let p = &self.points[i];
            let kc = model.prior_cross(task, p, task, x);
            -kc * (x[j] - p[j]) / (ls[j] * ls[j])
        });
        d_cross -= plan.weights.transpose() * &dkx;
        d_cross *= sd * sd;
        let d_r = plan
            .factor
            .solve_lower_triangular(&d_cross)
            .expect("conditioning factor has a positive diagonal");
        // rows: samples, cols: input dimensions
        let mut d_mean = z * &d_r;
        for s in 0..self.samples {
            for j in 0..dim {
                d_mean[(s, j)] += d_mu[j];
            }
        }
        let d_rr = d_r.transpose() * &r * 2.0;
        let d_variance = (0..dim).map(|j| d_var[j] - d_rr[j]).collect();
        QueryMoments {
            mean,
            variance,
            d_mean,
            d_variance,
        }
    }

    /// Acquisition value at `x`; the gradient is written when `grad` is given.
    pub fn value_with_gradient(&self, x: &[f64], grad: Option<&mut [f64]>) -> AcquisitionValue {
        let with_grad = grad.is_some();
        let dim = x.len();
        let moments: Vec<QueryMoments> = (0..self.models.count())
            .map(|k| self.moments(k, x, with_grad))
            .collect();
        let mut total_grad = vec![0.0; if with_grad { dim } else { 0 }];
        let mut per_sample = Vec::with_capacity(self.samples);

        let sd_of = |m: &QueryMoments| m.variance.max(1e-18).sqrt();
        let sds: Vec<f64> = moments.iter().map(sd_of).collect();
        let d_sd: Vec<Vec<f64>> = moments
            .iter()
            .zip(&sds)
            .map(|(m, s)| {
                if m.variance > 1e-18 {
                    m.d_variance.iter().map(|dv| dv / (2.0 * s)).collect()
                } else {
                    vec![0.0; m.d_variance.len()]
                }
            })
            .collect();

        for s in 0..self.samples {
            // feasibility probabilities and their partials in (mean, sd)
            let mut probs = Vec::with_capacity(moments.len() - 1);
            let mut dp: Vec<(f64, f64)> = Vec::with_capacity(moments.len() - 1);
            for (m, sc) in moments[1..].iter().zip(&sds[1..]) {
                let u = m.mean[s] / sc;
                probs.push(norm_cdf(u));
                let phi = norm_pdf(u);
                dp.push((phi / sc, -phi * u / sc));
            }
            let prob_all: f64 = probs.iter().product();
            let (ei, d_ei) = match self.incumbents[s] {
                Some(best) => {
                    let m = moments[0].mean[s];
                    let sf = sds[0];
                    let u = (m - best) / sf;
                    let cdf = norm_cdf(u);
                    let pdf = norm_pdf(u);
                    ((sf * pdf + (m - best) * cdf).max(0.0), Some((cdf, pdf)))
                }
                None => (1.0, None),
            };
            per_sample.push(ei * prob_all);

            if with_grad {
                for j in 0..dim {
                    let mut dv = 0.0;
                    if let Some((cdf, pdf)) = d_ei {
                        dv += prob_all * (cdf * moments[0].d_mean[(s, j)] + pdf * d_sd[0][j]);
                    }
                    for (c, (dpm, dps)) in dp.iter().enumerate() {
                        let others: f64 = probs
                            .iter()
                            .enumerate()
                            .filter(|(i, _)| *i != c)
                            .map(|(_, p)| p)
                            .product();
                        let k = c + 1;
                        dv += ei * others * (dpm * moments[k].d_mean[(s, j)] + dps * d_sd[k][j]);
                    }
                    total_grad[j] += dv;
                }
            }
        }
        let scale = 1.0 / self.samples as f64;
        if let Some(out) = grad {
            for (o, g) in out.iter_mut().zip(&total_grad) {
                *o = g * scale;
            }
        }
        AcquisitionValue {
            value: per_sample.iter().sum::<f64>() * scale,
            per_sample,
        }
    }

    pub fn value(&self, x: &[f64]) -> AcquisitionValue {
        self.value_with_gradient(x, None)
    }
}

fn outcome_plan(
    model: &FittedModel,
    task: usize,
    points: &[Vec<f64>],
    z: &DMatrix<f64>,
    jitter: f64,
) -> Result<OutcomePlan> {
    let n = model.train.len();
    let c = points.len();
    let scale = model.standardization().scale(task);
    let k_xc = DMatrix::from_fn(n, c, |a, i| model.train_cross(a, task, &points[i]));
    let weights = model.chol.solve(&k_xc);
    let offset = model.mean_offsets()[task];
    let mean_c = DVector::from_fn(c, |i, _| {
        scale.mean + scale.sd * (offset + k_xc.column(i).dot(&model.alpha))
    });
    let mut cov = DMatrix::from_fn(c, c, |i, j| {
        model.prior_cross(task, &points[i], task, &points[j]) - k_xc.column(i).dot(&weights.column(j))
    });
    cov *= scale.sd * scale.sd;
    let floor = 1e-12 * scale.sd * scale.sd * model.prior_cross(task, &points[0], task, &points[0]);
    for i in 0..c {
        for j in 0..i {
            let s = 0.5 * (cov[(i, j)] + cov[(j, i)]);
            cov[(i, j)] = s;
            cov[(j, i)] = s;
        }
        let d = cov[(i, i)].max(floor);
        cov[(i, i)] = d * (1.0 + jitter);
    }
    let factor = nalgebra::Cholesky::new(cov)
        .ok_or(Error::NotPositiveDefinite { jitter })?
        .unpack();
    let mut draws = z * factor.transpose();
    for s in 0..draws.nrows() {
        for i in 0..c {
            draws[(s, i)] += mean_c[i];
        }
    }
    Ok(OutcomePlan {
        weights,
        factor,
        draws,
        mean_shift: scale.mean + scale.sd * offset,
        sd: scale.sd,
    })
}

/// Monte-Carlo noisy EI at a single point.
pub fn noisy_ei(x: &[f64], models: &ModelSet, online_points: &[Vec<f64>], qmc: &QmcConfig) -> Result<AcquisitionValue> {
    if x.len() != models.dim() {
        return Err(Error::DimensionMismatch {
            expected: models.dim(),
            found: x.len(),
        });
    }
    Ok(NeiPlan::new(models, online_points, qmc)?.value(x))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateConfig {
    pub raw_samples: usize,
    pub restarts: usize,
    pub max_iters: usize,
    pub min_distance: f64,
}

impl Default for CandidateConfig {
    fn default() -> Self {
        Self {
            raw_samples: 256,
            restarts: 20,
            max_iters: 50,
            min_distance: 1e-6,
        }
    }
}

/// Box bounds on the design space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn unit(dim: usize) -> Self {
        Self {
            lower: vec![0.0; dim],
            upper: vec![1.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lower.len() != self.upper.len() {
            return Err(Error::DimensionMismatch {
                expected: self.lower.len(),
                found: self.upper.len(),
            });
        }
        if self
            .lower
            .iter()
            .zip(&self.upper)
            .any(|(l, u)| !(0.0..=1.0).contains(l) || !(0.0..=1.0).contains(u) || l > u)
        {
            return Err(Error::OutOfDomain("bounds must satisfy 0 ≤ lower ≤ upper ≤ 1".into()));
        }
        Ok(())
    }

    fn is_degenerate(&self) -> bool {
        self.lower.iter().zip(&self.upper).all(|(l, u)| l == u)
    }
}

fn maximize_from_starts(plan: &NeiPlan, bounds: &Bounds, cfg: &CandidateConfig, seed: u64) -> Option<(Vec<f64>, f64)> {
    let dim = bounds.dim();
    let raw = ScrambledSobol::new(dim, seed).points_in_box(cfg.raw_samples.max(1), &bounds.lower, &bounds.upper);
    let mut scored: Vec<(usize, f64)> = raw
        .par_iter()
        .map(|p| plan.value(p).value)
        .enumerate()
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let starts: Vec<&Vec<f64>> = scored
        .iter()
        .filter(|(_, v)| v.is_finite())
        .take(cfg.restarts.max(1))
        .map(|(i, _)| &raw[*i])
        .collect();
    let opt = LbfgsbConfig {
        max_iters: cfg.max_iters,
        pg_tol: 1e-9,
        f_rel_tol: 1e-12,
        ..LbfgsbConfig::default()
    };
    let results: Vec<(Vec<f64>, f64)> = starts
        .par_iter()
        .map(|x0| {
            let f = |x: &[f64], g: &mut [f64]| {
                let v = plan.value_with_gradient(x, Some(g));
                g.iter_mut().for_each(|gi| *gi = -*gi);
                -v.value
            };
            let m = optim::minimize(f, x0, &bounds.lower, &bounds.upper, &opt);
            (m.x, -m.f)
        })
        .collect();
    results
        .into_iter()
        .filter(|(_, v)| v.is_finite())
        .fold(None, |best: Option<(Vec<f64>, f64)>, r| match best {
            Some(b) if b.1 >= r.1 => Some(b),
            _ => Some(r),
        })
}

/// Nudges `x` until it is at least `min_distance` from every point in `taken`.
fn separate(mut x: Vec<f64>, taken: &[Vec<f64>], bounds: &Bounds, min_distance: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100 {
        let too_close = taken
            .iter()
            .any(|t| scaled_sq_dist(t, &x, &vec![1.0; x.len()]).sqrt() < min_distance);
        if !too_close {
            break;
        }
        for (j, v) in x.iter_mut().enumerate() {
            let step: f64 = StandardNormal.sample(&mut rng);
            *v = (*v + 2.0 * min_distance * step).clamp(bounds.lower[j], bounds.upper[j]);
        }
    }
    x
}

/// Sequential-greedy batch of `n_o` noisy-EI maximizers; each chosen point
/// joins the conditioning set with fantasized values before the next.
pub fn generate_candidates(
    models: &ModelSet,
    online_points: &[Vec<f64>],
    bounds: &Bounds,
    n_o: usize,
    qmc: &QmcConfig,
    config: &CandidateConfig,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    bounds.validate()?;
    if bounds.dim() != models.dim() {
        return Err(Error::DimensionMismatch {
            expected: models.dim(),
            found: bounds.dim(),
        });
    }
    if n_o == 0 {
        return Err(Error::InvalidConfig("n_o must be at least 1".into()));
    }
    if bounds.is_degenerate() {
        return Ok(vec![bounds.lower.clone(); n_o]);
    }
    let mut plan = NeiPlan::new(models, online_points, qmc)?;
    let mut chosen: Vec<Vec<f64>> = Vec::with_capacity(n_o);
    for k in 0..n_o {
        let mut found = None;
        for attempt in 0..3u64 {
            let s = derive_seed(seed, (k as u64) << 8 | attempt);
            if let Some(r) = maximize_from_starts(&plan, bounds, config, s) {
                found = Some(r.0);
                break;
            }
        }
        let x = found.ok_or_else(|| {
            Error::AcquisitionFailed(format!("no finite acquisition value for candidate {k}"))
        })?;
        let x = separate(x, &chosen, bounds, config.min_distance, derive_seed(seed, 0x5e9 + k as u64));
        chosen.push(x.clone());
        if k + 1 < n_o {
            plan.add_pending(x)?;
        }
    }
    Ok(chosen)
}

/// Joint posterior at the online task over `points` for one model.
fn joint_posterior(model: &FittedModel, task: usize, points: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let queries: Vec<(usize, Vec<f64>)> = points.iter().map(|p| (task, p.clone())).collect();
    let p = model.posterior(&queries)?;
    let factor = psd_factor(p.covariance)?;
    Ok((p.mean, factor))
}

/// Selects `n_t` candidate indices by Thompson sampling of the best feasible candidate.
pub fn thompson_select(
    models: &ModelSet,
    candidates: &[Vec<f64>],
    n_t: usize,
    draws: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if n_t > candidates.len() {
        return Err(Error::InvalidConfig(format!(
            "cannot select {n_t} of {} candidates",
            candidates.len()
        )));
    }
    if candidates.is_empty() || n_t == 0 {
        return Ok(Vec::new());
    }
    let task = models.online_task;
    let posts: Vec<(DVector<f64>, DMatrix<f64>)> = models
        .all()
        .map(|m| joint_posterior(m, task, candidates))
        .collect::<Result<_>>()?;
    let q = candidates.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut wins = vec![0usize; q];
    let mut values: Vec<DVector<f64>> = vec![DVector::zeros(q); posts.len()];
    for _ in 0..draws {
        for (k, (mean, factor)) in posts.iter().enumerate() {
            let z = DVector::from_fn(q, |_, _| StandardNormal.sample(&mut rng));
            values[k] = mean + factor * z;
        }
        let feasible = |i: usize| values[1..].iter().all(|c| c[i] >= 0.0);
        let winner = (0..q)
            .filter(|&i| feasible(i))
            .max_by(|&a, &b| values[0][a].total_cmp(&values[0][b]).then(b.cmp(&a)))
            .or_else(|| {
                // no feasible candidate: least total violation
                let violation = |i: usize| values[1..].iter().map(|c| (-c[i]).max(0.0)).sum::<f64>();
                (0..q).min_by(|&a, &b| violation(a).total_cmp(&violation(b)).then(a.cmp(&b)))
            });
        if let Some(w) = winner {
            wins[w] += 1;
        }
    }
    let obj_mean = &posts[0].0;
    let mut order: Vec<usize> = (0..q).collect();
    order.sort_by(|&a, &b| {
        wins[b]
            .cmp(&wins[a])
            .then(obj_mean[b].total_cmp(&obj_mean[a]))
            .then(a.cmp(&b))
    });
    order.truncate(n_t);
    Ok(order)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incumbent {
    pub index: usize,
    pub point: Vec<f64>,
    pub expected_objective: f64,
}

/// Observed online point with the best posterior-mean objective among those
/// feasible in expectation; `None` when no point qualifies.
pub fn best_feasible(models: &ModelSet, online_points: &[Vec<f64>]) -> Result<Option<Incumbent>> {
    if online_points.is_empty() {
        return Err(Error::InvalidDataset("no online points".into()));
    }
    let task = models.online_task;
    let queries: Vec<(usize, Vec<f64>)> = online_points.iter().map(|p| (task, p.clone())).collect();
    let obj = models.objective.posterior(&queries)?.mean;
    let cons: Vec<DVector<f64>> = models
        .constraints
        .iter()
        .map(|m| m.posterior(&queries).map(|p| p.mean))
        .collect::<Result<_>>()?;
    let best = (0..online_points.len())
        .filter(|&i| cons.iter().all(|c| c[i] >= 0.0))
        .fold(None::<usize>, |acc, i| match acc {
            Some(a) if obj[a] >= obj[i] => Some(a),
            _ => Some(i),
        });
    Ok(best.map(|i| Incumbent {
        index: i,
        point: online_points[i].clone(),
        expected_objective: obj[i],
    }))
}
