//! The online-offline optimization loop: quasi-random initialization,
//! interleaved simulator and online batches, and per-batch task assembly.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::acquisition::{
    best_feasible, generate_candidates, thompson_select, Bounds, CandidateConfig, Incumbent, ModelSet, QmcConfig,
};
use crate::error::{Error, Result};
use crate::kernels::{HyperparamLayout, HyperparamVector, SpatialHyperparams, TaskStructure};
use crate::mtgp::{fit, Dataset, FitConfig, FittedModel, Observation, StandardizeMode};
use crate::qmc::{derive_seed, ScrambledSobol};

/// Evaluation channel of a problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Online,
    Offline,
}

/// Noisy measurements of every outcome at one point: objective first (to be
/// maximized), then constraints (feasible when ≥ 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub values: Vec<f64>,
    pub noise_variances: Vec<f64>,
}

pub trait Problem: Sync {
    fn dim(&self) -> usize;
    fn num_constraints(&self) -> usize;
    fn outcome_names(&self) -> Vec<String>;
    fn evaluate(&self, x: &[f64], channel: Channel, rng: &mut ChaCha8Rng) -> Result<Evaluation>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopVariant {
    /// Simulator batch of `n_o` candidates, then Thompson selection of `n_t` online.
    Interleaved,
    /// Offline data only at initialization; online batches of `n_t` candidates.
    InitOnly,
    /// No offline data.
    OnlineOnly,
}

/// Hyperparameter handling inside the loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum KernelMode {
    Infer,
    /// Fixed spatial kernel with unit task variances and a common cross-task correlation.
    Fixed {
        output_variance: f64,
        lengthscales: Vec<f64>,
        correlation: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopConfig {
    pub n_t: usize,
    pub n_s: usize,
    pub n_o: usize,
    pub iterations: usize,
    pub anchor_count: usize,
    pub rank_batch: usize,
    pub variant: LoopVariant,
    pub seed: u64,
    pub fit_restarts: usize,
    pub qmc_samples: usize,
    pub thompson_draws: usize,
    pub candidates: CandidateConfig,
    pub kernel: KernelMode,
    pub standardize: StandardizeMode,
    /// Start each fit from the previous fit's hyperparameters as well.
    pub warm_start: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            n_t: 5,
            n_s: 20,
            n_o: 20,
            iterations: 3,
            anchor_count: 5,
            rank_batch: 1,
            variant: LoopVariant::Interleaved,
            seed: 0,
            fit_restarts: 10,
            qmc_samples: 64,
            thompson_draws: 1000,
            candidates: CandidateConfig::default(),
            kernel: KernelMode::Infer,
            standardize: StandardizeMode::PerTask,
            warm_start: true,
        }
    }
}

impl LoopConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.n_t == 0 {
            return bad("n_t must be at least 1");
        }
        if self.variant == LoopVariant::Interleaved && self.n_o < self.n_t {
            return bad("n_o must be at least n_t");
        }
        if self.variant != LoopVariant::OnlineOnly && self.n_s == 0 {
            return bad("n_s must be at least 1");
        }
        if self.anchor_count > self.n_s {
            return bad("anchor_count cannot exceed n_s");
        }
        if self.rank_batch == 0 {
            return bad("rank_batch must be at least 1");
        }
        if self.fit_restarts == 0 {
            return bad("fit_restarts must be at least 1");
        }
        QmcConfig::new(self.qmc_samples, 0)?;
        if let KernelMode::Fixed { correlation, .. } = &self.kernel {
            if !(0.0..=1.0).contains(correlation) {
                return bad("fixed correlation must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

/// Two independently scrambled Sobol designs in the unit cube.
pub fn sobol_initialization(dim: usize, n_t: usize, n_s: usize, seed_t: u64, seed_s: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let online = ScrambledSobol::new(dim, seed_t).points(n_t);
    let offline = ScrambledSobol::new(dim, seed_s).points(n_s);
    (online, offline)
}

/// One evaluated point in the loop's history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub point: Vec<f64>,
    pub channel: Channel,
    /// Online batch index, or simulator batch index.
    pub batch: usize,
    pub evaluation: Evaluation,
}

/// Dataset for one outcome: online rows on task 0, simulator batch `b` on task `1 + b`.
pub fn assemble_tasks(history: &[HistoryEntry], outcome: usize, outcome_name: &str) -> Result<Dataset> {
    let first = history
        .first()
        .ok_or_else(|| Error::InvalidDataset("empty history".into()))?;
    let mut ds = Dataset::new(outcome_name, first.point.len());
    for h in history {
        let task = match h.channel {
            Channel::Online => 0,
            Channel::Offline => 1 + h.batch,
        };
        ds.push(
            Observation::new(
                h.point.clone(),
                task,
                h.evaluation.values[outcome],
                h.evaluation.noise_variances[outcome],
            )
            .with_batch(h.batch),
        )?;
    }
    Ok(ds)
}

/// Task structure for `simulator_batches` batches under the configured batch rank.
pub fn batch_structure(simulator_batches: usize, rank_batch: usize) -> TaskStructure {
    match simulator_batches {
        0 => TaskStructure::single_task(),
        1 => TaskStructure::LowRank { tasks: 2, rank: 2 },
        m if rank_batch == 1 => TaskStructure::BatchComposite { batches: m },
        m => TaskStructure::LowRank {
            tasks: 1 + m,
            rank: rank_batch.min(1 + m),
        },
    }
}

/// Maps hyperparameters of the previous structure onto a structure with one
/// more simulator batch, when the layouts nest.
fn carry_over(prev: &HyperparamVector, next: &HyperparamLayout) -> Option<Vec<f64>> {
    let pl = prev.layout();
    if pl == next {
        return Some(prev.values().to_vec());
    }
    if pl.dim != next.dim {
        return None;
    }
    let spatial_len = 1 + pl.dim;
    let v = prev.values();
    match (pl.structure, next.structure) {
        (TaskStructure::LowRank { tasks: 2, rank: 2 }, TaskStructure::BatchComposite { batches: 2 }) => {
            let mut out = v[..spatial_len + 3].to_vec();
            out.extend([1.0, 0.0]);
            Some(out)
        }
        (TaskStructure::BatchComposite { batches: a }, TaskStructure::BatchComposite { batches: b }) if b == a + 1 => {
            let scales = &v[spatial_len + 3..spatial_len + 3 + (a - 1)];
            let offsets = &v[spatial_len + 3 + (a - 1)..];
            let mut out = v[..spatial_len + 3].to_vec();
            out.extend_from_slice(scales);
            out.push(1.0);
            out.extend_from_slice(offsets);
            out.push(0.0);
            Some(out)
        }
        _ => None,
    }
}

pub(crate) fn fixed_hyperparameters(structure: TaskStructure, dim: usize, kernel: &KernelMode) -> Result<Option<HyperparamVector>> {
    let KernelMode::Fixed {
        output_variance,
        lengthscales,
        correlation,
    } = kernel
    else {
        return Ok(None);
    };
    let tasks = structure.num_tasks();
    let spatial = SpatialHyperparams::new(*output_variance, lengthscales.clone())?;
    let (structure, params) = if *correlation >= 1.0 || tasks == 1 {
        (TaskStructure::LowRank { tasks, rank: 1 }, vec![1.0; tasks])
    } else {
        let b = nalgebra::DMatrix::from_fn(tasks, tasks, |i, j| if i == j { 1.0 } else { *correlation });
        let l = nalgebra::Cholesky::new(b)
            .ok_or(Error::NotPositiveDefinite { jitter: 0.0 })?
            .unpack();
        let params = (0..tasks).flat_map(|i| (0..=i).map(move |j| (i, j))).map(|(i, j)| l[(i, j)]).collect();
        (TaskStructure::LowRank { tasks, rank: tasks }, params)
    };
    let layout = HyperparamLayout::new(dim, structure)?;
    Ok(Some(HyperparamVector::pack(layout, &spatial, &params, &[])?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchKind {
    Online,
    Offline,
}

/// One evaluated batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub iteration: usize,
    pub kind: BatchKind,
    pub task: usize,
    pub policies: Vec<Vec<f64>>,
    pub observations: Vec<Evaluation>,
    /// Best observed feasible online objective after this batch.
    pub incumbent: Option<f64>,
    /// Fitted online/first-simulator correlation per outcome, when a
    /// multi-task model informed this batch.
    pub fitted_rho: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationTrace {
    pub outcome_names: Vec<String>,
    pub records: Vec<BatchRecord>,
    pub final_policy: Option<Incumbent>,
    /// Set when the run stopped early; the records are those completed.
    pub error: Option<String>,
}

impl OptimizationTrace {
    pub fn online_points(&self) -> Vec<Vec<f64>> {
        self.records
            .iter()
            .filter(|r| r.kind == BatchKind::Online)
            .flat_map(|r| r.policies.iter().cloned())
            .collect()
    }

    /// Every evaluation in order, with channel and batch labels.
    pub fn history(&self) -> Vec<HistoryEntry> {
        self.records
            .iter()
            .scan((0usize, 0usize), |(online, offline), r| {
                let (channel, batch) = match r.kind {
                    BatchKind::Online => (Channel::Online, *online),
                    BatchKind::Offline => (Channel::Offline, *offline),
                };
                match r.kind {
                    BatchKind::Online => *online += 1,
                    BatchKind::Offline => *offline += 1,
                }
                Some(r.policies.iter().zip(&r.observations).map(move |(p, e)| HistoryEntry {
                    point: p.clone(),
                    channel,
                    batch,
                    evaluation: e.clone(),
                }))
            })
            .flatten()
            .collect()
    }

    pub fn online_count(&self) -> usize {
        self.online_points().len()
    }

    /// JSON lines, one record per batch.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    /// `iteration,best_feasible` for online batches; empty cell when none is feasible.
    pub fn write_incumbent_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "iteration,best_feasible")?;
        for r in self.records.iter().filter(|r| r.kind == BatchKind::Online) {
            match r.incumbent {
                Some(v) => writeln!(w, "{},{}", r.iteration, v)?,
                None => writeln!(w, "{},", r.iteration)?,
            }
        }
        Ok(())
    }
}

struct LoopState<'p, P: Problem + ?Sized> {
    problem: &'p P,
    config: &'p LoopConfig,
    names: Vec<String>,
    history: Vec<HistoryEntry>,
    records: Vec<BatchRecord>,
    online_rng: ChaCha8Rng,
    offline_rng: ChaCha8Rng,
    simulator_batches: usize,
    online_batches: usize,
    anchors: Vec<Vec<f64>>,
    best: Option<f64>,
    warm: Vec<Option<HyperparamVector>>,
    fits: u64,
}

impl<'p, P: Problem + ?Sized> LoopState<'p, P> {
    fn evaluate_batch(&mut self, points: Vec<Vec<f64>>, channel: Channel, iteration: usize, rho: Vec<Option<f64>>) -> Result<()> {
        let (batch, task) = match channel {
            Channel::Online => (self.online_batches, 0),
            Channel::Offline => (self.simulator_batches, 1 + self.simulator_batches),
        };
        let mut observations = Vec::with_capacity(points.len());
        for p in &points {
            let rng = match channel {
                Channel::Online => &mut self.online_rng,
                Channel::Offline => &mut self.offline_rng,
            };
            let ev = self.problem.evaluate(p, channel, rng)?;
            if ev.values.len() != 1 + self.problem.num_constraints() {
                return Err(Error::InvalidDataset("evaluation has the wrong number of outcomes".into()));
            }
            if channel == Channel::Online && ev.values[1..].iter().all(|c| *c >= 0.0) {
                self.best = Some(self.best.map_or(ev.values[0], |b| b.max(ev.values[0])));
            }
            self.history.push(HistoryEntry {
                point: p.clone(),
                channel,
                batch,
                evaluation: ev.clone(),
            });
            observations.push(ev);
        }
        match channel {
            Channel::Online => self.online_batches += 1,
            Channel::Offline => self.simulator_batches += 1,
        }
        let kind = match channel {
            Channel::Online => BatchKind::Online,
            Channel::Offline => BatchKind::Offline,
        };
        self.records.push(BatchRecord {
            iteration,
            kind,
            task,
            policies: points,
            observations,
            incumbent: self.best,
            fitted_rho: rho,
        });
        Ok(())
    }

    fn fit_models(&mut self) -> Result<ModelSet> {
        let structure = batch_structure(self.simulator_batches, self.config.rank_batch);
        let dim = self.problem.dim();
        let layout = HyperparamLayout::new(dim, structure)?;
        let fixed = fixed_hyperparameters(structure, dim, &self.config.kernel)?;
        let mut models = Vec::with_capacity(self.names.len());
        for k in 0..self.names.len() {
            let ds = assemble_tasks(&self.history, k, &self.names[k])?;
            let model = match &fixed {
                Some(hv) => FittedModel::new(ds, hv.clone(), self.config.standardize)?,
                None => {
                    let mut cfg = FitConfig::new(1, self.config.fit_restarts, derive_seed(self.config.seed, 0x1000 + self.fits))
                        .with_structure(structure)
                        .with_standardize(self.config.standardize);
                    if self.config.warm_start {
                        if let Some(start) = self.warm[k].as_ref().and_then(|w| carry_over(w, &layout)) {
                            cfg = cfg.with_warm_start(start);
                        }
                    }
                    let m = fit(&ds, &cfg)?;
                    self.warm[k] = Some(m.hyperparameters().clone());
                    m
                }
            };
            self.fits += 1;
            models.push(model);
        }
        let objective = models.remove(0);
        ModelSet::new(objective, models)
    }

    fn online_points(&self) -> Vec<Vec<f64>> {
        self.history
            .iter()
            .filter(|h| h.channel == Channel::Online)
            .map(|h| h.point.clone())
            .collect()
    }

    fn rho(models: &ModelSet) -> Vec<Option<f64>> {
        std::iter::once(&models.objective)
            .chain(&models.constraints)
            .map(|m| (m.num_tasks() > 1).then(|| m.inter_task_correlation(0, 1).ok()).flatten())
            .collect()
    }

    fn candidates(&self, models: &ModelSet, n: usize, iteration: usize) -> Result<Vec<Vec<f64>>> {
        let qmc = QmcConfig::new(self.config.qmc_samples, derive_seed(self.config.seed, 0x2000 + iteration as u64))?;
        generate_candidates(
            models,
            &self.online_points(),
            &Bounds::unit(self.problem.dim()),
            n,
            &qmc,
            &self.config.candidates,
            derive_seed(self.config.seed, 0x3000 + iteration as u64),
        )
    }

    fn step(&mut self, iteration: usize) -> Result<()> {
        let cfg = self.config;
        match cfg.variant {
            LoopVariant::Interleaved => {
                let models = self.fit_models()?;
                let rho = Self::rho(&models);
                let mut cands = self.candidates(&models, cfg.n_o, iteration)?;
                let mut sim_batch = cands.clone();
                sim_batch.extend(self.anchors.iter().cloned());
                self.evaluate_batch(sim_batch, Channel::Offline, iteration, rho)?;
                let models = self.fit_models()?;
                let rho = Self::rho(&models);
                let picked = thompson_select(
                    &models,
                    &cands,
                    cfg.n_t,
                    cfg.thompson_draws,
                    derive_seed(cfg.seed, 0x4000 + iteration as u64),
                )?;
                let chosen: Vec<Vec<f64>> = picked.iter().map(|&i| std::mem::take(&mut cands[i])).collect();
                self.evaluate_batch(chosen, Channel::Online, iteration, rho)
            }
            LoopVariant::InitOnly | LoopVariant::OnlineOnly => {
                let models = self.fit_models()?;
                let rho = Self::rho(&models);
                let cands = self.candidates(&models, cfg.n_t, iteration)?;
                self.evaluate_batch(cands, Channel::Online, iteration, rho)
            }
        }
    }
}

/// Runs the configured loop variant. Failures after initialization return
/// the partial trace with `error` set.
pub fn run_loop<P: Problem + ?Sized>(problem: &P, config: &LoopConfig) -> Result<OptimizationTrace> {
    config.validate()?;
    let names = problem.outcome_names();
    if names.len() != 1 + problem.num_constraints() {
        return Err(Error::InvalidConfig("outcome names must cover the objective and each constraint".into()));
    }
    let dim = problem.dim();
    let (online, offline) = sobol_initialization(
        dim,
        config.n_t,
        config.n_s,
        derive_seed(config.seed, 1),
        derive_seed(config.seed, 2),
    );
    let mut state = LoopState {
        problem,
        config,
        warm: vec![None; names.len()],
        names,
        history: Vec::new(),
        records: Vec::new(),
        online_rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 3)),
        offline_rng: ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 4)),
        simulator_batches: 0,
        online_batches: 0,
        anchors: offline[..config.anchor_count.min(offline.len())].to_vec(),
        best: None,
        fits: 0,
    };
    state.evaluate_batch(online, Channel::Online, 0, vec![])?;
    if config.variant != LoopVariant::OnlineOnly {
        state.evaluate_batch(offline, Channel::Offline, 0, vec![])?;
    }

    let mut error = None;
    for iteration in 1..=config.iterations {
        if let Err(e) = state.step(iteration) {
            log::warn!("loop stopped at iteration {iteration}: {e}");
            error = Some(e.to_string());
            break;
        }
    }
    let final_policy = if error.is_none() {
        match state.fit_models() {
            Ok(models) => best_feasible(&models, &state.online_points())?,
            Err(e) => {
                error = Some(e.to_string());
                None
            }
        }
    } else {
        None
    };
    Ok(OptimizationTrace {
        outcome_names: state.names,
        records: state.records,
        final_policy,
        error,
    })
}
