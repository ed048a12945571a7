//! Training by joint edge and model sparsification: initialize, pre-train,
//! prune neurons by magnitude, rewind the survivors and re-train with
//! sampled neighborhoods.

use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::analysis::lucky_mask;
use crate::error::{invalid, Error, Result};
use crate::graph::{LabeledSubset, StructuredGraph};
use crate::model::{
    generalization_error, margin_errors, GenError, ModelState, NormMode, Projections,
};
use crate::rng::{self, tag, Rng};
use crate::sampler::SamplingStrategy;

str_enum!(BatchMode { Full => "full", Disjoint => "disjoint" });
str_enum!(StopRule { ZeroTrainError => "zero_train_error", MaxIters => "max_iters" });
str_enum!(StopMetric { Hinge => "hinge", ZeroOne => "zero_one" });
str_enum!(PruneScope { PerClass => "per_class", Global => "global" });
str_enum!(PruneMethod { Magnitude => "magnitude", Random => "random" });
str_enum!(StepRule { Neuron => "neuron", Exact => "exact" });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Hidden width K.
    pub k: usize,
    pub c_eta: f64,
    pub delta: f64,
    pub sampling: SamplingStrategy,
    pub beta: f64,
    pub prune_scope: PruneScope,
    pub prune_method: PruneMethod,
    /// T'; `None` means ceil(||X||_inf / c_eta).
    pub pretrain_iters: Option<usize>,
    pub max_iters: usize,
    pub batch: BatchMode,
    /// Number of disjoint parts of D in disjoint mode.
    pub batches: usize,
    pub stop: StopRule,
    pub stop_metric: StopMetric,
    pub norm: NormMode,
    /// `Neuron` moves each w_k by c_eta (1/|D|) sum_v y_v b_k x_winner, the
    /// per-neuron step of the analysis; `Exact` uses c_eta times the true
    /// gradient of the empirical risk, which carries an extra 1/Z_k.
    pub step: StepRule,
    /// Noise level used when counting lucky neurons.
    pub lucky_sigma: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    /// Full-scale defaults: K = 200, delta = 0.1, c_eta = 1, r = 20,
    /// beta = 0.2, T' = 5, T_max = 500.
    fn default() -> Self {
        Self {
            k: 200,
            c_eta: 1.0,
            delta: 0.1,
            sampling: SamplingStrategy::uniform(20),
            beta: 0.2,
            prune_scope: PruneScope::PerClass,
            prune_method: PruneMethod::Magnitude,
            pretrain_iters: Some(5),
            max_iters: 500,
            batch: BatchMode::Full,
            batches: 1,
            stop: StopRule::ZeroTrainError,
            stop_metric: StopMetric::Hinge,
            norm: NormMode::OverSurviving,
            step: StepRule::Neuron,
            lucky_sigma: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn desk() -> Self {
        Self {
            k: 100,
            sampling: SamplingStrategy::uniform(15),
            lucky_sigma: 0.1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("K must be positive"));
        }
        if !(self.c_eta >= 0.0) || !self.c_eta.is_finite() {
            return Err(invalid("c_eta must be nonnegative"));
        }
        if !(self.delta > 0.0) {
            return Err(invalid("delta must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(invalid("beta must lie in [0, 1)"));
        }
        if self.max_iters == 0 {
            return Err(invalid("max_iters must be at least 1"));
        }
        if self.batches == 0 {
            return Err(invalid("batches must be at least 1"));
        }
        self.sampling.validate()
    }

    /// T' for the given graph.
    pub fn pretrain_len(&self, graph: &StructuredGraph) -> usize {
        self.pretrain_iters
            .unwrap_or_else(|| default_pretrain_len(graph.feature_inf_norm(), self.c_eta))
    }
}

/// ceil(||X||_inf / c_eta).
pub fn default_pretrain_len(x_inf: f64, c_eta: f64) -> usize {
    if c_eta <= 0.0 {
        return 0;
    }
    (x_inf / c_eta).ceil() as usize
}

/// Stage reported to training hooks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Pruned,
    Retrain,
}

/// Callback invoked with the model at every recorded iteration. During
/// pre-training and re-training it is called before each step (t = 0 is
/// the starting point) and once after the last step; `Pruned` fires once
/// right after pruning, before rewinding.
pub type Hook<'a> = &'a mut dyn FnMut(Phase, usize, &ModelState);

/// A hook that ignores every event.
pub fn no_hook(_: Phase, _: usize, _: &ModelState) {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub seed: u64,
    /// Zero 0/1 error on the test set.
    pub success: bool,
    /// The stop rule fired before T_max.
    pub converged: bool,
    /// Re-training iterations used.
    pub iterations: usize,
    pub pretrain_iterations: usize,
    pub test_hinge: f64,
    pub test_error: f64,
    pub train_hinge: f64,
    pub train_error: f64,
    /// Lucky neurons at initialization (both classes).
    pub lucky_init: usize,
    /// Lucky neurons after pre-training.
    pub lucky_pretrained: usize,
    /// Initially lucky neurons that survive pruning.
    pub lucky_init_kept: usize,
    pub surviving: usize,
    /// Wall-clock time in milliseconds; not serialized so outputs stay
    /// reproducible.
    #[serde(skip)]
    pub wall_ms: f64,
}

/// Initial model: W ~ N(0, delta^2), b uniform, all neurons alive.
pub fn initialize(d: usize, config: &TrainConfig) -> Result<ModelState> {
    let mut rng = rng::stream(config.seed, &[tag::INIT]);
    ModelState::initialize(d, config.k, config.delta, config.norm, &mut rng)
}

struct Stepper<'a> {
    graph: &'a StructuredGraph,
    train: &'a LabeledSubset,
    config: &'a TrainConfig,
    /// Union of the full neighborhoods of D.
    support: Vec<usize>,
    full: Vec<Vec<usize>>,
    parts: Vec<LabeledSubset>,
    part_full: Vec<Vec<Vec<usize>>>,
    rng: Rng,
}

impl<'a> Stepper<'a> {
    fn new(
        graph: &'a StructuredGraph,
        train: &'a LabeledSubset,
        config: &'a TrainConfig,
        stream: u64,
    ) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::EmptySet);
        }
        let full: Vec<Vec<usize>> = train
            .nodes()
            .iter()
            .map(|&v| graph.neighborhood(v))
            .collect::<Result<_>>()?;
        let mut seen = vec![false; graph.n()];
        let mut support = Vec::new();
        for &u in full.iter().flatten() {
            if !std::mem::replace(&mut seen[u], true) {
                support.push(u);
            }
        }
        let mut rng = rng::stream(config.seed, &[tag::TRAIN, stream]);
        let (parts, part_full) = match config.batch {
            BatchMode::Full => (vec![train.clone()], vec![full.clone()]),
            BatchMode::Disjoint => {
                let mut order: Vec<usize> = (0..train.len()).collect();
                order.shuffle(&mut rng);
                let parts = config.batches.min(train.len());
                let mut ps = Vec::with_capacity(parts);
                let mut fs = Vec::with_capacity(parts);
                for p in 0..parts {
                    let idx: Vec<usize> = order.iter().copied().skip(p).step_by(parts).collect();
                    ps.push(LabeledSubset::new(
                        graph,
                        idx.iter().map(|&i| train.nodes()[i]).collect(),
                    )?);
                    fs.push(idx.iter().map(|&i| full[i].clone()).collect());
                }
                (ps, fs)
            }
        };
        Ok(Self {
            graph,
            train,
            config,
            support,
            full,
            parts,
            part_full,
            rng,
        })
    }

    fn project(&self, model: &ModelState) -> Projections {
        model.project(self.graph, &self.support)
    }

    /// Train errors over D with full neighborhoods.
    fn train_errors(&self, model: &ModelState, proj: &Projections) -> GenError {
        let margins: Vec<f64> = self
            .train
            .nodes()
            .iter()
            .zip(&self.full)
            .map(|(&v, nb)| f64::from(self.graph.label(v)) * model.forward_cached(proj, nb))
            .collect();
        margin_errors(&margins)
    }

    fn stop(&self, err: &GenError) -> bool {
        self.config.stop == StopRule::ZeroTrainError
            && match self.config.stop_metric {
                StopMetric::Hinge => err.hinge == 0.0,
                StopMetric::ZeroOne => err.zero_one == 0.0,
            }
    }

    /// One update on batch `t mod parts`, with freshly sampled neighborhoods.
    fn step(&mut self, model: &mut ModelState, t: usize, proj: &Projections) {
        let p = t % self.parts.len();
        let batch = &self.parts[p];
        let nbhds: Vec<Vec<usize>> = match self.config.sampling.kind {
            crate::sampler::SamplerKind::Full => self.part_full[p].clone(),
            _ => batch
                .nodes()
                .iter()
                .map(|&v| self.config.sampling.sample(self.graph, v, &mut self.rng))
                .collect(),
        };
        let dir = descent_direction(model, self.graph, batch, &nbhds, proj, self.config.step);
        let c = self.config.c_eta;
        let d = model.dim();
        let alive: Vec<bool> = model.mask().to_vec();
        let w = model.weights_mut();
        for (k, &live) in alive.iter().enumerate() {
            if live {
                w[k * d..(k + 1) * d]
                    .iter_mut()
                    .zip(&dir[k * d..(k + 1) * d])
                    .for_each(|(w, g)| *w -= c * g);
            }
        }
    }
}

/// Direction subtracted from W at each step: the exact gradient, or the
/// per-neuron gradient with the output normalization dropped.
pub fn descent_direction(
    model: &ModelState,
    graph: &StructuredGraph,
    batch: &LabeledSubset,
    nbhds: &[Vec<usize>],
    proj: &Projections,
    rule: StepRule,
) -> Vec<f64> {
    let d = model.dim();
    let mut dir = vec![0.0; model.width() * d];
    let inv = 1.0 / batch.len() as f64;
    let coef: Vec<f64> = (0..model.width())
        .map(|k| match rule {
            StepRule::Exact => model.scale(k),
            StepRule::Neuron if model.is_alive(k) => f64::from(model.signs()[k]),
            StepRule::Neuron => 0.0,
        })
        .collect();
    for (&v, nb) in batch.nodes().iter().zip(nbhds) {
        let y = f64::from(graph.label(v));
        let (_, winners) = proj.pool_all(nb);
        for k in 0..model.width() {
            if coef[k] == 0.0 {
                continue;
            }
            if let Some(u) = winners[k] {
                let c = -y * coef[k] * inv;
                dir[k * d..(k + 1) * d]
                    .iter_mut()
                    .zip(graph.feature(u))
                    .for_each(|(g, x)| *g += c * x);
            }
        }
    }
    dir
}

/// T' steps of full-batch (or disjoint-batch) descent with sampled
/// neighborhoods, all neurons active.
pub fn pretrain(
    model: &mut ModelState,
    graph: &StructuredGraph,
    train: &LabeledSubset,
    config: &TrainConfig,
    hook: Hook<'_>,
) -> Result<usize> {
    config.validate()?;
    let iters = config.pretrain_len(graph);
    let mut stepper = Stepper::new(graph, train, config, 0)?;
    for t in 0..iters {
        hook(Phase::Pretrain, t, model);
        let proj = stepper.project(model);
        stepper.step(model, t, &proj);
    }
    hook(Phase::Pretrain, iters, model);
    Ok(iters)
}

/// Returns the neuron mask after removing floor(beta K) neurons, with the
/// ids removed. Per-class scope removes floor(beta K / 2) from each sign
/// class (capped by the class size); ties go to the lowest neuron id.
pub fn magnitude_prune(
    model: &ModelState,
    beta: f64,
    scope: PruneScope,
) -> Result<(Vec<bool>, Vec<usize>)> {
    select_pruned(model, beta, scope, None)
}

/// Same budget as [`magnitude_prune`] but chosen uniformly at random.
pub fn random_prune(
    model: &ModelState,
    beta: f64,
    scope: PruneScope,
    rng: &mut Rng,
) -> Result<(Vec<bool>, Vec<usize>)> {
    select_pruned(model, beta, scope, Some(rng))
}

fn select_pruned(
    model: &ModelState,
    beta: f64,
    scope: PruneScope,
    mut rng: Option<&mut Rng>,
) -> Result<(Vec<bool>, Vec<usize>)> {
    if !(0.0..1.0).contains(&beta) {
        return Err(invalid("beta must lie in [0, 1)"));
    }
    let k = model.width();
    let norms: Vec<f64> = (0..k)
        .map(|i| crate::graph::norm(model.weight(i)))
        .collect();
    let groups: Vec<(Vec<usize>, usize)> = match scope {
        PruneScope::Global => vec![((0..k).collect(), (beta * k as f64).floor() as usize)],
        PruneScope::PerClass => {
            let per = (beta * k as f64 / 2.0).floor() as usize;
            [1i8, -1]
                .iter()
                .map(|&s| {
                    let ids: Vec<usize> = (0..k).filter(|&i| model.signs()[i] == s).collect();
                    let n = per.min(ids.len());
                    (ids, n)
                })
                .collect()
        }
    };
    let mut mask = model.mask().to_vec();
    let mut pruned = Vec::new();
    for (mut ids, count) in groups {
        match rng.as_deref_mut() {
            None => ids.sort_by(|&a, &b| norms[a].total_cmp(&norms[b]).then(a.cmp(&b))),
            Some(r) => ids.shuffle(r),
        }
        for &i in ids.iter().take(count) {
            mask[i] = false;
            pruned.push(i);
        }
    }
    pruned.sort_unstable();
    Ok((mask, pruned))
}

/// Masked descent with sampled neighborhoods until the stop rule fires or
/// T_max steps are taken. Returns the number of steps and whether the stop
/// rule fired.
pub fn retrain(
    model: &mut ModelState,
    graph: &StructuredGraph,
    train: &LabeledSubset,
    config: &TrainConfig,
    hook: Hook<'_>,
) -> Result<(usize, bool)> {
    config.validate()?;
    let mut stepper = Stepper::new(graph, train, config, 1)?;
    for t in 0..config.max_iters {
        hook(Phase::Retrain, t, model);
        let proj = stepper.project(model);
        if stepper.stop(&stepper.train_errors(model, &proj)) {
            return Ok((t, true));
        }
        stepper.step(model, t, &proj);
    }
    hook(Phase::Retrain, config.max_iters, model);
    let proj = stepper.project(model);
    let fired = stepper.stop(&stepper.train_errors(model, &proj));
    Ok((config.max_iters, fired))
}

/// The full pipeline on one graph: initialize, pre-train, prune, rewind,
/// re-train, then evaluate on `test` with full neighborhoods.
pub fn run_algorithm1(
    graph: &StructuredGraph,
    train: &LabeledSubset,
    test: &LabeledSubset,
    config: &TrainConfig,
    hook: Hook<'_>,
) -> Result<(ModelState, TrialOutcome)> {
    config.validate()?;
    if train.is_empty() || test.is_empty() {
        return Err(Error::EmptySet);
    }
    let start = Instant::now();
    let mut model = initialize(graph.dim(), config)?;
    let lucky0 = graph
        .patterns()
        .map(|ps| lucky_mask(&model, ps, config.lucky_sigma));

    let pretrain_iterations = pretrain(&mut model, graph, train, config, &mut *hook)?;
    let lucky_pretrained = graph.patterns().map_or(0, |ps| {
        lucky_mask(&model, ps, config.lucky_sigma)
            .iter()
            .filter(|&&l| l)
            .count()
    });

    let (mask, _) = match config.prune_method {
        PruneMethod::Magnitude => magnitude_prune(&model, config.beta, config.prune_scope)?,
        PruneMethod::Random => {
            let mut r = rng::stream(config.seed, &[tag::PRUNE]);
            random_prune(&model, config.beta, config.prune_scope, &mut r)?
        }
    };
    let lucky_init_kept = lucky0.as_ref().map_or(0, |l| {
        l.iter().zip(&mask).filter(|&(&l, &m)| l && m).count()
    });
    model.set_mask(mask)?;
    hook(Phase::Pruned, pretrain_iterations, &model);
    model.rewind();

    let (iterations, converged) = retrain(&mut model, graph, train, config, &mut *hook)?;
    let train_err = generalization_error(&model, graph, train.nodes())?;
    let test_err = generalization_error(&model, graph, test.nodes())?;
    let outcome = TrialOutcome {
        seed: config.seed,
        success: test_err.zero_one == 0.0,
        converged,
        iterations,
        pretrain_iterations,
        test_hinge: test_err.hinge,
        test_error: test_err.zero_one,
        train_hinge: train_err.hinge,
        train_error: train_err.zero_one,
        lucky_init: lucky0
            .as_ref()
            .map_or(0, |l| l.iter().filter(|&&x| x).count()),
        lucky_pretrained,
        lucky_init_kept,
        surviving: model.surviving(),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok((model, outcome))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub alpha: f64,
    pub beta: f64,
    pub r: f64,
    pub sigma: f64,
    pub l: f64,
    pub k: f64,
    pub c_eta: f64,
    pub samples: f64,
    pub q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoremBounds {
    /// Required |D| with unit leading constant.
    pub samples: f64,
    /// Required re-training iterations with unit leading constant.
    pub iterations: f64,
}

/// Unit-constant versions of the sample and iteration requirements:
///
/// |D| ~ (1 + L^2 sigma^2 + 1/K) alpha^-2 (1 + r^2) (1 - beta)^2 L^2 log q
/// T   ~ c_eta^-1 (1 + |D|^-1/2) (1 + L sigma + K^-1/2) (1 - beta) alpha^-1 L
///
/// Only ratios of these values are meaningful.
pub fn theorem_bounds(p: &BoundInputs) -> Result<TheoremBounds> {
    if !(p.alpha > 0.0 && p.alpha <= 1.0) {
        return Err(invalid("alpha must lie in (0, 1]"));
    }
    if !(p.l >= 2.0) {
        return Err(invalid("L must be at least 2"));
    }
    if !(p.beta >= 0.0 && p.beta < 1.0 - 1.0 / p.l) {
        return Err(invalid("beta must lie in [0, 1 - 1/L)"));
    }
    if !(p.sigma >= 0.0 && p.sigma < 1.0 / p.l) {
        return Err(invalid("sigma must lie in [0, 1/L)"));
    }
    if !(p.q > 1.0) {
        return Err(invalid("q must exceed 1"));
    }
    if !(p.k > p.l * p.l * p.q.ln()) {
        return Err(invalid("K must exceed L^2 log q"));
    }
    if !(p.c_eta > 0.0 && p.samples > 0.0 && p.r >= 0.0) {
        return Err(invalid("c_eta and |D| must be positive"));
    }
    let samples = (1.0 + p.l * p.l * p.sigma * p.sigma + 1.0 / p.k)
        * p.alpha.powi(-2)
        * (1.0 + p.r * p.r)
        * (1.0 - p.beta).powi(2)
        * p.l
        * p.l
        * p.q.ln();
    let iterations = (1.0 + p.samples.powf(-0.5))
        * (1.0 + p.l * p.sigma + p.k.powf(-0.5))
        * (1.0 - p.beta)
        * p.l
        / (p.c_eta * p.alpha);
    Ok(TheoremBounds {
        samples,
        iterations,
    })
}
