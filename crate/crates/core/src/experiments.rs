//! Monte-Carlo sweeps over the synthetic data model: sample-complexity
//! phase transitions, convergence speed, joint sampling and pruning grids,
//! and pruning-strategy comparisons.
//!
//! A sweep is a grid of cells. A cell fixes one value of the primary
//! parameter, optionally one value of a second parameter, and an arm (no
//! pruning, magnitude pruning or random pruning). Trial `t` of grid point
//! `g` uses the seed `derive_seed(seed, [g, t])` for everything it draws.
//! The arm is not part of the seed, so arms are paired. Each trial builds
//! one graph and trains once per |D| in the size grid on nested training
//! sets that share one test set.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{invalid, Result};
use crate::rng::{self, tag};
use crate::sampler::{estimate_alpha, gamma_for_alpha, SamplerKind};
use crate::stats::{binomial_se, linear_fit, mean, paired_t, std_dev, LinearFit};
use crate::synth::{generate_graph, generate_patterns, nested_splits, GenConfig, GeneratedData};
use crate::trainer::{no_hook, run_algorithm1, PruneMethod, TrainConfig, TrialOutcome};

str_enum!(Experiment {
    PhaseTransition => "phase_transition",
    Convergence => "convergence",
    JointGrid => "joint_grid",
    PruneCompare => "prune_compare",
});

str_enum!(Param {
    Alpha => "alpha",
    Beta => "beta",
    R => "r",
    K => "k",
    Sigma => "sigma",
    TrainSize => "train_size",
    CEta => "c_eta",
});

str_enum!(Arm { NoPrune => "none", Magnitude => "magnitude", Random => "random" });

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub experiment: Experiment,
    pub gen: GenConfig,
    pub train: TrainConfig,
    pub param: Param,
    pub values: Vec<f64>,
    /// Optional second axis; the joint grid uses it for beta.
    pub param2: Param,
    pub values2: Vec<f64>,
    pub arms: Vec<Arm>,
    /// |D| grid. Only phase transitions and pruning comparisons use more
    /// than one entry; other experiments train at `gen.train_size`.
    pub sizes: Vec<usize>,
    pub trials: usize,
    /// alpha realized by the two-tier gamma at the cell's r. An alpha axis
    /// overrides it; `None` keeps `train.sampling` unchanged.
    pub alpha: Option<f64>,
    /// Samples per class-irrelevant node when measuring alpha.
    pub alpha_reps: usize,
    /// Success rate that defines the |D| threshold.
    pub threshold: f64,
    pub seed: u64,
}

impl SweepSpec {
    /// A one-cell spec on the desk-scale defaults.
    pub fn desk(experiment: Experiment) -> Self {
        let train = TrainConfig::desk();
        Self {
            experiment,
            sizes: vec![GenConfig::desk().train_size],
            gen: GenConfig::desk(),
            param: Param::Beta,
            values: vec![train.beta],
            param2: Param::Beta,
            values2: Vec::new(),
            arms: vec![Arm::Magnitude],
            trials: 100,
            alpha: None,
            alpha_reps: 20,
            threshold: 0.95,
            seed: 0,
            train,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(invalid("sweep grid is empty"));
        }
        if self.experiment == Experiment::JointGrid && self.values2.is_empty() {
            return Err(invalid("joint grid needs a second axis"));
        }
        if self.arms.is_empty() {
            return Err(invalid("no arms to run"));
        }
        if self.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if self.alpha_reps == 0 {
            return Err(invalid("alpha_reps must be at least 1"));
        }
        if !(self.threshold > 0.0 && self.threshold <= 1.0) {
            return Err(invalid("threshold must lie in (0, 1]"));
        }
        if self.uses_size_grid() {
            if self.sizes.is_empty() {
                return Err(invalid("size grid is empty"));
            }
            if self.sizes.windows(2).any(|w| w[0] >= w[1]) || self.sizes[0] < 2 {
                return Err(invalid("sizes must be increasing and at least 2"));
            }
        }
        for (i, j) in self.grid_points() {
            for &arm in &self.arms {
                self.cell_configs(i, j, arm)?;
            }
        }
        Ok(())
    }

    fn uses_size_grid(&self) -> bool {
        matches!(
            self.experiment,
            Experiment::PhaseTransition | Experiment::PruneCompare
        ) && self.param != Param::TrainSize
            && self.param2 != Param::TrainSize
    }

    fn axis2(&self) -> usize {
        self.values2.len().max(1)
    }

    fn grid_points(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let m = self.axis2();
        (0..self.values.len()).flat_map(move |i| (0..m).map(move |j| (i, j)))
    }

    /// Cell index of (i, j, arm).
    pub fn cell_index(&self, i: usize, j: usize, arm: usize) -> usize {
        (i * self.axis2() + j) * self.arms.len() + arm
    }

    /// Generator and trainer settings of one cell, plus its alpha target.
    pub fn cell_configs(
        &self,
        i: usize,
        j: usize,
        arm: Arm,
    ) -> Result<(GenConfig, TrainConfig, Option<f64>)> {
        let mut gen = self.gen.clone();
        let mut train = self.train.clone();
        let mut alpha = self.alpha;
        apply(self.param, self.values[i], &mut gen, &mut train, &mut alpha)?;
        if let Some(&v) = self.values2.get(j) {
            apply(self.param2, v, &mut gen, &mut train, &mut alpha)?;
        }
        match arm {
            Arm::NoPrune => train.beta = 0.0,
            Arm::Magnitude => train.prune_method = PruneMethod::Magnitude,
            Arm::Random => train.prune_method = PruneMethod::Random,
        }
        if let Some(a) = alpha {
            let gamma = gamma_for_alpha(a, train.sampling.r, gen.degree)?;
            train.sampling.kind = SamplerKind::TwoTier;
            train.sampling.gamma = gamma;
        }
        gen.validate()?;
        train.validate()?;
        Ok((gen, train, alpha))
    }

    fn sizes_for(&self, gen: &GenConfig) -> Vec<usize> {
        if self.uses_size_grid() {
            self.sizes.clone()
        } else {
            vec![gen.train_size]
        }
    }
}

fn apply(
    param: Param,
    v: f64,
    gen: &mut GenConfig,
    train: &mut TrainConfig,
    alpha: &mut Option<f64>,
) -> Result<()> {
    let count = |v: f64| -> Result<usize> {
        if v >= 0.0 && v.fract() == 0.0 {
            Ok(v as usize)
        } else {
            Err(invalid(format!("{param} must be a whole number, got {v}")))
        }
    };
    match param {
        Param::Alpha => *alpha = Some(v),
        Param::Beta => train.beta = v,
        Param::R => train.sampling.r = count(v)?,
        Param::K => train.k = count(v)?,
        Param::Sigma => {
            gen.sigma = v;
            train.lucky_sigma = v;
        }
        Param::TrainSize => gen.train_size = count(v)?,
        Param::CEta => train.c_eta = v,
    }
    Ok(())
}

/// One training run: a (cell, trial, |D|) triple.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub cell: usize,
    pub arm: Arm,
    pub value: f64,
    pub value2: Option<f64>,
    pub alpha_target: Option<f64>,
    pub gamma: f64,
    pub r: usize,
    pub beta: f64,
    pub k: usize,
    pub sigma: f64,
    pub c_eta: f64,
    pub size: usize,
    pub trial: usize,
    pub seed: u64,
    pub outcome: TrialOutcome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: usize,
    pub arm: Arm,
    pub value: f64,
    pub value2: Option<f64>,
    pub alpha_target: Option<f64>,
    pub alpha_hat: f64,
    pub alpha_se: f64,
    pub gamma: f64,
    pub r: usize,
    pub beta: f64,
    pub k: usize,
    pub sigma: f64,
    pub c_eta: f64,
    pub size: usize,
    pub trials: usize,
    pub success_rate: f64,
    pub success_se: f64,
    pub converged_rate: f64,
    /// Mean re-training iterations; runs that hit T_max count as T_max.
    pub iter_mean: f64,
    pub iter_std: f64,
    pub test_error_mean: f64,
}

/// Where a cell's success curve over |D| crosses the thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellThreshold {
    pub cell: usize,
    pub arm: Arm,
    pub value: f64,
    pub value2: Option<f64>,
    pub alpha_hat: f64,
    /// Smallest grid |D| whose success rate reaches the threshold.
    pub size: Option<usize>,
    /// Linear interpolation of the threshold crossing between grid points.
    pub interpolated: Option<f64>,
    /// Interpolated 0.5 crossing.
    pub half: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub arm: Arm,
    /// Name of the predictor on the x axis.
    pub predictor: String,
    /// Name of the fitted quantity on the y axis.
    pub response: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub fit: Option<LinearFit>,
    /// Cells left out because their response was undefined.
    pub missing: Vec<usize>,
}

/// Paired comparison of an arm against the unpruned arm of the same grid
/// point, trial by trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedComparison {
    pub value: f64,
    pub value2: Option<f64>,
    pub size: usize,
    pub arm: Arm,
    pub baseline: Arm,
    pub metric: String,
    pub mean_arm: f64,
    pub mean_baseline: f64,
    pub t: f64,
    pub trials: usize,
}

impl PairedComparison {
    /// One-sided test at level `level` that the arm's metric exceeds the
    /// baseline's.
    pub fn arm_greater(&self, level: f64) -> bool {
        self.t > t_critical(level, self.trials)
    }

    /// One-sided test at level `level` that the arm's metric is below the
    /// baseline's.
    pub fn arm_smaller(&self, level: f64) -> bool {
        self.t < -t_critical(level, self.trials)
    }
}

/// Upper `level` quantile of Student's t with n - 1 degrees of freedom.
pub fn t_critical(level: f64, n: usize) -> f64 {
    if n < 2 {
        return f64::INFINITY;
    }
    StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .map(|t| t.inverse_cdf(1.0 - level))
        .unwrap_or(f64::INFINITY)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub rows: Vec<TrialRow>,
    pub summary: Vec<CellSummary>,
    pub thresholds: Vec<CellThreshold>,
    pub fits: Vec<FitReport>,
    pub comparisons: Vec<PairedComparison>,
}

struct Job {
    i: usize,
    j: usize,
    trial: usize,
}

/// Runs the sweep on a pool of `jobs` threads. Results do not depend on
/// `jobs`.
pub fn run_sweep(spec: &SweepSpec, jobs: usize) -> Result<SweepResult> {
    spec.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| invalid(format!("thread pool: {e}")))?;
    pool.install(|| execute(spec))
}

pub fn phase_transition(spec: &SweepSpec, jobs: usize) -> Result<SweepResult> {
    run_sweep(
        &SweepSpec {
            experiment: Experiment::PhaseTransition,
            ..spec.clone()
        },
        jobs,
    )
}

pub fn convergence_sweep(spec: &SweepSpec, jobs: usize) -> Result<SweepResult> {
    run_sweep(
        &SweepSpec {
            experiment: Experiment::Convergence,
            ..spec.clone()
        },
        jobs,
    )
}

pub fn joint_grid(spec: &SweepSpec, jobs: usize) -> Result<SweepResult> {
    run_sweep(
        &SweepSpec {
            experiment: Experiment::JointGrid,
            ..spec.clone()
        },
        jobs,
    )
}

pub fn pruning_comparison(spec: &SweepSpec, jobs: usize) -> Result<SweepResult> {
    run_sweep(
        &SweepSpec {
            experiment: Experiment::PruneCompare,
            ..spec.clone()
        },
        jobs,
    )
}

fn grid_seed(spec: &SweepSpec, i: usize, j: usize, trial: usize) -> u64 {
    rng::derive_seed(spec.seed, &[(i * spec.axis2() + j) as u64, trial as u64])
}

fn build_data(gen: &GenConfig, seed: u64) -> Result<GeneratedData> {
    let gen = GenConfig {
        seed,
        ..gen.clone()
    };
    let patterns = generate_patterns(&gen)?;
    generate_graph(&patterns, &gen)
}

fn execute(spec: &SweepSpec) -> Result<SweepResult> {
    let points: Vec<(usize, usize)> = spec.grid_points().collect();
    let jobs: Vec<Job> = points
        .iter()
        .flat_map(|&(i, j)| (0..spec.trials).map(move |trial| Job { i, j, trial }))
        .collect();
    let per_job: Vec<Vec<TrialRow>> = jobs
        .par_iter()
        .map(|job| run_job(spec, job))
        .collect::<Result<_>>()?;
    let mut rows: Vec<TrialRow> = per_job.into_iter().flatten().collect();
    rows.sort_by_key(|r| (r.cell, r.trial, r.size));

    // alpha is measured once per grid point on the graph of trial 0
    let alphas: Vec<(f64, f64)> = points
        .par_iter()
        .map(|&(i, j)| -> Result<(f64, f64)> {
            let (gen, train, _) = spec.cell_configs(i, j, spec.arms[0])?;
            let seed = grid_seed(spec, i, j, 0);
            let data = build_data(&gen, seed)?;
            let g = &data.graph;
            let irrelevant: Vec<usize> = (0..g.n()).filter(|&v| !g.tag(v).is_relevant()).collect();
            let est = estimate_alpha(&train.sampling, g, &irrelevant, spec.alpha_reps, seed)?;
            Ok((est.alpha, est.std_err))
        })
        .collect::<Result<_>>()?;

    let summary = summarize(spec, &rows, &alphas)?;
    let thresholds = if spec.uses_size_grid() {
        find_thresholds(spec, &summary)
    } else {
        Vec::new()
    };
    let fits = fit_all(spec, &summary, &thresholds);
    let comparisons = compare_arms(spec, &rows);
    Ok(SweepResult {
        spec: spec.clone(),
        rows,
        summary,
        thresholds,
        fits,
        comparisons,
    })
}

fn run_job(spec: &SweepSpec, job: &Job) -> Result<Vec<TrialRow>> {
    let seed = grid_seed(spec, job.i, job.j, job.trial);
    let (gen, _, _) = spec.cell_configs(job.i, job.j, spec.arms[0])?;
    let sizes = spec.sizes_for(&gen);
    let data = build_data(&gen, seed)?;
    let (trains, test) = nested_splits(&data.graph, &sizes, &mut rng::stream(seed, &[tag::SPLIT]))?;
    let mut rows = Vec::with_capacity(sizes.len() * spec.arms.len());
    for (a, &arm) in spec.arms.iter().enumerate() {
        let (_, train_cfg, alpha_target) = spec.cell_configs(job.i, job.j, arm)?;
        let train_cfg = TrainConfig { seed, ..train_cfg };
        for (train, &size) in trains.iter().zip(&sizes) {
            let (_, outcome) = run_algorithm1(&data.graph, train, &test, &train_cfg, &mut no_hook)?;
            rows.push(TrialRow {
                cell: spec.cell_index(job.i, job.j, a),
                arm,
                value: spec.values[job.i],
                value2: spec.values2.get(job.j).copied(),
                alpha_target,
                gamma: train_cfg.sampling.gamma,
                r: train_cfg.sampling.r,
                beta: train_cfg.beta,
                k: train_cfg.k,
                sigma: gen.sigma,
                c_eta: train_cfg.c_eta,
                size,
                trial: job.trial,
                seed,
                outcome,
            });
        }
    }
    Ok(rows)
}

fn summarize(
    spec: &SweepSpec,
    rows: &[TrialRow],
    alphas: &[(f64, f64)],
) -> Result<Vec<CellSummary>> {
    let mut out = Vec::new();
    for (p, (i, j)) in spec.grid_points().enumerate() {
        for (a, &arm) in spec.arms.iter().enumerate() {
            let cell = spec.cell_index(i, j, a);
            let (gen, train, alpha_target) = spec.cell_configs(i, j, arm)?;
            for size in spec.sizes_for(&gen) {
                let sel: Vec<&TrialOutcome> = rows
                    .iter()
                    .filter(|r| r.cell == cell && r.size == size)
                    .map(|r| &r.outcome)
                    .collect();
                let n = sel.len();
                let rate = sel.iter().filter(|o| o.success).count() as f64 / n as f64;
                let iters: Vec<f64> = sel.iter().map(|o| o.iterations as f64).collect();
                let errors: Vec<f64> = sel.iter().map(|o| o.test_error).collect();
                out.push(CellSummary {
                    cell,
                    arm,
                    value: spec.values[i],
                    value2: spec.values2.get(j).copied(),
                    alpha_target,
                    alpha_hat: alphas[p].0,
                    alpha_se: alphas[p].1,
                    gamma: train.sampling.gamma,
                    r: train.sampling.r,
                    beta: train.beta,
                    k: train.k,
                    sigma: gen.sigma,
                    c_eta: train.c_eta,
                    size,
                    trials: n,
                    success_rate: rate,
                    success_se: binomial_se(rate, n),
                    converged_rate: sel.iter().filter(|o| o.converged).count() as f64 / n as f64,
                    iter_mean: mean(&iters),
                    iter_std: std_dev(&iters),
                    test_error_mean: mean(&errors),
                });
            }
        }
    }
    Ok(out)
}

/// Interpolated |D| where the rate first reaches `level`; `None` if it never
/// does. Below the first grid point the first size is returned.
pub fn crossing(sizes: &[usize], rates: &[f64], level: f64) -> Option<f64> {
    let k = rates.iter().position(|&r| r >= level)?;
    if k == 0 {
        return Some(sizes[0] as f64);
    }
    let (x0, x1) = (sizes[k - 1] as f64, sizes[k] as f64);
    let (y0, y1) = (rates[k - 1], rates[k]);
    Some(x0 + (level - y0) / (y1 - y0) * (x1 - x0))
}

fn find_thresholds(spec: &SweepSpec, summary: &[CellSummary]) -> Vec<CellThreshold> {
    let mut cells: Vec<usize> = summary.iter().map(|s| s.cell).collect();
    cells.dedup();
    cells
        .into_iter()
        .map(|cell| {
            let rows: Vec<&CellSummary> = summary.iter().filter(|s| s.cell == cell).collect();
            let sizes: Vec<usize> = rows.iter().map(|s| s.size).collect();
            let rates: Vec<f64> = rows.iter().map(|s| s.success_rate).collect();
            let first = rows[0];
            CellThreshold {
                cell,
                arm: first.arm,
                value: first.value,
                value2: first.value2,
                alpha_hat: first.alpha_hat,
                size: rates
                    .iter()
                    .position(|&r| r >= spec.threshold)
                    .map(|k| sizes[k]),
                interpolated: crossing(&sizes, &rates, spec.threshold),
                half: crossing(&sizes, &rates, 0.5),
            }
        })
        .collect()
}

/// Predictor the theory ties to the swept parameter.
fn predictor(spec: &SweepSpec, param: Param, value: f64, alpha_hat: f64) -> Option<(String, f64)> {
    let convergence = spec.experiment == Experiment::Convergence;
    Some(match (param, convergence) {
        (Param::Alpha, false) => ("alpha_hat^-2".into(), alpha_hat.powi(-2)),
        (Param::Alpha, true) => ("alpha_hat^-1".into(), 1.0 / alpha_hat),
        (Param::Beta, false) => ("(1-beta)^2".into(), (1.0 - value).powi(2)),
        (Param::Beta, true) => ("beta".into(), value),
        (Param::R, false) => ("r^2".into(), value * value),
        (Param::K, false) => ("1/K".into(), 1.0 / value),
        (Param::Sigma, false) => ("sigma^2".into(), value * value),
        (Param::CEta, _) => ("1/c_eta".into(), 1.0 / value),
        _ => return None,
    })
}

fn fit_all(
    spec: &SweepSpec,
    summary: &[CellSummary],
    thresholds: &[CellThreshold],
) -> Vec<FitReport> {
    if !spec.values2.is_empty()
        || !matches!(
            spec.experiment,
            Experiment::PhaseTransition | Experiment::Convergence
        )
    {
        return Vec::new();
    }
    let mut out = Vec::new();
    for &arm in &spec.arms {
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut missing = Vec::new();
        let mut name = None;
        let response;
        if spec.experiment == Experiment::PhaseTransition {
            response = "threshold_interpolated";
            for t in thresholds.iter().filter(|t| t.arm == arm) {
                let Some((n, px)) = predictor(spec, spec.param, t.value, t.alpha_hat) else {
                    continue;
                };
                name = Some(n);
                match t.interpolated {
                    Some(v) => {
                        x.push(px);
                        y.push(v);
                    }
                    None => missing.push(t.cell),
                }
            }
        } else {
            response = "iter_mean";
            for s in summary.iter().filter(|s| s.arm == arm) {
                let Some((n, px)) = predictor(spec, spec.param, s.value, s.alpha_hat) else {
                    continue;
                };
                name = Some(n);
                x.push(px);
                y.push(s.iter_mean);
            }
        }
        if let Some(predictor) = name {
            let fit = linear_fit(&x, &y);
            out.push(FitReport {
                arm,
                predictor,
                response: response.into(),
                x,
                y,
                fit,
                missing,
            });
        }
    }
    out
}

fn compare_arms(spec: &SweepSpec, rows: &[TrialRow]) -> Vec<PairedComparison> {
    let Some(base) = spec.arms.iter().position(|&a| a == Arm::NoPrune) else {
        return Vec::new();
    };
    let metric = if spec.experiment == Experiment::Convergence {
        "iterations"
    } else {
        "test_error"
    };
    let value = |o: &TrialOutcome| {
        if metric == "iterations" {
            o.iterations as f64
        } else {
            o.test_error
        }
    };
    let mut out = Vec::new();
    for (i, j) in spec.grid_points() {
        let Ok((gen, _, _)) = spec.cell_configs(i, j, Arm::NoPrune) else {
            continue;
        };
        for size in spec.sizes_for(&gen) {
            let series = |a: usize| -> Vec<f64> {
                let cell = spec.cell_index(i, j, a);
                rows.iter()
                    .filter(|r| r.cell == cell && r.size == size)
                    .map(|r| value(&r.outcome))
                    .collect()
            };
            let b = series(base);
            for (a, &arm) in spec.arms.iter().enumerate() {
                if a == base {
                    continue;
                }
                let s = series(a);
                out.push(PairedComparison {
                    value: spec.values[i],
                    value2: spec.values2.get(j).copied(),
                    size,
                    arm,
                    baseline: Arm::NoPrune,
                    metric: metric.into(),
                    mean_arm: mean(&s),
                    mean_baseline: mean(&b),
                    t: paired_t(&s, &b),
                    trials: s.len(),
                });
            }
        }
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

impl SweepResult {
    /// One row per run, sorted by (cell, trial, |D|).
    pub fn sweep_csv(&self) -> String {
        let mut s = String::from(
            "experiment,cell,arm,param,value,param2,value2,alpha_target,gamma,r,beta,k,sigma,c_eta,d,l,n,degree,\
             size,trial,seed,success,converged,iterations,pretrain_iterations,test_error,test_hinge,train_error,\
             train_hinge,lucky_init,lucky_pretrained,lucky_init_kept,surviving\n",
        );
        let g = &self.spec.gen;
        for r in &self.rows {
            let o = &r.outcome;
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                self.spec.experiment,
                r.cell,
                r.arm,
                self.spec.param,
                r.value,
                self.param2_name(),
                opt(r.value2),
                opt(r.alpha_target),
                r.gamma,
                r.r,
                r.beta,
                r.k,
                r.sigma,
                r.c_eta,
                g.d,
                g.l,
                g.n,
                g.degree,
                r.size,
                r.trial,
                r.seed,
                o.success,
                o.converged,
                o.iterations,
                o.pretrain_iterations,
                o.test_error,
                o.test_hinge,
                o.train_error,
                o.train_hinge,
                o.lucky_init,
                o.lucky_pretrained,
                o.lucky_init_kept,
                o.surviving,
            );
        }
        s
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from(
            "experiment,cell,arm,param,value,param2,value2,alpha_target,alpha_hat,alpha_se,gamma,r,beta,k,sigma,\
             c_eta,size,trials,success_rate,success_se,converged_rate,iter_mean,iter_std,test_error_mean\n",
        );
        for c in &self.summary {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                self.spec.experiment,
                c.cell,
                c.arm,
                self.spec.param,
                c.value,
                self.param2_name(),
                opt(c.value2),
                opt(c.alpha_target),
                c.alpha_hat,
                c.alpha_se,
                c.gamma,
                c.r,
                c.beta,
                c.k,
                c.sigma,
                c.c_eta,
                c.size,
                c.trials,
                c.success_rate,
                c.success_se,
                c.converged_rate,
                c.iter_mean,
                c.iter_std,
                c.test_error_mean,
            );
        }
        s
    }

    fn param2_name(&self) -> String {
        if self.spec.values2.is_empty() {
            String::new()
        } else {
            self.spec.param2.to_string()
        }
    }

    /// Grids, thresholds, fits and paired comparisons as JSON.
    pub fn fit_json(&self) -> String {
        #[derive(Serialize)]
        struct FitFile<'a> {
            experiment: Experiment,
            param: Param,
            values: &'a [f64],
            param2: Option<Param>,
            values2: &'a [f64],
            arms: &'a [Arm],
            sizes: &'a [usize],
            trials: usize,
            threshold: f64,
            thresholds: &'a [CellThreshold],
            fits: &'a [FitReport],
            comparisons: &'a [PairedComparison],
        }
        let file = FitFile {
            experiment: self.spec.experiment,
            param: self.spec.param,
            values: &self.spec.values,
            param2: (!self.spec.values2.is_empty()).then_some(self.spec.param2),
            values2: &self.spec.values2,
            arms: &self.spec.arms,
            sizes: &self.spec.sizes,
            trials: self.spec.trials,
            threshold: self.spec.threshold,
            thresholds: &self.thresholds,
            fits: &self.fits,
            comparisons: &self.comparisons,
        };
        serde_json::to_string_pretty(&file).expect("plain data serializes") + "\n"
    }

    /// Summary rows of one arm at one |D|, in grid order.
    pub fn cells_at(&self, arm: Arm, size: usize) -> Vec<&CellSummary> {
        self.summary
            .iter()
            .filter(|c| c.arm == arm && c.size == size)
            .collect()
    }

    /// Success-rate matrix (rows: primary values, columns: second axis) for
    /// one arm at one |D|.
    pub fn grid(&self, arm: Arm, size: usize) -> Vec<Vec<f64>> {
        let m = self.spec.axis2();
        self.cells_at(arm, size)
            .chunks(m)
            .map(|row| row.iter().map(|c| c.success_rate).collect())
            .collect()
    }
}

/// True when no rate drops below an earlier one by more than `slack`
/// combined standard errors.
pub fn monotone_within(rates: &[f64], ses: &[f64], slack: f64) -> bool {
    for a in 0..rates.len() {
        for b in a + 1..rates.len() {
            let se = (ses[a].powi(2) + ses[b].powi(2)).sqrt();
            if rates[a] - rates[b] > slack * se.max(1e-12) {
                return false;
            }
        }
    }
    true
}
