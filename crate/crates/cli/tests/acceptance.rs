//! Acceptance suite. Prints one PASS/FAIL line per criterion, with the
//! measured statistics underneath, and exits 0 either way so that a
//! criterion the model genuinely misses is reported rather than hidden.
//!
//! `SPARSEGNN_ACCEPTANCE_TRIALS` scales the Monte-Carlo trials per cell
//! (default 100).

#[path = "../../core/tests/support/oracle.rs"]
mod oracle;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use sparsegnn::analysis::{detect_lucky, eps_bound, vc_verify};
use sparsegnn::experiments::{
    monotone_within, run_sweep, Arm, Experiment, Param, SweepResult, SweepSpec,
};
use sparsegnn::sampler::{alpha_bound_importance, alpha_bound_uniform, estimate_alpha};
use sparsegnn::trainer::{initialize, magnitude_prune, pretrain, PruneScope};
use sparsegnn::*;

const SIZES: [usize; 11] = [4, 6, 8, 10, 12, 14, 16, 20, 24, 32, 40];

struct Criterion {
    id: u32,
    title: &'static str,
    lines: Vec<String>,
    pass: bool,
}

impl Criterion {
    fn new(id: u32, title: &'static str) -> Self {
        Self {
            id,
            title,
            lines: Vec::new(),
            pass: true,
        }
    }

    /// A sub-check that counts towards the verdict.
    fn check(&mut self, ok: bool, text: String) {
        self.pass &= ok;
        self.lines
            .push(format!("{} {text}", if ok { "ok  " } else { "MISS" }));
    }

    /// Context that does not affect the verdict.
    fn note(&mut self, text: String) {
        self.lines.push(format!("note {text}"));
    }

    fn report(self, secs: f64) -> bool {
        println!(
            "{} {:>2} {} ({secs:.1}s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.title
        );
        for l in &self.lines {
            println!("       {l}");
        }
        self.pass
    }
}

fn trials() -> usize {
    std::env::var("SPARSEGNN_ACCEPTANCE_TRIALS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(100)
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn gradient() -> Criterion {
    let mut c = Criterion::new(1, "gradient matches finite differences");
    let g = oracle::gradient_check(5, 3, 4, NormMode::OverSurviving, false, 1, 100);
    c.check(
        g.instances == 100 && g.max_rel_err <= 1e-5,
        format!(
            "{} instances (d=5, K=3, |D|=4): max relative error {:.2e} <= 1e-5",
            g.instances, g.max_rel_err
        ),
    );
    c.check(
        g.max_risk_gap < 1e-12,
        format!("risk agrees with the oracle to {:.1e}", g.max_risk_gap),
    );
    c
}

fn lucky_symmetry() -> Criterion {
    let mut c = Criterion::new(2, "lucky-neuron symmetry at initialization");
    let (l, k) = (10, 10_000);
    let gen = GenConfig {
        d: 10,
        l,
        ..GenConfig::desk()
    };
    let ps = generate_patterns(&gen).unwrap();
    let model = initialize(
        gen.d,
        &TrainConfig {
            k,
            seed: 1,
            ..TrainConfig::desk()
        },
    )
    .unwrap();

    let rep = detect_lucky(&model, &ps, 0.0, 10.0);
    let p = 1.0 / l as f64;
    let se = (p * (1.0 - p) / k as f64).sqrt();
    c.check(
        (rep.fraction - p).abs() <= 3.0 * se,
        format!(
            "sigma=0: fraction {:.4} vs 1/L = {p:.4} (3 se = {:.4})",
            rep.fraction,
            3.0 * se
        ),
    );
    let rep = detect_lucky(&model, &ps, 0.02, 10.0);
    c.check(
        rep.fraction >= rep.eps_bound,
        format!(
            "sigma=0.02: fraction {:.4} >= bound {:.4} (eps_K {:.3})",
            rep.fraction, rep.eps_bound, rep.eps_k
        ),
    );
    let rep = detect_lucky(&model, &ps, 0.2, 10.0);
    c.note(format!(
        "sigma=0.2: fraction {:.4} vs bound {:.4}; the bound does not hold at this noise level",
        rep.fraction,
        eps_bound(rep.eps_k, l, 0.2)
    ));
    c
}

struct PretrainTrial {
    lucky: usize,
    persists: bool,
    ordered: bool,
    ordered_init_unlucky: bool,
    pruning_keeps: bool,
}

fn norm(w: &[f64]) -> f64 {
    w.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn pretrain_trial(seed: u64) -> PretrainTrial {
    let sigma = 0.02;
    let gen = GenConfig {
        sigma,
        train_size: 200,
        seed,
        ..GenConfig::desk()
    };
    let ps = generate_patterns(&gen).unwrap();
    let data = generate_graph(&ps, &gen).unwrap();
    let tc = TrainConfig {
        sampling: SamplingStrategy::full(),
        pretrain_iters: Some(50),
        lucky_sigma: sigma,
        seed,
        ..TrainConfig::desk()
    };
    let mut m = initialize(gen.d, &tc).unwrap();
    let l0 = lucky_mask(&m, &ps, sigma);
    let mut out = PretrainTrial {
        lucky: l0.iter().filter(|&&x| x).count(),
        persists: true,
        ordered: true,
        ordered_init_unlucky: true,
        pruning_keeps: true,
    };
    pretrain(
        &mut m,
        &data.graph,
        &data.train,
        &tc,
        &mut |_, t, m: &ModelState| {
            let now = lucky_mask(m, &ps, sigma);
            if t % 10 == 0 && l0.iter().zip(&now).any(|(&a, &b)| a && !b) {
                out.persists = false;
            }
            if t >= 5 {
                let norms: Vec<f64> = (0..m.width()).map(|k| norm(m.weight(k))).collect();
                let min_lucky = (0..m.width())
                    .filter(|&k| l0[k])
                    .map(|k| norms[k])
                    .fold(f64::INFINITY, f64::min);
                let max_of = |set: &dyn Fn(usize) -> bool| {
                    (0..m.width())
                        .filter(|&k| set(k))
                        .map(|k| norms[k])
                        .fold(0.0, f64::max)
                };
                out.ordered &= min_lucky > max_of(&|k| !now[k]);
                out.ordered_init_unlucky &= min_lucky > max_of(&|k| !l0[k]);
            }
            if t == 5 {
                let (mask, _) = magnitude_prune(m, 0.5, PruneScope::PerClass).unwrap();
                out.pruning_keeps = l0.iter().zip(&mask).all(|(&l, &kept)| !l || kept);
            }
        },
    )
    .unwrap();
    out
}

fn persistence_and_pruning(n: usize) -> (Criterion, Criterion) {
    let runs: Vec<PretrainTrial> = (0..n as u64).map(pretrain_trial).collect();
    let count = |f: fn(&PretrainTrial) -> bool| runs.iter().filter(|r| f(r)).count();
    let need = (0.95 * n as f64).ceil() as usize;
    let mean_lucky = runs.iter().map(|r| r.lucky as f64).sum::<f64>() / n as f64;

    let mut c3 = Criterion::new(3, "lucky persistence and magnitude ordering");
    c3.note(format!(
        "sigma=0.02, full sampling, |D|=200, 50 steps; {mean_lucky:.1} lucky neurons per trial"
    ));
    let p = count(|r| r.persists);
    c3.check(
        p >= need,
        format!("init-lucky set stays lucky at every 10th step: {p}/{n} (need {need})"),
    );
    let o = count(|r| r.ordered);
    c3.check(
        o >= need,
        format!(
            "min init-lucky norm > max currently-unlucky norm from step 5: {o}/{n} (need {need})"
        ),
    );
    c3.note(format!(
        "against every init-unlucky neuron instead: {}/{n}",
        count(|r| r.ordered_init_unlucky)
    ));

    let mut c4 = Criterion::new(4, "magnitude pruning keeps the lucky neurons");
    let k = count(|r| r.pruning_keeps);
    c4.check(
        k >= need,
        format!("beta=0.5 after 5 steps keeps every init-lucky neuron: {k}/{n} (need {need})"),
    );
    (c3, c4)
}

fn phase_spec(param: Param, values: Vec<f64>, n: usize) -> SweepSpec {
    let mut s = SweepSpec::desk(Experiment::PhaseTransition);
    s.sizes = SIZES.to_vec();
    s.trials = n;
    s.train.sampling.r = 10;
    s.param = param;
    s.values = values;
    s
}

fn fit_line(c: &mut Criterion, label: &str, res: &SweepResult, min_r2: f64) {
    let f = &res.fits[0];
    let alphas: Vec<String> = res
        .thresholds
        .iter()
        .map(|t| format!("{:.2}", t.alpha_hat))
        .collect();
    let thresholds: Vec<String> = f.y.iter().map(|y| format!("{y:.1}")).collect();
    match &f.fit {
        Some(fit) if f.missing.is_empty() => c.check(
            fit.r2 >= min_r2,
            format!(
                "{label}: |D|* = {:.2} {} + {:.2}, R2 {:.3} (>= {min_r2}); |D|* [{}], alpha_hat [{}]",
                fit.slope,
                f.predictor,
                fit.intercept,
                fit.r2,
                thresholds.join(", "),
                alphas.join(", ")
            ),
        ),
        _ => c.check(false, format!("{label}: {} cells never reached the threshold", f.missing.len())),
    }
}

fn sample_complexity(n: usize) -> Criterion {
    let mut c = Criterion::new(5, "sample-complexity scaling");
    let res = run_sweep(
        &phase_spec(Param::Alpha, vec![0.4, 0.55, 0.7, 0.85, 1.0], n),
        jobs(),
    )
    .unwrap();
    fit_line(&mut c, "alpha (r=10)", &res, 0.9);

    let mut spec = phase_spec(Param::Beta, vec![0.0, 0.2, 0.4, 0.6], n);
    spec.alpha = Some(0.5);
    let res = run_sweep(&spec, jobs()).unwrap();
    fit_line(&mut c, "beta (alpha=0.5, r=10)", &res, 0.85);

    let mut spec = phase_spec(Param::R, vec![5.0, 10.0, 15.0, 20.0], n);
    spec.alpha = Some(0.8);
    let res = run_sweep(&spec, jobs()).unwrap();
    fit_line(&mut c, "r (alpha=0.8)", &res, 0.85);
    c
}

fn convergence(n: usize) -> Criterion {
    let mut c = Criterion::new(6, "convergence scaling");
    let mut spec = SweepSpec::desk(Experiment::Convergence);
    spec.gen.train_size = 40;
    spec.train.sampling.r = 10;
    spec.trials = n;
    spec.param = Param::Alpha;
    spec.values = vec![0.4, 0.55, 0.7, 0.85, 1.0];
    let res = run_sweep(&spec, jobs()).unwrap();
    let f = &res.fits[0];
    let iters: Vec<String> = f.y.iter().map(|y| format!("{y:.2}")).collect();
    let r2 = f.fit.as_ref().map_or(0.0, |f| f.r2);
    c.check(
        r2 >= 0.9,
        format!(
            "iterations vs alpha_hat^-1: R2 {r2:.3} (>= 0.9); iterations [{}]",
            iters.join(", ")
        ),
    );

    spec.param = Param::Beta;
    spec.values = vec![0.0, 0.2, 0.4, 0.6];
    spec.alpha = Some(0.5);
    spec.arms = vec![Arm::NoPrune, Arm::Magnitude, Arm::Random];
    let res = run_sweep(&spec, jobs()).unwrap();
    let mag: Vec<f64> = res
        .cells_at(Arm::Magnitude, 40)
        .iter()
        .map(|s| s.iter_mean)
        .collect();
    let show = |v: &[f64]| {
        v.iter()
            .map(|x| format!("{x:.2}"))
            .collect::<Vec<_>>()
            .join(", ")
    };
    c.check(
        mag.windows(2).all(|w| w[1] <= w[0]),
        format!("magnitude arm nonincreasing in beta: [{}]", show(&mag)),
    );
    let random: Vec<_> = res
        .comparisons
        .iter()
        .filter(|p| p.arm == Arm::Random)
        .collect();
    let ok = random.iter().all(|p| p.mean_arm >= p.mean_baseline);
    let pairs: Vec<String> = random
        .iter()
        .map(|p| format!("{:.2}>={:.2}", p.mean_arm, p.mean_baseline))
        .collect();
    c.check(
        ok,
        format!(
            "random arm >= no-pruning arm at every beta (paired seeds): [{}]",
            pairs.join(", ")
        ),
    );
    c
}

fn joint(n: usize) -> Criterion {
    let mut c = Criterion::new(7, "joint edge and model sparsification");
    let size = 8;
    let mut spec = SweepSpec::desk(Experiment::JointGrid);
    spec.gen.train_size = size;
    spec.train.sampling.r = 10;
    spec.trials = n;
    spec.param = Param::Alpha;
    spec.values = vec![0.4, 0.6, 0.8, 1.0];
    spec.param2 = Param::Beta;
    spec.values2 = vec![0.0, 0.2, 0.4];
    let res = run_sweep(&spec, jobs()).unwrap();
    let grid = res.grid(Arm::Magnitude, size);
    let cells = res.cells_at(Arm::Magnitude, size);
    let (hi, lo) = (grid[3][2], grid[0][0]);
    c.check(hi >= lo + 0.2, format!("|D|={size}: success {hi:.2} at (alpha 1.0, beta 0.4) vs {lo:.2} at (alpha 0.4, beta 0)"));
    let m = spec.values2.len();
    for (j, beta) in spec.values2.iter().enumerate() {
        let rates: Vec<f64> = (0..spec.values.len())
            .map(|i| cells[i * m + j].success_rate)
            .collect();
        let ses: Vec<f64> = (0..spec.values.len())
            .map(|i| cells[i * m + j].success_se)
            .collect();
        let shown: Vec<String> = rates.iter().map(|r| format!("{r:.2}")).collect();
        c.check(
            monotone_within(&rates, &ses, 3.0),
            format!(
                "beta {beta}: success over alpha [{}] monotone within 3 se",
                shown.join(", ")
            ),
        );
    }
    c
}

fn alpha_bounds() -> Criterion {
    let mut c = Criterion::new(8, "sampling probability bounds");
    let gen = GenConfig::desk();
    let data = generate_graph(&generate_patterns(&gen).unwrap(), &gen).unwrap();
    let g = &data.graph;
    let nodes: Vec<usize> = (0..g.n()).filter(|&v| !g.tag(v).is_relevant()).collect();
    let c_bar = nodes
        .iter()
        .map(|&v| g.relevant_neighbor_count(v))
        .min()
        .unwrap() as f64;
    let big_r = gen.degree as f64;
    c.note(format!(
        "{} class-irrelevant nodes of degree {big_r}, c_bar {c_bar}",
        nodes.len()
    ));
    let reps = 200;
    for r in [1usize, 5, 10] {
        let est = estimate_alpha(&SamplingStrategy::uniform(r), g, &nodes, reps, 7).unwrap();
        let target = r as f64 / big_r;
        let tol = 3.0 * est.std_err;
        c.check(
            (est.alpha - target).abs() <= tol,
            format!(
                "uniform r={r}: alpha_hat {:.4} vs r/R {target:.4} (3 se {tol:.4})",
                est.alpha
            ),
        );
        let (lo, hi) = alpha_bound_uniform(c_bar, big_r, r as f64).unwrap();
        c.check(
            est.alpha >= lo - tol && est.alpha <= hi + tol,
            format!(
                "uniform r={r}: alpha_hat {:.4} inside bracket [{lo:.4}, {hi:.4}]",
                est.alpha
            ),
        );
    }
    let r = 5;
    for gamma in [2.0, 5.0] {
        let est =
            estimate_alpha(&SamplingStrategy::two_tier(r, gamma), g, &nodes, reps, 7).unwrap();
        let bound = alpha_bound_importance(gamma, big_r, r as f64)
            .unwrap()
            .lower;
        c.check(
            est.alpha >= bound - 3.0 * est.std_err,
            format!(
                "two_tier r={r} gamma={gamma}: alpha_hat {:.4} >= lower bound {bound:.4}",
                est.alpha
            ),
        );
    }
    c
}

fn shattering() -> Criterion {
    let mut c = Criterion::new(9, "VC shattering construction");
    for l in [4, 6, 8] {
        match vc_verify(l) {
            Ok(v) => c.check(
                v.verified,
                format!(
                    "L={l}: {} points, {}/{} labelings realized",
                    v.points, v.realized, v.labelings
                ),
            ),
            Err(e) => c.check(false, format!("L={l}: {e}")),
        }
    }
    c
}

fn sparsegnn(dir: &Path, args: &[&str]) -> bool {
    Command::new(env!("CARGO_BIN_EXE_sparsegnn"))
        .current_dir(dir)
        .args(args)
        .output()
        .map(|o| o.status.success())
        .unwrap_or(false)
}

/// Relative path to contents for every file under `root`.
fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

const SWEEP_CONF: &str = "gen.n = 600\nsweep.experiment = phase_transition\nsweep.param = alpha\n\
    sweep.values = 0.6, 1.0\nsweep.sizes = 8, 16, 24\nsweep.trials = 6\ntrain.max_iters = 60\nsampler.r = 10\n";

fn pipeline(dir: &Path) -> bool {
    fs::create_dir_all(dir).unwrap();
    fs::write(dir.join("sweep.conf"), SWEEP_CONF).unwrap();
    let steps: [&[&str]; 6] = [
        &["gen", "--out-dir", "gen", "--gen.n", "600", "--seed", "4"],
        &[
            "train",
            "--graph",
            "gen/graph.txt",
            "--out-dir",
            "train",
            "--gen.n",
            "600",
            "--seed",
            "4",
            "--trace-projections",
        ],
        &[
            "analyze",
            "--graph",
            "gen/graph.txt",
            "--checkpoint",
            "train/model.ckpt",
            "--out-dir",
            "analyze",
        ],
        &[
            "alpha",
            "--graph",
            "gen/graph.txt",
            "--out-dir",
            "alpha",
            "--sampler.r",
            "5",
        ],
        &[
            "sweep",
            "--config",
            "sweep.conf",
            "--out-dir",
            "sweep",
            "--jobs",
            "2",
        ],
        &["vc", "6", "--out-dir", "vc"],
    ];
    steps.iter().all(|a| sparsegnn(dir, a))
}

fn determinism() -> Criterion {
    let mut c = Criterion::new(10, "determinism");
    let tmp = tempfile::TempDir::new().unwrap();
    let root = tmp.path();
    fs::write(root.join("sweep.conf"), SWEEP_CONF).unwrap();
    let ran = sparsegnn(
        root,
        &[
            "sweep",
            "--config",
            "sweep.conf",
            "--out-dir",
            "j1",
            "--jobs",
            "1",
        ],
    ) && sparsegnn(
        root,
        &[
            "sweep",
            "--config",
            "sweep.conf",
            "--out-dir",
            "j8",
            "--jobs",
            "8",
        ],
    );
    let same =
        ran && fs::read(root.join("j1/sweep.csv")).ok() == fs::read(root.join("j8/sweep.csv")).ok();
    c.check(same, "sweep.csv identical for --jobs 1 and --jobs 8".into());

    let (a, b) = (root.join("a"), root.join("b"));
    let ran = pipeline(&a) && pipeline(&b);
    let (sa, sb) = (snapshot(&a), snapshot(&b));
    let differing: Vec<&String> = sa.keys().filter(|k| sb.get(*k) != sa.get(*k)).collect();
    c.check(
        ran && sa.len() == sb.len() && differing.is_empty(),
        format!(
            "gen, train, analyze, alpha, sweep, vc rerun: {} files, {} differ {differing:?}",
            sa.len(),
            differing.len()
        ),
    );
    c
}

fn main() {
    let n = trials();
    println!("acceptance: {n} trials per cell, {} worker threads", jobs());
    let mut results = Vec::new();
    let mut run = |f: &mut dyn FnMut() -> Vec<Criterion>| {
        let t = Instant::now();
        let cs = f();
        let secs = t.elapsed().as_secs_f64() / cs.len() as f64;
        for c in cs {
            results.push((c.id, c.report(secs)));
        }
    };
    run(&mut || vec![gradient()]);
    run(&mut || vec![lucky_symmetry()]);
    run(&mut || {
        let (a, b) = persistence_and_pruning(n);
        vec![a, b]
    });
    run(&mut || vec![sample_complexity(n)]);
    run(&mut || vec![convergence(n)]);
    run(&mut || vec![joint(n)]);
    run(&mut || vec![alpha_bounds()]);
    run(&mut || vec![shattering()]);
    run(&mut || vec![determinism()]);
    let passed = results.iter().filter(|r| r.1).count();
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.1)
        .map(|r| r.0.to_string())
        .collect();
    println!(
        "acceptance: {passed}/{} criteria pass; failing: [{}]",
        results.len(),
        failed.join(", ")
    );
}
