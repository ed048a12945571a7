//! Independent risk oracle and finite-difference gradient check, shared by
//! the gradient tests and the acceptance harness.

use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sparsegnn::{
    empirical_risk, gradient, LabeledSubset, ModelState, NormMode, PartitionTag, StructuredGraph,
};

struct Instance {
    graph: StructuredGraph,
    d: LabeledSubset,
    model: ModelState,
    /// Sampled neighborhoods aligned with `d`, or None for full ones.
    sampled: Option<Vec<Vec<usize>>>,
}

fn normal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

fn instance(
    rng: &mut ChaCha8Rng,
    dim: usize,
    k: usize,
    samples: usize,
    norm: NormMode,
    sample: bool,
) -> Instance {
    let n = 10;
    let labels: Vec<i8> = (0..n).map(|v| if v % 2 == 0 { 1 } else { -1 }).collect();
    let edges: Vec<(usize, usize)> = (0..n)
        .flat_map(|v| (0..3).map(move |j| (v, (v + 1 + 2 * j) % n)))
        .collect();
    let graph = StructuredGraph::new(
        dim,
        0.0,
        normal(rng, n * dim),
        labels,
        vec![PartitionTag::Unknown; n],
        &edges,
    )
    .unwrap();
    let d = LabeledSubset::new(&graph, (0..samples).collect()).unwrap();
    let b: Vec<i8> = (0..k).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
    let mut model = ModelState::new(dim, normal(rng, k * dim), b, 1.0, norm).unwrap();
    if k > 3 {
        let mut mask = vec![true; k];
        mask[k - 1] = false;
        model.set_mask(mask).unwrap();
    }
    let sampled = sample.then(|| {
        d.nodes()
            .iter()
            .map(|&v| {
                let nb = graph.neighborhood(v).unwrap();
                let mut s = vec![v];
                s.extend(nb.into_iter().filter(|&u| u != v && rng.random::<bool>()));
                s
            })
            .collect()
    });
    Instance {
        graph,
        d,
        model,
        sampled,
    }
}

fn nbhds(inst: &Instance) -> Vec<Vec<usize>> {
    match &inst.sampled {
        Some(s) => s.clone(),
        None => inst
            .d
            .nodes()
            .iter()
            .map(|&v| inst.graph.neighborhood(v).unwrap())
            .collect(),
    }
}

/// -(1/|D|) sum_v y_v sum_k (b_k / Z_k) max_n relu(<w_k, x_n>), written
/// out without the library's forward pass.
fn risk_oracle(inst: &Instance, w: &[f64]) -> f64 {
    let m = &inst.model;
    let (dim, k) = (m.dim(), m.width());
    let alive = |s: i8| {
        (0..k)
            .filter(|&j| m.is_alive(j) && m.signs()[j] == s)
            .count() as f64
    };
    let z = |j: usize| match m.norm_mode() {
        NormMode::OverK => k as f64,
        NormMode::OverSurviving => alive(m.signs()[j]),
    };
    let mut total = 0.0;
    for (&v, nb) in inst.d.nodes().iter().zip(nbhds(inst)) {
        let mut g = 0.0;
        for j in (0..k).filter(|&j| m.is_alive(j)) {
            let wj = &w[j * dim..(j + 1) * dim];
            let act = nb
                .iter()
                .map(|&u| {
                    wj.iter()
                        .zip(inst.graph.feature(u))
                        .map(|(a, b)| a * b)
                        .sum::<f64>()
                        .max(0.0)
                })
                .fold(0.0, f64::max);
            g += f64::from(m.signs()[j]) / z(j) * act;
        }
        total += f64::from(inst.graph.label(v)) * g;
    }
    -total / inst.d.len() as f64
}

/// No pooled maximum has a runner-up or a zero crossing within `gap`.
fn non_degenerate(inst: &Instance, gap: f64) -> bool {
    let m = &inst.model;
    nbhds(inst).iter().all(|nb| {
        (0..m.width()).filter(|&j| m.is_alive(j)).all(|j| {
            let mut p: Vec<f64> = nb
                .iter()
                .map(|&u| {
                    m.weight(j)
                        .iter()
                        .zip(inst.graph.feature(u))
                        .map(|(a, b)| a * b)
                        .sum()
                })
                .collect();
            p.sort_by(|a, b| b.partial_cmp(a).unwrap());
            p[0].abs() > gap && (p.len() < 2 || p[0] <= 0.0 || p[0] - p[1].max(0.0) > gap)
        })
    })
}

fn finite_difference(inst: &Instance, h: f64) -> Vec<f64> {
    let w = inst.model.weights().to_vec();
    (0..w.len())
        .map(|i| {
            let (mut up, mut down) = (w.clone(), w.clone());
            up[i] += h;
            down[i] -= h;
            (risk_oracle(inst, &up) - risk_oracle(inst, &down)) / (2.0 * h)
        })
        .collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt();
    let scale: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Worst case over `count` non-degenerate instances.
#[derive(Debug, Clone, Copy)]
pub struct GradientCheck {
    pub instances: usize,
    pub max_rel_err: f64,
    pub max_risk_gap: f64,
}

pub fn gradient_check(
    dim: usize,
    k: usize,
    samples: usize,
    norm: NormMode,
    sample: bool,
    seed: u64,
    count: usize,
) -> GradientCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = GradientCheck {
        instances: 0,
        max_rel_err: 0.0,
        max_risk_gap: 0.0,
    };
    while out.instances < count {
        let inst = instance(&mut rng, dim, k, samples, norm, sample);
        if !non_degenerate(&inst, 1e-3) {
            continue;
        }
        let analytic =
            gradient(&inst.model, &inst.graph, &inst.d, inst.sampled.as_deref()).unwrap();
        let risk =
            empirical_risk(&inst.model, &inst.graph, &inst.d, inst.sampled.as_deref()).unwrap();
        out.max_risk_gap = out
            .max_risk_gap
            .max((risk - risk_oracle(&inst, inst.model.weights())).abs());
        out.max_rel_err = out
            .max_rel_err
            .max(rel_err(&analytic, &finite_difference(&inst, 1e-6)));
        out.instances += 1;
    }
    out
}
