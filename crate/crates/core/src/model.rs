//! The one-hidden-layer max-pooling GNN.
//!
//! g(v) = sum_k (b_k / Z_k) * mask_k * max_{n in N(v)} ReLU(<w_k, x_n>)
//!
//! with Z_k = K (`OverK`) or the number of surviving neurons sharing b_k's
//! sign (`OverSurviving`).

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{fmt_f64, join_floats, LabeledSubset, StructuredGraph};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormMode {
    OverK,
    OverSurviving,
}

impl FromStr for NormMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "over_K" | "over_k" => Ok(Self::OverK),
            "over_surviving" => Ok(Self::OverSurviving),
            _ => Err(invalid(format!("unknown normalization mode `{s}`"))),
        }
    }
}

impl fmt::Display for NormMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::OverK => "over_K",
            Self::OverSurviving => "over_surviving",
        })
    }
}

/// Hidden weights (neuron-major, K rows of length d), fixed output signs,
/// neuron mask and the initialization snapshot used for rewinding.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    d: usize,
    k: usize,
    w: Vec<f64>,
    w0: Vec<f64>,
    b: Vec<i8>,
    mask: Vec<bool>,
    delta: f64,
    norm: NormMode,
    scales: Vec<f64>,
}

impl ModelState {
    pub fn new(d: usize, w: Vec<f64>, b: Vec<i8>, delta: f64, norm: NormMode) -> Result<Self> {
        let k = b.len();
        if d == 0 || k == 0 {
            return Err(invalid("d and K must be positive"));
        }
        if w.len() != d * k {
            return Err(Error::DimensionMismatch {
                expected: d * k,
                got: w.len(),
            });
        }
        if b.iter().any(|&s| s != 1 && s != -1) {
            return Err(invalid("output signs must be +1 or -1"));
        }
        let mut m = Self {
            d,
            k,
            w0: w.clone(),
            w,
            b,
            mask: vec![true; k],
            delta,
            norm,
            scales: vec![],
        };
        m.refresh_scales();
        Ok(m)
    }

    /// W ~ N(0, delta^2) entrywise, b uniform on {+1, -1}, all neurons alive.
    pub fn initialize(
        d: usize,
        k: usize,
        delta: f64,
        norm: NormMode,
        rng: &mut Rng,
    ) -> Result<Self> {
        if !(delta > 0.0) {
            return Err(invalid("init scale delta must be positive"));
        }
        let normal = Normal::new(0.0, delta).map_err(|e| invalid(e.to_string()))?;
        let w: Vec<f64> = (0..d * k).map(|_| normal.sample(rng)).collect();
        let b: Vec<i8> = (0..k)
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect();
        Self::new(d, w, b, delta, norm)
    }

    fn refresh_scales(&mut self) {
        let count = |s: i8| {
            self.b
                .iter()
                .zip(&self.mask)
                .filter(|&(&b, &m)| m && b == s)
                .count()
        };
        let (pos, neg) = (count(1), count(-1));
        self.scales = (0..self.k)
            .map(|k| {
                if !self.mask[k] {
                    return 0.0;
                }
                let z = match self.norm {
                    NormMode::OverK => self.k,
                    NormMode::OverSurviving if self.b[k] > 0 => pos,
                    NormMode::OverSurviving => neg,
                };
                f64::from(self.b[k]) / z as f64
            })
            .collect();
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn width(&self) -> usize {
        self.k
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn norm_mode(&self) -> NormMode {
        self.norm
    }

    pub fn set_norm_mode(&mut self, norm: NormMode) {
        self.norm = norm;
        self.refresh_scales();
    }

    pub fn weight(&self, k: usize) -> &[f64] {
        &self.w[k * self.d..(k + 1) * self.d]
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    /// Mutable access to raw weights. Pruned rows must stay zero.
    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    pub fn initial_weights(&self) -> &[f64] {
        &self.w0
    }

    pub fn signs(&self) -> &[i8] {
        &self.b
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_alive(&self, k: usize) -> bool {
        self.mask[k]
    }

    pub fn surviving(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Signed output coefficient b_k / Z_k, zero for pruned neurons.
    pub fn scale(&self, k: usize) -> f64 {
        self.scales[k]
    }

    /// Installs a neuron mask and zeroes the pruned rows.
    pub fn set_mask(&mut self, mask: Vec<bool>) -> Result<()> {
        if mask.len() != self.k {
            return Err(Error::DimensionMismatch {
                expected: self.k,
                got: mask.len(),
            });
        }
        self.mask = mask;
        for k in 0..self.k {
            if !self.mask[k] {
                self.w[k * self.d..(k + 1) * self.d].fill(0.0);
            }
        }
        self.refresh_scales();
        Ok(())
    }

    /// W <- mask (.) W0.
    pub fn rewind(&mut self) {
        self.w.copy_from_slice(&self.w0);
        let mask = std::mem::take(&mut self.mask);
        self.set_mask(mask).expect("mask length unchanged");
    }

    /// <w_k, x_u> for every neuron and every node in `nodes`.
    pub fn project(&self, graph: &StructuredGraph, nodes: &[usize]) -> Projections {
        let mut index = vec![u32::MAX; graph.n()];
        let mut vals = vec![0.0; nodes.len() * self.k];
        for (row, &u) in nodes.iter().enumerate() {
            index[u] = row as u32;
            let x = graph.feature(u);
            let out = &mut vals[row * self.k..(row + 1) * self.k];
            for (k, o) in out.iter_mut().enumerate().filter(|&(k, _)| self.mask[k]) {
                *o = dot(self.weight(k), x);
            }
        }
        Projections {
            k: self.k,
            index,
            vals,
        }
    }

    /// Projections for every node of the graph, computed in parallel.
    pub fn project_all(&self, graph: &StructuredGraph) -> Projections {
        let n = graph.n();
        let mut vals = vec![0.0; n * self.k];
        vals.par_chunks_mut(self.k)
            .enumerate()
            .for_each(|(u, out)| {
                let x = graph.feature(u);
                for (k, o) in out.iter_mut().enumerate().filter(|&(k, _)| self.mask[k]) {
                    *o = dot(self.weight(k), x);
                }
            });
        Projections {
            k: self.k,
            index: (0..n as u32).collect(),
            vals,
        }
    }

    /// g over a neighborhood using cached projections.
    pub fn forward_cached(&self, proj: &Projections, nbhd: &[usize]) -> f64 {
        let acts = proj.pool_max(nbhd);
        (0..self.k)
            .filter(|&k| self.mask[k])
            .map(|k| self.scales[k] * acts[k])
            .sum()
    }

    /// g(v) with the full neighborhood, or with `nbhd` when given.
    pub fn forward(
        &self,
        graph: &StructuredGraph,
        v: usize,
        nbhd: Option<&[usize]>,
    ) -> Result<f64> {
        self.check_dim(graph)?;
        let full;
        let nodes = match nbhd {
            Some(s) => s,
            None => {
                full = graph.neighborhood(v)?;
                &full
            }
        };
        if nodes.is_empty() {
            return Err(Error::EmptySet);
        }
        let proj = self.project(graph, nodes);
        Ok(self.forward_cached(&proj, nodes))
    }

    /// Pattern function of neuron k at node v.
    pub fn pattern_hit(
        &self,
        graph: &StructuredGraph,
        v: usize,
        k: usize,
        nbhd: Option<&[usize]>,
    ) -> Result<PatternHit> {
        self.check_dim(graph)?;
        if k >= self.k {
            return Err(invalid(format!("neuron {k} out of range")));
        }
        let nodes = match nbhd {
            Some(s) => s.to_vec(),
            None => graph.neighborhood(v)?,
        };
        let rows: Vec<(usize, &[f64])> = nodes.iter().map(|&u| (u, graph.feature(u))).collect();
        let (activation, winner) = aggregate(self.weight(k), &rows)?;
        let feature = winner.map_or_else(|| vec![0.0; self.d], |u| graph.feature(u).to_vec());
        Ok(PatternHit {
            node: v,
            neuron: k,
            winner,
            feature,
            activation,
        })
    }

    fn check_dim(&self, graph: &StructuredGraph) -> Result<()> {
        if graph.dim() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: graph.dim(),
            });
        }
        Ok(())
    }

    /// Writes the checkpoint: `K d normmode`, the b line, the mask line and K
    /// weight rows.
    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {} {}", self.k, self.d, self.norm)?;
        let b: Vec<String> = self.b.iter().map(|b| b.to_string()).collect();
        writeln!(out, "{}", b.join(" "))?;
        let m: Vec<&str> = self
            .mask
            .iter()
            .map(|&m| if m { "1" } else { "0" })
            .collect();
        writeln!(out, "{}", m.join(" "))?;
        let mut line = String::new();
        for k in 0..self.k {
            line.clear();
            join_floats(&mut line, self.weight(k));
            writeln!(out, "{line}")?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads a checkpoint. The loaded weights become the rewind snapshot and
    /// delta is unknown (reported as NaN).
    pub fn load<R: BufRead>(input: R) -> Result<Self> {
        let lines: Vec<String> = input.lines().collect::<std::io::Result<_>>()?;
        let mut it = lines
            .iter()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let mut next = |what: &str| {
            it.next()
                .map(|(i, l)| (i + 1, l.as_str()))
                .ok_or_else(|| Error::Parse {
                    line: lines.len(),
                    msg: format!("missing {what}"),
                })
        };
        let perr = |line: usize, msg: String| Error::Parse { line, msg };
        let (ln, header) = next("header")?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 3 {
            return Err(perr(ln, "malformed header: expected `K d normmode`".into()));
        }
        let k: usize = h[0]
            .parse()
            .map_err(|_| perr(ln, format!("bad K `{}`", h[0])))?;
        let d: usize = h[1]
            .parse()
            .map_err(|_| perr(ln, format!("bad d `{}`", h[1])))?;
        let norm: NormMode = h[2].parse()?;
        let (ln, bline) = next("sign line")?;
        let b = bline
            .split_whitespace()
            .map(|t| {
                t.parse::<i8>()
                    .map_err(|_| perr(ln, format!("bad sign `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let (ln, mline) = next("mask line")?;
        let mask = mline
            .split_whitespace()
            .map(|t| match t {
                "1" => Ok(true),
                "0" => Ok(false),
                _ => Err(perr(ln, format!("bad mask entry `{t}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        if b.len() != k || mask.len() != k {
            return Err(perr(ln, "dimension mismatch in sign or mask line".into()));
        }
        let mut w = Vec::with_capacity(k * d);
        for _ in 0..k {
            let (ln, row) = next("weight row")?;
            let xs = row
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| perr(ln, format!("bad decimal `{t}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            if xs.len() != d {
                return Err(perr(
                    ln,
                    format!("dimension mismatch: expected {d} values, got {}", xs.len()),
                ));
            }
            w.extend(xs);
        }
        let mut model = Self::new(d, w, b, f64::NAN, norm)?;
        model.mask = mask;
        model.refresh_scales();
        Ok(model)
    }
}

/// Cached inner products between neuron weights and node features.
#[derive(Debug, Clone)]
pub struct Projections {
    k: usize,
    index: Vec<u32>,
    vals: Vec<f64>,
}

impl Projections {
    #[inline]
    pub fn get(&self, u: usize, k: usize) -> f64 {
        let row = self.index[u];
        debug_assert!(row != u32::MAX, "node {u} not projected");
        self.vals[row as usize * self.k + k]
    }

    /// Max-pooled ReLU activation of neuron k over `nbhd` and the winning
    /// node (lowest id among ties), or `None` when nothing is positive.
    #[inline]
    pub fn max_pool(&self, k: usize, nbhd: &[usize]) -> (f64, Option<usize>) {
        let mut best = 0.0;
        let mut winner: Option<usize> = None;
        for &u in nbhd {
            let h = self.get(u, k);
            if h > best || (h == best && h > 0.0 && winner.is_some_and(|w| u < w)) {
                best = h;
                winner = Some(u);
            }
        }
        (best, winner)
    }

    fn row(&self, u: usize) -> &[f64] {
        let row = self.index[u];
        debug_assert!(row != u32::MAX, "node {u} not projected");
        &self.vals[row as usize * self.k..(row as usize + 1) * self.k]
    }

    /// [`Projections::max_pool`] for every neuron at once. Returns
    /// activations and winners by neuron.
    pub fn pool_all(&self, nbhd: &[usize]) -> (Vec<f64>, Vec<Option<usize>>) {
        // ascending ids make a strict comparison pick the lowest id on ties
        let mut order = nbhd.to_vec();
        order.sort_unstable();
        let mut best = vec![0.0; self.k];
        let mut winner = vec![u32::MAX; self.k];
        for &u in &order {
            for ((b, w), &h) in best.iter_mut().zip(winner.iter_mut()).zip(self.row(u)) {
                if h > *b {
                    *b = h;
                    *w = u as u32;
                }
            }
        }
        (
            best,
            winner
                .into_iter()
                .map(|w| (w != u32::MAX).then_some(w as usize))
                .collect(),
        )
    }

    /// Max-pooled ReLU activations of every neuron over `nbhd`.
    pub fn pool_max(&self, nbhd: &[usize]) -> Vec<f64> {
        let mut best = vec![0.0f64; self.k];
        for &u in nbhd {
            for (b, &h) in best.iter_mut().zip(self.row(u)) {
                *b = b.max(h);
            }
        }
        best
    }
}

/// Record of which neighbor won the max-pooling for one neuron at one node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PatternHit {
    pub node: usize,
    pub neuron: usize,
    pub winner: Option<usize>,
    pub feature: Vec<f64>,
    pub activation: f64,
}

/// max over the given (id, feature) rows of ReLU(<w, x>), with the id of the
/// winning row. Ties go to the lowest id; a nonpositive maximum yields
/// activation 0 and no winner.
pub fn aggregate(w: &[f64], neighbors: &[(usize, &[f64])]) -> Result<(f64, Option<usize>)> {
    if neighbors.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut best = 0.0;
    let mut winner: Option<usize> = None;
    for &(u, x) in neighbors {
        if x.len() != w.len() {
            return Err(Error::DimensionMismatch {
                expected: w.len(),
                got: x.len(),
            });
        }
        let h = dot(w, x);
        if h > best || (h == best && h > 0.0 && winner.is_some_and(|v| u < v)) {
            best = h;
            winner = Some(u);
        }
    }
    Ok((best, winner))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Neighborhoods used for each node of D: the full ones when `sampled` is
/// `None`.
fn resolve<'a>(
    graph: &StructuredGraph,
    d: &LabeledSubset,
    sampled: Option<&'a [Vec<usize>]>,
) -> Result<std::borrow::Cow<'a, [Vec<usize>]>> {
    if d.is_empty() {
        return Err(Error::EmptySet);
    }
    match sampled {
        Some(s) if s.len() != d.len() => Err(Error::DimensionMismatch {
            expected: d.len(),
            got: s.len(),
        }),
        Some(s) => Ok(std::borrow::Cow::Borrowed(s)),
        None => Ok(std::borrow::Cow::Owned(
            d.nodes()
                .iter()
                .map(|&v| graph.neighborhood(v))
                .collect::<Result<_>>()?,
        )),
    }
}

fn union_of(graph: &StructuredGraph, nbhds: &[Vec<usize>]) -> Vec<usize> {
    let mut seen = vec![false; graph.n()];
    let mut nodes = Vec::new();
    for &u in nbhds.iter().flatten() {
        if !std::mem::replace(&mut seen[u], true) {
            nodes.push(u);
        }
    }
    nodes
}

/// -(1/|D|) sum_v y_v g(v), with sampled neighborhoods aligned to D's order.
pub fn empirical_risk(
    model: &ModelState,
    graph: &StructuredGraph,
    d: &LabeledSubset,
    sampled: Option<&[Vec<usize>]>,
) -> Result<f64> {
    model.check_dim(graph)?;
    let nbhds = resolve(graph, d, sampled)?;
    let proj = model.project(graph, &union_of(graph, &nbhds));
    let total: f64 = d
        .nodes()
        .iter()
        .zip(nbhds.iter())
        .map(|(&v, nb)| f64::from(graph.label(v)) * model.forward_cached(&proj, nb))
        .sum();
    Ok(-total / d.len() as f64)
}

/// Gradient of the empirical risk, neuron-major (K rows of length d).
/// Pruned neurons and neurons with zero activation contribute nothing.
pub fn gradient(
    model: &ModelState,
    graph: &StructuredGraph,
    d: &LabeledSubset,
    sampled: Option<&[Vec<usize>]>,
) -> Result<Vec<f64>> {
    model.check_dim(graph)?;
    let nbhds = resolve(graph, d, sampled)?;
    let proj = model.project(graph, &union_of(graph, &nbhds));
    Ok(gradient_cached(model, graph, d, &nbhds, &proj))
}

pub(crate) fn gradient_cached(
    model: &ModelState,
    graph: &StructuredGraph,
    d: &LabeledSubset,
    nbhds: &[Vec<usize>],
    proj: &Projections,
) -> Vec<f64> {
    let dim = model.dim();
    let mut grad = vec![0.0; model.width() * dim];
    let inv = 1.0 / d.len() as f64;
    for (&v, nb) in d.nodes().iter().zip(nbhds) {
        let y = f64::from(graph.label(v));
        for k in 0..model.width() {
            if !model.is_alive(k) {
                continue;
            }
            if let (_, Some(u)) = proj.max_pool(k, nb) {
                let c = -y * model.scale(k) * inv;
                let row = &mut grad[k * dim..(k + 1) * dim];
                row.iter_mut()
                    .zip(graph.feature(u))
                    .for_each(|(g, x)| *g += c * x);
            }
        }
    }
    grad
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenError {
    /// Mean hinge loss max(1 - y g, 0).
    pub hinge: f64,
    /// Fraction of nodes with sign(g) != y (g = 0 counts as an error).
    pub zero_one: f64,
}

/// Hinge and 0/1 error over `nodes` with full neighborhoods.
pub fn generalization_error(
    model: &ModelState,
    graph: &StructuredGraph,
    nodes: &[usize],
) -> Result<GenError> {
    model.check_dim(graph)?;
    if nodes.is_empty() {
        return Err(Error::EmptySet);
    }
    if let Some(&bad) = nodes.iter().find(|&&v| v >= graph.n()) {
        return Err(Error::UnknownNode(bad));
    }
    let proj = if nodes.len() * 4 > graph.n() {
        model.project_all(graph)
    } else {
        let nbhds: Vec<Vec<usize>> = nodes
            .iter()
            .map(|&v| graph.neighborhood(v))
            .collect::<Result<_>>()?;
        model.project(graph, &union_of(graph, &nbhds))
    };
    let margins: Vec<f64> = nodes
        .par_iter()
        .map(|&v| {
            let nb = graph.neighborhood(v).expect("validated id");
            f64::from(graph.label(v)) * model.forward_cached(&proj, &nb)
        })
        .collect();
    Ok(margin_errors(&margins))
}

pub(crate) fn margin_errors(margins: &[f64]) -> GenError {
    let n = margins.len() as f64;
    let hinge = margins.iter().map(|m| (1.0 - m).max(0.0)).sum::<f64>() / n;
    let zero_one = margins.iter().filter(|&&m| m <= 0.0).count() as f64 / n;
    GenError { hinge, zero_one }
}

impl fmt::Display for GenError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "hinge {} 0/1 {}",
            fmt_f64(self.hinge),
            fmt_f64(self.zero_one)
        )
    }
}
