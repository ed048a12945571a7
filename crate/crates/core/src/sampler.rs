//! Neighbor sampling for edge sparsification, Monte-Carlo estimates of the
//! importance sampling probability alpha, and closed-form alpha bounds.
//!
//! A sample always holds the node itself plus up to `r` distinct draws from
//! its other neighbors; when a node has at most `r` other neighbors the whole
//! neighborhood is kept.

use std::fmt;
use std::str::FromStr;

use rand::seq::index::sample as sample_indices;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{PartitionTag, StructuredGraph};
use crate::rng::{self, unit_hash, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerKind {
    Full,
    Uniform,
    TwoTier,
}

impl FromStr for SamplerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "uniform" => Ok(Self::Uniform),
            "two_tier" => Ok(Self::TwoTier),
            _ => Err(invalid(format!("unknown sampler kind `{s}`"))),
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Full => "full",
            Self::Uniform => "uniform",
            Self::TwoTier => "two_tier",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportantSet {
    /// V+ and V-.
    RelevantOnly,
    /// V+, V- and a fixed lambda-fraction of V_N.
    RelevantPlusLambda,
}

impl FromStr for ImportantSet {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relevant_only" => Ok(Self::RelevantOnly),
            "relevant_plus_lambda" => Ok(Self::RelevantPlusLambda),
            _ => Err(invalid(format!("unknown important set `{s}`"))),
        }
    }
}

impl fmt::Display for ImportantSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RelevantOnly => "relevant_only",
            Self::RelevantPlusLambda => "relevant_plus_lambda",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingStrategy {
    pub kind: SamplerKind,
    /// Fan-out r: number of neighbors drawn besides the node itself.
    pub r: usize,
    /// Ratio of per-node inclusion probabilities, important over unimportant.
    pub gamma: f64,
    pub important: ImportantSet,
    pub lambda: f64,
    /// Seed selecting which V_N nodes join the important set.
    pub salt: u64,
}

impl Default for SamplingStrategy {
    fn default() -> Self {
        Self::uniform(20)
    }
}

impl SamplingStrategy {
    pub fn full() -> Self {
        Self {
            kind: SamplerKind::Full,
            ..Self::uniform(1)
        }
    }

    pub fn uniform(r: usize) -> Self {
        Self {
            kind: SamplerKind::Uniform,
            r,
            gamma: 1.0,
            important: ImportantSet::RelevantOnly,
            lambda: 0.0,
            salt: 0,
        }
    }

    pub fn two_tier(r: usize, gamma: f64) -> Self {
        Self {
            kind: SamplerKind::TwoTier,
            gamma,
            ..Self::uniform(r)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r == 0 {
            return Err(invalid("fan-out r must be at least 1"));
        }
        if !(self.gamma >= 1.0) {
            return Err(invalid("gamma must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(invalid("lambda must lie in [0, 1]"));
        }
        Ok(())
    }

    fn is_important(&self, graph: &StructuredGraph, u: usize) -> bool {
        match graph.tag(u) {
            PartitionTag::VPlus | PartitionTag::VMinus => true,
            PartitionTag::VNPlus | PartitionTag::VNMinus => {
                self.important == ImportantSet::RelevantPlusLambda
                    && unit_hash(self.salt, u as u64) < self.lambda
            }
            PartitionTag::Unknown => false,
        }
    }

    /// Draws the sampled neighborhood of `v`: `v` first, then the sampled
    /// neighbor ids in ascending order.
    pub fn sample(&self, graph: &StructuredGraph, v: usize, rng: &mut Rng) -> Vec<usize> {
        let others = graph.neighbors(v);
        let mut out = Vec::with_capacity(self.r.min(others.len()) + 1);
        out.push(v);
        if self.kind == SamplerKind::Full || others.len() <= self.r {
            out.extend_from_slice(others);
            return out;
        }
        match self.kind {
            SamplerKind::Full => unreachable!(),
            SamplerKind::Uniform => {
                out.extend(
                    sample_indices(rng, others.len(), self.r)
                        .into_iter()
                        .map(|i| others[i]),
                );
            }
            SamplerKind::TwoTier => self.two_tier_draw(graph, others, rng, &mut out),
        }
        out[1..].sort_unstable();
        out
    }

    /// Each important neighbor enters independently with probability
    /// pi_I = min(1, gamma r / (gamma |I| + |U|)); the remaining slots are
    /// filled uniformly without replacement from the unimportant neighbors,
    /// then from the important ones left out. With no spill-over the
    /// per-node inclusion probabilities are pi_I and pi_I / gamma.
    fn two_tier_draw(
        &self,
        graph: &StructuredGraph,
        others: &[usize],
        rng: &mut Rng,
        out: &mut Vec<usize>,
    ) {
        let (imp, unimp): (Vec<usize>, Vec<usize>) =
            others.iter().partition(|&&u| self.is_important(graph, u));
        let s = self.r;
        let pi =
            (self.gamma * s as f64 / (self.gamma * imp.len() as f64 + unimp.len() as f64)).min(1.0);
        let mut chosen = Vec::new();
        let mut left = Vec::new();
        for &u in &imp {
            if rng.random::<f64>() < pi {
                chosen.push(u);
            } else {
                left.push(u);
            }
        }
        if chosen.len() > s {
            chosen.shuffle(rng);
            chosen.truncate(s);
        }
        let need = s - chosen.len();
        out.extend_from_slice(&chosen);
        if need <= unimp.len() {
            out.extend(
                sample_indices(rng, unimp.len(), need)
                    .into_iter()
                    .map(|i| unimp[i]),
            );
        } else {
            out.extend_from_slice(&unimp);
            let extra = need - unimp.len();
            out.extend(
                sample_indices(rng, left.len(), extra)
                    .into_iter()
                    .map(|i| left[i]),
            );
        }
    }
}

/// The neighbors drawn for one node at one training iteration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SampledNeighborhood {
    pub node: usize,
    pub iteration: usize,
    pub ids: Vec<usize>,
}

/// Samples the neighborhood of `v` under `strategy`.
pub fn sample_neighbors(
    strategy: &SamplingStrategy,
    graph: &StructuredGraph,
    v: usize,
    iteration: usize,
    rng: &mut Rng,
) -> Result<SampledNeighborhood> {
    strategy.validate()?;
    if v >= graph.n() {
        return Err(Error::UnknownNode(v));
    }
    Ok(SampledNeighborhood {
        node: v,
        iteration,
        ids: strategy.sample(graph, v, rng),
    })
}

/// gamma realising a target alpha for a node with one relevant neighbor
/// among R: solves alpha = gamma r / (gamma + R - 1).
pub fn gamma_for_alpha(alpha: f64, r: usize, degree: usize) -> Result<f64> {
    let (r, big_r) = (r as f64, degree as f64);
    if !(alpha > 0.0 && alpha <= 1.0) || r >= big_r {
        return Err(invalid("need alpha in (0, 1] and r < R"));
    }
    let uniform = r / big_r;
    if alpha < uniform - 1e-12 {
        return Err(invalid(format!(
            "alpha {alpha} is below the uniform value {uniform}"
        )));
    }
    if alpha >= r {
        return Ok(f64::INFINITY);
    }
    Ok((alpha * (big_r - 1.0) / (r - alpha)).max(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaEstimate {
    /// Mean over nodes and repetitions of 1{sample holds a relevant node}.
    pub alpha: f64,
    /// Binomial standard error of `alpha`.
    pub std_err: f64,
    /// Smallest per-node hit fraction.
    pub min_node: f64,
    pub samples: usize,
}

/// Monte-Carlo alpha over `nodes`, with `reps` samples per node. Work is
/// split by node, each node drawing from its own derived stream.
pub fn estimate_alpha(
    strategy: &SamplingStrategy,
    graph: &StructuredGraph,
    nodes: &[usize],
    reps: usize,
    seed: u64,
) -> Result<AlphaEstimate> {
    strategy.validate()?;
    if !graph.is_tagged() {
        return Err(Error::Untagged);
    }
    if nodes.is_empty() || reps == 0 {
        return Err(Error::EmptySet);
    }
    if let Some(&bad) = nodes.iter().find(|&&v| v >= graph.n()) {
        return Err(Error::UnknownNode(bad));
    }
    let hits: Vec<usize> = nodes
        .par_iter()
        .map(|&v| {
            let mut rng = rng::stream(seed, &[rng::tag::ALPHA, v as u64]);
            (0..reps)
                .filter(|_| {
                    strategy
                        .sample(graph, v, &mut rng)
                        .iter()
                        .any(|&u| graph.tag(u).is_relevant())
                })
                .count()
        })
        .collect();
    let total = nodes.len() * reps;
    let alpha = hits.iter().sum::<usize>() as f64 / total as f64;
    let min_node = hits
        .iter()
        .map(|&h| h as f64 / reps as f64)
        .fold(1.0, f64::min);
    Ok(AlphaEstimate {
        alpha,
        std_err: (alpha * (1.0 - alpha) / total as f64).sqrt(),
        min_node,
        samples: total,
    })
}

/// Bracket for uniform sampling with `c_bar` relevant neighbors among R:
/// [1 - (1 - c/R)^r, 1 - (1 - c/(R - c + 1))^r].
pub fn alpha_bound_uniform(c_bar: f64, degree: f64, r: f64) -> Result<(f64, f64)> {
    if c_bar < 0.0 || degree <= 0.0 || r < 0.0 {
        return Err(invalid("bound arguments must be nonnegative with R > 0"));
    }
    if c_bar > degree {
        return Err(invalid(format!("c_bar = {c_bar} exceeds R = {degree}")));
    }
    let lower = 1.0 - (1.0 - c_bar / degree).powf(r);
    let upper = 1.0 - (1.0 - (c_bar / (degree - c_bar + 1.0)).min(1.0)).powf(r);
    Ok((lower, upper))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImportanceBound {
    pub lower: f64,
    /// Large-R approximation of `lower`.
    pub asymptotic: f64,
}

/// Lower bound gamma r / (R - r + gamma) for two-tier sampling with only
/// relevant nodes marked important.
pub fn alpha_bound_importance(gamma: f64, degree: f64, r: f64) -> Result<ImportanceBound> {
    alpha_bound_partial(gamma, 0.0, degree, r)
}

/// Lower bound gamma r / ((1 + (gamma - 1) lambda) R - r + gamma) when a
/// lambda-fraction of V_N is also marked important.
pub fn alpha_bound_partial(
    gamma: f64,
    lambda: f64,
    degree: f64,
    r: f64,
) -> Result<ImportanceBound> {
    if !(gamma >= 1.0) {
        return Err(invalid("gamma must be at least 1"));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(invalid("lambda must lie in [0, 1]"));
    }
    let spread = (1.0 + (gamma - 1.0) * lambda) * degree;
    Ok(ImportanceBound {
        lower: gamma * r / (spread - r + gamma),
        asymptotic: gamma * r / spread,
    })
}
