//! Synthetic pattern sets and graphs following the planted-pattern data model.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::graph::{norm, LabeledSubset, PartitionTag, PatternMode, PatternSet, StructuredGraph};
use crate::rng::{self, tag, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseMode {
    /// Isotropic Gaussian with per-coordinate std sigma/sqrt(d), rescaled onto
    /// the sigma-sphere when it falls outside the ball.
    GaussianClipped,
    /// Uniform in the sigma-ball.
    UniformBall,
    None,
}

impl FromStr for NoiseMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian_clipped" => Ok(Self::GaussianClipped),
            "uniform_ball" => Ok(Self::UniformBall),
            "none" => Ok(Self::None),
            _ => Err(invalid(format!("unknown noise mode `{s}`"))),
        }
    }
}

impl fmt::Display for NoiseMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::GaussianClipped => "gaussian_clipped",
            Self::UniformBall => "uniform_ball",
            Self::None => "none",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub d: usize,
    /// Number of patterns L, including p+ and p-.
    pub l: usize,
    pub n: usize,
    /// Degree M of class-irrelevant nodes.
    pub degree: usize,
    /// Fraction of nodes in V+ (and, separately, in V-).
    pub relevant_fraction: f64,
    pub sigma: f64,
    pub noise: NoiseMode,
    pub pattern_mode: PatternMode,
    /// Number of labeled training nodes |D|.
    pub train_size: usize,
    /// Fraction of class-irrelevant nodes given an extra edge to a relevant
    /// node of the opposite class.
    pub outlier_fraction: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    /// The full-scale synthetic setting: 10000 nodes, degree 30, d = 50,
    /// L = 200 relaxed patterns, sigma = 0.2, |D| = 100.
    fn default() -> Self {
        Self {
            d: 50,
            l: 200,
            n: 10_000,
            degree: 30,
            relevant_fraction: 0.1,
            sigma: 0.2,
            noise: NoiseMode::GaussianClipped,
            pattern_mode: PatternMode::Relaxed,
            train_size: 100,
            outlier_fraction: 0.0,
            seed: 0,
        }
    }
}

impl GenConfig {
    /// Reduced setting used by the experiment harness and tests.
    pub fn desk() -> Self {
        Self {
            d: 30,
            l: 30,
            n: 2000,
            degree: 30,
            sigma: 0.1,
            pattern_mode: PatternMode::Orthogonal,
            ..Self::default()
        }
    }

    pub fn group_sizes(&self) -> (usize, usize) {
        let relevant = ((self.n as f64) * self.relevant_fraction).round() as usize;
        (relevant, self.n.saturating_sub(2 * relevant))
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.n == 0 {
            return Err(invalid("d and n must be positive"));
        }
        if self.l < 3 {
            return Err(invalid(
                "need at least one class-irrelevant pattern (L >= 3)",
            ));
        }
        if self.pattern_mode == PatternMode::Orthogonal && self.l > self.d {
            return Err(invalid(format!(
                "L = {} exceeds d = {} in orthogonal mode",
                self.l, self.d
            )));
        }
        if self.d < 3 {
            return Err(invalid("d must be at least 3"));
        }
        if !(self.sigma >= 0.0) {
            return Err(invalid("sigma must be nonnegative"));
        }
        if self.degree == 0 {
            return Err(invalid("degree must be at least 1"));
        }
        if !(self.relevant_fraction > 0.0 && self.relevant_fraction < 0.5) {
            return Err(invalid("relevant_fraction must lie in (0, 0.5)"));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(invalid("outlier_fraction must lie in [0, 1)"));
        }
        let (relevant, irrelevant) = self.group_sizes();
        if relevant == 0 {
            return Err(invalid("relevant groups are empty"));
        }
        if self.degree >= self.n || self.degree > irrelevant {
            return Err(invalid(format!(
                "degree {} impossible with {} class-irrelevant nodes",
                self.degree, irrelevant
            )));
        }
        if self.train_size > self.n {
            return Err(invalid(format!(
                "|D| = {} exceeds n = {}",
                self.train_size, self.n
            )));
        }
        Ok(())
    }
}

/// p+ = e1, p- = e2, and L - 2 Gaussian directions in the null space of
/// {e1, e2}, Gram-Schmidt orthogonalised in orthogonal mode.
pub fn generate_patterns(config: &GenConfig) -> Result<PatternSet> {
    let (d, l) = (config.d, config.l);
    if config.pattern_mode == PatternMode::Orthogonal && l > d {
        return Err(invalid(format!(
            "L = {l} exceeds d = {d} in orthogonal mode"
        )));
    }
    if l < 2 || (l > 2 && d < 3) {
        return Err(invalid(
            "pattern set needs L >= 2 and room for irrelevant patterns",
        ));
    }
    let mut rng = rng::stream(config.seed, &[tag::PATTERNS]);
    let mut patterns = Vec::with_capacity(l);
    for i in 0..2 {
        let mut e = vec![0.0; d];
        e[i] = 1.0;
        patterns.push(e);
    }
    while patterns.len() < l {
        let mut v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        v[0] = 0.0;
        v[1] = 0.0;
        if config.pattern_mode == PatternMode::Orthogonal {
            // two passes for numerical orthogonality
            for _ in 0..2 {
                for p in &patterns[2..] {
                    let ip: f64 = v.iter().zip(p).map(|(a, b)| a * b).sum();
                    v.iter_mut().zip(p).for_each(|(a, b)| *a -= ip * b);
                }
            }
        }
        let nv = norm(&v);
        if nv < 1e-6 {
            continue;
        }
        v.iter_mut().for_each(|a| *a /= nv);
        patterns.push(v);
    }
    PatternSet::new(d, config.pattern_mode, patterns)
}

/// A noise vector with Euclidean norm at most sigma.
pub fn draw_noise(d: usize, sigma: f64, mode: NoiseMode, rng: &mut Rng) -> Result<Vec<f64>> {
    if !(sigma >= 0.0) {
        return Err(invalid("sigma must be nonnegative"));
    }
    if sigma == 0.0 || mode == NoiseMode::None {
        return Ok(vec![0.0; d]);
    }
    let mut z: Vec<f64> = (0..d)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect();
    match mode {
        NoiseMode::GaussianClipped => {
            let s = sigma / (d as f64).sqrt();
            z.iter_mut().for_each(|x| *x *= s);
            let nz = norm(&z);
            if nz > sigma {
                z.iter_mut().for_each(|x| *x *= sigma / nz);
            }
        }
        NoiseMode::UniformBall => {
            let nz = norm(&z);
            let radius = sigma * rng.random::<f64>().powf(1.0 / d as f64);
            z.iter_mut().for_each(|x| *x *= radius / nz);
        }
        NoiseMode::None => unreachable!(),
    }
    Ok(z)
}

#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub graph: StructuredGraph,
    pub train: LabeledSubset,
    pub test: LabeledSubset,
}

/// Builds the three node groups, wires them according to the data model and
/// draws a balanced train split. Node ids are ordered V+, V-, then V_N.
pub fn generate_graph(patterns: &PatternSet, config: &GenConfig) -> Result<GeneratedData> {
    config.validate()?;
    if patterns.dim() != config.d {
        return Err(Error::DimensionMismatch {
            expected: config.d,
            got: patterns.dim(),
        });
    }
    if patterns.len() < 3 {
        return Err(invalid("pattern set has no class-irrelevant patterns"));
    }
    let mut rng = rng::stream(config.seed, &[tag::GRAPH]);
    let (n_rel, n_irr) = config.group_sizes();
    let n = 2 * n_rel + n_irr;
    let first_irr = 2 * n_rel;
    let m = config.degree;

    let mut tags = Vec::with_capacity(n);
    tags.extend(std::iter::repeat_n(PartitionTag::VPlus, n_rel));
    tags.extend(std::iter::repeat_n(PartitionTag::VMinus, n_rel));
    let mut pattern_of = vec![PatternSet::POSITIVE; n_rel];
    pattern_of.extend(std::iter::repeat_n(PatternSet::NEGATIVE, n_rel));

    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(n * m / 2 + n_irr);
    for v in first_irr..n {
        let positive = rng.random::<bool>();
        let offset = if positive { 0 } else { n_rel };
        tags.push(if positive {
            PartitionTag::VNPlus
        } else {
            PartitionTag::VNMinus
        });
        pattern_of.push(rng.random_range(2..patterns.len()));
        edges.push((offset + rng.random_range(0..n_rel), v));
        if config.outlier_fraction > 0.0 && rng.random::<f64>() < config.outlier_fraction {
            let other = if positive { n_rel } else { 0 };
            edges.push((other + rng.random_range(0..n_rel), v));
        }
    }

    for (u, v) in random_regular(n_irr, m - 1, &mut rng) {
        edges.push((first_irr + u, first_irr + v));
    }

    let mut degree = vec![0usize; n];
    for &(u, v) in &edges {
        degree[u] += 1;
        degree[v] += 1;
    }
    for group in [0..n_rel, n_rel..2 * n_rel] {
        let mut stubs: Vec<usize> = group
            .clone()
            .flat_map(|v| std::iter::repeat_n(v, m.saturating_sub(degree[v])))
            .collect();
        stubs.shuffle(&mut rng);
        for pair in stubs.chunks_exact(2) {
            if pair[0] != pair[1] {
                edges.push((pair[0], pair[1]));
            }
        }
    }

    let mut features = Vec::with_capacity(n * config.d);
    let mut labels = Vec::with_capacity(n);
    for v in 0..n {
        let z = draw_noise(config.d, config.sigma, config.noise, &mut rng)?;
        features.extend(
            patterns
                .get(pattern_of[v])
                .iter()
                .zip(&z)
                .map(|(p, z)| p + z),
        );
        labels.push(tags[v].label().expect("generated nodes are tagged"));
    }

    let graph = StructuredGraph::new(config.d, config.sigma, features, labels, tags, &edges)?
        .with_patterns(patterns.clone())?;
    let mut split_rng = rng::stream(config.seed, &[tag::SPLIT]);
    let (train, test) = balanced_split(&graph, config.train_size, &mut split_rng)?;
    Ok(GeneratedData { graph, train, test })
}

/// Draws |D| / 2 nodes of each label (the odd one goes to a random class);
/// the test set is every remaining node that is not an outlier.
pub fn balanced_split(
    graph: &StructuredGraph,
    size: usize,
    rng: &mut Rng,
) -> Result<(LabeledSubset, LabeledSubset)> {
    let eligible = |y: i8| -> Vec<usize> {
        (0..graph.n())
            .filter(|&v| graph.label(v) == y && !graph.is_outlier(v))
            .collect()
    };
    let mut pos = eligible(1);
    let mut neg = eligible(-1);
    let mut want_pos = size / 2;
    let mut want_neg = size / 2;
    if size % 2 == 1 {
        if rng.random::<bool>() {
            want_pos += 1;
        } else {
            want_neg += 1;
        }
    }
    if want_pos > pos.len() || want_neg > neg.len() {
        return Err(invalid(format!(
            "cannot draw a balanced split of size {size}"
        )));
    }
    pos.shuffle(rng);
    neg.shuffle(rng);
    let mut train: Vec<usize> = pos[..want_pos]
        .iter()
        .chain(&neg[..want_neg])
        .copied()
        .collect();
    train.sort_unstable();
    let mut in_train = vec![false; graph.n()];
    train.iter().for_each(|&v| in_train[v] = true);
    let test: Vec<usize> = (0..graph.n())
        .filter(|&v| !in_train[v] && !graph.is_outlier(v))
        .collect();
    Ok((
        LabeledSubset::new(graph, train)?,
        LabeledSubset::new(graph, test)?,
    ))
}

/// Nested balanced training sets, one per entry of `sizes`, drawn from a
/// single shuffle so that a smaller set is a prefix of every larger one.
/// Each set takes ceil(s/2) positives and floor(s/2) negatives. The test set
/// is shared: every non-outlier node outside the largest training set.
pub fn nested_splits(
    graph: &StructuredGraph,
    sizes: &[usize],
    rng: &mut Rng,
) -> Result<(Vec<LabeledSubset>, LabeledSubset)> {
    let largest = sizes.iter().copied().max().ok_or(Error::EmptySet)?;
    let eligible = |y: i8| -> Vec<usize> {
        (0..graph.n())
            .filter(|&v| graph.label(v) == y && !graph.is_outlier(v))
            .collect()
    };
    let mut pos = eligible(1);
    let mut neg = eligible(-1);
    if largest.div_ceil(2) > pos.len() || largest / 2 > neg.len() {
        return Err(invalid(format!(
            "cannot draw a balanced split of size {largest}"
        )));
    }
    pos.shuffle(rng);
    neg.shuffle(rng);
    let take = |s: usize| -> Result<LabeledSubset> {
        let mut nodes: Vec<usize> = pos[..s.div_ceil(2)]
            .iter()
            .chain(&neg[..s / 2])
            .copied()
            .collect();
        nodes.sort_unstable();
        LabeledSubset::new(graph, nodes)
    };
    let trains = sizes.iter().map(|&s| take(s)).collect::<Result<Vec<_>>>()?;
    let mut in_train = vec![false; graph.n()];
    take(largest)?
        .nodes()
        .iter()
        .for_each(|&v| in_train[v] = true);
    let test: Vec<usize> = (0..graph.n())
        .filter(|&v| !in_train[v] && !graph.is_outlier(v))
        .collect();
    Ok((trains, LabeledSubset::new(graph, test)?))
}

fn key(u: usize, v: usize) -> (usize, usize) {
    if u < v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Random k-regular simple graph on `n` nodes: configuration-model pairing
/// followed by double-edge swaps that remove loops and repeated edges. When
/// n * k is odd one stub is left unpaired.
pub fn random_regular(n: usize, k: usize, rng: &mut Rng) -> Vec<(usize, usize)> {
    if k == 0 || n < 2 {
        return Vec::new();
    }
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, k)).collect();
    stubs.shuffle(rng);
    let mut edges: Vec<(usize, usize)> = stubs.chunks_exact(2).map(|p| key(p[0], p[1])).collect();
    let mut count: HashMap<(usize, usize), usize> = HashMap::with_capacity(edges.len());
    for &e in &edges {
        *count.entry(e).or_default() += 1;
    }
    let is_bad =
        |e: (usize, usize), count: &HashMap<(usize, usize), usize>| e.0 == e.1 || count[&e] > 1;
    let mut bad: Vec<usize> = (0..edges.len())
        .filter(|&i| is_bad(edges[i], &count))
        .collect();
    let mut attempts = 0usize;
    while let Some(&i) = bad.last() {
        if !is_bad(edges[i], &count) {
            bad.pop();
            continue;
        }
        attempts += 1;
        assert!(
            attempts < 1000 * edges.len() + 1000,
            "edge-swap repair did not converge"
        );
        let j = rng.random_range(0..edges.len());
        if i == j {
            continue;
        }
        let (a, b) = edges[i];
        let (c, d) = if rng.random::<bool>() {
            edges[j]
        } else {
            (edges[j].1, edges[j].0)
        };
        let (e1, e2) = (key(a, c), key(b, d));
        if a == c || b == d || e1 == e2 || count.contains_key(&e1) || count.contains_key(&e2) {
            continue;
        }
        for old in [edges[i], edges[j]] {
            let c = count.get_mut(&old).unwrap();
            *c -= 1;
            if *c == 0 {
                count.remove(&old);
            }
        }
        edges[i] = e1;
        edges[j] = e2;
        count.insert(e1, 1);
        count.insert(e2, 1);
        if is_bad(edges[j], &count) {
            bad.push(j);
        }
    }
    edges
}
