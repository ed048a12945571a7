//! Graph and dataset representations shared by every other module, plus the
//! line-based text format used to move graphs between processes.

use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Tolerance used for unit-norm and orthogonality checks on patterns.
pub const PATTERN_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PatternMode {
    /// All patterns mutually orthogonal.
    Orthogonal,
    /// Only the irrelevant patterns' inner products with p+ and p- vanish.
    Relaxed,
}

impl FromStr for PatternMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "orthogonal" => Ok(Self::Orthogonal),
            "relaxed" => Ok(Self::Relaxed),
            _ => Err(invalid(format!("unknown pattern mode `{s}`"))),
        }
    }
}

impl fmt::Display for PatternMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Orthogonal => "orthogonal",
            Self::Relaxed => "relaxed",
        })
    }
}

/// The L feature patterns. Index 0 is p+, index 1 is p-, the rest are
/// class-irrelevant.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternSet {
    dim: usize,
    mode: PatternMode,
    patterns: Vec<Vec<f64>>,
}

impl PatternSet {
    pub const POSITIVE: usize = 0;
    pub const NEGATIVE: usize = 1;

    pub fn new(dim: usize, mode: PatternMode, patterns: Vec<Vec<f64>>) -> Result<Self> {
        let set = Self {
            dim,
            mode,
            patterns,
        };
        set.check()?;
        Ok(set)
    }

    fn check(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(invalid("pattern dimension must be positive"));
        }
        if self.patterns.len() < 2 {
            return Err(invalid("need at least p+ and p-"));
        }
        if self.mode == PatternMode::Orthogonal && self.patterns.len() > self.dim {
            return Err(invalid(format!(
                "{} orthogonal patterns do not fit in dimension {}",
                self.patterns.len(),
                self.dim
            )));
        }
        for (i, p) in self.patterns.iter().enumerate() {
            if p.len() != self.dim {
                return Err(Error::DimensionMismatch {
                    expected: self.dim,
                    got: p.len(),
                });
            }
            if (norm(p) - 1.0).abs() > PATTERN_TOL {
                return Err(invalid(format!("pattern {i} is not unit norm")));
            }
        }
        for i in 0..self.patterns.len() {
            let others: Box<dyn Iterator<Item = usize>> = match self.mode {
                PatternMode::Orthogonal => Box::new(0..i),
                PatternMode::Relaxed if i >= 2 => Box::new(0..2),
                PatternMode::Relaxed => Box::new(0..i),
            };
            for j in others {
                let ip = dot(&self.patterns[i], &self.patterns[j]);
                if ip.abs() > PATTERN_TOL {
                    return Err(invalid(format!(
                        "patterns {j} and {i} not orthogonal (<p{j},p{i}> = {ip:e})"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn mode(&self) -> PatternMode {
        self.mode
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.patterns[i]
    }

    pub fn positive(&self) -> &[f64] {
        &self.patterns[Self::POSITIVE]
    }

    pub fn negative(&self) -> &[f64] {
        &self.patterns[Self::NEGATIVE]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.patterns.iter().map(Vec::as_slice)
    }

    /// Index of the pattern closest (in Euclidean distance) to `x`.
    pub fn nearest(&self, x: &[f64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, p) in self.patterns.iter().enumerate() {
            let d2: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best.0 {
                best = (d2, i);
            }
        }
        best.1
    }
}

/// Which of the four data-model groups a node belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PartitionTag {
    VPlus,
    VMinus,
    VNPlus,
    VNMinus,
    Unknown,
}

impl PartitionTag {
    /// Label implied by the tag, if any.
    pub fn label(self) -> Option<i8> {
        match self {
            Self::VPlus | Self::VNPlus => Some(1),
            Self::VMinus | Self::VNMinus => Some(-1),
            Self::Unknown => None,
        }
    }

    /// True for nodes carrying a class-relevant pattern.
    pub fn is_relevant(self) -> bool {
        matches!(self, Self::VPlus | Self::VMinus)
    }
}

impl fmt::Display for PartitionTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::VPlus => "VPlus",
            Self::VMinus => "VMinus",
            Self::VNPlus => "VNPlus",
            Self::VNMinus => "VNMinus",
            Self::Unknown => "Unknown",
        })
    }
}

impl FromStr for PartitionTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "VPlus" => Self::VPlus,
            "VMinus" => Self::VMinus,
            "VNPlus" => Self::VNPlus,
            "VNMinus" => Self::VNMinus,
            "Unknown" => Self::Unknown,
            _ => return Err(invalid(format!("unknown partition tag `{s}`"))),
        })
    }
}

/// Undirected graph with node features, labels and partition tags.
///
/// Node ids are dense and 0-based. Self-loops are never stored; the
/// neighborhood of a node always includes the node itself.
#[derive(Debug, Clone, PartialEq)]
pub struct StructuredGraph {
    dim: usize,
    sigma: f64,
    features: Vec<f64>,
    labels: Vec<i8>,
    tags: Vec<PartitionTag>,
    adjacency: Vec<Vec<usize>>,
    patterns: Option<PatternSet>,
}

impl StructuredGraph {
    /// Builds a graph from flattened `n * dim` features and an edge list.
    /// Duplicate edges and explicit self-loops are dropped.
    pub fn new(
        dim: usize,
        sigma: f64,
        features: Vec<f64>,
        labels: Vec<i8>,
        tags: Vec<PartitionTag>,
        edges: &[(usize, usize)],
    ) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("feature dimension must be positive"));
        }
        if !(sigma >= 0.0) {
            return Err(invalid("sigma must be nonnegative"));
        }
        let n = labels.len();
        if features.len() != n * dim {
            return Err(Error::DimensionMismatch {
                expected: n * dim,
                got: features.len(),
            });
        }
        if tags.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: tags.len(),
            });
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1 && y != -1) {
            return Err(invalid(format!("label {bad} is not +1 or -1")));
        }
        let mut sets = vec![BTreeSet::new(); n];
        for &(u, v) in edges {
            for x in [u, v] {
                if x >= n {
                    return Err(Error::DanglingEdge { node: x, n });
                }
            }
            if u != v {
                sets[u].insert(v);
                sets[v].insert(u);
            }
        }
        let adjacency = sets.into_iter().map(|s| s.into_iter().collect()).collect();
        Ok(Self {
            dim,
            sigma,
            features,
            labels,
            tags,
            adjacency,
            patterns: None,
        })
    }

    pub fn with_patterns(mut self, patterns: PatternSet) -> Result<Self> {
        if patterns.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: patterns.dim(),
            });
        }
        self.patterns = Some(patterns);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn patterns(&self) -> Option<&PatternSet> {
        self.patterns.as_ref()
    }

    pub fn feature(&self, v: usize) -> &[f64] {
        &self.features[v * self.dim..(v + 1) * self.dim]
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn label(&self, v: usize) -> i8 {
        self.labels[v]
    }

    pub fn labels(&self) -> &[i8] {
        &self.labels
    }

    pub fn tag(&self, v: usize) -> PartitionTag {
        self.tags[v]
    }

    pub fn tags(&self) -> &[PartitionTag] {
        &self.tags
    }

    /// True when every node carries a known partition tag.
    pub fn is_tagged(&self) -> bool {
        self.tags.iter().all(|&t| t != PartitionTag::Unknown)
    }

    /// Neighbors of `v` excluding `v`, ascending.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    /// Maximum degree R (self-connection not counted).
    pub fn max_degree(&self) -> usize {
        self.adjacency.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges with `u < v`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adjacency
            .iter()
            .enumerate()
            .flat_map(|(u, ns)| ns.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    /// N(v): `v` first, then its neighbors in ascending id order.
    pub fn neighborhood(&self, v: usize) -> Result<Vec<usize>> {
        if v >= self.n() {
            return Err(Error::UnknownNode(v));
        }
        let mut out = Vec::with_capacity(self.degree(v) + 1);
        out.push(v);
        out.extend_from_slice(&self.adjacency[v]);
        Ok(out)
    }

    /// Largest absolute feature entry, the ‖X‖∞ of the pre-training length rule.
    pub fn feature_inf_norm(&self) -> f64 {
        self.features.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// Unlabeled-in-the-model-sense nodes: class-irrelevant nodes adjacent to
    /// a class-relevant node of the opposite label.
    pub fn is_outlier(&self, v: usize) -> bool {
        match self.tags[v] {
            PartitionTag::VNPlus => self.adjacency[v]
                .iter()
                .any(|&u| self.tags[u] == PartitionTag::VMinus),
            PartitionTag::VNMinus => self.adjacency[v]
                .iter()
                .any(|&u| self.tags[u] == PartitionTag::VPlus),
            _ => false,
        }
    }

    /// Number of class-relevant nodes in N(v) \ {v}.
    pub fn relevant_neighbor_count(&self, v: usize) -> usize {
        self.adjacency[v]
            .iter()
            .filter(|&&u| self.tags[u].is_relevant())
            .count()
    }
}

/// An ordered set of labeled node ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSubset {
    nodes: Vec<usize>,
    positives: usize,
    negatives: usize,
}

impl LabeledSubset {
    pub fn new(graph: &StructuredGraph, nodes: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; graph.n()];
        let (mut positives, mut negatives) = (0, 0);
        for &v in &nodes {
            if v >= graph.n() {
                return Err(Error::UnknownNode(v));
            }
            if std::mem::replace(&mut seen[v], true) {
                return Err(invalid(format!("duplicate node {v} in subset")));
            }
            if graph.label(v) > 0 {
                positives += 1;
            } else {
                negatives += 1;
            }
        }
        Ok(Self {
            nodes,
            positives,
            negatives,
        })
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.positives
    }

    pub fn negatives(&self) -> usize {
        self.negatives
    }

    /// ||D+| - |D-||.
    pub fn imbalance(&self) -> usize {
        self.positives.abs_diff(self.negatives)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    /// A class-irrelevant node without a same-class relevant neighbor.
    MissingRelevantNeighbor { node: usize },
    /// An edge forbidden by the data model (V+ to VN-, or V- to VN+).
    ForbiddenEdge { u: usize, v: usize },
    /// A direct V+ to V- edge. Reported as a warning only.
    RelevantCrossEdge { u: usize, v: usize },
    /// Label disagrees with the tag.
    LabelMismatch { node: usize },
    /// Feature farther than sigma from the pattern its tag implies.
    NoiseBound { node: usize, distance: f64 },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub warnings: Vec<Violation>,
    /// ||D+| - |D-|| for the supplied labeled subset.
    pub imbalance: Option<usize>,
    /// False when the graph has no tags and the structural checks were skipped.
    pub checked: bool,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks the structural data-model assumptions on a tagged graph and the
/// label balance of `train` when given. Untagged graphs are skipped.
pub fn validate_assumptions(
    graph: &StructuredGraph,
    train: Option<&LabeledSubset>,
) -> ValidationReport {
    let mut report = ValidationReport {
        imbalance: train.map(LabeledSubset::imbalance),
        ..Default::default()
    };
    if !graph.is_tagged() {
        return report;
    }
    report.checked = true;
    use PartitionTag::*;
    for v in 0..graph.n() {
        let tag = graph.tag(v);
        if tag.label() != Some(graph.label(v)) {
            report.violations.push(Violation::LabelMismatch { node: v });
        }
        let needed = match tag {
            VNPlus => Some(VPlus),
            VNMinus => Some(VMinus),
            _ => None,
        };
        if let Some(want) = needed {
            if !graph.neighbors(v).iter().any(|&u| graph.tag(u) == want) {
                report
                    .violations
                    .push(Violation::MissingRelevantNeighbor { node: v });
            }
        }
        if let Some(ps) = graph.patterns() {
            let x = graph.feature(v);
            let distance = match tag {
                VPlus => distance(x, ps.positive()),
                VMinus => distance(x, ps.negative()),
                _ => (2..ps.len())
                    .map(|i| distance(x, ps.get(i)))
                    .fold(f64::INFINITY, f64::min),
            };
            if distance > graph.sigma() + 1e-9 {
                report
                    .violations
                    .push(Violation::NoiseBound { node: v, distance });
            }
        }
    }
    for (u, v) in graph.edges() {
        match (graph.tag(u), graph.tag(v)) {
            (VPlus, VNMinus) | (VNMinus, VPlus) | (VMinus, VNPlus) | (VNPlus, VMinus) => {
                report.violations.push(Violation::ForbiddenEdge { u, v })
            }
            (VPlus, VMinus) | (VMinus, VPlus) => {
                report.warnings.push(Violation::RelevantCrossEdge { u, v })
            }
            _ => {}
        }
    }
    report
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Formats a float with 17 significant digits.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes the graph in the line-based text format:
///
/// ```text
/// n d sigma
/// <n lines of d features>
/// <n lines `y tag`>
/// edges m
/// <m lines `u v`>
/// ```
///
/// followed, when the graph carries its pattern set, by a `patterns L mode`
/// line and L lines of d coordinates.
pub fn save_graph<W: Write>(graph: &StructuredGraph, mut out: W) -> Result<()> {
    writeln!(
        out,
        "{} {} {}",
        graph.n(),
        graph.dim(),
        fmt_f64(graph.sigma())
    )?;
    let mut line = String::new();
    for v in 0..graph.n() {
        line.clear();
        join_floats(&mut line, graph.feature(v));
        writeln!(out, "{line}")?;
    }
    for v in 0..graph.n() {
        writeln!(out, "{} {}", graph.label(v), graph.tag(v))?;
    }
    writeln!(out, "edges {}", graph.edge_count())?;
    for (u, v) in graph.edges() {
        writeln!(out, "{u} {v}")?;
    }
    if let Some(ps) = graph.patterns() {
        writeln!(out, "patterns {} {}", ps.len(), ps.mode())?;
        for p in ps.iter() {
            line.clear();
            join_floats(&mut line, p);
            writeln!(out, "{line}")?;
        }
    }
    out.flush()?;
    Ok(())
}

pub(crate) fn join_floats(buf: &mut String, xs: &[f64]) {
    for (i, x) in xs.iter().enumerate() {
        if i > 0 {
            buf.push(' ');
        }
        buf.push_str(&fmt_f64(*x));
    }
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    fn next_line(&mut self) -> Result<Option<String>> {
        loop {
            match self.inner.next() {
                None => return Ok(None),
                Some(l) => {
                    self.line += 1;
                    let l = l?;
                    if !l.trim().is_empty() {
                        return Ok(Some(l));
                    }
                }
            }
        }
    }

    fn expect_line(&mut self, what: &str) -> Result<String> {
        self.next_line()?
            .ok_or_else(|| self.err(format!("unexpected end of input, expected {what}")))
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            line: self.line,
            msg: msg.into(),
        }
    }

    fn parse<T: FromStr>(&self, tok: Option<&str>, what: &str) -> Result<T> {
        let tok = tok.ok_or_else(|| self.err(format!("missing {what}")))?;
        tok.parse()
            .map_err(|_| self.err(format!("bad {what} `{tok}`")))
    }

    fn floats(&self, line: &str, expected: usize) -> Result<Vec<f64>> {
        let xs = line
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| self.err(format!("bad decimal `{t}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        if xs.len() != expected {
            return Err(self.err(format!(
                "dimension mismatch: expected {expected} values, got {}",
                xs.len()
            )));
        }
        Ok(xs)
    }
}

/// Reads a graph written by [`save_graph`].
pub fn load_graph<R: BufRead>(input: R) -> Result<StructuredGraph> {
    let mut lines = Lines {
        inner: input.lines(),
        line: 0,
    };
    let header = lines.expect_line("header `n d sigma`")?;
    let mut toks = header.split_whitespace();
    let n: usize = lines.parse(toks.next(), "node count")?;
    let d: usize = lines.parse(toks.next(), "dimension")?;
    let sigma: f64 = lines.parse(toks.next(), "sigma")?;
    if toks.next().is_some() {
        return Err(lines.err("malformed header: expected `n d sigma`"));
    }
    let mut features = Vec::with_capacity(n * d);
    for _ in 0..n {
        let l = lines.expect_line("feature line")?;
        features.extend(lines.floats(&l, d)?);
    }
    let mut labels = Vec::with_capacity(n);
    let mut tags = Vec::with_capacity(n);
    for _ in 0..n {
        let l = lines.expect_line("label line")?;
        let mut t = l.split_whitespace();
        labels.push(lines.parse::<i8>(t.next(), "label")?);
        tags.push(lines.parse::<PartitionTag>(t.next(), "tag")?);
    }
    let l = lines.expect_line("`edges m` line")?;
    let mut t = l.split_whitespace();
    if t.next() != Some("edges") {
        return Err(lines.err("expected `edges m`"));
    }
    let m: usize = lines.parse(t.next(), "edge count")?;
    let mut edges = Vec::with_capacity(m);
    for _ in 0..m {
        let l = lines.expect_line("edge line")?;
        let mut t = l.split_whitespace();
        let u: usize = lines.parse(t.next(), "edge endpoint")?;
        let v: usize = lines.parse(t.next(), "edge endpoint")?;
        edges.push((u, v));
    }
    let mut graph = StructuredGraph::new(d, sigma, features, labels, tags, &edges)?;
    if let Some(l) = lines.next_line()? {
        let mut t = l.split_whitespace();
        if t.next() != Some("patterns") {
            return Err(lines.err("unexpected trailing content"));
        }
        let count: usize = lines.parse(t.next(), "pattern count")?;
        let mode: PatternMode = lines.parse(t.next(), "pattern mode")?;
        let mut ps = Vec::with_capacity(count);
        for _ in 0..count {
            let l = lines.expect_line("pattern line")?;
            ps.push(lines.floats(&l, d)?);
        }
        graph = graph.with_patterns(PatternSet::new(d, mode, ps)?)?;
    }
    Ok(graph)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// The four-node toy graph: edges 1-2 and 3-4 (0-based: 0-1, 2-3).
    pub(crate) fn toy_graph() -> StructuredGraph {
        use PartitionTag::*;
        let features = vec![1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 0.0];
        StructuredGraph::new(
            3,
            0.0,
            features,
            vec![1, 1, -1, -1],
            vec![VPlus, VNPlus, VNMinus, VMinus],
            &[(0, 1), (2, 3)],
        )
        .unwrap()
    }

    #[test]
    fn toy_graph_is_clean() {
        let g = toy_graph();
        let r = validate_assumptions(&g, None);
        assert!(r.checked);
        assert!(r.is_clean(), "{r:?}");
    }

    #[test]
    fn forbidden_edge_is_reported() {
        let g = toy_graph();
        let edges: Vec<_> = g.edges().chain([(0, 2)]).collect();
        let g2 = StructuredGraph::new(
            3,
            0.0,
            g.features().to_vec(),
            g.labels().to_vec(),
            g.tags().to_vec(),
            &edges,
        )
        .unwrap();
        let r = validate_assumptions(&g2, None);
        assert_eq!(r.violations, vec![Violation::ForbiddenEdge { u: 0, v: 2 }]);
    }

    #[test]
    fn relevant_cross_edge_is_only_a_warning() {
        let g = toy_graph();
        let edges: Vec<_> = g.edges().chain([(0, 3)]).collect();
        let g2 = StructuredGraph::new(
            3,
            0.0,
            g.features().to_vec(),
            g.labels().to_vec(),
            g.tags().to_vec(),
            &edges,
        )
        .unwrap();
        let r = validate_assumptions(&g2, None);
        assert!(r.is_clean());
        assert_eq!(r.warnings.len(), 1);
    }

    #[test]
    fn missing_relevant_neighbor() {
        let g = toy_graph();
        let g2 = StructuredGraph::new(
            3,
            0.0,
            g.features().to_vec(),
            g.labels().to_vec(),
            g.tags().to_vec(),
            &[(2, 3)],
        )
        .unwrap();
        let r = validate_assumptions(&g2, None);
        assert_eq!(
            r.violations,
            vec![Violation::MissingRelevantNeighbor { node: 1 }]
        );
    }

    #[test]
    fn balanced_subset_has_zero_imbalance() {
        use PartitionTag::*;
        let n = 100;
        let labels: Vec<i8> = (0..n).map(|i| if i % 2 == 0 { 1 } else { -1 }).collect();
        let tags = labels
            .iter()
            .map(|&y| if y > 0 { VPlus } else { VMinus })
            .collect();
        let g = StructuredGraph::new(1, 0.0, vec![0.0; n], labels, tags, &[]).unwrap();
        let d = LabeledSubset::new(&g, (0..n).collect()).unwrap();
        assert_eq!((d.positives(), d.negatives()), (50, 50));
        assert_eq!(validate_assumptions(&g, Some(&d)).imbalance, Some(0));
    }

    #[test]
    fn neighborhoods() {
        let g = toy_graph();
        // node "2" of the toy graph is id 1
        assert_eq!(g.neighborhood(1).unwrap(), vec![1, 0]);
        assert_eq!(g.neighborhood(0).unwrap(), vec![0, 1]);
        assert!(matches!(g.neighborhood(9), Err(Error::UnknownNode(9))));
        let lone =
            StructuredGraph::new(1, 0.0, vec![0.5], vec![1], vec![PartitionTag::Unknown], &[])
                .unwrap();
        assert_eq!(lone.neighborhood(0).unwrap(), vec![0]);
    }

    #[test]
    fn subset_rejects_duplicates_and_bad_ids() {
        let g = toy_graph();
        assert!(LabeledSubset::new(&g, vec![0, 0]).is_err());
        assert!(matches!(
            LabeledSubset::new(&g, vec![7]),
            Err(Error::UnknownNode(7))
        ));
    }

    #[test]
    fn single_node_file() {
        let text = "1 2 0\n0.5 -0.25\n1 Unknown\nedges 0\n";
        let g = load_graph(text.as_bytes()).unwrap();
        assert_eq!(g.neighborhood(0).unwrap(), vec![0]);
        assert_eq!(g.feature(0), &[0.5, -0.25]);
        assert!(!g.is_tagged());
        assert!(!validate_assumptions(&g, None).checked);
    }

    #[test]
    fn dangling_endpoint() {
        let text = "2 1 0\n0\n0\n1 VPlus\n1 VNPlus\nedges 1\n0 2\n";
        let err = load_graph(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::DanglingEdge { node: 2, n: 2 }));
        assert!(err.to_string().contains("dangling edge endpoint"));
    }

    #[test]
    fn malformed_inputs() {
        assert!(matches!(
            load_graph("2 1\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        let err = load_graph("1 2 0\n0.5\n1 VPlus\nedges 0\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("dimension mismatch"), "{err}");
        assert!(load_graph("1 1 0\n0.5\n2 VPlus\nedges 0\n".as_bytes()).is_err());
    }

    #[test]
    fn toy_round_trip() {
        let g = toy_graph();
        let mut buf = Vec::new();
        save_graph(&g, &mut buf).unwrap();
        assert_eq!(load_graph(buf.as_slice()).unwrap(), g);
    }

    #[test]
    fn pattern_set_invariants() {
        let e = |i: usize| {
            let mut v = vec![0.0; 3];
            v[i] = 1.0;
            v
        };
        assert!(PatternSet::new(3, PatternMode::Orthogonal, vec![e(0), e(1), e(2)]).is_ok());
        let skew = vec![
            std::f64::consts::FRAC_1_SQRT_2,
            0.0,
            std::f64::consts::FRAC_1_SQRT_2,
        ];
        assert!(
            PatternSet::new(3, PatternMode::Orthogonal, vec![e(0), e(1), skew.clone()]).is_err()
        );
        assert!(PatternSet::new(3, PatternMode::Relaxed, vec![e(0), e(1), e(2), e(2)]).is_ok());
        assert!(PatternSet::new(3, PatternMode::Relaxed, vec![e(0), e(1), skew]).is_err());
        assert!(PatternSet::new(3, PatternMode::Relaxed, vec![e(0), vec![0.0, 2.0, 0.0]]).is_err());
    }
}
