//! Lucky-neuron detection, projection traces, neuron scatter rows and the
//! shattering construction behind the VC-dimension lower bound.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::graph::{dot, norm, PartitionTag, PatternMode, PatternSet, StructuredGraph};
use crate::model::{ModelState, NormMode};
use crate::trainer::Phase;

/// Worst-case margin test: the target pattern beats every other pattern even
/// when each feature is perturbed by noise of norm at most sigma, and its
/// projection is positive.
pub fn is_lucky(w: &[f64], patterns: &PatternSet, sigma: f64, target: usize) -> bool {
    let slack = sigma * norm(w);
    let own = dot(w, patterns.get(target));
    if own <= 0.0 {
        return false;
    }
    patterns
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != target)
        .all(|(_, p)| own - slack >= dot(w, p) + slack)
}

/// Lucky flag per neuron: b_k = +1 neurons are tested against p+, b_k = -1
/// against p-. Pruned neurons are never lucky.
pub fn lucky_mask(model: &ModelState, patterns: &PatternSet, sigma: f64) -> Vec<bool> {
    (0..model.width())
        .map(|k| {
            let target = if model.signs()[k] > 0 {
                PatternSet::POSITIVE
            } else {
                PatternSet::NEGATIVE
            };
            model.is_alive(k) && is_lucky(model.weight(k), patterns, sigma, target)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LuckyReport {
    /// Lucky neurons with b = +1.
    pub plus: Vec<usize>,
    /// Lucky neurons with b = -1.
    pub minus: Vec<usize>,
    pub plus_class: usize,
    pub minus_class: usize,
    /// |K+| / |B+|.
    pub plus_fraction: f64,
    /// |K-| / |B-|.
    pub minus_fraction: f64,
    /// (|K+| + |K-|) / K over alive neurons.
    pub fraction: f64,
    /// (1 - K^-1/2 - L sigma) / L.
    pub simple_bound: f64,
    /// (1 - eps_K - L sigma / pi) / L with eps_K = sqrt(L^2 log q / K).
    pub eps_bound: f64,
    pub eps_k: f64,
}

/// Lucky sets of both sign classes among alive neurons, with the two
/// reference lower bounds on the lucky fraction.
pub fn detect_lucky(model: &ModelState, patterns: &PatternSet, sigma: f64, q: f64) -> LuckyReport {
    let mask = lucky_mask(model, patterns, sigma);
    let alive =
        |s: i8| (0..model.width()).filter(move |&k| model.is_alive(k) && model.signs()[k] == s);
    let plus: Vec<usize> = alive(1).filter(|&k| mask[k]).collect();
    let minus: Vec<usize> = alive(-1).filter(|&k| mask[k]).collect();
    let (plus_class, minus_class) = (alive(1).count(), alive(-1).count());
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let k = model.surviving();
    let l = patterns.len() as f64;
    let eps_k = eps_k(k, patterns.len(), q);
    LuckyReport {
        plus_fraction: ratio(plus.len(), plus_class),
        minus_fraction: ratio(minus.len(), minus_class),
        fraction: ratio(plus.len() + minus.len(), k),
        simple_bound: simple_bound(k, patterns.len(), sigma),
        eps_bound: (1.0 - eps_k - l * sigma / std::f64::consts::PI) / l,
        eps_k,
        plus,
        minus,
        plus_class,
        minus_class,
    }
}

/// sqrt(L^2 log q / K).
pub fn eps_k(k: usize, l: usize, q: f64) -> f64 {
    ((l * l) as f64 * q.ln() / k as f64).sqrt()
}

/// (1 - K^-1/2 - L sigma) / L.
pub fn simple_bound(k: usize, l: usize, sigma: f64) -> f64 {
    (1.0 - (k as f64).powf(-0.5) - l as f64 * sigma) / l as f64
}

/// (1 - eps_K - L sigma / pi) / L.
pub fn eps_bound(eps_k: f64, l: usize, sigma: f64) -> f64 {
    (1.0 - eps_k - l as f64 * sigma / std::f64::consts::PI) / l as f64
}

/// Projections <w_k, p> of every neuron on every pattern, one frame per
/// recorded iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ProjectionTrace {
    pub k: usize,
    pub patterns: usize,
    pub frames: Vec<TraceFrame>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceFrame {
    pub phase: Phase,
    pub t: usize,
    /// Neuron-major: values[k * L + i] = <w_k, p_i>.
    pub values: Vec<f64>,
    pub norms: Vec<f64>,
}

impl ProjectionTrace {
    pub fn new(k: usize, patterns: usize) -> Self {
        Self {
            k,
            patterns,
            frames: Vec::new(),
        }
    }

    pub fn record(&mut self, phase: Phase, t: usize, model: &ModelState, patterns: &PatternSet) {
        let mut values = Vec::with_capacity(model.width() * patterns.len());
        for k in 0..model.width() {
            values.extend(patterns.iter().map(|p| dot(model.weight(k), p)));
        }
        let norms = (0..model.width()).map(|k| norm(model.weight(k))).collect();
        self.frames.push(TraceFrame {
            phase,
            t,
            values,
            norms,
        });
    }

    pub fn value(&self, frame: usize, k: usize, pattern: usize) -> f64 {
        self.frames[frame].values[k * self.patterns + pattern]
    }

    /// Frames of one phase.
    pub fn phase(&self, phase: Phase) -> impl Iterator<Item = &TraceFrame> {
        self.frames.iter().filter(move |f| f.phase == phase)
    }

    /// CSV with header `phase,t,neuron,pattern,value`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("phase,t,neuron,pattern,value\n");
        for f in &self.frames {
            let phase = match f.phase {
                Phase::Pretrain => "pretrain",
                Phase::Pruned => "pruned",
                Phase::Retrain => "retrain",
            };
            for k in 0..self.k {
                for i in 0..self.patterns {
                    out.push_str(&format!(
                        "{phase},{},{k},{i},{:e}\n",
                        f.t,
                        f.values[k * self.patterns + i]
                    ));
                }
            }
        }
        out
    }
}

/// Reference lines for the growth of projections: lucky neurons gain at
/// least c_eta (alpha - sigma s) t along their pattern and other-class
/// neurons move at most c_eta (1 + sigma) s t along any other pattern, with
/// s = sqrt((1 + r^2) log q / |D|).
pub fn projection_reference(
    c_eta: f64,
    alpha: f64,
    sigma: f64,
    r: f64,
    samples: f64,
    q: f64,
    t: f64,
) -> (f64, f64) {
    let s = ((1.0 + r * r) * q.ln() / samples).sqrt();
    (
        c_eta * (alpha - sigma * s) * t,
        c_eta * (1.0 + sigma) * s * t,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionCheck {
    /// Smallest <w_i, p_own> / (c_eta alpha t) over lucky neurons.
    pub min_lucky_ratio: f64,
    /// Largest |<w_j, p>| / (c_eta (1 + sigma) t sqrt((1 + r^2) / |D|)) over
    /// b = -1 neurons and patterns p other than p-.
    pub max_other_ratio: f64,
    pub passed: bool,
}

/// Checks re-training frames with t >= `from`: every lucky neuron has
/// <w_i, p_own> >= 0.5 c_eta alpha t, and every b = -1 neuron has
/// |<w_j, p>| <= 2 c_eta (1 + sigma) t sqrt((1 + r^2) / |D|) for p != p-.
#[allow(clippy::too_many_arguments)]
pub fn check_projections(
    trace: &ProjectionTrace,
    model: &ModelState,
    lucky: &[bool],
    c_eta: f64,
    alpha: f64,
    sigma: f64,
    r: f64,
    samples: f64,
    from: usize,
) -> ProjectionCheck {
    let spread = c_eta * (1.0 + sigma) * ((1.0 + r * r) / samples).sqrt();
    let mut min_lucky = f64::INFINITY;
    let mut max_other: f64 = 0.0;
    let mut frames = 0;
    for f in trace.phase(Phase::Retrain).filter(|f| f.t >= from.max(1)) {
        frames += 1;
        let t = f.t as f64;
        for k in (0..trace.k).filter(|&k| model.is_alive(k)) {
            let row = &f.values[k * trace.patterns..(k + 1) * trace.patterns];
            if model.signs()[k] > 0 {
                if lucky[k] {
                    min_lucky = min_lucky.min(row[PatternSet::POSITIVE] / (c_eta * alpha * t));
                }
            } else {
                if lucky[k] {
                    min_lucky = min_lucky.min(row[PatternSet::NEGATIVE] / (c_eta * alpha * t));
                }
                let other = row
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| i != PatternSet::NEGATIVE);
                max_other = other.fold(max_other, |m, (_, v)| m.max(v.abs() / (spread * t)));
            }
        }
    }
    ProjectionCheck {
        min_lucky_ratio: min_lucky,
        max_other_ratio: max_other,
        passed: frames > 0 && min_lucky >= 0.5 && max_other <= 2.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterRow {
    pub neuron: usize,
    pub sign: i8,
    pub norm: f64,
    /// Degrees.
    pub angle_plus: f64,
    pub angle_minus: f64,
}

/// One row per surviving neuron: norm and angles to p+ and p-.
pub fn neuron_scatter(model: &ModelState, patterns: &PatternSet) -> Vec<ScatterRow> {
    let angle = |w: &[f64], p: &[f64]| {
        let n = norm(w) * norm(p);
        if n == 0.0 {
            90.0
        } else {
            (dot(w, p) / n).clamp(-1.0, 1.0).acos().to_degrees()
        }
    };
    (0..model.width())
        .filter(|&k| model.is_alive(k))
        .map(|k| {
            let w = model.weight(k);
            ScatterRow {
                neuron: k,
                sign: model.signs()[k],
                norm: norm(w),
                angle_plus: angle(w, patterns.positive()),
                angle_minus: angle(w, patterns.negative()),
            }
        })
        .collect()
}

pub fn scatter_csv(rows: &[ScatterRow]) -> String {
    let mut out = String::from("neuron,sign,norm,angle_plus,angle_minus\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:e},{:e},{:e}\n",
            r.neuron, r.sign, r.norm, r.angle_plus, r.angle_minus
        ));
    }
    out
}

/// Largest L accepted by the exhaustive shattering check.
pub const VC_MAX_L: usize = 8;

/// The m = 2^(L/2 - 1) data points, their coefficients and the weights that
/// realize a given labeling.
#[derive(Debug, Clone)]
pub struct VcConstruction {
    pub l: usize,
    pub graph: StructuredGraph,
    /// Center node of data point J (J read as a bit vector, bit i - 1 = J_i).
    pub centers: Vec<usize>,
    pub alpha: Vec<f64>,
    pub model: ModelState,
}

/// Solves (ones - I) x = rhs, checking the determinant
/// (-1)^(m-1) (m - 1) against the numeric one.
pub fn solve_shattering_system(rhs: &[f64]) -> Result<Vec<f64>> {
    let m = rhs.len();
    if m < 2 {
        return Err(invalid("system needs at least two unknowns"));
    }
    let a = DMatrix::from_fn(m, m, |i, j| if i == j { 0.0 } else { 1.0 });
    let det = a.determinant();
    let expected = if m % 2 == 1 { 1.0 } else { -1.0 } * (m - 1) as f64;
    if (det - expected).abs() > 1e-9 * expected.abs().max(1.0) || det == 0.0 {
        return Err(Error::Singular);
    }
    let x = a
        .lu()
        .solve(&DVector::from_column_slice(rhs))
        .ok_or(Error::Singular)?;
    Ok(x.iter().copied().collect())
}

/// Determinant of the m x m all-ones-minus-identity matrix, computed numerically.
pub fn shattering_determinant(m: usize) -> f64 {
    DMatrix::from_fn(m, m, |i, j| if i == j { 0.0 } else { 1.0 }).determinant()
}

fn vc_size(l: usize) -> Result<(usize, usize)> {
    if l < 4 || l % 2 == 1 {
        return Err(invalid("L must be even and at least 4"));
    }
    if l > VC_MAX_L {
        return Err(invalid(format!(
            "L = {l} too large for exhaustive verification (max {VC_MAX_L})"
        )));
    }
    let bits = l / 2 - 1;
    Ok((bits, 1 << bits))
}

/// Builds the shattered set and the weights realizing `labels`.
///
/// Data point J is a star: its center carries p+ or p- (matching the
/// label) and its `L/2 - 1` leaves carry p_{2i-1} or p_{2i} of the
/// irrelevant patterns according to J_i. The coefficients solve
/// sum_{J' != 1 - J} alpha_J' = y_J, and neuron J gets b_J = sign(alpha_J)
/// with w_J = |alpha_J| times the sum of J's leaf features.
pub fn vc_construct(l: usize, labels: &[i8]) -> Result<VcConstruction> {
    vc_construct_with(l, labels, |_| {})
}

/// Like [`vc_construct`], with a hook that may modify the coefficients
/// before the weights are assembled.
pub fn vc_construct_with(
    l: usize,
    labels: &[i8],
    perturb: impl Fn(&mut Vec<f64>),
) -> Result<VcConstruction> {
    let (bits, m) = vc_size(l)?;
    if labels.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: labels.len(),
        });
    }
    if labels.iter().any(|&y| y != 1 && y != -1) {
        return Err(invalid("labels must be +1 or -1"));
    }
    let d = l;
    let e = |i: usize| {
        let mut v = vec![0.0; d];
        v[i] = 1.0;
        v
    };
    let patterns = PatternSet::new(d, PatternMode::Orthogonal, (0..l).map(e).collect())?;
    // irrelevant pattern number i (1-based) is e_{i+1} (0-based index i + 1)
    let leaf_pattern = |j: usize, i: usize| {
        let bit = (j >> (i - 1)) & 1;
        if bit == 1 {
            2 * i - 1 + 1
        } else {
            2 * i + 1
        }
    };
    let per = 1 + bits;
    let n = m * per;
    let mut features = Vec::with_capacity(n * d);
    let mut ys = Vec::with_capacity(n);
    let mut tags = Vec::with_capacity(n);
    let mut edges = Vec::new();
    let mut centers = Vec::with_capacity(m);
    for (j, &y) in labels.iter().enumerate() {
        let c = j * per;
        centers.push(c);
        features.extend(patterns.get(if y > 0 {
            PatternSet::POSITIVE
        } else {
            PatternSet::NEGATIVE
        }));
        ys.push(y);
        tags.push(if y > 0 {
            PartitionTag::VPlus
        } else {
            PartitionTag::VMinus
        });
        for i in 1..=bits {
            features.extend(patterns.get(leaf_pattern(j, i)));
            ys.push(y);
            tags.push(if y > 0 {
                PartitionTag::VNPlus
            } else {
                PartitionTag::VNMinus
            });
            edges.push((c, c + i));
        }
    }
    let graph = StructuredGraph::new(d, 0.0, features, ys, tags, &edges)?
        .with_patterns(patterns.clone())?;

    // row J' = complement of J: sum over J'' != J' of alpha = y_J
    let rhs: Vec<f64> = (0..m).map(|row| f64::from(labels[(m - 1) ^ row])).collect();
    let mut alpha = solve_shattering_system(&rhs)?;
    perturb(&mut alpha);

    let mut w = Vec::with_capacity(m * d);
    let mut b = Vec::with_capacity(m);
    for (j, &a) in alpha.iter().enumerate() {
        let mut sum = vec![0.0; d];
        for i in 1..=bits {
            sum.iter_mut()
                .zip(graph.feature(centers[j] + i))
                .for_each(|(s, x)| *s += x);
        }
        w.extend(sum.iter().map(|s| a.abs() * s));
        b.push(if a < 0.0 { -1 } else { 1 });
    }
    let model = ModelState::new(d, w, b, f64::NAN, NormMode::OverK)?;
    Ok(VcConstruction {
        l,
        graph,
        centers,
        alpha,
        model,
    })
}

impl VcConstruction {
    /// True when sign(g) matches the label at every data point.
    pub fn realizes(&self) -> Result<bool> {
        for &c in &self.centers {
            let g = self.model.forward(&self.graph, c, None)?;
            if g == 0.0 || g.signum() != f64::from(self.graph.label(c)) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct VcResult {
    pub l: usize,
    pub points: usize,
    pub labelings: usize,
    pub realized: usize,
    pub verified: bool,
}

/// Exhaustive check that every labeling of the 2^(L/2 - 1) points is realized.
pub fn vc_verify(l: usize) -> Result<VcResult> {
    vc_verify_with(l, |_| {})
}

/// [`vc_verify`] with the coefficients modified before weights are built.
pub fn vc_verify_with(l: usize, perturb: impl Fn(&mut Vec<f64>) + Copy) -> Result<VcResult> {
    let (_, m) = vc_size(l)?;
    let labelings = 1usize << m;
    let mut realized = 0;
    for code in 0..labelings {
        let labels: Vec<i8> = (0..m)
            .map(|j| if (code >> j) & 1 == 1 { 1 } else { -1 })
            .collect();
        if vc_construct_with(l, &labels, perturb)?.realizes()? {
            realized += 1;
        }
    }
    Ok(VcResult {
        l,
        points: m,
        labelings,
        realized,
        verified: realized == labelings,
    })
}
