//! Trainable single-qubit embedding of scalar data.
//!
//! A point `x` is mapped to
//!
//! ```text
//! |x⟩ = R_X(x) R_Y(θ₃) R_X(x) R_Y(θ₂) R_X(x) R_Y(θ₁) R_X(x) |0⟩
//! ```
//!
//! so the data is re-uploaded four times between three trainable rotations.
//! Points are compared through the squared overlap `|⟨x_i|x_j⟩|²`, either
//! exactly or estimated from a simulated SWAP test, and training pushes
//! same-class overlaps towards 1 and cross-class overlaps towards 0.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{rotation_x, rotation_y, PureState, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Label {
    A,
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledPoint {
    pub x: f64,
    pub label: Label,
}

impl LabeledPoint {
    pub fn new(x: f64, label: Label) -> Self {
        LabeledPoint { x, label }
    }
}

/// Labelled scalars with at least one point of each class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset1D {
    points: Vec<LabeledPoint>,
}

impl LabeledDataset1D {
    pub fn new(points: Vec<LabeledPoint>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !p.x.is_finite()) {
            return Err(Error::invalid(format!("dataset point {} is not finite", p.x)));
        }
        for class in [Label::A, Label::B] {
            if !points.iter().any(|p| p.label == class) {
                return Err(Error::invalid(format!("dataset has no point of class {class:?}")));
            }
        }
        Ok(LabeledDataset1D { points })
    }

    pub fn points(&self) -> &[LabeledPoint] {
        &self.points
    }

    pub fn xs(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.x).collect()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.points.iter().map(|p| p.label).collect()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `[{"x": .., "label": "A"}, ..]`
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.points).expect("dataset serializes");
        text.push('\n');
        text
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let points: Vec<LabeledPoint> = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::new(points)
    }
}

/// Class B uniform on `[−1, 1]`; class A uniform on `[−3, −1.5] ∪ [1.5, 3]`,
/// with the first half of class A on the negative side. No single threshold
/// on `x` separates the classes.
pub fn synth_dataset(n_per_class: usize, seed: u64) -> Result<LabeledDataset1D> {
    if n_per_class < 2 {
        return Err(Error::invalid("need at least two points per class"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(2 * n_per_class);
    let negative = n_per_class.div_ceil(2);
    for k in 0..n_per_class {
        let x = if k < negative {
            rng.random_range(-3.0..=-1.5)
        } else {
            rng.random_range(1.5..=3.0)
        };
        points.push(LabeledPoint::new(x, Label::A));
    }
    for _ in 0..n_per_class {
        points.push(LabeledPoint::new(rng.random_range(-1.0..=1.0), Label::B));
    }
    LabeledDataset1D::new(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingModel {
    pub thetas: [f64; 3],
}

impl EmbeddingModel {
    pub fn new(thetas: [f64; 3]) -> Result<Self> {
        if thetas.iter().any(|t| !t.is_finite()) {
            return Err(Error::invalid("embedding angles must be finite"));
        }
        Ok(EmbeddingModel { thetas })
    }

    /// Angles drawn uniformly from `(−π, π)`.
    pub fn random(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        EmbeddingModel { thetas: std::array::from_fn(|_| rng.random_range(-PI..PI)) }
    }

    fn shifted(&self, k: usize, delta: f64) -> Self {
        let mut thetas = self.thetas;
        thetas[k] += delta;
        EmbeddingModel { thetas }
    }
}

pub fn embed(x: f64, model: &EmbeddingModel) -> Result<PureState> {
    if !x.is_finite() {
        return Err(Error::invalid(format!("cannot embed non-finite point {x}")));
    }
    let rx = rotation_x(x)?;
    let mut state = PureState::basis(2, 0)?.apply(&rx)?;
    for &theta in &model.thetas {
        state = state.apply(&rotation_y(theta)?)?.apply(&rx)?;
    }
    Ok(state)
}

/// `|⟨a|b⟩|²`, clamped to `[0, 1]`.
pub fn overlap_exact(a: &PureState, b: &PureState) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr().clamp(0.0, 1.0))
}

/// Probability that the ancilla of a SWAP test on single-qubit states `a`
/// and `b` reads 0, from a three-qubit state-vector simulation
/// (Hadamard, controlled-SWAP, Hadamard).
pub fn swap_test_probability(a: &PureState, b: &PureState) -> Result<f64> {
    if a.dim() != 2 || b.dim() != 2 {
        return Err(Error::invalid("SWAP test is simulated for single-qubit states"));
    }
    let (a, b) = (a.amplitudes(), b.amplitudes());
    // basis index = ancilla·4 + qubit_a·2 + qubit_b
    let product: [C64; 4] = std::array::from_fn(|k| a[k >> 1] * b[k & 1]);
    let half = product.map(|z| z * FRAC_1_SQRT_2);
    let swapped: [C64; 4] = std::array::from_fn(|k| half[((k & 1) << 1) | (k >> 1)]);
    let p0 = (0..4)
        .map(|k| ((half[k] + swapped[k]) * FRAC_1_SQRT_2).norm_sqr())
        .sum::<f64>();
    Ok(p0.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SwapTestOutcome {
    pub shots: usize,
    pub zeros: usize,
    /// `max(0, 2·zeros/shots − 1)`.
    pub estimate: f64,
}

/// Simulated SWAP test with `shots` single-shot ancilla measurements.
pub fn swap_test(a: &PureState, b: &PureState, shots: usize, seed: u64) -> Result<SwapTestOutcome> {
    if shots == 0 {
        return Err(Error::invalid("SWAP test needs at least one shot"));
    }
    let p0 = swap_test_probability(a, b)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zeros = (0..shots).filter(|_| rng.random::<f64>() < p0).count();
    let estimate = (2.0 * zeros as f64 / shots as f64 - 1.0).max(0.0);
    Ok(SwapTestOutcome { shots, zeros, estimate })
}

/// Seed of the SWAP test for entry `(i, j)`, independent of evaluation order.
pub fn pair_seed(master: u64, i: usize, j: usize) -> u64 {
    fn splitmix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix(master ^ splitmix(((i as u64) << 32) | j as u64))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GramMode {
    Exact,
    Sampled { shots: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    n: usize,
    values: Vec<f64>,
    /// Distinct overlap evaluations performed (one per unordered pair,
    /// diagonal included).
    pub evaluations: usize,
    /// SWAP-test shots drawn for each evaluated entry (0 in exact mode).
    pub shots_per_entry: usize,
    /// Ancilla-zero counts per entry in sampled mode.
    pub zero_counts: Option<Vec<usize>>,
}

impl GramMatrix {
    pub fn size(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn zero_count(&self, i: usize, j: usize) -> Option<usize> {
        self.zero_counts.as_ref().map(|z| z[i * self.n + j])
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Off-diagonal means over same-label and cross-label pairs.
    pub fn block_means(&self, labels: &[Label]) -> (f64, f64) {
        let (mut same, mut ns, mut cross, mut nc) = (0.0, 0usize, 0.0, 0usize);
        for i in 0..self.n {
            for j in i + 1..self.n {
                if labels[i] == labels[j] {
                    same += self.get(i, j);
                    ns += 1;
                } else {
                    cross += self.get(i, j);
                    nc += 1;
                }
            }
        }
        (same / ns.max(1) as f64, cross / nc.max(1) as f64)
    }

    /// Rows of comma-separated entries preceded by `# ` comment lines.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            writeln!(out, "# {c}").unwrap();
        }
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|j| format!("{:?}", self.get(i, j))).collect();
            writeln!(out, "{}", row.join(",")).unwrap();
        }
        out
    }
}

pub fn gram(xs: &[f64], model: &EmbeddingModel, mode: GramMode) -> Result<GramMatrix> {
    if xs.is_empty() {
        return Err(Error::invalid("Gram matrix needs at least one point"));
    }
    let states = xs.iter().map(|&x| embed(x, model)).collect::<Result<Vec<_>>>()?;
    let n = xs.len();
    let mut values = vec![0.0; n * n];
    let mut zero_counts = match mode {
        GramMode::Exact => None,
        GramMode::Sampled { .. } => Some(vec![0; n * n]),
    };
    let mut evaluations = 0;
    for i in 0..n {
        for j in i..n {
            let v = match mode {
                GramMode::Exact => overlap_exact(&states[i], &states[j])?,
                GramMode::Sampled { shots, seed } => {
                    let out = swap_test(&states[i], &states[j], shots, pair_seed(seed, i, j))?;
                    if let Some(z) = zero_counts.as_mut() {
                        z[i * n + j] = out.zeros;
                        z[j * n + i] = out.zeros;
                    }
                    out.estimate
                }
            };
            evaluations += 1;
            values[i * n + j] = v;
            values[j * n + i] = v;
        }
    }
    let shots_per_entry = match mode {
        GramMode::Exact => 0,
        GramMode::Sampled { shots, .. } => shots,
    };
    Ok(GramMatrix { n, values, evaluations, shots_per_entry, zero_counts })
}

fn pair_weights(data: &[LabeledPoint]) -> (f64, f64) {
    let (mut same, mut cross) = (0usize, 0usize);
    for i in 0..data.len() {
        for j in i + 1..data.len() {
            if data[i].label == data[j].label {
                same += 1;
            } else {
                cross += 1;
            }
        }
    }
    let w = |n: usize| if n == 0 { 0.0 } else { 1.0 / n as f64 };
    (w(same), w(cross))
}

/// Mean of `1 − M_ij` over same-class pairs plus mean of `M_ij` over
/// cross-class pairs; a term with no pairs is dropped. Range `[0, 2]`.
pub fn loss(model: &EmbeddingModel, data: &[LabeledPoint]) -> Result<f64> {
    let states = data.iter().map(|p| embed(p.x, model)).collect::<Result<Vec<_>>>()?;
    let (w_same, w_cross) = pair_weights(data);
    let mut total = 0.0;
    let mut any_same = false;
    for i in 0..data.len() {
        for j in i + 1..data.len() {
            let m = overlap_exact(&states[i], &states[j])?;
            if data[i].label == data[j].label {
                any_same = true;
                total -= w_same * m;
            } else {
                total += w_cross * m;
            }
        }
    }
    Ok(if any_same { 1.0 + total } else { total })
}

/// `∂C/∂θ_k` by the parameter-shift rule. Each angle occurs once in both
/// embeddings of a pair, so every pair contributes four shifted overlaps per
/// angle.
pub fn gradient(model: &EmbeddingModel, data: &[LabeledPoint]) -> Result<[f64; 3]> {
    let embed_all = |m: &EmbeddingModel| data.iter().map(|p| embed(p.x, m)).collect::<Result<Vec<_>>>();
    let base = embed_all(model)?;
    let (w_same, w_cross) = pair_weights(data);
    let mut grad = [0.0; 3];
    for (k, g) in grad.iter_mut().enumerate() {
        let plus = embed_all(&model.shifted(k, FRAC_PI_2))?;
        let minus = embed_all(&model.shifted(k, -FRAC_PI_2))?;
        for i in 0..data.len() {
            for j in i + 1..data.len() {
                let d_left = overlap_exact(&plus[i], &base[j])? - overlap_exact(&minus[i], &base[j])?;
                let d_right = overlap_exact(&base[i], &plus[j])? - overlap_exact(&base[i], &minus[j])?;
                let dm = 0.5 * (d_left + d_right);
                if data[i].label == data[j].label {
                    *g -= w_same * dm;
                } else {
                    *g += w_cross * dm;
                }
            }
        }
    }
    Ok(grad)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { learning_rate: 0.1, epochs: 300, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingRun {
    pub model: EmbeddingModel,
    /// Loss after `e` updates, for `e = 0..=epochs`.
    pub losses: Vec<f64>,
    /// Angles after `e` updates, for `e = 0..=epochs`.
    pub thetas: Vec<[f64; 3]>,
}

impl TrainingRun {
    /// CSV `epoch,loss,theta1,theta2,theta3` preceded by `# ` comment lines.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            writeln!(out, "# {c}").unwrap();
        }
        out.push_str("epoch,loss,theta1,theta2,theta3\n");
        for (e, (l, t)) in self.losses.iter().zip(&self.thetas).enumerate() {
            writeln!(out, "{e},{l:?},{:?},{:?},{:?}", t[0], t[1], t[2]).unwrap();
        }
        out
    }
}

/// Full-batch gradient descent from a seeded uniform initialization.
pub fn train(dataset: &LabeledDataset1D, config: &TrainConfig) -> Result<TrainingRun> {
    if config.epochs == 0 {
        return Err(Error::invalid("need at least one epoch"));
    }
    if !(config.learning_rate.is_finite() && config.learning_rate >= 0.0) {
        return Err(Error::invalid("learning rate must be finite and non-negative"));
    }
    let data = dataset.points();
    let mut model = EmbeddingModel::random(config.seed);
    let mut losses = vec![loss(&model, data)?];
    let mut thetas = vec![model.thetas];
    for _ in 0..config.epochs {
        let g = gradient(&model, data)?;
        for (t, gk) in model.thetas.iter_mut().zip(g) {
            *t -= config.learning_rate * gk;
        }
        losses.push(loss(&model, data)?);
        thetas.push(model.thetas);
    }
    Ok(TrainingRun { model, losses, thetas })
}

/// Assigns the class whose training points have the larger mean overlap
/// with `x`; ties go to class A.
pub fn classify(x: f64, model: &EmbeddingModel, training: &LabeledDataset1D) -> Result<Label> {
    let psi = embed(x, model)?;
    let (mut sum_a, mut n_a, mut sum_b, mut n_b) = (0.0, 0usize, 0.0, 0usize);
    for p in training.points() {
        let m = overlap_exact(&psi, &embed(p.x, model)?)?;
        match p.label {
            Label::A => {
                sum_a += m;
                n_a += 1;
            }
            Label::B => {
                sum_b += m;
                n_b += 1;
            }
        }
    }
    let mean_a = sum_a / n_a.max(1) as f64;
    let mean_b = sum_b / n_b.max(1) as f64;
    Ok(if mean_a >= mean_b { Label::A } else { Label::B })
}

/// Fraction of `validation` points that [`classify`] labels correctly.
pub fn accuracy(model: &EmbeddingModel, training: &LabeledDataset1D, validation: &LabeledDataset1D) -> Result<f64> {
    let mut correct = 0;
    for p in validation.points() {
        if classify(p.x, model, training)? == p.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / validation.len() as f64)
}
