//! Minimal differentiable classifiers over a unified label space.
//!
//! Two model kinds are supported: softmax regression and a one-hidden-layer
//! MLP with ReLU. Parameters live in a single flat `f64` vector so that the
//! same blob can be relayed between participants, checkpointed, and mixed
//! elementwise. All operations are pure functions of their inputs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Softmax,
    Mlp,
}

/// Shape of a classifier. `parameter_count` is a deterministic function of
/// the fields; the flat layout is weights-then-bias per layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub num_classes: usize,
}

impl ModelSpec {
    pub fn softmax(input_dim: usize, num_classes: usize) -> Self {
        ModelSpec {
            kind: ModelKind::Softmax,
            input_dim,
            hidden_dim: 0,
            num_classes,
        }
    }

    pub fn mlp(input_dim: usize, hidden_dim: usize, num_classes: usize) -> Self {
        ModelSpec {
            kind: ModelKind::Mlp,
            input_dim,
            hidden_dim,
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim < 1 {
            return Err(Error::config("input_dim", "must be >= 1"));
        }
        if self.num_classes < 2 {
            return Err(Error::config("num_classes", "must be >= 2"));
        }
        match self.kind {
            ModelKind::Softmax if self.hidden_dim != 0 => {
                Err(Error::config("hidden_dim", "must be 0 for softmax models"))
            }
            ModelKind::Mlp if self.hidden_dim < 1 => {
                Err(Error::config("hidden_dim", "must be >= 1 for mlp models"))
            }
            _ => Ok(()),
        }
    }

    pub fn parameter_count(&self) -> usize {
        match self.kind {
            ModelKind::Softmax => self.num_classes * self.input_dim + self.num_classes,
            ModelKind::Mlp => {
                self.hidden_dim * self.input_dim
                    + self.hidden_dim
                    + self.num_classes * self.hidden_dim
                    + self.num_classes
            }
        }
    }
}

/// Flat parameter vector of a classifier. The unit relayed between hospitals
/// and the server; its length never changes over a run and every entry stays
/// finite.
#[derive(Clone, Debug, PartialEq)]
pub struct WeightVector {
    spec: ModelSpec,
    values: Vec<f64>,
}

impl WeightVector {
    pub fn zeros(spec: ModelSpec) -> Self {
        WeightVector {
            spec,
            values: vec![0.0; spec.parameter_count()],
        }
    }

    pub fn from_values(spec: ModelSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.parameter_count() {
            return Err(Error::DimensionMismatch {
                context: "weight vector",
                expected: spec.parameter_count().to_string(),
                actual: values.len().to_string(),
            });
        }
        Ok(WeightVector { spec, values })
    }

    pub fn spec(&self) -> ModelSpec {
        self.spec
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Hex SHA-256 of the little-endian byte image. Used for relay-integrity
    /// checks and the round log.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for v in &self.values {
            hasher.update(v.to_le_bytes());
        }
        hex(&hasher.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    let mut out = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// A mini-batch view: `features` is row-major `[len × input_dim]`, labels are
/// unified-space indices.
#[derive(Clone, Copy, Debug)]
pub struct Batch<'a> {
    pub features: &'a [f64],
    pub labels: &'a [u32],
    pub input_dim: usize,
}

impl<'a> Batch<'a> {
    pub fn new(features: &'a [f64], labels: &'a [u32], input_dim: usize) -> Self {
        Batch {
            features,
            labels,
            input_dim,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    fn row(&self, i: usize) -> &'a [f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    fn validate_for(&self, spec: &ModelSpec) -> Result<()> {
        if self.input_dim != spec.input_dim {
            return Err(Error::DimensionMismatch {
                context: "batch features",
                expected: format!("input_dim {}", spec.input_dim),
                actual: format!("input_dim {}", self.input_dim),
            });
        }
        if self.features.len() != self.labels.len() * self.input_dim {
            return Err(Error::DimensionMismatch {
                context: "batch features",
                expected: format!("{} values", self.labels.len() * self.input_dim),
                actual: format!("{} values", self.features.len()),
            });
        }
        if self.labels.is_empty() {
            return Err(Error::Empty { what: "batch" });
        }
        if let Some(&bad) = self
            .labels
            .iter()
            .find(|&&y| y as usize >= spec.num_classes)
        {
            return Err(Error::DimensionMismatch {
                context: "batch labels",
                expected: format!("label < {}", spec.num_classes),
                actual: bad.to_string(),
            });
        }
        Ok(())
    }
}

/// Glorot-uniform initialization with zero biases: weights of each layer are
/// drawn from uniform(-r, r) with r = sqrt(6 / (fan_in + fan_out)).
/// Deterministic function of (spec, seed).
pub fn init_weights(spec: ModelSpec, seed: u64) -> WeightVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = vec![0.0; spec.parameter_count()];
    let fill = |dst: &mut [f64], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng| {
        let r = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new(-r, r).expect("valid glorot range");
        for v in dst.iter_mut() {
            *v = dist.sample(rng);
        }
    };
    match spec.kind {
        ModelKind::Softmax => {
            let w_len = spec.num_classes * spec.input_dim;
            fill(
                &mut values[..w_len],
                spec.input_dim,
                spec.num_classes,
                &mut rng,
            );
            // bias entries stay zero
        }
        ModelKind::Mlp => {
            let w1 = spec.hidden_dim * spec.input_dim;
            fill(&mut values[..w1], spec.input_dim, spec.hidden_dim, &mut rng);
            let w2_start = w1 + spec.hidden_dim;
            let w2_end = w2_start + spec.num_classes * spec.hidden_dim;
            fill(
                &mut values[w2_start..w2_end],
                spec.hidden_dim,
                spec.num_classes,
                &mut rng,
            );
        }
    }
    WeightVector { spec, values }
}

// Layout offsets into the flat vector.
struct Layout {
    w1: usize, // start of first weight matrix (always 0)
    b1: usize,
    w2: usize, // MLP only
    b2: usize, // MLP only
}

fn layout(spec: &ModelSpec) -> Layout {
    match spec.kind {
        ModelKind::Softmax => Layout {
            w1: 0,
            b1: spec.num_classes * spec.input_dim,
            w2: 0,
            b2: 0,
        },
        ModelKind::Mlp => {
            let b1 = spec.hidden_dim * spec.input_dim;
            let w2 = b1 + spec.hidden_dim;
            let b2 = w2 + spec.num_classes * spec.hidden_dim;
            Layout { w1: 0, b1, w2, b2 }
        }
    }
}

/// Per-sample logits written into `logits` (and hidden activations for MLP
/// into `hidden_pre`/`hidden`).
fn logits_for_row(
    w: &WeightVector,
    x: &[f64],
    logits: &mut [f64],
    hidden_pre: &mut [f64],
    hidden: &mut [f64],
) {
    let spec = &w.spec;
    let v = &w.values;
    let l = layout(spec);
    match spec.kind {
        ModelKind::Softmax => {
            for c in 0..spec.num_classes {
                let row = &v[l.w1 + c * spec.input_dim..l.w1 + (c + 1) * spec.input_dim];
                let mut acc = v[l.b1 + c];
                for (wj, xj) in row.iter().zip(x) {
                    acc += wj * xj;
                }
                logits[c] = acc;
            }
        }
        ModelKind::Mlp => {
            for h in 0..spec.hidden_dim {
                let row = &v[l.w1 + h * spec.input_dim..l.w1 + (h + 1) * spec.input_dim];
                let mut acc = v[l.b1 + h];
                for (wj, xj) in row.iter().zip(x) {
                    acc += wj * xj;
                }
                hidden_pre[h] = acc;
                hidden[h] = if acc > 0.0 { acc } else { 0.0 };
            }
            for c in 0..spec.num_classes {
                let row = &v[l.w2 + c * spec.hidden_dim..l.w2 + (c + 1) * spec.hidden_dim];
                let mut acc = v[l.b2 + c];
                for (wj, hj) in row.iter().zip(hidden.iter()) {
                    acc += wj * hj;
                }
                logits[c] = acc;
            }
        }
    }
}

/// Log-sum-exp with row-max subtraction; fills `probs` with the softmax and
/// returns the per-sample cross-entropy for `label`.
fn softmax_loss(logits: &[f64], label: usize, probs: &mut [f64]) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (p, &z) in probs.iter_mut().zip(logits) {
        let e = (z - max).exp();
        *p = e;
        sum += e;
    }
    for p in probs.iter_mut() {
        *p /= sum;
    }
    max + sum.ln() - logits[label]
}

/// Mean cross-entropy of `w` over `batch`, with max-subtraction stabilized
/// softmax. Result is finite and >= 0.
pub fn forward_loss(w: &WeightVector, batch: &Batch) -> Result<f64> {
    batch.validate_for(&w.spec)?;
    let spec = &w.spec;
    let mut logits = vec![0.0; spec.num_classes];
    let mut probs = vec![0.0; spec.num_classes];
    let mut hidden_pre = vec![0.0; spec.hidden_dim];
    let mut hidden = vec![0.0; spec.hidden_dim];
    let mut total = 0.0;
    for i in 0..batch.len() {
        logits_for_row(w, batch.row(i), &mut logits, &mut hidden_pre, &mut hidden);
        total += softmax_loss(&logits, batch.labels[i] as usize, &mut probs);
    }
    Ok(total / batch.len() as f64)
}

/// Mean loss together with the analytic gradient (same shape as `w`).
pub fn loss_and_gradient(w: &WeightVector, batch: &Batch) -> Result<(f64, WeightVector)> {
    batch.validate_for(&w.spec)?;
    let spec = w.spec;
    let l = layout(&spec);
    let v = &w.values;
    let mut grad = vec![0.0; v.len()];
    let mut logits = vec![0.0; spec.num_classes];
    let mut probs = vec![0.0; spec.num_classes];
    let mut hidden_pre = vec![0.0; spec.hidden_dim];
    let mut hidden = vec![0.0; spec.hidden_dim];
    let mut total = 0.0;
    let inv_b = 1.0 / batch.len() as f64;

    for i in 0..batch.len() {
        let x = batch.row(i);
        let y = batch.labels[i] as usize;
        logits_for_row(w, x, &mut logits, &mut hidden_pre, &mut hidden);
        total += softmax_loss(&logits, y, &mut probs);

        // d loss / d logits = softmax - onehot, scaled by 1/b for the mean.
        match spec.kind {
            ModelKind::Softmax => {
                for c in 0..spec.num_classes {
                    let mut d = probs[c];
                    if c == y {
                        d -= 1.0;
                    }
                    d *= inv_b;
                    let row = &mut grad[l.w1 + c * spec.input_dim..l.w1 + (c + 1) * spec.input_dim];
                    for (g, xj) in row.iter_mut().zip(x) {
                        *g += d * xj;
                    }
                    grad[l.b1 + c] += d;
                }
            }
            ModelKind::Mlp => {
                let mut d_hidden = vec![0.0; spec.hidden_dim];
                for c in 0..spec.num_classes {
                    let mut d = probs[c];
                    if c == y {
                        d -= 1.0;
                    }
                    d *= inv_b;
                    let w2_row = &v[l.w2 + c * spec.hidden_dim..l.w2 + (c + 1) * spec.hidden_dim];
                    let g2_row =
                        &mut grad[l.w2 + c * spec.hidden_dim..l.w2 + (c + 1) * spec.hidden_dim];
                    for h in 0..spec.hidden_dim {
                        g2_row[h] += d * hidden[h];
                        d_hidden[h] += d * w2_row[h];
                    }
                    grad[l.b2 + c] += d;
                }
                for h in 0..spec.hidden_dim {
                    if hidden_pre[h] > 0.0 {
                        let dh = d_hidden[h];
                        let g1_row =
                            &mut grad[l.w1 + h * spec.input_dim..l.w1 + (h + 1) * spec.input_dim];
                        for (g, xj) in g1_row.iter_mut().zip(x) {
                            *g += dh * xj;
                        }
                        grad[l.b1 + h] += dh;
                    }
                }
            }
        }
    }
    Ok((total * inv_b, WeightVector { spec, values: grad }))
}

/// Analytic gradient of [`forward_loss`].
pub fn gradient(w: &WeightVector, batch: &Batch) -> Result<WeightVector> {
    loss_and_gradient(w, batch).map(|(_, g)| g)
}

/// One SGD step: `w - lr * grad`, elementwise.
pub fn sgd_step(w: &WeightVector, grad: &WeightVector, lr: f64) -> Result<WeightVector> {
    if lr.is_nan() || lr <= 0.0 {
        return Err(Error::config("lr", format!("must be > 0, got {lr}")));
    }
    if w.spec != grad.spec || w.len() != grad.len() {
        return Err(Error::DimensionMismatch {
            context: "sgd step",
            expected: format!("{} parameters", w.len()),
            actual: format!("{} parameters", grad.len()),
        });
    }
    let values = w
        .values
        .iter()
        .zip(&grad.values)
        .map(|(wi, gi)| wi - lr * gi)
        .collect();
    Ok(WeightVector {
        spec: w.spec,
        values,
    })
}

pub(crate) fn sgd_step_in_place(w: &mut WeightVector, grad: &WeightVector, lr: f64) {
    debug_assert_eq!(w.len(), grad.len());
    for (wi, gi) in w.values.iter_mut().zip(&grad.values) {
        *wi -= lr * gi;
    }
}

/// Argmax class per row; ties break toward the lowest class index.
pub fn predict(w: &WeightVector, features: &[f64]) -> Result<Vec<u32>> {
    let spec = &w.spec;
    if !features.len().is_multiple_of(spec.input_dim) {
        return Err(Error::DimensionMismatch {
            context: "predict features",
            expected: format!("multiple of input_dim {}", spec.input_dim),
            actual: format!("{} values", features.len()),
        });
    }
    let n = features.len() / spec.input_dim;
    let mut logits = vec![0.0; spec.num_classes];
    let mut hidden_pre = vec![0.0; spec.hidden_dim];
    let mut hidden = vec![0.0; spec.hidden_dim];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let x = &features[i * spec.input_dim..(i + 1) * spec.input_dim];
        logits_for_row(w, x, &mut logits, &mut hidden_pre, &mut hidden);
        let mut best = 0usize;
        for (c, &z) in logits.iter().enumerate() {
            if z > logits[best] {
                best = c;
            }
        }
        out.push(best as u32);
    }
    Ok(out)
}
