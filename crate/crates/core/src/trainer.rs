//! Convergence-driven training sessions.
//!
//! A dynamic session trains epoch by epoch and evaluates validation loss at
//! strip boundaries (every `strip` epochs). Training stops when the last `z`
//! strip evaluations all exceed the evaluation taken `z` strips earlier
//! (validation increase), when each of the last `z` evaluations is within a
//! relative tolerance of the evaluation `z` strips before it (plateau), or at
//! the epoch cap. The retained weights are the snapshot with the lowest
//! recorded validation loss.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::curriculum::LossTrace;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{self, Batch, WeightVector};

/// Knobs of a dynamic training session.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicConfig {
    /// Validation-evaluation period for hospital sessions, in epochs.
    pub strip_local: usize,
    /// Validation-evaluation period for server sessions, in epochs.
    pub strip_global: usize,
    /// Window length of the stopping criteria, in strip evaluations.
    pub z: usize,
    /// Relative tolerance of the plateau criterion.
    pub plateau_eps: f64,
    /// Hard cap on epochs within one session.
    pub max_epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for DynamicConfig {
    fn default() -> Self {
        DynamicConfig {
            strip_local: 7,
            strip_global: 10,
            z: 3,
            plateau_eps: 1e-4,
            max_epochs: 100,
            lr: 0.001,
            batch_size: 64,
        }
    }
}

impl DynamicConfig {
    pub fn validate(&self) -> Result<()> {
        if self.strip_local < 1 {
            return Err(Error::config("strip_local", "must be >= 1"));
        }
        if self.strip_global < 1 {
            return Err(Error::config("strip_global", "must be >= 1"));
        }
        if self.z < 1 {
            return Err(Error::config("z", "must be >= 1"));
        }
        if self.plateau_eps.is_nan() || self.plateau_eps <= 0.0 {
            return Err(Error::config("plateau_eps", "must be > 0"));
        }
        if self.max_epochs < 1 {
            return Err(Error::config("max_epochs", "must be >= 1"));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr", "must be finite and > 0"));
        }
        if self.batch_size < 1 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ValIncrease,
    Plateau,
    MaxEpochs,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StopReason::ValIncrease => "val_increase",
            StopReason::Plateau => "plateau",
            StopReason::MaxEpochs => "max_epochs",
        };
        f.write_str(s)
    }
}

impl std::str::FromStr for StopReason {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "val_increase" => Ok(StopReason::ValIncrease),
            "plateau" => Ok(StopReason::Plateau),
            "max_epochs" => Ok(StopReason::MaxEpochs),
            other => Err(format!("unknown stop reason `{other}`")),
        }
    }
}

/// Sequential detector over strip evaluations, shared by training sessions
/// and the round-level early stop.
///
/// With evaluations v_1..v_m, after observing v_m it reports:
/// - `ValIncrease` when m > z and every one of v_{m-z+1}..v_m is strictly
///   greater than the anchor v_{m-z};
/// - `Plateau` when m >= 2z and each of the last z evaluations is within
///   `plateau_eps` relative tolerance of the evaluation z positions earlier.
#[derive(Clone, Debug)]
pub struct ConvergenceDetector {
    z: usize,
    plateau_eps: f64,
    history: Vec<f64>,
}

impl ConvergenceDetector {
    pub fn new(z: usize, plateau_eps: f64) -> Self {
        ConvergenceDetector {
            z,
            plateau_eps,
            history: Vec::new(),
        }
    }

    pub fn observations(&self) -> usize {
        self.history.len()
    }

    pub fn observe(&mut self, value: f64) -> Option<StopReason> {
        self.history.push(value);
        let m = self.history.len();
        let z = self.z;
        if m > z {
            let anchor = self.history[m - z - 1];
            if self.history[m - z..].iter().all(|&v| v > anchor) {
                return Some(StopReason::ValIncrease);
            }
        }
        if m >= 2 * z {
            let flat = (m - z..m).all(|i| {
                let prev = self.history[i - z];
                (self.history[i] - prev).abs() / prev.abs().max(1e-12) < self.plateau_eps
            });
            if flat {
                return Some(StopReason::Plateau);
            }
        }
        None
    }
}

/// Result of one training session.
#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    /// Snapshot at the strip evaluation with minimum validation loss (final
    /// weights for fixed-epoch sessions).
    pub best_weights: WeightVector,
    /// Epoch the best snapshot was taken at (0 for fixed sessions).
    pub best_epoch: usize,
    pub epochs_trained: usize,
    /// Per-batch mean training losses across all epochs of the session.
    pub trace: LossTrace,
    /// (epoch, mean validation loss) at each evaluation point.
    pub val_curve: Vec<(usize, f64)>,
    pub stop_reason: StopReason,
}

/// Mean per-sample cross-entropy over a full pass of `val`, no shuffling.
pub fn evaluate_val_loss(w: &WeightVector, val: &Dataset) -> Result<f64> {
    if val.is_empty() {
        return Err(Error::Empty {
            what: "validation set",
        });
    }
    let dim = val.feature_dim();
    let chunk = 512usize;
    let mut sum = 0.0;
    let mut row = 0;
    while row < val.len() {
        let end = (row + chunk).min(val.len());
        let batch = Batch::new(
            &val.features()[row * dim..end * dim],
            &val.labels()[row..end],
            dim,
        );
        sum += model::forward_loss(w, &batch)? * (end - row) as f64;
        row = end;
    }
    Ok(sum / val.len() as f64)
}

/// One epoch of mini-batch SGD: seeded shuffle, batches of `batch_size` with
/// the last partial batch kept. Returns the per-batch mean losses. When
/// `prox` is given, `mu * (w - w_anchor)` is added to each model gradient
/// before the step.
pub(crate) fn train_one_epoch(
    w: &mut WeightVector,
    train: &Dataset,
    lr: f64,
    batch_size: usize,
    rng: &mut ChaCha8Rng,
    prox: Option<(&WeightVector, f64)>,
) -> Result<Vec<f64>> {
    let n = train.len();
    let dim = train.feature_dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut losses = Vec::with_capacity(n.div_ceil(batch_size));
    let mut feat = vec![0.0; batch_size * dim];
    let mut labels = vec![0u32; batch_size];
    for chunk in order.chunks(batch_size) {
        for (slot, &idx) in chunk.iter().enumerate() {
            feat[slot * dim..(slot + 1) * dim].copy_from_slice(train.row(idx));
            labels[slot] = train.labels()[idx];
        }
        let batch = Batch::new(&feat[..chunk.len() * dim], &labels[..chunk.len()], dim);
        let (loss, mut grad) = model::loss_and_gradient(w, &batch)?;
        if let Some((anchor, mu)) = prox {
            if mu != 0.0 {
                let adjusted: Vec<f64> = grad
                    .values()
                    .iter()
                    .zip(w.values().iter().zip(anchor.values()))
                    .map(|(gi, (wi, ai))| gi + mu * (wi - ai))
                    .collect();
                grad = WeightVector::from_values(w.spec(), adjusted)?;
            }
        }
        model::sgd_step_in_place(w, &grad, lr);
        losses.push(loss);
    }
    Ok(losses)
}

/// Exactly `epochs` epochs of mini-batch SGD with no validation-driven
/// stopping; the final weights are retained.
pub fn train_fixed(
    start: &WeightVector,
    train: &Dataset,
    epochs: usize,
    cfg: &DynamicConfig,
    seed: u64,
) -> Result<TrainingOutcome> {
    train_fixed_with_prox(start, train, epochs, cfg, seed, None)
}

pub(crate) fn train_fixed_with_prox(
    start: &WeightVector,
    train: &Dataset,
    epochs: usize,
    cfg: &DynamicConfig,
    seed: u64,
    prox: Option<(&WeightVector, f64)>,
) -> Result<TrainingOutcome> {
    cfg.validate()?;
    if epochs < 1 {
        return Err(Error::config("epochs", "must be >= 1"));
    }
    if train.is_empty() {
        return Err(Error::Empty {
            what: "training set",
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = start.clone();
    let mut trace = LossTrace::default();
    for _ in 0..epochs {
        let losses = train_one_epoch(&mut w, train, cfg.lr, cfg.batch_size, &mut rng, prox)?;
        trace.extend(losses);
    }
    Ok(TrainingOutcome {
        best_weights: w,
        best_epoch: epochs,
        epochs_trained: epochs,
        trace,
        val_curve: Vec::new(),
        stop_reason: StopReason::MaxEpochs,
    })
}

/// Dynamic session with real validation evaluations.
pub fn train_dynamic(
    start: &WeightVector,
    train: &Dataset,
    val: &Dataset,
    cfg: &DynamicConfig,
    strip: usize,
    seed: u64,
) -> Result<TrainingOutcome> {
    if val.is_empty() {
        return Err(Error::Empty {
            what: "validation set",
        });
    }
    let val = val.clone();
    train_dynamic_with_eval(start, train, cfg, strip, seed, move |w, _| {
        evaluate_val_loss(w, &val)
    })
}

/// Dynamic session with an injected evaluation hook, used by tests and
/// criterion ablations. The hook receives the current weights and epoch and
/// returns the validation loss the stopping criteria should see.
pub fn train_dynamic_with_eval<F>(
    start: &WeightVector,
    train: &Dataset,
    cfg: &DynamicConfig,
    strip: usize,
    seed: u64,
    mut eval: F,
) -> Result<TrainingOutcome>
where
    F: FnMut(&WeightVector, usize) -> Result<f64>,
{
    cfg.validate()?;
    if strip < 1 {
        return Err(Error::config("strip", "must be >= 1"));
    }
    if train.is_empty() {
        return Err(Error::Empty {
            what: "training set",
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut w = start.clone();
    let mut trace = LossTrace::default();
    let mut val_curve = Vec::new();
    let mut detector = ConvergenceDetector::new(cfg.z, cfg.plateau_eps);
    let mut best: Option<(f64, WeightVector, usize)> = None;

    let record = |epoch: usize,
                  w: &WeightVector,
                  val_curve: &mut Vec<(usize, f64)>,
                  best: &mut Option<(f64, WeightVector, usize)>,
                  eval: &mut F|
     -> Result<f64> {
        let v = eval(w, epoch)?;
        val_curve.push((epoch, v));
        if best.as_ref().is_none_or(|(b, _, _)| v < *b) {
            *best = Some((v, w.clone(), epoch));
        }
        Ok(v)
    };

    let mut epoch = 0;
    let stop_reason = loop {
        epoch += 1;
        let losses = train_one_epoch(&mut w, train, cfg.lr, cfg.batch_size, &mut rng, None)?;
        trace.extend(losses);
        if epoch % strip == 0 {
            let v = record(epoch, &w, &mut val_curve, &mut best, &mut eval)?;
            if let Some(reason) = detector.observe(v) {
                break reason;
            }
        }
        if epoch >= cfg.max_epochs {
            if epoch % strip != 0 {
                // off-boundary cap: record a final evaluation so the best
                // snapshot and the curve stay defined
                record(epoch, &w, &mut val_curve, &mut best, &mut eval)?;
            }
            break StopReason::MaxEpochs;
        }
    };

    let (_, best_weights, best_epoch) = best.expect("at least one evaluation recorded");
    Ok(TrainingOutcome {
        best_weights,
        best_epoch,
        epochs_trained: epoch,
        trace,
        val_curve,
        stop_reason,
    })
}
