//! Classification metrics and cost accounting.
//!
//! Metrics follow the usual confusion-matrix definitions with macro
//! averaging over the classes present in the ground truth (micro averaging
//! is available for ablation). The cost ledger tracks the protocol's
//! communication measure (epoch-units), payload transfers, and per-participant
//! wall-clock.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Vec<u64>,
    num_classes: usize,
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn count(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.num_classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes).map(|c| self.count(c, c)).sum()
    }

    fn row_sum(&self, truth: usize) -> u64 {
        (0..self.num_classes).map(|p| self.count(truth, p)).sum()
    }

    fn col_sum(&self, pred: usize) -> u64 {
        (0..self.num_classes).map(|t| self.count(t, pred)).sum()
    }
}

/// Tally predicted-vs-true label pairs into a `num_classes` square matrix.
pub fn confusion(preds: &[u32], truths: &[u32], num_classes: usize) -> Result<ConfusionMatrix> {
    if preds.len() != truths.len() {
        return Err(Error::DimensionMismatch {
            context: "confusion matrix",
            expected: format!("{} predictions", truths.len()),
            actual: format!("{} predictions", preds.len()),
        });
    }
    let mut counts = vec![0u64; num_classes * num_classes];
    for (&p, &t) in preds.iter().zip(truths) {
        if p as usize >= num_classes || t as usize >= num_classes {
            return Err(Error::DimensionMismatch {
                context: "confusion matrix labels",
                expected: format!("label < {num_classes}"),
                actual: format!("pred {p}, truth {t}"),
            });
        }
        counts[t as usize * num_classes + p as usize] += 1;
    }
    Ok(ConfusionMatrix {
        counts,
        num_classes,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Averaging {
    #[default]
    Macro,
    Micro,
}

/// Where round metrics are evaluated: on the pooled union of all hospital
/// test sets, or per hospital and then averaged.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricsScope {
    #[default]
    Pooled,
    PerHospital,
}

/// Accuracy plus macro-averaged F1, sensitivity, and specificity, all in
/// [0, 1].
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricBundle {
    pub accuracy: f64,
    pub f1_macro: f64,
    pub sensitivity_macro: f64,
    pub specificity_macro: f64,
}

/// Metrics from one confusion matrix with macro averaging.
pub fn bundle(cm: &ConfusionMatrix) -> Result<MetricBundle> {
    bundle_with(cm, Averaging::Macro)
}

/// Classes absent from the truths are excluded from the averages; classes
/// present but with a zero denominator contribute 0.
pub fn bundle_with(cm: &ConfusionMatrix, averaging: Averaging) -> Result<MetricBundle> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Empty {
            what: "confusion matrix",
        });
    }
    let accuracy = cm.trace() as f64 / total as f64;

    let present: Vec<usize> = (0..cm.num_classes())
        .filter(|&c| cm.row_sum(c) > 0)
        .collect();
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };

    match averaging {
        Averaging::Macro => {
            let mut f1 = 0.0;
            let mut sens = 0.0;
            let mut spec = 0.0;
            for &c in &present {
                let tp = cm.count(c, c);
                let fn_ = cm.row_sum(c) - tp;
                let fp = cm.col_sum(c) - tp;
                let tn = total - tp - fn_ - fp;
                let recall = ratio(tp, tp + fn_);
                let precision = ratio(tp, tp + fp);
                sens += recall;
                spec += ratio(tn, tn + fp);
                if precision + recall > 0.0 {
                    f1 += 2.0 * precision * recall / (precision + recall);
                }
            }
            let k = present.len() as f64;
            Ok(MetricBundle {
                accuracy,
                f1_macro: f1 / k,
                sensitivity_macro: sens / k,
                specificity_macro: spec / k,
            })
        }
        Averaging::Micro => {
            // pooled counts over present classes; micro recall/precision/F1
            // all collapse to accuracy in single-label classification
            let mut tp_sum = 0u64;
            let mut fp_sum = 0u64;
            let mut fn_sum = 0u64;
            let mut tn_sum = 0u64;
            for &c in &present {
                let tp = cm.count(c, c);
                let fn_ = cm.row_sum(c) - tp;
                let fp = cm.col_sum(c) - tp;
                tp_sum += tp;
                fn_sum += fn_;
                fp_sum += fp;
                tn_sum += total - tp - fn_ - fp;
            }
            let recall = ratio(tp_sum, tp_sum + fn_sum);
            let precision = ratio(tp_sum, tp_sum + fp_sum);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            Ok(MetricBundle {
                accuracy,
                f1_macro: f1,
                sensitivity_macro: recall,
                specificity_macro: ratio(tn_sum, tn_sum + fp_sum),
            })
        }
    }
}

/// Cumulative communication and computation accounting for one run.
///
/// `epoch_units` is the protocol's communication measure: one unit per local
/// training epoch on one hospital. Server epochs are tracked separately.
/// All counters are monotonically non-decreasing; the orchestrator is the
/// single writer.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostLedger {
    pub epoch_units: u64,
    pub server_epoch_units: u64,
    pub transfers: u64,
    pub payload_floats: u64,
    pub per_hospital_epochs: BTreeMap<u32, u64>,
    pub compute_ms: BTreeMap<String, f64>,
}

impl CostLedger {
    pub fn new() -> Self {
        CostLedger::default()
    }

    pub fn record_epochs(&mut self, hospital_id: u32, epochs: u64) {
        self.epoch_units += epochs;
        *self.per_hospital_epochs.entry(hospital_id).or_insert(0) += epochs;
    }

    pub fn record_server_epochs(&mut self, epochs: u64) {
        self.server_epoch_units += epochs;
    }

    /// One model-payload movement of `payload_size` floats.
    pub fn record_transfer(&mut self, payload_size: u64) {
        self.transfers += 1;
        self.payload_floats += payload_size;
    }

    pub fn record_compute(&mut self, participant: &str, ms: f64) -> Result<()> {
        if ms < 0.0 {
            return Err(Error::config(
                "compute_ms",
                format!("must be non-negative, got {ms}"),
            ));
        }
        *self
            .compute_ms
            .entry(participant.to_string())
            .or_insert(0.0) += ms;
        Ok(())
    }

    pub fn total_compute_ms(&self) -> f64 {
        self.compute_ms.values().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions_are_diagonal_and_score_one() {
        let truths = vec![0u32, 1, 0, 1];
        let cm = confusion(&truths, &truths, 2).unwrap();
        assert_eq!(cm.count(0, 0), 2);
        assert_eq!(cm.count(1, 1), 2);
        assert_eq!(cm.count(0, 1) + cm.count(1, 0), 0);
        let b = bundle(&cm).unwrap();
        assert_eq!(b.accuracy, 1.0);
        assert_eq!(b.f1_macro, 1.0);
        assert_eq!(b.sensitivity_macro, 1.0);
        assert_eq!(b.specificity_macro, 1.0);
    }

    #[test]
    fn single_sample_cell() {
        let cm = confusion(&[0], &[1], 2).unwrap();
        assert_eq!(cm.count(1, 0), 1);
        assert_eq!(cm.total(), 1);
    }

    #[test]
    fn total_equals_sample_count() {
        let preds = vec![0u32, 1, 2, 0, 1];
        let truths = vec![2u32, 1, 0, 0, 1];
        let cm = confusion(&preds, &truths, 3).unwrap();
        assert_eq!(cm.total(), 5);
        assert_eq!(cm.trace(), 3);
        let b = bundle(&cm).unwrap();
        assert_eq!(b.accuracy * cm.total() as f64, cm.trace() as f64);
    }

    #[test]
    fn all_one_class_predictor_on_balanced_two_class_data() {
        // cm enumerated by hand: [[50, 0], [50, 0]]
        let truths: Vec<u32> = (0..100).map(|i| (i % 2) as u32).collect();
        let preds = vec![0u32; 100];
        let b = bundle(&confusion(&preds, &truths, 2).unwrap()).unwrap();
        assert!((b.accuracy - 0.5).abs() < 1e-15);
        assert!((b.sensitivity_macro - 0.5).abs() < 1e-15);
        assert!((b.specificity_macro - 0.5).abs() < 1e-15);
    }

    #[test]
    fn two_class_sensitivity_equals_specificity() {
        let truths = vec![0u32, 0, 0, 1, 1, 0, 1, 1, 1, 0];
        let preds = vec![0u32, 1, 0, 1, 0, 0, 1, 1, 0, 1];
        let b = bundle(&confusion(&preds, &truths, 2).unwrap()).unwrap();
        assert!((b.sensitivity_macro - b.specificity_macro).abs() < 1e-15);
    }

    #[test]
    fn absent_classes_are_excluded_from_macro_means() {
        // class 2 never appears in truths; it must not dilute the averages
        let truths = vec![0u32, 0, 1, 1];
        let preds = vec![0u32, 0, 1, 1];
        let b = bundle(&confusion(&preds, &truths, 3).unwrap()).unwrap();
        assert_eq!(b.sensitivity_macro, 1.0);
        assert_eq!(b.f1_macro, 1.0);
    }

    #[test]
    fn large_class_count_inflates_specificity() {
        // a mediocre predictor over many classes still gets high specificity
        let c = 23;
        let truths: Vec<u32> = (0..230).map(|i| (i % c) as u32).collect();
        let preds: Vec<u32> = truths
            .iter()
            .enumerate()
            .map(|(i, &t)| if i % 3 == 0 { t } else { (t + 1) % c as u32 })
            .collect();
        let b = bundle(&confusion(&preds, &truths, c).unwrap()).unwrap();
        assert!(b.accuracy < 0.5);
        assert!(b.specificity_macro > 0.9);
    }

    #[test]
    fn micro_averaging_collapses_to_accuracy() {
        let truths = vec![0u32, 1, 2, 0, 1, 2];
        let preds = vec![0u32, 2, 2, 0, 1, 0];
        let cm = confusion(&preds, &truths, 3).unwrap();
        let b = bundle_with(&cm, Averaging::Micro).unwrap();
        assert!((b.f1_macro - b.accuracy).abs() < 1e-15);
        assert!((b.sensitivity_macro - b.accuracy).abs() < 1e-15);
    }

    #[test]
    fn bundle_values_stay_in_unit_interval() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let c = rng.random_range(2..6usize);
            let n = rng.random_range(1..40usize);
            let truths: Vec<u32> = (0..n).map(|_| rng.random_range(0..c as u32)).collect();
            let preds: Vec<u32> = (0..n).map(|_| rng.random_range(0..c as u32)).collect();
            let b = bundle(&confusion(&preds, &truths, c).unwrap()).unwrap();
            for v in [
                b.accuracy,
                b.f1_macro,
                b.sensitivity_macro,
                b.specificity_macro,
            ] {
                assert!((0.0..=1.0).contains(&v), "{b:?}");
            }
        }
    }

    #[test]
    fn bundle_is_invariant_under_class_relabeling() {
        // permuting the class ids of predictions and truths together leaves
        // every macro metric unchanged
        let truths = vec![0u32, 0, 1, 2, 2, 1, 0, 2];
        let preds = vec![0u32, 1, 1, 2, 0, 1, 2, 2];
        let perm = [2u32, 0, 1];
        let truths_p: Vec<u32> = truths.iter().map(|&t| perm[t as usize]).collect();
        let preds_p: Vec<u32> = preds.iter().map(|&p| perm[p as usize]).collect();
        let a = bundle(&confusion(&preds, &truths, 3).unwrap()).unwrap();
        let b = bundle(&confusion(&preds_p, &truths_p, 3).unwrap()).unwrap();
        assert!((a.accuracy - b.accuracy).abs() < 1e-15);
        assert!((a.f1_macro - b.f1_macro).abs() < 1e-15);
        assert!((a.sensitivity_macro - b.sensitivity_macro).abs() < 1e-15);
        assert!((a.specificity_macro - b.specificity_macro).abs() < 1e-15);
    }

    #[test]
    fn mismatched_lengths_and_bad_labels_error() {
        assert!(confusion(&[0, 1], &[0], 2).is_err());
        assert!(confusion(&[2], &[0], 2).is_err());
        let empty = ConfusionMatrix {
            counts: vec![0; 4],
            num_classes: 2,
        };
        assert!(bundle(&empty).is_err());
    }

    #[test]
    fn ledger_accumulates_monotonically() {
        let mut l = CostLedger::new();
        assert_eq!(l.epoch_units, 0);
        assert_eq!(l.transfers, 0);
        l.record_epochs(3, 5);
        l.record_epochs(3, 2);
        l.record_epochs(4, 1);
        assert_eq!(l.epoch_units, 8);
        assert_eq!(l.per_hospital_epochs[&3], 7);
        l.record_server_epochs(10);
        assert_eq!(l.server_epoch_units, 10);
        l.record_transfer(100);
        l.record_transfer(100);
        assert_eq!(l.transfers, 2);
        assert_eq!(l.payload_floats, 200);
        l.record_compute("hospital_0", 1.5).unwrap();
        l.record_compute("hospital_0", 0.5).unwrap();
        assert!((l.compute_ms["hospital_0"] - 2.0).abs() < 1e-12);
        assert!(l.record_compute("server", -1.0).is_err());
    }

    #[test]
    fn fedavg_schedule_identity() {
        // 5 epochs x 24 hospitals x 200 rounds
        let mut l = CostLedger::new();
        for _round in 0..200 {
            for h in 0..24u32 {
                l.record_epochs(h, 5);
            }
        }
        assert_eq!(l.epoch_units, 24_000);
    }
}
