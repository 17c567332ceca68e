//! Loss-slope complexity scoring and hospital ordering.
//!
//! Each hospital records its per-batch training losses; the slope of the
//! best-fit line through that curve is used as a task-complexity proxy. A
//! lower (more negative) slope means faster convergence, i.e. an easier task,
//! so hospitals train in ascending slope order each round.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-batch mean training losses, indexed by batch number 1..len.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LossTrace {
    values: Vec<f64>,
}

impl LossTrace {
    pub fn new(values: Vec<f64>) -> Self {
        LossTrace { values }
    }

    pub fn push(&mut self, loss: f64) {
        self.values.push(loss);
    }

    pub fn extend(&mut self, losses: impl IntoIterator<Item = f64>) {
        self.values.extend(losses);
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
}

/// Ordinary-least-squares slope of a trace. `degenerate` marks single-point
/// traces, whose slope is pinned to 0.0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Slope {
    pub value: f64,
    pub degenerate: bool,
}

/// Complexity score of one hospital for the current round.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexityScore {
    pub hospital_id: u32,
    pub slope: f64,
    pub trace_len: usize,
}

/// Slope of the first-degree polynomial that best fits the loss curve:
/// sum_b (b - mean_b)(L_b - mean_L) / sum_b (b - mean_b)^2.
pub fn loss_slope(trace: &LossTrace) -> Result<Slope> {
    let vals = trace.values();
    if vals.is_empty() {
        return Err(Error::Empty { what: "loss trace" });
    }
    if vals.len() == 1 {
        return Ok(Slope {
            value: 0.0,
            degenerate: true,
        });
    }
    let n = vals.len() as f64;
    // batch numbers are 1..=n, so mean_b = (n + 1) / 2
    let mean_b = (n + 1.0) / 2.0;
    let mean_l = vals.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &l) in vals.iter().enumerate() {
        let db = (i + 1) as f64 - mean_b;
        num += db * (l - mean_l);
        den += db * db;
    }
    Ok(Slope {
        value: num / den,
        degenerate: false,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrderDirection {
    /// Most negative slope (fastest converging, easiest) first.
    #[default]
    Asc,
    /// Reversed ordering, exposed for ablation.
    Desc,
}

/// Ascending-slope permutation of all hospital ids, ties broken by ascending
/// hospital id. Errors on duplicate ids.
pub fn order_hospitals(scores: &[ComplexityScore]) -> Result<Vec<u32>> {
    order_hospitals_with(scores, OrderDirection::Asc)
}

pub fn order_hospitals_with(
    scores: &[ComplexityScore],
    direction: OrderDirection,
) -> Result<Vec<u32>> {
    if scores.is_empty() {
        return Err(Error::Empty { what: "score list" });
    }
    let mut seen = std::collections::HashSet::new();
    for s in scores {
        if !seen.insert(s.hospital_id) {
            return Err(Error::DuplicateHospital(s.hospital_id));
        }
    }
    let mut order: Vec<&ComplexityScore> = scores.iter().collect();
    order.sort_by(|a, b| {
        let by_slope = match direction {
            OrderDirection::Asc => a.slope.total_cmp(&b.slope),
            OrderDirection::Desc => b.slope.total_cmp(&a.slope),
        };
        by_slope.then(a.hospital_id.cmp(&b.hospital_id))
    });
    Ok(order.into_iter().map(|s| s.hospital_id).collect())
}
