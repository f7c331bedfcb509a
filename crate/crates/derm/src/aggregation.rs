//! Loss aggregation schemes and their closed-form gradient weights.
//!
//! Three ways to collapse a batch of per-sample losses `f_1..f_N` into a
//! single training objective:
//!
//! * ERM:  `(1/N) * sum(f_i)` — the plain mean.
//! * DERM: `exp((1/N) * sum(log(t * f_i)))` — `t` times the geometric mean.
//!   Its gradient is `sum(w_i * grad f_i)` with `w_i = (1/N) * R/f_i`, so
//!   large-loss samples (likely anomalies) contribute less.
//! * TERM: `(1/t) * log((1/N) * sum(exp(t * f_i)))` — exponential tilting;
//!   with `t < 0` its weights `w_i = exp(t*(f_i - R))/N` also shrink for
//!   large losses, but collapse towards `1/N` when losses sit near zero.
//!
//! The weights are pure functions of the current loss vector; no state is
//! carried across batches.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Losses below this are lifted to it inside DERM's log, making the
/// objective total at perfectly reconstructed samples. Raw losses are
/// never modified.
pub const LOSS_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggKind {
    Erm,
    Derm,
    Term,
}

impl std::fmt::Display for AggKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AggKind::Erm => write!(f, "erm"),
            AggKind::Derm => write!(f, "derm"),
            AggKind::Term => write!(f, "term"),
        }
    }
}

/// A validated aggregation scheme. DERM requires `t > 0`, TERM `t < 0`
/// (the anomaly-suppressing direction); ERM carries no tilt.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregator {
    kind: AggKind,
    t: f64,
}

#[derive(Serialize, Deserialize)]
struct AggregatorRepr {
    kind: AggKind,
    t: Option<f64>,
}

impl Serialize for Aggregator {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        AggregatorRepr {
            kind: self.kind,
            t: self.t(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Aggregator {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = AggregatorRepr::deserialize(deserializer)?;
        let t = match (repr.kind, repr.t) {
            (AggKind::Erm, _) => 0.0,
            (_, Some(t)) => t,
            (kind, None) => {
                return Err(serde::de::Error::custom(format!("{kind} requires a tilt t")))
            }
        };
        Aggregator::new(repr.kind, t).map_err(serde::de::Error::custom)
    }
}

impl Aggregator {
    pub fn erm() -> Self {
        Aggregator {
            kind: AggKind::Erm,
            t: 0.0,
        }
    }

    pub fn derm(t: f64) -> Result<Self> {
        if !t.is_finite() || t <= 0.0 {
            return Err(Error::Param(format!("derm requires t > 0, got {t}")));
        }
        Ok(Aggregator {
            kind: AggKind::Derm,
            t,
        })
    }

    pub fn term(t: f64) -> Result<Self> {
        if !t.is_finite() || t == 0.0 {
            return Err(Error::Param(format!("term requires t != 0, got {t}")));
        }
        if t > 0.0 {
            return Err(Error::Param(format!(
                "term requires t < 0 for anomaly detection, got {t}"
            )));
        }
        Ok(Aggregator {
            kind: AggKind::Term,
            t,
        })
    }

    pub fn new(kind: AggKind, t: f64) -> Result<Self> {
        match kind {
            AggKind::Erm => Ok(Self::erm()),
            AggKind::Derm => Self::derm(t),
            AggKind::Term => Self::term(t),
        }
    }

    pub fn kind(&self) -> AggKind {
        self.kind
    }

    /// The tilt parameter; `None` for ERM.
    pub fn t(&self) -> Option<f64> {
        match self.kind {
            AggKind::Erm => None,
            _ => Some(self.t),
        }
    }

    /// Collapse a loss vector into the scheme's scalar objective.
    pub fn aggregate(&self, losses: &LossVector) -> Result<f64> {
        let f = losses.values();
        let n = f.len() as f64;
        let value = match self.kind {
            AggKind::Erm => f.iter().sum::<f64>() / n,
            AggKind::Derm => {
                // exp(log t + mean(log f_i)): log-domain form of
                // t * geometric-mean, immune to product overflow.
                let mean_log = derm_mean_log(f)? / n;
                (self.t.ln() + mean_log).exp()
            }
            AggKind::Term => {
                let lse = log_sum_exp_scaled(f, self.t);
                (lse - n.ln()) / self.t
            }
        };
        if !value.is_finite() {
            return Err(Error::Domain(format!(
                "{} aggregate is not finite",
                self.kind
            )));
        }
        Ok(value)
    }

    /// Per-sample gradient weights, index-aligned with `losses`.
    ///
    /// With these weights held fixed, the gradient of `sum(w_i * f_i)`
    /// equals the gradient of the aggregate objective itself.
    pub fn gradient_weights(&self, losses: &LossVector) -> Result<WeightVector> {
        let f = losses.values();
        let n = f.len() as f64;
        let values = match self.kind {
            AggKind::Erm => vec![1.0 / n; f.len()],
            AggKind::Derm => {
                // w_i = (1/N) * R/f_i, all in the log domain.
                let mean_log = derm_mean_log(f)? / n;
                let log_base = self.t.ln() + mean_log - n.ln();
                f.iter()
                    .map(|&fi| (log_base - fi.max(LOSS_FLOOR).ln()).exp())
                    .collect()
            }
            AggKind::Term => {
                // w_i = exp(t*(f_i - R))/N, which is softmax(t * f).
                let lse = log_sum_exp_scaled(f, self.t);
                f.iter().map(|&fi| (self.t * fi - lse).exp()).collect()
            }
        };
        if values.iter().any(|w: &f64| !w.is_finite()) {
            return Err(Error::Domain(format!(
                "{} gradient weights are not finite",
                self.kind
            )));
        }
        Ok(WeightVector(values))
    }
}

fn derm_mean_log(f: &[f64]) -> Result<f64> {
    let mut sum = 0.0;
    for &fi in f {
        let floored = fi.max(LOSS_FLOOR);
        if !(floored > 0.0) {
            return Err(Error::Domain(format!(
                "derm needs positive losses, got {fi}"
            )));
        }
        sum += floored.ln();
    }
    Ok(sum)
}

/// log(sum(exp(t * f_i))), shifted by the max to avoid overflow.
fn log_sum_exp_scaled(f: &[f64], t: f64) -> f64 {
    let max = f
        .iter()
        .map(|&fi| t * fi)
        .fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = f.iter().map(|&fi| (t * fi - max).exp()).sum();
    max + sum.ln()
}

/// Per-sample losses for one mini-batch: non-empty, finite, non-negative.
#[derive(Debug, Clone, PartialEq)]
pub struct LossVector(Vec<f64>);

impl LossVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Shape("loss vector is empty".into()));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("loss[{i}] = {v}")));
            }
            if v < 0.0 {
                return Err(Error::Domain(format!(
                    "loss[{i}] = {v}; reconstruction losses are non-negative"
                )));
            }
        }
        Ok(LossVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Gradient weights aligned index-wise with the loss vector that produced
/// them. All entries are strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[cfg(test)]
    pub(crate) fn from_raw(values: Vec<f64>) -> Self {
        WeightVector(values)
    }
}

/// `sum(w_i * f_i)` — the fixed-weight surrogate whose gradient matches
/// the aggregate's.
pub fn weighted_total(losses: &LossVector, weights: &WeightVector) -> Result<f64> {
    if losses.len() != weights.len() {
        return Err(Error::Shape(format!(
            "{} losses vs {} weights",
            losses.len(),
            weights.len()
        )));
    }
    Ok(losses
        .values()
        .iter()
        .zip(weights.values())
        .map(|(f, w)| w * f)
        .sum())
}
