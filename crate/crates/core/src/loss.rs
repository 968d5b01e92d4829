//! Pairwise ranking losses on the margin `mu = 1 - s_pos + s_neg`.
//!
//! Both families depend on the scores only through `mu`, so
//! `d_pos == -d_neg` always holds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_DELTA: f64 = 1.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LossSpec {
    /// `max(0, mu)^p`, `p` in {1, 2}.
    Hinge { p: u8 },
    /// Quadratic up to `delta`, linear beyond.
    Huber { delta: f64 },
}

impl Default for LossSpec {
    fn default() -> Self {
        LossSpec::Huber { delta: DEFAULT_DELTA }
    }
}

impl LossSpec {
    pub fn hinge(p: u8) -> Result<Self> {
        let spec = LossSpec::Hinge { p };
        spec.validate()?;
        Ok(spec)
    }

    pub fn huber(delta: f64) -> Result<Self> {
        let spec = LossSpec::Huber { delta };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LossSpec::Hinge { p } if p == 1 || p == 2 => Ok(()),
            LossSpec::Hinge { p } => Err(Error::InvalidLoss(format!("hinge exponent {p} not in {{1, 2}}"))),
            LossSpec::Huber { delta } if delta > 0.0 && delta.is_finite() => Ok(()),
            LossSpec::Huber { delta } => Err(Error::InvalidLoss(format!("huber delta {delta} must be positive"))),
        }
    }

    pub fn eval(&self, s_pos: f64, s_neg: f64) -> Result<LossValue> {
        match *self {
            LossSpec::Hinge { p } => hinge_rank_loss(s_pos, s_neg, p),
            LossSpec::Huber { delta } => huber_rank_loss(s_pos, s_neg, delta),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub value: f64,
    pub margin_mu: f64,
    /// dL/ds_pos
    pub d_pos: f64,
    /// dL/ds_neg
    pub d_neg: f64,
}

impl LossValue {
    fn from_margin(mu: f64, value: f64, d_neg: f64) -> Self {
        LossValue {
            value,
            margin_mu: mu,
            d_pos: -d_neg,
            d_neg,
        }
    }
}

pub fn margin(s_pos: f64, s_neg: f64) -> f64 {
    1.0 - s_pos + s_neg
}

pub fn hinge_rank_loss(s_pos: f64, s_neg: f64, p: u8) -> Result<LossValue> {
    LossSpec::Hinge { p }.validate()?;
    let mu = margin(s_pos, s_neg);
    let active = mu.max(0.0);
    let (value, d_neg) = if p == 1 {
        (active, if mu > 0.0 { 1.0 } else { 0.0 })
    } else {
        (active * active, 2.0 * active)
    };
    Ok(LossValue::from_margin(mu, value, d_neg))
}

/// The quadratic branch is `0.5 * max(0, mu)^2`, so the loss is zero for a
/// satisfied margin. The derivative in `mu` is `clamp(mu, 0, delta)`.
pub fn huber_rank_loss(s_pos: f64, s_neg: f64, delta: f64) -> Result<LossValue> {
    LossSpec::Huber { delta }.validate()?;
    let mu = margin(s_pos, s_neg);
    let active = mu.max(0.0);
    let value = if mu <= delta {
        0.5 * active * active
    } else {
        delta * mu - 0.5 * delta * delta
    };
    Ok(LossValue::from_margin(mu, value, active.min(delta)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchLoss {
    pub mean: f64,
    /// Per-pair dL/ds_pos, already scaled by 1/batch_size.
    pub d_pos: Vec<f64>,
    pub d_neg: Vec<f64>,
}

/// Mean loss over `pairs` of `(s_pos, s_neg)` and gradients of that mean.
pub fn batch_loss(pairs: &[(f64, f64)], spec: &LossSpec) -> Result<BatchLoss> {
    if pairs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    spec.validate()?;
    let scale = 1.0 / pairs.len() as f64;
    let mut sum = 0.0;
    let mut d_pos = Vec::with_capacity(pairs.len());
    let mut d_neg = Vec::with_capacity(pairs.len());
    for &(sp, sn) in pairs {
        let l = spec.eval(sp, sn)?;
        sum += l.value;
        d_pos.push(l.d_pos * scale);
        d_neg.push(l.d_neg * scale);
    }
    Ok(BatchLoss {
        mean: sum * scale,
        d_pos,
        d_neg,
    })
}
