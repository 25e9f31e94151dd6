//! Scalar losses, influence functions (ψ) and IRLS weights.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HUBER_DEFAULT: f64 = 1.345;
/// Biweight cutoff giving a 50%-breakdown, normal-consistent M-scale at `b = 0.5`.
pub const BIWEIGHT_BREAKDOWN: f64 = 1.547;
/// Biweight cutoff for 95% normal efficiency in the M-step.
pub const BIWEIGHT_EFFICIENT: f64 = 4.685;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    Huber,
    Quantile,
    TukeyBiweight,
}

#[derive(Debug, Error, PartialEq)]
#[error("invalid tuning {tuning} for {kind:?} loss")]
pub struct InvalidLoss {
    pub kind: LossKind,
    pub tuning: f64,
}

/// A loss family with its tuning constant: the Huber transition, the
/// quantile level, or the biweight cutoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    pub tuning: f64,
}

impl LossSpec {
    pub fn new(kind: LossKind, tuning: f64) -> Result<Self, InvalidLoss> {
        let ok = tuning.is_finite()
            && tuning > 0.0
            && (kind != LossKind::Quantile || tuning < 1.0);
        if ok {
            Ok(Self { kind, tuning })
        } else {
            Err(InvalidLoss { kind, tuning })
        }
    }

    pub fn huber(gamma: f64) -> Self {
        Self::new(LossKind::Huber, gamma).expect("positive Huber tuning")
    }

    /// Check loss at the median.
    pub fn median() -> Self {
        Self {
            kind: LossKind::Quantile,
            tuning: 0.5,
        }
    }

    pub fn biweight(c: f64) -> Self {
        Self::new(LossKind::TukeyBiweight, c).expect("positive biweight cutoff")
    }

    pub fn value(&self, t: f64) -> f64 {
        let k = self.tuning;
        match self.kind {
            LossKind::Huber => {
                let a = t.abs();
                if a <= k {
                    0.5 * t * t
                } else {
                    k * a - 0.5 * k * k
                }
            }
            LossKind::Quantile => {
                if t < 0.0 {
                    t * (k - 1.0)
                } else {
                    t * k
                }
            }
            LossKind::TukeyBiweight => {
                let full = k * k / 6.0;
                if t.abs() <= k {
                    let u = 1.0 - (t / k) * (t / k);
                    full * (1.0 - u * u * u)
                } else {
                    full
                }
            }
        }
    }

    /// Derivative of [`value`](Self::value); the check loss returns the
    /// midpoint subgradient `τ - 0.5` at zero.
    pub fn psi(&self, t: f64) -> f64 {
        let k = self.tuning;
        match self.kind {
            LossKind::Huber => t.clamp(-k, k),
            LossKind::Quantile => {
                if t > 0.0 {
                    k
                } else if t < 0.0 {
                    k - 1.0
                } else {
                    k - 0.5
                }
            }
            LossKind::TukeyBiweight => biweight_psi(t, k),
        }
    }

    /// `ψ(t)/t`, extended continuously at zero.
    pub fn weight(&self, t: f64) -> f64 {
        let k = self.tuning;
        match self.kind {
            LossKind::Huber => {
                let a = t.abs();
                if a <= k {
                    1.0
                } else {
                    k / a
                }
            }
            LossKind::Quantile => {
                if t == 0.0 {
                    0.0
                } else {
                    self.psi(t) / t
                }
            }
            LossKind::TukeyBiweight => biweight_weight(t, k),
        }
    }

    /// Supremum of the loss (infinite for unbounded losses).
    pub fn max_value(&self) -> f64 {
        match self.kind {
            LossKind::TukeyBiweight => self.tuning * self.tuning / 6.0,
            _ => f64::INFINITY,
        }
    }
}

pub fn loss_value(spec: &LossSpec, t: f64) -> f64 {
    spec.value(t)
}

pub fn psi_value(spec: &LossSpec, t: f64) -> f64 {
    spec.psi(t)
}

#[inline]
pub fn biweight_psi(t: f64, c: f64) -> f64 {
    if t.abs() <= c {
        let u = 1.0 - (t / c) * (t / c);
        t * u * u
    } else {
        0.0
    }
}

#[inline]
pub fn biweight_weight(t: f64, c: f64) -> f64 {
    if t.abs() <= c {
        let u = 1.0 - (t / c) * (t / c);
        u * u
    } else {
        0.0
    }
}

/// Biweight ρ scaled to `[0, 1]`.
#[inline]
pub fn biweight_rho_normalized(t: f64, c: f64) -> f64 {
    if t.abs() >= c {
        1.0
    } else {
        let u = 1.0 - (t / c) * (t / c);
        1.0 - u * u * u
    }
}

/// `t · d/dt ρ̃(t)` for the normalized biweight, used by scale solvers.
#[inline]
pub fn biweight_rho_normalized_tpsi(t: f64, c: f64) -> f64 {
    if t.abs() >= c {
        0.0
    } else {
        let u = 1.0 - (t / c) * (t / c);
        6.0 * (t / c) * (t / c) * u * u
    }
}
