//! Robust residual scale (MAD start, trimmed or distance-based reweighting)
//! and the two-sided flag rule.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stats::{
    ceil_count, median_in_place, normal_cdf, normal_pdf, normal_quantile, PHI_INV_075,
    PHI_INV_0995, SQRT_CHI2_1_0975,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScaleError {
    #[error("initial scale is 0 but residuals are not all zero")]
    ZeroScale,
    #[error("trim fraction {0} outside [0, 0.5]")]
    InvalidAlpha(f64),
    #[error("no residuals")]
    Empty,
}

/// Finite-sample correction hook.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleSettings {
    /// Multiplier applied when `n <= small_sample_limit`.
    pub small_sample_fsc: f64,
    pub small_sample_limit: usize,
}

impl Default for ScaleSettings {
    fn default() -> Self {
        Self {
            small_sample_fsc: 1.0,
            small_sample_limit: 50,
        }
    }
}

impl ScaleSettings {
    pub fn fsc(&self, n: usize) -> f64 {
        if n > self.small_sample_limit {
            1.0
        } else {
            self.small_sample_fsc
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleEstimate {
    pub sigma0: f64,
    pub sigma: f64,
    /// Reweighted scale before the consistency and finite-sample factors.
    pub raw_sigma: f64,
    pub weights: Vec<f64>,
    pub consistency_factor: f64,
    pub fsc: f64,
}

impl ScaleEstimate {
    pub fn zero_weighted(&self) -> usize {
        self.weights.iter().filter(|w| **w == 0.0).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutlierReport {
    pub scaled_residuals: Vec<f64>,
    pub flags: Vec<bool>,
    pub threshold: f64,
    pub flagged_indices: Vec<usize>,
    /// Set when the scale was 0 and nonzero residuals were flagged outright.
    pub degenerate_scale: bool,
}

/// `√median(rᵢ²) / Φ⁻¹(0.75)`.
pub fn initial_scale(residuals: &[f64]) -> f64 {
    let mut sq: Vec<f64> = residuals.iter().map(|r| r * r).collect();
    median_in_place(&mut sq).sqrt() / PHI_INV_075
}

/// Variance correction for a normal sample symmetrically truncated at
/// `±q`: `1/√(1 - 2qφ(q)/(2Φ(q) - 1))`.
pub fn consistency_factor_at(q: f64) -> f64 {
    if !q.is_finite() {
        return 1.0;
    }
    let mass = 2.0 * normal_cdf(q) - 1.0;
    1.0 / (1.0 - 2.0 * q * normal_pdf(q) / mass).sqrt()
}

/// Consistency factor for a two-sided trim fraction `δ` (`q = Φ⁻¹(1 - δ/2)`).
pub fn consistency_factor(delta: f64) -> f64 {
    if delta <= 0.0 {
        return 1.0;
    }
    consistency_factor_at(normal_quantile(1.0 - 0.5 * delta))
}

fn weighted_rms(residuals: &[f64], weights: &[f64]) -> f64 {
    let (num, den) = residuals
        .iter()
        .zip(weights)
        .fold((0.0, 0.0), |(a, b), (r, w)| (a + w * r * r, b + w));
    if den > 0.0 {
        (num / den).sqrt()
    } else {
        0.0
    }
}

/// Zero weights for the `count` largest `|rᵢ|`; among ties the higher index
/// is dropped first.
pub(crate) fn trim_largest(residuals: &[f64], count: usize) -> Vec<f64> {
    let mut order: Vec<usize> = (0..residuals.len()).collect();
    order.sort_by(|&a, &b| {
        residuals[b]
            .abs()
            .partial_cmp(&residuals[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(b.cmp(&a))
    });
    let mut w = vec![1.0; residuals.len()];
    for &i in order.iter().take(count) {
        w[i] = 0.0;
    }
    w
}

/// Trimmed reweighting without the `σ₀ > 0` contract: ranking by `|rᵢ/σ₀|`
/// is the same as ranking by `|rᵢ|`.
pub(crate) fn lts_reweight_unchecked(
    residuals: &[f64],
    sigma0: f64,
    alpha: f64,
    settings: &ScaleSettings,
) -> ScaleEstimate {
    let n = residuals.len();
    let trimmed = ceil_count(alpha, n);
    let weights = trim_largest(residuals, trimmed);
    let raw = weighted_rms(residuals, &weights);
    let cf = consistency_factor(trimmed as f64 / n as f64);
    let fsc = settings.fsc(n);
    ScaleEstimate {
        sigma0,
        sigma: raw * cf * fsc,
        raw_sigma: raw,
        weights,
        consistency_factor: cf,
        fsc,
    }
}

/// Zero-weights the `⌈αn⌉` largest scaled residuals and returns the
/// corrected reweighted scale.
pub fn lts_reweight(
    residuals: &[f64],
    sigma0: f64,
    alpha: f64,
    settings: &ScaleSettings,
) -> Result<ScaleEstimate, ScaleError> {
    if residuals.is_empty() {
        return Err(ScaleError::Empty);
    }
    if !(0.0..=0.5).contains(&alpha) {
        return Err(ScaleError::InvalidAlpha(alpha));
    }
    if sigma0 <= 0.0 && residuals.iter().any(|r| *r != 0.0) {
        return Err(ScaleError::ZeroScale);
    }
    Ok(lts_reweight_unchecked(residuals, sigma0, alpha, settings))
}

/// Zero-weights residuals whose distance `|rᵢ|/scale` exceeds `√χ²₁(0.975)`.
pub fn gs_reweight(
    residuals: &[f64],
    scale: f64,
    settings: &ScaleSettings,
) -> Result<ScaleEstimate, ScaleError> {
    if residuals.is_empty() {
        return Err(ScaleError::Empty);
    }
    let all_zero = residuals.iter().all(|r| *r == 0.0);
    if scale <= 0.0 && !all_zero {
        return Err(ScaleError::ZeroScale);
    }
    let weights: Vec<f64> = residuals
        .iter()
        .map(|r| {
            if !all_zero && r.abs() / scale > SQRT_CHI2_1_0975 {
                0.0
            } else {
                1.0
            }
        })
        .collect();
    let raw = weighted_rms(residuals, &weights);
    let cf = consistency_factor_at(SQRT_CHI2_1_0975);
    let fsc = settings.fsc(residuals.len());
    Ok(ScaleEstimate {
        sigma0: scale,
        sigma: raw * cf * fsc,
        raw_sigma: raw,
        weights,
        consistency_factor: cf,
        fsc,
    })
}

/// Flags `|rᵢ/σ| > Φ⁻¹(0.995)`. With `σ = 0` every nonzero residual is
/// flagged and the report is marked degenerate.
pub fn flag_outliers(residuals: &[f64], sigma: f64) -> OutlierReport {
    let threshold = PHI_INV_0995;
    let degenerate = !(sigma > 0.0);
    let scaled: Vec<f64> = residuals
        .iter()
        .map(|&r| {
            if !degenerate {
                r / sigma
            } else if r == 0.0 {
                0.0
            } else {
                f64::INFINITY.copysign(r)
            }
        })
        .collect();
    let flags: Vec<bool> = scaled.iter().map(|s| s.abs() > threshold).collect();
    let flagged_indices = flags
        .iter()
        .enumerate()
        .filter_map(|(i, f)| f.then_some(i))
        .collect::<Vec<_>>();
    OutlierReport {
        degenerate_scale: degenerate && !flagged_indices.is_empty(),
        scaled_residuals: scaled,
        flags,
        threshold,
        flagged_indices,
    }
}
