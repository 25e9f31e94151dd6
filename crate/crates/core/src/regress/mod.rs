//! Robust linear regression on the selected predictors: least trimmed
//! squares (Fast-LTS), MM (Fast-S start plus an efficient M-step) and the
//! generalized S-estimator on pairwise residual differences.
//!
//! Every fitter takes an explicit seed and draws its elemental subsets from
//! a dedicated ChaCha20 stream, so identical inputs give bit-identical fits.

mod gs;
mod lts;
mod mm;

pub use gs::{fit_gs, GsSettings};
pub use lts::{fit_lts, trimmed_objective, LtsSettings};
pub use mm::{fit_mm, fit_s, MmSettings, SEstimate, SSettings};

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::index;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::loss::{biweight_rho_normalized, biweight_rho_normalized_tpsi, biweight_weight};
use crate::rng::Rng;
use crate::scale::{ScaleEstimate, ScaleSettings};
use crate::stats::{median_and_mad, PHI_INV_075};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegressorKind {
    Lts,
    Mm,
    Gs,
}

impl RegressorKind {
    pub const ALL: [RegressorKind; 3] = [RegressorKind::Lts, RegressorKind::Gs, RegressorKind::Mm];

    pub fn name(self) -> &'static str {
        match self {
            RegressorKind::Lts => "lts",
            RegressorKind::Mm => "mm",
            RegressorKind::Gs => "gs",
        }
    }
}

impl std::fmt::Display for RegressorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("{method}: {reason}")]
    Argument {
        method: RegressorKind,
        reason: String,
    },
    #[error("{method}: every elemental subset was singular (rank-deficient design)")]
    Rank { method: RegressorKind },
}

impl FitError {
    pub fn method(&self) -> RegressorKind {
        match self {
            FitError::Argument { method, .. } | FitError::Rank { method } => *method,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustFit {
    pub method: RegressorKind,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    /// 0/1 membership for LTS and GS, normalized IRLS weights for MM.
    pub weights: Vec<f64>,
    /// Residual scale used for flagging.
    pub scale: f64,
    pub objective: f64,
    pub converged: bool,
    /// Reweighting step behind `scale` (LTS and GS).
    pub reweighting: Option<ScaleEstimate>,
    /// Elemental subsets rejected as singular.
    pub singular_subsets: usize,
}

impl RobustFit {
    /// `y - intercept - X coefficients`.
    pub fn recompute_residuals(&self, x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> Vec<f64> {
        residuals(x, y, self.intercept, &self.coefficients)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressorSettings {
    pub lts: LtsSettings,
    pub mm: MmSettings,
    pub gs: GsSettings,
    pub scale: ScaleSettings,
}

impl Default for RegressorSettings {
    fn default() -> Self {
        Self {
            lts: LtsSettings::default(),
            mm: MmSettings::default(),
            gs: GsSettings::default(),
            scale: ScaleSettings::default(),
        }
    }
}

impl RegressorSettings {
    /// Sets the LTS trimming fraction (which also drives its reweighting).
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.lts.alpha = alpha;
        self
    }
}

/// Dispatches to the fitter for `kind`.
pub fn fit_robust(
    kind: RegressorKind,
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    settings: &RegressorSettings,
    seed: u64,
) -> Result<RobustFit, FitError> {
    match kind {
        RegressorKind::Lts => fit_lts(x, y, &settings.lts, &settings.scale, seed),
        RegressorKind::Mm => fit_mm(x, y, &settings.mm, seed),
        RegressorKind::Gs => fit_gs(x, y, &settings.gs, &settings.scale, seed),
    }
}

pub(crate) fn residuals(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    intercept: f64,
    coefs: &[f64],
) -> Vec<f64> {
    let mut out = Vec::with_capacity(y.len());
    residuals_into(x, y, intercept, coefs, &mut out);
    out
}

pub(crate) fn residuals_into(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    intercept: f64,
    coefs: &[f64],
    out: &mut Vec<f64>,
) {
    out.clear();
    for (row, yi) in x.outer_iter().zip(y.iter()) {
        let fit: f64 = row.iter().zip(coefs).map(|(a, b)| a * b).sum();
        out.push(yi - intercept - fit);
    }
}

/// `count` distinct indices from `0..n`.
pub(crate) fn draw_subset(rng: &mut Rng, n: usize, count: usize) -> Vec<usize> {
    index::sample(rng, n, count).into_vec()
}

/// Splits an `ols` parameter vector (intercept first).
pub(crate) fn split_theta(theta: Vec<f64>) -> (f64, Vec<f64>) {
    let mut it = theta.into_iter();
    let b0 = it.next().unwrap_or(0.0);
    (b0, it.collect())
}

/// M-scale of `r`: the `s` solving `mean ρ̃(rᵢ/s) = b` for the biweight
/// normalized to `[0, 1]`. Returns 0 when the fraction of nonzero
/// residuals does not exceed `b`, where no positive root exists.
pub fn m_scale(r: &[f64], c: f64, b: f64) -> f64 {
    m_scale_from(r, c, b, None)
}

pub(crate) fn m_scale_from(r: &[f64], c: f64, b: f64, start: Option<f64>) -> f64 {
    let n = r.len() as f64;
    let nonzero = r.iter().filter(|v| **v != 0.0).count() as f64;
    if nonzero / n <= b {
        return 0.0;
    }
    let f = |s: f64| -> (f64, f64) {
        let mut v = 0.0;
        let mut d = 0.0;
        for &ri in r {
            let u = ri / s;
            v += biweight_rho_normalized(u, c);
            d += biweight_rho_normalized_tpsi(u, c);
        }
        (v / n - b, -d / n)
    };
    let mut s = match start {
        Some(s) if s > 0.0 && s.is_finite() => s,
        _ => {
            let abs: Vec<f64> = r.iter().map(|v| v.abs()).collect();
            let guess = crate::stats::median(&abs) / PHI_INV_075;
            if guess > 0.0 {
                guess
            } else {
                abs.iter().fold(0.0_f64, |a, v| a.max(*v))
            }
        }
    };
    // work in t = ln s; g(t) = f(e^t) is nonincreasing
    let mut t = s.ln();
    let mut lo = f64::NEG_INFINITY; // g(lo) > 0
    let mut hi = f64::INFINITY; // g(hi) < 0
    for _ in 0..200 {
        s = t.exp();
        let (g, dg) = f(s);
        if g == 0.0 {
            return s;
        }
        if g > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        if hi - lo < 1e-13 {
            break;
        }
        let mut next = if dg < 0.0 { t - g / dg } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo + 1.0,
                (false, true) => hi - 1.0,
                (false, false) => t,
            };
        }
        if (next - t).abs() < 1e-14 {
            t = next;
            break;
        }
        t = next;
    }
    t.exp()
}

/// Biweight M-estimate of location with MAD scale, starting at the median.
pub(crate) fn biweight_location(v: &[f64], c: f64) -> f64 {
    let (mut mu, scale) = median_and_mad(v);
    if !(scale > 0.0) {
        return mu;
    }
    for _ in 0..200 {
        let (mut num, mut den) = (0.0, 0.0);
        for &x in v {
            let w = biweight_weight((x - mu) / scale, c);
            num += w * x;
            den += w;
        }
        if den <= 0.0 {
            break;
        }
        let next = num / den;
        let done = (next - mu).abs() <= 1e-12 * scale;
        mu = next;
        if done {
            break;
        }
    }
    mu
}
