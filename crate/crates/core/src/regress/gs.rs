//! Generalized S-estimator: the biweight M-scale of all pairwise residual
//! differences, which removes the intercept from the search.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::mm::{fast_s, Design, SSettings};
use super::{biweight_location, draw_subset, residuals_into, FitError, RegressorKind, RobustFit};
use crate::linalg::ols;
use crate::loss::{BIWEIGHT_BREAKDOWN, BIWEIGHT_EFFICIENT};
use crate::rng::{streams, substream};
use crate::scale::{consistency_factor_at, gs_reweight, ScaleEstimate, ScaleSettings};
use crate::stats::SQRT_CHI2_1_0975;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GsSettings {
    pub search: SSettings,
    /// Biweight cutoff of the post-hoc intercept location.
    pub location_c: f64,
}

impl Default for GsSettings {
    fn default() -> Self {
        Self {
            search: SSettings {
                c: BIWEIGHT_BREAKDOWN,
                b: 0.5,
                max_refine: 100,
                ..SSettings::default()
            },
            location_c: BIWEIGHT_EFFICIENT,
        }
    }
}

/// Rows `(yᵢ - yⱼ, xᵢ - xⱼ)` for all `i < j`.
fn pairwise_differences(x: ArrayView2<'_, f64>, y: ArrayView1<'_, f64>) -> (Array2<f64>, Array1<f64>) {
    let (n, k) = x.dim();
    let pairs = n * (n - 1) / 2;
    let mut dx = Array2::zeros((pairs, k));
    let mut dy = Array1::zeros(pairs);
    let mut row = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            dy[row] = y[i] - y[j];
            for c in 0..k {
                dx[[row, c]] = x[[i, c]] - x[[j, c]];
            }
            row += 1;
        }
    }
    (dx, dy)
}

/// GS regression: slopes from the difference-based S-search, intercept as
/// the biweight location of `y - Xβ`, 0/1 weights from the robust
/// distance rule.
pub fn fit_gs(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    settings: &GsSettings,
    scale: &ScaleSettings,
    seed: u64,
) -> Result<RobustFit, FitError> {
    let method = RegressorKind::Gs;
    let (n, k) = x.dim();
    if n < k + 2 {
        return Err(FitError::Argument {
            method,
            reason: format!("n = {n} is too small for pairwise differencing with K = {k} (need K + 2)"),
        });
    }
    let (dx, dy) = pairwise_differences(x, y);
    let design = Design {
        x: dx.view(),
        y: dy.view(),
        intercept: false,
    };
    let mut rng = substream(seed, streams::GS);
    let out = fast_s(&design, &settings.search, &mut rng, |rng| {
        let idx = draw_subset(rng, n, k + 1);
        ols(x, y, Some(&idx), None, true).map(|t| t[1..].to_vec())
    })
    .ok_or(FitError::Rank { method })?;

    let coefficients = out.theta;
    let mut partial = Vec::with_capacity(n);
    residuals_into(x, y, 0.0, &coefficients, &mut partial);
    let intercept = biweight_location(&partial, settings.location_c);
    let residuals: Vec<f64> = partial.iter().map(|r| r - intercept).collect();
    let residual_scale = out.scale / std::f64::consts::SQRT_2;

    let exact_tol = 1e-12 * y.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let reweighting = if residual_scale > 0.0 {
        gs_reweight(&residuals, residual_scale, scale).expect("scale contract checked")
    } else {
        // exact fit for most pairs: any nonzero residual is infinitely far
        let weights: Vec<f64> = residuals
            .iter()
            .map(|r| f64::from(r.abs() <= exact_tol))
            .collect();
        ScaleEstimate {
            sigma0: 0.0,
            sigma: 0.0,
            raw_sigma: 0.0,
            weights,
            consistency_factor: consistency_factor_at(SQRT_CHI2_1_0975),
            fsc: scale.fsc(n),
        }
    };
    Ok(RobustFit {
        method,
        intercept,
        coefficients,
        weights: reweighting.weights.clone(),
        scale: reweighting.sigma,
        objective: out.scale,
        converged: out.converged,
        reweighting: Some(reweighting),
        singular_subsets: out.singular,
        residuals,
    })
}
