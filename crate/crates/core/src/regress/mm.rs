//! Fast-S search for the biweight S-estimate and the MM refinement.

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{draw_subset, m_scale_from, residuals_into, split_theta, FitError, RegressorKind, RobustFit};
use crate::linalg::ols;
use crate::loss::{
    biweight_rho_normalized, biweight_weight, BIWEIGHT_BREAKDOWN, BIWEIGHT_EFFICIENT,
};
use crate::rng::{streams, substream, Rng};
use crate::stats::{median, PHI_INV_075};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SSettings {
    pub n_subsets: usize,
    /// Cheap reweighting steps applied to every elemental start.
    pub refine_steps: usize,
    pub n_best: usize,
    pub max_refine: usize,
    pub c: f64,
    pub b: f64,
    pub tol: f64,
}

impl Default for SSettings {
    fn default() -> Self {
        Self {
            n_subsets: 500,
            refine_steps: 2,
            n_best: 5,
            max_refine: 200,
            c: BIWEIGHT_BREAKDOWN,
            b: 0.5,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmSettings {
    pub s: SSettings,
    pub c: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for MmSettings {
    fn default() -> Self {
        Self {
            s: SSettings::default(),
            c: BIWEIGHT_EFFICIENT,
            max_iter: 500,
            tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SEstimate {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub scale: f64,
    pub converged: bool,
    pub singular_subsets: usize,
}

/// Regression design for the S-type search, with or without an intercept
/// column.
pub(crate) struct Design<'a> {
    pub x: ArrayView2<'a, f64>,
    pub y: ArrayView1<'a, f64>,
    pub intercept: bool,
}

impl Design<'_> {
    fn residuals(&self, theta: &[f64], out: &mut Vec<f64>) {
        if self.intercept {
            residuals_into(self.x, self.y, theta[0], &theta[1..], out);
        } else {
            residuals_into(self.x, self.y, 0.0, theta, out);
        }
    }

    fn wls(&self, w: &[f64]) -> Option<Vec<f64>> {
        ols(self.x, self.y, None, Some(w), self.intercept)
    }
}

pub(crate) struct SOutcome {
    pub theta: Vec<f64>,
    pub scale: f64,
    pub converged: bool,
    pub singular: usize,
}

fn mean_rho(r: &[f64], s: f64, c: f64) -> f64 {
    r.iter().map(|v| biweight_rho_normalized(v / s, c)).sum::<f64>() / r.len() as f64
}

fn biweights(r: &[f64], s: f64, c: f64) -> Vec<f64> {
    r.iter().map(|v| biweight_weight(v / s, c)).collect()
}

/// Fast-S: refine each start a little, keep the `n_best` smallest scales
/// (skipping starts that provably cannot enter), then iterate reweighted
/// least squares on the survivors. A start whose M-scale is exactly 0 is
/// returned immediately.
pub(crate) fn fast_s(
    design: &Design<'_>,
    settings: &SSettings,
    rng: &mut Rng,
    mut candidate: impl FnMut(&mut Rng) -> Option<Vec<f64>>,
) -> Option<SOutcome> {
    let (c, b) = (settings.c, settings.b);
    let mut singular = 0;
    let mut best: Vec<(f64, usize, Vec<f64>)> = Vec::with_capacity(settings.n_best + 1);
    let mut r = Vec::with_capacity(design.y.len());
    // scales at rounding level relative to the response count as exact fits
    let exact_tol = 1e-12 * design.y.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    for order in 0..settings.n_subsets {
        let Some(mut theta) = candidate(rng) else {
            singular += 1;
            continue;
        };
        design.residuals(&theta, &mut r);
        let mut s = median(&r.iter().map(|v| v.abs()).collect::<Vec<_>>()) / PHI_INV_075;
        if s <= exact_tol {
            s = m_scale_from(&r, c, b, None);
            if s <= exact_tol {
                return Some(SOutcome {
                    theta,
                    scale: 0.0,
                    converged: true,
                    singular,
                });
            }
        }
        for _ in 0..settings.refine_steps {
            let Some(next) = design.wls(&biweights(&r, s, c)) else {
                break;
            };
            theta = next;
            design.residuals(&theta, &mut r);
            let m = mean_rho(&r, s, c);
            if m == 0.0 {
                break;
            }
            s *= (m / b).sqrt();
        }
        if best.len() == settings.n_best {
            let worst = best.last().expect("full list").0;
            if mean_rho(&r, worst, c) >= b {
                continue;
            }
        }
        let s = m_scale_from(&r, c, b, Some(s));
        if s <= exact_tol {
            return Some(SOutcome {
                theta,
                scale: 0.0,
                converged: true,
                singular,
            });
        }
        let pos = best.partition_point(|(bs, bo, _)| (*bs, *bo) < (s, order));
        best.insert(pos, (s, order, theta));
        best.truncate(settings.n_best.max(1));
    }
    if best.is_empty() {
        return None;
    }

    let mut finals = Vec::with_capacity(best.len());
    for (mut s, order, mut theta) in best {
        let mut converged = false;
        design.residuals(&theta, &mut r);
        for _ in 0..settings.max_refine {
            let Some(next) = design.wls(&biweights(&r, s, c)) else {
                converged = true;
                break;
            };
            let mut r_next = Vec::with_capacity(r.len());
            design.residuals(&next, &mut r_next);
            let s_next = m_scale_from(&r_next, c, b, Some(s));
            if s_next >= s {
                converged = true;
                break;
            }
            let small = s - s_next <= settings.tol * s;
            theta = next;
            r = r_next;
            s = s_next;
            if small || s <= exact_tol {
                converged = true;
                break;
            }
        }
        if s <= exact_tol {
            s = 0.0;
        }
        finals.push((s, order, theta, converged));
    }
    let (scale, _, theta, converged) = finals
        .into_iter()
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .expect("nonempty");
    Some(SOutcome {
        theta,
        scale,
        converged,
        singular,
    })
}

fn check_shape(method: RegressorKind, n: usize, k: usize, needed: usize) -> Result<(), FitError> {
    if n < needed {
        return Err(FitError::Argument {
            method,
            reason: format!("n = {n} observations is too few for K = {k} (need at least {needed})"),
        });
    }
    Ok(())
}

/// Biweight S-estimate of regression with intercept.
pub fn fit_s(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    settings: &SSettings,
    seed: u64,
) -> Result<SEstimate, FitError> {
    let (n, k) = x.dim();
    check_shape(RegressorKind::Mm, n, k, k + 1)?;
    let design = Design {
        x,
        y,
        intercept: true,
    };
    let mut rng = substream(seed, streams::S_ESTIMATE);
    let out = fast_s(&design, settings, &mut rng, |rng| {
        let idx = draw_subset(rng, n, k + 1);
        ols(x, y, Some(&idx), None, true)
    })
    .ok_or(FitError::Rank {
        method: RegressorKind::Mm,
    })?;
    let (intercept, coefficients) = split_theta(out.theta);
    Ok(SEstimate {
        intercept,
        coefficients,
        scale: out.scale,
        converged: out.converged,
        singular_subsets: out.singular,
    })
}

fn m_objective(r: &[f64], sigma: f64, c: f64) -> f64 {
    mean_rho(r, sigma, c)
}

/// MM-estimate: S-estimate start and scale, then biweight IRLS at the
/// fixed scale with the efficient cutoff.
pub fn fit_mm(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    settings: &MmSettings,
    seed: u64,
) -> Result<RobustFit, FitError> {
    let method = RegressorKind::Mm;
    let s_est = fit_s(x, y, &settings.s, seed)?;
    let n = y.len();
    let sigma = s_est.scale;
    let mut r = Vec::with_capacity(n);
    residuals_into(x, y, s_est.intercept, &s_est.coefficients, &mut r);
    if sigma == 0.0 {
        return Ok(RobustFit {
            method,
            intercept: s_est.intercept,
            coefficients: s_est.coefficients,
            weights: vec![1.0; n],
            scale: 0.0,
            objective: 0.0,
            converged: true,
            reweighting: None,
            singular_subsets: s_est.singular_subsets,
            residuals: r,
        });
    }
    let c = settings.c;
    let s_objective = m_objective(&r, sigma, c);
    let mut theta: Vec<f64> = std::iter::once(s_est.intercept)
        .chain(s_est.coefficients.iter().copied())
        .collect();
    let mut r_mm = r.clone();
    let mut converged = false;
    for _ in 0..settings.max_iter {
        let w = biweights(&r_mm, sigma, c);
        let Some(next) = ols(x, y, None, Some(&w), true) else {
            break;
        };
        let mut r_next = Vec::with_capacity(n);
        residuals_into(x, y, next[0], &next[1..], &mut r_next);
        let change = r_next
            .iter()
            .zip(&r_mm)
            .fold(0.0_f64, |a, (p, q)| a.max((p - q).abs()));
        theta = next;
        r_mm = r_next;
        if change <= settings.tol * sigma {
            converged = true;
            break;
        }
    }
    let mm_objective = m_objective(&r_mm, sigma, c);
    // keep the M-step only if it does not worsen the objective it minimizes
    let (theta, r, objective) = if mm_objective <= s_objective {
        (theta, r_mm, mm_objective)
    } else {
        let t: Vec<f64> = std::iter::once(s_est.intercept)
            .chain(s_est.coefficients.iter().copied())
            .collect();
        (t, r, s_objective)
    };
    let mut weights = biweights(&r, sigma, c);
    let wmax = weights.iter().fold(0.0_f64, |a, w| a.max(*w));
    if wmax > 0.0 {
        weights.iter_mut().for_each(|w| *w /= wmax);
    }
    let (intercept, coefficients) = split_theta(theta);
    Ok(RobustFit {
        method,
        intercept,
        coefficients,
        weights,
        scale: sigma,
        objective,
        converged,
        reweighting: None,
        singular_subsets: s_est.singular_subsets,
        residuals: r,
    })
}
