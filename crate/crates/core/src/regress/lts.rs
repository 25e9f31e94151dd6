//! Fast-LTS: elemental starts, concentration steps, and a final
//! C-step iteration on the most promising candidates.

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{draw_subset, residuals_into, split_theta, FitError, RegressorKind, RobustFit};
use crate::linalg::ols;
use crate::rng::{streams, substream};
use crate::scale::{initial_scale, lts_reweight_unchecked, ScaleSettings};
use crate::stats::ceil_count;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtsSettings {
    /// Trimming fraction; the fit keeps `⌈(1 - alpha) n⌉` observations.
    pub alpha: f64,
    pub n_subsets: usize,
    pub n_keep: usize,
    pub initial_csteps: usize,
    pub max_csteps: usize,
}

impl Default for LtsSettings {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            n_subsets: 500,
            n_keep: 10,
            initial_csteps: 2,
            max_csteps: 1000,
        }
    }
}

/// Sum of the `h` smallest squared residuals.
pub fn trimmed_objective(r: &[f64], h: usize) -> f64 {
    let mut sq: Vec<f64> = r.iter().map(|v| v * v).collect();
    if h < sq.len() && h > 0 {
        sq.select_nth_unstable_by(h - 1, |a, b| a.total_cmp(b));
    }
    sq.iter().take(h).sum()
}

/// Indices of the `h` smallest squared residuals (ties to the lower index),
/// ascending, with their sum of squares.
fn concentrate(r: &[f64], h: usize) -> (Vec<usize>, f64) {
    let mut idx: Vec<usize> = (0..r.len()).collect();
    let key = |i: usize| r[i] * r[i];
    if h < idx.len() {
        idx.select_nth_unstable_by(h - 1, |&a, &b| key(a).total_cmp(&key(b)).then(a.cmp(&b)));
        idx.truncate(h);
    }
    idx.sort_unstable();
    let obj = idx.iter().map(|&i| key(i)).sum();
    (idx, obj)
}

struct Candidate {
    theta: Vec<f64>,
    subset: Vec<usize>,
    objective: f64,
    order: usize,
}

struct Problem<'a> {
    x: ArrayView2<'a, f64>,
    y: ArrayView1<'a, f64>,
    h: usize,
    slack: f64,
    buf: Vec<f64>,
}

impl Problem<'_> {
    fn evaluate(&mut self, theta: &[f64]) -> (Vec<usize>, f64) {
        let mut buf = std::mem::take(&mut self.buf);
        residuals_into(self.x, self.y, theta[0], &theta[1..], &mut buf);
        let out = concentrate(&buf, self.h);
        self.buf = buf;
        out
    }

    /// One concentration step; `None` if the subset design is singular.
    fn c_step(&mut self, c: &Candidate) -> Option<Candidate> {
        let theta = ols(self.x, self.y, Some(&c.subset), None, true)?;
        let (subset, objective) = self.evaluate(&theta);
        assert!(
            objective <= c.objective * (1.0 + 1e-9) + self.slack,
            "C-step increased the trimmed objective: {} -> {}",
            c.objective,
            objective
        );
        Some(Candidate {
            theta,
            subset,
            objective,
            order: c.order,
        })
    }
}

/// Least trimmed squares with intercept via Fast-LTS.
pub fn fit_lts(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    settings: &LtsSettings,
    scale: &ScaleSettings,
    seed: u64,
) -> Result<RobustFit, FitError> {
    let method = RegressorKind::Lts;
    let (n, k) = x.dim();
    let arg = |reason: String| FitError::Argument { method, reason };
    if !(0.0..=0.5).contains(&settings.alpha) {
        return Err(arg(format!("alpha {} outside [0, 0.5]", settings.alpha)));
    }
    if n < k + 1 {
        return Err(arg(format!("n = {n} < K + 1 = {}", k + 1)));
    }
    let h = ceil_count(1.0 - settings.alpha, n);
    if h <= k {
        return Err(arg(format!("h = {h} must exceed K = {k}")));
    }
    let y_ss: f64 = y.iter().map(|v| v * v).sum();
    let mut prob = Problem {
        x,
        y,
        h,
        slack: 1e-12 * (1.0 + y_ss),
        buf: Vec::with_capacity(n),
    };

    let mut rng = substream(seed, streams::LTS);
    let mut singular = 0;
    let mut pool: Vec<Candidate> = Vec::with_capacity(settings.n_subsets);
    'subsets: for order in 0..settings.n_subsets {
        let start = draw_subset(&mut rng, n, k + 1);
        let Some(theta) = ols(x, y, Some(&start), None, true) else {
            singular += 1;
            continue;
        };
        let (subset, objective) = prob.evaluate(&theta);
        let mut cand = Candidate {
            theta,
            subset,
            objective,
            order,
        };
        for _ in 0..settings.initial_csteps {
            match prob.c_step(&cand) {
                Some(next) => cand = next,
                None => {
                    singular += 1;
                    continue 'subsets;
                }
            }
        }
        pool.push(cand);
    }
    if pool.is_empty() {
        return Err(FitError::Rank { method });
    }
    pool.sort_by(|a, b| a.objective.total_cmp(&b.objective).then(a.order.cmp(&b.order)));
    pool.truncate(settings.n_keep.max(1));

    let mut finals = Vec::with_capacity(pool.len());
    for mut cand in pool {
        let mut converged = false;
        for _ in 0..settings.max_csteps {
            let Some(next) = prob.c_step(&cand) else {
                break;
            };
            let fixed = next.subset == cand.subset || next.objective >= cand.objective;
            let improved = next.objective < cand.objective;
            if improved || next.subset == cand.subset {
                cand = next;
            }
            if fixed {
                converged = true;
                break;
            }
        }
        finals.push((cand, converged));
    }
    let (best, converged) = finals
        .into_iter()
        .min_by(|(a, _), (b, _)| a.objective.total_cmp(&b.objective).then(a.order.cmp(&b.order)))
        .expect("nonempty pool");

    let (intercept, coefficients) = split_theta(best.theta);
    let mut residuals = Vec::with_capacity(n);
    residuals_into(x, y, intercept, &coefficients, &mut residuals);
    let all_zero = residuals.iter().all(|r| *r == 0.0);
    let mut weights = vec![0.0; n];
    for &i in &best.subset {
        weights[i] = 1.0;
    }
    if all_zero {
        weights.fill(1.0);
    }
    let sigma0 = initial_scale(&residuals);
    let reweighting = lts_reweight_unchecked(&residuals, sigma0, settings.alpha, scale);
    Ok(RobustFit {
        method,
        intercept,
        coefficients,
        weights,
        scale: reweighting.sigma,
        objective: best.objective,
        converged,
        reweighting: Some(reweighting),
        singular_subsets: singular,
        residuals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1, Array2};

    #[test]
    fn intercept_only_enumeration_example() {
        let x = Array2::<f64>::zeros((4, 0));
        let y = array![0.0, 0.0, 0.0, 10.0];
        let s = LtsSettings {
            alpha: 0.25,
            ..LtsSettings::default()
        };
        let fit = fit_lts(x.view(), y.view(), &s, &ScaleSettings::default(), 1).unwrap();
        assert_eq!(fit.intercept, 0.0);
        assert_eq!(fit.objective, 0.0);
        assert_eq!(fit.weights, vec![1.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn exact_line_recovered() {
        let x = Array2::from_shape_fn((15, 1), |(i, _)| i as f64 * 0.7 - 3.0);
        let mut y = x.column(0).mapv(|v| 1.0 + 2.0 * v);
        let fit = fit_lts(x.view(), y.view(), &LtsSettings::default(), &ScaleSettings::default(), 3)
            .unwrap();
        assert!((fit.intercept - 1.0).abs() < 1e-10);
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-10);
        assert!(fit.objective < 1e-20);
        // one gross error leaves at least h points on the line
        y[4] += 50.0;
        let fit = fit_lts(x.view(), y.view(), &LtsSettings::default(), &ScaleSettings::default(), 3)
            .unwrap();
        assert!((fit.coefficients[0] - 2.0).abs() < 1e-10);
        assert!(fit.objective < 1e-20);
        assert_eq!(fit.weights[4], 0.0);
        assert_eq!(fit.weights.iter().sum::<f64>(), 14.0);
    }

    #[test]
    fn argument_errors() {
        let x = Array2::<f64>::zeros((3, 3));
        let y = Array1::zeros(3);
        let e = fit_lts(x.view(), y.view(), &LtsSettings::default(), &ScaleSettings::default(), 0);
        assert!(matches!(e, Err(FitError::Argument { .. })));
        let x = Array2::<f64>::zeros((10, 2));
        let y = Array1::from_shape_fn(10, |i| i as f64);
        let e = fit_lts(x.view(), y.view(), &LtsSettings::default(), &ScaleSettings::default(), 0);
        assert!(matches!(e, Err(FitError::Rank { .. })));
    }

    #[test]
    fn trimmed_objective_sums_smallest() {
        assert_eq!(trimmed_objective(&[3.0, -1.0, 2.0, 0.0], 2), 1.0);
        assert_eq!(concentrate(&[1.0, -1.0, 1.0, 0.0], 2).0, vec![0, 3]);
    }
}
