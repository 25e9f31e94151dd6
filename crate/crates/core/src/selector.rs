//! Penalized robust regression over a penalty path and top-K support
//! extraction.
//!
//! The path minimizes, for each `λ` on a decreasing grid,
//!
//! ```text
//! (1/n) Σᵢ ρ(yᵢ - β₀ - xᵢᵀβ) + λ (a ‖β‖₁ + (1 - a)/2 ‖β‖²)
//! ```
//!
//! with `ρ` the Huber loss or the check loss at `τ`, by cyclic coordinate
//! descent. Each coordinate (and the unpenalized intercept) is minimized
//! exactly with a bracketed Newton iteration on its piecewise-smooth
//! derivative, so every accepted update satisfies the coordinate-wise
//! optimality condition. The check loss is replaced by a Huberized version
//! of half-width `quantile_smoothing`; its ψ is a valid subgradient of the
//! check loss everywhere outside that band.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::linalg::householder_lstsq;
use crate::loss::{LossKind, LossSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("invalid penalty grid: {0}")]
    InvalidGrid(String),
    #[error("loss {0:?} is not supported by the selector")]
    UnsupportedLoss(LossKind),
    #[error("response is constant after excluding degenerate columns; selection is impossible")]
    Degenerate,
    #[error("invalid target size K = {k}: {reason}")]
    InvalidK { k: usize, reason: String },
    #[error("no path point reached {k} active coefficients (largest active set {max_active}); use a longer or denser penalty grid")]
    TargetNotReached { k: usize, max_active: usize },
}

/// Decreasing penalty grid plus the L1 mixing weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    pub lambda_grid: Vec<f64>,
    pub enet_alpha: f64,
    /// Set when `λ_max = 0`; the grid then holds the single point 0.
    pub degenerate: bool,
}

impl PenaltySpec {
    pub fn new(lambda_grid: Vec<f64>, enet_alpha: f64) -> Result<Self, SelectionError> {
        if lambda_grid.len() < 2 {
            return Err(SelectionError::InvalidGrid(format!(
                "need at least 2 values, got {}",
                lambda_grid.len()
            )));
        }
        if lambda_grid.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(SelectionError::InvalidGrid("values must be positive".into()));
        }
        if lambda_grid.windows(2).any(|w| w[1] >= w[0]) {
            return Err(SelectionError::InvalidGrid(
                "values must be strictly decreasing".into(),
            ));
        }
        if !(enet_alpha > 0.0 && enet_alpha <= 1.0) {
            return Err(SelectionError::InvalidGrid(format!(
                "enet_alpha {enet_alpha} outside (0, 1]"
            )));
        }
        Ok(Self {
            lambda_grid,
            enet_alpha,
            degenerate: false,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathOptions {
    /// Convergence threshold on the largest coordinate update of a full sweep.
    pub tol: f64,
    /// A point also counts as converged once its KKT residual is below this.
    pub kkt_tol: f64,
    pub max_sweeps: usize,
    /// Half-width of the quadratic band replacing the check-loss kink.
    pub quantile_smoothing: f64,
    /// Columns held at zero (degenerate after standardization).
    pub excluded: Vec<usize>,
    /// Stop the path after the first point with at least this many actives.
    pub stop_at_active: Option<usize>,
}

impl Default for PathOptions {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            kkt_tol: 1e-7,
            max_sweeps: 10_000,
            quantile_smoothing: 1e-3,
            excluded: Vec::new(),
            stop_at_active: None,
        }
    }
}

/// Coefficient path over the penalty grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PenalizedFit {
    pub loss: LossSpec,
    pub enet_alpha: f64,
    pub quantile_smoothing: f64,
    pub lambdas: Vec<f64>,
    pub intercept_path: Vec<f64>,
    pub coef_path: Vec<Vec<f64>>,
    pub active_sizes: Vec<usize>,
    pub converged: Vec<bool>,
    pub kkt_residuals: Vec<f64>,
    pub sweeps: Vec<usize>,
    pub excluded: Vec<usize>,
}

impl PenalizedFit {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn all_converged(&self) -> bool {
        self.converged.iter().all(|c| *c)
    }
}

/// The chosen support and where on the path it was read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// Selected column indices, ascending.
    pub support: Vec<usize>,
    pub loss_kind: LossKind,
    pub lambda_used: f64,
    pub lambda_index: usize,
    pub dropped_degenerates: Vec<usize>,
}

/// The loss the solver actually differentiates.
#[derive(Debug, Clone, Copy)]
pub(crate) enum WorkingLoss {
    Huber(f64),
    Quantile { tau: f64, delta: f64 },
}

impl WorkingLoss {
    pub(crate) fn new(loss: &LossSpec, smoothing: f64) -> Result<Self, SelectionError> {
        match loss.kind {
            LossKind::Huber => Ok(WorkingLoss::Huber(loss.tuning)),
            LossKind::Quantile => Ok(WorkingLoss::Quantile {
                tau: loss.tuning,
                delta: smoothing,
            }),
            other => Err(SelectionError::UnsupportedLoss(other)),
        }
    }

    #[inline]
    pub(crate) fn value(self, t: f64) -> f64 {
        match self {
            WorkingLoss::Huber(g) => {
                let a = t.abs();
                if a <= g {
                    0.5 * t * t
                } else {
                    g * a - 0.5 * g * g
                }
            }
            WorkingLoss::Quantile { tau, delta } => {
                if t >= delta {
                    tau * t - 0.25 * delta
                } else if t <= -delta {
                    (tau - 1.0) * t - 0.25 * delta
                } else {
                    (tau - 0.5) * t + t * t / (4.0 * delta)
                }
            }
        }
    }

    #[inline]
    pub(crate) fn psi(self, t: f64) -> f64 {
        match self {
            WorkingLoss::Huber(g) => t.clamp(-g, g),
            WorkingLoss::Quantile { tau, delta } => {
                if t >= delta {
                    tau
                } else if t <= -delta {
                    tau - 1.0
                } else {
                    tau - 0.5 + t / (2.0 * delta)
                }
            }
        }
    }

    #[inline]
    fn dpsi(self, t: f64) -> f64 {
        match self {
            WorkingLoss::Huber(g) => {
                if t.abs() <= g {
                    1.0
                } else {
                    0.0
                }
            }
            WorkingLoss::Quantile { delta, .. } => {
                if t.abs() < delta {
                    1.0 / (2.0 * delta)
                } else {
                    0.0
                }
            }
        }
    }
}

/// Exact minimizer over `b` of
/// `(1/n) Σ ρ(rᵢ - xᵢ (b - current)) + l1 |b| + l2 b² / 2`,
/// where `r` are the residuals at `b = current`.
fn coordinate_minimizer(
    loss: WorkingLoss,
    x: &[f64],
    r: &[f64],
    current: f64,
    l1: f64,
    l2: f64,
) -> f64 {
    let inv_n = 1.0 / r.len() as f64;
    // derivative of the smooth part and its slope at b
    let eval = |b: f64| -> (f64, f64) {
        let shift = b - current;
        let mut g = 0.0;
        let mut h = 0.0;
        for (xi, ri) in x.iter().zip(r) {
            let t = ri - xi * shift;
            g -= loss.psi(t) * xi;
            h += loss.dpsi(t) * xi * xi;
        }
        (g * inv_n + l2 * b, h * inv_n + l2)
    };
    let (g0, _) = eval(0.0);
    // relative slack keeps rounding at the λ_max boundary from activating a coordinate
    if g0.abs() <= l1 * (1.0 + 1e-10) {
        return 0.0;
    }
    let s = if g0 < -l1 { 1.0 } else { -1.0 };
    // h(u) = s·(F(s u) + s l1) is nondecreasing with h(0) < 0
    let mut lo = 0.0_f64;
    let mut hi = f64::INFINITY;
    let mut u = if s * current > 0.0 { s * current } else { 0.0 };
    for _ in 0..200 {
        let (f, df) = eval(s * u);
        let h = s * f + l1;
        if h == 0.0 {
            break;
        }
        if h < 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        if hi.is_finite() && hi - lo <= 1e-15 * (1.0 + hi.abs()) {
            u = 0.5 * (lo + hi);
            break;
        }
        let mut next = if df > 0.0 { u - h / df } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = if hi.is_finite() {
                0.5 * (lo + hi)
            } else if lo > 0.0 {
                2.0 * lo
            } else {
                1.0
            };
        }
        if (next - u).abs() <= 1e-14 * (1.0 + u.abs()) {
            u = next;
            break;
        }
        u = next;
    }
    s * u
}

struct PathState<'a> {
    loss: WorkingLoss,
    /// column-major copy: row j holds column j
    cols: Array2<f64>,
    y: ArrayView1<'a, f64>,
    eligible: Vec<usize>,
    intercept: f64,
    beta: Vec<f64>,
    resid: Vec<f64>,
    damping: f64,
}

impl<'a> PathState<'a> {
    fn new(
        x: ArrayView2<'a, f64>,
        y: ArrayView1<'a, f64>,
        loss: WorkingLoss,
        excluded: &[usize],
    ) -> Self {
        let cols = x.t().as_standard_layout().to_owned();
        let eligible = (0..x.ncols()).filter(|j| !excluded.contains(j)).collect();
        Self {
            loss,
            cols,
            y,
            eligible,
            intercept: 0.0,
            beta: vec![0.0; x.ncols()],
            resid: y.to_vec(),
            damping: 1e-3,
        }
    }

    fn update_intercept(&mut self) -> f64 {
        let ones = vec![1.0; self.resid.len()];
        let d = coordinate_minimizer(self.loss, &ones, &self.resid, 0.0, 0.0, 0.0);
        if d != 0.0 {
            self.intercept += d;
            self.resid.iter_mut().for_each(|r| *r -= d);
        }
        d.abs()
    }

    fn sweep(&mut self, cols: &[usize], l1: f64, l2: f64) -> f64 {
        let mut max_change = self.update_intercept();
        for &j in cols {
            let xj = self.cols.row(j);
            let xj = xj.as_slice().expect("contiguous column");
            let old = self.beta[j];
            let new = coordinate_minimizer(self.loss, xj, &self.resid, old, l1, l2);
            if new != old {
                let d = new - old;
                self.resid
                    .iter_mut()
                    .zip(xj)
                    .for_each(|(r, x)| *r -= x * d);
                self.beta[j] = new;
                max_change = max_change.max(d.abs());
            }
        }
        max_change
    }

    fn objective_along(&self, active: &[usize], dir: &[f64], zd: &[f64], t: f64, l1: f64, l2: f64) -> f64 {
        let n = self.resid.len() as f64;
        let fit: f64 = self
            .resid
            .iter()
            .zip(zd)
            .map(|(r, z)| self.loss.value(r - t * z))
            .sum();
        let pen: f64 = active
            .iter()
            .zip(&dir[1..])
            .map(|(&j, d)| {
                let b = self.beta[j] + t * d;
                l1 * b.abs() + 0.5 * l2 * b * b
            })
            .sum();
        fit / n + pen
    }

    /// Damped Newton step on the intercept and the active coefficients with
    /// their signs held fixed. Steps stop at the first coefficient that
    /// reaches zero. Returns the largest update, or `None` when no descent
    /// is found even under heavy damping.
    fn newton_step(&mut self, active: &[usize], l1: f64, l2: f64) -> Option<f64> {
        let (step, damping) = self.newton_search(active, l1, l2);
        self.damping = damping;
        let (dir, t, hits) = step?;
        self.intercept += t * dir[0];
        let mut change = (t * dir[0]).abs();
        for (a, &j) in active.iter().enumerate() {
            self.beta[j] += t * dir[a + 1];
            change = change.max((t * dir[a + 1]).abs());
        }
        if let Some(a) = hits {
            self.beta[active[a]] = 0.0;
        }
        // residuals from scratch keep drift out of long paths
        for i in 0..self.resid.len() {
            let fit: f64 = active.iter().map(|&j| self.cols[[j, i]] * self.beta[j]).sum();
            self.resid[i] = self.y[i] - self.intercept - fit;
        }
        Some(change)
    }

    /// Direction, accepted step length and the coefficient that reaches
    /// zero at that length, plus the updated damping.
    #[allow(clippy::type_complexity)]
    fn newton_search(&self, active: &[usize], l1: f64, l2: f64) -> (Option<(Vec<f64>, f64, Option<usize>)>, f64) {
        let n = self.resid.len();
        let q = active.len() + 1;
        let inv_n = 1.0 / n as f64;
        let psi: Vec<f64> = self.resid.iter().map(|r| self.loss.psi(*r)).collect();
        let curv: Vec<f64> = self.resid.iter().map(|r| self.loss.dpsi(*r)).collect();
        let col = |c: usize, i: usize| -> f64 {
            if c == 0 {
                1.0
            } else {
                self.cols[[active[c - 1], i]]
            }
        };
        let mut grad = vec![0.0; q];
        let mut hess = vec![0.0; q * q];
        let mut moments = vec![0.0; q];
        for a in 0..q {
            let mut g = 0.0;
            let mut m2 = 0.0;
            for i in 0..n {
                let v = col(a, i);
                g -= psi[i] * v;
                m2 += v * v;
            }
            grad[a] = g * inv_n;
            moments[a] = (m2 * inv_n).max(f64::MIN_POSITIVE);
            if a > 0 {
                let b = self.beta[active[a - 1]];
                grad[a] += l1 * b.signum() + l2 * b;
            }
            for c in 0..=a {
                let mut h = 0.0;
                for i in 0..n {
                    if curv[i] != 0.0 {
                        h += curv[i] * col(a, i) * col(c, i);
                    }
                }
                h *= inv_n;
                if a == c && a > 0 {
                    h += l2;
                }
                hess[c * q + a] = h;
                hess[a * q + c] = h;
            }
        }
        let zero_q = vec![0.0; q];
        let zero_n = vec![0.0; n];
        let f0 = self.objective_along(active, &zero_q, &zero_n, 0.0, l1, l2);
        // Levenberg damping relative to each column's second moment, raised
        // until the damped step descends
        let mut damping = self.damping;
        for _ in 0..12 {
            let mut h = hess.clone();
            for a in 0..q {
                h[a * q + a] += damping * moments[a];
            }
            let mut rhs: Vec<f64> = grad.iter().map(|g| -g).collect();
            let Some(dir) = householder_lstsq(&mut h, q, q, &mut rhs) else {
                damping = (damping * 10.0).min(1e8);
                continue;
            };
            let slope: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum();
            if !(slope < 0.0) {
                damping = (damping * 10.0).min(1e8);
                continue;
            }
            let zd: Vec<f64> = (0..n)
                .map(|i| (0..q).map(|c| col(c, i) * dir[c]).sum())
                .collect();
            let mut t_max = 1.0_f64;
            let mut hits = None;
            for (a, &j) in active.iter().enumerate() {
                let (b, d) = (self.beta[j], dir[a + 1]);
                if b * d < 0.0 && -b / d < t_max {
                    t_max = -b / d;
                    hits = Some(a);
                }
            }
            let mut t = t_max;
            for _ in 0..30 {
                if self.objective_along(active, &dir, &zd, t, l1, l2) <= f0 + 1e-4 * t * slope {
                    let full = t == t_max;
                    damping = if full {
                        (damping * 0.1).max(1e-12)
                    } else {
                        (damping * 10.0).min(1e8)
                    };
                    return (Some((dir, t, hits.filter(|_| full))), damping);
                }
                t *= 0.5;
            }
            damping = (damping * 10.0).min(1e8);
        }
        (None, damping)
    }

    fn solve(&mut self, lambda: f64, enet_alpha: f64, opts: &PathOptions) -> (bool, usize) {
        let l1 = lambda * enet_alpha;
        let l2 = lambda * (1.0 - enet_alpha);
        let eligible = self.eligible.clone();
        let mut sweeps = 0;
        loop {
            let change = self.sweep(&eligible, l1, l2);
            sweeps += 1;
            if change <= opts.tol {
                return (true, sweeps);
            }
            if sweeps >= opts.max_sweeps {
                return (false, sweeps);
            }
            loop {
                let active: Vec<usize> = eligible
                    .iter()
                    .copied()
                    .filter(|&j| self.beta[j] != 0.0)
                    .collect();
                let change = match self.newton_step(&active, l1, l2) {
                    Some(c) => c,
                    None => self.sweep(&active, l1, l2),
                };
                sweeps += 1;
                if change <= opts.tol || sweeps >= opts.max_sweeps {
                    break;
                }
            }
            if self.kkt_residual(lambda, enet_alpha) <= opts.kkt_tol {
                return (true, sweeps);
            }
            if sweeps >= opts.max_sweeps {
                return (false, sweeps);
            }
        }
    }

    fn kkt_residual(&self, lambda: f64, enet_alpha: f64) -> f64 {
        let n = self.resid.len() as f64;
        let psi: Vec<f64> = self.resid.iter().map(|r| self.loss.psi(*r)).collect();
        let mut worst = (psi.iter().sum::<f64>() / n).abs();
        for &j in &self.eligible {
            let g: f64 = self
                .cols
                .row(j)
                .iter()
                .zip(&psi)
                .map(|(x, p)| x * p)
                .sum::<f64>()
                / n;
            let b = self.beta[j];
            let v = if b != 0.0 {
                (g - lambda * enet_alpha * b.signum() - lambda * (1.0 - enet_alpha) * b).abs()
            } else {
                (g.abs() - lambda * enet_alpha).max(0.0)
            };
            worst = worst.max(v);
        }
        worst
    }
}

/// Value of the penalized objective for the working loss.
pub fn penalized_objective(
    d: &Dataset,
    loss: &LossSpec,
    quantile_smoothing: f64,
    lambda: f64,
    enet_alpha: f64,
    intercept: f64,
    coefs: &[f64],
) -> Result<f64, SelectionError> {
    let w = WorkingLoss::new(loss, quantile_smoothing)?;
    let x = d.x();
    let y = d.y();
    let n = d.n() as f64;
    let mut total = 0.0;
    for i in 0..d.n() {
        let fit: f64 = x.row(i).iter().zip(coefs).map(|(a, b)| a * b).sum();
        total += w.value(y[i] - intercept - fit);
    }
    let l1: f64 = coefs.iter().map(|b| b.abs()).sum();
    let l2: f64 = coefs.iter().map(|b| b * b).sum();
    Ok(total / n + lambda * (enet_alpha * l1 + 0.5 * (1.0 - enet_alpha) * l2))
}

/// Fits the penalized path with warm starts from the largest `λ` down.
pub fn fit_penalized_path(
    d: &Dataset,
    loss: &LossSpec,
    pen: &PenaltySpec,
    opts: &PathOptions,
) -> Result<PenalizedFit, SelectionError> {
    if pen.degenerate {
        return Err(SelectionError::Degenerate);
    }
    if pen.lambda_grid.is_empty() {
        return Err(SelectionError::InvalidGrid("empty grid".into()));
    }
    let working = WorkingLoss::new(loss, opts.quantile_smoothing)?;
    let mut state = PathState::new(d.x(), d.y(), working, &opts.excluded);
    let mut fit = PenalizedFit {
        loss: *loss,
        enet_alpha: pen.enet_alpha,
        quantile_smoothing: opts.quantile_smoothing,
        lambdas: Vec::new(),
        intercept_path: Vec::new(),
        coef_path: Vec::new(),
        active_sizes: Vec::new(),
        converged: Vec::new(),
        kkt_residuals: Vec::new(),
        sweeps: Vec::new(),
        excluded: opts.excluded.clone(),
    };
    for &lambda in &pen.lambda_grid {
        let (converged, sweeps) = state.solve(lambda, pen.enet_alpha, opts);
        let active = state.beta.iter().filter(|b| **b != 0.0).count();
        fit.lambdas.push(lambda);
        fit.intercept_path.push(state.intercept);
        fit.coef_path.push(state.beta.clone());
        fit.active_sizes.push(active);
        fit.converged.push(converged);
        fit.kkt_residuals
            .push(state.kkt_residual(lambda, pen.enet_alpha));
        fit.sweeps.push(sweeps);
        if opts.stop_at_active.is_some_and(|k| active >= k) {
            break;
        }
    }
    let _ = state.y;
    Ok(fit)
}

/// Geometric grid from `λ_max` (the smallest penalty whose solution is all
/// zeros) down to `ratio · λ_max`.
pub fn default_lambda_grid(
    d: &Dataset,
    loss: &LossSpec,
    length: usize,
    ratio: f64,
    enet_alpha: f64,
    opts: &PathOptions,
) -> Result<PenaltySpec, SelectionError> {
    if length < 2 {
        return Err(SelectionError::InvalidGrid(format!("length {length} < 2")));
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(SelectionError::InvalidGrid(format!("ratio {ratio} outside (0, 1)")));
    }
    let lambda_max = lambda_max(d, loss, enet_alpha, opts)?;
    if !(lambda_max > 0.0) {
        return Ok(PenaltySpec {
            lambda_grid: vec![0.0],
            enet_alpha,
            degenerate: true,
        });
    }
    let step = ratio.ln() / (length - 1) as f64;
    let mut grid: Vec<f64> = (0..length)
        .map(|i| lambda_max * (step * i as f64).exp())
        .collect();
    grid[0] = lambda_max;
    PenaltySpec::new(grid, enet_alpha)
}

/// `max_j |Σᵢ ψ(yᵢ - β₀*) xᵢⱼ| / (n a)` with `β₀*` the unpenalized location.
pub fn lambda_max(
    d: &Dataset,
    loss: &LossSpec,
    enet_alpha: f64,
    opts: &PathOptions,
) -> Result<f64, SelectionError> {
    let working = WorkingLoss::new(loss, opts.quantile_smoothing)?;
    let mut state = PathState::new(d.x(), d.y(), working, &opts.excluded);
    state.update_intercept();
    let n = d.n() as f64;
    let psi: Vec<f64> = state.resid.iter().map(|r| working.psi(*r)).collect();
    let mut best = 0.0_f64;
    for &j in &state.eligible {
        let g: f64 = state
            .cols
            .row(j)
            .iter()
            .zip(&psi)
            .map(|(x, p)| x * p)
            .sum::<f64>();
        best = best.max(g.abs() / n);
    }
    Ok(best / enet_alpha)
}

/// Reads the support at the first (largest) `λ` with at least `k` active
/// coefficients, keeping the `k` largest magnitudes (ties to the lower index).
pub fn select_top_k(fit: &PenalizedFit, k: usize) -> Result<SelectionResult, SelectionError> {
    let p = fit.coef_path.first().map_or(0, Vec::len);
    let available = p.saturating_sub(fit.excluded.len());
    if k == 0 || k > available {
        return Err(SelectionError::InvalidK {
            k,
            reason: format!("must be between 1 and {available}"),
        });
    }
    let idx = fit
        .active_sizes
        .iter()
        .position(|&a| a >= k)
        .ok_or(SelectionError::TargetNotReached {
            k,
            max_active: fit.active_sizes.iter().copied().max().unwrap_or(0),
        })?;
    let coefs = &fit.coef_path[idx];
    let mut order: Vec<usize> = (0..p).filter(|j| coefs[*j] != 0.0).collect();
    order.sort_by(|&a, &b| {
        coefs[b]
            .abs()
            .partial_cmp(&coefs[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut support: Vec<usize> = order.into_iter().take(k).collect();
    support.sort_unstable();
    Ok(SelectionResult {
        support,
        loss_kind: fit.loss.kind,
        lambda_used: fit.lambdas[idx],
        lambda_index: idx,
        dropped_degenerates: fit.excluded.clone(),
    })
}
