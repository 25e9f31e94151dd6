//! Small dense least-squares solves (Householder QR) for the robust fitters.

use ndarray::{ArrayView1, ArrayView2};

const RANK_TOL: f64 = 1e-10;

/// Solves `min ||A β - b||` for a column-major `m × k` matrix `a`
/// (overwritten). Returns `None` when a column is numerically dependent on
/// the preceding ones.
pub fn householder_lstsq(a: &mut [f64], m: usize, k: usize, b: &mut [f64]) -> Option<Vec<f64>> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m);
    if k == 0 {
        return Some(Vec::new());
    }
    if m < k {
        return None;
    }
    let mut diag = vec![0.0; k];
    for j in 0..k {
        let (done, rest) = a.split_at_mut(j * m);
        let _ = done;
        let col = &mut rest[..m];
        let orig_norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        let tail_norm = col[j..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if orig_norm == 0.0 || tail_norm <= RANK_TOL * orig_norm {
            return None;
        }
        let alpha = if col[j] > 0.0 { -tail_norm } else { tail_norm };
        // v = x - alpha e_j, stored in col[j..]
        col[j] -= alpha;
        let vnorm2: f64 = col[j..].iter().map(|v| v * v).sum();
        diag[j] = alpha;
        if vnorm2 == 0.0 {
            continue;
        }
        let v: Vec<f64> = col[j..].to_vec();
        for c in (j + 1)..k {
            let other = &mut a[c * m + j..(c + 1) * m];
            let dot: f64 = v.iter().zip(other.iter()).map(|(p, q)| p * q).sum();
            let f = 2.0 * dot / vnorm2;
            for (o, vi) in other.iter_mut().zip(&v) {
                *o -= f * vi;
            }
        }
        let dot: f64 = v.iter().zip(&b[j..]).map(|(p, q)| p * q).sum();
        let f = 2.0 * dot / vnorm2;
        for (o, vi) in b[j..].iter_mut().zip(&v) {
            *o -= f * vi;
        }
    }
    // back substitution with R (diag + upper entries of a)
    let mut beta = vec![0.0; k];
    for j in (0..k).rev() {
        let mut s = b[j];
        for c in (j + 1)..k {
            s -= a[c * m + j] * beta[c];
        }
        beta[j] = s / diag[j];
    }
    if beta.iter().all(|v| v.is_finite()) {
        Some(beta)
    } else {
        None
    }
}

/// Least squares of `y` on `[1, x]` (or `x` alone when `intercept` is false),
/// restricted to `rows` when given, with optional per-row weights.
/// Returns the parameter vector with the intercept first.
pub fn ols(
    x: ArrayView2<'_, f64>,
    y: ArrayView1<'_, f64>,
    rows: Option<&[usize]>,
    weights: Option<&[f64]>,
    intercept: bool,
) -> Option<Vec<f64>> {
    let all: Vec<usize>;
    let rows = match rows {
        Some(r) => r,
        None => {
            all = (0..x.nrows()).collect();
            &all
        }
    };
    let m = rows.len();
    let off = usize::from(intercept);
    let k = x.ncols() + off;
    let mut a = vec![0.0; m * k];
    let mut b = vec![0.0; m];
    for (r, &i) in rows.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i].max(0.0).sqrt());
        if intercept {
            a[r] = w;
        }
        for j in 0..x.ncols() {
            a[(j + off) * m + r] = w * x[[i, j]];
        }
        b[r] = w * y[i];
    }
    householder_lstsq(&mut a, m, k, &mut b)
}
