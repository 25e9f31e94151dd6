//! Order statistics and normal-distribution helpers shared across modules.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

/// Φ⁻¹(0.75), the MAD normal-consistency constant.
pub const PHI_INV_075: f64 = 0.674_489_750_196_081_7;
/// Φ⁻¹(0.995), the two-sided 1% flag threshold.
pub const PHI_INV_0995: f64 = 2.575_829_303_548_900_4;
/// √χ²₁(0.975), the univariate robust-distance cutoff.
pub const SQRT_CHI2_1_0975: f64 = 2.241_402_727_604_947_3;

fn cmp_f64(a: &f64, b: &f64) -> std::cmp::Ordering {
    a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal)
}

/// Median of `values`, reordering the slice in place. Even lengths average
/// the two middle order statistics. Returns 0 for an empty slice.
pub fn median_in_place(values: &mut [f64]) -> f64 {
    let n = values.len();
    if n == 0 {
        return 0.0;
    }
    let mid = n / 2;
    let (lower, upper, _) = values.select_nth_unstable_by(mid, cmp_f64);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut buf = values.to_vec();
    median_in_place(&mut buf)
}

/// Raw median absolute deviation about the median (no consistency factor).
pub fn mad_raw(values: &[f64]) -> (f64, f64) {
    let mut buf = values.to_vec();
    let center = median_in_place(&mut buf);
    for (b, v) in buf.iter_mut().zip(values) {
        *b = (v - center).abs();
    }
    (center, median_in_place(&mut buf))
}

/// Median and normal-consistent MAD (`MAD / Φ⁻¹(0.75)`).
pub fn median_and_mad(values: &[f64]) -> (f64, f64) {
    let (center, mad) = mad_raw(values);
    (center, mad / PHI_INV_075)
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

pub fn normal_cdf(x: f64) -> f64 {
    std_normal().cdf(x)
}

pub fn normal_pdf(x: f64) -> f64 {
    std_normal().pdf(x)
}

pub fn normal_quantile(p: f64) -> f64 {
    std_normal().inverse_cdf(p)
}

/// `⌈frac · n⌉`, treating products within 1e-9 of an integer as exact so
/// that e.g. `0.1 · 30` gives 3 rather than 4.
pub fn ceil_count(frac: f64, n: usize) -> usize {
    let v = frac * n as f64;
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r as usize
    } else {
        v.ceil() as usize
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation with `n - 1` denominator; 0 for fewer than two values.
pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}
