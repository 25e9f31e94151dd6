use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use robout::pipeline::{detect, PipelineSettings, Variant};
use robout::regress::{fit_robust, RegressorKind, RegressorSettings};
use robout::rng::substream;
use robout::{flag_outliers, Dataset, RoboutVariant};

fn instance(seed: u64, n: usize, k: usize) -> (Array2<f64>, Array1<f64>) {
    let mut rng = substream(seed, 0);
    let x = Array2::from_shape_fn((n, k), |_| rng.sample::<f64, _>(StandardNormal));
    let y = Array1::from_shape_fn(n, |i| {
        let e: f64 = rng.sample(StandardNormal);
        let spread = if i % 10 == 0 { 6.0 } else { 1.0 };
        1.0 + x.row(i).iter().enumerate().map(|(j, v)| (j as f64 + 2.0) * v).sum::<f64>() + spread * e
    });
    (x, y)
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * (1.0 + a.abs().max(b.abs()))
}

#[test]
fn regression_equivariance() {
    let settings = RegressorSettings::default();
    for kind in RegressorKind::ALL {
        for seed in 0..50 {
            let mut rng = substream(seed, 9);
            let k = 1 + seed as usize % 3;
            let (x, y) = instance(seed, 40, k);
            let v: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
            let c: f64 = rng.random_range(-5.0..5.0);
            let shifted = Array1::from_shape_fn(y.len(), |i| {
                y[i] + c + x.row(i).iter().zip(&v).map(|(a, b)| a * b).sum::<f64>()
            });
            let a = fit_robust(kind, x.view(), y.view(), &settings, seed).unwrap();
            let b = fit_robust(kind, x.view(), shifted.view(), &settings, seed).unwrap();
            for j in 0..k {
                assert!(
                    close(b.coefficients[j], a.coefficients[j] + v[j]),
                    "{kind:?} seed {seed}: {} vs {}",
                    b.coefficients[j],
                    a.coefficients[j] + v[j]
                );
            }
            assert!(close(b.intercept, a.intercept + c), "{kind:?} seed {seed}");
            assert!(close(b.scale, a.scale), "{kind:?} seed {seed}");
        }
    }
}

#[test]
fn scale_equivariance() {
    let settings = RegressorSettings::default();
    for kind in RegressorKind::ALL {
        for seed in 0..50 {
            let (x, y) = instance(seed + 100, 40, 2);
            let s = 0.1 + seed as f64 * 0.37;
            let scaled = y.mapv(|v| s * v);
            let a = fit_robust(kind, x.view(), y.view(), &settings, seed).unwrap();
            let b = fit_robust(kind, x.view(), scaled.view(), &settings, seed).unwrap();
            for j in 0..2 {
                assert!(close(b.coefficients[j], s * a.coefficients[j]), "{kind:?} seed {seed}");
            }
            assert!(close(b.intercept, s * a.intercept), "{kind:?} seed {seed}");
            assert!(close(b.scale, s * a.scale), "{kind:?} seed {seed}");
        }
    }
}

#[test]
fn flags_invariant_under_affine_response_maps() {
    let settings = PipelineSettings::default();
    for seed in 0..50u64 {
        let mut rng = substream(seed, 3);
        let n = 60;
        let p = 12;
        let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
        let y = Array1::from_shape_fn(n, |i| {
            let e: f64 = rng.sample(StandardNormal);
            let spread = if i % 10 == 3 { 8.0 } else { 1.0 };
            4.0 * x[[i, 1]] - 3.0 * x[[i, 5]] + spread * e
        });
        let a: f64 = rng.random_range(0.2..20.0);
        let b: f64 = rng.random_range(-50.0..50.0);
        let d = Dataset::new(y.clone(), x.clone(), None).unwrap();
        let d2 = Dataset::new(y.mapv(|v| a * v + b), x, None).unwrap();
        let variant = Variant::ALL[seed as usize % 6];
        let rv = RoboutVariant {
            variant,
            k: 2,
            alpha: 0.1,
            seed,
        };
        let o1 = detect(&d, rv, &settings).unwrap();
        let o2 = detect(&d2, rv, &settings).unwrap();
        assert_eq!(o1.selection.support, o2.selection.support, "seed {seed}");
        assert_eq!(o1.report.flagged_indices, o2.report.flagged_indices, "{variant} seed {seed}");
    }
}

#[test]
fn report_recomputes_from_stored_fit() {
    let (x, y) = instance(5, 50, 3);
    let mut rng = substream(5, 1);
    let wide = Array2::from_shape_fn((50, 8), |(i, j)| {
        if j < 3 {
            x[[i, j]]
        } else {
            rng.sample::<f64, _>(StandardNormal)
        }
    });
    let d = Dataset::new(y, wide, None).unwrap();
    for variant in Variant::ALL {
        let o = detect(
            &d,
            RoboutVariant { variant, k: 3, alpha: 0.1, seed: 2 },
            &PipelineSettings::default(),
        )
        .unwrap();
        assert_eq!(flag_outliers(&o.fit.residuals, o.fit.scale), o.report);
        let xd = d.select_columns(&o.selection.support);
        let r = o.fit.recompute_residuals(xd.view(), d.y());
        for (p, q) in r.iter().zip(&o.fit.residuals) {
            assert!((p - q).abs() < 1e-9);
        }
    }
}
