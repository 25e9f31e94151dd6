//! Acceptance suite. Prints one PASS/FAIL line per criterion with the
//! measured values and exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::StandardNormal;
use robout::evaluation::{run_benchmark, BenchmarkResult, BenchmarkSpec, Metric};
use robout::linalg::ols;
use robout::loss::{LossKind, LossSpec};
use robout::pipeline::{detect, PipelineSettings, SelectorLoss, Variant};
use robout::regress::{fit_lts, fit_robust, trimmed_objective, LtsSettings, RegressorKind, RegressorSettings};
use robout::rng::substream;
use robout::scale::{initial_scale, lts_reweight, ScaleSettings};
use robout::selector::{default_lambda_grid, fit_penalized_path, PathOptions};
use robout::stats::ceil_count;
use robout::{scenario_preset, Dataset, RoboutVariant};

const REPLICATES: usize = 100;
const BASE_SEED: u64 = 1;
const M: f64 = 19.0;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

const H_LTS: Variant = Variant::new(SelectorLoss::Huber, RegressorKind::Lts);
const H_GS: Variant = Variant::new(SelectorLoss::Huber, RegressorKind::Gs);
const H_MM: Variant = Variant::new(SelectorLoss::Huber, RegressorKind::Mm);
const Q_MM: Variant = Variant::new(SelectorLoss::Quantile, RegressorKind::Mm);

/// Monte Carlo runs shared between criteria, keyed by scenario id.
struct MonteCarlo {
    runs: BTreeMap<&'static str, BenchmarkResult>,
}

impl MonteCarlo {
    fn run(plan: &[(&'static str, Vec<Variant>)]) -> Self {
        let settings = PipelineSettings::default();
        let mut runs = BTreeMap::new();
        for (id, variants) in plan {
            let t0 = Instant::now();
            let spec = BenchmarkSpec {
                scenario: scenario_preset(id).expect("preset"),
                variants: variants.clone(),
                m_grid: vec![M],
                replicates: REPLICATES,
                base_seed: BASE_SEED,
            };
            let result = run_benchmark(&spec, &settings).expect("benchmark runs");
            println!("  [scenario {id}: {} variants x {REPLICATES} replicates in {:.1}s]", variants.len(), t0.elapsed().as_secs_f64());
            runs.insert(*id, result);
        }
        Self { runs }
    }

    fn get(&self, id: &str) -> &BenchmarkResult {
        &self.runs[id]
    }
}

/// Mean and SD of a metric, plus the number of infeasible replicates.
fn moments(r: &BenchmarkResult, v: Variant, metric: Metric) -> (f64, f64, usize) {
    let cell = r.cell(v, M, metric).expect("cell");
    (cell.mean.unwrap_or(f64::NAN), cell.sd.unwrap_or(f64::NAN), cell.infeasible)
}

/// `|mean - target| <= max(0.05, 2 sd / sqrt(R))`.
fn near_target(r: &BenchmarkResult, v: Variant, metric: Metric, target: f64) -> (bool, String) {
    let (mean, sd, infeasible) = moments(r, v, metric);
    let tol = 0.05_f64.max(2.0 * sd / (REPLICATES as f64).sqrt());
    let ok = (mean - target).abs() <= tol;
    let text = format!(
        "{} {}={mean:.4} (sd {sd:.4}, target {target}, tol {tol:.4}{})",
        v.label(),
        metric.name(),
        if infeasible > 0 { format!(", {infeasible} infeasible") } else { String::new() }
    );
    (ok, text)
}

fn all_targets(r: &BenchmarkResult, checks: &[(Variant, Metric, f64)]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for &(v, metric, target) in checks {
        let (ok, text) = near_target(r, v, metric, target);
        pass &= ok;
        parts.push(text);
    }
    verdict(pass, parts.join("; "))
}

fn criterion_5(mc: &MonteCarlo) -> Verdict {
    let r = mc.get("3b");
    let mut pass = true;
    let mut parts = Vec::new();
    for v in Variant::ALL {
        let (mean, _, infeasible) = moments(r, v, Metric::Mr);
        pass &= mean <= 0.02 && infeasible < REPLICATES;
        parts.push(format!("{} mr={mean:.4}", v.label()));
    }
    verdict(pass, format!("bound 0.02: {}", parts.join(", ")))
}

fn criterion_6(mc: &MonteCarlo) -> Verdict {
    let r = mc.get("4c");
    let mm = moments(r, H_MM, Metric::Mr).0;
    let gs = moments(r, H_GS, Metric::Mr).0;
    let lts = moments(r, H_LTS, Metric::Mr).0;
    let slack = 0.02;
    verdict(
        mm + slack < gs && gs + slack < lts,
        format!("MM {mm:.4} < GS {gs:.4} < LTS {lts:.4} with slack {slack}"),
    )
}

fn criterion_7(mc: &MonteCarlo) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for id in ["1a", "2a", "3a"] {
        let r = mc.get(id);
        for v in [H_MM, Q_MM] {
            let recs: Vec<_> = r.records.iter().filter(|x| x.variant == v).collect();
            let perfect = recs
                .iter()
                .filter(|x| x.metrics.is_some_and(|m| m.mp == 0.0 && m.sp == 0.0))
                .count();
            let share = perfect as f64 / recs.len() as f64;
            pass &= share >= 0.95;
            parts.push(format!("{id} SNCD-{}: {share:.2}", v.selector.tag().to_uppercase()));
        }
    }
    verdict(pass, format!("share with MP = SP = 0 (need 0.95): {}", parts.join(", ")))
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

fn criterion_8() -> Verdict {
    let total = 200;
    let mut hits = 0;
    for seed in 0..total {
        let mut rng = substream(seed, 0);
        let n = rng.random_range(6..=12);
        let k = rng.random_range(1..=2);
        let alpha = [0.1, 0.2, 0.25, 0.3][rng.random_range(0..4)];
        let x = Array2::from_shape_fn((n, k), |_| rng.sample::<f64, _>(StandardNormal));
        let y = Array1::from_shape_fn(n, |i| {
            let e: f64 = rng.sample(StandardNormal);
            let shift = if rng.random_bool(0.2) { 8.0 } else { 0.0 };
            1.0 + x.row(i).sum() + e + shift
        });
        let h = ceil_count(1.0 - alpha, n);
        let settings = LtsSettings { alpha, ..LtsSettings::default() };
        let fit = fit_lts(x.view(), y.view(), &settings, &ScaleSettings::default(), seed).expect("fit");
        let fast = trimmed_objective(&fit.residuals, h);
        let mut exact = f64::INFINITY;
        for rows in combinations(n, h) {
            if let Some(t) = ols(x.view(), y.view(), Some(&rows), None, true) {
                let r: Vec<f64> = (0..n)
                    .map(|i| y[i] - t[0] - (0..k).map(|j| x[[i, j]] * t[j + 1]).sum::<f64>())
                    .collect();
                exact = exact.min(trimmed_objective(&r, h));
            }
        }
        if (fast - exact).abs() <= 1e-8 * exact.max(1.0) {
            hits += 1;
        }
    }
    verdict(hits * 100 >= total * 95, format!("{hits}/{total} instances attain the enumerated optimum"))
}

fn kkt_problem(seed: u64) -> Dataset {
    let mut rng = substream(seed, 0);
    let n = rng.random_range(20..80);
    let p = rng.random_range(3..60);
    let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
    let active = rng.random_range(1..=p.min(5));
    let y = Array1::from_shape_fn(n, |i| {
        let signal: f64 = (0..active).map(|j| (j as f64 + 1.0) * x[[i, j]]).sum();
        let e: f64 = rng.sample(StandardNormal);
        let heavy = if rng.random_bool(0.1) { 10.0 } else { 1.0 };
        signal + heavy * e
    });
    Dataset::new(y, x, None).expect("dataset")
}

fn criterion_9() -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, loss) in [("huber", LossSpec::huber(1.345)), ("median", LossSpec::median())] {
        let (mut points, mut converged, mut worst) = (0, 0, 0.0_f64);
        for seed in 0..50 {
            let d = kkt_problem(seed);
            let opts = PathOptions::default();
            let grid = default_lambda_grid(&d, &loss, 40, 1e-2, 1.0, &opts).expect("grid");
            let fit = fit_penalized_path(&d, &loss, &grid, &opts).expect("path");
            for l in 0..fit.len() {
                points += 1;
                if fit.converged[l] {
                    converged += 1;
                    worst = worst.max(fit.kkt_residuals[l]);
                }
            }
        }
        pass &= worst <= 1e-4 && converged > 0;
        parts.push(format!("{name}: {converged}/{points} converged, max KKT {worst:.2e}"));
    }
    verdict(pass, parts.join("; "))
}

fn criterion_10() -> Verdict {
    let mut rng = substream(10, 0);
    let r: Vec<f64> = (0..10_000).map(|_| rng.sample(StandardNormal)).collect();
    let s0 = initial_scale(&r);
    let s = lts_reweight(&r, s0, 0.1, &ScaleSettings::default()).expect("reweight").sigma;
    let band = 0.95..=1.05;
    verdict(
        band.contains(&s0) && band.contains(&s),
        format!("initial {s0:.4}, reweighted {s:.4}"),
    )
}

/// GS is left out: at n = 1000 every fit scores about 500k pairwise
/// differences per candidate, hours of work for 100 replicates.
const CALIBRATED: [Variant; 4] = [
    H_LTS,
    H_MM,
    Variant::new(SelectorLoss::Quantile, RegressorKind::Lts),
    Q_MM,
];

fn criterion_11() -> Verdict {
    let settings = PipelineSettings::default();
    let cfg = robout::generator::ScenarioConfig {
        n: 1000,
        alpha: 0.0,
        m: 1.0,
        ..scenario_preset("1a").expect("preset")
    };
    let mut flagged = vec![0usize; CALIBRATED.len()];
    let mut failures = 0;
    for r in 0..REPLICATES {
        let inst = robout::generate(&robout::generator::ScenarioConfig { seed: BASE_SEED ^ r as u64, ..cfg.clone() })
            .expect("generate");
        for (slot, &variant) in CALIBRATED.iter().enumerate() {
            let rv = RoboutVariant { variant, k: cfg.k, alpha: 0.1, seed: r as u64 };
            match detect(&inst.dataset, rv, &settings) {
                Ok(o) => flagged[slot] += o.report.flagged_indices.len(),
                Err(_) => failures += 1,
            }
        }
    }
    let rates: Vec<f64> = flagged.iter().map(|f| *f as f64 / (REPLICATES * cfg.n) as f64).collect();
    let pass = failures == 0 && rates.iter().all(|r| (0.004..=0.02).contains(r));
    let parts: Vec<String> = CALIBRATED
        .iter()
        .zip(&rates)
        .map(|(v, r)| format!("{} {r:.4}", v.label()))
        .collect();
    verdict(pass, format!("false-positive rate in [0.004, 0.02]: {}", parts.join(", ")))
}

fn equivariance_instance(seed: u64, n: usize, k: usize) -> (Array2<f64>, Array1<f64>) {
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

fn criterion_12() -> Verdict {
    let settings = RegressorSettings::default();
    let (mut regression, mut scale, mut flags) = (0, 0, 0);
    for kind in RegressorKind::ALL {
        for seed in 0..50 {
            let mut rng = substream(seed, 9);
            let k = 1 + seed as usize % 3;
            let (x, y) = equivariance_instance(seed, 40, k);
            let v: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
            let c: f64 = rng.random_range(-5.0..5.0);
            let shifted = Array1::from_shape_fn(y.len(), |i| {
                y[i] + c + x.row(i).iter().zip(&v).map(|(a, b)| a * b).sum::<f64>()
            });
            let a = fit_robust(kind, x.view(), y.view(), &settings, seed).expect("fit");
            let b = fit_robust(kind, x.view(), shifted.view(), &settings, seed).expect("fit");
            let ok = (0..k).all(|j| close(b.coefficients[j], a.coefficients[j] + v[j]))
                && close(b.intercept, a.intercept + c)
                && close(b.scale, a.scale);
            regression += usize::from(!ok);

            let (x, y) = equivariance_instance(seed + 100, 40, 2);
            let s = 0.1 + seed as f64 * 0.37;
            let scaled = y.mapv(|t| s * t);
            let a = fit_robust(kind, x.view(), y.view(), &settings, seed).expect("fit");
            let b = fit_robust(kind, x.view(), scaled.view(), &settings, seed).expect("fit");
            let ok = (0..2).all(|j| close(b.coefficients[j], s * a.coefficients[j]))
                && close(b.intercept, s * a.intercept)
                && close(b.scale, s * a.scale);
            scale += usize::from(!ok);
        }
    }
    let pipeline = PipelineSettings::default();
    for seed in 0..50u64 {
        let mut rng = substream(seed, 3);
        let (n, p) = (60, 12);
        let x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
        let y = Array1::from_shape_fn(n, |i| {
            let e: f64 = rng.sample(StandardNormal);
            let spread = if i % 10 == 3 { 8.0 } else { 1.0 };
            4.0 * x[[i, 1]] - 3.0 * x[[i, 5]] + spread * e
        });
        let a: f64 = rng.random_range(0.2..20.0);
        let b: f64 = rng.random_range(-50.0..50.0);
        let d1 = Dataset::new(y.clone(), x.clone(), None).expect("dataset");
        let d2 = Dataset::new(y.mapv(|t| a * t + b), x, None).expect("dataset");
        let rv = RoboutVariant { variant: Variant::ALL[seed as usize % 6], k: 2, alpha: 0.1, seed };
        let o1 = detect(&d1, rv, &pipeline).expect("detect");
        let o2 = detect(&d2, rv, &pipeline).expect("detect");
        flags += usize::from(o1.report.flagged_indices != o2.report.flagged_indices);
    }
    verdict(
        regression + scale + flags == 0,
        format!(
            "violations: regression {regression}/150, scale {scale}/150, affine flags {flags}/50"
        ),
    )
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).expect("read dir") {
        let path = entry.expect("entry").path();
        out.insert(
            path.file_name().unwrap().to_string_lossy().into_owned(),
            fs::read(&path).expect("read file"),
        );
    }
    out
}

fn run_twice(tmp: &Path, name: &str, args: &[&str]) -> Result<usize, String> {
    let mut snaps = Vec::new();
    for round in 0..2 {
        let out = tmp.join(format!("{name}{round}"));
        let status = Command::new(env!("CARGO_BIN_EXE_robout"))
            .args(args)
            .arg("--out")
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!("{name} failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        snaps.push(snapshot(&out));
    }
    if snaps[0] == snaps[1] {
        Ok(snaps[0].len())
    } else {
        Err(format!("{name} outputs differ"))
    }
}

fn criterion_13() -> Verdict {
    let tmp = std::env::temp_dir().join(format!("robout-acceptance-{}", std::process::id()));
    let _ = fs::remove_dir_all(&tmp);
    fs::create_dir_all(&tmp).expect("temp dir");
    let input = tmp.join("sim0").join("data.csv");
    let input = input.to_str().unwrap().to_string();
    let runs = [
        ("sim", vec!["simulate", "--scenario", "2b", "--m", "19", "--seed", "5"]),
        ("det", vec!["detect", "--input", &input, "--response", "y", "--variant", "all", "--k", "2,3", "--seed", "5"]),
        ("bench", vec!["benchmark", "--scenario", "2c", "--variants", "all", "--m-grid", "3,19", "--replicates", "3", "--seed", "5"]),
    ];
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, args) in &runs {
        match run_twice(&tmp, name, args) {
            Ok(files) => parts.push(format!("{name}: {files} files identical")),
            Err(e) => {
                pass = false;
                parts.push(e);
            }
        }
    }
    let _ = fs::remove_dir_all(&tmp);
    verdict(pass, parts.join("; "))
}

fn criterion_14() -> Verdict {
    let specs = [
        LossSpec::huber(1.345),
        LossSpec::huber(0.5),
        LossSpec::median(),
        LossSpec::new(LossKind::Quantile, 0.25).expect("loss"),
        LossSpec::biweight(1.547),
        LossSpec::biweight(4.685),
    ];
    let h = 1e-5;
    let mut worst = 0.0_f64;
    let mut checked = 0;
    for s in &specs {
        let kinks: Vec<f64> = match s.kind {
            LossKind::Quantile => vec![0.0],
            _ => vec![-s.tuning, s.tuning],
        };
        for i in 0..=8000 {
            let t = -20.0 + i as f64 * 0.005 + 1e-3;
            if kinks.iter().any(|k| (t - k).abs() < 1e-4) {
                continue;
            }
            let fd = (s.value(t + h) - s.value(t - h)) / (2.0 * h);
            worst = worst.max((s.psi(t) - fd).abs());
            checked += 1;
        }
    }
    verdict(worst <= 1e-6, format!("{checked} points, max |psi - fd| = {worst:.2e}"))
}

fn main() {
    let mut results: Vec<(u32, &str, Verdict)> = Vec::new();
    let mut timed = |id: u32, name: &'static str, f: &dyn Fn() -> Verdict| {
        let t0 = Instant::now();
        let mut v = f();
        v.detail = format!("{} [{:.1}s]", v.detail, t0.elapsed().as_secs_f64());
        println!("criterion {id:>2}: {} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((id, name, v));
    };

    timed(14, "loss derivatives", &criterion_14);
    timed(10, "scale consistency", &criterion_10);
    timed(8, "exact LTS oracle", &criterion_8);
    timed(9, "KKT certificate", &criterion_9);
    timed(12, "equivariance", &criterion_12);
    timed(13, "determinism", &criterion_13);
    timed(11, "flag calibration", &criterion_11);

    let mc = MonteCarlo::run(&[
        ("1a", vec![H_LTS, H_MM, Q_MM]),
        ("2a", vec![H_MM, Q_MM]),
        ("2b", vec![H_MM]),
        ("3a", vec![H_MM, Q_MM]),
        ("3b", Variant::ALL.to_vec()),
        ("4c", vec![H_LTS, H_GS, H_MM]),
    ]);
    timed(1, "1a SNCD-H+LTS", &|| {
        all_targets(mc.get("1a"), &[(H_LTS, Metric::Mr, 0.013), (H_LTS, Metric::Sr, 0.0009), (H_LTS, Metric::F1, 0.993)])
    });
    timed(2, "1a SNCD-H+MM", &|| {
        all_targets(mc.get("1a"), &[(H_MM, Metric::Mr, 0.010), (H_MM, Metric::Sr, 0.0359)])
    });
    timed(3, "2b SNCD-H+MM", &|| all_targets(mc.get("2b"), &[(H_MM, Metric::Mr, 0.145)]));
    timed(4, "3a SNCD-H+MM", &|| {
        all_targets(mc.get("3a"), &[(H_MM, Metric::Mr, 0.133), (H_MM, Metric::Sr, 0.0441)])
    });
    timed(5, "3b all variants", &|| criterion_5(&mc));
    timed(6, "4c ordering", &|| criterion_6(&mc));
    timed(7, "predictor recovery", &|| criterion_7(&mc));

    results.sort_by_key(|r| r.0);
    let failed: Vec<u32> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    println!();
    for (id, name, v) in &results {
        println!("{} criterion {id}: {name}", if v.pass { "PASS" } else { "FAIL" });
    }
    println!("\nacceptance: {} passed, {} failed", results.len() - failed.len(), failed.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
