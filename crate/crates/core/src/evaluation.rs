//! Detection and selection error rates, and the Monte Carlo benchmark
//! runner over scenarios, perturbation levels and variants.

use std::collections::BTreeSet;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::format_f64;
use crate::generator::{generate, GeneratorError, ScenarioConfig};
use crate::pipeline::{
    regress_and_flag, select_stage, PipelineSettings, RoboutVariant, SelectorLoss, Variant,
};
use crate::stats::{mean, sample_sd};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierMetrics {
    /// Masking rate; `None` when there are no true outliers.
    pub mr: Option<f64>,
    /// Swamping rate; 0 when nothing is flagged.
    pub sr: f64,
    pub f1: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorMetrics {
    pub masked: usize,
    pub swamped: usize,
    pub ap: f64,
}

/// `2(1 - mr)(1 - sr) / ((1 - mr) + (1 - sr))`, and 0 when both rates are 1.
pub fn f1_score(mr: f64, sr: f64) -> f64 {
    let den = (1.0 - mr) + (1.0 - sr);
    if den > 0.0 {
        2.0 * (1.0 - mr) * (1.0 - sr) / den
    } else {
        0.0
    }
}

/// Masking, swamping and F1 for index sets over `0..n`.
pub fn outlier_metrics(true_outliers: &[usize], flagged: &[usize], n: usize) -> OutlierMetrics {
    let truth: BTreeSet<usize> = true_outliers.iter().copied().filter(|&i| i < n).collect();
    let found: BTreeSet<usize> = flagged.iter().copied().filter(|&i| i < n).collect();
    let sr = if found.is_empty() {
        0.0
    } else {
        found.difference(&truth).count() as f64 / found.len() as f64
    };
    let mr = (!truth.is_empty())
        .then(|| truth.difference(&found).count() as f64 / truth.len() as f64);
    OutlierMetrics {
        mr,
        sr,
        f1: mr.map(|mr| f1_score(mr, sr)),
    }
}

/// Counts of missed (`|D \ D̂|`) and spurious (`|D̂ \ D|`) predictors.
pub fn predictor_metrics(true_support: &[usize], selected: &[usize]) -> PredictorMetrics {
    let d: BTreeSet<usize> = true_support.iter().copied().collect();
    let s: BTreeSet<usize> = selected.iter().copied().collect();
    let masked = d.difference(&s).count();
    let swamped = s.difference(&d).count();
    PredictorMetrics {
        masked,
        swamped,
        ap: 0.5 * (masked + swamped) as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Mr,
    Sr,
    F1,
    Mp,
    Sp,
    Ap,
}

impl Metric {
    pub const ALL: [Metric; 6] = [Metric::Mr, Metric::Sr, Metric::F1, Metric::Mp, Metric::Sp, Metric::Ap];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Mr => "mr",
            Metric::Sr => "sr",
            Metric::F1 => "f1",
            Metric::Mp => "mp",
            Metric::Sp => "sp",
            Metric::Ap => "ap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub mr: Option<f64>,
    pub sr: f64,
    pub f1: Option<f64>,
    pub mp: f64,
    pub sp: f64,
    pub ap: f64,
}

impl MetricsRecord {
    pub fn get(&self, metric: Metric) -> Option<f64> {
        match metric {
            Metric::Mr => self.mr,
            Metric::Sr => Some(self.sr),
            Metric::F1 => self.f1,
            Metric::Mp => Some(self.mp),
            Metric::Sp => Some(self.sp),
            Metric::Ap => Some(self.ap),
        }
    }
}

/// One (m, replicate, variant) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub m: f64,
    pub replicate: usize,
    pub seed: u64,
    pub variant: Variant,
    pub metrics: Option<MetricsRecord>,
    pub infeasible: Option<String>,
    pub seconds: f64,
}

/// Mean and spread of one metric for one (variant, m) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub variant: Variant,
    pub m: f64,
    pub metric: Metric,
    pub mean: Option<f64>,
    pub sd: Option<f64>,
    pub min: Option<f64>,
    pub max: Option<f64>,
    /// Replicates contributing a defined value.
    pub replicates: usize,
    pub infeasible: usize,
    pub mean_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub scenario: ScenarioConfig,
    pub variants: Vec<Variant>,
    pub m_grid: Vec<f64>,
    pub replicates: usize,
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub scenario_id: String,
    pub spec: BenchmarkSpec,
    pub seeds: Vec<u64>,
    pub cells: Vec<CellSummary>,
    pub records: Vec<ReplicateRecord>,
}

impl BenchmarkResult {
    pub fn cell(&self, variant: Variant, m: f64, metric: Metric) -> Option<&CellSummary> {
        self.cells
            .iter()
            .find(|c| c.variant == variant && c.m == m && c.metric == metric)
    }

    /// Per-replicate values of `metric` for a cell, in replicate order.
    pub fn values(&self, variant: Variant, m: f64, metric: Metric) -> Vec<f64> {
        self.records
            .iter()
            .filter(|r| r.variant == variant && r.m == m)
            .filter_map(|r| r.metrics.and_then(|x| x.get(metric)))
            .collect()
    }
}

/// `base_seed ⊕ r`, shared across the m grid so every m sees the same
/// support, outlier set and design draws.
pub fn replicate_seed(base_seed: u64, r: usize) -> u64 {
    base_seed ^ r as u64
}

fn run_replicate(
    spec: &BenchmarkSpec,
    m: f64,
    r: usize,
    settings: &PipelineSettings,
) -> Result<Vec<ReplicateRecord>, GeneratorError> {
    let seed = replicate_seed(spec.base_seed, r);
    let cfg = ScenarioConfig {
        m,
        seed,
        ..spec.scenario.clone()
    };
    let inst = generate(&cfg)?;
    let n = inst.dataset.n();
    let mut out = Vec::with_capacity(spec.variants.len());
    let selectors: BTreeSet<SelectorLoss> = spec.variants.iter().map(|v| v.selector).collect();
    for sel in selectors {
        let t0 = Instant::now();
        let stage = select_stage(&inst.dataset, sel, cfg.k, settings);
        let select_seconds = t0.elapsed().as_secs_f64();
        for &variant in spec.variants.iter().filter(|v| v.selector == sel) {
            let t1 = Instant::now();
            let rv = RoboutVariant {
                variant,
                k: cfg.k,
                alpha: cfg.alpha,
                seed,
            };
            let outcome = stage
                .as_ref()
                .map_err(Clone::clone)
                .and_then(|s| regress_and_flag(&inst.dataset, s, rv, settings));
            let seconds = select_seconds + t1.elapsed().as_secs_f64();
            let (metrics, infeasible) = match outcome {
                Ok(o) => {
                    let om = outlier_metrics(&inst.true_outliers, &o.report.flagged_indices, n);
                    let pm = predictor_metrics(&inst.true_support, &o.selection.support);
                    let rec = MetricsRecord {
                        mr: om.mr,
                        sr: om.sr,
                        f1: om.f1,
                        mp: pm.masked as f64,
                        sp: pm.swamped as f64,
                        ap: pm.ap,
                    };
                    (Some(rec), None)
                }
                Err(e) => (None, Some(e.to_string())),
            };
            out.push(ReplicateRecord {
                m,
                replicate: r,
                seed,
                variant,
                metrics,
                infeasible,
                seconds,
            });
        }
    }
    Ok(out)
}

fn summarize(spec: &BenchmarkSpec, records: &[ReplicateRecord]) -> Vec<CellSummary> {
    let mut cells = Vec::new();
    for &variant in &spec.variants {
        for &m in &spec.m_grid {
            let recs: Vec<&ReplicateRecord> = records
                .iter()
                .filter(|r| r.variant == variant && r.m == m)
                .collect();
            let infeasible = recs.iter().filter(|r| r.metrics.is_none()).count();
            let mean_seconds = mean(&recs.iter().map(|r| r.seconds).collect::<Vec<_>>());
            for metric in Metric::ALL {
                let vals: Vec<f64> = recs
                    .iter()
                    .filter_map(|r| r.metrics.and_then(|x| x.get(metric)))
                    .collect();
                let defined = !vals.is_empty();
                cells.push(CellSummary {
                    variant,
                    m,
                    metric,
                    mean: defined.then(|| mean(&vals)),
                    sd: defined.then(|| sample_sd(&vals)),
                    min: defined.then(|| vals.iter().copied().fold(f64::INFINITY, f64::min)),
                    max: defined.then(|| vals.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
                    replicates: vals.len(),
                    infeasible,
                    mean_seconds,
                });
            }
        }
    }
    cells
}

/// Generates every (m, replicate) instance, runs each variant on it and
/// aggregates the metrics. Selection is shared by variants with the same
/// selector loss. Replicates run in parallel; results are merged in
/// (m, replicate, variant) order.
pub fn run_benchmark(
    spec: &BenchmarkSpec,
    settings: &PipelineSettings,
) -> Result<BenchmarkResult, GeneratorError> {
    if spec.replicates == 0 {
        return Err(GeneratorError::Invalid("replicates must be at least 1".into()));
    }
    if spec.m_grid.is_empty() || spec.variants.is_empty() {
        return Err(GeneratorError::Invalid("empty m grid or variant list".into()));
    }
    for &m in &spec.m_grid {
        ScenarioConfig {
            m,
            ..spec.scenario.clone()
        }
        .validate()?;
    }
    let jobs: Vec<(f64, usize)> = spec
        .m_grid
        .iter()
        .flat_map(|&m| (0..spec.replicates).map(move |r| (m, r)))
        .collect();
    let per_job: Vec<Vec<ReplicateRecord>> = jobs
        .par_iter()
        .map(|&(m, r)| run_replicate(spec, m, r, settings))
        .collect::<Result<_, _>>()?;
    let records: Vec<ReplicateRecord> = per_job.into_iter().flatten().collect();
    Ok(BenchmarkResult {
        scenario_id: spec.scenario.id.clone().unwrap_or_else(|| "custom".into()),
        seeds: (0..spec.replicates)
            .map(|r| replicate_seed(spec.base_seed, r))
            .collect(),
        cells: summarize(spec, &records),
        spec: spec.clone(),
        records,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(format_f64).unwrap_or_default()
}

/// Long format: one row per (scenario, variant, m, metric).
pub fn write_long_csv<W: Write>(results: &[BenchmarkResult], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "scenario", "variant", "m", "metric", "mean", "sd", "replicates", "infeasible",
    ])?;
    for res in results {
        for c in &res.cells {
            out.write_record([
                res.scenario_id.clone(),
                c.variant.label(),
                format_f64(c.m),
                c.metric.name().to_string(),
                opt(c.mean),
                opt(c.sd),
                c.replicates.to_string(),
                c.infeasible.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Wide format for one metric: variants as rows, scenarios as columns, each
/// scenario read at its largest m.
pub fn write_wide_csv<W: Write>(results: &[BenchmarkResult], metric: Metric, w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["variant".to_string()];
    header.extend(results.iter().map(|r| r.scenario_id.clone()));
    out.write_record(&header)?;
    let mut variants: Vec<Variant> = Vec::new();
    for r in results {
        for v in &r.spec.variants {
            if !variants.contains(v) {
                variants.push(*v);
            }
        }
    }
    for v in variants {
        let mut row = vec![v.label()];
        for r in results {
            let m = r.spec.m_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.push(opt(r.cell(v, m, metric).and_then(|c| c.mean)));
        }
        out.write_record(&row)?;
    }
    out.flush()?;
    Ok(())
}

/// Mean wall-clock seconds per fit, kept apart from the deterministic tables.
pub fn write_timings_csv<W: Write>(results: &[BenchmarkResult], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["scenario", "variant", "m", "mean_seconds"])?;
    for res in results {
        for c in res.cells.iter().filter(|c| c.metric == Metric::Mr) {
            out.write_record([
                res.scenario_id.clone(),
                c.variant.label(),
                format_f64(c.m),
                format!("{:.6}", c.mean_seconds),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}
