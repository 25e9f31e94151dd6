use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use robout::evaluation::{
    run_benchmark, write_long_csv, write_timings_csv, write_wide_csv, BenchmarkResult, BenchmarkSpec,
    Metric,
};
use robout::generator::scenario_preset;
use robout::pipeline::{PipelineSettings, Variant};
use serde::Serialize;

use crate::args::{Scaling, parse_m_grid, parse_variants};
use crate::output::{prepare_dir, write_json};
use crate::Outcome;

#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    /// Comma-separated preset ids.
    #[arg(long, default_value = "1a")]
    scenario: String,
    /// Variant names, comma-separated, or `all`.
    #[arg(long, default_value = "all")]
    variants: String,
    /// `start:step:stop` or a comma-separated list of m values.
    #[arg(long, default_value = "3:2:19")]
    m_grid: String,
    #[arg(long, default_value_t = 100)]
    replicates: usize,
    /// Base seed; replicate r uses `seed XOR r`.
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Scaling::Sd)]
    standardize: Scaling,
    /// Also write mean wall-clock seconds per fit to timings.csv.
    #[arg(long)]
    timings: bool,
}

#[derive(Serialize)]
struct Config<'a> {
    command: &'static str,
    version: &'static str,
    specs: &'a [BenchmarkSpec],
    settings: &'a PipelineSettings,
}

fn csv_file(path: PathBuf) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(&path).with_context(|| format!("cannot write {}", path.display()))?,
    ))
}

fn print_summary(res: &BenchmarkResult) {
    let c = &res.spec.scenario;
    println!(
        "scenario {} (n = {}, p = {}, {} replicates)",
        res.scenario_id, c.n, c.p, res.spec.replicates
    );
    println!(
        "  {:<12} {:>6} {:>8} {:>8} {:>8} {:>6} {:>6} {:>10}",
        "variant", "m", "mr", "sr", "f1", "mp", "sp", "infeasible"
    );
    let cell = |v: Variant, m: f64, metric: Metric| {
        res.cell(v, m, metric)
            .and_then(|c| c.mean)
            .map_or_else(|| "-".to_string(), |x| format!("{x:.4}"))
    };
    for &v in &res.spec.variants {
        for &m in &res.spec.m_grid {
            let infeasible = res.cell(v, m, Metric::Mr).map_or(0, |c| c.infeasible);
            println!(
                "  {:<12} {:>6} {:>8} {:>8} {:>8} {:>6} {:>6} {:>10}",
                v.name(),
                m,
                cell(v, m, Metric::Mr),
                cell(v, m, Metric::Sr),
                cell(v, m, Metric::F1),
                cell(v, m, Metric::Mp),
                cell(v, m, Metric::Sp),
                infeasible
            );
        }
    }
}

pub fn run(a: BenchmarkArgs) -> Result<Outcome> {
    let variants = parse_variants(&a.variants)?;
    let m_grid = parse_m_grid(&a.m_grid)?;
    anyhow::ensure!(a.replicates >= 1, "--replicates must be at least 1");
    let specs: Vec<BenchmarkSpec> = a
        .scenario
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|id| {
            Ok(BenchmarkSpec {
                scenario: scenario_preset(id)?,
                variants: variants.clone(),
                m_grid: m_grid.clone(),
                replicates: a.replicates,
                base_seed: a.seed,
            })
        })
        .collect::<Result<_>>()?;
    anyhow::ensure!(!specs.is_empty(), "no scenarios given");
    prepare_dir(&a.out)?;
    let settings = PipelineSettings {
        standardization: a.standardize.into(),
        ..PipelineSettings::default()
    };
    write_json(
        &a.out.join("config.json"),
        &Config {
            command: "benchmark",
            version: env!("CARGO_PKG_VERSION"),
            specs: &specs,
            settings: &settings,
        },
    )?;

    let mut results = Vec::with_capacity(specs.len());
    for spec in &specs {
        let res = run_benchmark(spec, &settings)?;
        print_summary(&res);
        results.push(res);
    }
    write_long_csv(&results, csv_file(a.out.join("long.csv"))?)?;
    for metric in Metric::ALL {
        write_wide_csv(&results, metric, csv_file(a.out.join(format!("wide_{}.csv", metric.name())))?)?;
    }
    if a.timings {
        write_timings_csv(&results, csv_file(a.out.join("timings.csv"))?)?;
    }
    Ok(Outcome::Success)
}
