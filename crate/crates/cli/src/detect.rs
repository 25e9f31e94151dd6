use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use robout::data::{format_f64, load_csv, ColumnSelector};
use robout::pipeline::{detect_all_variants, DetectError, DetectionOutcome, PipelineSettings, Variant};
use serde::Serialize;
use serde_json::Value;

use crate::args::{Scaling, parse_k_grid, parse_variants};
use crate::output::{prepare_dir, write_json};
use crate::Outcome;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
pub struct DetectArgs {
    /// Numeric CSV file with one response and the candidate predictors.
    #[arg(long)]
    input: PathBuf,
    /// Response column: header name, or zero-based index.
    #[arg(long)]
    response: String,
    /// The file has no header row.
    #[arg(long)]
    no_header: bool,
    /// Variant name (`sncd-h+mm`), a comma-separated list, or `all`.
    #[arg(long = "variant", visible_alias = "variants", default_value = "all")]
    variants: String,
    /// Number of predictors to select; a comma-separated list runs a K grid.
    #[arg(long = "k", visible_alias = "k-grid", default_value = "3")]
    k: String,
    /// Contamination fraction used by LTS trimming and reweighting.
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Scaling::Sd)]
    standardize: Scaling,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Also write per-stage wall-clock times to timings.json.
    #[arg(long)]
    timings: bool,
}

#[derive(Serialize)]
struct Config<'a> {
    command: &'static str,
    version: &'static str,
    input: String,
    response: &'a str,
    header: bool,
    variants: Vec<Variant>,
    k: &'a [usize],
    alpha: f64,
    seed: u64,
    format: Format,
    settings: &'a PipelineSettings,
}

#[derive(Serialize)]
struct Cell {
    variant: Variant,
    k: usize,
    status: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    stage: Option<robout::pipeline::Stage>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    outcome: Option<Value>,
}

fn status(r: &Result<DetectionOutcome, DetectError>) -> &'static str {
    match r {
        Ok(_) => "ok",
        Err(e) if e.is_infeasible() => "infeasible",
        Err(_) => "error",
    }
}

/// Outcome JSON without wall-clock timings, which would break byte-level
/// reproducibility.
fn outcome_value(o: &DetectionOutcome) -> Result<Value> {
    let mut v = serde_json::to_value(o)?;
    if let Some(diag) = v.get_mut("diagnostics").and_then(Value::as_object_mut) {
        diag.remove("timings");
    }
    Ok(v)
}

fn write_observations(path: &PathBuf, o: &DetectionOutcome) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record(["index", "residual", "scaled_residual", "flag", "weight"])?;
    for i in 0..o.fit.residuals.len() {
        w.write_record([
            i.to_string(),
            format_f64(o.fit.residuals[i]),
            format_f64(o.report.scaled_residuals[i]),
            u8::from(o.report.flags[i]).to_string(),
            format_f64(o.fit.weights[i]),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_summary_csv(path: &PathBuf, cells: &[(Variant, usize, &Result<DetectionOutcome, DetectError>)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    w.write_record([
        "variant", "k", "status", "selected", "intercept", "coefficients", "scale", "flagged", "error",
    ])?;
    for (variant, k, r) in cells {
        let row = match r {
            Ok(o) => vec![
                variant.name(),
                k.to_string(),
                "ok".into(),
                o.selected_names.join(";"),
                format_f64(o.fit.intercept),
                o.fit.coefficients.iter().map(|c| format_f64(*c)).collect::<Vec<_>>().join(";"),
                format_f64(o.fit.scale),
                o.report.flagged_indices.iter().map(usize::to_string).collect::<Vec<_>>().join(";"),
                String::new(),
            ],
            Err(e) => vec![
                variant.name(),
                k.to_string(),
                status(r).into(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                e.to_string(),
            ],
        };
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn run(a: DetectArgs) -> Result<Outcome> {
    let variants = parse_variants(&a.variants)?;
    let k_grid = parse_k_grid(&a.k)?;
    if !(0.0..=0.5).contains(&a.alpha) {
        bail!("--alpha {} outside [0, 0.5]", a.alpha);
    }
    if !a.input.is_file() {
        bail!("input file {} does not exist", a.input.display());
    }
    prepare_dir(&a.out)?;
    let response = ColumnSelector::parse(&a.response);
    let data = load_csv(&a.input, &response, !a.no_header)
        .with_context(|| format!("reading {}", a.input.display()))?;
    if let Some(&k) = k_grid.iter().find(|&&k| k > data.p()) {
        bail!("K = {k} exceeds the {} candidate predictors", data.p());
    }
    let settings = PipelineSettings {
        standardization: a.standardize.into(),
        ..PipelineSettings::default()
    };
    write_json(
        &a.out.join("config.json"),
        &Config {
            command: "detect",
            version: env!("CARGO_PKG_VERSION"),
            input: a.input.display().to_string(),
            response: &a.response,
            header: !a.no_header,
            variants: variants.clone(),
            k: &k_grid,
            alpha: a.alpha,
            seed: a.seed,
            format: a.format,
            settings: &settings,
        },
    )?;

    let map = detect_all_variants(&data, &variants, &k_grid, a.alpha, a.seed, &settings);
    // request order, not map order
    let cells: Vec<(Variant, usize, &Result<DetectionOutcome, DetectError>)> = variants
        .iter()
        .flat_map(|&v| k_grid.iter().map(move |&k| (v, k)))
        .map(|(v, k)| (v, k, &map[&(v, k)]))
        .collect();

    match a.format {
        Format::Json => {
            let json: Vec<Cell> = cells
                .iter()
                .map(|(variant, k, r)| {
                    Ok(Cell {
                        variant: *variant,
                        k: *k,
                        status: status(r),
                        stage: r.as_ref().err().map(DetectError::stage),
                        error: r.as_ref().err().map(ToString::to_string),
                        outcome: r.as_ref().ok().map(outcome_value).transpose()?,
                    })
                })
                .collect::<Result<_>>()?;
            write_json(&a.out.join("outcomes.json"), &json)?;
        }
        Format::Csv => write_summary_csv(&a.out.join("summary.csv"), &cells)?,
    }
    for (variant, k, r) in &cells {
        if let Ok(o) = r {
            write_observations(&a.out.join(format!("observations_{}_k{k}.csv", variant.name())), o)?;
        }
    }
    if a.timings {
        let t: Vec<Value> = cells
            .iter()
            .filter_map(|(v, k, r)| {
                r.as_ref().ok().map(|o| {
                    serde_json::json!({ "variant": v, "k": k, "timings": o.diagnostics.timings })
                })
            })
            .collect();
        write_json(&a.out.join("timings.json"), &t)?;
    }

    println!("{:<12} {:>3}  {:<10} {:>6}  {:>12}  selected", "variant", "K", "status", "flags", "scale");
    for (variant, k, r) in &cells {
        match r {
            Ok(o) => println!(
                "{:<12} {:>3}  {:<10} {:>6}  {:>12.6}  {}",
                variant.name(),
                k,
                "ok",
                o.report.flagged_indices.len(),
                o.fit.scale,
                o.selected_names.join(", ")
            ),
            Err(e) => {
                println!("{:<12} {:>3}  {:<10}", variant.name(), k, status(r));
                eprintln!("{} K={k}: {e}", variant.name());
            }
        }
    }

    let ok = cells.iter().filter(|c| c.2.is_ok()).count();
    if ok > 0 {
        return Ok(Outcome::Success);
    }
    if cells.iter().all(|c| c.2.as_ref().is_err_and(DetectError::is_infeasible)) {
        eprintln!("every requested variant was infeasible on this data");
        return Ok(Outcome::AllInfeasible);
    }
    bail!("no variant could be fitted")
}
