use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, ValueEnum};
use robout::generator::{generate, scenario_preset, BetaSign, OutlierMode, ScenarioConfig};

use crate::output::{prepare_dir, write_json};
use crate::Outcome;

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ModeArg {
    Variance,
    Mean,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SignArg {
    Positive,
    Negative,
}

/// Scenario fields; each one overrides the preset (or the defaults when no
/// preset is named).
#[derive(Args, Debug, Default)]
pub struct ScenarioArgs {
    /// Preset id such as `1a` or `6b`.
    #[arg(long)]
    pub scenario: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub p: Option<usize>,
    /// Number of true predictors.
    #[arg(long)]
    pub k: Option<usize>,
    /// Outlier fraction.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Scale the outliers' predictor rows by sqrt(m).
    #[arg(long)]
    pub leverage: Option<bool>,
    /// Fraction of zeros in the non-predictor block.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Equicorrelation of the design columns.
    #[arg(long)]
    pub rho: Option<f64>,
    #[arg(long)]
    pub beta0: Option<f64>,
    #[arg(long, value_enum)]
    pub beta_sign: Option<SignArg>,
    #[arg(long)]
    pub sigma: Option<f64>,
}

impl ScenarioArgs {
    pub fn resolve(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.scenario {
            Some(id) => scenario_preset(id)?,
            None => ScenarioConfig::default(),
        };
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { cfg.$f = v; })*};
        }
        set!(n, p, k, alpha, leverage, gamma, rho, beta0, sigma);
        if let Some(m) = self.mode {
            cfg.outlier_mode = match m {
                ModeArg::Variance => OutlierMode::Variance,
                ModeArg::Mean => OutlierMode::Mean,
            };
        }
        if let Some(s) = self.beta_sign {
            cfg.beta_sign = match s {
                SignArg::Positive => BetaSign::Positive,
                SignArg::Negative => BetaSign::Negative,
            };
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Contamination strength.
    #[arg(long, default_value_t = 19.0)]
    m: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

pub fn run(a: SimulateArgs) -> Result<Outcome> {
    let cfg = ScenarioConfig {
        m: a.m,
        seed: a.seed,
        ..a.scenario.resolve()?
    };
    cfg.validate()?;
    prepare_dir(&a.out)?;
    let inst = generate(&cfg)?;
    inst.save(&a.out)
        .with_context(|| format!("writing instance to {}", a.out.display()))?;
    write_json(&a.out.join("config.json"), &cfg)?;
    println!(
        "n = {}, p = {}, K = {}: {} outliers, {} zeros; support {:?}",
        cfg.n,
        cfg.p,
        cfg.k,
        inst.true_outliers.len(),
        cfg.zero_count(),
        inst.true_support
    );
    Ok(Outcome::Success)
}
