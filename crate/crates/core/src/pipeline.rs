//! The six detection variants: {Huber, median} selection crossed with
//! {LTS, GS, MM} regression, followed by scale estimation and flagging.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{standardize, Dataset, Standardization};
use crate::loss::{LossSpec, HUBER_DEFAULT};
use crate::regress::{fit_robust, FitError, RegressorKind, RegressorSettings, RobustFit};
use crate::scale::{flag_outliers, OutlierReport};
use crate::selector::{
    default_lambda_grid, fit_penalized_path, select_top_k, PathOptions, SelectionError,
    SelectionResult,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectorLoss {
    Huber,
    Quantile,
}

impl SelectorLoss {
    pub fn tag(self) -> &'static str {
        match self {
            SelectorLoss::Huber => "h",
            SelectorLoss::Quantile => "q",
        }
    }
}

/// One of the six selector × regressor combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Variant {
    pub selector: SelectorLoss,
    pub regressor: RegressorKind,
}

impl Variant {
    pub const ALL: [Variant; 6] = [
        Variant::new(SelectorLoss::Huber, RegressorKind::Lts),
        Variant::new(SelectorLoss::Huber, RegressorKind::Gs),
        Variant::new(SelectorLoss::Huber, RegressorKind::Mm),
        Variant::new(SelectorLoss::Quantile, RegressorKind::Lts),
        Variant::new(SelectorLoss::Quantile, RegressorKind::Gs),
        Variant::new(SelectorLoss::Quantile, RegressorKind::Mm),
    ];

    pub const fn new(selector: SelectorLoss, regressor: RegressorKind) -> Self {
        Self {
            selector,
            regressor,
        }
    }

    /// Lowercase name such as `sncd-h+lts`.
    pub fn name(&self) -> String {
        format!("sncd-{}+{}", self.selector.tag(), self.regressor.name())
    }

    /// Display label such as `SNCD-H+LTS`.
    pub fn label(&self) -> String {
        self.name().to_uppercase()
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("unknown variant {0:?}; expected sncd-{{h,q}}+{{lts,gs,mm}}")]
pub struct ParseVariantError(pub String);

impl FromStr for Variant {
    type Err = ParseVariantError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == lower)
            .ok_or_else(|| ParseVariantError(s.to_string()))
    }
}

impl Serialize for Variant {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.name())
    }
}

impl<'de> Deserialize<'de> for Variant {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A variant with its run parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoboutVariant {
    pub variant: Variant,
    pub k: usize,
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSettings {
    pub lambda_length: usize,
    pub lambda_ratio: f64,
    pub enet_alpha: f64,
    pub huber_gamma: f64,
    /// Column scaling seen by the selector.
    pub standardization: Standardization,
    pub path: PathOptions,
    /// Stop the penalty path once `K` coefficients are active.
    pub early_stop: bool,
    pub regressors: RegressorSettings,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        Self {
            lambda_length: 100,
            lambda_ratio: 1e-3,
            enet_alpha: 1.0,
            huber_gamma: HUBER_DEFAULT,
            standardization: Standardization::default(),
            path: PathOptions::default(),
            early_stop: true,
            regressors: RegressorSettings::default(),
        }
    }
}

impl PipelineSettings {
    pub fn loss(&self, selector: SelectorLoss) -> LossSpec {
        match selector {
            SelectorLoss::Huber => LossSpec::huber(self.huber_gamma),
            SelectorLoss::Quantile => LossSpec::median(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Selection,
    Regression,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("selection stage: {0}")]
    Selection(#[from] SelectionError),
    #[error("regression stage: {0}")]
    Regression(FitError),
    #[error("regression stage: {0} (variant infeasible on this data)")]
    Infeasible(FitError),
}

impl DetectError {
    pub fn stage(&self) -> Stage {
        match self {
            DetectError::Selection(_) => Stage::Selection,
            _ => Stage::Regression,
        }
    }

    pub fn is_infeasible(&self) -> bool {
        matches!(self, DetectError::Infeasible(_))
    }
}

impl From<FitError> for DetectError {
    fn from(e: FitError) -> Self {
        match &e {
            FitError::Rank { .. } => DetectError::Infeasible(e),
            FitError::Argument { method: RegressorKind::Gs, .. } => DetectError::Infeasible(e),
            _ => DetectError::Regression(e),
        }
    }
}

/// Selection-stage output shared by every regressor that uses it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionStage {
    pub selection: SelectionResult,
    pub path_points: usize,
    pub path_converged: bool,
    /// Largest KKT residual over converged path points.
    pub max_kkt_residual: f64,
    pub total_sweeps: usize,
    /// Whether active-set sizes grew monotonically up to the chosen point.
    pub monotone_entry: bool,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub selection: f64,
    pub regression: f64,
    pub flagging: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub path_points: usize,
    pub path_converged: bool,
    pub max_kkt_residual: f64,
    pub selector_sweeps: usize,
    pub monotone_entry: bool,
    pub regressor_converged: bool,
    pub singular_subsets: usize,
    pub degenerate_scale: bool,
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionOutcome {
    pub variant: RoboutVariant,
    pub selection: SelectionResult,
    pub selected_names: Vec<String>,
    pub fit: RobustFit,
    pub report: OutlierReport,
    pub diagnostics: Diagnostics,
}

/// Standardizes, fits the penalty path with `loss` and reads the top-`k`
/// support.
pub fn select_stage(
    d: &Dataset,
    selector: SelectorLoss,
    k: usize,
    settings: &PipelineSettings,
) -> Result<SelectionStage, DetectError> {
    let mut stages = select_stage_multi(d, selector, &[k], settings)?;
    Ok(stages.pop().expect("one target").1?)
}

/// As [`select_stage`] for several targets sharing one path.
pub fn select_stage_multi(
    d: &Dataset,
    selector: SelectorLoss,
    ks: &[usize],
    settings: &PipelineSettings,
) -> Result<Vec<(usize, Result<SelectionStage, DetectError>)>, DetectError> {
    let start = Instant::now();
    let (std_data, stats) = standardize(d, settings.standardization);
    let loss = settings.loss(selector);
    let opts = PathOptions {
        excluded: stats.degenerate_columns.clone(),
        stop_at_active: if settings.early_stop {
            ks.iter().copied().max()
        } else {
            None
        },
        ..settings.path.clone()
    };
    let pen = default_lambda_grid(
        &std_data,
        &loss,
        settings.lambda_length,
        settings.lambda_ratio,
        settings.enet_alpha,
        &opts,
    )?;
    let fit = fit_penalized_path(&std_data, &loss, &pen, &opts)?;
    let seconds = start.elapsed().as_secs_f64();
    Ok(ks
        .iter()
        .map(|&k| {
            let stage = select_top_k(&fit, k)
                .map_err(DetectError::from)
                .map(|selection| {
                    let upto = selection.lambda_index + 1;
                    let max_kkt = (0..upto)
                        .filter(|&l| fit.converged[l])
                        .map(|l| fit.kkt_residuals[l])
                        .fold(0.0_f64, f64::max);
                    SelectionStage {
                        path_points: fit.len(),
                        path_converged: fit.converged[..upto].iter().all(|c| *c),
                        max_kkt_residual: max_kkt,
                        total_sweeps: fit.sweeps.iter().sum(),
                        monotone_entry: fit.active_sizes[..upto].windows(2).all(|w| w[1] >= w[0]),
                        seconds,
                        selection,
                    }
                });
            (k, stage)
        })
        .collect())
}

/// Fits `regressor` on the original (unstandardized) selected columns and
/// flags outliers with the fit's scale.
pub fn regress_and_flag(
    d: &Dataset,
    stage: &SelectionStage,
    variant: RoboutVariant,
    settings: &PipelineSettings,
) -> Result<DetectionOutcome, DetectError> {
    let columns = &stage.selection.support;
    let xd = d.select_columns(columns);
    let regressors = settings.regressors.clone().with_alpha(variant.alpha);
    let t0 = Instant::now();
    let fit = fit_robust(variant.variant.regressor, xd.view(), d.y(), &regressors, variant.seed)?;
    let t1 = Instant::now();
    let report = flag_outliers(&fit.residuals, fit.scale);
    let t2 = Instant::now();
    Ok(DetectionOutcome {
        variant,
        selected_names: columns.iter().map(|&j| d.column_name(j)).collect(),
        diagnostics: Diagnostics {
            path_points: stage.path_points,
            path_converged: stage.path_converged,
            max_kkt_residual: stage.max_kkt_residual,
            selector_sweeps: stage.total_sweeps,
            monotone_entry: stage.monotone_entry,
            regressor_converged: fit.converged,
            singular_subsets: fit.singular_subsets,
            degenerate_scale: report.degenerate_scale,
            timings: StageTimings {
                selection: stage.seconds,
                regression: (t1 - t0).as_secs_f64(),
                flagging: (t2 - t1).as_secs_f64(),
            },
        },
        selection: stage.selection.clone(),
        fit,
        report,
    })
}

fn check_variant(d: &Dataset, k: usize, alpha: f64) -> Result<(), DetectError> {
    if k == 0 || k > d.p() {
        return Err(DetectError::Selection(SelectionError::InvalidK {
            k,
            reason: format!("must be between 1 and p = {}", d.p()),
        }));
    }
    if !(0.0..=0.5).contains(&alpha) {
        return Err(DetectError::Regression(FitError::Argument {
            method: RegressorKind::Lts,
            reason: format!("alpha {alpha} outside [0, 0.5]"),
        }));
    }
    Ok(())
}

/// Runs one variant end to end.
pub fn detect(
    d: &Dataset,
    v: RoboutVariant,
    settings: &PipelineSettings,
) -> Result<DetectionOutcome, DetectError> {
    check_variant(d, v.k, v.alpha)?;
    let stage = select_stage(d, v.variant.selector, v.k, settings)?;
    regress_and_flag(d, &stage, v, settings)
}

pub type OutcomeMap = BTreeMap<(Variant, usize), Result<DetectionOutcome, DetectError>>;

/// Runs every requested variant for every `K`, sharing one penalty path per
/// selector loss. Cells run in parallel; the map order is fixed.
pub fn detect_all_variants(
    d: &Dataset,
    variants: &[Variant],
    k_grid: &[usize],
    alpha: f64,
    seed: u64,
    settings: &PipelineSettings,
) -> OutcomeMap {
    let mut selectors: Vec<SelectorLoss> = variants.iter().map(|v| v.selector).collect();
    selectors.sort();
    selectors.dedup();
    let stages: BTreeMap<(SelectorLoss, usize), Result<SelectionStage, DetectError>> = selectors
        .par_iter()
        .map(|&sel| {
            let valid: Vec<usize> = k_grid.to_vec();
            match select_stage_multi(d, sel, &valid, settings) {
                Ok(list) => list.into_iter().map(|(k, s)| ((sel, k), s)).collect::<Vec<_>>(),
                Err(e) => valid.iter().map(|&k| ((sel, k), Err(e.clone()))).collect(),
            }
        })
        .flatten()
        .collect();
    let cells: Vec<(Variant, usize)> = variants
        .iter()
        .flat_map(|&v| k_grid.iter().map(move |&k| (v, k)))
        .collect();
    cells
        .par_iter()
        .map(|&(variant, k)| {
            let rv = RoboutVariant {
                variant,
                k,
                alpha,
                seed,
            };
            let out = check_variant(d, k, alpha).and_then(|_| {
                match &stages[&(variant.selector, k)] {
                    Ok(stage) => regress_and_flag(d, stage, rv, settings),
                    Err(e) => Err(e.clone()),
                }
            });
            ((variant, k), out)
        })
        .collect()
}
