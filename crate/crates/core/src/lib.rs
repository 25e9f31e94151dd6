//! Robust selection of predictors followed by robust regression and
//! conditional-outlier flagging for large-dimensional linear models.
//!
//! The detection procedure runs in three stages:
//!
//! 1. [`selector`]: penalized Huber or median-loss regression over a penalty
//!    path, reading off the `K` strongest predictors.
//! 2. [`regress`]: a robust fit (LTS, MM or GS) on the selected columns.
//! 3. [`scale`]: a robust residual scale and the two-sided
//!    `Φ⁻¹(0.995)` flag rule.
//!
//! [`pipeline`] composes the stages into the six named variants,
//! [`generator`] synthesizes contaminated benchmark data, and
//! [`evaluation`] scores detections and runs Monte Carlo benchmarks.

pub mod data;
pub mod evaluation;
pub mod generator;
pub mod linalg;
pub mod loss;
pub mod pipeline;
pub mod regress;
pub mod rng;
pub mod scale;
pub mod selector;
pub mod stats;

pub use data::{load_csv, robust_standardize, sparsity_profile, standardize, ColumnSelector, Dataset, Standardization};
pub use evaluation::{outlier_metrics, predictor_metrics, run_benchmark, BenchmarkResult};
pub use generator::{generate, scenario_preset, GeneratedInstance, ScenarioConfig};
pub use loss::{LossKind, LossSpec};
pub use pipeline::{detect, detect_all_variants, DetectionOutcome, RoboutVariant};
pub use regress::{RegressorKind, RobustFit};
pub use scale::{flag_outliers, initial_scale, OutlierReport, ScaleEstimate};
pub use selector::{PenalizedFit, PenaltySpec, SelectionResult};
