//! Synthetic contaminated regression data: variance or mean-shift
//! conditional outliers, optional leverage rows, exact sparsity in the
//! non-predictor block and equicorrelated designs.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::index;
use rand::Rng as _;
use rand_distr::{StandardNormal, Uniform};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{self, ColumnSelector, DataError, Dataset};
use crate::rng::{streams, substream};
use crate::stats::ceil_count;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unknown scenario preset {0:?} (expected one of {list})", list = PRESET_IDS.join(", "))]
    UnknownPreset(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("truth file: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutlierMode {
    /// Inflated noise variance `mσ²` on the outlier rows.
    Variance,
    /// Intercept `β₀·m` on the outlier rows instead of `β₀`.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaSign {
    /// `βₖ ~ U(5, 15)`.
    Positive,
    /// `βₖ ~ U(-15, -5)`.
    Negative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub alpha: f64,
    pub m: f64,
    pub outlier_mode: OutlierMode,
    pub leverage: bool,
    pub gamma: f64,
    pub rho: f64,
    pub beta0: f64,
    pub beta_sign: BetaSign,
    pub sigma: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            id: None,
            n: 200,
            p: 100,
            k: 3,
            alpha: 0.1,
            m: 19.0,
            outlier_mode: OutlierMode::Variance,
            leverage: false,
            gamma: 0.0,
            rho: 0.0,
            beta0: 10.0,
            beta_sign: BetaSign::Positive,
            sigma: 1.0,
            seed: 1,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), GeneratorError> {
        let bad = |m: String| Err(GeneratorError::Invalid(m));
        if self.n < 2 {
            return bad(format!("n = {} < 2", self.n));
        }
        if self.k == 0 || self.k >= self.p {
            return bad(format!("need 1 <= K < p, got K = {}, p = {}", self.k, self.p));
        }
        if !(0.0..=0.5).contains(&self.alpha) {
            return bad(format!("alpha {} outside [0, 0.5]", self.alpha));
        }
        if !(self.m >= 1.0 && self.m.is_finite()) {
            return bad(format!("m = {} must be >= 1", self.m));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return bad(format!("gamma {} outside [0, 1)", self.gamma));
        }
        if !(0.0..1.0).contains(&self.rho) {
            return bad(format!("rho {} outside [0, 1)", self.rho));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("sigma {} must be positive", self.sigma));
        }
        if !self.beta0.is_finite() {
            return bad("beta0 must be finite".into());
        }
        Ok(())
    }

    pub fn outlier_count(&self) -> usize {
        ceil_count(self.alpha, self.n)
    }

    /// `round(γ n (p - K))`.
    pub fn zero_count(&self) -> usize {
        (self.gamma * self.n as f64 * (self.p - self.k) as f64).round() as usize
    }
}

pub const PRESET_IDS: [&str; 17] = [
    "1a", "1b", "1c", "2a", "2b", "2c", "3a", "3b", "3c", "4a", "4b", "4c", "5a", "5b", "5c", "6b",
    "7b",
];

/// Paper-style scenario by id: family digit (1 to 7) and dimension letter
/// (`a` = p 100 / n 200, `b` = p 200 / n 100, `c` = p 500 / n 50).
pub fn scenario_preset(id: &str) -> Result<ScenarioConfig, GeneratorError> {
    if !PRESET_IDS.contains(&id) {
        return Err(GeneratorError::UnknownPreset(id.to_string()));
    }
    let family = id.as_bytes()[0] - b'0';
    let (p, n) = match (family, id.as_bytes()[1]) {
        (6 | 7, _) => (100, 200),
        (_, b'a') => (100, 200),
        (_, b'b') => (200, 100),
        _ => (500, 50),
    };
    Ok(ScenarioConfig {
        id: Some(id.to_string()),
        n,
        p,
        gamma: if matches!(family, 2 | 4 | 5) { 0.3 } else { 0.0 },
        leverage: matches!(family, 3 | 4 | 7),
        rho: if family == 5 { 0.7 } else { 0.0 },
        outlier_mode: if matches!(family, 6 | 7) {
            OutlierMode::Mean
        } else {
            OutlierMode::Variance
        },
        ..ScenarioConfig::default()
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedInstance {
    pub dataset: Dataset,
    /// Zero-based predictor indices, ascending.
    pub true_support: Vec<usize>,
    /// Zero-based row indices, ascending.
    pub true_outliers: Vec<usize>,
    pub beta0: f64,
    /// Coefficients of `true_support`, in the same order.
    pub coefficients: Vec<f64>,
    pub config: ScenarioConfig,
}

#[derive(Serialize, Deserialize)]
struct Truth {
    support: Vec<usize>,
    outliers: Vec<usize>,
    beta0: f64,
    coefficients: Vec<f64>,
    config: ScenarioConfig,
}

fn sorted_sample(rng: &mut crate::rng::Rng, len: usize, amount: usize) -> Vec<usize> {
    let mut v = index::sample(rng, len, amount).into_vec();
    v.sort_unstable();
    v
}

/// Draws one instance. Each random object comes from its own stream of the
/// configured seed.
pub fn generate(cfg: &ScenarioConfig) -> Result<GeneratedInstance, GeneratorError> {
    cfg.validate()?;
    let (n, p, k) = (cfg.n, cfg.p, cfg.k);
    let seed = cfg.seed;

    let support = sorted_sample(&mut substream(seed, streams::SUPPORT), p, k);
    let outliers = sorted_sample(&mut substream(seed, streams::OUTLIERS), n, cfg.outlier_count());
    let mut is_outlier = vec![false; n];
    outliers.iter().for_each(|&i| is_outlier[i] = true);

    let range = match cfg.beta_sign {
        BetaSign::Positive => Uniform::new(5.0, 15.0),
        BetaSign::Negative => Uniform::new(-15.0, -5.0),
    }
    .expect("valid range");
    let mut rng = substream(seed, streams::COEFFICIENTS);
    let coefficients: Vec<f64> = (0..k).map(|_| rng.sample(range)).collect();

    let mut rng = substream(seed, streams::DESIGN);
    let mut x = Array2::from_shape_fn((n, p), |_| rng.sample::<f64, _>(StandardNormal));
    if cfg.rho > 0.0 {
        let mut shared = substream(seed, streams::SHARED_FACTOR);
        let (a, b) = (cfg.rho.sqrt(), (1.0 - cfg.rho).sqrt());
        for mut row in x.rows_mut() {
            let z: f64 = shared.sample(StandardNormal);
            row.mapv_inplace(|e| a * z + b * e);
        }
    }
    if cfg.leverage {
        let f = cfg.m.sqrt();
        for &i in &outliers {
            for &j in &support {
                x[[i, j]] *= f;
            }
        }
    }
    let others: Vec<usize> = (0..p).filter(|j| support.binary_search(j).is_err()).collect();
    let zeros = cfg.zero_count();
    if zeros > 0 {
        let mut rng = substream(seed, streams::ZEROS);
        for pos in index::sample(&mut rng, n * others.len(), zeros) {
            x[[pos / others.len(), others[pos % others.len()]]] = 0.0;
        }
    }

    let mut rng = substream(seed, streams::NOISE);
    let inflate = cfg.m.sqrt();
    let y = Array1::from_shape_fn(n, |i| {
        let z: f64 = rng.sample(StandardNormal);
        let (intercept, noise) = match cfg.outlier_mode {
            OutlierMode::Variance if is_outlier[i] => (cfg.beta0, cfg.sigma * inflate * z),
            OutlierMode::Mean if is_outlier[i] => (cfg.beta0 * cfg.m, cfg.sigma * z),
            _ => (cfg.beta0, cfg.sigma * z),
        };
        let signal: f64 = support.iter().zip(&coefficients).map(|(&j, b)| x[[i, j]] * b).sum();
        intercept + signal + noise
    });

    let names = (1..=p).map(|j| format!("x{j}")).collect();
    let dataset = Dataset::new(y, x, Some(names))?.with_response_name("y");
    Ok(GeneratedInstance {
        dataset,
        true_support: support,
        true_outliers: outliers,
        beta0: cfg.beta0,
        coefficients,
        config: cfg.clone(),
    })
}

impl GeneratedInstance {
    /// Writes `data.csv` and `truth.json` into `dir` (created if needed).
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), GeneratorError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.dataset.save_csv(dir.join("data.csv"))?;
        let truth = Truth {
            support: self.true_support.clone(),
            outliers: self.true_outliers.clone(),
            beta0: self.beta0,
            coefficients: self.coefficients.clone(),
            config: self.config.clone(),
        };
        let mut text = serde_json::to_string_pretty(&truth)?;
        text.push('\n');
        fs::write(dir.join("truth.json"), text)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, GeneratorError> {
        let dir = dir.as_ref();
        let dataset = data::load_csv(dir.join("data.csv"), &ColumnSelector::Name("y".into()), true)?;
        let truth: Truth = serde_json::from_str(&fs::read_to_string(dir.join("truth.json"))?)?;
        Ok(Self {
            dataset,
            true_support: truth.support,
            true_outliers: truth.outliers,
            beta0: truth.beta0,
            coefficients: truth.coefficients,
            config: truth.config,
        })
    }
}
