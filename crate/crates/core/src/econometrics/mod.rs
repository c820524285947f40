//! Regression machinery for the deal-level and pair-year analyses: OLS with
//! absorbed fixed effects and year-clustered errors, probit MLE with average
//! marginal effects, residual orthogonalisation, market-model CARs,
//! correlations and a synthetic data-generating process with planted
//! parameters.

mod car;
mod frame;
mod ols;
mod pipeline;
mod probit;
mod stats;
mod synthetic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use car::{
    combine_car, market_model_car, market_model_fit, CarWindow, CombineMode, EstimationWindow,
};
pub use frame::Frame;
pub use ols::{ols_fe, orthogonalize, within_transform};
pub use pipeline::{
    build_table_pipeline, default_specs, write_report_csv, DataSource, ReportEntry, TableSpec,
};
pub use probit::{normal_cdf, normal_pdf, probit_fit, probit_log_likelihood, probit_score};
pub use stats::correlation;
pub use synthetic::{
    deals_frame, expected_log1p_poisson, generate_synthetic_deals, pair_frame,
    synthetic_distance_series, CarParams, ControlParams, DealParams, DealRecord, LatentIndex,
    SyntheticDeals, SyntheticDistanceParams,
};

#[derive(Debug, Error)]
pub enum EconError {
    #[error("column `{0}` not found")]
    MissingColumn(String),
    #[error("column `{column}` has {got} rows, frame has {expected}")]
    ColumnLength {
        column: String,
        expected: usize,
        got: usize,
    },
    #[error("column `{column}` line {line}: non-numeric value `{value}`")]
    NonNumeric {
        column: String,
        line: usize,
        value: String,
    },
    #[error("label column `{0}` must hold finite integers")]
    NonIntegerLabel(String),
    #[error("regressors are collinear after fixed-effect absorption")]
    Collinear,
    #[error("{n_obs} observations cannot identify {n_params} parameters")]
    InsufficientObservations { n_obs: usize, n_params: usize },
    #[error("clustered errors need at least 2 clusters, found {0}")]
    TooFewClusters(usize),
    #[error("dependent variable of a probit must be 0 or 1")]
    NonBinaryDependent,
    #[error("perfect separation: coefficients diverge")]
    PerfectSeparation,
    #[error("Newton-Raphson did not converge in {iterations} iterations (max |score| {score})")]
    NonConvergence { iterations: usize, score: f64 },
    #[error("need at least {needed} estimation-window returns, found {found}")]
    InsufficientEstimationData { needed: usize, found: usize },
    #[error("event window return missing at series index {0}")]
    MissingEventReturn(i64),
    #[error("market values must be positive for value weighting")]
    NonPositiveMarketValue,
    #[error("input has zero variance")]
    ConstantInput,
    #[error("inputs must have equal length of at least {min}, got {x} and {y}")]
    BadLengths { x: usize, y: usize, min: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    #[default]
    Ols,
    Probit,
}

/// One specification to estimate.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressionSpec {
    pub name: String,
    pub dependent: String,
    pub regressors: Vec<String>,
    /// Label columns absorbed (OLS) or entered as dummies (probit).
    #[serde(default)]
    pub fixed_effects: Vec<String>,
    /// Label column defining clusters; `None` gives classical errors.
    #[serde(default)]
    pub cluster: Option<String>,
    #[serde(default)]
    pub model: Model,
}

impl RegressionSpec {
    pub fn ols(name: &str, dependent: &str, regressors: &[&str]) -> Self {
        RegressionSpec {
            name: name.into(),
            dependent: dependent.into(),
            regressors: regressors.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    pub fn probit(name: &str, dependent: &str, regressors: &[&str]) -> Self {
        RegressionSpec {
            model: Model::Probit,
            ..Self::ols(name, dependent, regressors)
        }
    }

    pub fn fe(mut self, dims: &[&str]) -> Self {
        self.fixed_effects = dims.iter().map(|s| s.to_string()).collect();
        self
    }

    pub fn cluster(mut self, column: &str) -> Self {
        self.cluster = Some(column.into());
        self
    }

    /// Every column the spec reads.
    pub fn columns(&self) -> Vec<&str> {
        let mut cols = vec![self.dependent.as_str()];
        cols.extend(self.regressors.iter().map(String::as_str));
        cols.extend(self.fixed_effects.iter().map(String::as_str));
        cols.extend(self.cluster.as_deref());
        cols
    }
}

/// Significance stars at the 10/5/1% levels.
pub fn stars(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.10 {
        "*"
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
    pub stars: String,
}

impl Coefficient {
    fn new(name: &str, estimate: f64, se: f64, p_of_t: impl Fn(f64) -> f64) -> Self {
        let t = estimate / se;
        let p = p_of_t(t);
        Coefficient {
            name: name.to_string(),
            estimate,
            se,
            t,
            p,
            stars: stars(p).to_string(),
        }
    }

    /// Two-sided confidence interval with the given critical value.
    pub fn interval(&self, critical: f64) -> (f64, f64) {
        (self.estimate - critical * self.se, self.estimate + critical * self.se)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub spec: String,
    pub model: Model,
    /// Reported coefficients: intercept (when estimated) and regressors.
    /// Fixed-effect parameters are not listed.
    pub coefficients: Vec<Coefficient>,
    /// Covariance of the reported coefficients.
    pub covariance: Vec<Vec<f64>>,
    pub n_obs: usize,
    pub n_clusters: Option<usize>,
    /// Degrees of freedom used for t-based p-values (OLS only).
    pub df: Option<f64>,
    pub r_squared: Option<f64>,
    pub within_r_squared: Option<f64>,
    pub pseudo_r_squared: Option<f64>,
    pub log_likelihood: Option<f64>,
    pub marginal_effects: Vec<Coefficient>,
    pub iterations: usize,
}

impl RegressionResult {
    pub fn coef(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn ame(&self, name: &str) -> Option<&Coefficient> {
        self.marginal_effects.iter().find(|c| c.name == name)
    }

    /// Critical value for a two-sided interval at `level` (e.g. 0.95).
    pub fn critical_value(&self, level: f64) -> f64 {
        use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
        let q = 0.5 + level / 2.0;
        match self.df {
            Some(df) => StudentsT::new(0.0, 1.0, df).expect("df > 0").inverse_cdf(q),
            None => Normal::standard().inverse_cdf(q),
        }
    }
}

/// Keeps rows where every listed column is finite.
pub(crate) fn complete_rows(frame: &Frame, columns: &[&str]) -> Result<Frame, EconError> {
    let mut keep = vec![true; frame.n_rows()];
    for c in columns {
        for (k, v) in keep.iter_mut().zip(frame.column(c)?) {
            *k &= v.is_finite();
        }
    }
    Ok(if keep.iter().all(|&k| k) {
        frame.clone()
    } else {
        frame.filter(&keep)
    })
}
