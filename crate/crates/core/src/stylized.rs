//! The two-factor, three-layer linear economy used as ground truth.
//!
//! Capital `K` and labour `L` are drawn from U(0, 1). Group 1 produces
//! `K + ε`, group 2 produces `−K + ε` and group 3 produces `L + ε` with
//! `ε ~ N(0, σ²)`. A six-weight linear network `{w_K1, w_K2, w_L1, w_L2,
//! w_H1, w_H2}` maps `(K, L)` to output through two middle units. Errors here
//! are square-free MSEs; the distance module works in RMSE and comparisons
//! take a square root at that boundary.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::{Features, N_INPUTS};
use crate::seed::{rng_from_seed, BoxMuller};

#[derive(Debug, Error, PartialEq)]
pub enum StylizedError {
    #[error("unsupported group {0}; expected 1, 2 or 3")]
    UnsupportedGroup(u8),
    #[error("unsupported pair `{0}`; expected 11, 12 or 13")]
    UnsupportedPair(String),
    #[error("unsupported mode `{0}`; expected ntf or tf")]
    UnsupportedMode(String),
    #[error("no samples")]
    Empty,
    #[error("sigma must be finite and non-negative, got {0}")]
    InvalidSigma(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Group {
    One,
    Two,
    Three,
}

impl Group {
    pub fn from_index(g: u8) -> Result<Self, StylizedError> {
        match g {
            1 => Ok(Group::One),
            2 => Ok(Group::Two),
            3 => Ok(Group::Three),
            other => Err(StylizedError::UnsupportedGroup(other)),
        }
    }

    pub fn index(self) -> u8 {
        match self {
            Group::One => 1,
            Group::Two => 2,
            Group::Three => 3,
        }
    }

    /// Noiseless output of the group's production rule.
    pub fn rule(self, k: f64, l: f64) -> f64 {
        match self {
            Group::One => k,
            Group::Two => -k,
            Group::Three => l,
        }
    }
}

/// Ordered pair of the group-1 model against a target group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Pair {
    P11,
    P12,
    P13,
}

impl Pair {
    pub const ALL: [Pair; 3] = [Pair::P11, Pair::P12, Pair::P13];

    pub fn target(self) -> Group {
        match self {
            Pair::P11 => Group::One,
            Pair::P12 => Group::Two,
            Pair::P13 => Group::Three,
        }
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Pair::P11 => "11",
            Pair::P12 => "12",
            Pair::P13 => "13",
        })
    }
}

impl FromStr for Pair {
    type Err = StylizedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "11" => Ok(Pair::P11),
            "12" => Ok(Pair::P12),
            "13" => Ok(Pair::P13),
            other => Err(StylizedError::UnsupportedPair(other.to_string())),
        }
    }
}

/// Whether the top layer may be re-optimised on the target group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mode {
    /// Acquiror weights used as-is.
    Ntf,
    /// Top-layer weights re-fitted.
    Tf,
}

impl Mode {
    pub const ALL: [Mode; 2] = [Mode::Ntf, Mode::Tf];
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Ntf => "NTF",
            Mode::Tf => "TF",
        })
    }
}

impl FromStr for Mode {
    type Err = StylizedError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ntf" => Ok(Mode::Ntf),
            "tf" => Ok(Mode::Tf),
            _ => Err(StylizedError::UnsupportedMode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearWeights {
    pub w_k1: f64,
    pub w_k2: f64,
    pub w_l1: f64,
    pub w_l2: f64,
    pub w_h1: f64,
    pub w_h2: f64,
}

impl LinearWeights {
    pub const fn new(w_k1: f64, w_k2: f64, w_l1: f64, w_l2: f64, w_h1: f64, w_h2: f64) -> Self {
        LinearWeights {
            w_k1,
            w_k2,
            w_l1,
            w_l2,
            w_h1,
            w_h2,
        }
    }

    /// `{1, 0, 0, 0, 1, 0}`: the group-1 optimum that passes K straight through.
    pub const fn group1_optimum() -> Self {
        Self::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0)
    }

    /// Composite capital weight `w_H1·w_K1 + w_H2·w_K2`.
    pub fn w_k(&self) -> f64 {
        self.w_h1 * self.w_k1 + self.w_h2 * self.w_k2
    }

    /// Composite labour weight `w_H1·w_L1 + w_H2·w_L2`.
    pub fn w_l(&self) -> f64 {
        self.w_h1 * self.w_l1 + self.w_h2 * self.w_l2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StylizedSample {
    pub k: f64,
    pub l: f64,
    pub y: f64,
    pub group: Group,
}

impl StylizedSample {
    /// `(K, L)` in the first two inputs, zeros elsewhere.
    pub fn features(&self) -> Features {
        let mut x = [0.0; N_INPUTS];
        x[0] = self.k;
        x[1] = self.l;
        x
    }
}

/// Draws `n` samples of a group's production rule. K and L come from
/// U(0, 1) and the noise from Box-Muller normals, all from one seeded stream
/// in the order K, L, ε per sample.
pub fn sample_group(
    group: Group,
    n: usize,
    sigma: f64,
    seed: u64,
) -> Result<Vec<StylizedSample>, StylizedError> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(StylizedError::InvalidSigma(sigma));
    }
    let mut rng = rng_from_seed(seed);
    let mut normal = BoxMuller::new();
    Ok((0..n)
        .map(|_| {
            let k = rng.random::<f64>();
            let l = rng.random::<f64>();
            let eps = sigma * normal.sample(&mut rng);
            StylizedSample {
                k,
                l,
                y: group.rule(k, l) + eps,
                group,
            }
        })
        .collect())
}

pub fn linear_forward(w: &LinearWeights, k: f64, l: f64) -> f64 {
    let h1 = w.w_k1 * k + w.w_l1 * l;
    let h2 = w.w_k2 * k + w.w_l2 * l;
    w.w_h1 * h1 + w.w_h2 * h2
}

/// Closed-form expected MSE of the group-1 model on the pair's target group.
pub fn analytic_mse(pair: Pair, sigma: f64, mode: Mode) -> f64 {
    let s2 = sigma * sigma;
    match (pair, mode) {
        (Pair::P11, _) => s2,
        (Pair::P12, Mode::Ntf) => 4.0 / 3.0 + s2,
        (Pair::P12, Mode::Tf) => s2,
        (Pair::P13, Mode::Ntf) => 13.0 / 6.0 + s2,
        (Pair::P13, Mode::Tf) => 4.0 / 3.0 + s2,
    }
}

/// Sample mean of `(linear_forward − y)²`.
pub fn empirical_mse(w: &LinearWeights, samples: &[StylizedSample]) -> Result<f64, StylizedError> {
    if samples.is_empty() {
        return Err(StylizedError::Empty);
    }
    let sse: f64 = samples
        .iter()
        .map(|s| (linear_forward(w, s.k, s.l) - s.y).powi(2))
        .sum();
    Ok(sse / samples.len() as f64)
}

/// Group-1 weights after re-fitting only the top layer to the target group.
pub fn optimal_tf_weights(pair: Pair) -> LinearWeights {
    let base = LinearWeights::group1_optimum();
    match pair {
        Pair::P11 => base,
        Pair::P12 => LinearWeights { w_h1: -1.0, ..base },
        Pair::P13 => LinearWeights { w_h1: 0.0, ..base },
    }
}

/// Weights evaluated for one oracle cell.
pub fn cell_weights(pair: Pair, mode: Mode) -> LinearWeights {
    match mode {
        Mode::Ntf => LinearWeights::group1_optimum(),
        Mode::Tf => optimal_tf_weights(pair),
    }
}

/// One row of the analytic-versus-Monte-Carlo comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleRow {
    pub pair: Pair,
    pub mode: Mode,
    pub sigma: f64,
    pub n: usize,
    pub analytic: f64,
    pub empirical: f64,
    pub abs_err: f64,
    /// `abs_err / analytic`; zero when both are zero, infinite when only the
    /// analytic value is zero.
    pub rel_err: f64,
}

impl OracleRow {
    pub fn within(&self, tolerance: f64) -> bool {
        self.rel_err <= tolerance
    }
}

/// Evaluates all six (pair, mode) cells. Group samples are drawn once per
/// target group with seeds `seed + group index`.
pub fn oracle_table(sigma: f64, n: usize, seed: u64) -> Result<Vec<OracleRow>, StylizedError> {
    if n == 0 {
        return Err(StylizedError::Empty);
    }
    let mut rows = Vec::with_capacity(6);
    for pair in Pair::ALL {
        let group = pair.target();
        let samples = sample_group(group, n, sigma, seed.wrapping_add(u64::from(group.index())))?;
        for mode in Mode::ALL {
            let analytic = analytic_mse(pair, sigma, mode);
            let empirical = empirical_mse(&cell_weights(pair, mode), &samples)?;
            let abs_err = (empirical - analytic).abs();
            let rel_err = if analytic == 0.0 {
                if abs_err == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                abs_err / analytic
            };
            rows.push(OracleRow {
                pair,
                mode,
                sigma,
                n,
                analytic,
                empirical,
                abs_err,
                rel_err,
            });
        }
    }
    Ok(rows)
}

pub fn write_oracle_csv<W: std::io::Write>(writer: W, rows: &[OracleRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "pair", "mode", "sigma", "n", "analytic", "empirical", "abs_err", "rel_err",
    ])?;
    for r in rows {
        w.write_record([
            r.pair.to_string(),
            r.mode.to_string(),
            r.sigma.to_string(),
            r.n.to_string(),
            r.analytic.to_string(),
            r.empirical.to_string(),
            r.abs_err.to_string(),
            r.rel_err.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
