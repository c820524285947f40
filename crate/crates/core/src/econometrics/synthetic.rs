//! Synthetic distances and deals with planted parameters.
//!
//! Pair-year counts are Poisson with
//! `log μ = λ₀ + γ·log d_U + γ_tf·r + γ_int·log d_U·r + year + acquiror + target`,
//! where `r` is the TF residual (log d_TF orthogonalised on log d_U and the
//! three fixed-effect dimensions). Each deal then draws controls, probit
//! completion and survival outcomes, and market-model CARs.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::car::{combine_car, market_model_car, CarWindow, CombineMode, EstimationWindow};
use super::ols::orthogonalize;
use super::{EconError, Frame};
use crate::distance::{DistanceMatrix, DistanceRecord};
use crate::seed::{derive_seed, rng_from_seed, BoxMuller, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticDistanceParams {
    pub n_industries: u8,
    pub first_year: i32,
    pub n_years: usize,
    /// Mean and spread of the persistent pair component of log d_U.
    pub pair_mean: f64,
    pub pair_sd: f64,
    pub year_sd: f64,
    pub noise_sd: f64,
    /// log d_TF = s·log d_U with s uniform on this range (when log d_U ≥ 0).
    pub tf_share_min: f64,
    pub tf_share_max: f64,
}

impl Default for SyntheticDistanceParams {
    fn default() -> Self {
        SyntheticDistanceParams {
            n_industries: 12,
            first_year: 1987,
            n_years: 32,
            pair_mean: 0.28,
            pair_sd: 0.12,
            year_sd: 0.04,
            noise_sd: 0.06,
            tf_share_min: 0.2,
            tf_share_max: 1.0,
        }
    }
}

impl SyntheticDistanceParams {
    pub fn validate(&self) -> Result<(), EconError> {
        let finite = [
            self.pair_mean,
            self.pair_sd,
            self.year_sd,
            self.noise_sd,
            self.tf_share_min,
            self.tf_share_max,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite || self.pair_sd < 0.0 || self.year_sd < 0.0 || self.noise_sd < 0.0 {
            return Err(EconError::InvalidParameter("distance spreads must be finite and ≥ 0".into()));
        }
        if !(0.0 <= self.tf_share_min && self.tf_share_min <= self.tf_share_max && self.tf_share_max <= 1.0) {
            return Err(EconError::InvalidParameter("need 0 ≤ tf_share_min ≤ tf_share_max ≤ 1".into()));
        }
        if self.n_industries == 0 || self.n_years == 0 {
            return Err(EconError::InvalidParameter("need at least one industry and year".into()));
        }
        Ok(())
    }
}

/// Distance matrices with d_U(A,A) = d_TF(A,A) = 1 and d_TF ≤ d_U.
pub fn synthetic_distance_series(
    params: &SyntheticDistanceParams,
    seed: u64,
) -> Result<Vec<DistanceMatrix>, EconError> {
    params.validate()?;
    let m = params.n_industries as usize;
    let mut rng = rng_from_seed(derive_seed(seed, "distances"));
    let mut bm = BoxMuller::new();
    let pair: Vec<f64> = (0..m * m)
        .map(|_| params.pair_mean + params.pair_sd * bm.sample(&mut rng))
        .collect();
    let industries: Vec<u8> = (1..=params.n_industries).collect();
    let mut out = Vec::with_capacity(params.n_years);
    for y in 0..params.n_years {
        let year = params.first_year + y as i32;
        let shock = params.year_sd * bm.sample(&mut rng);
        let mut records = Vec::with_capacity(m * m);
        for a in 0..m {
            for t in 0..m {
                let noise = params.noise_sd * bm.sample(&mut rng);
                let share = rng.random_range(params.tf_share_min..=params.tf_share_max);
                let (log_u, log_tf) = if a == t {
                    (0.0, 0.0)
                } else {
                    let lu = pair[a * m + t] + shock + noise;
                    (lu, if lu >= 0.0 { share * lu } else { lu })
                };
                let (d_u, d_tf) = (log_u.exp(), log_tf.exp());
                records.push(DistanceRecord {
                    year,
                    acquiror_industry: industries[a],
                    target_industry: industries[t],
                    d_u,
                    d_tf,
                    log_d_u: log_u,
                    log_d_tf: log_tf,
                    rmse_cross: d_u,
                    rmse_tf: d_tf,
                    rmse_own: 1.0,
                });
            }
        }
        out.push(DistanceMatrix::from_records(year, industries.clone(), records));
    }
    Ok(out)
}

/// Probit index `intercept + Σ coefficient·column`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentIndex {
    pub intercept: f64,
    #[serde(default)]
    pub coefficients: BTreeMap<String, f64>,
}

impl LatentIndex {
    fn new(intercept: f64, coefficients: &[(&str, f64)]) -> Self {
        LatentIndex {
            intercept,
            coefficients: coefficients.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }

    fn validate(&self) -> Result<(), EconError> {
        if !self.intercept.is_finite() {
            return Err(EconError::InvalidParameter("latent intercept must be finite".into()));
        }
        for (name, beta) in &self.coefficients {
            if !DealRecord::NUMERIC.contains(&name.as_str()) {
                return Err(EconError::InvalidParameter(format!(
                    "latent index references unknown deal column `{name}`"
                )));
            }
            if !beta.is_finite() {
                return Err(EconError::InvalidParameter(format!("coefficient on `{name}` must be finite")));
            }
        }
        Ok(())
    }

    fn eval(&self, deal: &DealRecord) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .map(|(k, b)| b * deal.value(k).expect("validated column"))
                .sum::<f64>()
    }
}

/// `car = intercept + log_d_u·log d_U + noise_sd·ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CarParams {
    pub intercept: f64,
    pub log_d_u: f64,
    pub noise_sd: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlParams {
    pub p_hostile: f64,
    pub p_high_tech: f64,
    pub p_tender: f64,
    pub p_stock_deal: f64,
    pub log_relative_size_mean: f64,
    pub log_relative_size_sd: f64,
}

impl Default for ControlParams {
    fn default() -> Self {
        ControlParams {
            p_hostile: 0.05,
            p_high_tech: 0.3,
            p_tender: 0.15,
            p_stock_deal: 0.4,
            log_relative_size_mean: -1.5,
            log_relative_size_sd: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DealParams {
    pub lambda0: f64,
    pub gamma_count: f64,
    pub gamma_tf: f64,
    pub gamma_interaction: f64,
    pub year_effect_sd: f64,
    pub industry_effect_sd: f64,
    pub completion: LatentIndex,
    pub survival_t1: LatentIndex,
    pub survival_t2: LatentIndex,
    pub car_acquiror: CarParams,
    pub car_target: CarParams,
    pub controls: ControlParams,
    /// Simulate daily returns and estimate CARs with the market model
    /// instead of recording the planted CARs directly.
    pub simulate_returns: bool,
}

impl Default for DealParams {
    fn default() -> Self {
        DealParams {
            lambda0: 1.0,
            gamma_count: -3.0,
            gamma_tf: -1.0,
            gamma_interaction: -20.0,
            year_effect_sd: 0.2,
            industry_effect_sd: 0.2,
            completion: LatentIndex::new(
                1.2,
                &[("log_d_u", -1.0), ("hostile", -1.0), ("tender", 0.5), ("relative_size", -0.1)],
            ),
            survival_t1: LatentIndex::new(1.5, &[("log_d_u", -0.8), ("acq_log_size", 0.05)]),
            survival_t2: LatentIndex::new(1.2, &[("log_d_u", -1.0), ("acq_log_size", 0.05)]),
            car_acquiror: CarParams {
                intercept: -0.005,
                log_d_u: -0.02,
                noise_sd: 0.03,
            },
            car_target: CarParams {
                intercept: 0.15,
                log_d_u: -0.05,
                noise_sd: 0.08,
            },
            controls: ControlParams::default(),
            simulate_returns: true,
        }
    }
}

impl DealParams {
    /// Same process with no distance dependence in the deal counts.
    pub fn null() -> Self {
        DealParams {
            gamma_count: 0.0,
            gamma_tf: 0.0,
            gamma_interaction: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), EconError> {
        let scalars = [
            self.lambda0,
            self.gamma_count,
            self.gamma_tf,
            self.gamma_interaction,
            self.year_effect_sd,
            self.industry_effect_sd,
            self.car_acquiror.intercept,
            self.car_acquiror.log_d_u,
            self.car_acquiror.noise_sd,
            self.car_target.intercept,
            self.car_target.log_d_u,
            self.car_target.noise_sd,
            self.controls.log_relative_size_mean,
            self.controls.log_relative_size_sd,
        ];
        if scalars.iter().any(|v| !v.is_finite()) {
            return Err(EconError::InvalidParameter("deal parameters must be finite".into()));
        }
        let c = &self.controls;
        for p in [c.p_hostile, c.p_high_tech, c.p_tender, c.p_stock_deal] {
            if !(0.0..=1.0).contains(&p) {
                return Err(EconError::InvalidParameter(format!("probability {p} outside [0, 1]")));
            }
        }
        if self.year_effect_sd < 0.0
            || self.industry_effect_sd < 0.0
            || self.car_acquiror.noise_sd < 0.0
            || self.car_target.noise_sd < 0.0
            || c.log_relative_size_sd < 0.0
        {
            return Err(EconError::InvalidParameter("standard deviations must be ≥ 0".into()));
        }
        self.completion.validate()?;
        self.survival_t1.validate()?;
        self.survival_t2.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DealRecord {
    pub year: i32,
    pub acq_ind: u8,
    pub tgt_ind: u8,
    pub log_d_u: f64,
    pub log_d_tf: f64,
    pub tf_resid: f64,
    pub completed: u8,
    pub diversify: u8,
    pub hostile: u8,
    pub high_tech: u8,
    pub tender: u8,
    pub stock_deal: u8,
    pub relative_size: f64,
    pub acq_log_size: f64,
    pub acq_leverage: f64,
    pub tgt_log_size: f64,
    pub tgt_leverage: f64,
    pub car_acq: f64,
    pub car_tgt: f64,
    pub car_ew: f64,
    pub car_vw: f64,
    pub survival_t1: u8,
    pub survival_t2: u8,
}

impl DealRecord {
    pub const COLUMNS: [&'static str; 23] = [
        "year",
        "acq_ind",
        "tgt_ind",
        "log_d_u",
        "log_d_tf",
        "tf_resid",
        "completed",
        "diversify",
        "hostile",
        "high_tech",
        "tender",
        "stock_deal",
        "relative_size",
        "acq_log_size",
        "acq_leverage",
        "tgt_log_size",
        "tgt_leverage",
        "car_acq",
        "car_tgt",
        "car_ew",
        "car_vw",
        "survival_t1",
        "survival_t2",
    ];

    /// Columns a latent index may reference (known before outcomes are drawn).
    const NUMERIC: [&'static str; 13] = [
        "log_d_u",
        "log_d_tf",
        "tf_resid",
        "diversify",
        "hostile",
        "high_tech",
        "tender",
        "stock_deal",
        "relative_size",
        "acq_log_size",
        "acq_leverage",
        "tgt_log_size",
        "tgt_leverage",
    ];

    pub fn value(&self, column: &str) -> Option<f64> {
        Some(match column {
            "year" => self.year as f64,
            "acq_ind" => self.acq_ind as f64,
            "tgt_ind" => self.tgt_ind as f64,
            "log_d_u" => self.log_d_u,
            "log_d_tf" => self.log_d_tf,
            "tf_resid" => self.tf_resid,
            "completed" => self.completed as f64,
            "diversify" => self.diversify as f64,
            "hostile" => self.hostile as f64,
            "high_tech" => self.high_tech as f64,
            "tender" => self.tender as f64,
            "stock_deal" => self.stock_deal as f64,
            "relative_size" => self.relative_size,
            "acq_log_size" => self.acq_log_size,
            "acq_leverage" => self.acq_leverage,
            "tgt_log_size" => self.tgt_log_size,
            "tgt_leverage" => self.tgt_leverage,
            "car_acq" => self.car_acq,
            "car_tgt" => self.car_tgt,
            "car_ew" => self.car_ew,
            "car_vw" => self.car_vw,
            "survival_t1" => self.survival_t1 as f64,
            "survival_t2" => self.survival_t2 as f64,
            _ => return None,
        })
    }
}

pub fn deals_frame(deals: &[DealRecord]) -> Frame {
    let mut frame = Frame::new();
    for name in DealRecord::COLUMNS {
        let col = deals.iter().map(|d| d.value(name).expect("listed column")).collect();
        frame.set(name, col).expect("equal lengths");
    }
    frame
}

/// `E[ln(1 + N)]` for `N ~ Poisson(μ)`.
pub fn expected_log1p_poisson(mu: f64) -> f64 {
    if mu <= 0.0 {
        return 0.0;
    }
    let upper = (mu + 12.0 * mu.sqrt() + 40.0).ceil() as u64;
    let mut log_pmf = -mu;
    let mut sum = 0.0;
    for k in 1..=upper {
        log_pmf += mu.ln() - (k as f64).ln();
        sum += log_pmf.exp() * ((k + 1) as f64).ln();
    }
    sum
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDeals {
    /// One row per (year, acquiror industry, target industry).
    pub pairs: Frame,
    pub deals: Vec<DealRecord>,
}

/// Pair-year frame with distances, TF residual and interaction.
pub fn pair_frame(matrices: &[DistanceMatrix]) -> Result<Frame, EconError> {
    let records: Vec<&DistanceRecord> = matrices.iter().flat_map(|m| m.records.iter()).collect();
    if records.is_empty() {
        return Err(EconError::InvalidParameter("no distance records".into()));
    }
    if records.iter().any(|r| !(r.log_d_u.is_finite() && r.log_d_tf.is_finite())) {
        return Err(EconError::InvalidParameter("distances must be finite for every pair".into()));
    }
    let col = |f: fn(&DistanceRecord) -> f64| records.iter().map(|r| f(r)).collect::<Vec<f64>>();
    let max_id = records
        .iter()
        .map(|r| r.acquiror_industry.max(r.target_industry) as f64)
        .fold(0.0, f64::max)
        + 1.0;
    let mut frame = Frame::new()
        .with("year", col(|r| r.year as f64))?
        .with("acq_ind", col(|r| r.acquiror_industry as f64))?
        .with("tgt_ind", col(|r| r.target_industry as f64))?
        .with(
            "pair_id",
            records
                .iter()
                .map(|r| r.acquiror_industry as f64 * max_id + r.target_industry as f64)
                .collect(),
        )?
        .with("d_u", col(|r| r.d_u))?
        .with("d_tf", col(|r| r.d_tf))?
        .with("log_d_u", col(|r| r.log_d_u))?
        .with("log_d_tf", col(|r| r.log_d_tf))?;
    let resid = orthogonalize("log_d_tf", &["log_d_u"], &["year", "acq_ind", "tgt_ind"], &frame)?;
    let interaction = frame.column("log_d_u")?.iter().zip(&resid).map(|(u, r)| u * r).collect();
    frame.set("tf_resid", resid)?;
    frame.set("interaction", interaction)?;
    Ok(frame)
}

fn effects(rng: &mut SeededRng, bm: &mut BoxMuller, n: usize, sd: f64) -> Vec<f64> {
    (0..n).map(|_| sd * bm.sample(rng)).collect()
}

fn bernoulli(rng: &mut SeededRng, p: f64) -> u8 {
    u8::from(rng.random::<f64>() < p)
}

struct ReturnSim<'a> {
    rng: &'a mut SeededRng,
    bm: &'a mut BoxMuller,
}

impl ReturnSim<'_> {
    const DAYS: usize = 300;
    const EVENT: usize = 290;

    /// Simulates returns with the given total abnormal return spread over
    /// days −1..+1 and estimates the (−1,+1) market-model CAR.
    fn car(&mut self, planted: f64) -> f64 {
        let beta = 0.6 + 0.8 * self.rng.random::<f64>();
        let alpha = 0.0002 * self.bm.sample(self.rng);
        let market: Vec<f64> = (0..Self::DAYS)
            .map(|_| 0.0004 + 0.01 * self.bm.sample(self.rng))
            .collect();
        let stock: Vec<f64> = market
            .iter()
            .enumerate()
            .map(|(i, m)| {
                let abnormal = if (Self::EVENT - 1..=Self::EVENT + 1).contains(&i) {
                    planted / 3.0
                } else {
                    0.0
                };
                alpha + beta * m + 0.015 * self.bm.sample(self.rng) + abnormal
            })
            .collect();
        market_model_car(
            &stock,
            &market,
            Self::EVENT,
            CarWindow::THREE_DAY,
            &EstimationWindow::default(),
        )
        .expect("simulated series cover both windows")
    }
}

/// Draws pair-year deal counts and deal records over the given distance
/// series. Deterministic in `seed`.
pub fn generate_synthetic_deals(
    matrices: &[DistanceMatrix],
    params: &DealParams,
    seed: u64,
) -> Result<SyntheticDeals, EconError> {
    params.validate()?;
    let mut pairs = pair_frame(matrices)?;
    let years: Vec<f64> = pairs.column("year")?.to_vec();
    let acq: Vec<f64> = pairs.column("acq_ind")?.to_vec();
    let tgt: Vec<f64> = pairs.column("tgt_ind")?.to_vec();
    let log_u = pairs.column("log_d_u")?.to_vec();
    let log_tf = pairs.column("log_d_tf")?.to_vec();
    let resid = pairs.column("tf_resid")?.to_vec();
    let n = pairs.n_rows();

    let (year_codes, n_years) = pairs.labels("year")?;
    let (acq_codes, n_acq) = pairs.labels("acq_ind")?;
    let (tgt_codes, n_tgt) = pairs.labels("tgt_ind")?;
    let mut rng = rng_from_seed(derive_seed(seed, "effects"));
    let mut bm = BoxMuller::new();
    let year_fx = effects(&mut rng, &mut bm, n_years, params.year_effect_sd);
    let acq_fx = effects(&mut rng, &mut bm, n_acq, params.industry_effect_sd);
    let tgt_fx = effects(&mut rng, &mut bm, n_tgt, params.industry_effect_sd);

    let mu: Vec<f64> = (0..n)
        .map(|i| {
            (params.lambda0
                + params.gamma_count * log_u[i]
                + params.gamma_tf * resid[i]
                + params.gamma_interaction * log_u[i] * resid[i]
                + year_fx[year_codes[i]]
                + acq_fx[acq_codes[i]]
                + tgt_fx[tgt_codes[i]])
                .exp()
        })
        .collect();
    if mu.iter().any(|m| !m.is_finite()) {
        return Err(EconError::InvalidParameter("Poisson intensity overflowed".into()));
    }

    let mut rng = rng_from_seed(derive_seed(seed, "counts"));
    let counts: Vec<u64> = mu
        .iter()
        .map(|&m| Poisson::new(m).map(|d| d.sample(&mut rng) as u64).unwrap_or(0))
        .collect();

    let mut rng = rng_from_seed(derive_seed(seed, "deals"));
    let mut bm = BoxMuller::new();
    let c = params.controls;
    let mut deals = Vec::with_capacity(counts.iter().sum::<u64>() as usize);
    for i in 0..n {
        for _ in 0..counts[i] {
            let mut d = DealRecord {
                year: years[i] as i32,
                acq_ind: acq[i] as u8,
                tgt_ind: tgt[i] as u8,
                log_d_u: log_u[i],
                log_d_tf: log_tf[i],
                tf_resid: resid[i],
                completed: 0,
                diversify: u8::from(acq[i] != tgt[i]),
                hostile: bernoulli(&mut rng, c.p_hostile),
                high_tech: bernoulli(&mut rng, c.p_high_tech),
                tender: bernoulli(&mut rng, c.p_tender),
                stock_deal: bernoulli(&mut rng, c.p_stock_deal),
                relative_size: (c.log_relative_size_mean
                    + c.log_relative_size_sd * bm.sample(&mut rng))
                .exp(),
                acq_log_size: 7.0 + 1.5 * bm.sample(&mut rng),
                acq_leverage: 0.6 * rng.random::<f64>(),
                tgt_log_size: 0.0,
                tgt_leverage: 0.6 * rng.random::<f64>(),
                car_acq: 0.0,
                car_tgt: 0.0,
                car_ew: 0.0,
                car_vw: 0.0,
                survival_t1: 0,
                survival_t2: 0,
            };
            d.tgt_log_size = d.acq_log_size + d.relative_size.ln();
            d.completed = u8::from(params.completion.eval(&d) + bm.sample(&mut rng) > 0.0);
            d.survival_t1 = u8::from(params.survival_t1.eval(&d) + bm.sample(&mut rng) > 0.0);
            d.survival_t2 = u8::from(params.survival_t2.eval(&d) + bm.sample(&mut rng) > 0.0);
            let planted = |p: &CarParams, z: f64| p.intercept + p.log_d_u * d.log_d_u + p.noise_sd * z;
            let car_acq = planted(&params.car_acquiror, bm.sample(&mut rng));
            let car_tgt = planted(&params.car_target, bm.sample(&mut rng));
            (d.car_acq, d.car_tgt) = if params.simulate_returns {
                let mut sim = ReturnSim {
                    rng: &mut rng,
                    bm: &mut bm,
                };
                (sim.car(car_acq), sim.car(car_tgt))
            } else {
                (car_acq, car_tgt)
            };
            d.car_ew = combine_car(d.car_acq, d.car_tgt, 1.0, 1.0, CombineMode::Equal)?;
            d.car_vw = combine_car(
                d.car_acq,
                d.car_tgt,
                d.acq_log_size.exp(),
                d.tgt_log_size.exp(),
                CombineMode::Value,
            )?;
            deals.push(d);
        }
    }

    pairs.set("mu", mu.clone())?;
    pairs.set("n_deals", counts.iter().map(|&k| k as f64).collect())?;
    pairs.set("log_n_deals", counts.iter().map(|&k| (k as f64).ln_1p()).collect())?;
    pairs.set("expected_log_n_deals", mu.iter().map(|&m| expected_log1p_poisson(m)).collect())?;
    Ok(SyntheticDeals { pairs, deals })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::econometrics::correlation;

    fn small() -> SyntheticDistanceParams {
        SyntheticDistanceParams {
            n_industries: 4,
            n_years: 6,
            ..Default::default()
        }
    }

    #[test]
    fn distance_series_shape_and_identities() {
        let series = synthetic_distance_series(&Default::default(), 3).unwrap();
        assert_eq!(series.len(), 32);
        let rows: usize = series.iter().map(|m| m.records.len()).sum();
        assert_eq!(rows, 4608);
        for m in &series {
            for r in &m.records {
                if r.acquiror_industry == r.target_industry {
                    assert_eq!((r.d_u, r.d_tf), (1.0, 1.0));
                }
                assert!(r.d_tf <= r.d_u + 1e-12);
            }
        }
    }

    #[test]
    fn poisson_log_expectation() {
        assert_eq!(expected_log1p_poisson(0.0), 0.0);
        // μ small: E ≈ μ·ln 2 to first order.
        assert!((expected_log1p_poisson(1e-6) - 1e-6 * 2f64.ln()).abs() < 1e-11);
        let mu: f64 = 3.7;
        let mut rng = rng_from_seed(9);
        let pois = Poisson::new(mu).unwrap();
        let n = 400_000;
        let mc: f64 = (0..n).map(|_| (pois.sample(&mut rng) as f64).ln_1p()).sum::<f64>() / n as f64;
        assert!((mc - expected_log1p_poisson(mu)).abs() < 3e-3);
    }

    #[test]
    fn same_seed_same_panel() {
        let series = synthetic_distance_series(&small(), 1).unwrap();
        let a = generate_synthetic_deals(&series, &DealParams::default(), 42).unwrap();
        let b = generate_synthetic_deals(&series, &DealParams::default(), 42).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_deals(&series, &DealParams::default(), 43).unwrap();
        assert_ne!(a.pairs.column("n_deals").unwrap(), c.pairs.column("n_deals").unwrap());
    }

    #[test]
    fn deal_fields_are_valid() {
        let series = synthetic_distance_series(&small(), 2).unwrap();
        let s = generate_synthetic_deals(&series, &DealParams::default(), 5).unwrap();
        assert!(!s.deals.is_empty());
        let total: f64 = s.pairs.column("n_deals").unwrap().iter().sum();
        assert_eq!(total as usize, s.deals.len());
        for d in &s.deals {
            for v in [d.completed, d.diversify, d.hostile, d.tender, d.survival_t1, d.survival_t2] {
                assert!(v <= 1);
            }
            assert!(d.relative_size > 0.0);
            assert!(d.car_vw.is_finite() && d.car_ew.is_finite());
        }
        let f = deals_frame(&s.deals);
        assert_eq!(f.n_rows(), s.deals.len());
        let inter = s.pairs.column("interaction").unwrap();
        let u = s.pairs.column("log_d_u").unwrap();
        let r = s.pairs.column("tf_resid").unwrap();
        for i in 0..inter.len() {
            assert_eq!(inter[i], u[i] * r[i]);
        }
    }

    #[test]
    fn null_counts_are_uncorrelated_with_distance() {
        let series = synthetic_distance_series(&Default::default(), 7).unwrap();
        let params = DealParams {
            year_effect_sd: 0.0,
            industry_effect_sd: 0.0,
            simulate_returns: false,
            ..DealParams::null()
        };
        let s = generate_synthetic_deals(&series, &params, 8).unwrap();
        let (r, _) = correlation(s.pairs.column("n_deals").unwrap(), s.pairs.column("log_d_u").unwrap()).unwrap();
        // 4,608 rows: the null standard error of r is about 0.015.
        assert!(r.abs() < 0.06, "r = {r}");
    }

    #[test]
    fn invalid_params_rejected() {
        let series = synthetic_distance_series(&small(), 1).unwrap();
        let mut p = DealParams::default();
        p.gamma_count = f64::NAN;
        assert!(generate_synthetic_deals(&series, &p, 1).is_err());
        let mut p = DealParams::default();
        p.completion.coefficients.insert("completed".into(), 1.0);
        assert!(generate_synthetic_deals(&series, &p, 1).is_err());
        let bad = SyntheticDistanceParams {
            tf_share_max: 1.5,
            ..Default::default()
        };
        assert!(synthetic_distance_series(&bad, 1).is_err());
    }
}
