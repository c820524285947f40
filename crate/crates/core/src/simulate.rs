//! Synthetic firm-year panels with industry-specific production functions.
//!
//! Each industry gets its own random map from the eight firm inputs to log
//! Tobin's Q and ROA: a linear part plus a `tanh` ridge. Raw accounting
//! fields are then backed out so that the panel loader recovers those
//! outcomes exactly.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::neural::{Features, N_INPUTS};
use crate::panel::{FirmYear, MIN_TOTAL_ASSETS};
use crate::seed::{derive_seed, rng_from_seed, BoxMuller, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FirmPanelParams {
    pub n_industries: u8,
    pub first_year: i32,
    pub n_years: usize,
    pub firms_per_industry: usize,
    /// Scale of industry-specific coefficients.
    pub heterogeneity: f64,
    pub nonlinearity: f64,
    pub noise_sd: f64,
}

impl Default for FirmPanelParams {
    fn default() -> Self {
        FirmPanelParams {
            n_industries: 12,
            first_year: 1987,
            n_years: 32,
            firms_per_industry: 40,
            heterogeneity: 0.3,
            nonlinearity: 0.2,
            noise_sd: 0.1,
        }
    }
}

impl FirmPanelParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.n_industries == 0 || self.n_years == 0 || self.firms_per_industry == 0 {
            return Err("industries, years and firms per industry must be positive".into());
        }
        for (name, v) in [
            ("heterogeneity", self.heterogeneity),
            ("nonlinearity", self.nonlinearity),
            ("noise_sd", self.noise_sd),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(format!("{name} must be finite and non-negative"));
            }
        }
        Ok(())
    }
}

/// Feature means and spreads used to standardise inputs inside the
/// production functions.
const CENTER: Features = [5.5, 0.06, 0.05, 0.2, 0.01, 0.3, 0.01, 0.03];
const SPREAD: Features = [1.2, 0.03, 0.03, 0.1, 0.005, 0.15, 0.008, 0.03];

struct Technology {
    q_linear: Features,
    q_ridge: Features,
    roa_linear: Features,
    q_level: f64,
    roa_level: f64,
}

impl Technology {
    fn draw(rng: &mut SeededRng, bm: &mut BoxMuller, p: &FirmPanelParams) -> Self {
        let mut vec = |scale: f64| {
            let mut v = [0.0; N_INPUTS];
            for x in &mut v {
                *x = scale * bm.sample(rng);
            }
            v
        };
        let q_linear = vec(p.heterogeneity);
        let q_ridge = vec(1.0);
        let roa_linear = vec(0.2 * p.heterogeneity);
        Technology {
            q_linear,
            q_ridge,
            roa_linear,
            q_level: 0.3 + 0.2 * rng.random::<f64>(),
            roa_level: 0.08 + 0.06 * rng.random::<f64>(),
        }
    }

    fn outcomes(&self, z: &Features, nonlinearity: f64) -> (f64, f64) {
        let dot = |w: &Features| w.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
        let log_q = self.q_level + dot(&self.q_linear) + nonlinearity * dot(&self.q_ridge).tanh();
        let roa = self.roa_level + 0.1 * dot(&self.roa_linear).tanh();
        (log_q, roa)
    }
}

fn draw_inputs(rng: &mut SeededRng, bm: &mut BoxMuller, firm_size: f64) -> Features {
    let mut x = [0.0; N_INPUTS];
    x[0] = firm_size + 0.15 * bm.sample(rng);
    for k in 1..N_INPUTS {
        // Ratios are non-negative; folded normals keep the spread.
        x[k] = (CENTER[k] + SPREAD[k] * bm.sample(rng)).abs();
    }
    x
}

/// Panel in (industry, year, firm) order. Firms keep their id and size
/// profile across years. Total assets always exceed the loader threshold.
pub fn generate_firm_panel(params: &FirmPanelParams, seed: u64) -> Result<Vec<FirmYear>, String> {
    params.validate()?;
    let mut rng = rng_from_seed(derive_seed(seed, "technology"));
    let mut bm = BoxMuller::new();
    let tech: Vec<Technology> = (0..params.n_industries)
        .map(|_| Technology::draw(&mut rng, &mut bm, params))
        .collect();
    let sizes: Vec<Vec<f64>> = (0..params.n_industries)
        .map(|_| {
            (0..params.firms_per_industry)
                .map(|_| CENTER[0] + SPREAD[0] * bm.sample(&mut rng))
                .collect()
        })
        .collect();

    let mut rng = rng_from_seed(derive_seed(seed, "firms"));
    let mut out = Vec::with_capacity(
        params.n_industries as usize * params.n_years * params.firms_per_industry,
    );
    for (ind, t) in tech.iter().enumerate() {
        for y in 0..params.n_years {
            let year = params.first_year + y as i32;
            for (f, &size) in sizes[ind].iter().enumerate() {
                let mut x = draw_inputs(&mut rng, &mut bm, size);
                x[0] = x[0].max((MIN_TOTAL_ASSETS * 1.5).ln());
                let mut z = [0.0; N_INPUTS];
                for k in 0..N_INPUTS {
                    z[k] = (x[k] - CENTER[k]) / SPREAD[k];
                }
                let (log_q, roa) = t.outcomes(&z, params.nonlinearity);
                let log_q = log_q + params.noise_sd * bm.sample(&mut rng);
                let roa = roa + 0.1 * params.noise_sd * bm.sample(&mut rng);
                out.push(firm_year(ind as u8 + 1, year, f, &x, log_q.exp(), roa));
            }
        }
    }
    Ok(out)
}

fn firm_year(industry: u8, year: i32, firm: usize, x: &Features, q: f64, roa: f64) -> FirmYear {
    let at = x[0].exp();
    let deferred_taxes = 0.01 * at;
    // Chosen so market equity is q·at/2 > 0.
    let common_equity = at * (1.0 - 0.5 * q) - deferred_taxes;
    let shares = at / 10.0;
    let market_equity = q * at - at + common_equity + deferred_taxes;
    let oibdp = roa * at;
    FirmYear {
        firm_id: format!("I{industry:02}F{firm:04}"),
        year,
        industry_id: industry,
        total_assets: at,
        capex: x[1] * at,
        st_debt: x[2] * at,
        lt_debt: x[3] * at,
        employees: x[4] * at,
        ppent: x[5] * at,
        adv_expense: x[6] * at,
        rd_expense: x[7] * at,
        shares_outstanding: shares,
        price_close: market_equity / shares,
        common_equity,
        deferred_taxes,
        oibdp,
        interest_expense: 0.05 * (x[2] + x[3]) * at,
        income_taxes: 0.3 * oibdp.max(0.0),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::{build_dataset, compute_derived, industry_years, DatasetOptions, OutputKind};

    fn small() -> FirmPanelParams {
        FirmPanelParams {
            n_industries: 3,
            n_years: 2,
            firms_per_industry: 35,
            ..Default::default()
        }
    }

    #[test]
    fn shape_and_determinism() {
        let a = generate_firm_panel(&small(), 1).unwrap();
        assert_eq!(a.len(), 3 * 2 * 35);
        assert_eq!(a, generate_firm_panel(&small(), 1).unwrap());
        assert_ne!(a, generate_firm_panel(&small(), 2).unwrap());
        assert_eq!(industry_years(&a).len(), 6);
    }

    #[test]
    fn every_row_passes_the_loader_filters() {
        for f in generate_firm_panel(&small(), 3).unwrap() {
            assert!(f.total_assets > MIN_TOTAL_ASSETS);
            let d = compute_derived(&f);
            assert!(d.tobins_q > 0.0);
            assert!(d.log_q.is_some());
            assert!(d.inputs().iter().all(|v| v.is_finite()));
        }
        let panel = generate_firm_panel(&small(), 3).unwrap();
        let ds = build_dataset(&panel, 2, 1988, OutputKind::LogQ, &DatasetOptions::default()).unwrap();
        assert_eq!(ds.n_firms(), 35);
    }

    #[test]
    fn rejects_bad_params() {
        let p = FirmPanelParams {
            firms_per_industry: 0,
            ..Default::default()
        };
        assert!(generate_firm_panel(&p, 1).is_err());
    }
}
