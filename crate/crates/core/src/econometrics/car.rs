//! Market-model cumulative abnormal returns.

use serde::{Deserialize, Serialize};

use super::EconError;

/// Event window in trading days relative to the event day (inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CarWindow {
    pub start: i64,
    pub end: i64,
}

impl CarWindow {
    /// Days −1 and 0.
    pub const PRE_AND_EVENT: CarWindow = CarWindow { start: -1, end: 0 };
    /// Days −1 through +1.
    pub const THREE_DAY: CarWindow = CarWindow { start: -1, end: 1 };
}

/// Estimation window of `length` days ending `gap` days before the event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimationWindow {
    pub length: usize,
    pub gap: usize,
    pub min_obs: usize,
}

impl Default for EstimationWindow {
    fn default() -> Self {
        EstimationWindow {
            length: 250,
            gap: 30,
            min_obs: 60,
        }
    }
}

/// OLS `(α, β)` of stock on market returns over the estimation window.
/// Days where either return is NaN are skipped.
pub fn market_model_fit(
    stock: &[f64],
    market: &[f64],
    event_index: usize,
    est: &EstimationWindow,
) -> Result<(f64, f64), EconError> {
    if stock.len() != market.len() {
        return Err(EconError::BadLengths {
            x: stock.len(),
            y: market.len(),
            min: 0,
        });
    }
    let end = event_index.saturating_sub(est.gap);
    let start = end.saturating_sub(est.length);
    let pairs: Vec<(f64, f64)> = (start..end.min(stock.len()))
        .map(|i| (market[i], stock[i]))
        .filter(|(m, s)| m.is_finite() && s.is_finite())
        .collect();
    if pairs.len() < est.min_obs.max(2) {
        return Err(EconError::InsufficientEstimationData {
            needed: est.min_obs.max(2),
            found: pairs.len(),
        });
    }
    let n = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(EconError::ConstantInput);
    }
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let beta = sxy / sxx;
    Ok((my - beta * mx, beta))
}

/// Sum over the event window of `r_stock − α − β·r_market`.
pub fn market_model_car(
    stock: &[f64],
    market: &[f64],
    event_index: usize,
    window: CarWindow,
    est: &EstimationWindow,
) -> Result<f64, EconError> {
    let (alpha, beta) = market_model_fit(stock, market, event_index, est)?;
    (window.start..=window.end)
        .map(|offset| {
            let i = event_index as i64 + offset;
            let (s, m) = usize::try_from(i)
                .ok()
                .and_then(|i| Some((*stock.get(i)?, *market.get(i)?)))
                .ok_or(EconError::MissingEventReturn(i))?;
            if !(s.is_finite() && m.is_finite()) {
                return Err(EconError::MissingEventReturn(i));
            }
            Ok(s - alpha - beta * m)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineMode {
    Equal,
    Value,
}

/// Combined acquiror-target CAR, equally or market-value weighted.
pub fn combine_car(
    car_acq: f64,
    car_tgt: f64,
    mv_acq: f64,
    mv_tgt: f64,
    mode: CombineMode,
) -> Result<f64, EconError> {
    match mode {
        CombineMode::Equal => Ok(0.5 * (car_acq + car_tgt)),
        CombineMode::Value => {
            if !(mv_acq > 0.0 && mv_tgt > 0.0) {
                return Err(EconError::NonPositiveMarketValue);
            }
            Ok((mv_acq * car_acq + mv_tgt * car_tgt) / (mv_acq + mv_tgt))
        }
    }
}
