//! Functional distances between industries.
//!
//! For an ordered pair (acquiror A, target T) the unadjusted distance is the
//! target's prediction error under A's network divided by the error under
//! T's own network. The transfer distance first re-fits A's output layer on
//! T's data with every earlier layer frozen. Both are asymmetric.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::{self, NeuralError, TrainConfig, WeightSet};
use crate::panel::IndustryYearDataset;
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum DistanceError {
    #[error("industry {industry}: own model fits its evaluation data perfectly (RMSE 0)")]
    DegenerateFit { industry: u8 },
    #[error("acquiror and target networks have different architectures")]
    ArchitectureMismatch,
    #[error("industry {0} has no trained model")]
    MissingModel(u8),
    #[error("industry {0} has no dataset")]
    MissingData(u8),
    #[error("non-finite distance ({0})")]
    NonFinite(f64),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error("pair ({acquiror} -> {target}): {source}")]
    Pair {
        acquiror: u8,
        target: u8,
        #[source]
        source: Box<DistanceError>,
    },
}

/// Whether distances are ratios of RMSEs or of squared errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convention {
    #[default]
    Rmse,
    Mse,
}

impl Convention {
    pub fn ratio(self, rmse_num: f64, rmse_den: f64) -> f64 {
        match self {
            Convention::Rmse => rmse_num / rmse_den,
            Convention::Mse => (rmse_num * rmse_num) / (rmse_den * rmse_den),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceRecord {
    pub year: i32,
    pub acquiror_industry: u8,
    pub target_industry: u8,
    pub d_u: f64,
    pub d_tf: f64,
    pub log_d_u: f64,
    pub log_d_tf: f64,
    pub rmse_cross: f64,
    pub rmse_tf: f64,
    pub rmse_own: f64,
}

pub const CSV_HEADER: [&str; 10] = [
    "year", "acq_ind", "tgt_ind", "d_U", "d_TF", "log_d_U", "log_d_TF", "rmse_cross", "rmse_tf",
    "rmse_own",
];

impl DistanceRecord {
    pub fn csv_record(&self) -> [String; 10] {
        [
            self.year.to_string(),
            self.acquiror_industry.to_string(),
            self.target_industry.to_string(),
            self.d_u.to_string(),
            self.d_tf.to_string(),
            self.log_d_u.to_string(),
            self.log_d_tf.to_string(),
            self.rmse_cross.to_string(),
            self.rmse_tf.to_string(),
            self.rmse_own.to_string(),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnadjustedPart {
    pub rmse_cross: f64,
    pub rmse_own: f64,
    pub d_u: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferPart {
    pub rmse_tf: f64,
    pub rmse_own: f64,
    pub d_tf: f64,
    pub retrained: WeightSet,
}

fn own_rmse(w_t: &WeightSet, eval: &IndustryYearDataset) -> Result<f64, DistanceError> {
    let r = neural::rmse_loss(w_t, &eval.x, &eval.y)?;
    if r == 0.0 {
        return Err(DistanceError::DegenerateFit {
            industry: eval.industry_id,
        });
    }
    Ok(r)
}

fn finite(d: f64) -> Result<f64, DistanceError> {
    if d.is_finite() && d > 0.0 {
        Ok(d)
    } else {
        Err(DistanceError::NonFinite(d))
    }
}

/// Error of the target's data under the acquiror's network, relative to the
/// target's own network.
pub fn unadjusted_distance(
    w_a: &WeightSet,
    w_t: &WeightSet,
    eval: &IndustryYearDataset,
    convention: Convention,
) -> Result<UnadjustedPart, DistanceError> {
    if w_a.architecture != w_t.architecture {
        return Err(DistanceError::ArchitectureMismatch);
    }
    let rmse_own = own_rmse(w_t, eval)?;
    let rmse_cross = neural::rmse_loss(w_a, &eval.x, &eval.y)?;
    Ok(UnadjustedPart {
        rmse_cross,
        rmse_own,
        d_u: finite(convention.ratio(rmse_cross, rmse_own))?,
    })
}

/// Re-fits the acquiror's output layer on `retrain`, then measures the
/// target's error on `eval` relative to its own network.
///
/// When the acquiror network is the target's own network and the retraining
/// data is the evaluation data, there is nothing to transfer: the target's
/// own fit is the benchmark and the distance is exactly one.
pub fn tf_distance(
    w_a: &WeightSet,
    retrain: &IndustryYearDataset,
    eval: &IndustryYearDataset,
    w_t: &WeightSet,
    config: &TrainConfig,
    convention: Convention,
) -> Result<TransferPart, DistanceError> {
    if w_a.architecture != w_t.architecture {
        return Err(DistanceError::ArchitectureMismatch);
    }
    let rmse_own = own_rmse(w_t, eval)?;
    if w_a == w_t && retrain == eval {
        return Ok(TransferPart {
            rmse_tf: rmse_own,
            rmse_own,
            d_tf: 1.0,
            retrained: w_a.clone(),
        });
    }
    let report = neural::train_last_layer(w_a, &retrain.x, &retrain.y, config)?;
    let rmse_tf = neural::rmse_loss(&report.weights, &eval.x, &eval.y)?;
    Ok(TransferPart {
        rmse_tf,
        rmse_own,
        d_tf: finite(convention.ratio(rmse_tf, rmse_own))?,
        retrained: report.weights,
    })
}

/// Retraining seed for one ordered pair in one year.
pub fn pair_seed(base: u64, year: i32, acquiror: u8, target: u8) -> u64 {
    derive_seed(base, &format!("retrain/{year}/{acquiror}/{target}"))
}

/// Both distances for one ordered pair.
#[allow(clippy::too_many_arguments)]
pub fn pair_distance(
    year: i32,
    acquiror: u8,
    target: u8,
    w_a: &WeightSet,
    w_t: &WeightSet,
    data_t: &PairData,
    config: &TrainConfig,
    convention: Convention,
) -> Result<DistanceRecord, DistanceError> {
    let u = unadjusted_distance(w_a, w_t, &data_t.eval, convention)?;
    let cfg = TrainConfig {
        seed: pair_seed(config.seed, year, acquiror, target),
        freeze_prefix: true,
        ..config.clone()
    };
    let tf = tf_distance(w_a, &data_t.fit, &data_t.eval, w_t, &cfg, convention)?;
    Ok(DistanceRecord {
        year,
        acquiror_industry: acquiror,
        target_industry: target,
        d_u: u.d_u,
        d_tf: tf.d_tf,
        log_d_u: u.d_u.ln(),
        log_d_tf: tf.d_tf.ln(),
        rmse_cross: u.rmse_cross,
        rmse_tf: tf.rmse_tf,
        rmse_own: u.rmse_own,
    })
}

/// An industry's fitting data and evaluation data. In-sample evaluation
/// uses the same dataset for both.
#[derive(Debug, Clone, PartialEq)]
pub struct PairData {
    pub fit: IndustryYearDataset,
    pub eval: IndustryYearDataset,
}

impl PairData {
    pub fn in_sample(ds: IndustryYearDataset) -> Self {
        PairData {
            fit: ds.clone(),
            eval: ds,
        }
    }
}

/// Distances for every ordered pair of industries in one year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub year: i32,
    pub industries: Vec<u8>,
    /// `d_u[a][t]` for acquiror index `a` and target index `t`.
    pub d_u: Vec<Vec<f64>>,
    pub d_tf: Vec<Vec<f64>>,
    #[serde(skip)]
    pub records: Vec<DistanceRecord>,
}

impl DistanceMatrix {
    /// Assembles grids from records covering every ordered pair.
    pub fn from_records(year: i32, industries: Vec<u8>, records: Vec<DistanceRecord>) -> Self {
        let m = industries.len();
        let pos = |id: u8| industries.iter().position(|&i| i == id);
        let mut d_u = vec![vec![f64::NAN; m]; m];
        let mut d_tf = vec![vec![f64::NAN; m]; m];
        for r in &records {
            if let (Some(a), Some(t)) = (pos(r.acquiror_industry), pos(r.target_industry)) {
                d_u[a][t] = r.d_u;
                d_tf[a][t] = r.d_tf;
            }
        }
        DistanceMatrix {
            year,
            industries,
            d_u,
            d_tf,
            records,
        }
    }

    pub fn get(&self, acquiror: u8, target: u8) -> Option<&DistanceRecord> {
        self.records
            .iter()
            .find(|r| r.acquiror_industry == acquiror && r.target_industry == target)
    }
}

/// Computes all `m²` ordered pairs, self-pairs included. Pairs run in
/// parallel on the current rayon pool; output order is acquiror-major.
pub fn all_pairs(
    models: &BTreeMap<u8, WeightSet>,
    data: &BTreeMap<u8, PairData>,
    year: i32,
    config: &TrainConfig,
    convention: Convention,
) -> Result<DistanceMatrix, DistanceError> {
    let industries: Vec<u8> = models.keys().copied().collect();
    for id in &industries {
        if !data.contains_key(id) {
            return Err(DistanceError::MissingData(*id));
        }
    }
    if let Some(id) = data.keys().find(|id| !models.contains_key(id)) {
        return Err(DistanceError::MissingModel(*id));
    }
    let pairs: Vec<(u8, u8)> = industries
        .iter()
        .flat_map(|&a| industries.iter().map(move |&t| (a, t)))
        .collect();
    let results: Vec<Result<DistanceRecord, DistanceError>> = pairs
        .par_iter()
        .map(|&(a, t)| {
            pair_distance(year, a, t, &models[&a], &models[&t], &data[&t], config, convention)
                .map_err(|e| DistanceError::Pair {
                    acquiror: a,
                    target: t,
                    source: Box::new(e),
                })
        })
        .collect();
    let records = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(DistanceMatrix::from_records(year, industries, records))
}

pub fn write_distance_csv<'a, W: Write>(
    writer: W,
    records: impl IntoIterator<Item = &'a DistanceRecord>,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(r.csv_record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_distance_csv<R: std::io::Read>(reader: R) -> csv::Result<Vec<DistanceRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let num = |i: usize| -> csv::Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| {
                    csv::Error::from(std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        format!("bad value in column {}", CSV_HEADER[i]),
                    ))
                })
        };
        out.push(DistanceRecord {
            year: num(0)? as i32,
            acquiror_industry: num(1)? as u8,
            target_industry: num(2)? as u8,
            d_u: num(3)?,
            d_tf: num(4)?,
            log_d_u: num(5)?,
            log_d_tf: num(6)?,
            rmse_cross: num(7)?,
            rmse_tf: num(8)?,
            rmse_own: num(9)?,
        });
    }
    Ok(out)
}

/// Groups records into one matrix per year.
pub fn matrices_from_records(records: &[DistanceRecord]) -> Vec<DistanceMatrix> {
    let mut by_year: BTreeMap<i32, Vec<DistanceRecord>> = BTreeMap::new();
    for r in records {
        by_year.entry(r.year).or_default().push(*r);
    }
    by_year
        .into_iter()
        .map(|(year, recs)| {
            let mut ids: Vec<u8> = recs.iter().map(|r| r.acquiror_industry).collect();
            ids.extend(recs.iter().map(|r| r.target_industry));
            ids.sort_unstable();
            ids.dedup();
            DistanceMatrix::from_records(year, ids, recs)
        })
        .collect()
}
