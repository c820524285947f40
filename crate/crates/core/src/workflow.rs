//! Panel → per-industry-year networks → yearly distance matrices.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distance::{all_pairs, Convention, DistanceError, DistanceMatrix, PairData};
use crate::neural::{self, Architecture, NeuralError, TrainConfig, TrainReport, WeightSet};
use crate::panel::{build_dataset, DatasetOptions, FirmYear, OutputKind, PanelError};
use crate::seed::derive_seed;

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error("industry {industry}, year {year}: {source}")]
    Training {
        industry: u8,
        year: i32,
        #[source]
        source: NeuralError,
    },
    #[error("year {year}: {source}")]
    Distance {
        year: i32,
        #[source]
        source: DistanceError,
    },
    #[error("every industry-year was skipped")]
    AllSkipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkflowOptions {
    pub architecture: Architecture,
    pub train: TrainConfig,
    pub output_kind: OutputKind,
    pub dataset: DatasetOptions,
    /// Share of each industry-year held out for evaluation; 0 is in-sample.
    pub holdout_fraction: f64,
    pub convention: Convention,
}

impl Default for WorkflowOptions {
    fn default() -> Self {
        WorkflowOptions {
            architecture: Architecture::default(),
            train: TrainConfig::default(),
            output_kind: OutputKind::LogQ,
            dataset: DatasetOptions::default(),
            holdout_fraction: 0.0,
            convention: Convention::Rmse,
        }
    }
}

/// An industry-year left out, with the reason.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skip {
    pub industry: u8,
    pub year: i32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedCell {
    pub industry: u8,
    pub year: i32,
    pub data: PairData,
    pub report: TrainReport,
}

pub fn training_seed(base: u64, year: i32, industry: u8) -> u64 {
    derive_seed(base, &format!("train/{year}/{industry}"))
}

pub fn holdout_seed(base: u64, year: i32, industry: u8) -> u64 {
    derive_seed(base, &format!("holdout/{year}/{industry}"))
}

/// Trains one network per industry present in `year`. Industry-years with
/// too few firms are skipped; results come back in industry order.
pub fn train_year(
    panel: &[FirmYear],
    year: i32,
    opts: &WorkflowOptions,
) -> Result<(Vec<TrainedCell>, Vec<Skip>), WorkflowError> {
    let industries: BTreeSet<u8> = panel
        .iter()
        .filter(|f| f.year == year)
        .map(|f| f.industry_id)
        .collect();
    let mut jobs = Vec::new();
    let mut skipped = Vec::new();
    for industry in industries {
        match build_dataset(panel, industry, year, opts.output_kind, &opts.dataset) {
            Ok(ds) => {
                let (fit, eval) = ds.holdout_split(
                    opts.holdout_fraction,
                    holdout_seed(opts.train.seed, year, industry),
                )?;
                jobs.push((industry, PairData { fit, eval }));
            }
            Err(e @ PanelError::TooFewFirms { .. }) => {
                log::info!("skipping industry {industry} in {year}: {e}");
                skipped.push(Skip {
                    industry,
                    year,
                    reason: e.to_string(),
                });
            }
            Err(e) => return Err(e.into()),
        }
    }
    let cells = jobs
        .into_par_iter()
        .map(|(industry, data)| {
            let cfg = TrainConfig {
                seed: training_seed(opts.train.seed, year, industry),
                freeze_prefix: false,
                ..opts.train.clone()
            };
            let report = neural::train(&data.fit.x, &data.fit.y, &opts.architecture, &cfg)
                .map_err(|source| WorkflowError::Training {
                    industry,
                    year,
                    source,
                })?;
            log::debug!(
                "industry {industry}, year {year}: rmse {:.6} -> {:.6} after {} epochs",
                report.initial_rmse,
                report.best_rmse,
                report.epochs_run
            );
            Ok(TrainedCell {
                industry,
                year,
                data,
                report,
            })
        })
        .collect::<Result<Vec<_>, WorkflowError>>()?;
    Ok((cells, skipped))
}

/// All ordered-pair distances among trained cells of one year.
pub fn year_distances(
    cells: &[TrainedCell],
    year: i32,
    opts: &WorkflowOptions,
) -> Result<DistanceMatrix, WorkflowError> {
    let models: BTreeMap<u8, WeightSet> = cells
        .iter()
        .map(|c| (c.industry, c.report.weights.clone()))
        .collect();
    let data: BTreeMap<u8, PairData> = cells.iter().map(|c| (c.industry, c.data.clone())).collect();
    all_pairs(&models, &data, year, &opts.train, opts.convention)
        .map_err(|source| WorkflowError::Distance { year, source })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PanelRun {
    pub matrices: Vec<DistanceMatrix>,
    pub cells: Vec<TrainedCell>,
    pub skipped: Vec<Skip>,
}

/// Trains and measures every year of the panel, in year order.
pub fn run_panel(panel: &[FirmYear], opts: &WorkflowOptions) -> Result<PanelRun, WorkflowError> {
    let years: BTreeSet<i32> = panel.iter().map(|f| f.year).collect();
    let mut run = PanelRun {
        matrices: Vec::new(),
        cells: Vec::new(),
        skipped: Vec::new(),
    };
    for year in years {
        let (cells, skipped) = train_year(panel, year, opts)?;
        run.skipped.extend(skipped);
        if cells.is_empty() {
            continue;
        }
        run.matrices.push(year_distances(&cells, year, opts)?);
        run.cells.extend(cells);
    }
    if run.cells.is_empty() {
        return Err(WorkflowError::AllSkipped);
    }
    Ok(run)
}
