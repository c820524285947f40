use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, Context};

use funcdist::distance::{matrices_from_records, read_distance_csv, write_distance_csv, DistanceMatrix};
use funcdist::econometrics::{
    build_table_pipeline, deals_frame, generate_synthetic_deals, synthetic_distance_series,
    write_report_csv, Frame, ReportEntry,
};
use funcdist::panel::{load_firm_panel_with_threshold, write_firm_panel, FirmYear};
use funcdist::simulate::generate_firm_panel;
use funcdist::stylized::{oracle_table, write_oracle_csv};
use funcdist::workflow::{run_panel, train_year, Skip, TrainedCell};

use crate::config::{subsystem_seed, DealDistances, RunConfig};

#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or arguments.
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
    /// Results computed but outside the configured tolerance.
    Oracle(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Oracle(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(e) => write!(f, "invalid configuration: {e:#}"),
            CliError::Runtime(e) => write!(f, "{e:#}"),
            CliError::Oracle(m) => f.write_str(m),
        }
    }
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

pub type Handler = fn(&RunConfig) -> Result<(), CliError>;

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot create {}", path.display()))?,
    ))
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn prepare_output(cfg: &RunConfig) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.output_dir)
        .with_context(|| format!("cannot create {}", cfg.output_dir.display()))?;
    write_text(&cfg.output_dir.join("resolved_config.toml"), &cfg.resolved_toml()?)?;
    Ok(())
}

pub fn simulate_stylized(cfg: &RunConfig) -> Result<(), CliError> {
    let s = &cfg.stylized;
    let start = Instant::now();
    let rows = oracle_table(s.sigma, s.n, subsystem_seed(cfg.seed, "stylized"))
        .map_err(|e| anyhow!(e))?;
    log::info!("stylized oracle: {:.2?}", start.elapsed());
    write_oracle_csv(create(&cfg.output_dir.join("stylized_oracle.csv"))?, &rows)
        .context("writing stylized_oracle.csv")?;
    let failing: Vec<_> = rows.iter().filter(|r| !r.within(s.tolerance)).collect();
    if failing.is_empty() {
        return Ok(());
    }
    for r in &failing {
        eprintln!(
            "pair {} {}: analytic {:.6} empirical {:.6} rel_err {:.4}",
            r.pair, r.mode, r.analytic, r.empirical, r.rel_err
        );
    }
    Err(CliError::Oracle(format!(
        "{} of {} stylized cells exceed relative tolerance {}",
        failing.len(),
        rows.len(),
        s.tolerance
    )))
}

/// Loads the configured panel, or generates, writes and reloads a synthetic
/// one when no path is given.
fn firm_panel(cfg: &RunConfig) -> Result<Vec<FirmYear>, CliError> {
    let path = match &cfg.panel.path {
        Some(p) => {
            if !p.is_file() {
                return Err(CliError::Validation(anyhow!(
                    "[panel] path {} does not exist",
                    p.display()
                )));
            }
            p.clone()
        }
        None => {
            let firms = generate_firm_panel(
                &cfg.synthetic.firms,
                subsystem_seed(cfg.seed, "synthetic/firms"),
            )
            .map_err(|e| anyhow!(e))?;
            let p = cfg.output_dir.join("firms.csv");
            write_firm_panel(create(&p)?, &firms).map_err(|e| anyhow!(e))?;
            p
        }
    };
    let schema = cfg.schema().map_err(CliError::Validation)?;
    let loaded = load_firm_panel_with_threshold(&path, &schema, cfg.panel.min_total_assets)
        .map_err(|e| anyhow!(e))?;
    loaded
        .report
        .write_csv(create(&cfg.output_dir.join("rejections.csv"))?)
        .context("writing rejections.csv")?;
    log::info!(
        "panel {}: {} rows kept, {} rejected",
        path.display(),
        loaded.firms.len(),
        loaded.report.total()
    );
    Ok(loaded.firms)
}

fn write_training(cfg: &RunConfig, cells: &[TrainedCell], skipped: &[Skip]) -> anyhow::Result<()> {
    let dir = cfg.output_dir.join("weights");
    fs::create_dir_all(&dir)?;
    let mut w = csv::Writer::from_writer(create(&cfg.output_dir.join("training.csv"))?);
    w.write_record([
        "year", "industry", "n_fit", "n_eval", "initial_rmse", "best_rmse", "best_epoch",
        "epochs_run",
    ])?;
    for c in cells {
        write_text(
            &dir.join(format!("{}_{:02}.json", c.year, c.industry)),
            &c.report.weights.to_json(),
        )?;
        w.write_record([
            c.year.to_string(),
            c.industry.to_string(),
            c.data.fit.n_firms().to_string(),
            c.data.eval.n_firms().to_string(),
            c.report.initial_rmse.to_string(),
            c.report.best_rmse.to_string(),
            c.report.best_epoch.to_string(),
            c.report.epochs_run.to_string(),
        ])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_writer(create(&cfg.output_dir.join("skipped.csv"))?);
    w.write_record(["year", "industry", "reason"])?;
    for s in skipped {
        w.write_record([s.year.to_string(), s.industry.to_string(), s.reason.clone()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn train(cfg: &RunConfig) -> Result<(), CliError> {
    let firms = firm_panel(cfg)?;
    let opts = cfg.workflow().map_err(CliError::Validation)?;
    let years: std::collections::BTreeSet<i32> = firms.iter().map(|f| f.year).collect();
    let mut cells = Vec::new();
    let mut skipped = Vec::new();
    for year in years {
        let (c, s) = train_year(&firms, year, &opts).map_err(|e| anyhow!(e))?;
        cells.extend(c);
        skipped.extend(s);
    }
    write_training(cfg, &cells, &skipped)?;
    if cells.is_empty() {
        return Err(CliError::Runtime(anyhow!("every industry-year was skipped")));
    }
    Ok(())
}

fn compute_distances(cfg: &RunConfig) -> Result<Vec<DistanceMatrix>, CliError> {
    let firms = firm_panel(cfg)?;
    let opts = cfg.workflow().map_err(CliError::Validation)?;
    let start = Instant::now();
    let run = run_panel(&firms, &opts).map_err(|e| anyhow!(e))?;
    log::info!(
        "trained {} cells, skipped {}, {:.2?}",
        run.cells.len(),
        run.skipped.len(),
        start.elapsed()
    );
    write_training(cfg, &run.cells, &run.skipped)?;
    write_matrices(cfg, &run.matrices, "distances.csv", "distance_grids.json")?;
    Ok(run.matrices)
}

fn write_matrices(
    cfg: &RunConfig,
    matrices: &[DistanceMatrix],
    csv_name: &str,
    json_name: &str,
) -> anyhow::Result<()> {
    write_distance_csv(
        create(&cfg.output_dir.join(csv_name))?,
        matrices.iter().flat_map(|m| &m.records),
    )?;
    let mut w = create(&cfg.output_dir.join(json_name))?;
    serde_json::to_writer_pretty(&mut w, matrices)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn distances(cfg: &RunConfig) -> Result<(), CliError> {
    compute_distances(cfg).map(|_| ())
}

fn write_deal_panels(cfg: &RunConfig, matrices: &[DistanceMatrix]) -> Result<(), CliError> {
    let synth = generate_synthetic_deals(
        matrices,
        &cfg.synthetic.deals,
        subsystem_seed(cfg.seed, "synthetic/deals"),
    )
    .map_err(|e| anyhow!(e))?;
    synth
        .pairs
        .write_csv(create(&cfg.output_dir.join("pairs.csv"))?)
        .context("writing pairs.csv")?;
    deals_frame(&synth.deals)
        .write_csv(create(&cfg.output_dir.join("deals.csv"))?)
        .context("writing deals.csv")?;
    log::info!(
        "{} pair-years, {} deals",
        synth.pairs.n_rows(),
        synth.deals.len()
    );
    Ok(())
}

pub fn gen_synthetic(cfg: &RunConfig) -> Result<(), CliError> {
    firm_panel(cfg)?;
    let matrices = match cfg.synthetic.deal_distances {
        DealDistances::Synthetic => {
            let m = synthetic_distance_series(
                &cfg.synthetic.distances,
                subsystem_seed(cfg.seed, "synthetic/distances"),
            )
            .map_err(|e| anyhow!(e))?;
            write_matrices(cfg, &m, "synthetic_distances.csv", "synthetic_distance_grids.json")?;
            m
        }
        DealDistances::Computed => {
            let p = cfg.output_dir.join("distances.csv");
            let file = File::open(&p).with_context(|| {
                format!("{} is missing; run the distances command first", p.display())
            })?;
            matrices_from_records(&read_distance_csv(file).context("reading distances.csv")?)
        }
    };
    write_deal_panels(cfg, &matrices)
}

fn read_frame(path: &Path, what: &str) -> Result<Option<Frame>, CliError> {
    if !path.is_file() {
        log::warn!("{what} panel {} not found", path.display());
        return Ok(None);
    }
    let file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(Some(Frame::read_csv(file).map_err(|e| anyhow!("{}: {e}", path.display()))?))
}

fn write_report(cfg: &RunConfig, entries: &[ReportEntry]) -> anyhow::Result<()> {
    write_report_csv(entries, create(&cfg.output_dir.join("report.csv"))?)?;
    let mut w = create(&cfg.output_dir.join("report.json"))?;
    serde_json::to_writer_pretty(&mut w, entries)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn run_regressions(cfg: &RunConfig) -> Result<(), CliError> {
    let pairs = read_frame(&cfg.pairs_path(), "pair")?;
    let deals = read_frame(&cfg.deals_path(), "deal")?;
    let start = Instant::now();
    let entries = build_table_pipeline(pairs.as_ref(), deals.as_ref(), &cfg.regress.specs);
    log::info!("{} report entries, {:.2?}", entries.len(), start.elapsed());
    write_report(cfg, &entries)?;
    let failed: Vec<_> = entries.iter().filter(|e| !e.is_ok()).collect();
    if failed.is_empty() {
        return Ok(());
    }
    for e in &failed {
        let group = e.group.map(|g| format!(" [{g}]")).unwrap_or_default();
        eprintln!(
            "{}/{}{group}: {}",
            e.table,
            e.spec,
            e.error.as_deref().unwrap_or("failed")
        );
    }
    Err(CliError::Runtime(anyhow!(
        "{} of {} specifications failed; see report.csv",
        failed.len(),
        entries.len()
    )))
}

pub fn regress(cfg: &RunConfig) -> Result<(), CliError> {
    run_regressions(cfg)
}

/// Firm panel, distances, deal panels built on the computed distances, then
/// the regression tables.
pub fn report(cfg: &RunConfig) -> Result<(), CliError> {
    let mut cfg = cfg.clone();
    cfg.regress.pairs = None;
    cfg.regress.deals = None;
    let matrices = compute_distances(&cfg)?;
    write_deal_panels(&cfg, &matrices)?;
    run_regressions(&cfg)
}
