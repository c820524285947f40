//! Firm-year fundamentals: CSV ingestion, sample filters, derived variables
//! and industry-mean-adjusted feature matrices per industry-year.
//!
//! Currency fields are in millions and employees in thousands. The eight
//! production inputs are, in order: log assets, capex, short-term debt,
//! long-term debt, employees, PP&E, advertising and R&D, each of the last
//! seven scaled by total assets.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::neural::{Features, N_INPUTS};
use crate::seed::{rng_from_seed, SeededRng};

/// Firms at or below this size (in millions) are dropped on load.
pub const MIN_TOTAL_ASSETS: f64 = 10.0;

/// Minimum number of firms for an industry-year to be fitted.
pub const DEFAULT_MIN_FIRMS: usize = 30;

/// Number of industry groups (Fama-French 12).
pub const N_INDUSTRIES: u8 = 12;

/// Column order of the feature matrix.
pub const INPUT_NAMES: [&str; N_INPUTS] = [
    "log_assets",
    "capex_at",
    "st_debt_at",
    "lt_debt_at",
    "emp_at",
    "ppent_at",
    "adv_at",
    "rd_at",
];

/// Every field a firm-year row must carry, in canonical order.
pub const FIELD_NAMES: [&str; 18] = [
    "firm_id",
    "year",
    "industry_id",
    "total_assets",
    "capex",
    "st_debt",
    "lt_debt",
    "employees",
    "ppent",
    "adv_expense",
    "rd_expense",
    "shares_outstanding",
    "price_close",
    "common_equity",
    "deferred_taxes",
    "oibdp",
    "interest_expense",
    "income_taxes",
];

const NUMERIC_FIELDS: std::ops::Range<usize> = 3..18;

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("cannot read panel file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema mismatch: column `{column}` for field `{field}` not found in header")]
    SchemaMismatch { field: String, column: String },
    #[error("schema names unknown field `{0}`")]
    UnknownField(String),
    #[error("non-numeric value `{value}` in column `{column}` at data line {line}")]
    NonNumeric {
        line: u64,
        column: String,
        value: String,
    },
    #[error("cannot mean-adjust an empty vector")]
    EmptyInput,
    #[error("industry {industry} year {year}: {count} qualifying firms, need {min_firms}")]
    TooFewFirms {
        industry: u8,
        year: i32,
        count: usize,
        min_firms: usize,
    },
    #[error("invalid holdout fraction {0}; must lie in [0, 1)")]
    InvalidHoldout(f64),
    #[error("winsorization percentile {0} outside [0, 0.5)")]
    InvalidWinsorization(f64),
}

/// One firm's raw fundamentals for one year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmYear {
    pub firm_id: String,
    pub year: i32,
    pub industry_id: u8,
    pub total_assets: f64,
    pub capex: f64,
    pub st_debt: f64,
    pub lt_debt: f64,
    pub employees: f64,
    pub ppent: f64,
    pub adv_expense: f64,
    pub rd_expense: f64,
    pub shares_outstanding: f64,
    pub price_close: f64,
    pub common_equity: f64,
    pub deferred_taxes: f64,
    pub oibdp: f64,
    pub interest_expense: f64,
    pub income_taxes: f64,
}

impl FirmYear {
    fn set_numeric(&mut self, field: &str, value: f64) {
        match field {
            "total_assets" => self.total_assets = value,
            "capex" => self.capex = value,
            "st_debt" => self.st_debt = value,
            "lt_debt" => self.lt_debt = value,
            "employees" => self.employees = value,
            "ppent" => self.ppent = value,
            "adv_expense" => self.adv_expense = value,
            "rd_expense" => self.rd_expense = value,
            "shares_outstanding" => self.shares_outstanding = value,
            "price_close" => self.price_close = value,
            "common_equity" => self.common_equity = value,
            "deferred_taxes" => self.deferred_taxes = value,
            "oibdp" => self.oibdp = value,
            "interest_expense" => self.interest_expense = value,
            "income_taxes" => self.income_taxes = value,
            other => unreachable!("not a numeric field: {other}"),
        }
    }

    fn empty() -> Self {
        FirmYear {
            firm_id: String::new(),
            year: 0,
            industry_id: 0,
            total_assets: 0.0,
            capex: 0.0,
            st_debt: 0.0,
            lt_debt: 0.0,
            employees: 0.0,
            ppent: 0.0,
            adv_expense: 0.0,
            rd_expense: 0.0,
            shares_outstanding: 0.0,
            price_close: 0.0,
            common_equity: 0.0,
            deferred_taxes: 0.0,
            oibdp: 0.0,
            interest_expense: 0.0,
            income_taxes: 0.0,
        }
    }

    /// Values in [`FIELD_NAMES`] order, formatted for CSV output.
    pub fn csv_record(&self) -> Vec<String> {
        vec![
            self.firm_id.clone(),
            self.year.to_string(),
            self.industry_id.to_string(),
            self.total_assets.to_string(),
            self.capex.to_string(),
            self.st_debt.to_string(),
            self.lt_debt.to_string(),
            self.employees.to_string(),
            self.ppent.to_string(),
            self.adv_expense.to_string(),
            self.rd_expense.to_string(),
            self.shares_outstanding.to_string(),
            self.price_close.to_string(),
            self.common_equity.to_string(),
            self.deferred_taxes.to_string(),
            self.oibdp.to_string(),
            self.interest_expense.to_string(),
            self.income_taxes.to_string(),
        ]
    }
}

/// Writes firm-years with the identity schema header.
pub fn write_firm_panel<W: Write>(writer: W, firms: &[FirmYear]) -> Result<(), PanelError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(FIELD_NAMES)?;
    for f in firms {
        w.write_record(f.csv_record())?;
    }
    w.flush().map_err(|source| PanelError::Io {
        path: "<writer>".into(),
        source,
    })?;
    Ok(())
}

/// Maps each firm-year field to the CSV column that carries it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    columns: BTreeMap<String, String>,
}

impl Default for Schema {
    fn default() -> Self {
        Self::identity()
    }
}

impl Schema {
    /// Every field is read from a column of the same name.
    pub fn identity() -> Self {
        let columns = FIELD_NAMES
            .iter()
            .map(|f| (f.to_string(), f.to_string()))
            .collect();
        Schema { columns }
    }

    /// Identity schema with the given overrides (field → column).
    pub fn with_overrides(overrides: &BTreeMap<String, String>) -> Result<Self, PanelError> {
        let mut schema = Self::identity();
        for (field, column) in overrides {
            match schema.columns.get_mut(field) {
                Some(slot) => *slot = column.clone(),
                None => return Err(PanelError::UnknownField(field.clone())),
            }
        }
        Ok(schema)
    }

    pub fn column(&self, field: &str) -> &str {
        &self.columns[field]
    }
}

/// Counts of rows dropped during ingestion, by reason.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectionReport {
    pub missing_field: usize,
    pub invalid_industry: usize,
    pub below_asset_threshold: usize,
}

impl RejectionReport {
    pub fn total(&self) -> usize {
        self.missing_field + self.invalid_industry + self.below_asset_threshold
    }

    pub fn rows(&self) -> [(&'static str, usize); 3] {
        [
            ("missing field", self.missing_field),
            ("invalid industry", self.invalid_industry),
            ("total assets at or below threshold", self.below_asset_threshold),
        ]
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["reason", "count"])?;
        for (reason, count) in self.rows() {
            w.write_record([reason, &count.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadedPanel {
    pub firms: Vec<FirmYear>,
    pub report: RejectionReport,
}

/// Loads a firm-year CSV with the default $10M asset filter.
pub fn load_firm_panel(path: &Path, schema: &Schema) -> Result<LoadedPanel, PanelError> {
    load_firm_panel_with_threshold(path, schema, MIN_TOTAL_ASSETS)
}

pub fn load_firm_panel_with_threshold(
    path: &Path,
    schema: &Schema,
    min_total_assets: f64,
) -> Result<LoadedPanel, PanelError> {
    let file = File::open(path).map_err(|source| PanelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_firm_panel(file, schema, min_total_assets)
}

fn is_missing(cell: &str) -> bool {
    let c = cell.trim();
    c.is_empty() || c == "." || c.eq_ignore_ascii_case("na") || c.eq_ignore_ascii_case("nan")
}

/// Reads firm-years from any CSV source. Rows with a missing required
/// field, an industry outside 1..=12 or assets not above the threshold are
/// dropped and counted; a non-numeric cell is a hard error.
pub fn read_firm_panel<R: Read>(
    reader: R,
    schema: &Schema,
    min_total_assets: f64,
) -> Result<LoadedPanel, PanelError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let mut index = Vec::with_capacity(18);
    for field in &FIELD_NAMES {
        let column = schema.column(field);
        let pos = header.iter().position(|h| h.trim() == column).ok_or_else(|| {
            PanelError::SchemaMismatch {
                field: field.to_string(),
                column: column.to_string(),
            }
        })?;
        index.push(pos);
    }

    let mut out = LoadedPanel::default();
    for (line, record) in rdr.records().enumerate() {
        let record = record?;
        let line = line as u64 + 1;
        let cell = |i: usize| record.get(index[i]).unwrap_or("");
        let parse = |i: usize| -> Result<f64, PanelError> {
            let raw = cell(i).trim();
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(PanelError::NonNumeric {
                    line,
                    column: schema.column(FIELD_NAMES[i]).to_string(),
                    value: raw.to_string(),
                }),
            }
        };

        if (0..18).any(|i| is_missing(cell(i))) {
            // Still reject garbage in present cells before counting the miss.
            for i in 1..18 {
                if !is_missing(cell(i)) {
                    parse(i)?;
                }
            }
            out.report.missing_field += 1;
            continue;
        }

        let mut fy = FirmYear::empty();
        fy.firm_id = cell(0).trim().to_string();
        let year = parse(1)?;
        let industry = parse(2)?;
        if year.fract() != 0.0 {
            return Err(PanelError::NonNumeric {
                line,
                column: schema.column("year").to_string(),
                value: cell(1).to_string(),
            });
        }
        fy.year = year as i32;
        for i in NUMERIC_FIELDS {
            fy.set_numeric(FIELD_NAMES[i], parse(i)?);
        }
        if industry.fract() != 0.0 || !(1.0..=f64::from(N_INDUSTRIES)).contains(&industry) {
            out.report.invalid_industry += 1;
            continue;
        }
        fy.industry_id = industry as u8;
        if fy.total_assets <= min_total_assets {
            out.report.below_asset_threshold += 1;
            continue;
        }
        out.firms.push(fy);
    }
    Ok(out)
}

/// Variables derived from one firm-year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedVars {
    pub log_assets: f64,
    pub capex_at: f64,
    pub st_debt_at: f64,
    pub lt_debt_at: f64,
    pub emp_at: f64,
    pub ppent_at: f64,
    pub adv_at: f64,
    pub rd_at: f64,
    pub tobins_q: f64,
    /// `None` when Tobin's Q is not positive.
    pub log_q: Option<f64>,
    pub roa: f64,
    pub book_leverage: f64,
    pub cash_flow_at: f64,
}

impl DerivedVars {
    /// The eight production inputs in [`INPUT_NAMES`] order.
    pub fn inputs(&self) -> Features {
        [
            self.log_assets,
            self.capex_at,
            self.st_debt_at,
            self.lt_debt_at,
            self.emp_at,
            self.ppent_at,
            self.adv_at,
            self.rd_at,
        ]
    }

    pub fn output(&self, kind: OutputKind) -> Option<f64> {
        match kind {
            OutputKind::LogQ => self.log_q,
            OutputKind::Roa => Some(self.roa),
        }
    }
}

pub fn compute_derived(fy: &FirmYear) -> DerivedVars {
    let at = fy.total_assets;
    let tobins_q =
        (at + fy.shares_outstanding * fy.price_close - fy.common_equity - fy.deferred_taxes) / at;
    DerivedVars {
        log_assets: at.ln(),
        capex_at: fy.capex / at,
        st_debt_at: fy.st_debt / at,
        lt_debt_at: fy.lt_debt / at,
        emp_at: fy.employees / at,
        ppent_at: fy.ppent / at,
        adv_at: fy.adv_expense / at,
        rd_at: fy.rd_expense / at,
        tobins_q,
        log_q: (tobins_q > 0.0).then(|| tobins_q.ln()),
        roa: fy.oibdp / at,
        book_leverage: (fy.st_debt + fy.lt_debt) / at,
        cash_flow_at: (fy.oibdp - fy.interest_expense - fy.income_taxes - fy.capex) / at,
    }
}

/// Subtracts the industry-year mean from every value.
pub fn industry_mean_adjust(values: &[f64]) -> Result<Vec<f64>, PanelError> {
    if values.is_empty() {
        return Err(PanelError::EmptyInput);
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(values.iter().map(|v| v - mean).collect())
}

/// Clamps values to their `[p, 1 − p]` empirical quantiles (linear
/// interpolation between order statistics).
pub fn winsorize(values: &[f64], p: f64) -> Result<Vec<f64>, PanelError> {
    if !(0.0..0.5).contains(&p) {
        return Err(PanelError::InvalidWinsorization(p));
    }
    if values.is_empty() {
        return Ok(Vec::new());
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let quantile = |q: f64| {
        let pos = q * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
    };
    let (lo, hi) = (quantile(p), quantile(1.0 - p));
    Ok(values.iter().map(|v| v.clamp(lo, hi)).collect())
}

/// Which production outcome a dataset targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    #[default]
    LogQ,
    Roa,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DatasetOptions {
    pub min_firms: usize,
    /// Symmetric winsorization percentile applied per column before
    /// mean-adjustment; `None` disables it.
    pub winsorize: Option<f64>,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions {
            min_firms: DEFAULT_MIN_FIRMS,
            winsorize: None,
        }
    }
}

/// Industry-mean-adjusted inputs and output for one industry-year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndustryYearDataset {
    pub industry_id: u8,
    pub year: i32,
    pub output_kind: OutputKind,
    pub firm_ids: Vec<String>,
    pub x: Vec<Features>,
    pub y: Vec<f64>,
}

impl IndustryYearDataset {
    pub fn n_firms(&self) -> usize {
        self.y.len()
    }

    /// Splits rows into a training part and an evaluation part holding
    /// `round(fraction · n)` rows chosen by a seeded shuffle. Row order
    /// inside each part follows the original order. A zero fraction returns
    /// the full dataset twice.
    pub fn holdout_split(&self, fraction: f64, seed: u64) -> Result<(Self, Self), PanelError> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(PanelError::InvalidHoldout(fraction));
        }
        if fraction == 0.0 {
            return Ok((self.clone(), self.clone()));
        }
        use rand::seq::SliceRandom;
        let n = self.n_firms();
        let n_eval = ((fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1));
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng: SeededRng = rng_from_seed(seed);
        order.shuffle(&mut rng);
        let eval: BTreeSet<usize> = order[..n_eval].iter().copied().collect();
        let pick = |keep: &dyn Fn(usize) -> bool| IndustryYearDataset {
            industry_id: self.industry_id,
            year: self.year,
            output_kind: self.output_kind,
            firm_ids: (0..n).filter(|&i| keep(i)).map(|i| self.firm_ids[i].clone()).collect(),
            x: (0..n).filter(|&i| keep(i)).map(|i| self.x[i]).collect(),
            y: (0..n).filter(|&i| keep(i)).map(|i| self.y[i]).collect(),
        };
        Ok((pick(&|i| !eval.contains(&i)), pick(&|i| eval.contains(&i))))
    }
}

/// Distinct (industry, year) cells present in a panel, sorted.
pub fn industry_years(panel: &[FirmYear]) -> BTreeSet<(u8, i32)> {
    panel.iter().map(|f| (f.industry_id, f.year)).collect()
}

/// Builds the mean-adjusted dataset for one industry-year.
pub fn build_dataset(
    panel: &[FirmYear],
    industry_id: u8,
    year: i32,
    output_kind: OutputKind,
    options: &DatasetOptions,
) -> Result<IndustryYearDataset, PanelError> {
    let mut firm_ids = Vec::new();
    let mut raw_x: Vec<Features> = Vec::new();
    let mut raw_y = Vec::new();
    for fy in panel
        .iter()
        .filter(|f| f.industry_id == industry_id && f.year == year)
    {
        let d = compute_derived(fy);
        if let Some(out) = d.output(output_kind) {
            firm_ids.push(fy.firm_id.clone());
            raw_x.push(d.inputs());
            raw_y.push(out);
        }
    }
    let count = raw_y.len();
    if count < options.min_firms.max(1) {
        return Err(PanelError::TooFewFirms {
            industry: industry_id,
            year,
            count,
            min_firms: options.min_firms,
        });
    }

    let prepare = |col: Vec<f64>| -> Result<Vec<f64>, PanelError> {
        let col = match options.winsorize {
            Some(p) => winsorize(&col, p)?,
            None => col,
        };
        industry_mean_adjust(&col)
    };

    let mut x = vec![[0.0; N_INPUTS]; count];
    for k in 0..N_INPUTS {
        let adjusted = prepare(raw_x.iter().map(|r| r[k]).collect())?;
        for (row, v) in x.iter_mut().zip(adjusted) {
            row[k] = v;
        }
    }
    let y = prepare(raw_y)?;

    Ok(IndustryYearDataset {
        industry_id,
        year,
        output_kind,
        firm_ids,
        x,
        y,
    })
}
