//! Runs a set of regression specifications over the pair-year and deal
//! frames and collects a tagged report.

use std::collections::BTreeSet;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ols::ols_fe;
use super::probit::probit_fit;
use super::{EconError, Frame, Model, RegressionResult, RegressionSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    PairPanel,
    Deals,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableSpec {
    pub table: String,
    pub data: DataSource,
    pub regression: RegressionSpec,
    /// Run one cross-section per distinct value of this column.
    #[serde(default)]
    pub split_by: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub table: String,
    pub spec: String,
    pub group: Option<i64>,
    pub result: Option<RegressionResult>,
    pub error: Option<String>,
}

impl ReportEntry {
    pub fn is_ok(&self) -> bool {
        self.result.is_some()
    }
}

const CONTROLS: [&str; 4] = ["hostile", "tender", "stock_deal", "relative_size"];

fn with_controls(lead: &str) -> Vec<&str> {
    let mut v = vec![lead];
    v.extend(CONTROLS);
    v
}

/// The standard report: year-by-year cross-sections, pooled regressions with
/// three fixed-effect tiers, completion probits, the TF-residual interaction,
/// combined CARs and survival probits.
pub fn default_specs() -> Vec<TableSpec> {
    let pair = |table: &str, regression: RegressionSpec| TableSpec {
        table: table.into(),
        data: DataSource::PairPanel,
        regression,
        split_by: None,
    };
    let deal = |table: &str, regression: RegressionSpec| TableSpec {
        table: table.into(),
        data: DataSource::Deals,
        regression,
        split_by: None,
    };
    let mut specs = Vec::new();
    for (name, d) in [("u", "log_d_u"), ("tf", "log_d_tf")] {
        specs.push(TableSpec {
            split_by: Some("year".into()),
            ..pair("table2", RegressionSpec::ols(&format!("by_year_{name}"), "log_n_deals", &[d]))
        });
    }
    let tiers: [(&str, &[&str]); 3] = [
        ("", &[]),
        ("_year_fe", &["year"]),
        ("_year_ind_fe", &["year", "acq_ind", "tgt_ind"]),
    ];
    let mut col = 0;
    for (suffix, fe) in tiers {
        for d in ["log_d_u", "log_d_tf"] {
            col += 1;
            let name = format!("{}_{d}{suffix}", roman(col));
            specs.push(pair(
                "table3",
                RegressionSpec::ols(&name, "log_n_deals", &[d]).fe(fe).cluster("year"),
            ));
        }
    }
    for d in ["log_d_u", "log_d_tf"] {
        specs.push(deal(
            "table4",
            RegressionSpec::probit(&format!("completion_{d}"), "completed", &with_controls(d))
                .fe(&["acq_ind", "tgt_ind"])
                .cluster("year"),
        ));
    }
    specs.push(pair(
        "table6",
        RegressionSpec::ols(
            "interaction",
            "log_n_deals",
            &["log_d_u", "tf_resid", "interaction"],
        )
        .fe(&["year", "acq_ind", "tgt_ind"])
        .cluster("year"),
    ));
    for car in ["car_ew", "car_vw"] {
        specs.push(deal(
            "table9",
            RegressionSpec::ols(car, car, &with_controls("log_d_u"))
                .fe(&["year"])
                .cluster("year"),
        ));
    }
    for s in ["survival_t1", "survival_t2"] {
        specs.push(deal(
            "table10",
            RegressionSpec::probit(s, s, &["log_d_u", "acq_log_size"]).cluster("year"),
        ));
    }
    specs
}

fn roman(i: usize) -> &'static str {
    ["0", "I", "II", "III", "IV", "V", "VI", "VII", "VIII"][i]
}

fn estimate(frame: &Frame, spec: &RegressionSpec) -> Result<RegressionResult, EconError> {
    for c in spec.columns() {
        frame.column(c)?;
    }
    match spec.model {
        Model::Ols => ols_fe(frame, spec),
        Model::Probit => probit_fit(frame, spec),
    }
}

fn entry(table: &TableSpec, group: Option<i64>, outcome: Result<RegressionResult, String>) -> ReportEntry {
    let (result, error) = match outcome {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e)),
    };
    ReportEntry {
        table: table.table.clone(),
        spec: table.regression.name.clone(),
        group,
        result,
        error,
    }
}

fn run_one(table: &TableSpec, frame: Option<&Frame>) -> Vec<ReportEntry> {
    let Some(frame) = frame else {
        let source = match table.data {
            DataSource::PairPanel => "pair panel",
            DataSource::Deals => "deal panel",
        };
        return vec![entry(table, None, Err(format!("{source} not available")))];
    };
    let Some(split) = &table.split_by else {
        return vec![entry(table, None, estimate(frame, &table.regression).map_err(|e| e.to_string()))];
    };
    let col = match frame.column(split) {
        Ok(c) => c,
        Err(e) => return vec![entry(table, None, Err(e.to_string()))],
    };
    if col.iter().any(|v| !v.is_finite() || v.fract() != 0.0) {
        return vec![entry(table, None, Err(EconError::NonIntegerLabel(split.clone()).to_string()))];
    }
    let groups: BTreeSet<i64> = col.iter().map(|&v| v as i64).collect();
    groups
        .into_iter()
        .map(|g| {
            let keep: Vec<bool> = col.iter().map(|&v| v as i64 == g).collect();
            let sub = frame.filter(&keep);
            entry(table, Some(g), estimate(&sub, &table.regression).map_err(|e| e.to_string()))
        })
        .collect()
}

/// Estimates every spec (in parallel on the current rayon pool) and returns
/// entries in spec order, split groups ascending. Failures are recorded in
/// the entry rather than aborting the run.
pub fn build_table_pipeline(
    pairs: Option<&Frame>,
    deals: Option<&Frame>,
    specs: &[TableSpec],
) -> Vec<ReportEntry> {
    specs
        .par_iter()
        .map(|t| {
            let frame = match t.data {
                DataSource::PairPanel => pairs,
                DataSource::Deals => deals,
            };
            run_one(t, frame)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Long-format report: one row per coefficient (and per marginal effect), or
/// one error row per failed entry.
pub fn write_report_csv<W: Write>(entries: &[ReportEntry], writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "table", "spec", "group", "kind", "name", "estimate", "se", "t", "p", "stars", "n_obs",
        "n_clusters", "r2", "within_r2", "pseudo_r2", "error",
    ])?;
    for e in entries {
        let group = e.group.map(|g| g.to_string()).unwrap_or_default();
        match (&e.result, &e.error) {
            (Some(r), _) => {
                let rows = r
                    .coefficients
                    .iter()
                    .map(|c| ("coef", c))
                    .chain(r.marginal_effects.iter().map(|c| ("ame", c)));
                for (kind, c) in rows {
                    w.write_record([
                        e.table.clone(),
                        e.spec.clone(),
                        group.clone(),
                        kind.to_string(),
                        c.name.clone(),
                        c.estimate.to_string(),
                        c.se.to_string(),
                        c.t.to_string(),
                        c.p.to_string(),
                        c.stars.clone(),
                        r.n_obs.to_string(),
                        r.n_clusters.map(|g| g.to_string()).unwrap_or_default(),
                        opt(r.r_squared),
                        opt(r.within_r_squared),
                        opt(r.pseudo_r_squared),
                        String::new(),
                    ])?;
                }
            }
            (None, err) => {
                let mut row = vec![e.table.clone(), e.spec.clone(), group, "error".into()];
                row.extend(std::iter::repeat_n(String::new(), 11));
                row.push(err.clone().unwrap_or_default());
                w.write_record(row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::econometrics::{deals_frame, generate_synthetic_deals, synthetic_distance_series, DealParams};

    #[test]
    fn empty_spec_list_gives_empty_report() {
        assert!(build_table_pipeline(None, None, &[]).is_empty());
    }

    #[test]
    fn full_default_report_on_synthetic_panel() {
        let series = synthetic_distance_series(&Default::default(), 11).unwrap();
        let s = generate_synthetic_deals(&series, &DealParams::default(), 12).unwrap();
        let deals = deals_frame(&s.deals);
        let report = build_table_pipeline(Some(&s.pairs), Some(&deals), &default_specs());
        for e in &report {
            assert!(e.is_ok(), "{} {} {:?}: {:?}", e.table, e.spec, e.group, e.error);
        }
        let by_year: Vec<_> = report.iter().filter(|e| e.spec == "by_year_u").collect();
        assert_eq!(by_year.len(), 32);
        assert!(by_year.iter().all(|e| e.result.as_ref().unwrap().n_obs == 144));
        let t3 = report.iter().find(|e| e.spec == "V_log_d_u_year_ind_fe").unwrap();
        assert_eq!(t3.result.as_ref().unwrap().n_obs, 4608);

        let mut buf = Vec::new();
        write_report_csv(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().count() > report.len());
    }

    #[test]
    fn missing_deals_are_tagged_and_pair_specs_still_run() {
        let series = synthetic_distance_series(&Default::default(), 1).unwrap();
        let s = generate_synthetic_deals(&series, &DealParams::default(), 2).unwrap();
        let report = build_table_pipeline(Some(&s.pairs), None, &default_specs());
        for e in &report {
            let spec = default_specs().into_iter().find(|t| t.regression.name == e.spec).unwrap();
            match spec.data {
                DataSource::Deals => assert!(e.error.as_deref().unwrap().contains("deal panel")),
                DataSource::PairPanel => assert!(e.is_ok()),
            }
        }
    }

    #[test]
    fn unknown_column_is_an_entry_error() {
        let f = Frame::new().with("y", vec![1.0, 2.0, 3.0]).unwrap();
        let spec = TableSpec {
            table: "t".into(),
            data: DataSource::PairPanel,
            regression: RegressionSpec::ols("s", "y", &["nope"]),
            split_by: None,
        };
        let r = build_table_pipeline(Some(&f), None, &[spec]);
        assert_eq!(r.len(), 1);
        assert!(r[0].error.as_deref().unwrap().contains("nope"));
    }
}
