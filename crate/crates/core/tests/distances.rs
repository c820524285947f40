use std::collections::BTreeMap;

use funcdist::distance::{
    matrices_from_records, read_distance_csv, unadjusted_distance, write_distance_csv, Convention,
};
use funcdist::neural::{init_network, train, Architecture, TrainConfig};
use funcdist::panel::{IndustryYearDataset, OutputKind};
use funcdist::simulate::{generate_firm_panel, FirmPanelParams};
use funcdist::workflow::{run_panel, WorkflowOptions};

fn quick_options() -> WorkflowOptions {
    WorkflowOptions {
        train: TrainConfig {
            seed: 17,
            epochs: 150,
            ..Default::default()
        },
        ..Default::default()
    }
}

fn panel(industries: u8, years: usize) -> Vec<funcdist::panel::FirmYear> {
    generate_firm_panel(
        &FirmPanelParams {
            n_industries: industries,
            n_years: years,
            ..Default::default()
        },
        5,
    )
    .unwrap()
}

#[test]
fn in_sample_identities_hold_for_every_pair() {
    let run = run_panel(&panel(12, 1), &quick_options()).unwrap();
    assert_eq!(run.matrices.len(), 1);
    let m = &run.matrices[0];
    assert_eq!(m.records.len(), 144);
    for r in &m.records {
        if r.acquiror_industry == r.target_industry {
            assert_eq!(r.d_u, 1.0);
            assert_eq!(r.d_tf, 1.0);
        }
        assert!(r.d_tf <= r.d_u + 1e-12, "{r:?}");
        assert!(r.d_u > 0.0 && r.d_tf > 0.0);
        assert!(r.log_d_u.is_finite() && r.log_d_tf.is_finite());
    }
    let mean = |f: fn(&funcdist::distance::DistanceRecord) -> f64| {
        m.records.iter().map(f).sum::<f64>() / m.records.len() as f64
    };
    assert!(mean(|r| r.d_tf) <= mean(|r| r.d_u));
}

#[test]
fn thin_industry_years_are_skipped() {
    let mut firms = panel(3, 2);
    // Leave industry 2 with 10 firms in the first year.
    let mut seen = 0;
    firms.retain(|f| {
        if f.industry_id == 2 && f.year == 1987 {
            seen += 1;
            seen <= 10
        } else {
            true
        }
    });
    let run = run_panel(&firms, &quick_options()).unwrap();
    assert_eq!(run.skipped.len(), 1);
    assert_eq!((run.skipped[0].industry, run.skipped[0].year), (2, 1987));
    let first = &run.matrices[0];
    assert_eq!(first.industries, vec![1, 3]);
    assert!(first
        .records
        .iter()
        .all(|r| r.acquiror_industry != 2 && r.target_industry != 2));
    assert_eq!(run.matrices[1].records.len(), 9);
}

#[test]
fn holdout_evaluation_runs_and_can_leave_self_pairs_off_one() {
    let opts = WorkflowOptions {
        holdout_fraction: 0.3,
        ..quick_options()
    };
    let run = run_panel(&panel(3, 1), &opts).unwrap();
    let m = &run.matrices[0];
    assert_eq!(m.records.len(), 9);
    for r in &m.records {
        assert!(r.d_u.is_finite() && r.d_tf.is_finite());
    }
    // Out of sample, a retrained self-pair need not equal one.
    let self_tf: Vec<f64> = m
        .records
        .iter()
        .filter(|r| r.acquiror_industry == r.target_industry)
        .map(|r| r.d_tf)
        .collect();
    assert!(self_tf.iter().any(|&d| d != 1.0));
}

#[test]
fn unadjusted_distance_is_scale_equivariant() {
    let x: Vec<_> = (0..50)
        .map(|i| {
            let t = i as f64 / 50.0 - 0.5;
            [t, t * t, (3.0 * t).sin(), 0.0, 0.1 * t, 0.0, 0.0, 0.0]
        })
        .collect();
    let y: Vec<f64> = x.iter().map(|r| r[0] - r[2]).collect();
    let cfg = TrainConfig {
        seed: 1,
        epochs: 50,
        ..Default::default()
    };
    let w_t = train(&x, &y, &Architecture::default(), &cfg).unwrap().weights;
    let w_a = init_network(&Architecture::default(), 9).unwrap();
    let ds = |y: Vec<f64>| IndustryYearDataset {
        industry_id: 1,
        year: 2000,
        output_kind: OutputKind::LogQ,
        firm_ids: (0..50).map(|i| i.to_string()).collect(),
        x: x.clone(),
        y,
    };
    let base = unadjusted_distance(&w_a, &w_t, &ds(y.clone()), Convention::Rmse).unwrap();

    let c = 3.7;
    let scale = |w: &funcdist::neural::WeightSet| {
        let mut w = w.clone();
        let last = w.layers.last_mut().unwrap();
        last.weights.iter_mut().chain(last.biases.iter_mut()).for_each(|v| *v *= c);
        w
    };
    let scaled = unadjusted_distance(
        &scale(&w_a),
        &scale(&w_t),
        &ds(y.iter().map(|v| c * v).collect()),
        Convention::Rmse,
    )
    .unwrap();
    assert!((scaled.d_u / base.d_u - 1.0).abs() < 1e-12);

    let mse = unadjusted_distance(&w_a, &w_t, &ds(y), Convention::Mse).unwrap();
    assert!((mse.d_u - base.d_u * base.d_u).abs() < 1e-12 * mse.d_u);
}

#[test]
fn distance_csv_round_trip_is_exact() {
    let run = run_panel(&panel(2, 2), &quick_options()).unwrap();
    let records: Vec<_> = run.matrices.iter().flat_map(|m| m.records.clone()).collect();
    let mut buf = Vec::new();
    write_distance_csv(&mut buf, &records).unwrap();
    let back = read_distance_csv(buf.as_slice()).unwrap();
    assert_eq!(back, records);
    let grids = matrices_from_records(&back);
    let by_year: BTreeMap<i32, usize> = grids.iter().map(|m| (m.year, m.records.len())).collect();
    assert_eq!(by_year, BTreeMap::from([(1987, 4), (1988, 4)]));
}
