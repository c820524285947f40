//! Least squares with absorbed fixed effects.
//!
//! Fixed effects are swept out by alternating projections (iterated group
//! demeaning), which converges to the exact within transformation for any
//! number of dimensions. Cluster-robust covariance is the sandwich
//! `c · (X̃'X̃)⁻¹ [Σ_g (X̃_g'u_g)(X̃_g'u_g)'] (X̃'X̃)⁻¹` with
//! `c = G/(G−1) · (N−1)/(N−K)`, where `K` counts slopes plus absorbed
//! fixed-effect parameters (`Σ levels − (D − 1)` for `D` dimensions), or
//! slopes plus intercept without fixed effects.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::frame::group_codes;
use super::{complete_rows, Coefficient, EconError, Frame, Model, RegressionResult, RegressionSpec};

const SWEEP_TOL: f64 = 1e-14;
const SWEEP_MAX_ITER: usize = 100_000;

/// Group codes and level counts for one fixed-effect dimension.
pub(crate) type Groups = (Vec<usize>, usize);

fn sweep_once(col: &mut [f64], groups: &Groups, sums: &mut Vec<f64>, counts: &mut Vec<f64>) -> f64 {
    let (codes, levels) = groups;
    sums.clear();
    sums.resize(*levels, 0.0);
    counts.clear();
    counts.resize(*levels, 0.0);
    for (v, &g) in col.iter().zip(codes) {
        sums[g] += v;
        counts[g] += 1.0;
    }
    let mut max_adj: f64 = 0.0;
    for (s, c) in sums.iter_mut().zip(counts.iter()) {
        *s /= c;
        max_adj = max_adj.max(s.abs());
    }
    for (v, &g) in col.iter_mut().zip(codes) {
        *v -= sums[g];
    }
    max_adj
}

/// Residualises each column on the dummies of every fixed-effect dimension.
pub fn within_transform(columns: &[Vec<f64>], groups: &[Groups]) -> Vec<Vec<f64>> {
    let mut sums = Vec::new();
    let mut counts = Vec::new();
    columns
        .iter()
        .map(|c| {
            let mut col = c.clone();
            if groups.is_empty() {
                return col;
            }
            let scale = 1.0 + col.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for _ in 0..SWEEP_MAX_ITER {
                let mut adj: f64 = 0.0;
                for g in groups {
                    adj = adj.max(sweep_once(&mut col, g, &mut sums, &mut counts));
                }
                if groups.len() == 1 || adj <= SWEEP_TOL * scale {
                    break;
                }
            }
            col
        })
        .collect()
}

/// Parameters absorbed by the fixed effects.
pub(crate) fn absorbed_params(groups: &[Groups]) -> usize {
    if groups.is_empty() {
        0
    } else {
        groups.iter().map(|g| g.1).sum::<usize>() + 1 - groups.len()
    }
}

/// Fails when a column vanishes under absorption or the scaled cross
/// product is numerically singular.
pub(crate) fn check_rank(
    xtx: &DMatrix<f64>,
    raw_norms: &[f64],
) -> Result<(), EconError> {
    let p = xtx.nrows();
    let d: Vec<f64> = (0..p).map(|j| xtx[(j, j)].sqrt()).collect();
    for (dj, rj) in d.iter().zip(raw_norms) {
        if *rj == 0.0 || *dj <= 1e-9 * rj {
            return Err(EconError::Collinear);
        }
    }
    let scaled = DMatrix::from_fn(p, p, |i, j| xtx[(i, j)] / (d[i] * d[j]));
    let min_eig = scaled
        .symmetric_eigenvalues()
        .iter()
        .fold(f64::INFINITY, |m, &v| m.min(v));
    if min_eig < 1e-10 {
        return Err(EconError::Collinear);
    }
    Ok(())
}

pub(crate) fn cluster_meat(x: &DMatrix<f64>, u: &[f64], clusters: &Groups) -> DMatrix<f64> {
    let p = x.ncols();
    let (codes, levels) = clusters;
    let mut scores = DMatrix::<f64>::zeros(*levels, p);
    for (i, &g) in codes.iter().enumerate() {
        for j in 0..p {
            scores[(g, j)] += x[(i, j)] * u[i];
        }
    }
    scores.transpose() * scores
}

pub(crate) struct OlsFit {
    pub result: RegressionResult,
    pub residuals: Vec<f64>,
}

pub(crate) fn fit_ols(frame: &Frame, spec: &RegressionSpec) -> Result<OlsFit, EconError> {
    let data = complete_rows(frame, &spec.columns())?;
    let n = data.n_rows();
    let y_raw = data.column(&spec.dependent)?.to_vec();
    let mut cols: Vec<Vec<f64>> = spec
        .regressors
        .iter()
        .map(|r| data.column(r).map(<[f64]>::to_vec))
        .collect::<Result<_, _>>()?;
    let mut names: Vec<String> = spec.regressors.clone();

    let groups: Vec<Groups> = spec
        .fixed_effects
        .iter()
        .map(|f| data.labels(f))
        .collect::<Result<_, _>>()?;
    if groups.is_empty() {
        cols.insert(0, vec![1.0; n]);
        names.insert(0, "const".into());
    }
    let p = cols.len();
    let k = p + absorbed_params(&groups);
    if n < k || p == 0 {
        return Err(EconError::InsufficientObservations {
            n_obs: n,
            n_params: k,
        });
    }

    let raw_norms: Vec<f64> = cols
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut all = cols;
    all.push(y_raw.clone());
    let mut transformed = within_transform(&all, &groups);
    let y = transformed.pop().expect("dependent column present");
    let x = DMatrix::from_fn(n, p, |i, j| transformed[j][i]);

    let xtx = x.transpose() * &x;
    check_rank(&xtx, &raw_norms)?;
    let chol = xtx.clone().cholesky().ok_or(EconError::Collinear)?;
    let xty = x.transpose() * DVector::from_column_slice(&y);
    let beta = chol.solve(&xty);
    let inv = chol.inverse();
    let fitted = &x * &beta;
    let u: Vec<f64> = y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect();
    let rss: f64 = u.iter().map(|v| v * v).sum();

    // Exactly identified: coefficients only, no residual degrees of freedom.
    let exact = n == k;
    let (cov, df, n_clusters) = match &spec.cluster {
        _ if exact => (DMatrix::from_element(p, p, f64::NAN), 0.0, None),
        Some(c) => {
            let clusters = group_codes(c, data.column(c)?)?;
            let g = clusters.1;
            if g < 2 {
                return Err(EconError::TooFewClusters(g));
            }
            let meat = cluster_meat(&x, &u, &clusters);
            let factor = (g as f64 / (g as f64 - 1.0)) * ((n as f64 - 1.0) / (n - k) as f64);
            (&inv * meat * &inv * factor, (g - 1) as f64, Some(g))
        }
        None => {
            let s2 = rss / (n - k) as f64;
            (&inv * s2, (n - k) as f64, None)
        }
    };

    let tdist = StudentsT::new(0.0, 1.0, df.max(1.0)).expect("positive df");
    let p_of_t = |t: f64| if exact { f64::NAN } else { 2.0 * tdist.sf(t.abs()) };
    let coefficients = names
        .iter()
        .enumerate()
        .map(|(j, name)| Coefficient::new(name, beta[j], cov[(j, j)].sqrt(), p_of_t))
        .collect();

    let y_mean = y_raw.iter().sum::<f64>() / n as f64;
    let tss: f64 = y_raw.iter().map(|v| (v - y_mean).powi(2)).sum();
    let within_tss: f64 = y.iter().map(|v| v * v).sum();
    let result = RegressionResult {
        spec: spec.name.clone(),
        model: Model::Ols,
        coefficients,
        covariance: (0..p).map(|i| (0..p).map(|j| cov[(i, j)]).collect()).collect(),
        n_obs: n,
        n_clusters,
        df: Some(df),
        r_squared: Some(if tss > 0.0 { 1.0 - rss / tss } else { 0.0 }),
        within_r_squared: (!groups.is_empty())
            .then(|| if within_tss > 0.0 { 1.0 - rss / within_tss } else { 0.0 }),
        pseudo_r_squared: None,
        log_likelihood: None,
        marginal_effects: Vec::new(),
        iterations: 0,
    };
    Ok(OlsFit {
        result,
        residuals: u,
    })
}

/// OLS with the spec's fixed effects absorbed and, when requested, errors
/// clustered on the spec's cluster column. Rows with a non-finite value in
/// any used column are dropped.
pub fn ols_fe(frame: &Frame, spec: &RegressionSpec) -> Result<RegressionResult, EconError> {
    fit_ols(frame, spec).map(|f| f.result)
}

/// Residual of `target` after regressing it on `conditioning` and the
/// fixed-effect dummies (an intercept when there are none). Rows dropped for
/// missing values come back as NaN.
pub fn orthogonalize(
    target: &str,
    conditioning: &[&str],
    fe_dims: &[&str],
    frame: &Frame,
) -> Result<Vec<f64>, EconError> {
    let spec = RegressionSpec::ols("orthogonalize", target, conditioning).fe(fe_dims);
    let cols = spec.columns();
    let mut keep = vec![true; frame.n_rows()];
    for c in &cols {
        for (k, v) in keep.iter_mut().zip(frame.column(c)?) {
            *k &= v.is_finite();
        }
    }
    let fit = fit_ols(frame, &spec)?;
    let mut resid = fit.residuals.into_iter();
    Ok(keep
        .iter()
        .map(|&k| if k { resid.next().expect("one residual per kept row") } else { f64::NAN })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;
    use rand::Rng;

    #[test]
    fn exact_line() {
        let f = Frame::new()
            .with("x", vec![0.0, 1.0])
            .unwrap()
            .with("y", vec![0.0, 2.0])
            .unwrap();
        let r = ols_fe(&f, &RegressionSpec::ols("line", "y", &["x"])).unwrap();
        assert!((r.coef("x").unwrap().estimate - 2.0).abs() < 1e-12);
        assert!(r.coef("const").unwrap().estimate.abs() < 1e-12);
        // No residual degrees of freedom, so no standard errors.
        assert!(r.coef("x").unwrap().se.is_nan());
        let one = Frame::new().with("x", vec![1.0]).unwrap().with("y", vec![2.0]).unwrap();
        assert!(matches!(
            ols_fe(&one, &RegressionSpec::ols("line", "y", &["x"])),
            Err(EconError::InsufficientObservations { .. })
        ));
    }

    #[test]
    fn collinear_regressors_rejected() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let f = Frame::new()
            .with("x", x.clone())
            .unwrap()
            .with("x2", x.iter().map(|v| 2.0 * v).collect())
            .unwrap()
            .with("y", x.iter().map(|v| v.sin()).collect())
            .unwrap();
        let err = ols_fe(&f, &RegressionSpec::ols("c", "y", &["x", "x2"])).unwrap_err();
        assert!(matches!(err, EconError::Collinear));

        // A regressor constant within groups vanishes under absorption.
        let g: Vec<f64> = (0..20).map(|i| (i % 4) as f64).collect();
        let f = f.with("g", g.clone()).unwrap().with("gx", g).unwrap();
        let err = ols_fe(&f, &RegressionSpec::ols("c", "y", &["gx"]).fe(&["g"])).unwrap_err();
        assert!(matches!(err, EconError::Collinear));
    }

    #[test]
    fn single_cluster_rejected() {
        let mut rng = rng_from_seed(1);
        let x: Vec<f64> = (0..30).map(|_| rng.random()).collect();
        let f = Frame::new()
            .with("x", x.clone())
            .unwrap()
            .with("y", x.iter().map(|v| v + rng.random::<f64>()).collect())
            .unwrap()
            .with("c", vec![1.0; 30])
            .unwrap();
        let err = ols_fe(&f, &RegressionSpec::ols("c", "y", &["x"]).cluster("c")).unwrap_err();
        assert!(matches!(err, EconError::TooFewClusters(1)));
    }

    #[test]
    fn orthogonalize_properties() {
        let mut rng = rng_from_seed(2);
        let n = 120;
        let a: Vec<f64> = (0..n).map(|_| rng.random()).collect();
        let b: Vec<f64> = a.iter().map(|v| 0.5 * v + rng.random::<f64>()).collect();
        let yr: Vec<f64> = (0..n).map(|i| (i % 6) as f64).collect();
        let f = Frame::new()
            .with("a", a.clone())
            .unwrap()
            .with("b", b)
            .unwrap()
            .with("yr", yr.clone())
            .unwrap();
        let r = orthogonalize("b", &["a"], &["yr"], &f).unwrap();
        assert!(r.iter().sum::<f64>().abs() < 1e-10);
        assert!(r.iter().zip(&a).map(|(u, x)| u * x).sum::<f64>().abs() < 1e-10);
        for level in 0..6 {
            let s: f64 = r
                .iter()
                .zip(&yr)
                .filter(|(_, &g)| g == level as f64)
                .map(|(u, _)| u)
                .sum();
            assert!(s.abs() < 1e-10);
        }
        let own = orthogonalize("a", &["a"], &[], &f).unwrap();
        assert!(own.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn missing_rows_are_dropped() {
        let f = Frame::new()
            .with("x", vec![0.0, 1.0, 2.0, 3.0, f64::NAN])
            .unwrap()
            .with("y", vec![1.0, 3.1, 4.9, 7.0, 100.0])
            .unwrap();
        let r = ols_fe(&f, &RegressionSpec::ols("m", "y", &["x"])).unwrap();
        assert_eq!(r.n_obs, 4);
        let resid = orthogonalize("y", &["x"], &[], &f).unwrap();
        assert!(resid[4].is_nan());
    }
}
