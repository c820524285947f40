//! Probit maximum likelihood by Newton-Raphson with analytic score and
//! Hessian, step-halving on likelihood decrease, and average marginal
//! effects with delta-method errors.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal};
use libm::erfc;

use super::frame::group_codes;
use super::ols::{check_rank, cluster_meat, Groups};
use super::{complete_rows, Coefficient, EconError, Frame, Model, RegressionResult, RegressionSpec};

pub const MAX_ITERATIONS: usize = 100;
pub const SCORE_TOLERANCE: f64 = 1e-8;
const MAX_HALVINGS: usize = 40;
/// Coefficients beyond this magnitude on unit-scale regressors signal
/// (quasi-)separation.
const DIVERGENCE_BOUND: f64 = 30.0;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

pub fn normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn log_cdf(z: f64) -> f64 {
    let c = normal_cdf(z);
    if c > 1e-300 {
        c.ln()
    } else {
        // Mills-ratio asymptotics for the far left tail.
        -0.5 * z * z - (-z).ln() - 0.5 * (std::f64::consts::TAU).ln()
            + (1.0 - 1.0 / (z * z)).ln()
    }
}

/// `φ(z)/Φ(z)`, stable for very negative `z`.
fn mills(z: f64) -> f64 {
    let c = normal_cdf(z);
    if c > 1e-300 {
        normal_pdf(z) / c
    } else {
        let z2 = z * z;
        -z / (1.0 - 1.0 / z2 + 3.0 / (z2 * z2))
    }
}

struct Design {
    x: DMatrix<f64>,
    y: Vec<f64>,
    names: Vec<String>,
    /// Number of leading columns that are reported (intercept + regressors).
    n_reported: usize,
    clusters: Option<Groups>,
}

fn build_design(frame: &Frame, spec: &RegressionSpec) -> Result<Design, EconError> {
    let data = complete_rows(frame, &spec.columns())?;
    let n = data.n_rows();
    let y = data.column(&spec.dependent)?.to_vec();
    if y.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(EconError::NonBinaryDependent);
    }
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; n]];
    let mut names = vec!["const".to_string()];
    for r in &spec.regressors {
        cols.push(data.column(r)?.to_vec());
        names.push(r.clone());
    }
    let n_reported = cols.len();
    for fe in &spec.fixed_effects {
        let (codes, levels) = data.labels(fe)?;
        // Level 0 is the omitted category.
        for level in 1..levels {
            cols.push(codes.iter().map(|&c| f64::from(u8::from(c == level))).collect());
            names.push(format!("{fe}#{level}"));
        }
    }
    let p = cols.len();
    if n <= p {
        return Err(EconError::InsufficientObservations {
            n_obs: n,
            n_params: p,
        });
    }
    let clusters = match &spec.cluster {
        Some(c) => {
            let g = group_codes(c, data.column(c)?)?;
            if g.1 < 2 {
                return Err(EconError::TooFewClusters(g.1));
            }
            Some(g)
        }
        None => None,
    };
    Ok(Design {
        x: DMatrix::from_fn(n, p, |i, j| cols[j][i]),
        y,
        names,
        n_reported,
        clusters,
    })
}

/// Probit log-likelihood at `beta`.
pub fn probit_log_likelihood(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> f64 {
    let z = x * beta;
    z.iter()
        .zip(y)
        .map(|(&z, &yi)| {
            let q = 2.0 * yi - 1.0;
            log_cdf(q * z)
        })
        .sum()
}

/// Per-observation generalised residuals `λ_i = q φ(z)/Φ(qz)`.
fn lambdas(z: &DVector<f64>, y: &[f64]) -> Vec<f64> {
    z.iter()
        .zip(y)
        .map(|(&z, &yi)| {
            let q = 2.0 * yi - 1.0;
            q * mills(q * z)
        })
        .collect()
}

/// Gradient of the log-likelihood.
pub fn probit_score(x: &DMatrix<f64>, y: &[f64], beta: &DVector<f64>) -> DVector<f64> {
    let z = x * beta;
    let lam = DVector::from_vec(lambdas(&z, y));
    x.transpose() * lam
}

fn hessian(x: &DMatrix<f64>, z: &DVector<f64>, lam: &[f64]) -> DMatrix<f64> {
    let (n, p) = x.shape();
    let mut h = DMatrix::<f64>::zeros(p, p);
    for i in 0..n {
        let w = lam[i] * (lam[i] + z[i]);
        for a in 0..p {
            let xa = x[(i, a)] * w;
            if xa == 0.0 {
                continue;
            }
            for b in a..p {
                h[(a, b)] -= xa * x[(i, b)];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            h[(a, b)] = h[(b, a)];
        }
    }
    h
}

fn is_indicator(col: &[f64]) -> bool {
    col.iter().all(|&v| v == 0.0 || v == 1.0)
        && col.contains(&0.0)
        && col.contains(&1.0)
}

/// Probit MLE. FE dimensions enter as explicit dummies (first level
/// omitted); the intercept is always estimated.
pub fn probit_fit(frame: &Frame, spec: &RegressionSpec) -> Result<RegressionResult, EconError> {
    let d = build_design(frame, spec)?;
    let (n, p) = d.x.shape();
    let n1 = d.y.iter().filter(|&&v| v == 1.0).count();
    if n1 == 0 || n1 == n {
        return Err(EconError::PerfectSeparation);
    }
    let raw_norms: Vec<f64> = (0..p).map(|j| d.x.column(j).norm()).collect();
    check_rank(&(d.x.transpose() * &d.x), &raw_norms)?;

    let mut beta = DVector::<f64>::zeros(p);
    let mut ll = probit_log_likelihood(&d.x, &d.y, &beta);
    let mut iterations = 0;
    let mut converged = false;
    let mut score_max = f64::INFINITY;
    let mut neg_h_inv = DMatrix::<f64>::identity(p, p);

    while iterations <= MAX_ITERATIONS {
        let z = &d.x * &beta;
        let lam = lambdas(&z, &d.y);
        let score = d.x.transpose() * DVector::from_column_slice(&lam);
        let neg_h = -hessian(&d.x, &z, &lam);
        score_max = score.amax();
        let chol = neg_h.clone().cholesky().ok_or(EconError::Collinear)?;
        neg_h_inv = chol.inverse();
        if score_max < SCORE_TOLERANCE {
            converged = true;
            break;
        }
        if iterations == MAX_ITERATIONS {
            break;
        }
        let step = chol.solve(&score);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let candidate = &beta + &step * t;
            let ll_new = probit_log_likelihood(&d.x, &d.y, &candidate);
            // Near the optimum the gain falls below the resolution of `ll`.
            let slack = 1e-12 * (1.0 + ll.abs());
            if ll_new.is_finite() && ll_new >= ll - slack {
                beta = candidate;
                ll = ll_new;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        iterations += 1;
        if beta.amax() > DIVERGENCE_BOUND || ll > -1e-9 {
            return Err(EconError::PerfectSeparation);
        }
        if !accepted {
            // No ascent possible along the Newton direction: at the optimum
            // up to rounding.
            let z = &d.x * &beta;
            let lam = lambdas(&z, &d.y);
            score_max = (d.x.transpose() * DVector::from_column_slice(&lam)).amax();
            converged = score_max < SCORE_TOLERANCE;
            break;
        }
    }
    if !converged {
        return Err(EconError::NonConvergence {
            iterations,
            score: score_max,
        });
    }

    let (cov, n_clusters) = match &d.clusters {
        Some(cl) => {
            let z = &d.x * &beta;
            let lam = lambdas(&z, &d.y);
            let meat = cluster_meat(&d.x, &lam, cl);
            let g = cl.1 as f64;
            (&neg_h_inv * meat * &neg_h_inv * (g / (g - 1.0)), Some(cl.1))
        }
        None => (neg_h_inv.clone(), None),
    };

    let normal = Normal::standard();
    let p_of_z = |t: f64| 2.0 * normal.sf(t.abs());
    let k = d.n_reported;
    let coefficients = (0..k)
        .map(|j| Coefficient::new(&d.names[j], beta[j], cov[(j, j)].sqrt(), p_of_z))
        .collect();

    // Average marginal effects of the spec regressors.
    let z = &d.x * &beta;
    let mut marginal_effects = Vec::with_capacity(k - 1);
    for j in 1..k {
        let col: Vec<f64> = d.x.column(j).iter().copied().collect();
        let mut grad = DVector::<f64>::zeros(p);
        let ame = if is_indicator(&col) {
            let mut total = 0.0;
            for i in 0..n {
                let base = z[i] - beta[j] * col[i];
                let (z1, z0) = (base + beta[j], base);
                total += normal_cdf(z1) - normal_cdf(z0);
                let (f1, f0) = (normal_pdf(z1), normal_pdf(z0));
                for m in 0..p {
                    let (x1, x0) = if m == j {
                        (1.0, 0.0)
                    } else {
                        (d.x[(i, m)], d.x[(i, m)])
                    };
                    grad[m] += f1 * x1 - f0 * x0;
                }
            }
            grad /= n as f64;
            total / n as f64
        } else {
            let mut total = 0.0;
            for i in 0..n {
                let f = normal_pdf(z[i]);
                total += f;
                for m in 0..p {
                    let delta = if m == j { 1.0 } else { 0.0 };
                    grad[m] += f * (delta - z[i] * beta[j] * d.x[(i, m)]);
                }
            }
            grad /= n as f64;
            total / n as f64 * beta[j]
        };
        let var = (grad.transpose() * &cov * &grad)[(0, 0)];
        marginal_effects.push(Coefficient::new(&d.names[j], ame, var.sqrt(), p_of_z));
    }

    let p_bar = n1 as f64 / n as f64;
    let ll0 = n1 as f64 * p_bar.ln() + (n - n1) as f64 * (1.0 - p_bar).ln();
    Ok(RegressionResult {
        spec: spec.name.clone(),
        model: Model::Probit,
        coefficients,
        covariance: (0..k).map(|a| (0..k).map(|b| cov[(a, b)]).collect()).collect(),
        n_obs: n,
        n_clusters,
        df: None,
        r_squared: None,
        within_r_squared: None,
        pseudo_r_squared: Some(1.0 - ll / ll0),
        log_likelihood: Some(ll),
        marginal_effects,
        iterations,
    })
}
