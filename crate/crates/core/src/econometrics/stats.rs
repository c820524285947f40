use statrs::distribution::{ContinuousCDF, StudentsT};

use super::EconError;

/// Pearson correlation with a two-sided p-value from `t = r√(n−2)/√(1−r²)`
/// on `n − 2` degrees of freedom.
pub fn correlation(x: &[f64], y: &[f64]) -> Result<(f64, f64), EconError> {
    let n = x.len();
    if n != y.len() || n < 3 {
        return Err(EconError::BadLengths {
            x: x.len(),
            y: y.len(),
            min: 3,
        });
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (da, db) = (a - mx, b - my);
        sxx += da * da;
        syy += db * db;
        sxy += da * db;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(EconError::ConstantInput);
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = nf - 2.0;
    let p = if r.abs() == 1.0 {
        0.0
    } else {
        let t = r * (df / (1.0 - r * r)).sqrt();
        let dist = StudentsT::new(0.0, 1.0, df).expect("df >= 1");
        2.0 * dist.sf(t.abs())
    };
    Ok((r, p))
}
