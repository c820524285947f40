//! Functional distances between industries' production technologies.
//!
//! Per industry-year, a small multilayer perceptron maps eight
//! industry-mean-adjusted firm fundamentals to an outcome (log Tobin's Q or
//! ROA). Cross-industry distances compare prediction errors of another
//! industry's network, with and without retraining its last layer, against
//! the industry's own network. A linear three-group economy with closed-form
//! errors serves as a ground-truth check, and the econometrics module runs
//! the downstream regressions on real or synthetic deal panels.

pub mod distance;
pub mod econometrics;
pub mod neural;
pub mod panel;
pub mod seed;
pub mod simulate;
pub mod stylized;
pub mod workflow;
