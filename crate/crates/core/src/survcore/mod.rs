//! Cox regression engine, spline basis and bias metrics.

mod bias;
mod cox;
mod data;
mod spline;

pub use bias::{bias_metrics, BiasReport};
pub use cox::{
    cox_fit, hazard_ratio, log_partial_likelihood, normal_quantile, risk_sets, score_residuals,
    wald_interval, CoxFit, CoxOptions, HazardRatio, Ties,
};
pub use data::{CountingProcessData, CountingProcessRow};
pub use spline::{default_knots, knot_quantiles, rcs_basis, SplineSpec};
