use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bias of a corrected estimate on the log-hazard scale, relative to a truth
/// and to the uncorrected estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub true_log_hr: f64,
    pub unadjusted_log_hr: f64,
    pub method_log_hr: f64,
    /// `100 (ln true - ln unadjusted) / ln true`; `None` when the truth is HR 1.
    pub percent_bias_unadjusted: Option<f64>,
    /// Share of the unadjusted log-scale bias removed by the method; `None`
    /// when the unadjusted estimate equals the truth.
    pub percent_bias_eliminated: Option<f64>,
}

pub fn bias_metrics(true_hr: f64, unadjusted_hr: f64, method_hr: f64) -> Result<BiasReport> {
    for (name, v) in [
        ("true", true_hr),
        ("unadjusted", unadjusted_hr),
        ("method", method_hr),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "{name} hazard ratio must be positive and finite, got {v}"
            )));
        }
    }
    let (t, u, m) = (true_hr.ln(), unadjusted_hr.ln(), method_hr.ln());
    let unadjusted_gap = t - u;
    Ok(BiasReport {
        true_log_hr: t,
        unadjusted_log_hr: u,
        method_log_hr: m,
        percent_bias_unadjusted: (t != 0.0).then(|| 100.0 * unadjusted_gap / t),
        percent_bias_eliminated: (unadjusted_gap != 0.0)
            .then(|| 100.0 * (1.0 - (t - m) / unadjusted_gap)),
    })
}

impl BiasReport {
    pub fn eliminated(&self) -> Result<f64> {
        self.percent_bias_eliminated.ok_or_else(|| {
            Error::UndefinedMetric("unadjusted estimate equals the truth; nothing to eliminate".into())
        })
    }
}
