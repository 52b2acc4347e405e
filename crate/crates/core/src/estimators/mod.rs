//! Unadjusted analysis, survivorship-bias corrections and the time-varying
//! benchmark.
//!
//! Two-cohort data hold control records timed from diagnosis and treated
//! records timed from treatment start (entry time = wait time). Prospective
//! data are converted with [`reset_time_axis`].

mod design;
mod landmark;
mod methods;
mod result;
mod settings;

use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{Cohort, CohortData};
use crate::error::{Error, Result};
use crate::survcore::{bias_metrics, BiasReport};

pub use landmark::{build_landmarks, estimate_matching, LandmarkData, LandmarkSummary};
pub use methods::{
    estimate_early_treated, estimate_left_truncation, estimate_median_control,
    estimate_time_varying, estimate_unadjusted, estimate_wait_covariate, median_wait,
    reset_time_axis, WaitForm,
};
pub use result::{Estimand, EstimatorResult, Method};
pub use settings::{EstimationSettings, LandmarkSpec, WaitCoding};

/// True hazard ratio per estimand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthValues {
    pub atc: f64,
    pub att: f64,
    pub ate: f64,
}

impl TruthValues {
    pub fn uniform(hr: f64) -> Self {
        Self {
            atc: hr,
            att: hr,
            ate: hr,
        }
    }

    pub fn get(&self, estimand: Estimand) -> f64 {
        match estimand {
            Estimand::Atc => self.atc,
            Estimand::Att => self.att,
            Estimand::Ate => self.ate,
        }
    }

    /// Collects truth rows (one per estimand).
    pub fn from_results(results: &[EstimatorResult]) -> Result<Self> {
        let find = |e: Estimand| {
            results
                .iter()
                .find(|r| r.estimand == e)
                .map(|r| r.hr)
                .ok_or_else(|| Error::InvalidInput(format!("no true value for {e}")))
        };
        Ok(Self {
            atc: find(Estimand::Atc)?,
            att: find(Estimand::Att)?,
            ate: find(Estimand::Ate)?,
        })
    }
}

/// One estimator's outcome; failures are kept per row.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodOutcome {
    pub method: Method,
    pub estimand: Estimand,
    pub result: std::result::Result<EstimatorResult, String>,
    pub bias: Option<BiasReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub truth: Option<TruthValues>,
    pub outcomes: Vec<MethodOutcome>,
    pub n_controls: usize,
    pub n_treated: usize,
    pub n_prospective: usize,
}

impl RunReport {
    pub fn result(&self, method: Method) -> Option<&EstimatorResult> {
        self.outcomes
            .iter()
            .find(|o| o.method == method)
            .and_then(|o| o.result.as_ref().ok())
    }
}

/// Runs every applicable estimator. Prospective data additionally get the
/// time-varying benchmark, which also serves as the truth when none is
/// supplied. Bias metrics need a truth and a successful unadjusted fit.
pub fn run_all(
    data: &CohortData,
    settings: &EstimationSettings,
    truth: Option<TruthValues>,
) -> Result<RunReport> {
    settings.validate()?;
    data.validate()?;
    let n_prospective = data.count(Cohort::Prospective);
    if n_prospective > 0 && n_prospective < data.len() {
        return Err(Error::InvalidInput(
            "prospective records cannot be mixed with control or treated records".into(),
        ));
    }

    let mut outcomes = Vec::new();
    let mut truth = truth;
    let two_cohort: Cow<CohortData> = if n_prospective > 0 {
        let tv = estimate_time_varying(data, settings);
        if truth.is_none() {
            if let Ok(r) = &tv {
                truth = Some(TruthValues::uniform(r.hr));
            }
        }
        outcomes.push(outcome(Method::TimeVarying, tv));
        Cow::Owned(reset_time_axis(data)?)
    } else {
        Cow::Borrowed(data)
    };
    let two_cohort = two_cohort.as_ref();

    let methods = [
        Method::Unadjusted,
        Method::WaitLinear,
        Method::WaitQuadratic,
        Method::WaitRcs,
        Method::Matching,
        Method::EarlyTreated,
        Method::MedianControl,
        Method::LeftTruncation,
    ];
    let results: Vec<MethodOutcome> = methods
        .par_iter()
        .map(|&m| outcome(m, run_method(m, two_cohort, settings)))
        .collect();
    outcomes.extend(results);

    if let Some(truth) = truth {
        let unadjusted = outcomes
            .iter()
            .find(|o| o.method == Method::Unadjusted)
            .and_then(|o| o.result.as_ref().ok())
            .map(|r| r.hr);
        if let Some(u) = unadjusted {
            for o in &mut outcomes {
                if let Ok(r) = &o.result {
                    o.bias = bias_metrics(truth.get(o.estimand), u, r.hr).ok();
                }
            }
        }
    }

    Ok(RunReport {
        truth,
        outcomes,
        n_controls: two_cohort.count(Cohort::Control),
        n_treated: two_cohort.count(Cohort::Treated),
        n_prospective,
    })
}

fn run_method(method: Method, data: &CohortData, settings: &EstimationSettings) -> Result<EstimatorResult> {
    match method {
        Method::Unadjusted => estimate_unadjusted(data, settings),
        Method::WaitLinear => estimate_wait_covariate(data, WaitForm::Linear, settings),
        Method::WaitQuadratic => estimate_wait_covariate(data, WaitForm::Quadratic, settings),
        Method::WaitRcs => estimate_wait_covariate(data, WaitForm::Rcs(settings.rcs_knots), settings),
        Method::Matching => estimate_matching(data, settings),
        Method::EarlyTreated => estimate_early_treated(data, settings),
        Method::MedianControl => estimate_median_control(data, settings),
        Method::LeftTruncation => estimate_left_truncation(data, settings),
        Method::TimeVarying => estimate_time_varying(data, settings),
        Method::Truth => Err(Error::InvalidInput("the truth is not an estimator".into())),
    }
}

fn outcome(method: Method, result: Result<EstimatorResult>) -> MethodOutcome {
    MethodOutcome {
        method,
        estimand: method.estimand().expect("estimators have a fixed estimand"),
        result: result.map_err(|e| e.to_string()),
        bias: None,
    }
}
