use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::survcore::{hazard_ratio, CoxFit};

/// Target population of an effect estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Estimand {
    Atc,
    Att,
    Ate,
}

impl Estimand {
    pub const ALL: [Estimand; 3] = [Estimand::Atc, Estimand::Att, Estimand::Ate];

    pub fn as_str(self) -> &'static str {
        match self {
            Estimand::Atc => "ATC",
            Estimand::Att => "ATT",
            Estimand::Ate => "ATE",
        }
    }
}

impl fmt::Display for Estimand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Estimand {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "ATC" => Ok(Estimand::Atc),
            "ATT" => Ok(Estimand::Att),
            "ATE" => Ok(Estimand::Ate),
            _ => Err(format!("unknown estimand `{s}` (expected ATC, ATT or ATE)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Counterfactual truth.
    #[serde(rename = "true")]
    Truth,
    TimeVarying,
    Unadjusted,
    WaitLinear,
    WaitQuadratic,
    WaitRcs,
    Matching,
    EarlyTreated,
    MedianControl,
    LeftTruncation,
}

impl Method {
    /// Estimators in table order.
    pub const ESTIMATORS: [Method; 9] = [
        Method::TimeVarying,
        Method::Unadjusted,
        Method::WaitLinear,
        Method::WaitQuadratic,
        Method::WaitRcs,
        Method::Matching,
        Method::EarlyTreated,
        Method::MedianControl,
        Method::LeftTruncation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Truth => "true",
            Method::TimeVarying => "time_varying",
            Method::Unadjusted => "unadjusted",
            Method::WaitLinear => "wait_linear",
            Method::WaitQuadratic => "wait_quadratic",
            Method::WaitRcs => "wait_rcs",
            Method::Matching => "matching",
            Method::EarlyTreated => "early_treated",
            Method::MedianControl => "median_control",
            Method::LeftTruncation => "left_truncation",
        }
    }

    /// Fixed estimand of each estimator.
    pub fn estimand(self) -> Option<Estimand> {
        match self {
            Method::Truth => None,
            Method::EarlyTreated => Some(Estimand::Atc),
            Method::MedianControl => Some(Estimand::Att),
            _ => Some(Estimand::Ate),
        }
    }

    /// Human-readable row label.
    pub fn label(self) -> &'static str {
        match self {
            Method::Truth => "True",
            Method::TimeVarying => "Time-varying covariate",
            Method::Unadjusted => "Unadjusted",
            Method::WaitLinear => "Wait time, linear",
            Method::WaitQuadratic => "Wait time, quadratic",
            Method::WaitRcs => "Wait time, restricted cubic spline",
            Method::Matching => "Landmark matching",
            Method::EarlyTreated => "Early treated only",
            Method::MedianControl => "Controls from median wait",
            Method::LeftTruncation => "Left truncation",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        std::iter::once(Method::Truth)
            .chain(Method::ESTIMATORS)
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorResult {
    pub method: Method,
    pub estimand: Estimand,
    pub log_hr: f64,
    pub hr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub se_log_hr: f64,
    pub n_subjects: usize,
    pub n_events: usize,
    pub robust_se_used: bool,
    /// Warnings raised while building the analysis dataset.
    pub notes: Vec<String>,
}

impl EstimatorResult {
    /// Result for coefficient `index` of a converged fit. Subjects are
    /// counted as distinct clusters.
    pub fn from_fit(
        method: Method,
        estimand: Estimand,
        fit: &CoxFit,
        index: usize,
        level: f64,
        robust: bool,
    ) -> Result<Self> {
        let hr = hazard_ratio(fit, index, level, robust)?;
        Ok(Self {
            method,
            estimand,
            log_hr: fit.coefficients[index],
            hr: hr.hr,
            ci_low: hr.ci_low,
            ci_high: hr.ci_high,
            se_log_hr: hr.se_log_hr,
            n_subjects: fit.n_clusters,
            n_events: fit.n_events,
            robust_se_used: robust,
            notes: Vec::new(),
        })
    }
}
