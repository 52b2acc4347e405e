//! Subject-level cohort records shared by the generator, the estimators and
//! file I/O.
//!
//! Time conventions per cohort:
//! - `Control`: follow-up from diagnosis; `entry_time` is 0.
//! - `Treated`: `event_time` runs from treatment start (the reset axis);
//!   `entry_time` is the wait time `w` on the diagnosis axis.
//! - `Prospective`: one cohort followed from diagnosis; `event_time` is on
//!   the diagnosis axis and `treatment_start` is set for subjects treated
//!   before their event.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cohort {
    Control,
    Treated,
    Prospective,
}

impl Cohort {
    pub fn as_str(self) -> &'static str {
        match self {
            Cohort::Control => "control",
            Cohort::Treated => "treated",
            Cohort::Prospective => "prospective",
        }
    }
}

impl fmt::Display for Cohort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Cohort {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "control" => Ok(Cohort::Control),
            "treated" => Ok(Cohort::Treated),
            "prospective" => Ok(Cohort::Prospective),
            other => Err(format!(
                "unknown cohort `{other}` (expected control, treated or prospective)"
            )),
        }
    }
}

/// Quantities only a simulation knows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatentState {
    /// Individual untreated hazard rate.
    pub frailty_rate: f64,
    pub g_carrier: Option<bool>,
    /// Uncensored untreated event time on the diagnosis axis.
    pub untreated_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectRecord {
    pub id: u64,
    pub cohort: Cohort,
    pub entry_time: f64,
    pub event_time: f64,
    pub event: bool,
    pub wait_time: Option<f64>,
    pub treatment_start: Option<f64>,
    pub covariates: Vec<f64>,
    pub latent: Option<LatentState>,
}

impl SubjectRecord {
    /// Positive times, entry matching the wait time for treated subjects,
    /// treatment before the event for prospective ones. Errors name the
    /// offending field.
    pub fn check(&self, n_covariates: usize) -> std::result::Result<(), (&'static str, String)> {
        if self.covariates.len() != n_covariates {
            return Err((
                "covariates",
                format!("{} covariates, expected {n_covariates}", self.covariates.len()),
            ));
        }
        if !(self.event_time > 0.0 && self.event_time.is_finite()) {
            return Err(("event_time", format!("event_time {} must be positive", self.event_time)));
        }
        if !(self.entry_time >= 0.0 && self.entry_time.is_finite()) {
            return Err(("entry_time", format!("entry_time {} must be non-negative", self.entry_time)));
        }
        match self.cohort {
            Cohort::Control => {
                if self.entry_time != 0.0 {
                    return Err(("entry_time", "control entry_time must be 0".into()));
                }
            }
            Cohort::Treated => {
                if let Some(w) = self.wait_time {
                    if w != self.entry_time {
                        return Err((
                            "wait_time",
                            format!("wait_time {w} differs from entry_time {}", self.entry_time),
                        ));
                    }
                }
            }
            Cohort::Prospective => {
                if self.entry_time != 0.0 {
                    return Err(("entry_time", "prospective entry_time must be 0".into()));
                }
                if let Some(w) = self.treatment_start {
                    if !(w >= 0.0 && w < self.event_time) {
                        return Err((
                            "treatment_start",
                            format!("treatment start {w} is not before event time {}", self.event_time),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Event or censoring time on the diagnosis axis.
    pub fn exit_time_from_diagnosis(&self) -> f64 {
        match self.cohort {
            Cohort::Treated => self.entry_time + self.event_time,
            Cohort::Control | Cohort::Prospective => self.event_time,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CohortData {
    pub covariate_names: Vec<String>,
    pub records: Vec<SubjectRecord>,
}

impl CohortData {
    pub fn new(covariate_names: Vec<String>, records: Vec<SubjectRecord>) -> Self {
        Self {
            covariate_names,
            records,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn of(&self, cohort: Cohort) -> impl Iterator<Item = &SubjectRecord> {
        self.records.iter().filter(move |r| r.cohort == cohort)
    }

    pub fn count(&self, cohort: Cohort) -> usize {
        self.of(cohort).count()
    }

    /// Indices of `names` among the covariate columns.
    pub fn covariate_indices(&self, names: &[String]) -> Result<Vec<usize>> {
        names
            .iter()
            .map(|n| {
                self.covariate_names
                    .iter()
                    .position(|c| c == n)
                    .ok_or_else(|| Error::InvalidInput(format!("unknown confounder column `{n}`")))
            })
            .collect()
    }

    /// Record-level consistency; see [`SubjectRecord::check`].
    pub fn validate(&self) -> Result<()> {
        for (i, r) in self.records.iter().enumerate() {
            r.check(self.covariate_names.len()).map_err(|(_, msg)| {
                Error::InvalidInput(format!("record {} (id {}): {msg}", i + 1, r.id))
            })?;
        }
        Ok(())
    }
}
