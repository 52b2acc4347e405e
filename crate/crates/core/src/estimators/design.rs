use crate::cohort::{Cohort, CohortData, SubjectRecord};
use crate::error::{Error, Result};
use crate::survcore::{cox_fit, CountingProcessData, CoxOptions};

use super::result::{EstimatorResult, Method};
use super::settings::EstimationSettings;

/// Builds a Cox design whose first column is the treatment indicator,
/// followed by method-specific columns and the confounders.
///
/// Each row gets its own subject id (a person may contribute overlapping
/// rows on the reset axis) and is clustered on the record id.
pub(crate) struct DesignBuilder {
    data: CountingProcessData,
    confounders: Vec<usize>,
    row: Vec<f64>,
}

impl DesignBuilder {
    pub fn new(cohort: &CohortData, extra: &[String], settings: &EstimationSettings) -> Result<Self> {
        let confounders = cohort.covariate_indices(&settings.confounders)?;
        let mut names = vec!["treatment".to_string()];
        names.extend(extra.iter().cloned());
        names.extend(settings.confounders.iter().cloned());
        Ok(Self {
            data: CountingProcessData::new(names),
            confounders,
            row: Vec::new(),
        })
    }

    #[allow(clippy::too_many_arguments)]
    pub fn push(
        &mut self,
        record: &SubjectRecord,
        start: f64,
        stop: f64,
        status: bool,
        stratum: u32,
        treated: bool,
        extra: &[f64],
    ) -> Result<()> {
        self.row.clear();
        self.row.push(if treated { 1.0 } else { 0.0 });
        self.row.extend_from_slice(extra);
        self.row
            .extend(self.confounders.iter().map(|&j| record.covariates[j]));
        let subject = self.data.len() as u64;
        self.data
            .push(subject, record.id, start, stop, status, stratum, &self.row)
    }

    pub fn finish(self) -> CountingProcessData {
        self.data
    }
}

pub(crate) fn fit_treatment(
    method: Method,
    data: &CountingProcessData,
    settings: &EstimationSettings,
) -> Result<EstimatorResult> {
    let options = CoxOptions {
        ties: settings.ties,
        cluster_variance: settings.robust,
        ..CoxOptions::default()
    };
    let fit = cox_fit(data, &options)?;
    let estimand = method.estimand().expect("estimators have a fixed estimand");
    EstimatorResult::from_fit(method, estimand, &fit, 0, settings.level, settings.robust)
}

/// Wait time of a treated record.
pub(crate) fn wait_of(record: &SubjectRecord) -> Result<f64> {
    record.wait_time.ok_or_else(|| {
        Error::InvalidInput(format!("treated record {} has no wait_time", record.id))
    })
}

/// Controls and treated records of a two-cohort dataset.
pub(crate) struct TwoCohorts<'a> {
    pub controls: Vec<&'a SubjectRecord>,
    pub treated: Vec<&'a SubjectRecord>,
}

impl<'a> TwoCohorts<'a> {
    pub fn split(data: &'a CohortData) -> Result<Self> {
        data.validate()?;
        let mut controls = Vec::new();
        let mut treated = Vec::new();
        for r in &data.records {
            match r.cohort {
                Cohort::Control => controls.push(r),
                Cohort::Treated => treated.push(r),
                Cohort::Prospective => {
                    return Err(Error::InvalidInput(
                        "prospective records must be restructured with reset_time_axis first".into(),
                    ))
                }
            }
        }
        Ok(Self { controls, treated })
    }

    /// Both cohorts, as every comparison requires.
    pub fn require_both(data: &'a CohortData) -> Result<Self> {
        let split = Self::split(data)?;
        if split.controls.is_empty() {
            return Err(Error::InvalidInput("no control records".into()));
        }
        if split.treated.is_empty() {
            return Err(Error::InvalidInput("no treated records".into()));
        }
        Ok(split)
    }
}
