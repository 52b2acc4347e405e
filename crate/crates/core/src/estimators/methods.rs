use crate::cohort::{Cohort, CohortData, SubjectRecord};
use crate::error::{Error, Result};
use crate::survcore::{default_knots, SplineSpec};

use super::design::{fit_treatment, wait_of, DesignBuilder, TwoCohorts};
use super::result::{EstimatorResult, Method};
use super::settings::{EstimationSettings, WaitCoding};

/// Functional form of the wait-time adjustment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaitForm {
    Linear,
    Quadratic,
    /// Restricted cubic spline with the given number of knots.
    Rcs(usize),
}

impl WaitForm {
    pub fn method(self) -> Method {
        match self {
            WaitForm::Linear => Method::WaitLinear,
            WaitForm::Quadratic => Method::WaitQuadratic,
            WaitForm::Rcs(_) => Method::WaitRcs,
        }
    }
}

/// Splits a prospective cohort into a control record per subject (follow-up
/// from diagnosis until event, censoring or treatment start) and, for each
/// treated subject, a treated record timed from treatment start with entry
/// time `w`. Both records keep the subject id.
pub fn reset_time_axis(prospective: &CohortData) -> Result<CohortData> {
    let mut controls = Vec::with_capacity(prospective.len());
    let mut treated = Vec::new();
    for r in &prospective.records {
        if r.cohort != Cohort::Prospective {
            return Err(Error::InvalidInput(format!(
                "record {} is {}, expected prospective",
                r.id, r.cohort
            )));
        }
        match r.treatment_start {
            None => controls.push(SubjectRecord {
                cohort: Cohort::Control,
                ..r.clone()
            }),
            Some(w) => {
                if !(w >= 0.0 && w < r.event_time) {
                    return Err(Error::InvalidInput(format!(
                        "subject {}: treatment start {w} is not before event time {}",
                        r.id, r.event_time
                    )));
                }
                if w > 0.0 {
                    controls.push(SubjectRecord {
                        cohort: Cohort::Control,
                        entry_time: 0.0,
                        event_time: w,
                        event: false,
                        wait_time: None,
                        treatment_start: None,
                        ..r.clone()
                    });
                }
                treated.push(SubjectRecord {
                    cohort: Cohort::Treated,
                    entry_time: w,
                    event_time: r.event_time - w,
                    event: r.event,
                    wait_time: Some(w),
                    treatment_start: Some(w),
                    ..r.clone()
                });
            }
        }
    }
    controls.extend(treated);
    Ok(CohortData::new(prospective.covariate_names.clone(), controls))
}

/// Treated follow-up from treatment start against control follow-up from
/// diagnosis, with a time-fixed treatment indicator.
pub fn estimate_unadjusted(data: &CohortData, settings: &EstimationSettings) -> Result<EstimatorResult> {
    let cohorts = TwoCohorts::require_both(data)?;
    let mut design = DesignBuilder::new(data, &[], settings)?;
    for r in &cohorts.controls {
        design.push(r, 0.0, r.event_time, r.event, 0, false, &[])?;
    }
    for r in &cohorts.treated {
        design.push(r, 0.0, r.event_time, r.event, 0, true, &[])?;
    }
    fit_treatment(Method::Unadjusted, &design.finish(), settings)
}

/// Reset-axis model with wait-time terms for the treated.
pub fn estimate_wait_covariate(
    data: &CohortData,
    form: WaitForm,
    settings: &EstimationSettings,
) -> Result<EstimatorResult> {
    let cohorts = TwoCohorts::require_both(data)?;
    let waits: Vec<f64> = cohorts
        .treated
        .iter()
        .map(|r| wait_of(r))
        .collect::<Result<_>>()?;

    let names: Vec<String>;
    let spline: Option<SplineSpec>;
    match form {
        WaitForm::Linear => {
            names = vec!["wait".into()];
            spline = None;
        }
        WaitForm::Quadratic => {
            names = vec!["wait".into(), "wait_sq".into()];
            spline = None;
        }
        WaitForm::Rcs(k) => {
            let spec = default_knots(&waits, k)?;
            names = (1..=spec.basis_dimension()).map(|j| format!("wait_rcs{j}")).collect();
            spline = Some(spec);
        }
    }
    let terms = |w: f64| -> Vec<f64> {
        match (&form, &spline) {
            (WaitForm::Linear, _) => vec![w],
            (WaitForm::Quadratic, _) => vec![w, w * w],
            (WaitForm::Rcs(_), Some(spec)) => spec.evaluate(w),
            (WaitForm::Rcs(_), None) => unreachable!("spline built above"),
        }
    };
    let control_terms = match settings.wait_coding {
        WaitCoding::TreatedOnly => vec![0.0; names.len()],
        WaitCoding::Shared => terms(0.0),
    };

    let mut design = DesignBuilder::new(data, &names, settings)?;
    for r in &cohorts.controls {
        design.push(r, 0.0, r.event_time, r.event, 0, false, &control_terms)?;
    }
    for (r, &w) in cohorts.treated.iter().zip(&waits) {
        design.push(r, 0.0, r.event_time, r.event, 0, true, &terms(w))?;
    }
    let mut result = fit_treatment(form.method(), &design.finish(), settings)?;
    if let Some(spec) = spline {
        result.notes.push(format!("knots {:?}", spec.knots()));
    }
    Ok(result)
}

/// Treated subjects who started within `early_treated_max_wait` of
/// diagnosis against all controls from diagnosis.
pub fn estimate_early_treated(data: &CohortData, settings: &EstimationSettings) -> Result<EstimatorResult> {
    let cohorts = TwoCohorts::require_both(data)?;
    let limit = settings.early_treated_max_wait;
    let mut early = Vec::new();
    for r in &cohorts.treated {
        let w = wait_of(r)?;
        let keep = if settings.early_treated_inclusive {
            w <= limit
        } else {
            w < limit
        };
        if keep {
            early.push(*r);
        }
    }
    if early.is_empty() {
        return Err(Error::NonPositivity(format!(
            "no treated subject started within wait time {limit}"
        )));
    }
    let mut design = DesignBuilder::new(data, &[], settings)?;
    for r in &cohorts.controls {
        design.push(r, 0.0, r.event_time, r.event, 0, false, &[])?;
    }
    for r in &early {
        design.push(r, 0.0, r.event_time, r.event, 0, true, &[])?;
    }
    let mut result = fit_treatment(Method::EarlyTreated, &design.finish(), settings)?;
    result.notes.push(format!(
        "{} of {} treated with wait {} {limit}",
        early.len(),
        cohorts.treated.len(),
        if settings.early_treated_inclusive { "<=" } else { "<" }
    ));
    Ok(result)
}

/// Lower median of the treated wait times.
pub fn median_wait(data: &CohortData) -> Result<f64> {
    let cohorts = TwoCohorts::split(data)?;
    let mut waits: Vec<f64> = cohorts
        .treated
        .iter()
        .map(|r| wait_of(r))
        .collect::<Result<_>>()?;
    if waits.is_empty() {
        return Err(Error::InvalidInput("no treated records".into()));
    }
    waits.sort_unstable_by(f64::total_cmp);
    Ok(waits[(waits.len() - 1) / 2])
}

/// Controls still event-free after the median wait `m`, timed from `m`,
/// against treated subjects timed from treatment start.
pub fn estimate_median_control(data: &CohortData, settings: &EstimationSettings) -> Result<EstimatorResult> {
    let cohorts = TwoCohorts::require_both(data)?;
    let m = median_wait(data)?;
    let survivors: Vec<&SubjectRecord> = cohorts
        .controls
        .iter()
        .copied()
        .filter(|r| r.event_time > m)
        .collect();
    if survivors.is_empty() {
        return Err(Error::NonPositivity(format!(
            "no control is event-free beyond the median wait {m}"
        )));
    }
    let mut design = DesignBuilder::new(data, &[], settings)?;
    for r in &survivors {
        design.push(r, 0.0, r.event_time - m, r.event, 0, false, &[])?;
    }
    for r in &cohorts.treated {
        design.push(r, 0.0, r.event_time, r.event, 0, true, &[])?;
    }
    let mut result = fit_treatment(Method::MedianControl, &design.finish(), settings)?;
    result.notes.push(format!(
        "median wait {m}, {} of {} controls event-free beyond it",
        survivors.len(),
        cohorts.controls.len()
    ));
    Ok(result)
}

/// Diagnosis-axis model in which treated subjects enter the risk set at
/// their entry time.
pub fn estimate_left_truncation(data: &CohortData, settings: &EstimationSettings) -> Result<EstimatorResult> {
    let cohorts = TwoCohorts::require_both(data)?;
    let mut design = DesignBuilder::new(data, &[], settings)?;
    for r in &cohorts.controls {
        design.push(r, 0.0, r.event_time, r.event, 0, false, &[])?;
    }
    for r in &cohorts.treated {
        let entry = r.entry_time;
        design.push(r, entry, entry + r.event_time, r.event, 0, true, &[])?;
    }
    fit_treatment(Method::LeftTruncation, &design.finish(), settings)
}

/// Treatment as a time-varying covariate in a prospective cohort: untreated
/// interval `(0, w]` and treated interval `(w, T]`.
pub fn estimate_time_varying(prospective: &CohortData, settings: &EstimationSettings) -> Result<EstimatorResult> {
    prospective.validate()?;
    let mut design = DesignBuilder::new(prospective, &[], settings)?;
    let mut any_treated = false;
    for r in &prospective.records {
        if r.cohort != Cohort::Prospective {
            return Err(Error::InvalidInput(format!(
                "record {} is {}, expected prospective",
                r.id, r.cohort
            )));
        }
        match r.treatment_start {
            Some(w) => {
                any_treated = true;
                if w > 0.0 {
                    design.push(r, 0.0, w, false, 0, false, &[])?;
                }
                design.push(r, w, r.event_time, r.event, 0, true, &[])?;
            }
            None => design.push(r, 0.0, r.event_time, r.event, 0, false, &[])?,
        }
    }
    if !any_treated {
        return Err(Error::InvalidInput("no subject starts treatment".into()));
    }
    fit_treatment(Method::TimeVarying, &design.finish(), settings)
}
