use crate::cohort::CohortData;
use crate::error::{Error, Result};
use crate::survcore::CountingProcessData;

use super::design::{fit_treatment, wait_of, DesignBuilder, TwoCohorts};
use super::result::{EstimatorResult, Method};
use super::settings::{EstimationSettings, LandmarkSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkSummary {
    pub index: u32,
    pub time: f64,
    pub treated: usize,
    pub controls: usize,
    /// Landmarks without treated subjects or without controls are dropped.
    pub dropped: bool,
}

#[derive(Debug, Clone)]
pub struct LandmarkData {
    /// Pooled rows, stratum = landmark index.
    pub data: CountingProcessData,
    pub landmarks: Vec<LandmarkSummary>,
    /// Treated subjects whose wait time falls in no window.
    pub unmatched_treated: usize,
    pub warnings: Vec<String>,
}

/// Pooled landmark dataset. At landmark `L` the treated arm holds subjects
/// with `w` in `[L, L + window)`, timed from treatment start; the control
/// arm holds controls event-free at `L`, timed from `L`.
pub fn build_landmarks(
    data: &CohortData,
    spec: &LandmarkSpec,
    settings: &EstimationSettings,
) -> Result<LandmarkData> {
    let cohorts = TwoCohorts::split(data)?;
    let waits: Vec<f64> = cohorts
        .treated
        .iter()
        .map(|r| wait_of(r))
        .collect::<Result<_>>()?;

    let mut design = DesignBuilder::new(data, &[], settings)?;
    let mut landmarks = Vec::new();
    let mut warnings = Vec::new();
    let mut matched = vec![false; waits.len()];
    for (k, &time) in spec.times().iter().enumerate() {
        let index = k as u32;
        let end = time + spec.window();
        let treated: Vec<usize> = (0..waits.len())
            .filter(|&i| waits[i] >= time && waits[i] < end)
            .collect();
        let controls: Vec<usize> = (0..cohorts.controls.len())
            .filter(|&i| cohorts.controls[i].event_time > time)
            .collect();
        let dropped = treated.is_empty() || controls.is_empty();
        if dropped {
            warnings.push(format!(
                "landmark {time} dropped: {} treated, {} controls",
                treated.len(),
                controls.len()
            ));
        } else {
            for &i in &treated {
                let r = cohorts.treated[i];
                matched[i] = true;
                design.push(r, 0.0, r.event_time, r.event, index, true, &[])?;
            }
            for &i in &controls {
                let r = cohorts.controls[i];
                design.push(r, 0.0, r.event_time - time, r.event, index, false, &[])?;
            }
        }
        landmarks.push(LandmarkSummary {
            index,
            time,
            treated: treated.len(),
            controls: controls.len(),
            dropped,
        });
    }
    let unmatched_treated = matched.iter().filter(|&&m| !m).count();
    if unmatched_treated > 0 {
        warnings.push(format!(
            "{unmatched_treated} treated subjects outside every landmark window"
        ));
    }
    Ok(LandmarkData {
        data: design.finish(),
        landmarks,
        unmatched_treated,
        warnings,
    })
}

/// Stratified Cox model on the pooled landmark dataset.
pub fn estimate_matching(data: &CohortData, settings: &EstimationSettings) -> Result<EstimatorResult> {
    TwoCohorts::require_both(data)?;
    let pooled = build_landmarks(data, &settings.landmarks, settings)?;
    if pooled.landmarks.iter().all(|l| l.dropped) {
        return Err(Error::NonPositivity(
            "no landmark has both treated subjects and controls".into(),
        ));
    }
    let mut result = fit_treatment(Method::Matching, &pooled.data, settings)?;
    let used = pooled.landmarks.iter().filter(|l| !l.dropped).count();
    result.notes.push(format!(
        "{used} of {} landmarks, {} rows",
        pooled.landmarks.len(),
        pooled.data.len()
    ));
    result.notes.extend(pooled.warnings);
    Ok(result)
}
