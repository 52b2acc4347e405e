use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;

use super::config::{FrailtySampler, SimulationConfig};
use crate::cohort::{Cohort, CohortData, LatentState, SubjectRecord};
use crate::error::{Error, Result};

/// Name of the generator recorded in run metadata.
pub const GENERATOR: &str = "ChaCha8 (rand_chacha), one stream per cohort, one 2^20-word block per subject";

/// Treated-cohort selection below this fraction aborts.
pub const SELECTION_FLOOR: f64 = 1e-3;

const CONTROL_STREAM: u64 = 1;
const TREATED_STREAM: u64 = 2;
const PROSPECTIVE_STREAM: u64 = 3;

/// Candidates screened before the selection floor is enforced.
const FLOOR_MIN_CANDIDATES: u64 = 10_000;

/// Latent draws of one subject. Times for any conditional hazard ratio
/// `theta` follow from `treated_unit / theta`, so one draw serves every
/// treatment effect (common random numbers).
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct LatentSubject {
    pub rate: f64,
    pub g_carrier: Option<bool>,
    pub resamples: u32,
    pub wait: f64,
    pub untreated_time: f64,
    pub treated_unit: f64,
}

impl LatentSubject {
    pub fn treated_time(&self, theta: f64) -> f64 {
        self.treated_unit / theta
    }

    fn latent_state(&self) -> LatentState {
        LatentState {
            frailty_rate: self.rate,
            g_carrier: self.g_carrier,
            untreated_time: self.untreated_time,
        }
    }
}

/// Subject `index` of a cohort stream gets its own fixed slice of the key
/// stream, so output does not depend on how subjects are split over workers.
fn subject_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(index) << 20);
    rng
}

fn draw_subject(
    sampler: &FrailtySampler,
    wait_rate: f64,
    seed: u64,
    stream: u64,
    index: u64,
) -> LatentSubject {
    let mut rng = subject_rng(seed, stream, index);
    let frailty = sampler.sample(&mut rng);
    let mut unit = || -> f64 { rng.sample(Exp1) };
    let wait = unit() / wait_rate;
    let untreated_time = unit() / frailty.rate;
    let treated_unit = unit() / frailty.rate;
    LatentSubject {
        rate: frailty.rate,
        g_carrier: frailty.g_carrier,
        resamples: frailty.resamples,
        wait,
        untreated_time,
        treated_unit,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionStats {
    /// Candidates drawn up to and including the last one retained.
    pub candidates: u64,
    pub accepted: u64,
}

impl SelectionStats {
    pub fn fraction(&self) -> f64 {
        if self.candidates == 0 {
            return 0.0;
        }
        self.accepted as f64 / self.candidates as f64
    }
}

/// Latent control and selected treated subjects.
#[derive(Debug, Clone)]
pub(crate) struct LatentCohorts {
    pub controls: Vec<LatentSubject>,
    pub treated: Vec<LatentSubject>,
    pub selection: SelectionStats,
}

impl LatentCohorts {
    pub fn draw(config: &SimulationConfig) -> Result<Self> {
        let sampler = config.frailty_sampler()?;
        let n = config.n_per_cohort as u64;
        let controls = (0..n)
            .into_par_iter()
            .map(|i| draw_subject(&sampler, config.wait_rate, config.seed, CONTROL_STREAM, i))
            .collect();

        let horizon = config.censoring_horizon.unwrap_or(f64::INFINITY);
        let mut treated = Vec::with_capacity(config.n_per_cohort);
        let mut next = 0u64;
        let mut last_kept = 0u64;
        while treated.len() < config.n_per_cohort {
            let remaining = config.n_per_cohort - treated.len();
            let fraction = if next == 0 {
                0.5
            } else {
                (treated.len() as f64 / next as f64).max(SELECTION_FLOOR)
            };
            let batch = ((remaining as f64 / fraction * 1.05) as u64 + 1024).max(FLOOR_MIN_CANDIDATES);
            let kept: Vec<(u64, LatentSubject)> = (next..next + batch)
                .into_par_iter()
                .map(|i| {
                    (
                        i,
                        draw_subject(&sampler, config.wait_rate, config.seed, TREATED_STREAM, i),
                    )
                })
                .filter(|(_, s)| s.untreated_time > s.wait && s.wait < horizon)
                .collect();
            for (i, s) in kept.into_iter().take(remaining) {
                treated.push(s);
                last_kept = i;
            }
            next += batch;
            let fraction = treated.len() as f64 / next as f64;
            if treated.len() < config.n_per_cohort && fraction < SELECTION_FLOOR {
                return Err(Error::SelectionFloor {
                    fraction,
                    floor: SELECTION_FLOOR,
                    candidates: next,
                });
            }
        }
        let selection = SelectionStats {
            candidates: last_kept + 1,
            accepted: treated.len() as u64,
        };
        if selection.fraction() < SELECTION_FLOOR {
            return Err(Error::SelectionFloor {
                fraction: selection.fraction(),
                floor: SELECTION_FLOOR,
                candidates: selection.candidates,
            });
        }
        Ok(Self {
            controls,
            treated,
            selection,
        })
    }

    pub fn frailty_resamples(&self) -> u64 {
        self.controls
            .iter()
            .chain(&self.treated)
            .map(|s| u64::from(s.resamples))
            .sum()
    }
}

/// Censors `time` (on the diagnosis axis) at `horizon`.
pub(crate) fn censor(time: f64, horizon: Option<f64>) -> (f64, bool) {
    match horizon {
        Some(h) if time > h => (h, false),
        _ => (time, true),
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedCohorts {
    /// Controls (ids `1..=n`) followed by treated subjects (ids `n+1..=2n`).
    pub data: CohortData,
    pub selection: SelectionStats,
    pub frailty_resamples: u64,
}

/// Simulates a control cohort followed from diagnosis and a treated cohort
/// of subjects still event-free at treatment start.
pub fn simulate_cohorts(config: &SimulationConfig) -> Result<SimulatedCohorts> {
    let latent = LatentCohorts::draw(config)?;
    let theta = config.conditional_hr();
    let n = config.n_per_cohort as u64;
    let h = config.censoring_horizon;
    let mut records = Vec::with_capacity(2 * config.n_per_cohort);
    for (i, s) in latent.controls.iter().enumerate() {
        let (time, event) = censor(s.untreated_time, h);
        records.push(SubjectRecord {
            id: i as u64 + 1,
            cohort: Cohort::Control,
            entry_time: 0.0,
            event_time: time,
            event,
            wait_time: None,
            treatment_start: None,
            covariates: Vec::new(),
            latent: Some(s.latent_state()),
        });
    }
    for (k, s) in latent.treated.iter().enumerate() {
        let (exit, event) = censor(s.wait + s.treated_time(theta), h);
        records.push(SubjectRecord {
            id: n + k as u64 + 1,
            cohort: Cohort::Treated,
            entry_time: s.wait,
            event_time: if event { s.treated_time(theta) } else { exit - s.wait },
            event,
            wait_time: Some(s.wait),
            treatment_start: Some(s.wait),
            covariates: Vec::new(),
            latent: Some(s.latent_state()),
        });
    }
    Ok(SimulatedCohorts {
        data: CohortData::new(Vec::new(), records),
        selection: latent.selection,
        frailty_resamples: latent.frailty_resamples(),
    })
}

/// Simulates one cohort followed from diagnosis in which subjects still
/// event-free at their wait time switch to treatment.
pub fn simulate_prospective(config: &SimulationConfig) -> Result<CohortData> {
    let sampler = config.frailty_sampler()?;
    let theta = config.conditional_hr();
    let h = config.censoring_horizon;
    let records = (0..config.n_per_cohort as u64)
        .into_par_iter()
        .map(|i| {
            let s = draw_subject(&sampler, config.wait_rate, config.seed, PROSPECTIVE_STREAM, i);
            let treated = s.untreated_time > s.wait && h.is_none_or(|h| s.wait < h);
            let (time, event) = if treated {
                censor(s.wait + s.treated_time(theta), h)
            } else {
                censor(s.untreated_time, h)
            };
            SubjectRecord {
                id: i + 1,
                cohort: Cohort::Prospective,
                entry_time: 0.0,
                event_time: time,
                event,
                wait_time: treated.then_some(s.wait),
                treatment_start: treated.then_some(s.wait),
                covariates: Vec::new(),
                latent: Some(s.latent_state()),
            }
        })
        .collect();
    Ok(CohortData::new(Vec::new(), records))
}
