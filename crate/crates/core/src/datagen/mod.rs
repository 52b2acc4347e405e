//! Two-cohort survival data under unobserved heterogeneity, counterfactual
//! clone cohorts and calibration of the conditional treatment effect.

mod config;
mod simulate;
mod truth;

pub use config::{
    draw_frailty, Frailty, FrailtySample, Scenario, SimulationConfig, CALIBRATED_BETA_HR,
    CALIBRATED_GFACTOR_HR,
};
pub use simulate::{
    simulate_cohorts, simulate_prospective, SelectionStats, SimulatedCohorts, GENERATOR,
    SELECTION_FLOOR,
};
pub use truth::{
    build_counterfactual, calibrate_conditional_hr, true_marginal_hr, true_marginal_hrs,
    Calibration, CalibrationStep, CALIBRATION_BRACKET,
};
