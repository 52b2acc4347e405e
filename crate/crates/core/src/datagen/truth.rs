use serde::Serialize;

use super::config::SimulationConfig;
use super::simulate::{censor, LatentCohorts};
use crate::error::{Error, Result};
use crate::estimators::{Estimand, EstimatorResult, Method};
use crate::survcore::{cox_fit, CountingProcessData, CoxOptions};

/// Lower and upper ends of the calibration bracket.
pub const CALIBRATION_BRACKET: (f64, f64) = (1.0, 10.0);

impl LatentCohorts {
    /// Factual and clone paths for `estimand`, with treatment as the only
    /// covariate. Person `id` contributes subjects `2 id` (untreated arm)
    /// and `2 id + 1` (treated arm), clustered on `id`.
    pub(crate) fn counterfactual(
        &self,
        config: &SimulationConfig,
        theta: f64,
        estimand: Estimand,
    ) -> Result<CountingProcessData> {
        let h = config.censoring_horizon;
        let n = config.n_per_cohort as u64;
        let (with_atc, with_att) = match estimand {
            Estimand::Atc => (true, false),
            Estimand::Att => (false, true),
            Estimand::Ate => (true, true),
        };
        let rows = 2 * (usize::from(with_atc) * self.controls.len()
            + usize::from(with_att) * self.treated.len());
        let mut data = CountingProcessData::with_capacity(vec!["treatment".into()], rows);
        if with_atc {
            for (i, s) in self.controls.iter().enumerate() {
                let id = i as u64 + 1;
                let (t0, d0) = censor(s.untreated_time, h);
                let (t1, d1) = censor(s.treated_time(theta), h);
                data.push(2 * id, id, 0.0, t0, d0, 0, &[0.0])?;
                data.push(2 * id + 1, id, 0.0, t1, d1, 0, &[1.0])?;
            }
        }
        if with_att {
            for (k, s) in self.treated.iter().enumerate() {
                let id = n + k as u64 + 1;
                let (t0, d0) = censor(s.untreated_time, h);
                let (t1, d1) = censor(s.wait + s.treated_time(theta), h);
                data.push(2 * id, id, s.wait, t0, d0, 0, &[0.0])?;
                data.push(2 * id + 1, id, s.wait, t1, d1, 0, &[1.0])?;
            }
        }
        Ok(data)
    }

    pub(crate) fn true_hr(
        &self,
        config: &SimulationConfig,
        theta: f64,
        estimand: Estimand,
        options: &CoxOptions,
    ) -> Result<EstimatorResult> {
        let data = self.counterfactual(config, theta, estimand)?;
        let fit = cox_fit(&data, options)?;
        EstimatorResult::from_fit(
            Method::Truth,
            estimand,
            &fit,
            0,
            0.95,
            options.cluster_variance,
        )
    }
}

/// Counterfactual clone dataset for `estimand` on the diagnosis axis.
pub fn build_counterfactual(
    config: &SimulationConfig,
    estimand: Estimand,
) -> Result<CountingProcessData> {
    LatentCohorts::draw(config)?.counterfactual(config, config.conditional_hr(), estimand)
}

/// True marginal hazard ratio: Cox fit on the counterfactual dataset with
/// entry times as left truncation and standard errors clustered on person.
pub fn true_marginal_hr(config: &SimulationConfig, estimand: Estimand) -> Result<EstimatorResult> {
    LatentCohorts::draw(config)?.true_hr(config, config.conditional_hr(), estimand, &CoxOptions::robust())
}

/// True marginal hazard ratios for ATC, ATT and ATE from one set of draws.
pub fn true_marginal_hrs(config: &SimulationConfig) -> Result<Vec<EstimatorResult>> {
    let latent = LatentCohorts::draw(config)?;
    Estimand::ALL
        .iter()
        .map(|&e| latent.true_hr(config, config.conditional_hr(), e, &CoxOptions::robust()))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationStep {
    pub conditional_hr: f64,
    pub marginal_hr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub target: f64,
    pub tolerance: f64,
    pub conditional_hr: f64,
    pub marginal_hr: f64,
    pub trace: Vec<CalibrationStep>,
}

/// Bisection on the conditional hazard ratio over [`CALIBRATION_BRACKET`]
/// until the true marginal ATE hazard ratio matches `target` within
/// `tolerance`. All evaluations reuse the same draws.
pub fn calibrate_conditional_hr(
    config: &SimulationConfig,
    target: f64,
    tolerance: f64,
) -> Result<Calibration> {
    if !(target > 0.0 && target.is_finite()) {
        return Err(Error::Config(format!("calibration target {target} must be positive")));
    }
    if !(tolerance > 0.0 && tolerance.is_finite()) {
        return Err(Error::Config(format!("calibration tolerance {tolerance} must be positive")));
    }
    let latent = LatentCohorts::draw(config)?;
    let options = CoxOptions::default();
    let mut trace = Vec::new();
    let mut eval = |theta: f64| -> Result<f64> {
        let hr = latent.true_hr(config, theta, Estimand::Ate, &options)?.hr;
        log::debug!("calibration: conditional {theta:.6} -> marginal {hr:.6}");
        trace.push(CalibrationStep {
            conditional_hr: theta,
            marginal_hr: hr,
        });
        Ok(hr)
    };
    let done = |theta: f64, hr: f64, trace: Vec<CalibrationStep>| Calibration {
        target,
        tolerance,
        conditional_hr: theta,
        marginal_hr: hr,
        trace,
    };

    let (mut lo, mut hi) = CALIBRATION_BRACKET;
    let f_lo = eval(lo)?;
    if (f_lo - target).abs() <= tolerance {
        return Ok(done(lo, f_lo, trace));
    }
    let f_hi = eval(hi)?;
    if (f_hi - target).abs() <= tolerance {
        return Ok(done(hi, f_hi, trace));
    }
    if target < f_lo || target > f_hi {
        return Err(Error::Calibration(format!(
            "target {target} outside the bracket: marginal {f_lo:.4} at {lo}, {f_hi:.4} at {hi}"
        )));
    }
    let (mut g_lo, mut g_hi) = (f_lo, f_hi);
    // Stop once the residual is well inside the tolerance or the bracket
    // can no longer shrink meaningfully.
    let goal = tolerance / 10.0;
    let mut best = (f64::NAN, f64::INFINITY);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let f_mid = eval(mid)?;
        if f_mid < g_lo - tolerance || f_mid > g_hi + tolerance {
            return Err(Error::Calibration(format!(
                "non-monotone marginal hazard ratio: {f_mid:.4} at {mid} outside [{g_lo:.4}, {g_hi:.4}]"
            )));
        }
        if (f_mid - target).abs() < (best.1 - target).abs() {
            best = (mid, f_mid);
        }
        if (f_mid - target).abs() <= goal || hi - lo < 1e-9 {
            break;
        }
        if f_mid < target {
            lo = mid;
            g_lo = f_mid;
        } else {
            hi = mid;
            g_hi = f_mid;
        }
    }
    let (theta, hr) = best;
    if (hr - target).abs() > tolerance {
        return Err(Error::Calibration(format!(
            "closest marginal hazard ratio {hr:.4} (conditional {theta:.4}) misses target {target} by more than {tolerance}"
        )));
    }
    Ok(done(theta, hr, trace))
}
