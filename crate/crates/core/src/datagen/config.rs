use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mechanism generating between-subject variation in the untreated hazard.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    /// Per-time-unit event probability `p ~ Beta(a, b)`, rate `-ln(1 - p)`.
    Beta,
    /// Binary latent factor G scaling a base rate.
    Gfactor,
}

impl Scenario {
    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Beta => "beta",
            Scenario::Gfactor => "gfactor",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "beta" => Ok(Scenario::Beta),
            "gfactor" => Ok(Scenario::Gfactor),
            other => Err(format!("unknown scenario `{other}` (expected beta or gfactor)")),
        }
    }
}

/// Conditional hazard ratios that give a true marginal ATE hazard ratio of
/// 1.50 under the default heterogeneity parameters (seed 1, 200,000 per cohort).
pub const CALIBRATED_BETA_HR: f64 = 1.938232421875;
pub const CALIBRATED_GFACTOR_HR: f64 = 1.86572265625;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub scenario: Scenario,
    pub n_per_cohort: usize,
    /// Hazard of treatment initiation.
    pub wait_rate: f64,
    pub beta_a: f64,
    pub beta_b: f64,
    pub base_rate: f64,
    /// Proportion carrying G.
    pub p_g: f64,
    /// Hazard multiplier for carriers.
    pub g_multiplier: f64,
    /// Treatment hazard ratio conditional on frailty. Defaults to the
    /// calibrated value for the scenario.
    pub conditional_hr: Option<f64>,
    /// Administrative censoring time on the diagnosis axis.
    pub censoring_horizon: Option<f64>,
    pub seed: u64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            scenario: Scenario::Beta,
            n_per_cohort: 200_000,
            wait_rate: 0.1,
            beta_a: 1.5,
            beta_b: 8.5,
            base_rate: 0.15,
            p_g: 0.3,
            g_multiplier: 0.1,
            conditional_hr: None,
            censoring_horizon: None,
            seed: 1,
        }
    }
}

impl SimulationConfig {
    pub fn scenario(scenario: Scenario) -> Self {
        Self {
            scenario,
            ..Self::default()
        }
    }

    pub fn with_n(mut self, n: usize) -> Self {
        self.n_per_cohort = n;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_conditional_hr(mut self, hr: f64) -> Self {
        self.conditional_hr = Some(hr);
        self
    }

    /// Homogeneous population: every subject has hazard `rate`.
    pub fn homogeneous(rate: f64) -> Self {
        Self {
            scenario: Scenario::Gfactor,
            base_rate: rate,
            g_multiplier: 1.0,
            ..Self::default()
        }
    }

    pub fn conditional_hr(&self) -> f64 {
        self.conditional_hr.unwrap_or(match self.scenario {
            Scenario::Beta => CALIBRATED_BETA_HR,
            Scenario::Gfactor => CALIBRATED_GFACTOR_HR,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must be positive and finite, got {v}")))
            }
        };
        if self.n_per_cohort == 0 {
            return Err(Error::Config("n_per_cohort must be at least 1".into()));
        }
        positive("wait_rate", self.wait_rate)?;
        positive("conditional_hr", self.conditional_hr())?;
        if let Some(h) = self.censoring_horizon {
            positive("censoring_horizon", h)?;
        }
        match self.scenario {
            Scenario::Beta => {
                positive("beta_a", self.beta_a)?;
                positive("beta_b", self.beta_b)?;
            }
            Scenario::Gfactor => {
                positive("base_rate", self.base_rate)?;
                positive("g_multiplier", self.g_multiplier)?;
                if !(self.p_g > 0.0 && self.p_g < 1.0) {
                    return Err(Error::Config(format!("p_g must lie in (0, 1), got {}", self.p_g)));
                }
            }
        }
        Ok(())
    }

    pub(crate) fn frailty_sampler(&self) -> Result<FrailtySampler> {
        self.validate()?;
        Ok(match self.scenario {
            Scenario::Beta => FrailtySampler::Beta(
                Beta::new(self.beta_a, self.beta_b)
                    .map_err(|e| Error::Config(format!("beta parameters: {e}")))?,
            ),
            Scenario::Gfactor => FrailtySampler::Gfactor {
                base_rate: self.base_rate,
                p_g: self.p_g,
                multiplier: self.g_multiplier,
            },
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Frailty {
    pub rate: f64,
    pub g_carrier: Option<bool>,
    /// Beta draws rejected because they mapped to a zero or infinite rate.
    pub resamples: u32,
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum FrailtySampler {
    Beta(Beta<f64>),
    Gfactor {
        base_rate: f64,
        p_g: f64,
        multiplier: f64,
    },
}

impl FrailtySampler {
    pub(crate) fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Frailty {
        match *self {
            FrailtySampler::Beta(beta) => {
                let mut resamples = 0;
                loop {
                    let p = beta.sample(rng);
                    if p > 0.0 && p < 1.0 {
                        return Frailty {
                            rate: -(-p).ln_1p(),
                            g_carrier: None,
                            resamples,
                        };
                    }
                    resamples += 1;
                }
            }
            FrailtySampler::Gfactor {
                base_rate,
                p_g,
                multiplier,
            } => {
                let carrier = rng.random_bool(p_g);
                Frailty {
                    rate: if carrier { base_rate * multiplier } else { base_rate },
                    g_carrier: Some(carrier),
                    resamples: 0,
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrailtySample {
    pub rates: Vec<f64>,
    pub g_carrier: Vec<Option<bool>>,
    pub resamples: u64,
}

/// Draws `n` individual untreated hazard rates from one stream.
pub fn draw_frailty<R: Rng + ?Sized>(
    config: &SimulationConfig,
    n: usize,
    rng: &mut R,
) -> Result<FrailtySample> {
    let sampler = config.frailty_sampler()?;
    let mut out = FrailtySample {
        rates: Vec::with_capacity(n),
        g_carrier: Vec::with_capacity(n),
        resamples: 0,
    };
    for _ in 0..n {
        let f = sampler.sample(rng);
        out.rates.push(f.rate);
        out.g_carrier.push(f.g_carrier);
        out.resamples += u64::from(f.resamples);
    }
    Ok(out)
}
