use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use survbias::datagen::SimulationConfig;
use survbias::estimators::{EstimationSettings, LandmarkSpec, WaitCoding};
use survbias::survcore::Ties;
use survbias::{Error, Result};

/// Configuration file. Every section is optional; unknown keys are errors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides `simulation.seed` when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub simulation: SimulationConfig,
    pub estimation: EstimationSection,
    pub calibration: CalibrationSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationSection {
    /// Base settings: `simulation` or `application`.
    pub preset: String,
    /// Landmark preset name; `landmark_times` and `landmark_window` override it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub landmarks: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub landmark_times: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub landmark_window: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rcs_knots: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub early_treated_max_wait: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub early_treated_inclusive: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub robust: Option<bool>,
    /// `efron` or `breslow`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ties: Option<String>,
    /// `treated_only` or `shared`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wait_coding: Option<String>,
    pub confounders: Vec<String>,
}

impl Default for EstimationSection {
    fn default() -> Self {
        Self {
            preset: "simulation".into(),
            landmarks: None,
            landmark_times: None,
            landmark_window: None,
            rcs_knots: None,
            early_treated_max_wait: None,
            early_treated_inclusive: None,
            level: None,
            robust: None,
            ties: None,
            wait_coding: None,
            confounders: Vec::new(),
        }
    }
}

impl EstimationSection {
    pub fn settings(&self) -> Result<EstimationSettings> {
        let mut s = match self.preset.as_str() {
            "simulation" => EstimationSettings::simulation(),
            "application" => EstimationSettings::application(),
            other => {
                return Err(Error::Config(format!(
                    "unknown estimation preset `{other}` (expected simulation or application)"
                )))
            }
        };
        if let Some(name) = &self.landmarks {
            s.landmarks = LandmarkSpec::preset(name)?;
        }
        if self.landmark_times.is_some() || self.landmark_window.is_some() {
            s.landmarks = LandmarkSpec::new(
                self.landmark_times.clone().unwrap_or_else(|| s.landmarks.times().to_vec()),
                self.landmark_window.unwrap_or(s.landmarks.window()),
            )?;
        }
        if let Some(k) = self.rcs_knots {
            s.rcs_knots = k;
        }
        if let Some(w) = self.early_treated_max_wait {
            s.early_treated_max_wait = w;
        }
        if let Some(b) = self.early_treated_inclusive {
            s.early_treated_inclusive = b;
        }
        if let Some(l) = self.level {
            s.level = l;
        }
        if let Some(r) = self.robust {
            s.robust = r;
        }
        if let Some(t) = &self.ties {
            s.ties = match t.as_str() {
                "efron" => Ties::Efron,
                "breslow" => Ties::Breslow,
                other => return Err(Error::Config(format!("unknown ties method `{other}`"))),
            };
        }
        if let Some(w) = &self.wait_coding {
            s.wait_coding = match w.as_str() {
                "treated_only" => WaitCoding::TreatedOnly,
                "shared" => WaitCoding::Shared,
                other => return Err(Error::Config(format!("unknown wait coding `{other}`"))),
            };
        }
        s.confounders = self.confounders.clone();
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    /// True marginal ATE hazard ratio to hit.
    pub target: f64,
    pub tolerance: f64,
}

impl Default for CalibrationSection {
    fn default() -> Self {
        Self {
            target: 1.5,
            tolerance: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from(".") }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        let config: Self =
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let table: toml::Table = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
        let nested = table
            .get("simulation")
            .and_then(|s| s.get("seed"))
            .and_then(|s| s.as_integer());
        if let (Some(top), Some(nested)) = (config.seed, nested) {
            if nested < 0 || top != nested as u64 {
                return Err(Error::Config(format!(
                    "{}: seed = {top} conflicts with simulation.seed = {nested}",
                    path.display()
                )));
            }
        }
        Ok(config)
    }

    /// Simulation settings with the top-level seed applied.
    pub fn simulation(&self) -> Result<SimulationConfig> {
        let mut sim = self.simulation.clone();
        if let Some(seed) = self.seed {
            sim.seed = seed;
        }
        sim.validate()?;
        Ok(sim)
    }

    /// The configuration that determines results, as TOML. Output
    /// locations are left out so relocated runs hash identically.
    pub fn echo(&self) -> Result<String> {
        #[derive(Serialize)]
        struct Echo<'a> {
            simulation: &'a SimulationConfig,
            estimation: &'a EstimationSection,
            calibration: &'a CalibrationSection,
        }
        let simulation = self.simulation()?;
        toml::to_string(&Echo {
            simulation: &simulation,
            estimation: &self.estimation,
            calibration: &self.calibration,
        })
        .map_err(|e| Error::Config(e.to_string()))
    }
}
