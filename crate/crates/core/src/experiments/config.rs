//! TOML experiment configuration. Every section is optional:
//!
//! ```toml
//! [whisker]
//! preset = "straight"        # or "curved", or explicit WhiskerSpec fields
//!
//! [signal]
//! gain = 6.83e5              # counts per N·m
//! std = 0.5
//!
//! [calibration]
//! degree = 5
//!
//! [filter]
//! sensor_noise_var = 0.25    # overrides the per-method defaults
//!
//! [trials]
//! kind = "pin"               # "pin", "contour" or "scripted"
//! count = 10
//! seed = 1000
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::generate::{CalibrationGrid, NoiseSpec, ObjectPreset, PinTrialDesign, SweepDesign};
use super::ExperimentError;
use crate::beam_oracle::{ObjectContour, SolverConfig, WhiskerSpec};
use crate::estimators::{FadingMode, FilterConfig, Method};
use crate::signal::Thresholds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WhiskerPreset {
    Straight,
    Curved,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WhiskerSection {
    Preset { preset: WhiskerPreset },
    Explicit(WhiskerSpec),
}

impl Default for WhiskerSection {
    fn default() -> Self {
        WhiskerSection::Preset {
            preset: WhiskerPreset::Straight,
        }
    }
}

impl WhiskerSection {
    pub fn spec(&self) -> WhiskerSpec {
        match self {
            WhiskerSection::Preset {
                preset: WhiskerPreset::Straight,
            } => WhiskerSpec::straight_nitinol(),
            WhiskerSection::Preset {
                preset: WhiskerPreset::Curved,
            } => WhiskerSpec::curved_nitinol(),
            WhiskerSection::Explicit(s) => *s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ObjectSpec {
    Preset(ObjectPreset),
    Contour(ObjectContour),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationSection {
    pub degree: Option<usize>,
    pub seed: Option<u64>,
    pub grid: Option<CalibrationGrid>,
    /// Calibration CSVs to fit instead of synthesizing, paired with `sides`.
    pub csv: Vec<PathBuf>,
    pub sides: Vec<crate::sensor_model::Side>,
    /// Pre-fitted model files; take precedence over `csv`.
    pub models: Vec<PathBuf>,
}

impl CalibrationSection {
    pub fn degree(&self) -> usize {
        self.degree.unwrap_or(5)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(7)
    }
}

/// Per-field overrides of [`FilterConfig::for_method`].
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterOverrides {
    pub process_noise_cov: Option<[[f64; 2]; 2]>,
    pub sensor_noise_var: Option<f64>,
    pub fading_alpha: Option<f64>,
    pub fading_mode: Option<FadingMode>,
    pub particle_count: Option<usize>,
    pub prior_cov: Option<[[f64; 2]; 2]>,
}

impl FilterOverrides {
    pub fn apply(&self, mut cfg: FilterConfig) -> FilterConfig {
        if let Some(v) = self.process_noise_cov {
            cfg.process_noise_cov = v;
        }
        if let Some(v) = self.sensor_noise_var {
            cfg.sensor_noise_var = v;
        }
        if let Some(v) = self.fading_alpha {
            cfg.fading_alpha = v;
        }
        if let Some(v) = self.fading_mode {
            cfg.fading_mode = v;
        }
        if let Some(v) = self.particle_count {
            cfg.particle_count = v;
        }
        if let Some(v) = self.prior_cov {
            cfg.prior_cov = v;
        }
        cfg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialKind {
    #[default]
    Pin,
    Contour,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialsSection {
    pub kind: TrialKind,
    /// Trials per object for contour runs.
    pub count: usize,
    /// Trial `i` uses seed `seed + i`.
    pub seed: u64,
    pub pin: Option<PinTrialDesign>,
    pub sweep: SweepDesign,
    /// Contour runs: objects to trace (default all four presets).
    pub objects: Vec<ObjectSpec>,
    /// Scripted runs: the obstacle, in world coordinates.
    pub object: Option<ObjectSpec>,
    /// Scripted runs: base trajectory in the waypoint mini-language.
    pub trajectory: Option<String>,
}

impl Default for TrialsSection {
    fn default() -> Self {
        Self {
            kind: TrialKind::Pin,
            count: 10,
            seed: 1000,
            pin: None,
            sweep: SweepDesign::default(),
            objects: Vec::new(),
            object: None,
            trajectory: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitRule {
    /// Ground truth at contact make shifted along the whisker by the init
    /// offset (arc length, lateral offset kept) when available, otherwise
    /// the fixed hint.
    #[default]
    TruthOffset,
    /// Signal-independent point on the whisker.
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub init: InitRule,
    /// Init offset (m): along the whisker for the truth-offset rule,
    /// lateral for the fixed hint.
    pub init_offset: f64,
    /// Use the band-pass ringing detector for contact breaks.
    pub ringing: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            init: InitRule::TruthOffset,
            init_offset: 0.005,
            ringing: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub whisker: WhiskerSection,
    pub solver: SolverConfig,
    pub signal: NoiseSpec,
    /// Detector thresholds; derived from the calibrated maximum when absent.
    pub detector: Option<Thresholds>,
    pub calibration: CalibrationSection,
    pub filter: FilterOverrides,
    pub trials: TrialsSection,
    pub run: RunSection,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ExperimentError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config; relative file paths inside it resolve against the
    /// config's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ExperimentError> {
        let path = path.as_ref();
        let mut cfg = Self::from_toml_str(&std::fs::read_to_string(path)?)?;
        if let Some(dir) = path.parent() {
            let fix = |p: &mut PathBuf| {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            };
            cfg.calibration.csv.iter_mut().for_each(fix);
            cfg.calibration.models.iter_mut().for_each(fix);
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        let spec = self.spec();
        spec.validate()
            .map_err(|e| ExperimentError::Config(format!("[whisker]: {e}")))?;
        if !(self.signal.gain.is_finite() && self.signal.gain != 0.0) {
            return bad("[signal] gain must be finite and non-zero".into());
        }
        if !(self.signal.std.is_finite() && self.signal.std >= 0.0) {
            return bad("[signal] std must be finite and non-negative".into());
        }
        if self.calibration.degree() > crate::sensor_model::MAX_DEGREE {
            return bad(format!("[calibration] degree above {}", crate::sensor_model::MAX_DEGREE));
        }
        if self.calibration.models.is_empty() && !self.calibration.csv.is_empty()
            && self.calibration.csv.len() != self.calibration.sides.len()
        {
            return bad("[calibration] csv and sides must have the same length".into());
        }
        if self.trials.count == 0 {
            return bad("[trials] count must be positive".into());
        }
        if !(self.run.init_offset.is_finite()) {
            return bad("[run] init_offset must be finite".into());
        }
        for m in Method::ALL {
            self.filter_config(m, 0)
                .validate()
                .map_err(|e| ExperimentError::Config(format!("[filter] for {m}: {e}")))?;
        }
        if self.trials.kind == TrialKind::Scripted {
            let Some(t) = &self.trials.trajectory else {
                return bad("[trials] scripted runs need `trajectory`".into());
            };
            super::trajectory::parse_trajectory(t)?;
            if self.trials.object.is_none() {
                return bad("[trials] scripted runs need `object`".into());
            }
        }
        for o in self.trials.objects.iter().chain(self.trials.object.iter()) {
            if let ObjectSpec::Contour(c) = o {
                c.validate()
                    .map_err(|e| ExperimentError::Config(format!("[trials] object: {e}")))?;
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> WhiskerSpec {
        self.whisker.spec()
    }

    pub fn filter_config(&self, method: Method, rng_seed: u64) -> FilterConfig {
        FilterConfig {
            rng_seed,
            ..self.filter.apply(FilterConfig::for_method(method))
        }
    }

    pub fn pin_design(&self) -> PinTrialDesign {
        self.trials.pin.unwrap_or_else(|| PinTrialDesign::for_spec(&self.spec()))
    }

    pub fn contour_objects(&self) -> Vec<(String, ObjectContour)> {
        let (top, x0) = (self.trials.sweep.depth, self.trials.sweep.standoff);
        let resolve = |o: &ObjectSpec| match o {
            ObjectSpec::Preset(p) => (p.as_str().to_string(), p.contour(top, x0)),
            ObjectSpec::Contour(c) => ("custom".to_string(), c.clone()),
        };
        if self.trials.objects.is_empty() {
            ObjectPreset::ALL
                .iter()
                .map(|p| (p.as_str().to_string(), p.contour(top, x0)))
                .collect()
        } else {
            self.trials.objects.iter().map(resolve).collect()
        }
    }

    pub fn scripted_object(&self) -> Option<ObjectContour> {
        self.trials.object.as_ref().map(|o| match o {
            ObjectSpec::Preset(p) => p.contour(self.trials.sweep.depth, self.trials.sweep.standoff),
            ObjectSpec::Contour(c) => c.clone(),
        })
    }
}
