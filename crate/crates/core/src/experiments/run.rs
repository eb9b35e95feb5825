//! Running an estimator over a trial, and the error metrics.
//!
//! A contact monitor on the raw signal decides when the tracker is live.
//! At each make the tracker is (re-)initialized from the hint and the make
//! sample itself only seeds the belief; stepping starts at the next sample.
//! Error statistics pool every sample where the tracker is live and the
//! ground truth says the whisker is touching.

use std::time::Instant;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::config::InitRule;
use super::trial::TrialRecord;
use super::ExperimentError;
use crate::beam_oracle::{ObjectContour, WhiskerSpec};
use crate::estimators::{FilterConfig, Method, StepFlags, Tracker};
use crate::kinematics::{world_point, ContactState, TimeStep};
use crate::sensor_model::{PolynomialModel, Side};
use crate::signal::{BandPassFilter, ContactMonitor, Thresholds};

/// Estimates within this distance of ground truth count as converged (m).
pub const CONVERGENCE_RADIUS: f64 = 1e-3;
/// Estimates within this distance of a polygon vertex count as at a corner (m).
pub const CORNER_RADIUS: f64 = 2e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub filter: FilterConfig,
    pub spec: WhiskerSpec,
    pub thresholds: Thresholds,
    pub init: InitRule,
    /// Init offset (m); see [`RunSection::init_offset`](super::config::RunSection::init_offset).
    pub init_offset: f64,
    pub ringing: bool,
    /// Record per-step wall time. Off by default so reports are
    /// reproducible byte for byte.
    pub timing: bool,
}

/// Fitted sensor models for one whisker, with the signal scale used to set
/// detector thresholds.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorModels {
    models: Vec<PolynomialModel>,
    max_signal: f64,
    /// Sign of each model's value at the centre of its calibrated box.
    polarity: Vec<f64>,
}

impl SensorModels {
    pub fn new(models: Vec<PolynomialModel>, max_signal: f64) -> Result<Self, ExperimentError> {
        if models.is_empty() {
            return Err(ExperimentError::Config("at least one sensor model is needed".into()));
        }
        if !(max_signal.is_finite() && max_signal > 0.0) {
            return Err(ExperimentError::Config("maximum calibrated signal must be positive".into()));
        }
        let polarity = models
            .iter()
            .map(|m| {
                let c = m.scaling.center;
                m.value(ContactState::new(c[0], c[1])).signum()
            })
            .collect();
        Ok(Self {
            models,
            max_signal,
            polarity,
        })
    }

    /// Models with the signal scale taken as the largest magnitude over a
    /// 21 × 21 grid of each calibrated box.
    pub fn from_models(models: Vec<PolynomialModel>) -> Result<Self, ExperimentError> {
        let mut max = 0.0f64;
        for m in &models {
            let (c, h) = (m.scaling.center, m.scaling.half_range);
            for i in 0..=20 {
                for j in 0..=20 {
                    let u = -1.0 + 0.1 * i as f64;
                    let v = -1.0 + 0.1 * j as f64;
                    let p = ContactState::new(c[0] + u * h[0], c[1] + v * h[1]);
                    max = max.max(m.value(p).abs());
                }
            }
        }
        Self::new(models, max)
    }

    pub fn models(&self) -> &[PolynomialModel] {
        &self.models
    }

    pub fn max_signal(&self) -> f64 {
        self.max_signal
    }

    /// The model whose calibrated polarity matches the signal's sign.
    pub fn select(&self, signal: f64) -> usize {
        let sign = if signal < 0.0 { -1.0 } else { 1.0 };
        self.polarity.iter().position(|&p| p == sign).unwrap_or(0)
    }
}

/// Signal-independent starting point: 60 % along a straight whisker offset
/// to the model's side, or near the base of a curved one.
pub fn fixed_hint(spec: &WhiskerSpec, side: Side, offset: f64) -> ContactState {
    if spec.is_straight() {
        let sign = if side == Side::Right { -1.0 } else { 1.0 };
        ContactState::new(0.6 * spec.arc_length, sign * offset)
    } else {
        let p = spec.rest_point(0.1 * spec.arc_length);
        ContactState::new(p.x, p.y)
    }
}

fn init_hint(cfg: &RunConfig, side: Side, truth: Option<ContactState>) -> ContactState {
    match (cfg.init, truth) {
        // shift along the whisker at constant lateral offset; on a straight
        // whisker this is a pure base-x offset
        (InitRule::TruthOffset, Some(t)) if t.is_finite() => {
            let (s, d) = cfg.spec.closest_rest_point(t.to_vector());
            let s = s + cfg.init_offset;
            let tan = cfg.spec.rest_tangent(s);
            let p = cfg.spec.rest_point(s) + Vector2::new(-tan.y, tan.x) * d;
            ContactState::new(p.x, p.y)
        }
        _ => fixed_hint(&cfg.spec, side, cfg.init_offset),
    }
}

/// Estimate at one sample where the tracker was live.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatePoint {
    pub index: usize,
    pub t: f64,
    pub estimate: ContactState,
    /// Estimate in world coordinates.
    pub world: [f64; 2],
    /// Ground truth (base frame), if the trial has it and is in contact.
    pub truth: Option<ContactState>,
    pub truth_world: Option<[f64; 2]>,
    /// Euclidean error (m).
    pub error: Option<f64>,
    /// Whether this sample counts toward the contour metrics.
    pub scored: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FlagCounts {
    pub rejected_measurement: usize,
    pub regularized: usize,
    pub degenerate: usize,
    pub resampled: usize,
    pub singular_correction: usize,
    pub clamped: usize,
}

impl FlagCounts {
    fn add(&mut self, f: StepFlags) {
        self.rejected_measurement += usize::from(f.rejected_measurement);
        self.regularized += usize::from(f.regularized);
        self.degenerate += usize::from(f.degenerate);
        self.resampled += usize::from(f.resampled);
        self.singular_correction += usize::from(f.singular_correction);
        self.clamped += usize::from(f.clamped);
    }
}

/// Per-trial metrics. Distances in mm, times in s, wall time in ms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub trial: usize,
    pub label: String,
    pub method: Method,
    /// Samples contributing to the error statistics.
    pub samples: usize,
    pub mean_error: Option<f64>,
    pub std_error: Option<f64>,
    pub max_error: Option<f64>,
    pub min_error: Option<f64>,
    /// From the onset of the first contact to the first estimate within
    /// 1 mm of ground truth.
    pub convergence_time: Option<f64>,
    pub contour_mean: Option<f64>,
    pub contour_std: Option<f64>,
    /// Fraction of scored estimates within 2 mm of a polygon vertex.
    pub corner_fraction: Option<f64>,
    pub inits: usize,
    pub breaks: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_ms_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_ms_max: Option<f64>,
}

/// Statistics pooled over every sample of every trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub method: Method,
    pub trials: usize,
    pub samples: usize,
    pub mean_error: Option<f64>,
    pub std_error: Option<f64>,
    pub max_error: Option<f64>,
    pub min_error: Option<f64>,
    /// Trials whose estimate reached 1 mm.
    pub converged: usize,
    pub convergence_mean: Option<f64>,
    pub convergence_max: Option<f64>,
    pub contour_mean: Option<f64>,
    pub contour_std: Option<f64>,
    pub corner_fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_ms_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_ms_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub trials: Vec<TrialMetrics>,
    pub aggregate: AggregateMetrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub estimates: Vec<EstimatePoint>,
    pub metrics: TrialMetrics,
    pub flags: FlagCounts,
    /// Distance of each scored estimate to the contour (m).
    pub contour_distances: Vec<f64>,
    pub corner_hits: usize,
    pub corner_scored: usize,
    /// Wall time of each estimator step (ms), when timing.
    pub step_ms: Vec<f64>,
}

/// Mean, population standard deviation, max and min.
pub fn summarize(xs: &[f64]) -> Option<(f64, f64, f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    Some((mean, var.sqrt(), max, min))
}

fn mm(x: Option<(f64, f64, f64, f64)>) -> [Option<f64>; 4] {
    match x {
        Some((a, b, c, d)) => [Some(a * 1e3), Some(b * 1e3), Some(c * 1e3), Some(d * 1e3)],
        None => [None; 4],
    }
}

/// Runs `cfg.method` over `trial`. `contour` (world frame) enables the
/// contour metrics; `trial_id` and `label` only tag the metrics.
pub fn run_estimator(
    trial: &TrialRecord,
    models: &SensorModels,
    cfg: &RunConfig,
    contour: Option<&ObjectContour>,
    trial_id: usize,
    label: &str,
) -> Result<RunOutput, ExperimentError> {
    let twists = trial.twists()?;
    let filter = cfg.ringing.then(BandPassFilter::ringing_detector);
    let mut monitor = ContactMonitor::new(cfg.thresholds, filter);
    let mut tracker: Option<Tracker> = None;
    let mut active = false;
    let mut model = 0usize;
    let mut flags = FlagCounts::default();
    let mut estimates = Vec::new();
    let mut step_ms = Vec::new();
    let (mut inits, mut breaks) = (0usize, 0usize);
    let mut convergence: Option<f64> = None;
    let mut first_onset: Option<f64> = None;
    let mut onset: Option<f64> = None; // current ground-truth contact onset
    let synthetic = trial.is_synthetic();

    for (k, s) in trial.samples.iter().enumerate() {
        let truth = s.ground_truth.filter(|g| s.contact && g.is_finite());
        onset = match (truth, onset) {
            (Some(_), Some(t0)) => Some(t0),
            (Some(_), None) => Some(s.t),
            (None, _) => None,
        };
        let out = monitor.step(s.signal);
        if out.broke.is_some() {
            active = false;
            breaks += 1;
        }
        if out.made {
            model = models.select(s.signal);
            let side = models.models()[model].side;
            let hint = init_hint(cfg, side, truth);
            let f = match &mut tracker {
                Some(t) => t.reinitialize(hint),
                None => {
                    let (t, f) = Tracker::new(cfg.method, cfg.filter, cfg.spec, hint)?;
                    tracker = Some(t);
                    f
                }
            };
            flags.add(f);
            if inits == 0 {
                first_onset = Some(onset.unwrap_or(s.t));
            }
            inits += 1;
            active = true;
        } else if active {
            let tr = tracker.as_mut().expect("active tracker");
            let dt = TimeStep::new(s.t - trial.samples[k - 1].t)?;
            let started = cfg.timing.then(Instant::now);
            if s.signal.is_finite() {
                let f = tr.step(twists[k], dt, s.signal, &models.models()[model])?;
                flags.add(f);
            } else {
                tr.predict(twists[k], dt);
                flags.rejected_measurement += 1;
            }
            if let Some(t0) = started {
                step_ms.push(t0.elapsed().as_secs_f64() * 1e3);
            }
        }
        if !active {
            continue;
        }
        let est = tracker.as_ref().expect("active tracker").estimate();
        let w = world_point(s.base, est);
        let error = truth.map(|g| g.distance(&est));
        if let (Some(e), None, 1) = (error, convergence, inits) {
            if e < CONVERGENCE_RADIUS {
                convergence = Some(s.t - first_onset.unwrap_or(s.t));
            }
        }
        estimates.push(EstimatePoint {
            index: k,
            t: s.t,
            estimate: est,
            world: [w.x, w.y],
            truth,
            truth_world: truth.map(|g| {
                let p = world_point(s.base, g);
                [p.x, p.y]
            }),
            error,
            scored: if synthetic { truth.is_some() } else { true },
        });
    }

    let errors: Vec<f64> = estimates.iter().filter_map(|e| e.error).collect();
    let [mean_error, std_error, max_error, min_error] = mm(summarize(&errors));
    let mut contour_distances = Vec::new();
    let (mut corner_hits, mut corner_scored) = (0usize, 0usize);
    if let Some(c) = contour {
        for e in estimates.iter().filter(|e| e.scored) {
            let p = Vector2::new(e.world[0], e.world[1]);
            contour_distances.push(c.distance_to_boundary(p));
            if let Some(d) = c.nearest_corner_distance(p) {
                corner_scored += 1;
                corner_hits += usize::from(d <= CORNER_RADIUS);
            }
        }
    }
    let [contour_mean, contour_std, _, _] = mm(summarize(&contour_distances));
    let timing = summarize(&step_ms);
    let metrics = TrialMetrics {
        trial: trial_id,
        label: label.to_string(),
        method: cfg.method,
        samples: errors.len(),
        mean_error,
        std_error,
        max_error,
        min_error,
        convergence_time: convergence,
        contour_mean,
        contour_std,
        corner_fraction: (corner_scored > 0).then(|| corner_hits as f64 / corner_scored as f64),
        inits,
        breaks,
        step_ms_mean: timing.map(|t| t.0),
        step_ms_max: timing.map(|t| t.2),
    };
    Ok(RunOutput {
        estimates,
        metrics,
        flags,
        contour_distances,
        corner_hits,
        corner_scored,
        step_ms,
    })
}

impl MetricsReport {
    /// Pools samples across trials.
    pub fn pool(method: Method, runs: &[RunOutput]) -> Self {
        let errors: Vec<f64> = runs
            .iter()
            .flat_map(|r| r.estimates.iter().filter_map(|e| e.error))
            .collect();
        let [mean_error, std_error, max_error, min_error] = mm(summarize(&errors));
        let conv: Vec<f64> = runs.iter().filter_map(|r| r.metrics.convergence_time).collect();
        let cd: Vec<f64> = runs.iter().flat_map(|r| r.contour_distances.iter().copied()).collect();
        let [contour_mean, contour_std, _, _] = mm(summarize(&cd));
        let hits: usize = runs.iter().map(|r| r.corner_hits).sum();
        let scored: usize = runs.iter().map(|r| r.corner_scored).sum();
        let steps: Vec<f64> = runs.iter().flat_map(|r| r.step_ms.iter().copied()).collect();
        let timing = summarize(&steps);
        let aggregate = AggregateMetrics {
            method,
            trials: runs.len(),
            samples: errors.len(),
            mean_error,
            std_error,
            max_error,
            min_error,
            converged: conv.len(),
            convergence_mean: summarize(&conv).map(|s| s.0),
            convergence_max: summarize(&conv).map(|s| s.2),
            contour_mean,
            contour_std,
            corner_fraction: (scored > 0).then(|| hits as f64 / scored as f64),
            step_ms_mean: timing.map(|t| t.0),
            step_ms_max: timing.map(|t| t.2),
        };
        Self {
            trials: runs.iter().map(|r| r.metrics.clone()).collect(),
            aggregate,
        }
    }
}
