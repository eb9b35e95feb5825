//! Config-driven pipeline: calibrate, generate the trial set, run a method
//! over it. Trials are generated and tracked in parallel; each trial's
//! randomness depends only on its own seed, so results do not depend on
//! scheduling.

use std::thread;

use super::config::{ExperimentConfig, TrialKind};
use super::generate::{generate_trial, pin_trial_schedule, synthesize_calibration};
use super::run::{run_estimator, MetricsReport, RunConfig, RunOutput, SensorModels};
use super::trajectory::{parse_trajectory, resample};
use super::trial::TrialRecord;
use super::ExperimentError;
use crate::beam_oracle::ObjectContour;
use crate::estimators::Method;
use crate::sensor_model::{fit, load_model, read_calibration_csv, CalibrationSet, PolynomialModel};
use crate::signal::{Thresholds, NOMINAL_RATE_HZ};

/// A trial together with what the metrics need to know about it.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedTrial {
    pub index: usize,
    pub label: String,
    pub seed: u64,
    /// World-frame obstacle scored by the contour metrics, if any.
    pub contour: Option<ObjectContour>,
    pub record: TrialRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub sets: Vec<CalibrationSet>,
    pub models: SensorModels,
}

/// Maps `f` over `items` on scoped threads, keeping input order.
pub fn parallel_map<T: Sync, U: Send, E: Send>(
    items: &[T],
    f: impl Fn(&T) -> Result<U, E> + Sync,
) -> Result<Vec<U>, E> {
    let workers = thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(items.len().max(1));
    let chunk = items.len().div_ceil(workers).max(1);
    let f = &f;
    thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| scope.spawn(move || c.iter().map(f).collect::<Result<Vec<U>, E>>()))
            .collect();
        let mut out = Vec::with_capacity(items.len());
        for h in handles {
            out.extend(h.join().expect("worker panicked")?);
        }
        Ok(out)
    })
}

/// Fits (or loads) the sensor models named by the config, synthesizing
/// calibration presses from the oracle when no files are given.
pub fn calibrate(cfg: &ExperimentConfig) -> Result<Calibration, ExperimentError> {
    let cal = &cfg.calibration;
    if !cal.models.is_empty() {
        let models = cal.models.iter().map(load_model).collect::<Result<Vec<_>, _>>()?;
        return Ok(Calibration {
            sets: Vec::new(),
            models: SensorModels::from_models(models)?,
        });
    }
    let sets = if cal.csv.is_empty() {
        synthesize_calibration(
            &cfg.spec(),
            cfg.solver,
            &cal.grid.unwrap_or_default(),
            &cfg.signal,
            cal.seed(),
        )?
    } else {
        cal.csv
            .iter()
            .zip(&cal.sides)
            .map(|(p, &side)| {
                let f = std::fs::File::open(p)?;
                Ok(CalibrationSet {
                    samples: read_calibration_csv(std::io::BufReader::new(f))?,
                    side,
                })
            })
            .collect::<Result<Vec<_>, ExperimentError>>()?
    };
    let models = fit_sets(&sets, cal.degree())?;
    let max_signal = sets
        .iter()
        .flat_map(|s| s.samples.iter().map(|c| c.signal.abs()))
        .fold(0.0, f64::max);
    Ok(Calibration {
        models: SensorModels::new(models, max_signal)?,
        sets,
    })
}

pub fn fit_sets(sets: &[CalibrationSet], degree: usize) -> Result<Vec<PolynomialModel>, ExperimentError> {
    sets.iter()
        .map(|s| {
            let m = fit(s, degree)?;
            // probe at the first sample, so saved models can be checked on load
            Ok(match s.samples.first() {
                Some(c) => m.with_probe(c.position),
                None => m,
            })
        })
        .collect()
}

pub fn thresholds(cfg: &ExperimentConfig, models: &SensorModels) -> Thresholds {
    cfg.detector.unwrap_or_else(|| Thresholds::from_max_signal(models.max_signal()))
}

struct Plan {
    index: usize,
    label: String,
    seed: u64,
    contour: ObjectContour,
    scored: bool,
    trajectory: Vec<(f64, crate::kinematics::Pose2)>,
}

fn plans(cfg: &ExperimentConfig) -> Result<Vec<Plan>, ExperimentError> {
    let t = &cfg.trials;
    let spec = cfg.spec();
    let mut out = Vec::new();
    match t.kind {
        TrialKind::Pin => {
            let design = cfg.pin_design();
            for i in 0..t.count {
                let seed = t.seed + i as u64;
                let (contour, trajectory) = pin_trial_schedule(&spec, &design, seed);
                out.push(Plan {
                    index: i,
                    label: "pin".into(),
                    seed,
                    contour,
                    scored: false,
                    trajectory,
                });
            }
        }
        TrialKind::Contour => {
            let trajectory = t.sweep.trajectory();
            for (label, contour) in cfg.contour_objects() {
                for _ in 0..t.count {
                    let index = out.len();
                    out.push(Plan {
                        index,
                        label: label.clone(),
                        seed: t.seed + index as u64,
                        contour: contour.clone(),
                        scored: true,
                        trajectory: trajectory.clone(),
                    });
                }
            }
        }
        TrialKind::Scripted => {
            let text = t.trajectory.as_deref().unwrap_or_default();
            let trajectory = resample(&parse_trajectory(text)?, NOMINAL_RATE_HZ);
            let contour = cfg
                .scripted_object()
                .ok_or_else(|| ExperimentError::Config("[trials] scripted runs need `object`".into()))?;
            for i in 0..t.count {
                out.push(Plan {
                    index: i,
                    label: "scripted".into(),
                    seed: t.seed + i as u64,
                    contour: contour.clone(),
                    scored: true,
                    trajectory: trajectory.clone(),
                });
            }
        }
    }
    Ok(out)
}

/// Generates the config's trial set; trial `i` uses seed `trials.seed + i`.
pub fn generate_trials(cfg: &ExperimentConfig) -> Result<Vec<PreparedTrial>, ExperimentError> {
    let spec = cfg.spec();
    parallel_map(&plans(cfg)?, |p| {
        let record = generate_trial(&spec, cfg.solver, &p.contour, &p.trajectory, &cfg.signal, p.seed, p.index)?;
        Ok(PreparedTrial {
            index: p.index,
            label: p.label.clone(),
            seed: p.seed,
            contour: p.scored.then(|| p.contour.clone()),
            record,
        })
    })
}

pub fn run_config(cfg: &ExperimentConfig, method: Method, models: &SensorModels, seed: u64, timing: bool) -> RunConfig {
    RunConfig {
        method,
        filter: cfg.filter_config(method, seed),
        spec: cfg.spec(),
        thresholds: thresholds(cfg, models),
        init: cfg.run.init,
        init_offset: cfg.run.init_offset,
        ringing: cfg.run.ringing,
        timing,
    }
}

/// Runs `method` over every trial and pools the metrics. Each trial's
/// filter seed is the trial seed. With `timing`, trials run one at a time
/// so wall-time measurements do not compete for cores.
pub fn run_suite(
    cfg: &ExperimentConfig,
    method: Method,
    trials: &[PreparedTrial],
    models: &SensorModels,
    timing: bool,
) -> Result<(MetricsReport, Vec<RunOutput>), ExperimentError> {
    let one = |t: &PreparedTrial| {
        let rc = run_config(cfg, method, models, t.seed, timing);
        run_estimator(&t.record, models, &rc, t.contour.as_ref(), t.index, &t.label)
    };
    let runs = if timing {
        trials.iter().map(one).collect::<Result<Vec<_>, _>>()?
    } else {
        parallel_map(trials, one)?
    };
    Ok((MetricsReport::pool(method, &runs), runs))
}
