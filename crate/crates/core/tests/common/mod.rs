#![allow(dead_code)]

use nalgebra::Vector2;
use whisker_core::estimators::Method;
use whisker_core::experiments::config::ExperimentConfig;
use whisker_core::experiments::run::{run_estimator, MetricsReport, RunOutput, SensorModels};
use whisker_core::experiments::suite::{self, Calibration, PreparedTrial};
use whisker_core::experiments::TrialRecord;
use whisker_core::kinematics::{propagate, BodyTwist, ContactState, TimeStep};
use whisker_core::sensor_model::PolynomialModel;

pub const STRAIGHT: &str = "[whisker]\npreset = \"straight\"\n";
pub const CURVED: &str = "[whisker]\npreset = \"curved\"\n";
pub const CONTOUR: &str = "[trials]\nkind = \"contour\"\ncount = 1\n";

pub fn config(text: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(text).expect("valid config")
}

/// Calibrated models plus the generated trial set for one config.
pub struct Suite {
    pub cfg: ExperimentConfig,
    pub cal: Calibration,
    pub trials: Vec<PreparedTrial>,
}

impl Suite {
    pub fn new(cfg: ExperimentConfig) -> Self {
        let cal = suite::calibrate(&cfg).expect("calibration");
        let trials = suite::generate_trials(&cfg).expect("trials");
        Self { cfg, cal, trials }
    }

    pub fn run(&self, method: Method) -> (MetricsReport, Vec<RunOutput>) {
        suite::run_suite(&self.cfg, method, &self.trials, &self.cal.models, false).expect("run")
    }

    pub fn run_one(&self, method: Method, trial: usize) -> RunOutput {
        let t = &self.trials[trial];
        let rc = suite::run_config(&self.cfg, method, &self.cal.models, t.seed, false);
        run_estimator(&t.record, &self.cal.models, &rc, t.contour.as_ref(), t.index, &t.label).expect("run")
    }
}

/// Dense-grid Bayes filter used as a reference posterior. The grid is a
/// lattice of point masses carried exactly by the process model, so the
/// prediction needs no interpolation. Fading memory is reproduced by
/// tempering the prior: raising a density to 1/α² scales a Gaussian's
/// covariance by α². The process noise of the Gaussian filters (1e-5 mm²,
/// a 3 µm standard deviation) is far below the grid spacing and is left out.
pub struct GridBayes {
    points: Vec<Vector2<f64>>,
    logw: Vec<f64>,
}

impl GridBayes {
    /// Square lattice with spacing `h` and half-width `half` around `mean`,
    /// weighted by an isotropic Gaussian prior of variance `var`.
    pub fn new(mean: ContactState, var: f64, h: f64, half: f64) -> Self {
        let n = (half / h).round() as i64;
        let mut points = Vec::new();
        let mut logw = Vec::new();
        for i in -n..=n {
            for j in -n..=n {
                let d = Vector2::new(i as f64 * h, j as f64 * h);
                points.push(mean.to_vector() + d);
                logw.push(-0.5 * d.norm_squared() / var);
            }
        }
        Self { points, logw }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn step(
        &mut self,
        twist: BodyTwist,
        dt: TimeStep,
        z: f64,
        model: &PolynomialModel,
        fading_alpha: f64,
        sensor_var: f64,
    ) {
        let temper = 1.0 / (fading_alpha * fading_alpha);
        for (p, w) in self.points.iter_mut().zip(&mut self.logw) {
            let q = propagate(ContactState::from_vector(*p), twist, dt);
            *p = q.to_vector();
            let r = z - model.value(q);
            *w = *w * temper - 0.5 * r * r / sensor_var;
        }
        let max = self.logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        self.logw.iter_mut().for_each(|w| *w -= max);
    }

    pub fn mean(&self) -> ContactState {
        let mut sum = Vector2::zeros();
        let mut total = 0.0;
        for (p, w) in self.points.iter().zip(&self.logw) {
            let e = w.exp();
            sum += p * e;
            total += e;
        }
        ContactState::from_vector(sum / total)
    }

    /// Posterior mass of points where `keep` is false.
    pub fn mass_outside(&self, keep: impl Fn(ContactState) -> bool) -> f64 {
        let mut out = 0.0;
        let mut total = 0.0;
        for (p, w) in self.points.iter().zip(&self.logw) {
            let e = w.exp();
            total += e;
            if !keep(ContactState::from_vector(*p)) {
                out += e;
            }
        }
        out / total
    }

    /// Posterior mass within `margin` of the lattice edge; large values mean
    /// the lattice is too small.
    pub fn edge_mass(&self, margin: f64) -> f64 {
        let (mut lo, mut hi) = (Vector2::repeat(f64::INFINITY), Vector2::repeat(f64::NEG_INFINITY));
        for p in &self.points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let mut edge = 0.0;
        let mut total = 0.0;
        for (p, w) in self.points.iter().zip(&self.logw) {
            let e = w.exp();
            total += e;
            let near = (p - lo).min() < margin || (hi - p).min() < margin;
            if near {
                edge += e;
            }
        }
        edge / total
    }
}

/// Result of running the UKF and the grid filter side by side.
pub struct GridComparison {
    pub steps: usize,
    /// Largest distance between the two posterior means (m).
    pub max_gap: f64,
    /// Distance between the posterior means after each step (m).
    pub gaps: Vec<f64>,
    pub edge_mass: f64,
}

/// Replays the first `steps` samples after the first contact of `record`
/// through the grid filter, starting from the UKF's initial belief, and
/// compares posterior means with the UKF run on the same data.
pub fn compare_with_grid(
    cfg: &ExperimentConfig,
    models: &SensorModels,
    record: &TrialRecord,
    seed: u64,
    steps: usize,
    spacing: f64,
) -> GridComparison {
    let rc = suite::run_config(cfg, Method::Ukf, models, seed, false);
    let ukf = run_estimator(record, models, &rc, None, 0, "grid").expect("ukf run");
    let start = ukf.estimates[0];
    assert!(ukf.estimates.len() > steps);
    for (j, e) in ukf.estimates.iter().take(steps + 1).enumerate() {
        assert_eq!(e.index, start.index + j, "tracking must not pause in the compared window");
    }
    let prior = rc.filter.prior();
    assert_eq!(prior[(0, 1)], 0.0);
    assert_eq!(prior[(0, 0)], prior[(1, 1)]);
    let var = prior[(0, 0)];
    let model = &models.models()[models.select(record.samples[start.index].signal)];
    let mut grid = GridBayes::new(start.estimate, var, spacing, 8.0 * var.sqrt());
    let twists = record.twists().expect("twists");
    let mut gaps = Vec::with_capacity(steps);
    for e in &ukf.estimates[1..=steps] {
        let k = e.index;
        let dt = TimeStep::new(record.samples[k].t - record.samples[k - 1].t).unwrap();
        grid.step(
            twists[k],
            dt,
            record.samples[k].signal,
            model,
            rc.filter.fading_alpha,
            rc.filter.sensor_noise_var,
        );
        gaps.push(grid.mean().distance(&e.estimate));
    }
    GridComparison {
        steps,
        max_gap: gaps.iter().copied().fold(0.0, f64::max),
        gaps,
        edge_mass: grid.edge_mass(5e-4),
    }
}

/// Central finite-difference gradient check at `n` seeded points inside the
/// model's calibrated box; returns the worst error relative to the gradient
/// norm.
pub fn worst_gradient_error(model: &PolynomialModel, n: usize, seed: u64) -> f64 {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (c, r) = (model.scaling.center, model.scaling.half_range);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for _ in 0..n {
        let p = ContactState::new(
            c[0] + r[0] * rng.random_range(-1.0..1.0),
            c[1] + r[1] * rng.random_range(-1.0..1.0),
        );
        let g = model.gradient(p);
        let fx = (model.value(ContactState::new(p.px + h, p.py)) - model.value(ContactState::new(p.px - h, p.py))) / (2.0 * h);
        let fy = (model.value(ContactState::new(p.px, p.py + h)) - model.value(ContactState::new(p.px, p.py - h))) / (2.0 * h);
        let norm = (g[0] * g[0] + g[1] * g[1]).sqrt();
        let err = ((g[0] - fx).powi(2) + (g[1] - fy).powi(2)).sqrt();
        worst = worst.max(err / norm.max(1e-12));
    }
    worst
}
