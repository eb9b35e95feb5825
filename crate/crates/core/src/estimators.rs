//! Contact-point trackers: EKF, UKF and particle filter sharing the planar
//! process model and the calibrated sensor model, plus a deterministic
//! baseline that corrects along the whisker.
//!
//! Configured covariances are in mm² (the units the noise settings were
//! tuned in); beliefs are stored in meters and m².

use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beam_oracle::WhiskerSpec;
use crate::kinematics::{propagate, propagate_jacobian, BodyTwist, ContactState, TimeStep};
use crate::sensor_model::PolynomialModel;

const MM2: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("covariance square root failed after regularization")]
    Numerical,
    #[error("invalid filter config: {0}")]
    Config(String),
    #[error("unknown method `{0}` (expected ekf, ukf, pf or baseline)")]
    UnknownMethod(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ekf,
    Ukf,
    Pf,
    Baseline,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Ekf, Method::Ukf, Method::Pf, Method::Baseline];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ekf => "ekf",
            Method::Ukf => "ukf",
            Method::Pf => "pf",
            Method::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = EstimatorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ekf" => Ok(Method::Ekf),
            "ukf" => Ok(Method::Ukf),
            "pf" => Ok(Method::Pf),
            "baseline" => Ok(Method::Baseline),
            _ => Err(EstimatorError::UnknownMethod(s.to_string())),
        }
    }
}

/// How the fading factor inflates uncertainty in the predict step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FadingMode {
    /// `P⁻ = α²·F P Fᵀ + Q`
    #[default]
    PriorScaling,
    /// `P⁻ = F P Fᵀ + α²·Q`
    FictitiousNoise,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// mm²
    pub process_noise_cov: [[f64; 2]; 2],
    /// counts²
    pub sensor_noise_var: f64,
    pub fading_alpha: f64,
    pub fading_mode: FadingMode,
    pub particle_count: usize,
    /// mm²
    pub prior_cov: [[f64; 2]; 2],
    pub rng_seed: u64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self::for_method(Method::Ukf)
    }
}

fn diag(v: f64) -> [[f64; 2]; 2] {
    [[v, 0.0], [0.0, v]]
}

fn mat(a: &[[f64; 2]; 2]) -> Matrix2<f64> {
    Matrix2::new(a[0][0], a[0][1], a[1][0], a[1][1])
}

impl FilterConfig {
    /// Default noise settings for each method.
    pub fn for_method(method: Method) -> Self {
        let pf = method == Method::Pf;
        Self {
            process_noise_cov: diag(if pf { 1e-3 } else { 1e-5 }),
            sensor_noise_var: if pf { 1.0 } else { 0.25 },
            fading_alpha: 1.004,
            fading_mode: FadingMode::PriorScaling,
            particle_count: 1000,
            prior_cov: diag(10.0),
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), EstimatorError> {
        let bad = |m: &str| Err(EstimatorError::Config(m.to_string()));
        let psd = |a: &[[f64; 2]; 2]| {
            a[0][0] >= 0.0 && a[1][1] >= 0.0 && a[0][1] == a[1][0] && a[0][0] * a[1][1] >= a[0][1] * a[0][1]
        };
        if !psd(&self.process_noise_cov) {
            return bad("process noise covariance must be symmetric PSD");
        }
        let p = &self.prior_cov;
        if !(psd(p) && p[0][0] > 0.0 && p[0][0] * p[1][1] > p[0][1] * p[0][1]) {
            return bad("prior covariance must be symmetric positive definite");
        }
        if !(self.sensor_noise_var > 0.0 && self.sensor_noise_var.is_finite()) {
            return bad("sensor noise variance must be positive");
        }
        if !(self.fading_alpha >= 1.0 && self.fading_alpha.is_finite()) {
            return bad("fading alpha must be at least 1");
        }
        if self.particle_count == 0 {
            return bad("particle count must be positive");
        }
        Ok(())
    }

    /// Process noise in m².
    pub fn process_noise(&self) -> Matrix2<f64> {
        mat(&self.process_noise_cov) * MM2
    }

    /// Prior covariance in m².
    pub fn prior(&self) -> Matrix2<f64> {
        mat(&self.prior_cov) * MM2
    }
}

/// Conditions raised by a step; none of them are fatal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StepFlags {
    /// Measurement was not finite; belief left unchanged.
    pub rejected_measurement: bool,
    /// Covariance square root needed diagonal loading.
    pub regularized: bool,
    /// All particle weights vanished and were reset to uniform.
    pub degenerate: bool,
    pub resampled: bool,
    /// Baseline sensitivity too small to correct.
    pub singular_correction: bool,
    /// Estimate or hint was clamped to the workspace.
    pub clamped: bool,
}

impl StepFlags {
    pub fn merge(self, o: StepFlags) -> StepFlags {
        StepFlags {
            rejected_measurement: self.rejected_measurement || o.rejected_measurement,
            regularized: self.regularized || o.regularized,
            degenerate: self.degenerate || o.degenerate,
            resampled: self.resampled || o.resampled,
            singular_correction: self.singular_correction || o.singular_correction,
            clamped: self.clamped || o.clamped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianBelief {
    pub mean: ContactState,
    /// m²
    pub cov: Matrix2<f64>,
}

impl GaussianBelief {
    fn symmetrized(mean: ContactState, cov: Matrix2<f64>) -> Self {
        Self {
            mean,
            cov: (cov + cov.transpose()) * 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParticleBelief {
    pub particles: Vec<ContactState>,
    pub weights: Vec<f64>,
}

impl ParticleBelief {
    pub fn mean(&self) -> ContactState {
        let mut m = Vector2::zeros();
        for (p, w) in self.particles.iter().zip(&self.weights) {
            m += p.to_vector() * *w;
        }
        ContactState::from_vector(m)
    }

    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }
}

fn predict_cov(p: &Matrix2<f64>, f: &Matrix2<f64>, cfg: &FilterConfig) -> Matrix2<f64> {
    let a2 = cfg.fading_alpha * cfg.fading_alpha;
    let fpf = f * p * f.transpose();
    match cfg.fading_mode {
        FadingMode::PriorScaling => fpf * a2 + cfg.process_noise(),
        FadingMode::FictitiousNoise => fpf + cfg.process_noise() * a2,
    }
}

/// Predict step shared by both Gaussian filters.
pub fn gaussian_predict(belief: &GaussianBelief, twist: BodyTwist, dt: TimeStep, cfg: &FilterConfig) -> GaussianBelief {
    let f = propagate_jacobian(twist, dt);
    GaussianBelief::symmetrized(propagate(belief.mean, twist, dt), predict_cov(&belief.cov, &f, cfg))
}

pub fn ekf_step(
    belief: &GaussianBelief,
    twist: BodyTwist,
    dt: TimeStep,
    measurement: f64,
    model: &PolynomialModel,
    cfg: &FilterConfig,
) -> (GaussianBelief, StepFlags) {
    if !measurement.is_finite() {
        return (
            belief.clone(),
            StepFlags {
                rejected_measurement: true,
                ..StepFlags::default()
            },
        );
    }
    let pred = gaussian_predict(belief, twist, dt, cfg);
    let g = model.gradient(pred.mean);
    let h = Vector2::new(g[0], g[1]);
    let p = pred.cov;
    let ph = p * h;
    let s = h.dot(&ph) + cfg.sensor_noise_var;
    let k = ph / s;
    let innovation = measurement - model.value(pred.mean);
    let mean = ContactState::from_vector(pred.mean.to_vector() + k * innovation);
    // Joseph form keeps the update PSD
    let ikh = Matrix2::identity() - k * h.transpose();
    let cov = ikh * p * ikh.transpose() + k * k.transpose() * cfg.sensor_noise_var;
    (GaussianBelief::symmetrized(mean, cov), StepFlags::default())
}

/// Scaled unscented transform weights for a 2-D state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnscentedWeights {
    pub spread: f64,
    pub mean0: f64,
    pub cov0: f64,
    pub rest: f64,
}

impl UnscentedWeights {
    pub const ALPHA: f64 = 0.1;
    /// No fourth-moment correction: with β = 2 the innovation variance picks
    /// up the full ½·tr((HP)²) curvature term, which on curved whiskers (tight
    /// iso-moment curves, wide prior) starves the gain while fading memory
    /// keeps inflating P.
    pub const BETA: f64 = 0.0;
    pub const KAPPA: f64 = 0.0;

    pub fn standard() -> Self {
        let n = 2.0;
        let a = Self::ALPHA;
        let lambda = a * a * (n + Self::KAPPA) - n;
        let mean0 = lambda / (n + lambda);
        Self {
            spread: n + lambda,
            mean0,
            cov0: mean0 + 1.0 - a * a + Self::BETA,
            rest: 1.0 / (2.0 * (n + lambda)),
        }
    }
}

fn cholesky(p: &Matrix2<f64>, flags: &mut StepFlags) -> Result<Matrix2<f64>, EstimatorError> {
    if let Some(c) = p.cholesky() {
        return Ok(c.l());
    }
    flags.regularized = true;
    (p + Matrix2::identity() * 1e-12)
        .cholesky()
        .map(|c| c.l())
        .ok_or(EstimatorError::Numerical)
}

fn sigma_points(mean: Vector2<f64>, p: &Matrix2<f64>, w: &UnscentedWeights, flags: &mut StepFlags) -> Result<[Vector2<f64>; 5], EstimatorError> {
    let l = cholesky(&(p * w.spread), flags)?;
    let c0 = l.column(0).into_owned();
    let c1 = l.column(1).into_owned();
    Ok([mean, mean + c0, mean + c1, mean - c0, mean - c1])
}

fn weight(w: &UnscentedWeights, i: usize, cov: bool) -> f64 {
    match (i, cov) {
        (0, false) => w.mean0,
        (0, true) => w.cov0,
        _ => w.rest,
    }
}

pub fn ukf_step(
    belief: &GaussianBelief,
    twist: BodyTwist,
    dt: TimeStep,
    measurement: f64,
    model: &PolynomialModel,
    cfg: &FilterConfig,
) -> Result<(GaussianBelief, StepFlags), EstimatorError> {
    let mut flags = StepFlags::default();
    if !measurement.is_finite() {
        flags.rejected_measurement = true;
        return Ok((belief.clone(), flags));
    }
    let w = UnscentedWeights::standard();
    let a2 = cfg.fading_alpha * cfg.fading_alpha;

    // predict
    let chi = sigma_points(belief.mean.to_vector(), &belief.cov, &w, &mut flags)?;
    let prop: Vec<Vector2<f64>> = chi
        .iter()
        .map(|c| propagate(ContactState::from_vector(*c), twist, dt).to_vector())
        .collect();
    let mut xm = Vector2::zeros();
    for (i, x) in prop.iter().enumerate() {
        xm += x * weight(&w, i, false);
    }
    let mut spread = Matrix2::zeros();
    for (i, x) in prop.iter().enumerate() {
        let d = x - xm;
        spread += d * d.transpose() * weight(&w, i, true);
    }
    let p_pred = match cfg.fading_mode {
        FadingMode::PriorScaling => spread * a2 + cfg.process_noise(),
        FadingMode::FictitiousNoise => spread + cfg.process_noise() * a2,
    };
    let p_pred = (p_pred + p_pred.transpose()) * 0.5;

    // update
    let chi = sigma_points(xm, &p_pred, &w, &mut flags)?;
    let z: Vec<f64> = chi.iter().map(|c| model.value(ContactState::from_vector(*c))).collect();
    let zm: f64 = z.iter().enumerate().map(|(i, v)| v * weight(&w, i, false)).sum();
    let mut pzz = cfg.sensor_noise_var;
    let mut pxz = Vector2::zeros();
    for i in 0..5 {
        let dz = z[i] - zm;
        let wc = weight(&w, i, true);
        pzz += wc * dz * dz;
        pxz += (chi[i] - xm) * (wc * dz);
    }
    let k = pxz / pzz;
    let mean = xm + k * (measurement - zm);
    let cov = p_pred - k * k.transpose() * pzz;
    Ok((GaussianBelief::symmetrized(ContactState::from_vector(mean), cov), flags))
}

fn systematic_resample<R: Rng + ?Sized>(belief: &ParticleBelief, rng: &mut R) -> ParticleBelief {
    let n = belief.particles.len();
    let step = 1.0 / n as f64;
    let mut u = rng.random::<f64>() * step;
    let mut cum = belief.weights[0];
    let mut i = 0;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        while u > cum && i + 1 < n {
            i += 1;
            cum += belief.weights[i];
        }
        out.push(belief.particles[i]);
        u += step;
    }
    ParticleBelief {
        particles: out,
        weights: vec![step; n],
    }
}

/// Lower Cholesky factor of a PSD 2×2 matrix (zero where degenerate).
fn psd_sqrt(q: &Matrix2<f64>) -> Matrix2<f64> {
    let l00 = q[(0, 0)].max(0.0).sqrt();
    let l10 = if l00 > 0.0 { q[(1, 0)] / l00 } else { 0.0 };
    let l11 = (q[(1, 1)] - l10 * l10).max(0.0).sqrt();
    Matrix2::new(l00, 0.0, l10, l11)
}

pub fn pf_step<R: Rng + ?Sized>(
    belief: &ParticleBelief,
    twist: BodyTwist,
    dt: TimeStep,
    measurement: f64,
    model: &PolynomialModel,
    cfg: &FilterConfig,
    rng: &mut R,
) -> (ParticleBelief, StepFlags) {
    let mut flags = StepFlags::default();
    if !measurement.is_finite() {
        flags.rejected_measurement = true;
        return (belief.clone(), flags);
    }
    let l = psd_sqrt(&cfg.process_noise());
    let inv2r = 0.5 / cfg.sensor_noise_var;
    let mut particles = Vec::with_capacity(belief.particles.len());
    let mut weights = Vec::with_capacity(belief.particles.len());
    for (p, w) in belief.particles.iter().zip(&belief.weights) {
        let e = Vector2::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal));
        let x = ContactState::from_vector(propagate(*p, twist, dt).to_vector() + l * e);
        let r = measurement - model.value(x);
        particles.push(x);
        weights.push(w * (-r * r * inv2r).exp());
    }
    let total: f64 = weights.iter().sum();
    let n = weights.len();
    if total > 0.0 && total.is_finite() {
        weights.iter_mut().for_each(|w| *w /= total);
    } else {
        flags.degenerate = true;
        weights.iter_mut().for_each(|w| *w = 1.0 / n as f64);
    }
    let mut out = ParticleBelief { particles, weights };
    if out.effective_sample_size() < 0.5 * n as f64 {
        out = systematic_resample(&out, rng);
        flags.resampled = true;
    }
    (out, flags)
}

/// Finite-difference step along the whisker used by the baseline (m).
pub const BASELINE_ARC_STEP: f64 = 1e-4;

/// Whisker direction at the rest-shape point closest to `p`.
fn whisker_direction(spec: &WhiskerSpec, p: ContactState) -> Vector2<f64> {
    let (s, _) = spec.closest_rest_point(p.to_vector());
    spec.rest_tangent(s)
}

pub fn baseline_step(
    estimate: ContactState,
    twist: BodyTwist,
    dt: TimeStep,
    measurement: f64,
    model: &PolynomialModel,
    spec: &WhiskerSpec,
) -> (ContactState, StepFlags) {
    let mut flags = StepFlags::default();
    if !measurement.is_finite() {
        flags.rejected_measurement = true;
        return (estimate, flags);
    }
    let pred = propagate(estimate, twist, dt);
    let t = whisker_direction(spec, pred);
    let h = BASELINE_ARC_STEP;
    let ahead = ContactState::from_vector(pred.to_vector() + t * h);
    let behind = ContactState::from_vector(pred.to_vector() - t * h);
    let dm_ds = (model.value(ahead) - model.value(behind)) / (2.0 * h);
    let corrected = if dm_ds.abs() < 1e-9 {
        flags.singular_correction = true;
        pred
    } else {
        let ds = (measurement - model.value(pred)) / dm_ds;
        ContactState::from_vector(pred.to_vector() + t * ds)
    };
    let (out, clamped) = corrected.clamp_norm(spec.workspace_radius());
    flags.clamped = clamped;
    if !out.is_finite() {
        flags.singular_correction = true;
        return (pred.clamp_norm(spec.workspace_radius()).0, flags);
    }
    (out, flags)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Belief {
    Gaussian(GaussianBelief),
    Particles(ParticleBelief),
    Point(ContactState),
}

impl Belief {
    pub fn estimate(&self) -> ContactState {
        match self {
            Belief::Gaussian(g) => g.mean,
            Belief::Particles(p) => p.mean(),
            Belief::Point(p) => *p,
        }
    }
}

/// Initial belief around `contact_hint`, clamped to the workspace disc.
/// Particles are drawn from a generator seeded with `cfg.rng_seed`.
pub fn init_belief(
    method: Method,
    cfg: &FilterConfig,
    contact_hint: ContactState,
    workspace_radius: f64,
) -> (Belief, StepFlags) {
    let (hint, clamped) = contact_hint.clamp_norm(workspace_radius);
    let flags = StepFlags {
        clamped,
        ..StepFlags::default()
    };
    let belief = match method {
        Method::Ekf | Method::Ukf => Belief::Gaussian(GaussianBelief {
            mean: hint,
            cov: cfg.prior(),
        }),
        Method::Baseline => Belief::Point(hint),
        Method::Pf => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
            let l = psd_sqrt(&cfg.prior());
            let n = cfg.particle_count;
            let particles = (0..n)
                .map(|_| {
                    let e = Vector2::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal));
                    ContactState::from_vector(hint.to_vector() + l * e)
                })
                .collect();
            Belief::Particles(ParticleBelief {
                particles,
                weights: vec![1.0 / n as f64; n],
            })
        }
    };
    (belief, flags)
}

/// A running estimator of one method, with its belief and random stream.
#[derive(Debug, Clone)]
pub struct Tracker {
    method: Method,
    cfg: FilterConfig,
    spec: WhiskerSpec,
    belief: Belief,
    rng: ChaCha8Rng,
    inits: u64,
}

impl Tracker {
    pub fn new(
        method: Method,
        cfg: FilterConfig,
        spec: WhiskerSpec,
        contact_hint: ContactState,
    ) -> Result<(Self, StepFlags), EstimatorError> {
        cfg.validate()?;
        let (belief, flags) = init_belief(method, &cfg, contact_hint, spec.workspace_radius());
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        rng.set_stream(1);
        Ok((
            Self {
                method,
                cfg,
                spec,
                belief,
                rng,
                inits: 1,
            },
            flags,
        ))
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn belief(&self) -> &Belief {
        &self.belief
    }

    pub fn estimate(&self) -> ContactState {
        self.belief.estimate()
    }

    /// Restarts from a fresh prior; the belief equals [`init_belief`]'s.
    pub fn reinitialize(&mut self, contact_hint: ContactState) -> StepFlags {
        let (belief, flags) = init_belief(self.method, &self.cfg, contact_hint, self.spec.workspace_radius());
        self.belief = belief;
        self.inits += 1;
        self.rng = ChaCha8Rng::seed_from_u64(self.cfg.rng_seed);
        self.rng.set_stream(self.inits);
        flags
    }

    /// Motion-only update, for samples without a usable measurement.
    pub fn predict(&mut self, twist: BodyTwist, dt: TimeStep) {
        self.belief = match &self.belief {
            Belief::Gaussian(g) => Belief::Gaussian(gaussian_predict(g, twist, dt, &self.cfg)),
            Belief::Particles(p) => Belief::Particles(ParticleBelief {
                particles: p.particles.iter().map(|x| propagate(*x, twist, dt)).collect(),
                weights: p.weights.clone(),
            }),
            Belief::Point(x) => Belief::Point(propagate(*x, twist, dt)),
        };
    }

    pub fn step(
        &mut self,
        twist: BodyTwist,
        dt: TimeStep,
        measurement: f64,
        model: &PolynomialModel,
    ) -> Result<StepFlags, EstimatorError> {
        let (belief, flags) = match &self.belief {
            Belief::Gaussian(g) => {
                let (b, f) = match self.method {
                    Method::Ukf => ukf_step(g, twist, dt, measurement, model, &self.cfg)?,
                    _ => ekf_step(g, twist, dt, measurement, model, &self.cfg),
                };
                (Belief::Gaussian(b), f)
            }
            Belief::Particles(p) => {
                let (b, f) = pf_step(p, twist, dt, measurement, model, &self.cfg, &mut self.rng);
                (Belief::Particles(b), f)
            }
            Belief::Point(x) => {
                let (b, f) = baseline_step(*x, twist, dt, measurement, model, &self.spec);
                (Belief::Point(b), f)
            }
        };
        let (belief, clamped) = clamp_belief(belief, self.spec.workspace_radius());
        self.belief = belief;
        Ok(StepFlags {
            clamped: flags.clamped || clamped,
            ..flags
        })
    }
}

/// Soft workspace bound: pulls Gaussian means and particles back onto the
/// workspace disc.
fn clamp_belief(belief: Belief, radius: f64) -> (Belief, bool) {
    match belief {
        Belief::Gaussian(g) => {
            let (mean, c) = g.mean.clamp_norm(radius);
            (Belief::Gaussian(GaussianBelief { mean, ..g }), c)
        }
        Belief::Particles(mut p) => {
            let mut any = false;
            for x in &mut p.particles {
                let (y, c) = x.clamp_norm(radius);
                *x = y;
                any |= c;
            }
            (Belief::Particles(p), any)
        }
        Belief::Point(x) => (Belief::Point(x), false),
    }
}
