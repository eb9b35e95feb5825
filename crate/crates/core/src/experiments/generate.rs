//! Synthetic trials and calibration data from the mechanics oracle.

use nalgebra::Vector2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::trajectory::{resample, Waypoint};
use super::trial::{TrialRecord, TrialSample};
use super::ExperimentError;
use crate::beam_oracle::{sweep_trajectory_with, EquilibriumSolver, ObjectContour, OracleError, SolverConfig, WhiskerSpec};
use crate::kinematics::{ContactState, Pose2};
use crate::sensor_model::{CalibrationSample, CalibrationSet, Side};
use crate::signal::NOMINAL_RATE_HZ;

type V2 = Vector2<f64>;

/// Sensor counts per N·m of base moment. Puts the largest calibrated
/// straight-whisker moment at 32 counts.
pub const DEFAULT_GAIN: f64 = 6.83e5;

/// Decaying oscillation added to the signal after each release.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RingSpec {
    /// Initial amplitude (counts).
    pub amplitude: f64,
    pub frequency_hz: f64,
    /// Envelope time constant (s).
    pub decay: f64,
}

impl Default for RingSpec {
    fn default() -> Self {
        Self {
            amplitude: 8.0,
            frequency_hz: 26.0,
            decay: 0.06,
        }
    }
}

/// Moment-to-signal map and measurement noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    pub gain: f64,
    /// Gaussian noise standard deviation (counts).
    pub std: f64,
    pub ring: Option<RingSpec>,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            gain: DEFAULT_GAIN,
            std: 0.5,
            ring: None,
        }
    }
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self {
            std: 0.0,
            ..Self::default()
        }
    }
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Sweeps the oracle along `trajectory` and records the noisy signal with
/// ground truth. Out-of-contact samples carry NaN ground truth, so every
/// synthetic sample has the field.
pub fn generate_trial(
    spec: &WhiskerSpec,
    solver: SolverConfig,
    contour: &ObjectContour,
    trajectory: &[(f64, Pose2)],
    noise: &NoiseSpec,
    seed: u64,
    trial: usize,
) -> Result<TrialRecord, ExperimentError> {
    let sweep = sweep_trajectory_with(spec, solver, trajectory, contour)
        .map_err(|source| ExperimentError::Oracle { trial, source })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ring: Option<(f64, f64)> = None; // (start time, signed amplitude)
    let mut last_moment = 0.0f64;
    let mut prev_contact = false;
    let samples = sweep
        .iter()
        .zip(trajectory)
        .map(|(s, &(t, base))| {
            if prev_contact && !s.in_contact {
                if let Some(r) = noise.ring {
                    ring = Some((t, r.amplitude * last_moment.signum()));
                }
            }
            if s.in_contact {
                last_moment = s.moment;
                ring = None;
            }
            prev_contact = s.in_contact;
            let mut signal = noise.gain * s.moment;
            if let (Some((t0, a)), Some(r)) = (ring, noise.ring) {
                let tau = t - t0;
                signal += a * (-tau / r.decay).exp() * (std::f64::consts::TAU * r.frequency_hz * tau).cos();
            }
            // always draw, so noise does not depend on the ring setting
            signal += noise.std * gaussian(&mut rng);
            TrialSample {
                t,
                base,
                signal,
                ground_truth: Some(if s.in_contact { s.contact } else { ContactState::NAN }),
                contact: s.in_contact,
            }
        })
        .collect();
    Ok(TrialRecord { samples })
}

fn body_point(spec: &WhiskerSpec, s: f64, d: f64) -> V2 {
    let t = spec.rest_tangent(s);
    spec.rest_point(s) + d * V2::new(-t.y, t.x)
}

/// Fixed-pin protocol: the base moves so that the pin wanders over the
/// whisker, with lateral offset `d` measured from the rest shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PinTrialDesign {
    pub duration: f64,
    /// Free time before the approach (s).
    pub lead_in: f64,
    /// Time to press the pin in to its first offset (s).
    pub approach: f64,
    /// Time between random waypoints (s).
    pub interval: f64,
    /// Arc-position range of the contact (m).
    pub arc_range: [f64; 2],
    /// Lateral offset magnitude range (m).
    pub offset_range: [f64; 2],
    /// Cap on the offset as a fraction of arc position.
    pub offset_slope: f64,
    /// Heading range (rad).
    pub heading_range: f64,
    /// Pin may lie on either side (straight whiskers only).
    pub both_sides: bool,
}

impl PinTrialDesign {
    pub fn for_spec(spec: &WhiskerSpec) -> Self {
        if spec.is_straight() {
            Self {
                duration: 15.0,
                lead_in: 0.5,
                approach: 0.3,
                interval: 1.0,
                arc_range: [0.018, 0.045],
                offset_range: [0.001, 0.005],
                offset_slope: 0.15,
                heading_range: 0.2,
                both_sides: true,
            }
        } else {
            Self {
                arc_range: [0.012, 0.045],
                offset_range: [0.001, 0.004],
                offset_slope: f64::INFINITY,
                both_sides: false,
                ..Self::for_spec(&WhiskerSpec::straight_nitinol())
            }
        }
    }
}

impl Default for PinTrialDesign {
    fn default() -> Self {
        Self::for_spec(&WhiskerSpec::straight_nitinol())
    }
}

/// World position of the pin in every pin trial.
pub const PIN_POSITION: [f64; 2] = [0.03, 0.0];

/// Pin contour and base trajectory for one seeded pin trial.
pub fn pin_trial_schedule(
    spec: &WhiskerSpec,
    design: &PinTrialDesign,
    seed: u64,
) -> (ObjectContour, Vec<(f64, Pose2)>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let side = if design.both_sides && rng.random::<bool>() { -1.0 } else { 1.0 };
    let draw = |rng: &mut ChaCha8Rng| {
        let s = rng.random_range(design.arc_range[0]..=design.arc_range[1]);
        let dmax = design.offset_range[1].min(design.offset_slope * s).max(design.offset_range[0]);
        let d = rng.random_range(design.offset_range[0]..=dmax);
        let th = rng.random_range(-design.heading_range..=design.heading_range);
        [s, side * d, th]
    };
    let first = draw(&mut rng);
    // keyframes in (s, d, theta)
    let mut keys = vec![(0.0, [first[0], 0.0, first[2]])];
    keys.push((design.lead_in, keys[0].1));
    let mut t = design.lead_in + design.approach;
    keys.push((t, first));
    while t < design.duration {
        t += design.interval;
        keys.push((t, draw(&mut rng)));
    }
    let pin = V2::new(PIN_POSITION[0], PIN_POSITION[1]);
    let n = (design.duration * NOMINAL_RATE_HZ).round() as usize;
    let mut k = 0;
    let traj = (0..n)
        .map(|i| {
            let t = i as f64 / NOMINAL_RATE_HZ;
            while k + 2 < keys.len() && keys[k + 1].0 <= t {
                k += 1;
            }
            let (ta, a) = keys[k];
            let (tb, b) = keys[k + 1];
            let u = ((t - ta) / (tb - ta)).clamp(0.0, 1.0);
            let v: [f64; 3] = std::array::from_fn(|j| a[j] + u * (b[j] - a[j]));
            let q = body_point(spec, v[0], v[1]);
            let rot = Pose2::new(0.0, 0.0, v[2]).rotation();
            let b = pin - rot * q;
            (t, Pose2::new(b.x, b.y, v[2]))
        })
        .collect();
    (ObjectContour::pin(pin), traj)
}

/// The four traced objects, placed below the whisker with their tops at
/// [`SweepDesign::depth`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectPreset {
    Cylinder30,
    Cylinder100,
    Octagon,
    Rectangle,
}

impl ObjectPreset {
    pub const ALL: [ObjectPreset; 4] = [
        ObjectPreset::Cylinder30,
        ObjectPreset::Cylinder100,
        ObjectPreset::Octagon,
        ObjectPreset::Rectangle,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ObjectPreset::Cylinder30 => "cylinder30",
            ObjectPreset::Cylinder100 => "cylinder100",
            ObjectPreset::Octagon => "octagon",
            ObjectPreset::Rectangle => "rectangle",
        }
    }

    /// Deepest the object is placed into the whisker. The wide cylinder's
    /// footprint on the whisker axis is a chord of half-width √(2·R·depth);
    /// beyond 2 mm it reaches the base at the default sweep's inner extreme.
    pub fn max_depth(self) -> f64 {
        match self {
            ObjectPreset::Cylinder100 => 0.002,
            _ => f64::INFINITY,
        }
    }

    /// World-frame contour with its top edge at height `top` (capped at
    /// [`max_depth`](Self::max_depth)) and its leading feature (top point or
    /// top-left vertex) at x = `x0`.
    pub fn contour(self, top: f64, x0: f64) -> ObjectContour {
        let top = top.min(self.max_depth());
        match self {
            ObjectPreset::Cylinder30 => ObjectContour::circle(V2::new(x0, top - 0.015), 0.015),
            ObjectPreset::Cylinder100 => ObjectContour::circle(V2::new(x0, top - 0.05), 0.05),
            ObjectPreset::Octagon => {
                let side = 0.0124;
                let r = side / (2.0 * (std::f64::consts::PI / 8.0).sin());
                let a = std::f64::consts::PI / 8.0;
                let center = V2::new(x0 + 0.5 * side, top - r * (3.0 * a).sin());
                ObjectContour::regular_polygon(center, 8, side, a)
            }
            ObjectPreset::Rectangle => ObjectContour::rectangle(V2::new(x0 + 0.015, top - 0.02), 0.03, 0.04, 0.0),
        }
    }
}

/// Lateral back-and-forth sweep over an object below the whisker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepDesign {
    /// Height of the object's top above the final base axis (m).
    pub depth: f64,
    /// Distance along the whisker axis from the base's sweep centre to the
    /// object's leading feature (m).
    pub standoff: f64,
    /// Gap between whisker and object before the descent (m).
    pub clearance: f64,
    pub descent: f64,
    /// Sweep half-width along the whisker axis (m).
    pub amplitude: f64,
    /// Duration of one 0 → +A → 0 → −A → 0 cycle (s).
    pub cycle: f64,
    pub cycles: usize,
}

impl Default for SweepDesign {
    fn default() -> Self {
        Self {
            depth: 0.004,
            standoff: 0.03,
            clearance: 0.003,
            descent: 0.5,
            amplitude: 0.012,
            cycle: 4.0,
            cycles: 3,
        }
    }
}

impl SweepDesign {
    pub fn waypoints(&self) -> Vec<Waypoint> {
        let wp = |t, x, y| Waypoint { t, x, y, theta: 0.0 };
        let mut w = vec![wp(0.0, 0.0, self.depth + self.clearance), wp(self.descent, 0.0, 0.0)];
        let a = self.amplitude;
        for c in 0..self.cycles {
            let t0 = self.descent + c as f64 * self.cycle;
            for (k, x) in [a, 0.0, -a, 0.0].into_iter().enumerate() {
                w.push(wp(t0 + 0.25 * (k + 1) as f64 * self.cycle, x, 0.0));
            }
        }
        w
    }

    pub fn trajectory(&self) -> Vec<(f64, Pose2)> {
        resample(&self.waypoints(), NOMINAL_RATE_HZ)
    }
}

/// Contact-point grid for synthetic calibration, in base-frame coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationGrid {
    /// Straight whiskers: radial range (m) and step.
    pub radius: [f64; 3],
    /// Straight whiskers: polar angle range (rad) and step.
    pub angle: [f64; 3],
    /// Curved whiskers: arc angle along the rest shape (rad) and step.
    pub arc_angle: [f64; 3],
    /// Curved whiskers: inward offset (m) and step.
    pub offset: [f64; 3],
}

impl Default for CalibrationGrid {
    fn default() -> Self {
        let deg = std::f64::consts::PI / 180.0;
        Self {
            radius: [0.008, 0.052, 0.002],
            angle: [0.5 * deg, 17.0 * deg, 0.5 * deg],
            arc_angle: [0.25, 2.6, 0.1],
            offset: [0.0005, 0.006, 0.0005],
        }
    }
}

fn steps(r: [f64; 3]) -> Vec<f64> {
    let n = ((r[1] - r[0]) / r[2] + 1e-9).floor() as usize;
    (0..=n).map(|k| r[0] + k as f64 * r[2]).collect()
}

impl CalibrationGrid {
    /// Pin positions per side: left/right for straight whiskers, a single
    /// set inside the arc for curved ones.
    pub fn points(&self, spec: &WhiskerSpec) -> Vec<(Side, Vec<V2>)> {
        if spec.is_straight() {
            let mut left = Vec::new();
            for &r in &steps(self.radius) {
                for &a in &steps(self.angle) {
                    left.push(V2::new(r * a.cos(), r * a.sin()));
                }
            }
            let right = left.iter().map(|p| V2::new(p.x, -p.y)).collect();
            vec![(Side::Left, left), (Side::Right, right)]
        } else {
            let radius = spec.arc_radius;
            let mut pts = Vec::new();
            for &a in &steps(self.arc_angle) {
                for &d in &steps(self.offset) {
                    let s = a * radius;
                    if s < spec.arc_length {
                        pts.push(body_point(spec, s, d));
                    }
                }
            }
            vec![(Side::Single, pts)]
        }
    }
}

/// Static pin presses over `grid`, one fresh solve per point. Points the
/// whisker cannot hold a single side contact at (slides off the tip, no
/// admissible contact) are skipped.
pub fn synthesize_calibration(
    spec: &WhiskerSpec,
    solver: SolverConfig,
    grid: &CalibrationGrid,
    noise: &NoiseSpec,
    seed: u64,
) -> Result<Vec<CalibrationSet>, ExperimentError> {
    let mut oracle = EquilibriumSolver::new(*spec, solver).map_err(|source| ExperimentError::Oracle { trial: 0, source })?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sets = Vec::new();
    let mut index = 0usize;
    for (side, points) in grid.points(spec) {
        let mut samples = Vec::with_capacity(points.len());
        for p in points {
            oracle.reset();
            let eq = match oracle.solve(Pose2::default(), &ObjectContour::pin(p)) {
                Ok(eq) => eq,
                Err(OracleError::TipContact | OracleError::NoValidContact) => continue,
                Err(source) => return Err(ExperimentError::Oracle { trial: 0, source }),
            };
            if !eq.in_contact {
                continue;
            }
            let signal = noise.gain * eq.moment + noise.std * gaussian(&mut rng);
            samples.push(CalibrationSample {
                t: index as f64 / NOMINAL_RATE_HZ,
                position: eq.contact,
                signal,
            });
            index += 1;
        }
        sets.push(CalibrationSet { samples, side });
    }
    Ok(sets)
}
