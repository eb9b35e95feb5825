//! Planar rigid-body kinematics and the contact-point process model.
//!
//! The tracked quantity is the position of a world-fixed contact point
//! expressed in the moving whisker base frame `{B}`. When the base moves with
//! body twist `(v, ω)`, a point that is static in the world frame moves in
//! `{B}` with velocity `-(v + ω × p)`.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KinematicsError {
    #[error("time step must be positive and finite, got {0}")]
    InvalidTimeStep(f64),
}

/// Wraps an angle into `(-π, π]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let mut a = theta % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Pose of the base frame in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose2 {
    pub x: f64,
    pub y: f64,
    /// Heading in radians, kept in `(-π, π]` by [`Pose2::new`].
    pub theta: f64,
}

impl Pose2 {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: wrap_angle(theta),
        }
    }

    pub fn translation(&self) -> Vector2<f64> {
        Vector2::new(self.x, self.y)
    }

    pub fn rotation(&self) -> Matrix2<f64> {
        let (s, c) = self.theta.sin_cos();
        Matrix2::new(c, -s, s, c)
    }

    /// Maps a world-frame point into this frame.
    pub fn to_body(&self, world: Vector2<f64>) -> Vector2<f64> {
        self.rotation().transpose() * (world - self.translation())
    }

    /// Maps a body-frame point into the world frame.
    pub fn to_world(&self, body: Vector2<f64>) -> Vector2<f64> {
        self.rotation() * body + self.translation()
    }
}

/// Planar body twist of `{B}` relative to the world, expressed in `{B}`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BodyTwist {
    pub vx: f64,
    pub vy: f64,
    pub omega: f64,
}

impl BodyTwist {
    pub const ZERO: BodyTwist = BodyTwist {
        vx: 0.0,
        vy: 0.0,
        omega: 0.0,
    };

    pub fn new(vx: f64, vy: f64, omega: f64) -> Self {
        Self { vx, vy, omega }
    }

    pub fn linear(&self) -> Vector2<f64> {
        Vector2::new(self.vx, self.vy)
    }

    pub fn is_finite(&self) -> bool {
        self.vx.is_finite() && self.vy.is_finite() && self.omega.is_finite()
    }
}

/// Contact point position relative to the base origin, in `{B}` (meters).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ContactState {
    pub px: f64,
    pub py: f64,
}

impl ContactState {
    pub const NAN: ContactState = ContactState {
        px: f64::NAN,
        py: f64::NAN,
    };

    pub fn new(px: f64, py: f64) -> Self {
        Self { px, py }
    }

    pub fn from_vector(v: Vector2<f64>) -> Self {
        Self { px: v.x, py: v.y }
    }

    pub fn to_vector(self) -> Vector2<f64> {
        Vector2::new(self.px, self.py)
    }

    pub fn norm(&self) -> f64 {
        self.px.hypot(self.py)
    }

    pub fn distance(&self, other: &ContactState) -> f64 {
        (self.px - other.px).hypot(self.py - other.py)
    }

    pub fn is_finite(&self) -> bool {
        self.px.is_finite() && self.py.is_finite()
    }

    /// Clamps the point into the disc of radius `max_norm`. Returns the
    /// clamped point and whether clamping happened.
    pub fn clamp_norm(self, max_norm: f64) -> (Self, bool) {
        let n = self.norm();
        if n > max_norm {
            let k = max_norm / n;
            (Self::new(self.px * k, self.py * k), true)
        } else {
            (self, false)
        }
    }
}

/// Strictly positive sampling interval in seconds.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct TimeStep(f64);

impl TimeStep {
    pub fn new(dt: f64) -> Result<Self, KinematicsError> {
        if dt > 0.0 && dt.is_finite() {
            Ok(Self(dt))
        } else {
            Err(KinematicsError::InvalidTimeStep(dt))
        }
    }

    pub fn seconds(self) -> f64 {
        self.0
    }
}

/// `ω × p` for a scalar planar angular rate.
pub fn planar_cross(omega: f64, p: ContactState) -> Vector2<f64> {
    Vector2::new(-omega * p.py, omega * p.px)
}

/// Velocity in `{B}` of a world-static point currently at `p`.
pub fn contact_velocity_in_body(twist: BodyTwist, p: ContactState) -> Vector2<f64> {
    -(twist.linear() + planar_cross(twist.omega, p))
}

/// One explicit Euler step of the process model (`A = I`).
pub fn propagate(state: ContactState, twist: BodyTwist, dt: TimeStep) -> ContactState {
    let v = contact_velocity_in_body(twist, state);
    ContactState::new(state.px + dt.0 * v.x, state.py + dt.0 * v.y)
}

/// State Jacobian of [`propagate`]: `I + dt·ω·[[0, 1], [-1, 0]]`.
pub fn propagate_jacobian(twist: BodyTwist, dt: TimeStep) -> Matrix2<f64> {
    let k = dt.0 * twist.omega;
    Matrix2::new(1.0, k, -k, 1.0)
}

/// Finite-difference body twist between two consecutive poses.
///
/// The world displacement is rotated into `prev`'s frame; the heading change
/// uses the shortest signed angle.
pub fn twist_from_pose_pair(
    prev: Pose2,
    next: Pose2,
    dt: f64,
) -> Result<BodyTwist, KinematicsError> {
    let dt = TimeStep::new(dt)?.seconds();
    let d = prev.rotation().transpose() * (next.translation() - prev.translation());
    let dtheta = wrap_angle(next.theta - prev.theta);
    Ok(BodyTwist::new(d.x / dt, d.y / dt, dtheta / dt))
}

/// World-frame position of a body-frame contact point.
pub fn world_point(base: Pose2, state: ContactState) -> Vector2<f64> {
    base.to_world(state.to_vector())
}
