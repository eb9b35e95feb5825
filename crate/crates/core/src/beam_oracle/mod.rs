//! Quasi-static whisker mechanics.
//!
//! The whisker is an inextensible elastic rod clamped to a torsional base
//! spring. Given an obstacle pose in the base frame, [`EquilibriumSolver`]
//! finds the frictionless single-contact equilibrium and reports the contact
//! point, the base moment and the deformed shape. It is the ground-truth
//! generator for synthetic experiments and calibration data.

mod contour;
mod rod;
mod solver;

pub use contour::ObjectContour;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::{ContactState, Pose2};
use contour::cross;
use rod::{perp, Discretization};
use solver::{newton, Feature, NewtonSettings, Solved, Unknowns};

type V2 = Vector2<f64>;

/// Rest-shape penetrations shallower than this are treated as no contact (m).
const GRAZE_DEPTH: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error("invalid whisker spec: {0}")]
    InvalidSpec(String),
    #[error("invalid contour: {0}")]
    InvalidContour(String),
    #[error("outside model domain: {0}")]
    Domain(String),
    #[error("equilibrium solve did not converge (scaled residual {residual:e})")]
    Convergence { residual: f64 },
    #[error("obstacle touches the whisker at more than one point")]
    MultipleContacts,
    #[error("contact reached the whisker tip; tip contacts are not modeled")]
    TipContact,
    #[error("no admissible contact feature found")]
    NoValidContact,
    #[error("timestamps must be strictly increasing (sample {index})")]
    NonIncreasingTime { index: usize },
    #[error("sample {index}: {source}")]
    Sample {
        index: usize,
        #[source]
        source: Box<OracleError>,
    },
}

/// Whisker geometry and stiffness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WhiskerSpec {
    /// Wire diameter (m).
    pub diameter: f64,
    /// Arc length (m).
    pub arc_length: f64,
    /// Rest curvature radius (m); infinite for a straight whisker.
    pub arc_radius: f64,
    /// Young's modulus (Pa).
    pub elastic_modulus: f64,
    /// Torsional stiffness of the compliant base (N·m/rad); infinite clamps it.
    pub base_stiffness: f64,
}

impl WhiskerSpec {
    /// 0.2 mm × 55 mm straight nitinol wire on a 0.17 mN·m/rad base.
    pub fn straight_nitinol() -> Self {
        Self {
            diameter: 0.2e-3,
            arc_length: 0.055,
            arc_radius: f64::INFINITY,
            elastic_modulus: 75e9,
            base_stiffness: 0.17e-3,
        }
    }

    /// 0.2 mm nitinol wire bent to a 20 mm radius, 60 mm arc length.
    pub fn curved_nitinol() -> Self {
        Self {
            arc_length: 0.060,
            arc_radius: 0.020,
            ..Self::straight_nitinol()
        }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        let bad = |m: &str| Err(OracleError::InvalidSpec(m.to_string()));
        if !(self.diameter > 0.0 && self.diameter.is_finite()) {
            return bad("diameter must be positive");
        }
        if !(self.arc_length > 0.0 && self.arc_length.is_finite()) {
            return bad("arc length must be positive");
        }
        if !(self.arc_radius > self.diameter) {
            return bad("arc radius must exceed the wire diameter");
        }
        if !(self.elastic_modulus > 0.0 && self.elastic_modulus.is_finite()) {
            return bad("elastic modulus must be positive");
        }
        if !(self.base_stiffness > 0.0) {
            return bad("base stiffness must be positive");
        }
        Ok(())
    }

    pub fn is_straight(&self) -> bool {
        self.arc_radius.is_infinite()
    }

    pub fn second_moment_of_area(&self) -> f64 {
        std::f64::consts::PI * self.diameter.powi(4) / 64.0
    }

    /// EI (N·m²).
    pub fn bending_stiffness(&self) -> f64 {
        self.elastic_modulus * self.second_moment_of_area()
    }

    pub fn rest_curvature(&self) -> f64 {
        if self.is_straight() {
            0.0
        } else {
            1.0 / self.arc_radius
        }
    }

    /// Radius of the reachable workspace disc around the base.
    pub fn workspace_radius(&self) -> f64 {
        1.2 * self.arc_length
    }

    pub fn rest_point(&self, s: f64) -> V2 {
        if self.is_straight() {
            V2::new(s, 0.0)
        } else {
            let r = self.arc_radius;
            let th = s / r;
            V2::new(r * th.sin(), r * (1.0 - th.cos()))
        }
    }

    pub fn rest_tangent(&self, s: f64) -> V2 {
        let th = s * self.rest_curvature();
        V2::new(th.cos(), th.sin())
    }

    /// Arc position of the closest rest-shape point (on the infinite
    /// extension of the rest curve) and the signed lateral offset of `p`
    /// along the left normal.
    pub fn closest_rest_point(&self, p: V2) -> (f64, f64) {
        if self.is_straight() {
            (p.x, p.y)
        } else {
            let r = self.arc_radius;
            let th = p.x.atan2(r - p.y);
            (r * th, r - (p - V2::new(0.0, r)).norm())
        }
    }
}

/// Solver discretization and tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub segments: usize,
    pub max_iterations: usize,
    /// Convergence threshold on the scaled residual.
    pub tolerance: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            segments: 100,
            max_iterations: 60,
            tolerance: 1e-11,
        }
    }
}

/// Deformed whisker shape in the base frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RodState {
    pub nodes: Vec<[f64; 2]>,
    /// Tangent angle at each node (rad).
    pub angles: Vec<f64>,
    /// Arc length between consecutive nodes (m).
    pub arc_spacing: f64,
}

impl RodState {
    /// Chord length expected between nodes `e` and `e + 1` for an element of
    /// constant curvature and arc length `arc_spacing`.
    pub fn expected_chord(&self, e: usize) -> f64 {
        let half = 0.5 * (self.angles[e + 1] - self.angles[e]);
        if half.abs() < 1e-8 {
            self.arc_spacing * (1.0 - half * half / 6.0)
        } else {
            self.arc_spacing * half.sin() / half
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub in_contact: bool,
    /// Contact point in the base frame; NaN when out of contact.
    pub contact: ContactState,
    /// Base moment (N·m), positive counter-clockwise.
    pub moment: f64,
    pub rod: RodState,
    /// Contact force on the whisker in the base frame (N).
    pub force: [f64; 2],
    /// Arc position of the contact (m); NaN when out of contact.
    pub contact_arc: f64,
    /// Largest joint torque imbalance at the solution (N·m).
    pub max_joint_residual: f64,
}

/// Closed-form small-deflection moment for a clamped straight cantilever with
/// a point load at arc position `contact_arc_pos` deflecting it laterally by
/// `lateral_deflection`: `M = 3EI·d/a²`.
pub fn analytic_pin_moment(
    spec: &WhiskerSpec,
    contact_arc_pos: f64,
    lateral_deflection: f64,
) -> Result<f64, OracleError> {
    spec.validate()?;
    if !spec.is_straight() {
        return Err(OracleError::Domain(
            "closed-form cantilever needs a straight whisker".into(),
        ));
    }
    let a = contact_arc_pos;
    if !(a > 0.0 && a <= spec.arc_length) {
        return Err(OracleError::Domain(format!(
            "contact at {a} m is outside the whisker (0, {}]",
            spec.arc_length
        )));
    }
    if lateral_deflection.abs() > 0.1 * a {
        return Err(OracleError::Domain(format!(
            "deflection {lateral_deflection} m exceeds the small-deflection regime"
        )));
    }
    Ok(3.0 * spec.bending_stiffness() * lateral_deflection / (a * a))
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum FeatureId {
    Pin,
    Circle,
    Vertex(usize),
    Edge(usize),
}

#[derive(Debug, Clone)]
struct Warm {
    u: Unknowns,
    feature: FeatureId,
    /// Side of the whisker the obstacle touches from: +1 left, -1 right.
    side: f64,
}

/// Equilibrium solver with warm-start state carried between calls.
#[derive(Debug, Clone)]
pub struct EquilibriumSolver {
    spec: WhiskerSpec,
    config: SolverConfig,
    disc: Discretization,
    warm: Option<Warm>,
}

struct Candidate {
    feature: Feature,
    id: FeatureId,
    init: Unknowns,
    /// Offset that moves the feature to touch the rest shape, for continuation.
    retreat: V2,
}

enum Attempt {
    Accepted(Equilibrium, Warm),
    Rejected(OracleError),
}

impl EquilibriumSolver {
    pub fn new(spec: WhiskerSpec, config: SolverConfig) -> Result<Self, OracleError> {
        spec.validate()?;
        if config.segments < 2 {
            return Err(OracleError::InvalidSpec("need at least 2 segments".into()));
        }
        let disc = Discretization::new(
            spec.arc_length,
            config.segments,
            spec.rest_curvature(),
            spec.bending_stiffness(),
            spec.base_stiffness,
        );
        Ok(Self {
            spec,
            config,
            disc,
            warm: None,
        })
    }

    pub fn spec(&self) -> &WhiskerSpec {
        &self.spec
    }

    /// Drops the warm-start state.
    pub fn reset(&mut self) {
        self.warm = None;
    }

    fn settings(&self) -> NewtonSettings {
        NewtonSettings {
            max_iterations: self.config.max_iterations,
            tolerance: self.config.tolerance,
        }
    }

    fn rod_state(&self, psi: &[f64]) -> RodState {
        RodState {
            nodes: self.disc.nodes(psi).iter().map(|p| [p.x, p.y]).collect(),
            angles: psi.to_vec(),
            arc_spacing: self.disc.h,
        }
    }

    fn free(&mut self) -> Equilibrium {
        self.warm = None;
        let psi = self.disc.rest_angles();
        Equilibrium {
            in_contact: false,
            contact: ContactState::NAN,
            moment: 0.0,
            rod: self.rod_state(&psi),
            force: [0.0, 0.0],
            contact_arc: f64::NAN,
            max_joint_residual: 0.0,
        }
    }

    fn cold(&self, s: f64, beta: f64) -> Unknowns {
        Unknowns {
            psi: self.disc.rest_angles(),
            s: s.clamp(0.0, self.spec.arc_length),
            force: V2::zeros(),
            beta,
        }
    }

    /// Solves for the equilibrium with `contour` (world frame) when the base
    /// sits at `base`.
    pub fn solve(&mut self, base: Pose2, contour: &ObjectContour) -> Result<Equilibrium, OracleError> {
        contour.validate()?;
        match contour.to_body(&base) {
            ObjectContour::Pin { position } => self.solve_pin(V2::new(position[0], position[1])),
            body @ ObjectContour::Circle { .. } => self.solve_circle(&body),
            body @ ObjectContour::Polygon { .. } => self.solve_polygon(&body),
        }
    }

    fn run(&self, cand: &Candidate, warm_start: bool) -> Result<Solved, OracleError> {
        let settings = self.settings();
        if let Ok(s) = newton(&self.disc, &cand.feature, cand.init.clone(), settings) {
            return Ok(s);
        }
        // continuation: bring the feature in from where it just touches the rest shape
        let mut u = if warm_start {
            self.cold(cand.init.s, cand.init.beta)
        } else {
            cand.init.clone()
        };
        let steps = 16;
        let mut last_res = f64::INFINITY;
        for k in 0..=steps {
            let lambda = k as f64 / steps as f64;
            let f = translate(&cand.feature, cand.retreat * (1.0 - lambda));
            match newton(&self.disc, &f, u.clone(), settings) {
                Ok(s) => {
                    if k == steps {
                        return Ok(s);
                    }
                    u = s.u;
                }
                Err(r) => {
                    last_res = r;
                    break;
                }
            }
        }
        Err(OracleError::Convergence { residual: last_res })
    }

    fn finish(&self, solved: Solved, id: FeatureId, side: f64) -> (Equilibrium, Warm) {
        let (r, _) = self.disc.point_at(&solved.u.psi, solved.u.s);
        let f = solved.u.force;
        let eq = Equilibrium {
            in_contact: true,
            contact: ContactState::new(r.x, r.y),
            moment: cross(r, f),
            rod: self.rod_state(&solved.u.psi),
            force: [f.x, f.y],
            contact_arc: solved.u.s,
            max_joint_residual: solved.max_torque_residual,
        };
        let warm = Warm {
            u: solved.u,
            feature: id,
            side,
        };
        (eq, warm)
    }

    fn solve_pin(&mut self, p: V2) -> Result<Equilibrium, OracleError> {
        let (s_proj, d) = self.spec.closest_rest_point(p);
        let l = self.spec.arc_length;
        let warm = self.warm.take().filter(|w| w.feature == FeatureId::Pin);
        let side = match &warm {
            Some(w) => w.side,
            None => {
                // a fresh pin is taken to have pushed in from the opposite side
                if d.abs() < 1e-12 || d.abs() > 0.5 * p.norm() {
                    return Ok(self.free());
                }
                -d.signum()
            }
        };
        if !(s_proj > 0.0 && s_proj < l) || d * side >= 0.0 {
            return Ok(self.free());
        }
        let from_warm = warm.is_some();
        let init = match warm {
            Some(w) => w.u,
            None => self.cold(s_proj, 0.0),
        };
        let cand = Candidate {
            feature: Feature::Point(p),
            id: FeatureId::Pin,
            init,
            retreat: self.spec.rest_point(s_proj) - p,
        };
        let solved = self.run(&cand, from_warm)?;
        let s = solved.u.s;
        let (_, t) = self.disc.point_at(&solved.u.psi, s);
        let pushes = -side * solved.u.force.dot(&perp(t)) >= 0.0;
        if !(0.0..l).contains(&s) || !pushes {
            // slid off the tip or would need to pull
            return Ok(self.free());
        }
        let (eq, w) = self.finish(solved, FeatureId::Pin, side);
        self.warm = Some(w);
        Ok(eq)
    }

    /// Deepest rest node relative to `body` and whether the rest shape
    /// penetrates it at all.
    fn rest_penetration(&self, body: &ObjectContour) -> Option<(f64, V2)> {
        let psi = self.disc.rest_angles();
        let nodes = self.disc.nodes(&psi);
        let penetrates = nodes
            .windows(2)
            .any(|w| body.penetration_length(w[0], w[1], 0.0) > 0.0);
        if !penetrates {
            return None;
        }
        // deepest point, refined on a fine grid of arc positions
        let samples = self.disc.n * 8;
        let mut best = (f64::INFINITY, 0.0, V2::zeros());
        for k in 0..=samples {
            let s = self.spec.arc_length * k as f64 / samples as f64;
            let r = self.spec.rest_point(s);
            let sd = body.signed_distance(r);
            if sd < best.0 {
                best = (sd, s, r);
            }
        }
        // grazing contact carries no load; treat as free
        if -best.0 < GRAZE_DEPTH {
            return None;
        }
        Some((best.1, best.2))
    }

    fn side_of(&self, s: f64, point: V2) -> f64 {
        let r = self.spec.rest_point(s);
        let t = self.spec.rest_tangent(s);
        let c = cross(t, point - r);
        if c >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Checks that no rod node or chord away from the contact penetrates the body.
    fn penetrates_elsewhere(&self, body: &ObjectContour, psi: &[f64], s: f64) -> bool {
        let nodes = self.disc.nodes(psi);
        let (m, _) = self.disc.locate(s);
        let tol = 1e-7;
        for (i, n) in nodes.iter().enumerate() {
            if i + 1 >= m && i <= m + 2 {
                continue;
            }
            if body.signed_distance(*n) < -tol {
                return true;
            }
        }
        if matches!(body, ObjectContour::Polygon { .. }) {
            for (e, w) in nodes.windows(2).enumerate() {
                if e + 1 >= m && e <= m + 1 {
                    continue;
                }
                if body.penetration_length(w[0], w[1], tol) > 1e-9 {
                    return true;
                }
            }
        }
        false
    }

    fn solve_circle(&mut self, body: &ObjectContour) -> Result<Equilibrium, OracleError> {
        let (center, radius) = match body {
            ObjectContour::Circle { center, radius } => (V2::new(center[0], center[1]), *radius),
            _ => unreachable!(),
        };
        let warm = self.warm.take().filter(|w| w.feature == FeatureId::Circle);
        let Some((s_deep, r_deep)) = self.rest_penetration(body) else {
            return Ok(self.free());
        };
        let dir = {
            let d = r_deep - center;
            if d.norm() > 0.0 {
                d / d.norm()
            } else {
                -perp(self.spec.rest_tangent(s_deep)) * self.side_of(s_deep, center)
            }
        };
        let depth = radius - (r_deep - center).norm();
        let side = warm
            .as_ref()
            .map(|w| w.side)
            .unwrap_or_else(|| self.side_of(s_deep, center));
        let from_warm = warm.is_some();
        let init = match warm {
            Some(w) => w.u,
            None => self.cold(s_deep, dir.y.atan2(dir.x)),
        };
        let cand = Candidate {
            feature: Feature::Circle { center, radius },
            id: FeatureId::Circle,
            init,
            retreat: -dir * depth,
        };
        let solved = self.run(&cand, from_warm)?;
        let s = solved.u.s;
        if s >= self.spec.arc_length {
            return Err(OracleError::TipContact);
        }
        if s <= 0.0 {
            return Err(OracleError::NoValidContact);
        }
        let (r, _) = self.disc.point_at(&solved.u.psi, s);
        if solved.u.force.dot(&(r - center)) < 0.0 {
            return Err(OracleError::NoValidContact);
        }
        if self.penetrates_elsewhere(body, &solved.u.psi, s) {
            return Err(OracleError::MultipleContacts);
        }
        let (eq, w) = self.finish(solved, FeatureId::Circle, side);
        self.warm = Some(w);
        Ok(eq)
    }

    fn polygon_candidate(&self, verts: &[V2], id: FeatureId, warm: Option<&Warm>) -> Candidate {
        let nv = verts.len();
        match id {
            FeatureId::Vertex(i) => {
                let p = verts[i];
                let (s, _) = self.spec.closest_rest_point(p);
                let init = match warm {
                    Some(w) => Unknowns {
                        beta: 0.0,
                        ..w.u.clone()
                    },
                    None => self.cold(s, 0.0),
                };
                let s_c = s.clamp(0.0, self.spec.arc_length);
                Candidate {
                    feature: Feature::Point(p),
                    id,
                    init,
                    retreat: self.spec.rest_point(s_c) - p,
                }
            }
            FeatureId::Edge(i) => {
                let a = verts[i];
                let b = verts[(i + 1) % nv];
                let e = b - a;
                let outward = V2::new(e.y, -e.x) / e.norm();
                // deepest rest point under this edge's supporting line
                let samples = self.disc.n * 4;
                let mut best = (f64::INFINITY, 0.0, V2::zeros());
                for k in 0..=samples {
                    let s = self.spec.arc_length * k as f64 / samples as f64;
                    let r = self.spec.rest_point(s);
                    let sd = outward.dot(&(r - a));
                    if sd < best.0 {
                        best = (sd, s, r);
                    }
                }
                let beta = ((best.2 - a).dot(&e) / e.norm_squared()).clamp(0.0, 1.0);
                let init = match warm {
                    Some(w) => {
                        let mut u = w.u.clone();
                        if w.feature != id {
                            let (r, _) = self.disc.point_at(&u.psi, u.s);
                            u.beta = ((r - a).dot(&e) / e.norm_squared()).clamp(0.0, 1.0);
                        }
                        u
                    }
                    None => self.cold(best.1, beta),
                };
                Candidate {
                    feature: Feature::Segment { a, b },
                    id,
                    init,
                    retreat: outward * best.0.min(0.0),
                }
            }
            _ => unreachable!(),
        }
    }

    fn validate_polygon(
        &self,
        body: &ObjectContour,
        verts: &[V2],
        cand: &Candidate,
        solved: Solved,
        side: f64,
    ) -> Attempt {
        let nv = verts.len();
        let u = &solved.u;
        let l = self.spec.arc_length;
        if u.s >= l {
            return Attempt::Rejected(OracleError::TipContact);
        }
        if u.s <= 0.0 {
            return Attempt::Rejected(OracleError::NoValidContact);
        }
        let f = u.force;
        let fnorm = f.norm();
        if fnorm == 0.0 {
            return Attempt::Rejected(OracleError::NoValidContact);
        }
        let outward = |k: usize| {
            let e = verts[(k + 1) % nv] - verts[k];
            V2::new(e.y, -e.x) / e.norm()
        };
        let admissible = match cand.id {
            FeatureId::Vertex(i) => {
                // F must lie in the cone spanned by the adjacent edge normals
                let n_prev = outward((i + nv - 1) % nv);
                let n_next = outward(i);
                let det = cross(n_prev, n_next);
                let a = cross(f, n_next) / det;
                let b = cross(n_prev, f) / det;
                a >= -1e-9 * fnorm && b >= -1e-9 * fnorm
            }
            FeatureId::Edge(i) => {
                (-1e-12..=1.0 + 1e-12).contains(&u.beta) && f.dot(&outward(i)) > 0.0
            }
            _ => unreachable!(),
        };
        if !admissible {
            return Attempt::Rejected(OracleError::NoValidContact);
        }
        if self.penetrates_elsewhere(body, &u.psi, u.s) {
            return Attempt::Rejected(OracleError::MultipleContacts);
        }
        let (eq, w) = self.finish(solved, cand.id, side);
        Attempt::Accepted(eq, w)
    }

    fn solve_polygon(&mut self, body: &ObjectContour) -> Result<Equilibrium, OracleError> {
        let verts = body.polygon_vertices();
        let nv = verts.len();
        let warm = self
            .warm
            .take()
            .filter(|w| matches!(w.feature, FeatureId::Vertex(_) | FeatureId::Edge(_)));
        let Some((s_deep, r_deep)) = self.rest_penetration(body) else {
            return Ok(self.free());
        };
        let side = warm
            .as_ref()
            .map(|w| w.side)
            .unwrap_or_else(|| self.side_of(s_deep, body.centroid()));

        let mut order: Vec<FeatureId> = Vec::with_capacity(2 * nv);
        let push = |id: FeatureId, order: &mut Vec<FeatureId>| {
            if !order.contains(&id) {
                order.push(id);
            }
        };
        if let Some(w) = &warm {
            push(w.feature, &mut order);
            match w.feature {
                FeatureId::Vertex(i) => {
                    push(FeatureId::Edge((i + nv - 1) % nv), &mut order);
                    push(FeatureId::Edge(i), &mut order);
                }
                FeatureId::Edge(i) => {
                    push(FeatureId::Vertex(i), &mut order);
                    push(FeatureId::Vertex((i + 1) % nv), &mut order);
                }
                _ => {}
            }
        }
        let mut by_distance: Vec<(f64, FeatureId)> = Vec::with_capacity(2 * nv);
        for i in 0..nv {
            by_distance.push(((verts[i] - r_deep).norm(), FeatureId::Vertex(i)));
            let mid = 0.5 * (verts[i] + verts[(i + 1) % nv]);
            by_distance.push(((mid - r_deep).norm(), FeatureId::Edge(i)));
        }
        by_distance.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (_, id) in by_distance {
            push(id, &mut order);
        }

        let mut first_error: Option<OracleError> = None;
        for id in order {
            let warm_ref = warm.as_ref();
            let cand = self.polygon_candidate(&verts, id, warm_ref);
            let solved = match self.run(&cand, warm_ref.is_some()) {
                Ok(s) => s,
                Err(e) => {
                    first_error.get_or_insert(e);
                    continue;
                }
            };
            match self.validate_polygon(body, &verts, &cand, solved, side) {
                Attempt::Accepted(eq, w) => {
                    self.warm = Some(w);
                    return Ok(eq);
                }
                Attempt::Rejected(e) => {
                    let replace = matches!(
                        first_error,
                        None | Some(OracleError::NoValidContact) | Some(OracleError::Convergence { .. })
                    ) && !matches!(e, OracleError::NoValidContact);
                    if replace || first_error.is_none() {
                        first_error = Some(e);
                    }
                }
            }
        }
        Err(first_error.unwrap_or(OracleError::NoValidContact))
    }
}

fn translate(f: &Feature, offset: V2) -> Feature {
    match *f {
        Feature::Point(p) => Feature::Point(p + offset),
        Feature::Circle { center, radius } => Feature::Circle {
            center: center + offset,
            radius,
        },
        Feature::Segment { a, b } => Feature::Segment {
            a: a + offset,
            b: b + offset,
        },
    }
}

/// One-shot equilibrium with default discretization and no history.
pub fn solve_equilibrium(
    spec: &WhiskerSpec,
    base: Pose2,
    contour: &ObjectContour,
) -> Result<Equilibrium, OracleError> {
    EquilibriumSolver::new(*spec, SolverConfig::default())?.solve(base, contour)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSample {
    pub t: f64,
    /// NaN when out of contact.
    pub contact: ContactState,
    pub moment: f64,
    pub in_contact: bool,
}

/// Per-sample equilibrium along a base trajectory, warm-starting each solve
/// from the previous one.
pub fn sweep_trajectory(
    spec: &WhiskerSpec,
    base_trajectory: &[(f64, Pose2)],
    contour: &ObjectContour,
) -> Result<Vec<SweepSample>, OracleError> {
    sweep_trajectory_with(spec, SolverConfig::default(), base_trajectory, contour)
}

pub fn sweep_trajectory_with(
    spec: &WhiskerSpec,
    config: SolverConfig,
    base_trajectory: &[(f64, Pose2)],
    contour: &ObjectContour,
) -> Result<Vec<SweepSample>, OracleError> {
    for (i, w) in base_trajectory.windows(2).enumerate() {
        if !(w[1].0 > w[0].0) {
            return Err(OracleError::NonIncreasingTime { index: i + 1 });
        }
    }
    let mut solver = EquilibriumSolver::new(*spec, config)?;
    contour.validate()?;
    base_trajectory
        .iter()
        .enumerate()
        .map(|(index, &(t, pose))| {
            let eq = solver.solve(pose, contour).map_err(|e| OracleError::Sample {
                index,
                source: Box::new(e),
            })?;
            Ok(SweepSample {
                t,
                contact: eq.contact,
                moment: eq.moment,
                in_contact: eq.in_contact,
            })
        })
        .collect()
}
