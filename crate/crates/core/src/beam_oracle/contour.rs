use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::OracleError;
use crate::kinematics::Pose2;

type V2 = Vector2<f64>;

/// Planar obstacle the whisker can touch. Coordinates are in the frame the
/// contour is expressed in (world frame for user input).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectContour {
    Circle { center: [f64; 2], radius: f64 },
    /// Convex polygon, vertices counter-clockwise.
    Polygon { vertices: Vec<[f64; 2]> },
    Pin { position: [f64; 2] },
}

fn v(p: [f64; 2]) -> V2 {
    V2::new(p[0], p[1])
}

fn arr(p: V2) -> [f64; 2] {
    [p.x, p.y]
}

pub(crate) fn cross(a: V2, b: V2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Distance from `p` to the closed segment `[a, b]`.
pub(crate) fn segment_distance(p: V2, a: V2, b: V2) -> f64 {
    let d = b - a;
    let len2 = d.norm_squared();
    let t = if len2 > 0.0 {
        ((p - a).dot(&d) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p - (a + d * t)).norm()
}

impl ObjectContour {
    pub fn circle(center: V2, radius: f64) -> Self {
        Self::Circle {
            center: arr(center),
            radius,
        }
    }

    pub fn pin(position: V2) -> Self {
        Self::Pin {
            position: arr(position),
        }
    }

    /// Axis-aligned rectangle rotated by `angle` about its center.
    pub fn rectangle(center: V2, width: f64, height: f64, angle: f64) -> Self {
        let (s, c) = angle.sin_cos();
        let hw = width / 2.0;
        let hh = height / 2.0;
        let vertices = [(-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)]
            .iter()
            .map(|&(x, y)| arr(center + V2::new(c * x - s * y, s * x + c * y)))
            .collect();
        Self::Polygon { vertices }
    }

    /// Regular polygon with `sides` edges of length `side`; the first vertex
    /// sits at polar angle `rotation` from the center.
    pub fn regular_polygon(center: V2, sides: usize, side: f64, rotation: f64) -> Self {
        let n = sides.max(3);
        let radius = side / (2.0 * (std::f64::consts::PI / n as f64).sin());
        let vertices = (0..n)
            .map(|k| {
                let a = rotation + 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                arr(center + V2::new(a.cos(), a.sin()) * radius)
            })
            .collect();
        Self::Polygon { vertices }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        match self {
            Self::Circle { center, radius } => {
                if !(radius.is_finite() && *radius > 0.0) || !v(*center).iter().all(|c| c.is_finite())
                {
                    return Err(OracleError::InvalidContour(format!(
                        "circle radius must be positive and finite, got {radius}"
                    )));
                }
            }
            Self::Pin { position } => {
                if !v(*position).iter().all(|c| c.is_finite()) {
                    return Err(OracleError::InvalidContour("pin position not finite".into()));
                }
            }
            Self::Polygon { vertices } => {
                let n = vertices.len();
                if n < 3 {
                    return Err(OracleError::InvalidContour(format!(
                        "polygon needs at least 3 vertices, got {n}"
                    )));
                }
                for k in 0..n {
                    let a = v(vertices[k]);
                    let b = v(vertices[(k + 1) % n]);
                    let c = v(vertices[(k + 2) % n]);
                    if !(a.iter().all(|x| x.is_finite())) {
                        return Err(OracleError::InvalidContour("polygon vertex not finite".into()));
                    }
                    if (b - a).norm() <= 0.0 {
                        return Err(OracleError::InvalidContour("repeated polygon vertex".into()));
                    }
                    if cross(b - a, c - b) <= 0.0 {
                        return Err(OracleError::InvalidContour(
                            "polygon must be convex and counter-clockwise".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// The same contour expressed in the body frame of `base`.
    pub fn to_body(&self, base: &Pose2) -> Self {
        let f = |p: &[f64; 2]| arr(base.to_body(v(*p)));
        match self {
            Self::Circle { center, radius } => Self::Circle {
                center: f(center),
                radius: *radius,
            },
            Self::Pin { position } => Self::Pin {
                position: f(position),
            },
            Self::Polygon { vertices } => Self::Polygon {
                vertices: vertices.iter().map(f).collect(),
            },
        }
    }

    pub(crate) fn polygon_vertices(&self) -> Vec<V2> {
        match self {
            Self::Polygon { vertices } => vertices.iter().map(|p| v(*p)).collect(),
            _ => Vec::new(),
        }
    }

    /// Centroid (circle center, pin position, polygon vertex mean).
    pub fn centroid(&self) -> V2 {
        match self {
            Self::Circle { center, .. } => v(*center),
            Self::Pin { position } => v(*position),
            Self::Polygon { vertices } => {
                vertices.iter().map(|p| v(*p)).sum::<V2>() / vertices.len() as f64
            }
        }
    }

    /// Signed distance to the contour: negative inside. Pins have no
    /// interior, so this is the plain distance.
    pub fn signed_distance(&self, p: V2) -> f64 {
        match self {
            Self::Circle { center, radius } => (p - v(*center)).norm() - radius,
            Self::Pin { position } => (p - v(*position)).norm(),
            Self::Polygon { vertices } => {
                let n = vertices.len();
                let mut inside = true;
                let mut max_plane = f64::NEG_INFINITY;
                let mut min_edge = f64::INFINITY;
                for k in 0..n {
                    let a = v(vertices[k]);
                    let b = v(vertices[(k + 1) % n]);
                    let d = b - a;
                    let outward = V2::new(d.y, -d.x) / d.norm();
                    let plane = outward.dot(&(p - a));
                    if plane > 0.0 {
                        inside = false;
                    }
                    max_plane = max_plane.max(plane);
                    min_edge = min_edge.min(segment_distance(p, a, b));
                }
                if inside {
                    max_plane
                } else {
                    min_edge
                }
            }
        }
    }

    /// Unsigned distance from `p` to the contour boundary.
    pub fn distance_to_boundary(&self, p: V2) -> f64 {
        self.signed_distance(p).abs()
    }

    /// Distance from `p` to the nearest polygon corner, if this is a polygon.
    pub fn nearest_corner_distance(&self, p: V2) -> Option<f64> {
        match self {
            Self::Polygon { vertices } => vertices
                .iter()
                .map(|c| (p - v(*c)).norm())
                .min_by(|a, b| a.total_cmp(b)),
            _ => None,
        }
    }

    /// Points sampled along the boundary, for plotting.
    pub fn outline(&self, samples: usize) -> Vec<V2> {
        match self {
            Self::Circle { center, radius } => (0..=samples)
                .map(|k| {
                    let a = 2.0 * std::f64::consts::PI * k as f64 / samples.max(1) as f64;
                    v(*center) + V2::new(a.cos(), a.sin()) * *radius
                })
                .collect(),
            Self::Pin { position } => vec![v(*position)],
            Self::Polygon { vertices } => {
                let mut pts: Vec<V2> = vertices.iter().map(|p| v(*p)).collect();
                pts.push(v(vertices[0]));
                pts
            }
        }
    }

    /// Length of the portion of segment `[a, b]` lying deeper than `margin`
    /// inside the contour (convex clipping). Zero for circles' exterior and pins.
    pub(crate) fn penetration_length(&self, a: V2, b: V2, margin: f64) -> f64 {
        let d = b - a;
        match self {
            Self::Pin { .. } => 0.0,
            Self::Circle { center, radius } => {
                let r = radius - margin;
                if r <= 0.0 {
                    return 0.0;
                }
                let f = a - v(*center);
                let qa = d.norm_squared();
                if qa == 0.0 {
                    return 0.0;
                }
                let qb = 2.0 * f.dot(&d);
                let qc = f.norm_squared() - r * r;
                let disc = qb * qb - 4.0 * qa * qc;
                if disc <= 0.0 {
                    return 0.0;
                }
                let sq = disc.sqrt();
                let t0 = ((-qb - sq) / (2.0 * qa)).max(0.0);
                let t1 = ((-qb + sq) / (2.0 * qa)).min(1.0);
                ((t1 - t0).max(0.0)) * d.norm()
            }
            Self::Polygon { vertices } => {
                let n = vertices.len();
                let (mut t0, mut t1) = (0.0f64, 1.0f64);
                for k in 0..n {
                    let p0 = v(vertices[k]);
                    let p1 = v(vertices[(k + 1) % n]);
                    let e = p1 - p0;
                    let outward = V2::new(e.y, -e.x) / e.norm();
                    // inside the shrunken polygon: outward·(x - p0) + margin <= 0
                    let num = outward.dot(&(a - p0)) + margin;
                    let den = outward.dot(&d);
                    if den.abs() < 1e-300 {
                        if num > 0.0 {
                            return 0.0;
                        }
                    } else {
                        let t = -num / den;
                        if den > 0.0 {
                            t1 = t1.min(t);
                        } else {
                            t0 = t0.max(t);
                        }
                    }
                    if t0 >= t1 {
                        return 0.0;
                    }
                }
                (t1 - t0) * d.norm()
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn rectangle_is_valid_and_signed_distance_works() {
        let r = ObjectContour::rectangle(V2::new(0.0, 0.0), 0.03, 0.04, 0.0);
        r.validate().unwrap();
        assert_abs_diff_eq!(r.signed_distance(V2::zeros()), -0.015, epsilon = 1e-15);
        assert_abs_diff_eq!(r.signed_distance(V2::new(0.02, 0.0)), 0.005, epsilon = 1e-15);
        assert_abs_diff_eq!(
            r.nearest_corner_distance(V2::new(0.015, 0.021)).unwrap(),
            0.001,
            epsilon = 1e-12
        );
    }

    #[test]
    fn octagon_side_length() {
        let o = ObjectContour::regular_polygon(V2::zeros(), 8, 0.0124, 0.0);
        o.validate().unwrap();
        let vs = o.polygon_vertices();
        assert_abs_diff_eq!((vs[1] - vs[0]).norm(), 0.0124, epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_contours() {
        let cw = ObjectContour::Polygon {
            vertices: vec![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0]],
        };
        assert!(cw.validate().is_err());
        let nonconvex = ObjectContour::Polygon {
            vertices: vec![[0.0, 0.0], [2.0, 0.0], [1.0, 0.2], [2.0, 2.0], [0.0, 2.0]],
        };
        assert!(nonconvex.validate().is_err());
        assert!(ObjectContour::circle(V2::zeros(), 0.0).validate().is_err());
        assert!(ObjectContour::Polygon { vertices: vec![[0.0, 0.0], [1.0, 0.0]] }
            .validate()
            .is_err());
    }

    #[test]
    fn penetration_clipping() {
        let c = ObjectContour::circle(V2::zeros(), 1.0);
        assert_abs_diff_eq!(
            c.penetration_length(V2::new(-2.0, 0.0), V2::new(2.0, 0.0), 0.0),
            2.0,
            epsilon = 1e-12
        );
        assert_eq!(c.penetration_length(V2::new(-2.0, 1.5), V2::new(2.0, 1.5), 0.0), 0.0);
        let r = ObjectContour::rectangle(V2::zeros(), 2.0, 2.0, 0.0);
        assert_abs_diff_eq!(
            r.penetration_length(V2::new(-2.0, 0.5), V2::new(2.0, 0.5), 0.0),
            2.0,
            epsilon = 1e-12
        );
        assert_eq!(r.penetration_length(V2::new(-2.0, 1.5), V2::new(2.0, 1.5), 0.0), 0.0);
    }

    #[test]
    fn body_frame_transform() {
        let c = ObjectContour::circle(V2::new(1.0, 2.0), 0.5);
        let b = c.to_body(&Pose2::new(1.0, 1.0, std::f64::consts::FRAC_PI_2));
        match b {
            ObjectContour::Circle { center, .. } => {
                assert_abs_diff_eq!(center[0], 1.0, epsilon = 1e-12);
                assert_abs_diff_eq!(center[1], 0.0, epsilon = 1e-12);
            }
            _ => unreachable!(),
        }
    }
}
