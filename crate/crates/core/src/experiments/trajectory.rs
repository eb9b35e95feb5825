//! Piecewise-linear SE(2) base trajectories.
//!
//! Text form: `t: x, y, theta` waypoints separated by `;`, times in seconds,
//! positions in meters, heading in radians, e.g.
//! `0: 0, 0, 0; 2.5: 0.01, -0.004, 0.1`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::Pose2;

#[derive(Debug, Error, Clone, PartialEq)]
#[error("trajectory waypoint {index}: {message}")]
pub struct TrajectoryError {
    pub index: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    /// Not wrapped, so a waypoint sequence can spin more than half a turn.
    pub theta: f64,
}

pub fn parse_trajectory(text: &str) -> Result<Vec<Waypoint>, TrajectoryError> {
    let mut out: Vec<Waypoint> = Vec::new();
    for (index, chunk) in text.split(';').enumerate() {
        let chunk = chunk.trim();
        if chunk.is_empty() {
            continue;
        }
        let err = |message: String| TrajectoryError { index, message };
        let (t, rest) = chunk
            .split_once(':')
            .ok_or_else(|| err(format!("expected `t: x, y, theta`, got `{chunk}`")))?;
        let t: f64 = t
            .trim()
            .parse()
            .map_err(|e| err(format!("time `{}`: {e}", t.trim())))?;
        let fields: Vec<&str> = rest.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(err(format!("expected 3 pose fields, found {}", fields.len())));
        }
        let mut v = [0.0; 3];
        for (k, f) in fields.iter().enumerate() {
            v[k] = f.parse().map_err(|e| err(format!("`{f}`: {e}")))?;
        }
        let wp = Waypoint {
            t,
            x: v[0],
            y: v[1],
            theta: v[2],
        };
        if ![wp.t, wp.x, wp.y, wp.theta].iter().all(|c| c.is_finite()) {
            return Err(err("values must be finite".into()));
        }
        if let Some(prev) = out.last() {
            if !(wp.t > prev.t) {
                return Err(err(format!("time {} does not follow {}", wp.t, prev.t)));
            }
        }
        out.push(wp);
    }
    if out.is_empty() {
        return Err(TrajectoryError {
            index: 0,
            message: "no waypoints".into(),
        });
    }
    Ok(out)
}

pub fn format_trajectory(waypoints: &[Waypoint]) -> String {
    let mut s = String::new();
    for (k, w) in waypoints.iter().enumerate() {
        if k > 0 {
            s.push_str("; ");
        }
        let _ = write!(s, "{}: {}, {}, {}", w.t, w.x, w.y, w.theta);
    }
    s
}

/// Pose at time `t`, holding the end waypoints outside the covered span.
pub fn pose_at(waypoints: &[Waypoint], t: f64) -> Pose2 {
    let first = waypoints[0];
    if t <= first.t || waypoints.len() == 1 {
        return Pose2::new(first.x, first.y, first.theta);
    }
    let k = waypoints.partition_point(|w| w.t <= t);
    if k >= waypoints.len() {
        let w = waypoints[waypoints.len() - 1];
        return Pose2::new(w.x, w.y, w.theta);
    }
    let (a, b) = (waypoints[k - 1], waypoints[k]);
    let u = (t - a.t) / (b.t - a.t);
    let lerp = |p: f64, q: f64| p + u * (q - p);
    Pose2::new(lerp(a.x, b.x), lerp(a.y, b.y), lerp(a.theta, b.theta))
}

/// Samples at `rate_hz` from the first waypoint's time; the end time is
/// exclusive, so a 15 s span at 250 Hz gives 3750 samples.
pub fn resample(waypoints: &[Waypoint], rate_hz: f64) -> Vec<(f64, Pose2)> {
    let (Some(first), Some(last)) = (waypoints.first(), waypoints.last()) else {
        return Vec::new();
    };
    let n = ((last.t - first.t) * rate_hz).round() as usize;
    (0..n)
        .map(|k| {
            let t = first.t + k as f64 / rate_hz;
            (t, pose_at(waypoints, t))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_and_resamples() {
        let w = parse_trajectory("0: 0, 0, 0; 15: 0.015, -0.03, 0.3;").unwrap();
        assert_eq!(w.len(), 2);
        let s = resample(&w, 250.0);
        assert_eq!(s.len(), 3750);
        assert_eq!(s[0].1, Pose2::new(0.0, 0.0, 0.0));
        let mid = &s[1875];
        assert!((mid.0 - 7.5).abs() < 1e-12);
        assert!((mid.1.x - 0.0075).abs() < 1e-12);
        assert!((mid.1.theta - 0.15).abs() < 1e-12);
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse_trajectory("").is_err());
        assert!(parse_trajectory("0: 0, 0").is_err());
        assert!(parse_trajectory("1: 0, 0, 0; 1: 0, 0, 0").is_err());
        assert!(parse_trajectory("0 0, 0, 0").is_err());
        assert!(parse_trajectory("0: a, 0, 0").is_err());
        assert!(parse_trajectory("0: inf, 0, 0").is_err());
        let e = parse_trajectory("0: 0, 0, 0; 2: 1, 2").unwrap_err();
        assert_eq!(e.index, 1);
    }

    proptest! {
        #[test]
        fn format_round_trips(pts in proptest::collection::vec((0.001f64..5.0, -1.0f64..1.0, -1.0f64..1.0, -7.0f64..7.0), 1..8)) {
            let mut t = 0.0;
            let w: Vec<Waypoint> = pts.iter().map(|&(dt, x, y, th)| {
                t += dt;
                Waypoint { t, x, y, theta: th }
            }).collect();
            prop_assert_eq!(parse_trajectory(&format_trajectory(&w)).unwrap(), w);
        }
    }
}
