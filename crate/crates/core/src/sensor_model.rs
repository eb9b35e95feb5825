//! Calibrated sensor model: a bivariate polynomial from contact position to
//! base-moment signal, fitted by least squares in normalized coordinates.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinematics::ContactState;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("need at least {needed} samples for degree {degree}, got {got}")]
    TooFewSamples { degree: usize, needed: usize, got: usize },
    #[error("design matrix is rank deficient (numerical rank {rank} of {needed}); samples do not span the degree-{degree} monomials")]
    RankDeficient { degree: usize, rank: usize, needed: usize },
    #[error("sample {index} is not finite")]
    NonFinite { index: usize },
    #[error("line {line}, field `{field}`: {message}")]
    Parse { line: usize, field: String, message: String },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Which side of a straight whisker the contact points lie on: `Left` is
/// the `+y` half-plane of the base frame. Curved whiskers use `Single`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Single,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
            Side::Single => "single",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "left" => Some(Side::Left),
            "right" => Some(Side::Right),
            "single" => Some(Side::Single),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub t: f64,
    pub position: ContactState,
    pub signal: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSet {
    pub samples: Vec<CalibrationSample>,
    pub side: Side,
}

/// Affine map of each axis onto `[-1, 1]`: `u = (p - center) / half_range`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub center: [f64; 2],
    pub half_range: [f64; 2],
}

impl InputScaling {
    pub const IDENTITY: Self = Self {
        center: [0.0, 0.0],
        half_range: [1.0, 1.0],
    };

    fn from_samples(samples: &[CalibrationSample]) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for s in samples {
            let p = [s.position.px, s.position.py];
            for k in 0..2 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        let mut center = [0.0; 2];
        let mut half_range = [1.0; 2];
        for k in 0..2 {
            center[k] = 0.5 * (lo[k] + hi[k]);
            let h = 0.5 * (hi[k] - lo[k]);
            if h > 0.0 {
                half_range[k] = h;
            }
        }
        Self { center, half_range }
    }

    pub fn apply(&self, p: ContactState) -> [f64; 2] {
        [
            (p.px - self.center[0]) / self.half_range[0],
            (p.py - self.center[1]) / self.half_range[1],
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitStats {
    pub r_squared: f64,
    pub rmse: f64,
    pub n_samples: usize,
}

/// Reference evaluation stored alongside a saved model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub position: ContactState,
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    /// The input lies outside the calibrated box.
    pub extrapolated: bool,
}

/// Number of monomials `u^i v^j` with `i + j <= degree`.
pub fn coefficient_count(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

/// Exponent pairs in storage order: by total degree, then descending `i`.
pub fn monomials(degree: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(coefficient_count(degree));
    for k in 0..=degree {
        for i in (0..=k).rev() {
            out.push((i, k - i));
        }
    }
    out
}

fn powers(x: f64, degree: usize) -> [f64; 16] {
    let mut p = [0.0; 16];
    p[0] = 1.0;
    for k in 1..=degree {
        p[k] = p[k - 1] * x;
    }
    p
}

/// Highest supported polynomial degree.
pub const MAX_DEGREE: usize = 15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialModel {
    pub degree: usize,
    /// One coefficient per entry of [`monomials`], in the same order.
    pub coefficients: Vec<f64>,
    pub scaling: InputScaling,
    pub side: Side,
    pub stats: FitStats,
    pub probe: Option<Probe>,
}

impl PolynomialModel {
    /// Model from raw coefficients; panics if the count does not match.
    pub fn from_coefficients(degree: usize, coefficients: Vec<f64>, scaling: InputScaling) -> Self {
        assert!(degree <= MAX_DEGREE);
        assert_eq!(coefficients.len(), coefficient_count(degree));
        Self {
            degree,
            coefficients,
            scaling,
            side: Side::Single,
            stats: FitStats {
                r_squared: 1.0,
                rmse: 0.0,
                n_samples: 0,
            },
            probe: None,
        }
    }

    /// Polynomial value, without the extrapolation check.
    pub fn value(&self, p: ContactState) -> f64 {
        let [u, v] = self.scaling.apply(p);
        let pu = powers(u, self.degree);
        let pv = powers(v, self.degree);
        let mut acc = 0.0;
        let mut idx = 0;
        for k in 0..=self.degree {
            for i in (0..=k).rev() {
                acc += self.coefficients[idx] * pu[i] * pv[k - i];
                idx += 1;
            }
        }
        acc
    }

    pub fn evaluate(&self, p: ContactState) -> Evaluation {
        let [u, v] = self.scaling.apply(p);
        let lim = 1.0 + 1e-9;
        Evaluation {
            value: self.value(p),
            extrapolated: !(u.abs() <= lim && v.abs() <= lim),
        }
    }

    /// `(∂g/∂px, ∂g/∂py)` in signal units per meter.
    pub fn gradient(&self, p: ContactState) -> [f64; 2] {
        let [u, v] = self.scaling.apply(p);
        let pu = powers(u, self.degree);
        let pv = powers(v, self.degree);
        let (mut du, mut dv) = (0.0, 0.0);
        let mut idx = 0;
        for k in 0..=self.degree {
            for i in (0..=k).rev() {
                let j = k - i;
                let c = self.coefficients[idx];
                if i > 0 {
                    du += c * i as f64 * pu[i - 1] * pv[j];
                }
                if j > 0 {
                    dv += c * j as f64 * pu[i] * pv[j - 1];
                }
                idx += 1;
            }
        }
        [du / self.scaling.half_range[0], dv / self.scaling.half_range[1]]
    }

    /// Records the model's own value at `position` as the reference probe.
    pub fn with_probe(mut self, position: ContactState) -> Self {
        self.probe = Some(Probe {
            position,
            value: self.value(position),
        });
        self
    }
}

/// Ordinary least squares over the degree-`degree` monomials, in
/// coordinates normalized to the calibration bounding box.
pub fn fit(data: &CalibrationSet, degree: usize) -> Result<PolynomialModel, ModelError> {
    let needed = coefficient_count(degree);
    let m = data.samples.len();
    if degree > MAX_DEGREE {
        return Err(ModelError::Parse {
            line: 0,
            field: "degree".into(),
            message: format!("degree {degree} exceeds {MAX_DEGREE}"),
        });
    }
    if m < needed {
        return Err(ModelError::TooFewSamples { degree, needed, got: m });
    }
    for (index, s) in data.samples.iter().enumerate() {
        if !(s.position.is_finite() && s.signal.is_finite()) {
            return Err(ModelError::NonFinite { index });
        }
    }
    let scaling = InputScaling::from_samples(&data.samples);
    let mono = monomials(degree);
    let mut a = DMatrix::<f64>::zeros(m, needed);
    let mut b = DVector::<f64>::zeros(m);
    for (r, s) in data.samples.iter().enumerate() {
        let [u, v] = scaling.apply(s.position);
        let pu = powers(u, degree);
        let pv = powers(v, degree);
        for (c, &(i, j)) in mono.iter().enumerate() {
            a[(r, c)] = pu[i] * pv[j];
        }
        b[r] = s.signal;
    }

    let qr = a.qr();
    let rmat = qr.r();
    let diag_max = (0..needed).map(|k| rmat[(k, k)].abs()).fold(0.0f64, f64::max);
    let rank = (0..needed)
        .filter(|&k| rmat[(k, k)].abs() > 1e-10 * diag_max.max(f64::MIN_POSITIVE))
        .count();
    if rank < needed {
        return Err(ModelError::RankDeficient { degree, rank, needed });
    }
    let qtb = qr.q().transpose() * &b;
    let x = rmat
        .solve_upper_triangular(&qtb)
        .ok_or(ModelError::RankDeficient { degree, rank, needed })?;

    let model = PolynomialModel {
        degree,
        coefficients: x.iter().copied().collect(),
        scaling,
        side: data.side,
        stats: FitStats {
            r_squared: 0.0,
            rmse: 0.0,
            n_samples: m,
        },
        probe: None,
    };
    let mean = b.mean();
    let (mut ss_res, mut ss_tot) = (0.0, 0.0);
    for s in &data.samples {
        let e = s.signal - model.value(s.position);
        ss_res += e * e;
        ss_tot += (s.signal - mean) * (s.signal - mean);
    }
    let r_squared = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(PolynomialModel {
        stats: FitStats {
            r_squared,
            rmse: (ss_res / m as f64).sqrt(),
            n_samples: m,
        },
        ..model
    })
}

const MODEL_MAGIC: &str = "# whisker polynomial model v1";

fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

/// Text form: a `key = value` header, then a `coefficients` line followed by
/// one `i j value` line per monomial.
pub fn model_to_string(model: &PolynomialModel) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MODEL_MAGIC}");
    let _ = writeln!(s, "degree = {}", model.degree);
    let _ = writeln!(s, "side = {}", model.side.as_str());
    let sc = &model.scaling;
    let _ = writeln!(s, "scale_center = {} {}", fmt_f(sc.center[0]), fmt_f(sc.center[1]));
    let _ = writeln!(
        s,
        "scale_half_range = {} {}",
        fmt_f(sc.half_range[0]),
        fmt_f(sc.half_range[1])
    );
    let _ = writeln!(s, "r_squared = {}", fmt_f(model.stats.r_squared));
    let _ = writeln!(s, "rmse = {}", fmt_f(model.stats.rmse));
    let _ = writeln!(s, "n_samples = {}", model.stats.n_samples);
    if let Some(p) = &model.probe {
        let _ = writeln!(
            s,
            "probe = {} {} {}",
            fmt_f(p.position.px),
            fmt_f(p.position.py),
            fmt_f(p.value)
        );
    }
    let _ = writeln!(s, "coefficients");
    for (&(i, j), c) in monomials(model.degree).iter().zip(&model.coefficients) {
        let _ = writeln!(s, "{i} {j} {}", fmt_f(*c));
    }
    s
}

fn perr(line: usize, field: &str, message: impl Into<String>) -> ModelError {
    ModelError::Parse {
        line,
        field: field.to_string(),
        message: message.into(),
    }
}

fn parse_floats<const N: usize>(line: usize, field: &str, value: &str) -> Result<[f64; N], ModelError> {
    let parts: Vec<&str> = value.split_whitespace().collect();
    if parts.len() != N {
        return Err(perr(line, field, format!("expected {N} numbers, found {}", parts.len())));
    }
    let mut out = [0.0; N];
    for (k, p) in parts.iter().enumerate() {
        out[k] = p
            .parse::<f64>()
            .map_err(|e| perr(line, field, format!("`{p}`: {e}")))?;
    }
    Ok(out)
}

pub fn parse_model(text: &str) -> Result<PolynomialModel, ModelError> {
    let mut degree = None;
    let mut side = None;
    let mut center = None;
    let mut half = None;
    let mut r2 = None;
    let mut rmse = None;
    let mut n = None;
    let mut probe = None;
    let mut coeffs: Vec<(usize, usize, f64)> = Vec::new();
    let mut in_coeffs = false;
    let mut last_line = 0;

    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        last_line = line;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        if in_coeffs {
            let parts: Vec<&str> = l.split_whitespace().collect();
            if parts.len() != 3 {
                return Err(perr(line, "coefficient", "expected `i j value`"));
            }
            let i = parts[0]
                .parse::<usize>()
                .map_err(|e| perr(line, "i", e.to_string()))?;
            let j = parts[1]
                .parse::<usize>()
                .map_err(|e| perr(line, "j", e.to_string()))?;
            let c = parts[2]
                .parse::<f64>()
                .map_err(|e| perr(line, "value", e.to_string()))?;
            if !c.is_finite() {
                return Err(perr(line, "value", "not finite"));
            }
            coeffs.push((i, j, c));
            continue;
        }
        if l == "coefficients" {
            in_coeffs = true;
            continue;
        }
        let (key, value) = l
            .split_once('=')
            .ok_or_else(|| perr(line, l, "expected `key = value`"))?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "degree" => {
                let d = value
                    .parse::<usize>()
                    .map_err(|e| perr(line, key, e.to_string()))?;
                if d > MAX_DEGREE {
                    return Err(perr(line, key, format!("degree exceeds {MAX_DEGREE}")));
                }
                degree = Some(d);
            }
            "side" => side = Some(Side::parse(value).ok_or_else(|| perr(line, key, "expected left, right or single"))?),
            "scale_center" => center = Some(parse_floats::<2>(line, key, value)?),
            "scale_half_range" => {
                let h = parse_floats::<2>(line, key, value)?;
                if !(h[0] > 0.0 && h[1] > 0.0 && h[0].is_finite() && h[1].is_finite()) {
                    return Err(perr(line, key, "half ranges must be positive"));
                }
                half = Some(h);
            }
            "r_squared" => {
                let [v] = parse_floats::<1>(line, key, value)?;
                if !(0.0..=1.0).contains(&v) {
                    return Err(perr(line, key, "must lie in [0, 1]"));
                }
                r2 = Some(v);
            }
            "rmse" => rmse = Some(parse_floats::<1>(line, key, value)?[0]),
            "n_samples" => {
                n = Some(
                    value
                        .parse::<usize>()
                        .map_err(|e| perr(line, key, e.to_string()))?,
                )
            }
            "probe" => {
                let [x, y, v] = parse_floats::<3>(line, key, value)?;
                probe = Some(Probe {
                    position: ContactState::new(x, y),
                    value: v,
                });
            }
            other => return Err(perr(line, other, "unknown key")),
        }
    }

    let missing = |f: &str| perr(last_line, f, "missing");
    let degree = degree.ok_or_else(|| missing("degree"))?;
    let center = center.ok_or_else(|| missing("scale_center"))?;
    let half = half.ok_or_else(|| missing("scale_half_range"))?;
    if !in_coeffs {
        return Err(missing("coefficients"));
    }
    let expected = monomials(degree);
    if coeffs.len() != expected.len() {
        return Err(perr(
            last_line,
            "coefficients",
            format!("expected {} coefficients for degree {degree}, found {}", expected.len(), coeffs.len()),
        ));
    }
    for (k, (&(i, j), &(fi, fj, _))) in expected.iter().zip(&coeffs).enumerate() {
        if (i, j) != (fi, fj) {
            return Err(perr(
                last_line,
                "coefficients",
                format!("entry {k} should be `{i} {j}`, found `{fi} {fj}`"),
            ));
        }
    }
    Ok(PolynomialModel {
        degree,
        coefficients: coeffs.into_iter().map(|c| c.2).collect(),
        scaling: InputScaling {
            center,
            half_range: half,
        },
        side: side.unwrap_or(Side::Single),
        stats: FitStats {
            r_squared: r2.unwrap_or(0.0),
            rmse: rmse.unwrap_or(0.0),
            n_samples: n.unwrap_or(0),
        },
        probe,
    })
}

pub fn save_model(model: &PolynomialModel, path: impl AsRef<Path>) -> Result<(), ModelError> {
    std::fs::write(path, model_to_string(model))?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<PolynomialModel, ModelError> {
    parse_model(&std::fs::read_to_string(path)?)
}

pub const CALIBRATION_HEADER: [&str; 4] = ["t", "px", "py", "signal"];

/// Reads a calibration CSV with header `t,px,py,signal`.
pub fn read_calibration_csv<R: Read>(reader: R) -> Result<Vec<CalibrationSample>, ModelError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != CALIBRATION_HEADER {
        return Err(perr(1, "header", format!("expected `{}`", CALIBRATION_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let mut vals = [0.0; 4];
        for (c, name) in CALIBRATION_HEADER.iter().enumerate() {
            let raw = rec.get(c).ok_or_else(|| perr(line, name, "missing"))?.trim();
            vals[c] = raw
                .parse::<f64>()
                .map_err(|e| perr(line, name, format!("`{raw}`: {e}")))?;
            if !vals[c].is_finite() {
                return Err(perr(line, name, "not finite"));
            }
        }
        out.push(CalibrationSample {
            t: vals[0],
            position: ContactState::new(vals[1], vals[2]),
            signal: vals[3],
        });
    }
    Ok(out)
}

pub fn write_calibration_csv<W: Write>(samples: &[CalibrationSample], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{}", CALIBRATION_HEADER.join(","))?;
    for s in samples {
        writeln!(w, "{},{},{},{}", s.t, s.position.px, s.position.py, s.signal)?;
    }
    Ok(())
}
