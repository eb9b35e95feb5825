//! Damped Newton solve of the single-contact rod equilibrium.
//!
//! Unknowns are the nodal tangent angles, the contact arc position `s`, the
//! contact force `F` and, for curved features, the feature parameter `β`.
//! Equations: joint torque balance, contact point coincidence
//! `r(s) = P(β)`, frictionless contact `F·t(s) = 0` and, for curved features,
//! tangency `t(s) × P'(β) = 0`. The Jacobian is tridiagonal in the angles with
//! a dense border of width 3 or 4, solved by block elimination.

use nalgebra::{DMatrix, DVector, Vector2};

use super::rod::{perp, Discretization};

type V2 = Vector2<f64>;

/// Contact feature the rod touches.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Feature {
    Point(V2),
    Circle { center: V2, radius: f64 },
    Segment { a: V2, b: V2 },
}

impl Feature {
    pub fn border(&self) -> usize {
        match self {
            Feature::Point(_) => 3,
            _ => 4,
        }
    }

    /// `P(β)`, `P'(β)`, `P''(β)`.
    pub fn eval(&self, beta: f64) -> (V2, V2, V2) {
        match *self {
            Feature::Point(p) => (p, V2::zeros(), V2::zeros()),
            Feature::Circle { center, radius } => {
                let (s, c) = beta.sin_cos();
                (
                    center + V2::new(c, s) * radius,
                    V2::new(-s, c) * radius,
                    V2::new(-c, -s) * radius,
                )
            }
            Feature::Segment { a, b } => (a + (b - a) * beta, b - a, V2::zeros()),
        }
    }

    fn tangent_scale(&self) -> f64 {
        match *self {
            Feature::Point(_) => 1.0,
            Feature::Circle { radius, .. } => radius,
            Feature::Segment { a, b } => (b - a).norm(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Unknowns {
    pub psi: Vec<f64>,
    pub s: f64,
    pub force: V2,
    pub beta: f64,
}

pub(crate) struct Solved {
    pub u: Unknowns,
    /// Largest absolute torque-balance residual over all joints (N·m).
    pub max_torque_residual: f64,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NewtonSettings {
    pub max_iterations: usize,
    pub tolerance: f64,
}

struct System {
    res: Vec<f64>,
    lower: Vec<f64>,
    diag: Vec<f64>,
    upper: Vec<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

fn assemble(disc: &Discretization, feature: &Feature, u: &Unknowns, jacobian: bool) -> System {
    let n1 = disc.n + 1;
    let nb = feature.border();
    let ck = disc.contact_kinematics(&u.psi, u.s);
    let f = u.force;
    let (p, dp, ddp) = feature.eval(u.beta);

    let mut res = vec![0.0; n1 + nb];
    let grad = disc.energy_gradient(&u.psi);
    for j in 0..n1 {
        res[j] = grad[j] - f.dot(&ck.dr[j]);
    }
    if disc.base_k.is_none() {
        res[0] = u.psi[0];
    }
    let c_pos = ck.r - p;
    res[n1] = c_pos.x;
    res[n1 + 1] = c_pos.y;
    res[n1 + 2] = f.dot(&ck.t);
    if nb == 4 {
        res[n1 + 3] = ck.t.x * dp.y - ck.t.y * dp.x;
    }

    let mut sys = System {
        res,
        lower: Vec::new(),
        diag: Vec::new(),
        upper: Vec::new(),
        b: DMatrix::zeros(0, 0),
        c: DMatrix::zeros(0, 0),
        d: DMatrix::zeros(0, 0),
    };
    if !jacobian {
        return sys;
    }

    let mut diag = vec![0.0; n1];
    let mut off = vec![0.0; n1 - 1];
    if let Some(kb) = disc.base_k {
        diag[0] += kb;
    }
    for e in 0..disc.n {
        diag[e] += disc.bend_k;
        diag[e + 1] += disc.bend_k;
        off[e] -= disc.bend_k;
    }
    for (e, (taa, tab, tbb)) in ck.second.iter().enumerate() {
        diag[e] += f.dot(taa);
        off[e] += f.dot(tab);
        diag[e + 1] += f.dot(tbb);
    }
    let mut lower = vec![0.0; n1];
    let mut upper = vec![0.0; n1];
    lower[1..n1].copy_from_slice(&off[..(n1 - 1)]);
    upper[..(n1 - 1)].copy_from_slice(&off[..(n1 - 1)]);

    let fn_perp = f.dot(&perp(ck.t));
    let (m, xi) = (ck.m, ck.xi);
    let mut b = DMatrix::zeros(n1, nb);
    b[(m, 0)] = -fn_perp * (1.0 - xi);
    b[(m + 1, 0)] = -fn_perp * xi;
    for j in 0..n1 {
        b[(j, 1)] = -ck.dr[j].x;
        b[(j, 2)] = -ck.dr[j].y;
    }
    if disc.base_k.is_none() {
        diag[0] = 1.0;
        upper[0] = 0.0;
        for k in 0..nb {
            b[(0, k)] = 0.0;
        }
    }

    let mut c = DMatrix::zeros(nb, n1);
    for k in 0..n1 {
        c[(0, k)] = ck.dr[k].x;
        c[(1, k)] = ck.dr[k].y;
    }
    c[(2, m)] = fn_perp * (1.0 - xi);
    c[(2, m + 1)] = fn_perp * xi;
    let tdp = ck.t.dot(&dp);
    if nb == 4 {
        c[(3, m)] = -tdp * (1.0 - xi);
        c[(3, m + 1)] = -tdp * xi;
    }

    let mut d = DMatrix::zeros(nb, nb);
    d[(0, 0)] = ck.t.x;
    d[(1, 0)] = ck.t.y;
    d[(2, 0)] = ck.kappa * fn_perp;
    d[(2, 1)] = ck.t.x;
    d[(2, 2)] = ck.t.y;
    if nb == 4 {
        d[(0, 3)] = -dp.x;
        d[(1, 3)] = -dp.y;
        d[(3, 0)] = -ck.kappa * tdp;
        d[(3, 3)] = ck.t.x * ddp.y - ck.t.y * ddp.x;
    }

    sys.lower = lower;
    sys.diag = diag;
    sys.upper = upper;
    sys.b = b;
    sys.c = c;
    sys.d = d;
    sys
}

/// Solves the tridiagonal system for several right-hand sides in place.
/// Returns `false` on a vanishing pivot.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut DMatrix<f64>) -> bool {
    let n = diag.len();
    let k = rhs.ncols();
    let scale = diag.iter().fold(0.0f64, |a, d| a.max(d.abs())).max(1e-300);
    let mut cp = vec![0.0; n];
    let mut denom = diag[0];
    if denom.abs() < 1e-13 * scale {
        return false;
    }
    cp[0] = upper[0] / denom;
    for col in 0..k {
        rhs[(0, col)] /= denom;
    }
    for i in 1..n {
        denom = diag[i] - lower[i] * cp[i - 1];
        if denom.abs() < 1e-13 * scale {
            return false;
        }
        cp[i] = if i + 1 < n { upper[i] / denom } else { 0.0 };
        for col in 0..k {
            rhs[(i, col)] = (rhs[(i, col)] - lower[i] * rhs[(i - 1, col)]) / denom;
        }
    }
    for i in (0..n - 1).rev() {
        for col in 0..k {
            rhs[(i, col)] -= cp[i] * rhs[(i + 1, col)];
        }
    }
    true
}

fn dense_solve(sys: &System, rhs: &[f64]) -> Option<Vec<f64>> {
    let n1 = sys.diag.len();
    let nb = sys.d.nrows();
    let mut j = DMatrix::zeros(n1 + nb, n1 + nb);
    for i in 0..n1 {
        j[(i, i)] = sys.diag[i];
        if i > 0 {
            j[(i, i - 1)] = sys.lower[i];
        }
        if i + 1 < n1 {
            j[(i, i + 1)] = sys.upper[i];
        }
        for k in 0..nb {
            j[(i, n1 + k)] = sys.b[(i, k)];
        }
    }
    for r in 0..nb {
        for k in 0..n1 {
            j[(n1 + r, k)] = sys.c[(r, k)];
        }
        for k in 0..nb {
            j[(n1 + r, n1 + k)] = sys.d[(r, k)];
        }
    }
    j.lu().solve(&DVector::from_column_slice(rhs)).map(|x| x.iter().copied().collect())
}

/// Solves `J x = rhs` using the bordered-tridiagonal structure.
fn bordered_solve(sys: &System, rhs: &[f64]) -> Option<Vec<f64>> {
    let n1 = sys.diag.len();
    let nb = sys.d.nrows();
    let mut cols = DMatrix::zeros(n1, nb + 1);
    for i in 0..n1 {
        cols[(i, 0)] = rhs[i];
        for k in 0..nb {
            cols[(i, k + 1)] = sys.b[(i, k)];
        }
    }
    if !thomas(&sys.lower, &sys.diag, &sys.upper, &mut cols) {
        return dense_solve(sys, rhs);
    }
    let xf = cols.column(0).into_owned();
    let xb = cols.columns(1, nb).into_owned();
    let schur = &sys.d - &sys.c * &xb;
    let g = DVector::from_iterator(nb, (0..nb).map(|r| rhs[n1 + r])) - &sys.c * &xf;
    let y = schur.lu().solve(&g)?;
    let x = xf - xb * &y;
    let mut out: Vec<f64> = x.iter().copied().collect();
    out.extend(y.iter().copied());
    if out.iter().all(|v| v.is_finite()) {
        Some(out)
    } else {
        dense_solve(sys, rhs)
    }
}

struct Scales {
    torque: f64,
    length: f64,
    force: f64,
    tangency: f64,
}

fn scaled_residual(res: &[f64], n1: usize, sc: &Scales) -> (f64, f64) {
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for (i, r) in res.iter().enumerate() {
        let s = if i < n1 {
            sc.torque
        } else if i < n1 + 2 {
            sc.length
        } else if i == n1 + 2 {
            sc.force
        } else {
            sc.tangency
        };
        let v = r / s;
        sum += v * v;
        max = max.max(v.abs());
    }
    if !sum.is_finite() {
        return (f64::INFINITY, f64::INFINITY);
    }
    (sum, max)
}

fn apply(u: &Unknowns, delta: &[f64], alpha: f64) -> Unknowns {
    let n1 = u.psi.len();
    let mut out = u.clone();
    for j in 0..n1 {
        out.psi[j] += alpha * delta[j];
    }
    out.s += alpha * delta[n1];
    out.force.x += alpha * delta[n1 + 1];
    out.force.y += alpha * delta[n1 + 2];
    if delta.len() > n1 + 3 {
        out.beta += alpha * delta[n1 + 3];
    }
    out
}

pub(crate) fn newton(
    disc: &Discretization,
    feature: &Feature,
    mut u: Unknowns,
    settings: NewtonSettings,
) -> Result<Solved, f64> {
    let n1 = disc.n + 1;
    let ei = disc.bend_k * disc.h;
    let torque = ei / disc.length;
    let sc = Scales {
        torque,
        length: disc.length,
        force: torque / disc.length,
        tangency: feature.tangent_scale(),
    };
    let mut last = f64::INFINITY;
    for _ in 0..settings.max_iterations {
        let sys = assemble(disc, feature, &u, true);
        let (merit, max) = scaled_residual(&sys.res, n1, &sc);
        last = max;
        if max < settings.tolerance {
            let max_torque = sys.res[..n1]
                .iter()
                .skip(usize::from(disc.base_k.is_none()))
                .fold(0.0f64, |a, r| a.max(r.abs()));
            return Ok(Solved {
                u,
                max_torque_residual: max_torque,
            });
        }
        let rhs: Vec<f64> = sys.res.iter().map(|r| -r).collect();
        let mut delta = bordered_solve(&sys, &rhs).ok_or(max)?;

        // cap angle and arc steps
        let max_dpsi = delta[..n1].iter().fold(0.0f64, |a, d| a.max(d.abs()));
        let mut cap = 1.0f64;
        if max_dpsi > 0.5 {
            cap = cap.min(0.5 / max_dpsi);
        }
        if delta[n1].abs() > 0.25 * disc.length {
            cap = cap.min(0.25 * disc.length / delta[n1].abs());
        }
        if delta.len() > n1 + 3 && delta[n1 + 3].abs() > 0.5 {
            cap = cap.min(0.5 / delta[n1 + 3].abs());
        }
        if cap < 1.0 {
            delta.iter_mut().for_each(|d| *d *= cap);
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial = apply(&u, &delta, alpha);
            let r = assemble(disc, feature, &trial, false);
            let (m_trial, _) = scaled_residual(&r.res, n1, &sc);
            if m_trial < (1.0 - 1e-4 * alpha) * merit {
                accepted = Some(trial);
                break;
            }
            alpha *= 0.5;
        }
        match accepted {
            Some(t) => u = t,
            None => return Err(max),
        }
    }
    Err(last)
}
