//! Discretized inextensible rod: the tangent angle is piecewise linear in arc
//! length, so positions are integrals of `(cos ψ, sin ψ)` over each element.

use nalgebra::Vector2;

type V2 = Vector2<f64>;

// 4-point Gauss-Legendre on [0, 1].
const GL_X: [f64; 4] = [
    0.069_431_844_202_973_71,
    0.330_009_478_207_571_87,
    0.669_990_521_792_428_1,
    0.930_568_155_797_026_3,
];
const GL_W: [f64; 4] = [
    0.173_927_422_568_726_93,
    0.326_072_577_431_273_07,
    0.326_072_577_431_273_07,
    0.173_927_422_568_726_93,
];

pub(crate) fn perp(t: V2) -> V2 {
    V2::new(-t.y, t.x)
}

fn tangent(psi: f64) -> V2 {
    let (s, c) = psi.sin_cos();
    V2::new(c, s)
}

/// Integrals over `ξ ∈ [0, ξ_end]` of one element, scaled by the element length.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct ElementIntegrals {
    /// ∫ t
    pub pos: V2,
    /// ∫ (1-ξ) perp(t)
    pub da: V2,
    /// ∫ ξ perp(t)
    pub db: V2,
    /// ∫ (1-ξ)² t
    pub taa: V2,
    /// ∫ (1-ξ)ξ t
    pub tab: V2,
    /// ∫ ξ² t
    pub tbb: V2,
}

pub(crate) fn element_integrals(psi_a: f64, psi_b: f64, xi_end: f64, h: f64) -> ElementIntegrals {
    let mut out = ElementIntegrals::default();
    for k in 0..4 {
        let xi = xi_end * GL_X[k];
        let w = h * xi_end * GL_W[k];
        let t = tangent((1.0 - xi) * psi_a + xi * psi_b);
        let n = perp(t);
        let a = 1.0 - xi;
        out.pos += t * w;
        out.da += n * (w * a);
        out.db += n * (w * xi);
        out.taa += t * (w * a * a);
        out.tab += t * (w * a * xi);
        out.tbb += t * (w * xi * xi);
    }
    out
}

fn element_position(psi_a: f64, psi_b: f64, xi_end: f64, h: f64) -> V2 {
    let mut pos = V2::zeros();
    for k in 0..4 {
        let xi = xi_end * GL_X[k];
        pos += tangent((1.0 - xi) * psi_a + xi * psi_b) * (h * xi_end * GL_W[k]);
    }
    pos
}

/// Rod geometry and stiffness.
#[derive(Debug, Clone)]
pub(crate) struct Discretization {
    pub n: usize,
    pub h: f64,
    pub length: f64,
    pub kappa0: f64,
    /// EI / h
    pub bend_k: f64,
    /// Base torsional stiffness; `None` for a clamped base.
    pub base_k: Option<f64>,
}

impl Discretization {
    pub fn new(length: f64, n: usize, kappa0: f64, ei: f64, base_k: f64) -> Self {
        let h = length / n as f64;
        Self {
            n,
            h,
            length,
            kappa0,
            bend_k: ei / h,
            base_k: if base_k.is_finite() { Some(base_k) } else { None },
        }
    }

    pub fn rest_angles(&self) -> Vec<f64> {
        (0..=self.n).map(|i| i as f64 * self.h * self.kappa0).collect()
    }

    /// Element index and local coordinate for arc position `s`. Positions
    /// outside `[0, L]` extrapolate the first or last element.
    pub fn locate(&self, s: f64) -> (usize, f64) {
        let u = s / self.h;
        let m = (u.floor().max(0.0) as usize).min(self.n - 1);
        (m, u - m as f64)
    }

    pub fn nodes(&self, psi: &[f64]) -> Vec<V2> {
        let mut out = Vec::with_capacity(self.n + 1);
        let mut r = V2::zeros();
        out.push(r);
        for e in 0..self.n {
            r += element_position(psi[e], psi[e + 1], 1.0, self.h);
            out.push(r);
        }
        out
    }

    pub fn point_at(&self, psi: &[f64], s: f64) -> (V2, V2) {
        let (m, xi) = self.locate(s);
        let mut r = V2::zeros();
        for e in 0..m {
            r += element_position(psi[e], psi[e + 1], 1.0, self.h);
        }
        r += element_position(psi[m], psi[m + 1], xi, self.h);
        let t = tangent((1.0 - xi) * psi[m] + xi * psi[m + 1]);
        (r, t)
    }

    /// Elastic energy gradient entries (`∂E/∂ψ_j`).
    pub fn energy_gradient(&self, psi: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n + 1];
        if let Some(kb) = self.base_k {
            g[0] += kb * psi[0];
        }
        for e in 0..self.n {
            let c = self.bend_k * (psi[e + 1] - psi[e] - self.h * self.kappa0);
            g[e] -= c;
            g[e + 1] += c;
        }
        g
    }

    #[cfg(test)]
    pub fn energy(&self, psi: &[f64]) -> f64 {
        let mut en = 0.0;
        if let Some(kb) = self.base_k {
            en += 0.5 * kb * psi[0] * psi[0];
        }
        for e in 0..self.n {
            let c = psi[e + 1] - psi[e] - self.h * self.kappa0;
            en += 0.5 * self.bend_k * c * c;
        }
        en
    }
}

/// Position and first/second angle derivatives of the rod point at arc `s`.
pub(crate) struct ContactKinematics {
    pub r: V2,
    pub t: V2,
    pub m: usize,
    pub xi: f64,
    /// Curvature of the element holding the point.
    pub kappa: f64,
    /// ∂r/∂ψ_j for j = 0..=n (zero past m+1).
    pub dr: Vec<V2>,
    /// Per element e ≤ m: (∫(1-ξ)²t, ∫(1-ξ)ξt, ∫ξ²t), scaled by h.
    pub second: Vec<(V2, V2, V2)>,
}

impl Discretization {
    pub fn contact_kinematics(&self, psi: &[f64], s: f64) -> ContactKinematics {
        let (m, xi) = self.locate(s);
        let mut r = V2::zeros();
        let mut dr = vec![V2::zeros(); self.n + 1];
        let mut second = Vec::with_capacity(m + 1);
        for e in 0..=m {
            let xi_end = if e < m { 1.0 } else { xi };
            let ig = element_integrals(psi[e], psi[e + 1], xi_end, self.h);
            r += ig.pos;
            dr[e] += ig.da;
            dr[e + 1] += ig.db;
            second.push((ig.taa, ig.tab, ig.tbb));
        }
        let t = tangent((1.0 - xi) * psi[m] + xi * psi[m + 1]);
        ContactKinematics {
            r,
            t,
            m,
            xi,
            kappa: (psi[m + 1] - psi[m]) / self.h,
            dr,
            second,
        }
    }
}
