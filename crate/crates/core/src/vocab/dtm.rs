//! Digitized Gaussian truncated to the positive quadrant.
//!
//! A histogram cell `(row, col)` is the unit square
//! `[row, row+1) × [col, col+1)`; the first coordinate runs along rows.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::Cell;
use crate::stats::normal::{bvn_upper, interval, pdf};

/// Mean and covariance `[σ11, σ12, σ22]` of the untruncated Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DtmParams {
    pub mu: [f64; 2],
    pub sigma: [f64; 3],
}

impl DtmParams {
    pub fn new(mu: [f64; 2], sigma: [f64; 3]) -> Self {
        Self { mu, sigma }
    }

    pub fn det(&self) -> f64 {
        let [a, b, c] = self.sigma;
        a * c - b * b
    }

    /// Lower Cholesky factor `[l11, l21, l22]`, if Σ is positive definite.
    pub fn cholesky(&self) -> Option<[f64; 3]> {
        let [a, b, c] = self.sigma;
        if !(a > 0.0) || !self.mu.iter().all(|m| m.is_finite()) {
            return None;
        }
        let l11 = a.sqrt();
        let l21 = b / l11;
        let rest = c - l21 * l21;
        (rest > 0.0 && rest.is_finite()).then(|| [l11, l21, rest.sqrt()])
    }

    pub fn from_cholesky(mu: [f64; 2], [l11, l21, l22]: [f64; 3]) -> Self {
        Self { mu, sigma: [l11 * l11, l11 * l21, l21 * l21 + l22 * l22] }
    }
}

/// Relative determinant floor below which Σ counts as singular.
const DET_FLOOR: f64 = 1e-12;
/// Rectangle masses below this are taken from the density at the cell
/// midpoint, where CDF differences lose all precision.
const RECT_FLOOR: f64 = 1e-13;

/// A `DtmParams` with everything needed per cell precomputed.
#[derive(Debug, Clone)]
pub struct Dtm {
    p: DtmParams,
    sd: [f64; 2],
    rho: f64,
    inv: [f64; 3],
    det: f64,
    /// Conditional sd of x2 given x1, and of x1 given x2.
    cond_sd: [f64; 2],
    quadrant: f64,
    quadrant_grad: [f64; 5],
}

impl Dtm {
    pub fn new(p: &DtmParams) -> Result<Self> {
        let [s11, s12, s22] = p.sigma;
        let det = p.det();
        if !(s11 > 0.0 && s22 > 0.0 && det > DET_FLOOR * s11 * s22) || !det.is_finite() {
            return Err(Error::SingularCovariance);
        }
        if !p.mu.iter().all(|m| m.is_finite()) {
            return Err(Error::Degenerate("non-finite mean".into()));
        }
        let sd = [s11.sqrt(), s22.sqrt()];
        let mut d = Self {
            p: *p,
            sd,
            rho: (s12 / (sd[0] * sd[1])).clamp(-1.0, 1.0),
            inv: [s22 / det, -s12 / det, s11 / det],
            det,
            cond_sd: [(det / s11).sqrt(), (det / s22).sqrt()],
            quadrant: 0.0,
            quadrant_grad: [0.0; 5],
        };
        let q = d.rect(0.0, f64::INFINITY, 0.0, f64::INFINITY);
        if !(q > 1e-300) {
            return Err(Error::Degenerate("no probability mass in the positive quadrant".into()));
        }
        d.quadrant = q;
        d.quadrant_grad = d.rect_grad(0.0, f64::INFINITY, 0.0, f64::INFINITY);
        Ok(d)
    }

    pub fn params(&self) -> &DtmParams {
        &self.p
    }

    /// Untruncated mass of the positive quadrant.
    pub fn quadrant_mass(&self) -> f64 {
        self.quadrant
    }

    /// Probability of `cell` under the truncated Gaussian.
    pub fn prob(&self, (r, c): Cell) -> f64 {
        let (x0, y0) = (r as f64, c as f64);
        let m = self.rect(x0, x0 + 1.0, y0, y0 + 1.0);
        let m = if m < RECT_FLOOR { self.density(x0 + 0.5, y0 + 0.5) } else { m };
        (m / self.quadrant).clamp(0.0, 1.0)
    }

    /// Probability of `cell` and the gradient of its logarithm with
    /// respect to `(μ1, μ2, σ11, σ12, σ22)`.
    pub fn prob_grad(&self, (r, c): Cell) -> (f64, [f64; 5]) {
        let (x0, y0) = (r as f64, c as f64);
        let m = self.rect(x0, x0 + 1.0, y0, y0 + 1.0);
        let (m, dlog_m) = if m < RECT_FLOOR {
            let (xm, ym) = (x0 + 0.5, y0 + 0.5);
            (self.density(xm, ym), self.log_density_grad(xm, ym))
        } else {
            let g = self.rect_grad(x0, x0 + 1.0, y0, y0 + 1.0);
            (m, g.map(|v| v / m))
        };
        let mut g = [0.0; 5];
        for k in 0..5 {
            g[k] = dlog_m[k] - self.quadrant_grad[k] / self.quadrant;
        }
        ((m / self.quadrant).clamp(0.0, 1.0), g)
    }

    pub fn density(&self, x: f64, y: f64) -> f64 {
        if !x.is_finite() || !y.is_finite() {
            return 0.0;
        }
        let (dx, dy) = (x - self.p.mu[0], y - self.p.mu[1]);
        let [i11, i12, i22] = self.inv;
        let q = i11 * dx * dx + 2.0 * i12 * dx * dy + i22 * dy * dy;
        (-0.5 * q).exp() / (2.0 * PI * self.det.sqrt())
    }

    fn log_density_grad(&self, x: f64, y: f64) -> [f64; 5] {
        let (dx, dy) = (x - self.p.mu[0], y - self.p.mu[1]);
        let [i11, i12, i22] = self.inv;
        let v = [i11 * dx + i12 * dy, i12 * dx + i22 * dy];
        [
            v[0],
            v[1],
            0.5 * (v[0] * v[0] - i11),
            v[0] * v[1] - i12,
            0.5 * (v[1] * v[1] - i22),
        ]
    }

    /// Untruncated mass of `[x0, x1] × [y0, y1]`. Each axis is reflected
    /// so that the differenced orthant values sit in the upper tail.
    fn rect(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> f64 {
        let mut a = [(x0 - self.p.mu[0]) / self.sd[0], (x1 - self.p.mu[0]) / self.sd[0]];
        let mut b = [(y0 - self.p.mu[1]) / self.sd[1], (y1 - self.p.mu[1]) / self.sd[1]];
        let mut r = self.rho;
        if a[0] + a[1] < 0.0 {
            a = [-a[1], -a[0]];
            r = -r;
        }
        if b[0] + b[1] < 0.0 {
            b = [-b[1], -b[0]];
            r = -r;
        }
        let m = bvn_upper(a[0], b[0], r) - bvn_upper(a[1], b[0], r) - bvn_upper(a[0], b[1], r)
            + bvn_upper(a[1], b[1], r);
        m.max(0.0)
    }

    /// Gradient of `rect` with respect to `(μ1, μ2, σ11, σ12, σ22)`.
    fn rect_grad(&self, x0: f64, x1: f64, y0: f64, y1: f64) -> [f64; 5] {
        let [m1, m2] = self.p.mu;
        let [s11, s12, s22] = self.p.sigma;
        // mass of the strip at a fixed edge and its derivative along the edge
        let edge = |a: f64, mu: f64, var: f64, sd: f64, beta: f64, s: f64, mo: f64, lo: f64, hi: f64| {
            if !a.is_finite() {
                return (0.0, 0.0);
            }
            let phi = pdf((a - mu) / sd) / sd;
            let m = mo + beta * (a - mu);
            let (z0, z1) = ((lo - m) / s, (hi - m) / s);
            let strip = interval(z0, z1);
            let e = phi * strip;
            let d = -(a - mu) / var * e + phi * (beta / s) * (pdf(z0) - pdf(z1));
            (e, d)
        };
        let bx = s12 / s11;
        let by = s12 / s22;
        let (ex0, dx0) = edge(x0, m1, s11, self.sd[0], bx, self.cond_sd[0], m2, y0, y1);
        let (ex1, dx1) = edge(x1, m1, s11, self.sd[0], bx, self.cond_sd[0], m2, y0, y1);
        let (ey0, dy0) = edge(y0, m2, s22, self.sd[1], by, self.cond_sd[1], m1, x0, x1);
        let (ey1, dy1) = edge(y1, m2, s22, self.sd[1], by, self.cond_sd[1], m1, x0, x1);
        let corners = self.density(x1, y1) - self.density(x1, y0) - self.density(x0, y1)
            + self.density(x0, y0);
        [ex0 - ex1, ey0 - ey1, 0.5 * (dx1 - dx0), corners, 0.5 * (dy1 - dy0)]
    }
}

/// Probability of `cell` under `p`.
pub fn cell_probability(p: &DtmParams, cell: Cell) -> Result<f64> {
    Ok(Dtm::new(p)?.prob(cell))
}
