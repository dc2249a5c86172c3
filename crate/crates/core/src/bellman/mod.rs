//! Two-branch power-type Bellman function, its derivatives and (A, B)-convexity.
//!
//! Points are handled both as complex pairs `(zeta, eta)` and in real
//! coordinates `(Re zeta, Im zeta, Re eta, Im eta)`. Every branch of `Q` is a
//! sum of monomials `c |zeta|^a |eta|^b`, which is what the derivative code works on.

mod convexity;
mod mollify;

pub use convexity::{
    convexity_margin, delta_sweep, ConvexityOptions, ConvexityReport, DeltaSweep, HessianMode, HessianSample,
};
pub use mollify::{mollified_gradient, mollified_hessian, Mollifier};

use nalgebra::{Matrix4, Vector4};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coefficients::ComplexMatrix;
use crate::error::{Error, Result};

/// Relative width of the excluded band around the branch interface.
pub const SINGULAR_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BellmanParams {
    pub p: f64,
    pub p_prime: f64,
    pub delta: f64,
    pub nu: f64,
}

impl BellmanParams {
    /// Exponents below 2 are handled by the caller swapping the roles of `zeta` and `eta`.
    pub fn new(p: f64, delta: f64, nu: f64) -> Result<Self> {
        if !(p.is_finite() && p >= 2.0) {
            return Err(Error::BadExponent(p));
        }
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::InvalidInput(format!("delta = {delta} outside [0, 1]")));
        }
        if !(nu > 0.0 && nu <= 1.0) {
            return Err(Error::InvalidInput(format!("nu = {nu} outside (0, 1]")));
        }
        Ok(Self { p, p_prime: p / (p - 1.0), delta, nu })
    }

    fn has_interface(&self) -> bool {
        self.p > 2.0
    }
}

pub fn to_real(zeta: Complex64, eta: Complex64) -> [f64; 4] {
    [zeta.re, zeta.im, eta.re, eta.im]
}

pub fn from_real(x: &[f64; 4]) -> (Complex64, Complex64) {
    (Complex64::new(x[0], x[1]), Complex64::new(x[2], x[3]))
}

#[derive(Debug, Clone, Copy)]
struct Monomial {
    c: f64,
    a: f64,
    b: f64,
}

fn first_branch(params: &BellmanParams, rho: f64, sigma: f64) -> bool {
    rho.powf(params.p) <= sigma.powf(params.p_prime)
}

fn monomials(params: &BellmanParams, rho: f64, sigma: f64) -> Vec<Monomial> {
    let (p, q, d) = (params.p, params.p_prime, params.delta);
    if first_branch(params, rho, sigma) {
        vec![
            Monomial { c: 1.0, a: p, b: 0.0 },
            Monomial { c: 1.0, a: 0.0, b: q },
            Monomial { c: d, a: 2.0, b: 2.0 - q },
        ]
    } else {
        vec![
            Monomial { c: 1.0 + 2.0 * d / p, a: p, b: 0.0 },
            Monomial { c: 1.0 + d * (1.0 - 2.0 / p), a: 0.0, b: q },
        ]
    }
}

// r^e with 0^0 = 1
fn pow(r: f64, e: f64) -> f64 {
    if e == 0.0 {
        1.0
    } else {
        r.powf(e)
    }
}

/// `Q(zeta, eta)`.
pub fn bellman_eval(params: &BellmanParams, zeta: Complex64, eta: Complex64) -> f64 {
    let (rho, sigma) = (zeta.norm(), eta.norm());
    monomials(params, rho, sigma).iter().map(|m| m.c * pow(rho, m.a) * pow(sigma, m.b)).sum()
}

/// `d/dz |z|^q = (q/2) |z|^{q-2} conj(z)`, extended by 0 at the origin.
pub fn wirtinger_power(q: f64, z: Complex64) -> Complex64 {
    let r = z.norm();
    if r == 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    z.conj() * (0.5 * q * r.powf(q - 2.0))
}

/// Whether `(zeta, eta)` lies in the excluded band around the branch interface.
pub fn on_singular_set(params: &BellmanParams, zeta: Complex64, eta: Complex64) -> bool {
    if !params.has_interface() {
        return false;
    }
    let lhs = zeta.norm().powf(params.p);
    let gap = (lhs - eta.norm().powf(params.p_prime)).abs();
    gap < SINGULAR_EPS * lhs.max(1.0) && !(zeta.norm() == 0.0 && eta.norm() == 0.0)
}

fn singular(zeta: Complex64, eta: Complex64) -> Error {
    Error::OnSingularSet { zeta: zeta.to_string(), eta: eta.to_string() }
}

// |r|^{e-2} r as a factor for the gradient of r^e in the plane; None if unbounded.
fn radial_gradient_factor(r: f64, e: f64) -> Option<f64> {
    if r > 0.0 {
        Some(e * r.powf(e - 2.0))
    } else if e > 1.0 || e == 0.0 {
        Some(0.0)
    } else {
        None
    }
}

/// Real gradient of `Q` in `(Re zeta, Im zeta, Re eta, Im eta)`.
pub fn real_gradient(params: &BellmanParams, zeta: Complex64, eta: Complex64) -> Result<Vector4<f64>> {
    if on_singular_set(params, zeta, eta) {
        return Err(singular(zeta, eta));
    }
    let (rho, sigma) = (zeta.norm(), eta.norm());
    let mut g = Vector4::zeros();
    if rho == 0.0 && sigma == 0.0 {
        return Ok(g);
    }
    for m in monomials(params, rho, sigma) {
        if m.a != 0.0 {
            let f = radial_gradient_factor(rho, m.a).ok_or_else(|| singular(zeta, eta))?;
            let s = m.c * f * pow(sigma, m.b);
            g[0] += s * zeta.re;
            g[1] += s * zeta.im;
        }
        if m.b != 0.0 {
            let f = radial_gradient_factor(sigma, m.b).ok_or_else(|| singular(zeta, eta))?;
            let s = m.c * f * pow(rho, m.a);
            g[2] += s * eta.re;
            g[3] += s * eta.im;
        }
    }
    Ok(g)
}

/// Wirtinger derivatives `(d_zeta Q, d_eta Q)`.
pub fn bellman_gradient(params: &BellmanParams, zeta: Complex64, eta: Complex64) -> Result<(Complex64, Complex64)> {
    let g = real_gradient(params, zeta, eta)?;
    Ok((Complex64::new(0.5 * g[0], -0.5 * g[1]), Complex64::new(0.5 * g[2], -0.5 * g[3])))
}

// Hessian block of r^e in the plane at u: e r^{e-2} I + e (e-2) r^{e-4} u u^T.
fn radial_hessian(r: f64, e: f64, u: [f64; 2]) -> Option<[[f64; 2]; 2]> {
    if e == 0.0 {
        return Some([[0.0; 2]; 2]);
    }
    if r == 0.0 {
        return if e == 2.0 {
            Some([[2.0, 0.0], [0.0, 2.0]])
        } else if e > 2.0 {
            Some([[0.0; 2]; 2])
        } else {
            None
        };
    }
    let d = e * r.powf(e - 2.0);
    let k = e * (e - 2.0) * r.powf(e - 4.0);
    Some([[d + k * u[0] * u[0], k * u[0] * u[1]], [k * u[1] * u[0], d + k * u[1] * u[1]]])
}

/// Real `4 x 4` Hessian of `Q`.
pub fn bellman_hessian(params: &BellmanParams, zeta: Complex64, eta: Complex64) -> Result<Matrix4<f64>> {
    if on_singular_set(params, zeta, eta) {
        return Err(singular(zeta, eta));
    }
    let (rho, sigma) = (zeta.norm(), eta.norm());
    let (u, v) = ([zeta.re, zeta.im], [eta.re, eta.im]);
    let mut h = Matrix4::zeros();
    for m in monomials(params, rho, sigma) {
        let err = || singular(zeta, eta);
        if m.a != 0.0 {
            let huu = radial_hessian(rho, m.a, u).ok_or_else(err)?;
            let s = m.c * pow(sigma, m.b);
            for i in 0..2 {
                for j in 0..2 {
                    h[(i, j)] += s * huu[i][j];
                }
            }
        }
        if m.b != 0.0 {
            let hvv = radial_hessian(sigma, m.b, v).ok_or_else(err)?;
            let s = m.c * pow(rho, m.a);
            for i in 0..2 {
                for j in 0..2 {
                    h[(2 + i, 2 + j)] += s * hvv[i][j];
                }
            }
        }
        if m.a != 0.0 && m.b != 0.0 {
            let fu = radial_gradient_factor(rho, m.a).ok_or_else(err)?;
            let fv = radial_gradient_factor(sigma, m.b).ok_or_else(err)?;
            let s = m.c * fu * fv;
            for i in 0..2 {
                for j in 0..2 {
                    h[(i, 2 + j)] += s * u[i] * v[j];
                    h[(2 + j, i)] += s * u[i] * v[j];
                }
            }
        }
    }
    Ok(h)
}

/// Central-difference Hessian of `Q` at a real point.
pub fn difference_hessian(params: &BellmanParams, x: &[f64; 4], h: f64) -> Matrix4<f64> {
    let q = |y: [f64; 4]| {
        let (z, e) = from_real(&y);
        bellman_eval(params, z, e)
    };
    let shift = |mut y: [f64; 4], i: usize, s: f64| {
        y[i] += s;
        y
    };
    let mut out = Matrix4::zeros();
    let q0 = q(*x);
    for i in 0..4 {
        out[(i, i)] = (q(shift(*x, i, h)) - 2.0 * q0 + q(shift(*x, i, -h))) / (h * h);
        for j in i + 1..4 {
            let pp = q(shift(shift(*x, i, h), j, h));
            let pm = q(shift(shift(*x, i, h), j, -h));
            let mp = q(shift(shift(*x, i, -h), j, h));
            let mm = q(shift(shift(*x, i, -h), j, -h));
            let v = (pp - pm - mp + mm) / (4.0 * h * h);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    out
}

/// Generalized Hessian `(1/2) sum_k w_k . hess u_k` with `u_k` from `(X1, X2)` and `w_k` from `(A X1, B X2)`.
pub fn generalized_hessian(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    hess: &Matrix4<f64>,
    x1: &[Complex64],
    x2: &[Complex64],
) -> Result<f64> {
    let d = a.dim();
    for (expected, got) in [(d, b.dim()), (d, x1.len()), (d, x2.len())] {
        if expected != got {
            return Err(Error::DimensionMismatch { expected, got });
        }
    }
    let (ax, bx) = (a.apply(x1), b.apply(x2));
    let mut total = 0.0;
    for k in 0..d {
        let u = Vector4::new(x1[k].re, x1[k].im, x2[k].re, x2[k].im);
        let w = Vector4::new(ax[k].re, ax[k].im, bx[k].re, bx[k].im);
        total += w.dot(&(hess * u));
    }
    Ok(0.5 * total)
}

/// Largest observed `|DQ(z)| / (|z|^{p-1} + |z|^{p'-1})` over the given points.
pub fn gradient_growth_constant(params: &BellmanParams, points: &[(Complex64, Complex64)]) -> f64 {
    points
        .iter()
        .filter_map(|&(z, e)| {
            let g = real_gradient(params, z, e).ok()?;
            let r = (z.norm_sqr() + e.norm_sqr()).sqrt();
            (r > 0.0).then(|| g.norm() / (r.powf(params.p - 1.0) + r.powf(params.p_prime - 1.0)))
        })
        .fold(0.0, f64::max)
}
