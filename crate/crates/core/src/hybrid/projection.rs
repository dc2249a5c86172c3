use super::function::{hybrid_norm, HybridFunction};
use super::mesh::HybridMesh;
use crate::error::{Error, Result};

pub const PROJECTION_TOL: f64 = 1e-10;
const MAX_BISECTIONS: usize = 200;

/// Root `s in [0, a]` of `s + t s^{q-1} = a`.
fn scalar_root(a: f64, t: f64, q: f64) -> f64 {
    if a == 0.0 || t == 0.0 {
        return a;
    }
    let f = |s: f64| s + t * s.powf(q - 1.0) - a;
    let (mut lo, mut hi) = (0.0, a.min((a / t).powf(1.0 / (q - 1.0))));
    let mut s = hi;
    for _ in 0..200 {
        let fs = f(s);
        if fs.abs() <= 1e-15 * a {
            return s;
        }
        if fs > 0.0 {
            hi = s;
        } else {
            lo = s;
        }
        let newton = s - fs / (1.0 + t * (q - 1.0) * s.powf(q - 2.0));
        s = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo <= 1e-16 * a {
            break;
        }
    }
    s
}

fn shrink(u: &HybridFunction, t: f64, q: f64) -> HybridFunction {
    u.map(|z| {
        let a = z.norm();
        if a == 0.0 {
            z
        } else {
            z * (scalar_root(a, t, q) / a)
        }
    })
}

/// Projection onto the unit ball of the lumped hybrid `L^q` norm, `q in [2, inf]`.
///
/// Returns `(Pu, t)` with `u = Pu + t |Pu|^{q-2} Pu` nodewise; `t = 0` when `u` is already
/// in the ball and for `q = inf`, where `Pu = (|u| ^ 1) sgn(u)`.
pub fn project_lq_ball(mesh: &HybridMesh, u: &HybridFunction, q: f64) -> Result<(HybridFunction, f64)> {
    if !(q >= 2.0) {
        return Err(Error::BadExponent(q));
    }
    let norm = hybrid_norm(mesh, u, q)?;
    if norm <= 1.0 {
        return Ok((u.clone(), 0.0));
    }
    if q.is_infinite() {
        return Ok((u.map(|z| if z.norm() <= 1.0 { z } else { z / z.norm() }), 0.0));
    }
    if q == 2.0 {
        return Ok((u.map(|z| z / norm), norm - 1.0));
    }
    let n = |t: f64| hybrid_norm(mesh, &shrink(u, t, q), q).expect("validated exponent");
    let mut hi = 1.0;
    let mut iterations = 0;
    while n(hi) > 1.0 {
        hi *= 2.0;
        iterations += 1;
        if iterations > MAX_BISECTIONS {
            return Err(Error::NoConvergence { what: "projection bracket", iterations });
        }
    }
    let mut lo = 0.0;
    for it in 0..MAX_BISECTIONS {
        let t = 0.5 * (lo + hi);
        let v = n(t);
        if (v - 1.0).abs() <= PROJECTION_TOL {
            return Ok((shrink(u, t, q), t));
        }
        if v > 1.0 {
            lo = t;
        } else {
            hi = t;
        }
        if hi - lo <= f64::EPSILON * hi && (n(hi) - 1.0).abs() <= 1e-8 {
            return Ok((shrink(u, hi, q), hi));
        }
        iterations = it;
    }
    Err(Error::NoConvergence { what: "projection bisection", iterations: iterations + 1 })
}
