use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spectral_bounds;
use crate::ellipticity::{conjugate_exponent, theta_p};
use crate::error::{Error, Result};
use crate::linalg::c;
use crate::operator::DiscreteOperator;

const THETA_TOL: f64 = 1e-6;

/// `phi_s(z) = (z / (1 + z)^2)^s`, holomorphic on `|arg z| < pi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhiS {
    pub s: f64,
}

impl PhiS {
    pub fn eval(&self, z: Complex64) -> Complex64 {
        z.powf(self.s) * (c(1.0, 0.0) + z).powf(-2.0 * self.s)
    }

    /// `sup |phi_s|` on the sector `|arg z| < omega`, attained at `|z| = 1, arg z = omega`.
    pub fn sup_norm(&self, omega: f64) -> f64 {
        (0.5 / (1.0 + omega.cos())).powf(self.s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContourOptions {
    pub nodes_per_ray: usize,
    /// Radii span `[lo * mu_min, hi * mu_max]`.
    pub lo: f64,
    pub hi: f64,
    /// Largest allowed relative tail remainder.
    pub tail_tol: f64,
}

impl Default for ContourOptions {
    fn default() -> Self {
        Self { nodes_per_ray: 400, lo: 1e-6, hi: 1e6, tail_tol: 1e-8 }
    }
}

fn dense_l(op: &DiscreteOperator) -> DMatrix<Complex64> {
    let mut l = op.stiffness.to_dense();
    for i in 0..l.nrows() {
        let w = op.mass[i];
        l.row_mut(i).iter_mut().for_each(|z| *z /= w);
    }
    l
}

/// `(z - L_h)^{-1}` as a dense matrix.
fn dense_resolvent(op: &DiscreteOperator, z: Complex64) -> Result<DMatrix<Complex64>> {
    let n = op.n_dofs();
    let diag: Vec<Complex64> = op.mass.iter().map(|&m| z * m).collect();
    let lu = op.factor_affine(c(-1.0, 0.0), &diag)?;
    let mut out = DMatrix::zeros(n, n);
    let mut e = vec![c(0.0, 0.0); n];
    for j in 0..n {
        e[j] = c(op.mass[j], 0.0);
        let col = lu.solve(&e);
        e[j] = c(0.0, 0.0);
        out.column_mut(j).iter_mut().zip(col).for_each(|(o, v)| *o = v);
    }
    Ok(out)
}

fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `phi(L_h)` by trapezoid quadrature in `log r` of the Cauchy integral over the rays
/// `r e^{+-i nu}`, with the two leading asymptotic terms of each tail added in closed form.
pub fn hinfty_apply(op: &DiscreteOperator, phi: PhiS, nu: f64, opts: &ContourOptions) -> Result<DMatrix<Complex64>> {
    let omega = std::f64::consts::FRAC_PI_2 - theta_p(op.field(), 2.0, THETA_TOL)?;
    if !(nu > omega) {
        return Err(Error::AngleConflict { nu, reason: format!("must exceed the sector angle {omega:.6}") });
    }
    if !(nu < PI) {
        return Err(Error::AngleConflict { nu, reason: "phi is holomorphic only on |arg z| < pi".into() });
    }
    if !(phi.s > 0.0) || opts.nodes_per_ray < 2 {
        return Err(Error::InvalidInput(format!("phi_s with s = {}, {} nodes", phi.s, opts.nodes_per_ray)));
    }
    let (mu_min, mu_max) = spectral_bounds(op)?;
    let (a, b) = (opts.lo * mu_min, opts.hi * mu_max);
    let (ua, ub) = (a.ln(), b.ln());
    let n = opts.nodes_per_ray;
    let h = (ub - ua) / (n - 1) as f64;
    let (down, up) = (Complex64::from_polar(1.0, -nu), Complex64::from_polar(1.0, nu));
    let scale = c(0.0, -1.0 / (2.0 * PI));
    let node = |k: usize| -> Result<DMatrix<Complex64>> {
        let r = (ua + h * k as f64).exp();
        let (zd, zu) = (down * r, up * r);
        let lower = dense_resolvent(op, zd)? * (phi.eval(zd) * down);
        let upper = dense_resolvent(op, zu)? * (phi.eval(zu) * up);
        Ok((lower - upper) * (scale * r))
    };
    let s = phi.s;
    // trapezoid weights plus the Euler-Maclaurin endpoint terms, using the endpoint slopes
    // (s + 1) g near 0 and -s g near infinity in log r
    let weight = |k: usize| {
        if k == 0 {
            0.5 * h + (s + 1.0) * h * h / 12.0
        } else if k == n - 1 {
            0.5 * h + s * h * h / 12.0
        } else {
            h
        }
    };
    let dim = op.n_dofs();
    let (first, last) = (node(0)?, node(n - 1)?);
    // fixed chunks summed in order keep the result independent of the thread count
    const CHUNK: usize = 16;
    let interior: Vec<usize> = (1..n - 1).collect();
    let partial: Vec<DMatrix<Complex64>> = interior
        .par_chunks(CHUNK)
        .map(|ks| {
            ks.iter().try_fold(DMatrix::zeros(dim, dim), |acc, &k| Ok(acc + node(k)? * c(weight(k), 0.0)))
        })
        .collect::<Result<_>>()?;
    let mut total = partial.into_iter().fold(DMatrix::zeros(dim, dim), |acc, m| acc + m);
    total += &first * c(weight(0), 0.0) + &last * c(weight(n - 1), 0.0);
    let l = dense_l(op);
    let id = DMatrix::<Complex64>::identity(op.n_dofs(), op.n_dofs());
    let linv = l.clone().try_inverse().ok_or(Error::SingularSystem)?;
    // near 0: phi R = -z^s [L^{-1} + z (L^{-2} - 2 s L^{-1})] + ...
    let near = |beta: f64| (nu * (beta + 1.0)).sin() * a.powf(beta + 1.0) / (PI * (beta + 1.0));
    let second_near = &linv * &linv - &linv * c(2.0 * s, 0.0);
    total += &linv * c(near(s), 0.0) + &second_near * c(near(s + 1.0), 0.0);
    // near inf: phi R = z^{-s-1} [I + z^{-1} (L - 2 s I)] + ...
    let far = |alpha: f64| (nu * (alpha - 1.0)).sin() * b.powf(1.0 - alpha) / (PI * (alpha - 1.0));
    let second_far = &l - &id * c(2.0 * s, 0.0);
    total += &id * c(far(s + 1.0), 0.0) + &second_far * c(far(s + 2.0), 0.0);

    let remainder = max_abs(&second_near) * near(s + 1.0).abs() * a * (1.0 / mu_min + 2.0 * s)
        + max_abs(&second_far) * far(s + 2.0).abs() * (mu_max + 2.0 * s) / b
        + h.powi(4) / 720.0 * ((s + 1.0).powi(3) * max_abs(&first) + s.powi(3) * max_abs(&last));
    let size = max_abs(&total);
    if remainder > opts.tail_tol * size {
        return Err(Error::ContourError { tail: remainder / size });
    }
    Ok(total)
}

/// `L_h (1 + L_h)^{-2}` by direct solves, the rational reference for `phi_1`.
pub fn direct_phi_one(op: &DiscreteOperator) -> Result<DMatrix<Complex64>> {
    let n = op.n_dofs();
    let lu = op.factor_affine(c(1.0, 0.0), &op.mass.iter().map(|&m| c(m, 0.0)).collect::<Vec<_>>())?;
    let mut out = DMatrix::zeros(n, n);
    let mut e = vec![c(0.0, 0.0); n];
    for j in 0..n {
        e[j] = c(1.0, 0.0);
        // (1 + L)^{-1} x = (M + S)^{-1} M x
        let once = lu.solve(&op.mass_apply(&e));
        let twice = lu.solve(&op.mass_apply(&once));
        let col: Vec<Complex64> = op.stiffness.matvec(&twice).iter().zip(&op.mass).map(|(z, w)| z / w).collect();
        e[j] = c(0.0, 0.0);
        out.column_mut(j).iter_mut().zip(col).for_each(|(o, v)| *o = v);
    }
    Ok(out)
}

fn weighted_p_norm(v: &[Complex64], w: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return v.iter().map(|z| z.norm()).fold(0.0, f64::max);
    }
    v.iter().zip(w).map(|(z, w)| w * z.norm().powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Unit-norm element of `L^q(w)` dual to `v`: `|v|^{p-1} sgn(v) / |v|_p^{p-1}`.
fn duality_map(v: &[Complex64], w: &[f64], p: f64) -> Vec<Complex64> {
    let n = weighted_p_norm(v, w, p);
    if n == 0.0 {
        return v.to_vec();
    }
    v.iter()
        .map(|z| {
            let m = z.norm();
            if m == 0.0 {
                c(0.0, 0.0)
            } else {
                z / m * (m / n).powf(p - 1.0)
            }
        })
        .collect()
}

/// Lower estimate of `|T|_{p -> p}` on `L^p(w)` by Hölder-duality power iteration.
pub fn p_norm_estimate(t: &DMatrix<Complex64>, w: &[f64], p: f64, iterations: usize, restarts: usize, seed: u64) -> f64 {
    if !(p > 1.0 && p.is_finite()) {
        return f64::NAN;
    }
    let q = conjugate_exponent(p);
    let n = t.nrows();
    // adjoint in the pairing sum_i w_i x_i conj(y_i): W^{-1} T* W
    let mut adj = t.adjoint();
    for i in 0..n {
        for j in 0..n {
            adj[(i, j)] *= w[j] / w[i];
        }
    }
    let apply = |m: &DMatrix<Complex64>, v: &[Complex64]| -> Vec<Complex64> { (m * nalgebra::DVector::from_column_slice(v)).iter().copied().collect() };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: f64 = 0.0;
    for restart in 0..restarts {
        let mut v: Vec<Complex64> = if restart == 0 {
            vec![c(1.0, 0.0); n]
        } else {
            (0..n).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
        };
        let nv = weighted_p_norm(&v, w, p);
        v.iter_mut().for_each(|z| *z /= nv);
        for _ in 0..iterations {
            let tv = apply(t, &v);
            best = best.max(weighted_p_norm(&tv, w, p));
            let s = duality_map(&tv, w, p);
            let z = apply(&adj, &s);
            if weighted_p_norm(&z, w, q) == 0.0 {
                break;
            }
            v = duality_map(&z, w, q);
        }
        best = best.max(weighted_p_norm(&apply(t, &v), w, p));
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HinftyRow {
    pub s: f64,
    pub nu: f64,
    pub est_norm_p: f64,
    pub sup_norm_phi: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HinftyReport {
    pub p: f64,
    pub rows: Vec<HinftyRow>,
    pub max_ratio: f64,
}

impl HinftyReport {
    /// CSV with columns `s,nu,est_norm_p,sup_norm_phi,ratio`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let err = crate::ellipticity::csv_err;
        out.write_record(["s", "nu", "est_norm_p", "sup_norm_phi", "ratio"]).map_err(err)?;
        for r in &self.rows {
            out.write_record([r.s, r.nu, r.est_norm_p, r.sup_norm_phi, r.ratio].map(|x| x.to_string())).map_err(err)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Ratios `|phi_s(L_h)|_{p -> p} / sup_{S_nu} |phi_s|` over the family; requires
/// `pi/2 - theta_p < nu < pi`.
pub fn hinfty_bound_check(
    op: &DiscreteOperator,
    p: f64,
    family: &[f64],
    nu: f64,
    opts: &ContourOptions,
    seed: u64,
) -> Result<HinftyReport> {
    let limit = std::f64::consts::FRAC_PI_2 - theta_p(op.field(), p, THETA_TOL)?;
    if !(nu > limit) {
        return Err(Error::AngleConflict { nu, reason: format!("must exceed pi/2 - theta_p = {limit:.6}") });
    }
    let rows = family
        .iter()
        .map(|&s| {
            let phi = PhiS { s };
            let t = hinfty_apply(op, phi, nu, opts)?;
            let est = p_norm_estimate(&t, &op.mass, p, 50, 5, seed);
            let sup = phi.sup_norm(nu);
            Ok(HinftyRow { s, nu, est_norm_p: est, sup_norm_phi: sup, ratio: est / sup })
        })
        .collect::<Result<Vec<_>>>()?;
    let max_ratio = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(HinftyReport { p, rows, max_ratio })
}
