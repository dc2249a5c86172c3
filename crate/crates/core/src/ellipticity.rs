//! Ellipticity and p-ellipticity invariants of coefficient fields.
//!
//! With `r = 1 - 2/p` and `xi = alpha + i beta`, the real quadratic form
//! `Re(A xi . conj(xi + r conj(xi)))` on `R^{2d}` has the block matrix
//!
//! ```text
//! [ (1+r) Re A   -(1+r) Im A ]
//! [ (1-r) Im A    (1-r) Re A ]
//! ```
//!
//! so `Delta_p` is the smallest eigenvalue of its symmetric part, minimized
//! over cells. Everything else in this module is built on that reduction.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coefficients::{CoefficientField, ComplexMatrix};
use crate::error::{Error, Result};

/// Strict positivity threshold for the p-ellipticity predicate.
pub const PREDICATE_EPS: f64 = 1e-12;

pub fn conjugate_exponent(p: f64) -> f64 {
    p / (p - 1.0)
}

fn check_exponent(p: f64) -> Result<()> {
    if p.is_finite() && p > 1.0 {
        Ok(())
    } else {
        Err(Error::BadExponent(p))
    }
}

/// Symmetrized `2d x 2d` real form matrix of `A` for exponent `p`.
pub fn form_matrix(a: &ComplexMatrix, p: f64) -> DMatrix<f64> {
    let d = a.dim();
    let r = 1.0 - 2.0 / p;
    let (re, im) = (a.real_part(), a.imag_part());
    let mut m = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            m[(i, j)] = (1.0 + r) * re[(i, j)];
            m[(i, d + j)] = -(1.0 + r) * im[(i, j)];
            m[(d + i, j)] = (1.0 - r) * im[(i, j)];
            m[(d + i, d + j)] = (1.0 - r) * re[(i, j)];
        }
    }
    (&m + m.transpose()) * 0.5
}

/// Smallest eigenvalue of a real symmetric matrix and a unit eigenvector.
pub(crate) fn min_eigenpair(m: DMatrix<f64>) -> (f64, Vec<f64>) {
    let eig = SymmetricEigen::new(m);
    let k = eig.eigenvalues.imin();
    (eig.eigenvalues[k], eig.eigenvectors.column(k).iter().copied().collect())
}

fn matrix_delta_p(a: &ComplexMatrix, p: f64) -> f64 {
    min_eigenpair(form_matrix(a, p)).0
}

/// `Delta_p(A)`: min over cells of the smallest eigenvalue of the form matrix.
pub fn delta_p(field: &CoefficientField, p: f64) -> Result<f64> {
    check_exponent(p)?;
    Ok(field.matrices().iter().map(|a| matrix_delta_p(a, p)).fold(f64::INFINITY, f64::min))
}

/// Minimizing direction `xi in C^d` for `Delta_p` on a single matrix.
pub fn delta_p_minimizer(a: &ComplexMatrix, p: f64) -> Vec<Complex64> {
    let d = a.dim();
    let (_, v) = min_eigenpair(form_matrix(a, p));
    (0..d).map(|k| Complex64::new(v[k], v[d + k])).collect()
}

/// `lambda(A)`, the `p = 2` case of the form matrix. May be `<= 0`.
pub fn lambda_lower(field: &CoefficientField) -> f64 {
    field.matrices().iter().map(|a| matrix_delta_p(a, 2.0)).fold(f64::INFINITY, f64::min)
}

/// `lambda(A)` through the Hermitian part `(A + A*)/2`; independent of the form matrix.
pub fn lambda_hermitian_route(field: &CoefficientField) -> f64 {
    field
        .matrices()
        .iter()
        .map(|a| {
            let m = a.as_matrix();
            let h = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
            SymmetricEigen::new(h).eigenvalues.min()
        })
        .fold(f64::INFINITY, f64::min)
}

fn numerical_range_point(a: &ComplexMatrix, xi: &[Complex64]) -> Complex64 {
    let ax = a.apply(xi);
    ax.iter().zip(xi).map(|(u, v)| u * v.conj()).sum()
}

fn abs_arg(a: &ComplexMatrix, xi: &[Complex64]) -> f64 {
    numerical_range_point(a, xi).arg().abs()
}

fn unit(xi: Vec<Complex64>) -> Vec<Complex64> {
    let n = xi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    xi.into_iter().map(|z| z / n).collect()
}

// The value Aξ·ξ̄ is invariant under ξ -> e^{iφ}ξ, so for d = 2 the sphere
// reduces to (cos a, e^{ib} sin a) with a in [0, π/2], b in [0, 2π).
fn omega_2d(a: &ComplexMatrix) -> f64 {
    let eval = |s: f64, t: f64| {
        abs_arg(a, &[Complex64::new(s.cos(), 0.0), Complex64::from_polar(s.sin(), t)])
    };
    const N: usize = 100;
    let mut samples: Vec<(f64, f64, f64)> = Vec::with_capacity(N * N);
    for i in 0..N {
        let s = FRAC_PI_2 * i as f64 / (N - 1) as f64;
        for j in 0..N {
            let t = std::f64::consts::TAU * j as f64 / N as f64;
            samples.push((eval(s, t), s, t));
        }
    }
    samples.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut best = samples[0].0;
    let (mut hs, mut ht) = (FRAC_PI_2 / (N - 1) as f64, std::f64::consts::TAU / N as f64);
    let mut candidates: Vec<(f64, f64, f64)> = samples.into_iter().take(5).collect();
    for _round in 0..3 {
        let mut next = Vec::new();
        for &(_, s0, t0) in &candidates {
            let mut local = (eval(s0, t0), s0, t0);
            for di in -5i32..=5 {
                for dj in -5i32..=5 {
                    let s = (s0 + di as f64 * hs / 5.0).clamp(0.0, FRAC_PI_2);
                    let t = t0 + dj as f64 * ht / 5.0;
                    let v = eval(s, t);
                    if v > local.0 {
                        local = (v, s, t);
                    }
                }
            }
            best = best.max(local.0);
            next.push(local);
        }
        candidates = next;
        hs /= 5.0;
        ht /= 5.0;
    }
    best
}

fn omega_general(a: &ComplexMatrix) -> f64 {
    let d = a.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let draw = |rng: &mut ChaCha8Rng| {
        unit((0..d).map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect())
    };
    let mut samples: Vec<(f64, Vec<Complex64>)> = (0..10_000)
        .map(|_| {
            let xi = draw(&mut rng);
            (abs_arg(a, &xi), xi)
        })
        .collect();
    samples.sort_by(|x, y| y.0.total_cmp(&x.0));
    let mut best = samples[0].0;
    let mut radius = 0.05;
    for (mut value, mut xi) in samples.into_iter().take(5) {
        for _round in 0..3 {
            for _ in 0..400 {
                let trial = unit(
                    xi.iter()
                        .map(|z| z + Complex64::new(rng.random_range(-radius..radius), rng.random_range(-radius..radius)))
                        .collect(),
                );
                let v = abs_arg(a, &trial);
                if v > value {
                    value = v;
                    xi = trial;
                }
            }
            radius /= 5.0;
        }
        best = best.max(value);
        radius = 0.05;
    }
    best
}

/// `omega(A)`: sup of `|arg(A xi . conj(xi))|`, by sphere sampling with local refinement.
pub fn omega_angle(field: &CoefficientField) -> Result<f64> {
    let lambda = lambda_lower(field);
    if lambda <= PREDICATE_EPS {
        return Err(Error::NotElliptic { lambda });
    }
    Ok(field
        .matrices()
        .iter()
        .map(|a| if a.dim() == 2 { omega_2d(a) } else { omega_general(a) })
        .fold(0.0, f64::max))
}

/// Certified upper bound `arccos(lambda / Lambda)` for `omega(A)`.
pub fn omega_upper_bound(field: &CoefficientField) -> f64 {
    (lambda_lower(field) / field.sup_operator_norm()).clamp(-1.0, 1.0).acos()
}

fn rotated_pair_positive(field: &CoefficientField, p: f64, theta: f64) -> bool {
    let plus = field.matrices().iter().all(|a| matrix_delta_p(&a.rotate(theta), p) > PREDICATE_EPS);
    plus && field.matrices().iter().all(|a| matrix_delta_p(&a.rotate(-theta), p) > PREDICATE_EPS)
}

/// `theta_p`: sup of `theta in [0, pi/2)` with `e^{+-i theta} A` p-elliptic, within `tol` from below.
pub fn theta_p(field: &CoefficientField, p: f64, tol: f64) -> Result<f64> {
    let delta = delta_p(field, p)?;
    if delta <= PREDICATE_EPS {
        return Err(Error::NotPElliptic { p, delta });
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("bisection tolerance {tol}")));
    }
    let (mut lo, mut hi) = (0.0, FRAC_PI_2);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if rotated_pair_positive(field, p, mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// `|p - 2| / (2 sqrt(p - 1))`.
pub fn sigma_p(p: f64) -> Result<f64> {
    check_exponent(p)?;
    Ok((p - 2.0).abs() / (2.0 * (p - 1.0).sqrt()))
}

/// `sigma_p * |Im A|_inf < lambda(A)`.
pub fn smallness_criterion(field: &CoefficientField, p: f64) -> Result<bool> {
    Ok(sigma_p(p)? * field.imag_part().sup_operator_norm() < lambda_lower(field))
}

/// Explicit lower bounds for `theta_p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleBounds {
    /// arctan of `(lambda - sigma_p |Im A|) / (lambda tan(omega) + sigma_p |Re A|)`.
    pub smallness_bound: f64,
    /// Set when `sigma_p = 0`; the value is then capped by `pi/2 - omega`.
    pub degenerate: bool,
    /// Sharper bound available for real-valued fields.
    pub real_coefficient_bound: Option<f64>,
    /// Bound for symmetric `Im A` with `|1 - 2/p| < cos(omega)`.
    pub symmetric_imaginary_bound: Option<f64>,
}

pub fn angle_lower_bounds(field: &CoefficientField, p: f64) -> Result<AngleBounds> {
    let omega = omega_angle(field)?;
    angle_lower_bounds_with_omega(field, p, omega)
}

/// As [`angle_lower_bounds`], reusing a precomputed `omega(A)`.
pub fn angle_lower_bounds_with_omega(field: &CoefficientField, p: f64, omega: f64) -> Result<AngleBounds> {
    let sigma = sigma_p(p)?;
    let lambda = lambda_lower(field);
    let im_norm = field.imag_part().sup_operator_norm();
    let re_norm = field.real_part().sup_operator_norm();
    if sigma * im_norm >= lambda {
        return Err(Error::CriterionFailed { lhs: sigma * im_norm, lambda });
    }
    let tan_w = omega.tan();
    let num = lambda - sigma * im_norm;
    let den = lambda * tan_w + sigma * re_norm;
    let degenerate = sigma == 0.0;
    let mut smallness_bound = num.atan2(den);
    if degenerate {
        smallness_bound = smallness_bound.min(FRAC_PI_2 - omega);
    }

    let real_coefficient_bound = field.is_real().then(|| {
        let s = (sigma * sigma + p * p / (4.0 * (p - 1.0)) * tan_w * tan_w).sqrt();
        1.0f64.atan2(s)
    });

    let r = (1.0 - 2.0 / p).abs();
    let symmetric_imaginary_bound = (field.imag_part().is_symmetric(1e-14) && r < omega.cos()).then(|| {
        if field.real_part().is_symmetric(1e-14) {
            r.acos() - omega
        } else {
            let q = (p - 1.0).sqrt();
            ((1.0 - tan_w * sigma) / ((p - q) / q * tan_w + sigma)).atan()
        }
    });

    Ok(AngleBounds { smallness_bound, degenerate, real_coefficient_bound, symmetric_imaginary_bound })
}

/// One item of the structural p-ellipticity checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasicsItem {
    pub name: String,
    pub holds: bool,
    pub margin: f64,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasicsReport {
    pub items: Vec<BasicsItem>,
}

impl BasicsReport {
    pub fn item(&self, name: &str) -> Option<&BasicsItem> {
        self.items.iter().find(|i| i.name == name)
    }
}

pub const ITEM_DELTA2: &str = "delta2_equals_lambda";
pub const ITEM_ADJOINT: &str = "adjoint_duality";
pub const ITEM_CONJUGATE: &str = "conjugate_exponent_symmetry";
pub const ITEM_REAL: &str = "real_iff_all_p";
pub const ITEM_MONOTONE: &str = "monotone_beyond_two";
pub const ITEM_CONTINUITY: &str = "rotation_continuity";

/// Numerically checks the structural facts about `Delta_p` on an exponent grid.
pub fn basics_check(field: &CoefficientField, p_grid: &[f64]) -> Result<BasicsReport> {
    for &p in p_grid {
        check_exponent(p)?;
    }
    let mut items = Vec::new();

    let d2 = delta_p(field, 2.0)?;
    let lh = lambda_hermitian_route(field);
    let gap = (d2 - lh).abs();
    items.push(BasicsItem {
        name: ITEM_DELTA2.into(),
        holds: gap <= 1e-10,
        margin: -gap,
        note: format!("Delta_2 = {d2:.12}, lambda = {lh:.12}"),
    });

    let adjoint = field.adjoint();
    let mut adj_margin = f64::INFINITY;
    let mut conj_margin = f64::INFINITY;
    for &p in p_grid {
        let q = conjugate_exponent(p);
        let dp = delta_p(field, p)?;
        // the scaled duality bound concerns p-elliptic fields only
        if dp > PREDICATE_EPS {
            adj_margin = adj_margin.min(delta_p(&adjoint, p)? - dp * (p / q).min(q / p));
        }
        conj_margin = conj_margin.min(-(dp - delta_p(field, q)?).abs());
    }
    let adj_margin = if adj_margin.is_finite() { adj_margin } else { 0.0 };
    items.push(BasicsItem {
        name: ITEM_ADJOINT.into(),
        holds: adj_margin >= -1e-9,
        margin: adj_margin,
        note: String::new(),
    });
    items.push(BasicsItem {
        name: ITEM_CONJUGATE.into(),
        holds: conj_margin >= -1e-9,
        margin: conj_margin,
        note: String::new(),
    });

    let mut extended: Vec<f64> = p_grid.to_vec();
    extended.push(1e6);
    let min_delta = extended
        .iter()
        .map(|&p| delta_p(field, p))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    let all_positive = min_delta > PREDICATE_EPS;
    let real = field.is_real();
    items.push(BasicsItem {
        name: ITEM_REAL.into(),
        holds: all_positive,
        margin: min_delta,
        note: format!("real-valued: {real}; consistent: {}", real == all_positive),
    });

    let mut beyond: Vec<f64> = p_grid.iter().copied().filter(|&p| p >= 2.0).collect();
    beyond.sort_by(f64::total_cmp);
    beyond.dedup();
    let deltas = beyond.iter().map(|&p| delta_p(field, p)).collect::<Result<Vec<_>>>()?;
    let mono = deltas.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
    let mono = if mono.is_finite() { mono } else { 0.0 };
    items.push(BasicsItem {
        name: ITEM_MONOTONE.into(),
        holds: mono >= -1e-9,
        margin: mono,
        note: format!("{} exponents >= 2", beyond.len()),
    });

    // |Delta_p(B) - Delta_p(C)| <= (1 + |r|) |B - C| and |e^{is} - e^{it}| <= |s - t|.
    let big_lambda = field.sup_operator_norm();
    const STEPS: usize = 180;
    let h = std::f64::consts::PI / STEPS as f64;
    let mut cont_margin = f64::INFINITY;
    for &p in p_grid {
        let modulus = (1.0 + (1.0 - 2.0 / p).abs()) * big_lambda * h;
        let values: Vec<f64> = (1..STEPS)
            .map(|k| -FRAC_PI_2 + k as f64 * h)
            .map(|t| delta_p(&field.rotate(t), p))
            .collect::<Result<_>>()?;
        for w in values.windows(2) {
            cont_margin = cont_margin.min(modulus - (w[1] - w[0]).abs());
        }
    }
    let cont_margin = if cont_margin.is_finite() { cont_margin } else { 0.0 };
    items.push(BasicsItem {
        name: ITEM_CONTINUITY.into(),
        holds: cont_margin >= -1e-12,
        margin: cont_margin,
        note: format!("theta step {h:.5}"),
    });

    Ok(BasicsReport { items })
}

/// Per-exponent row of an [`EllipticityReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentRow {
    pub p: f64,
    pub p_conjugate: f64,
    pub delta_p: f64,
    pub theta_p: Option<f64>,
    pub sigma_p: f64,
    pub smallness: bool,
    pub bounds: Option<AngleBounds>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipticityReport {
    pub lambda: f64,
    pub big_lambda: f64,
    pub omega: f64,
    pub omega_upper_bound: f64,
    pub rows: Vec<ExponentRow>,
}

impl EllipticityReport {
    pub fn compute(field: &CoefficientField, p_list: &[f64], tol: f64) -> Result<Self> {
        let lambda = lambda_lower(field);
        let omega = omega_angle(field)?;
        let rows = p_list
            .iter()
            .map(|&p| {
                let delta = delta_p(field, p)?;
                let theta = if delta > PREDICATE_EPS { Some(theta_p(field, p, tol)?) } else { None };
                let smallness = smallness_criterion(field, p)?;
                let bounds = if smallness { Some(angle_lower_bounds_with_omega(field, p, omega)?) } else { None };
                Ok(ExponentRow {
                    p,
                    p_conjugate: conjugate_exponent(p),
                    delta_p: delta,
                    theta_p: theta,
                    sigma_p: sigma_p(p)?,
                    smallness,
                    bounds,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            lambda,
            big_lambda: field.sup_operator_norm(),
            omega,
            omega_upper_bound: omega_upper_bound(field),
            rows,
        })
    }

    pub fn row(&self, p: f64) -> Option<&ExponentRow> {
        self.rows.iter().find(|r| r.p == p)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        out.write_record([
            "p",
            "p_conjugate",
            "delta_p",
            "theta_p",
            "sigma_p",
            "smallness",
            "smallness_bound",
            "real_coefficient_bound",
            "symmetric_imaginary_bound",
            "lambda",
            "big_lambda",
            "omega",
        ])
        .map_err(csv_err)?;
        for r in &self.rows {
            let b = r.bounds.as_ref();
            out.write_record([
                r.p.to_string(),
                r.p_conjugate.to_string(),
                r.delta_p.to_string(),
                opt(r.theta_p),
                r.sigma_p.to_string(),
                r.smallness.to_string(),
                opt(b.map(|b| b.smallness_bound)),
                opt(b.and_then(|b| b.real_coefficient_bound)),
                opt(b.and_then(|b| b.symmetric_imaginary_bound)),
                self.lambda.to_string(),
                self.big_lambda.to_string(),
                self.omega.to_string(),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, FRAC_PI_6};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn field(m: ComplexMatrix) -> CoefficientField {
        CoefficientField::constant(m)
    }

    fn hermitian() -> CoefficientField {
        field(ComplexMatrix::from_complex2([[c(2.0, 0.0), c(0.0, 1.0)], [c(0.0, -1.0), c(2.0, 0.0)]]))
    }

    fn skew_real() -> CoefficientField {
        field(ComplexMatrix::real2(1.0, 1.0, -1.0, 1.0))
    }

    /// Brute-force min of Re(A xi . conj(xi + r conj xi)) over random unit xi.
    fn sampled_delta(a: &ComplexMatrix, p: f64, n: usize, seed: u64) -> f64 {
        let r = 1.0 - 2.0 / p;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut best = f64::INFINITY;
        for _ in 0..n {
            let xi = unit((0..2).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect());
            let ax = a.apply(&xi);
            let v: Complex64 = ax.iter().zip(&xi).map(|(u, x)| u * (x + r * x.conj()).conj()).sum();
            best = best.min(v.re);
        }
        best
    }

    #[test]
    fn lambda_examples() {
        assert_abs_diff_eq!(lambda_lower(&CoefficientField::identity(2)), 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(lambda_lower(&hermitian()), 1.0, epsilon = 1e-12);
        let sampled = sampled_delta(&hermitian().matrices()[0], 2.0, 100_000, 1);
        assert!((sampled - 1.0).abs() < 2e-3 && sampled >= 1.0 - 1e-12);
        assert_abs_diff_eq!(lambda_lower(&CoefficientField::identity(2).rotate(FRAC_PI_2)), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn omega_examples() {
        assert_abs_diff_eq!(omega_angle(&CoefficientField::identity(2)).unwrap(), 0.0, epsilon = 1e-12);
        let rotated = CoefficientField::identity(2).rotate(FRAC_PI_6);
        assert_abs_diff_eq!(omega_angle(&rotated).unwrap(), FRAC_PI_6, epsilon = 1e-9);
        assert_abs_diff_eq!(omega_angle(&skew_real()).unwrap(), FRAC_PI_4, epsilon = 1e-8);
        assert!(omega_angle(&skew_real()).unwrap() <= omega_upper_bound(&skew_real()) + 1e-12);
        let not_elliptic = CoefficientField::identity(2).rotate(FRAC_PI_2);
        assert!(matches!(omega_angle(&not_elliptic), Err(Error::NotElliptic { .. })));
    }

    #[test]
    fn omega_general_dimension_matches_2d_path() {
        let a = ComplexMatrix::from_complex2([[c(1.0, 0.3), c(0.5, -0.2)], [c(-0.4, 0.1), c(2.0, -0.5)]]);
        let fast = omega_2d(&a);
        let general = omega_general(&a);
        assert!((fast - general).abs() < 1e-4, "{fast} vs {general}");
    }

    #[test]
    fn delta_examples() {
        let id = CoefficientField::identity(2);
        assert_abs_diff_eq!(delta_p(&id, 4.0).unwrap(), 0.5, epsilon = 1e-14);
        let sampled = sampled_delta(&id.matrices()[0], 4.0, 100_000, 2);
        assert!((sampled - 0.5).abs() < 2e-3);
        assert_abs_diff_eq!(delta_p(&hermitian(), 2.0).unwrap(), lambda_lower(&hermitian()), epsilon = 1e-14);
        assert!(delta_p(&skew_real(), 10.0).unwrap() > 0.0);
        assert_eq!(delta_p(&id, 1.0), Err(Error::BadExponent(1.0)));
        assert_eq!(delta_p(&id, 0.5), Err(Error::BadExponent(0.5)));
    }

    #[test]
    fn minimizer_attains_delta() {
        let a = ComplexMatrix::from_complex2([[c(1.0, 0.3), c(0.5, -0.2)], [c(-0.4, 0.1), c(2.0, -0.5)]]);
        let p = 3.0;
        let xi = delta_p_minimizer(&a, p);
        let r = 1.0 - 2.0 / p;
        let ax = a.apply(&xi);
        let v: Complex64 = ax.iter().zip(&xi).map(|(u, x)| u * (x + r * x.conj()).conj()).sum();
        assert_abs_diff_eq!(v.re, matrix_delta_p(&a, p), epsilon = 1e-12);
    }

    #[test]
    fn theta_examples() {
        let id = CoefficientField::identity(2);
        assert_abs_diff_eq!(theta_p(&id, 4.0, 1e-4).unwrap(), FRAC_PI_3, epsilon = 1e-4);
        let t2 = theta_p(&id, 2.0, 1e-4).unwrap();
        assert!(t2 < FRAC_PI_2 && t2 >= FRAC_PI_2 - 1e-4);
        assert_abs_diff_eq!(theta_p(&skew_real(), 2.0, 1e-4).unwrap(), FRAC_PI_4, epsilon = 1e-3);
        let bad = field(ComplexMatrix::from_complex2([[c(1.0, 0.0), c(0.0, 3.0)], [c(0.0, 3.0), c(1.0, 0.0)]]));
        assert!(matches!(theta_p(&bad, 10.0, 1e-4), Err(Error::NotPElliptic { .. })));
    }

    #[test]
    fn theta_closed_form_on_identity() {
        // brute-force theta grid on the closed form cos(theta) - |1 - 2/p|
        for &p in &[2.5, 3.0, 4.0, 6.0] {
            let r = (1.0f64 - 2.0 / p).abs();
            let grid = (0..200_000).map(|k| k as f64 * FRAC_PI_2 / 200_000.0);
            let oracle = grid.take_while(|t| t.cos() - r > 0.0).last().unwrap();
            let theta = theta_p(&CoefficientField::identity(2), p, 1e-6).unwrap();
            assert!((theta - oracle).abs() < 1e-4, "p={p}: {theta} vs {oracle}");
            assert_abs_diff_eq!(theta, r.acos(), epsilon = 1e-5);
        }
    }

    #[test]
    fn sigma_and_smallness() {
        assert_eq!(sigma_p(2.0).unwrap(), 0.0);
        assert_abs_diff_eq!(sigma_p(4.0).unwrap(), 1.0 / 3f64.sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(sigma_p(4.0).unwrap(), sigma_p(4.0 / 3.0).unwrap(), epsilon = 1e-15);
        let a = field(ComplexMatrix::from_complex2([[c(1.0, 0.0), c(0.0, 0.1)], [c(0.0, -0.1), c(1.0, 0.0)]]));
        assert_abs_diff_eq!(a.imag_part().sup_operator_norm(), 0.1, epsilon = 1e-14);
        assert!(smallness_criterion(&a, 4.0).unwrap());
        assert!(sigma_p(1.0).is_err());
    }

    #[test]
    fn angle_bound_examples() {
        let id = CoefficientField::identity(2);
        let b4 = angle_lower_bounds(&id, 4.0).unwrap();
        assert_abs_diff_eq!(b4.smallness_bound, FRAC_PI_3, epsilon = 1e-9);
        assert!(!b4.degenerate);
        let b2 = angle_lower_bounds(&id, 2.0).unwrap();
        assert!(b2.degenerate);
        assert_abs_diff_eq!(b2.smallness_bound, FRAC_PI_2, epsilon = 1e-9);

        let a = skew_real();
        let b = angle_lower_bounds(&a, 4.0).unwrap();
        let theta = theta_p(&a, 4.0, 1e-6).unwrap();
        assert!(b.smallness_bound <= theta + 1e-6);
        assert!(b.real_coefficient_bound.unwrap() <= theta + 1e-6);
        assert!(b.symmetric_imaginary_bound.unwrap() <= theta + 1e-6);

        let big_im = field(ComplexMatrix::from_complex2([[c(1.0, 0.0), c(0.0, 3.0)], [c(0.0, 3.0), c(1.0, 0.0)]]));
        assert!(matches!(angle_lower_bounds(&big_im, 4.0), Err(Error::CriterionFailed { .. })));
    }

    #[test]
    fn basics_on_identity_and_hermitian() {
        let r = basics_check(&CoefficientField::identity(2), &[2.0, 3.0, 4.0, 8.0]).unwrap();
        for item in &r.items {
            assert!(item.holds, "{item:?}");
        }
        let h = basics_check(&hermitian(), &[3.0, 1.5]).unwrap();
        assert!(h.item(ITEM_CONJUGATE).unwrap().margin >= -1e-9);
        assert_abs_diff_eq!(delta_p(&hermitian(), 3.0).unwrap(), delta_p(&hermitian(), 1.5).unwrap(), epsilon = 1e-9);
    }

    #[test]
    fn basics_reports_non_real_field() {
        let a = field(ComplexMatrix::from_complex2([[c(1.0, 0.0), c(0.0, 0.5)], [c(0.0, 0.5), c(1.0, 0.0)]]));
        let r = basics_check(&a, &[2.0, 4.0, 50.0]).unwrap();
        let item = r.item(ITEM_REAL).unwrap();
        assert!(!item.holds);
        assert!(item.note.contains("consistent: true"));
        assert_eq!(r.items.len(), 6);
    }

    #[test]
    fn report_serializes() {
        let rep = EllipticityReport::compute(&CoefficientField::identity(2), &[2.0, 4.0], 1e-6).unwrap();
        assert_abs_diff_eq!(rep.lambda, 1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(rep.big_lambda, 1.0, epsilon = 1e-14);
        assert!(rep.omega.abs() < 1e-12);
        let mut buf = Vec::new();
        rep.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(serde_json::to_string(&rep).unwrap().contains("\"theta_p\""));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn matrix() -> impl Strategy<Value = ComplexMatrix> {
            proptest::collection::vec(-2.0..2.0f64, 8).prop_map(|v| {
                ComplexMatrix::from_complex2([[c(v[0], v[1]), c(v[2], v[3])], [c(v[4], v[5]), c(v[6], v[7])]])
            })
        }

        proptest! {
            #[test]
            fn scaling_is_linear(m in matrix(), s in 0.1..10.0f64, p in 1.2..12.0f64) {
                let f = CoefficientField::constant(m);
                let lhs = delta_p(&f.scale(s), p).unwrap();
                let rhs = s * delta_p(&f, p).unwrap();
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()) * 10.0);
            }

            #[test]
            fn eigen_reduction_is_a_lower_bound(m in matrix(), p in 1.2..12.0f64) {
                let exact = matrix_delta_p(&m, p);
                let sampled = sampled_delta(&m, p, 2_000, 3);
                prop_assert!(exact <= sampled + 1e-12);
            }
        }
    }
}
