use serde::{Deserialize, Serialize};

use super::{bilinear_constant, evolve, flow_grid, truncated_trapezoid, FlowOptions, TAIL_FRACTION};
use crate::ellipticity::{conjugate_exponent, theta_p};
use crate::error::{Error, Result};
use crate::hybrid::{hybrid_norm, HybridFunction};
use crate::operator::DiscreteOperator;

/// Bisection tolerance for `theta_p` when checking the admissible angle.
const THETA_TOL: f64 = 1e-6;

/// `int_0^inf |<L_theta f_t, g_t>| dt` with `f_t = e^{-t L_theta} f`, `g_t = e^{-t L_theta^*} g`
/// and `L_theta` the operator of `e^{i theta} A`; the pairing is `sum_i M_i u_i conj(v_i)`.
///
/// Requires `|theta| < theta_p(A) - margin`.
pub fn weak_quadratic_estimate(
    op: &DiscreteOperator,
    f: &HybridFunction,
    g: &HybridFunction,
    p: f64,
    theta: f64,
    margin: f64,
    opts: &FlowOptions,
) -> Result<f64> {
    let limit = theta_p(op.field(), p, THETA_TOL)? - margin;
    if !(theta.abs() < limit) {
        return Err(Error::AngleOutOfRange { theta, limit });
    }
    crate::operator::check_len(op, f)?;
    crate::operator::check_len(op, g)?;
    let rotated = op.with_field(&op.field().rotate(theta))?;
    let adjoint = op.with_field(&op.field().rotate(theta).adjoint())?;
    let (times, mu_min) = flow_grid(&[&rotated], opts)?;
    let fs = evolve(&rotated, &f.values, &times, mu_min, opts)?;
    let gs = evolve(&adjoint, &g.values, &times, mu_min, opts)?;
    // <L u, v>_M = v* S u
    let integrand: Vec<f64> = fs.iter().zip(&gs).map(|(u, v)| rotated.form(u, v).norm()).collect();
    let (value, tail) = truncated_trapezoid(&times, &integrand);
    if tail > TAIL_FRACTION * value {
        return Err(Error::TruncationWarning { tail, value });
    }
    Ok(value)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakQuadraticRow {
    pub theta: f64,
    pub value: f64,
    /// `Lambda(A) C |f|_p |g|_p'` with `C` the bilinear constant of the rotated pair.
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakQuadraticReport {
    pub p: f64,
    pub rows: Vec<WeakQuadraticRow>,
}

/// Estimate on `n_theta` angles evenly spread in `(-(theta_p - margin), theta_p - margin)`.
pub fn weak_quadratic_check(
    op: &DiscreteOperator,
    f: &HybridFunction,
    g: &HybridFunction,
    p: f64,
    n_theta: usize,
    margin: f64,
    opts: &FlowOptions,
) -> Result<WeakQuadraticReport> {
    let limit = theta_p(op.field(), p, THETA_TOL)? - margin;
    if limit <= 0.0 {
        return Err(Error::AngleOutOfRange { theta: 0.0, limit });
    }
    let norms = hybrid_norm(op.mesh(), f, p)? * hybrid_norm(op.mesh(), g, conjugate_exponent(p))?;
    let big_lambda = op.field().sup_operator_norm();
    let rows = (0..n_theta)
        .map(|k| {
            let theta = if n_theta == 1 { 0.0 } else { -limit + 2.0 * limit * (k as f64 + 0.5) / n_theta as f64 };
            let value = weak_quadratic_estimate(op, f, g, p, theta, margin, opts)?;
            let a = op.with_field(&op.field().rotate(theta))?;
            let b = op.with_field(&op.field().rotate(theta).adjoint())?;
            let bound = big_lambda * bilinear_constant(&a, &b, p)? * norms;
            Ok(WeakQuadraticRow { theta, value, bound, pass: value <= bound })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(WeakQuadraticReport { p, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{CoefficientField, ComplexMatrix};
    use crate::flows::tests::{dirichlet_box, first_eigenpair, random_real};
    use crate::operator::assemble;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_datum() {
        let m = dirichlet_box(0.25);
        let op = assemble(&m, &CoefficientField::identity(2)).unwrap();
        let g = random_real(&m, &mut ChaCha8Rng::seed_from_u64(1));
        let z = HybridFunction::zeros(&m);
        assert_eq!(weak_quadratic_estimate(&op, &z, &g, 2.0, 0.0, 0.05, &FlowOptions::default()).unwrap(), 0.0);
    }

    #[test]
    fn eigenfunction_value() {
        let m = dirichlet_box(0.125);
        let op = assemble(&m, &CoefficientField::identity(2)).unwrap();
        let (_, phi) = first_eigenpair(&op);
        let v = weak_quadratic_estimate(&op, &phi, &phi, 2.0, 0.0, 0.05, &FlowOptions::default()).unwrap();
        assert!((v - 0.5).abs() < 0.01, "{v}");
    }

    #[test]
    fn angle_is_checked() {
        let m = dirichlet_box(0.25);
        let op = assemble(&m, &CoefficientField::identity(2)).unwrap();
        let z = HybridFunction::zeros(&m);
        // theta_4(I) = pi/3
        let r = weak_quadratic_estimate(&op, &z, &z, 4.0, 1.03, 0.05, &FlowOptions::default());
        assert!(matches!(r, Err(Error::AngleOutOfRange { .. })));
    }

    #[test]
    fn adjoint_duality_and_bound() {
        let m = dirichlet_box(0.125);
        let field = CoefficientField::constant(ComplexMatrix::real2(1.0, 1.0, -1.0, 1.0));
        let op = assemble(&m, &field).unwrap();
        let adj = assemble(&m, &field.adjoint()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (f, g) = (random_real(&m, &mut rng), random_real(&m, &mut rng));
        // shared grid: spectral estimates of A and A* may differ in the last digits
        let opts = FlowOptions { span: Some((1e-5, 60.0)), ..Default::default() };
        let v = weak_quadratic_estimate(&op, &f, &g, 4.0, 0.3, 0.05, &opts).unwrap();
        let w = weak_quadratic_estimate(&adj, &g, &f, 4.0 / 3.0, -0.3, 0.05, &opts).unwrap();
        assert!((v - w).abs() <= 1e-10 * v, "{v} {w}");
        let r = weak_quadratic_check(&op, &f, &g, 4.0, 5, 0.05, &opts).unwrap();
        assert!(r.rows.iter().all(|row| row.pass), "{r:?}");
    }
}
