use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{apply_resolvent, check_len, triangle_gradients, DiscreteOperator};
use crate::ellipticity::{delta_p_minimizer, lambda_lower};
use crate::error::{Error, Result};
use crate::hybrid::HybridFunction;
use crate::linalg::{c, BandedLu, CsrMatrix};
use crate::quadrature::triangle_rule;

/// Below this modulus a quadrature point contributes nothing to the form test.
const SMALL_MODULUS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransferenceReport {
    /// Relative gap between the static solve `S u = M f` and the `L_h^{-1}` path.
    pub residual_inverse: f64,
    /// Relative gap at `t = 1` between the hybrid and the volume-only resolvent.
    pub resolvent_gap: f64,
}

fn relative_gap(a: &[Complex64], b: &[Complex64]) -> f64 {
    let scale = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn transference_check(op: &DiscreteOperator, f: &HybridFunction) -> Result<TransferenceReport> {
    check_len(op, f)?;
    if !op.mesh().has_dirichlet() {
        return Err(Error::NoDirichlet);
    }
    let n = op.n_dofs();
    let mf = op.mass_apply(&f.values);
    let zeros = vec![c(0.0, 0.0); n];
    let static_solve = op.factor_affine(c(1.0, 0.0), &zeros)?.solve(&mf);
    // L_h = M^{-1} S, factored on its own
    let lh = CsrMatrix::from_triplets(n, n, op.stiffness.iter().map(|(i, j, v)| (i, j, v / op.mass[i])));
    let inverse_path = BandedLu::factor(&lh, op.ordering())?.solve(&f.values);
    let hybrid = op.factor_affine(c(1.0, 0.0), &op.mass.iter().map(|&m| c(m, 0.0)).collect::<Vec<_>>())?.solve(&mf);
    let volume = op.factor_affine(c(1.0, 0.0), &op.mass_vol.iter().map(|&m| c(m, 0.0)).collect::<Vec<_>>())?.solve(&mf);
    Ok(TransferenceReport {
        residual_inverse: relative_gap(&static_solve, &inverse_path),
        resolvent_gap: relative_gap(&hybrid, &volume),
    })
}

/// `Re int_O A grad w . conj(grad(|w|^{q-2} w)) dx` for the P1 interpolant `w` of `u`.
///
/// `quad_order` is the polynomial degree integrated exactly per triangle (at least 4).
pub fn nittka_form_test(op: &DiscreteOperator, u: &HybridFunction, q: f64, quad_order: usize) -> Result<f64> {
    check_len(op, u)?;
    if !(q >= 2.0 && q.is_finite()) {
        return Err(Error::BadExponent(q));
    }
    if quad_order < 4 {
        return Err(Error::InvalidInput(format!("quadrature order {quad_order} < 4")));
    }
    let rule = triangle_rule(quad_order.div_ceil(2) + 1);
    let mesh = op.mesh();
    let mut total = 0.0;
    for (t, tri) in mesh.triangles().iter().enumerate() {
        let (_, area) = triangle_gradients(mesh, t);
        let gw = op.gradient_on(&u.values, t);
        let nodal: Vec<Complex64> =
            tri.iter().map(|&v| mesh.dof_of_vertex(v).map_or(c(0.0, 0.0), |d| u.values[d])).collect();
        let a = op.field().at(t);
        let agw = [a.get(0, 0) * gw[0] + a.get(0, 1) * gw[1], a.get(1, 0) * gw[0] + a.get(1, 1) * gw[1]];
        let mut local = 0.0;
        for &([s, r], weight) in &rule {
            let w = nodal[0] * (1.0 - s - r) + nodal[1] * s + nodal[2] * r;
            let m = w.norm();
            if m < SMALL_MODULUS {
                continue;
            }
            // grad(|w|^{q-2} w) = |w|^{q-2} grad w + (q-2) |w|^{q-4} w Re(conj(w) grad w)
            let lead = m.powf(q - 2.0);
            let corr = (q - 2.0) * m.powf(q - 4.0);
            let gv = [0, 1].map(|k| gw[k] * lead + w * (corr * (w.conj() * gw[k]).re));
            local += weight * (agw[0] * gv[0].conj() + agw[1] * gv[1].conj()).re;
        }
        // reference-triangle weights sum to 1/2
        total += 2.0 * area * local;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NittkaWitness {
    /// Most negative normalized form value found (`max |w| = 1`).
    pub value: f64,
    pub function: HybridFunction,
    pub found: bool,
}

fn normalize(u: &mut [Complex64]) {
    let m = u.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if m > 0.0 {
        u.iter_mut().for_each(|z| *z /= m);
    }
}

/// Best-effort search for `u` with a negative form value: affine candidates built from the
/// `Delta_q` minimizer, random starts, then finite-difference gradient descent on the best.
pub fn nittka_witness_search(op: &DiscreteOperator, q: f64, n_random: usize, seed: u64) -> Result<NittkaWitness> {
    if !(q >= 2.0 && q.is_finite()) {
        return Err(Error::BadExponent(q));
    }
    let mesh = op.mesh();
    let n = op.n_dofs();
    let eval = |v: &[Complex64]| nittka_form_test(op, &HybridFunction { values: v.to_vec() }, q, 4);
    let mut candidates: Vec<Vec<Complex64>> = Vec::new();
    for a in op.field().matrices().iter().take(4) {
        let xi = delta_p_minimizer(a, q);
        for eps in [0.05, 0.2, 1.0] {
            candidates.push(
                (0..n)
                    .map(|d| {
                        let x = mesh.dof_point(d);
                        c(1.0, 0.0) + (xi[0] * x[0] + xi[1] * x[1]) * eps
                    })
                    .collect(),
            );
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_random {
        candidates.push((0..n).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect());
    }
    let mut best: Option<(f64, Vec<Complex64>)> = None;
    for mut v in candidates {
        normalize(&mut v);
        let val = eval(&v)?;
        if best.as_ref().is_none_or(|(b, _)| val < *b) {
            best = Some((val, v));
        }
    }
    let (mut value, mut v) = best.ok_or_else(|| Error::InvalidInput("no witness candidates".into()))?;
    let h = 1e-6;
    let mut step = 0.1;
    for _ in 0..20 {
        if value < 0.0 || n == 0 {
            break;
        }
        let mut grad = vec![c(0.0, 0.0); n];
        for d in 0..n {
            for (k, dir) in [c(1.0, 0.0), c(0.0, 1.0)].into_iter().enumerate() {
                let mut plus = v.clone();
                plus[d] += dir * h;
                let g = (eval(&plus)? - value) / h;
                if k == 0 {
                    grad[d].re = g;
                } else {
                    grad[d].im = g;
                }
            }
        }
        let gnorm = grad.iter().map(|z| z.norm()).fold(0.0, f64::max);
        if gnorm == 0.0 {
            break;
        }
        let mut trial: Vec<Complex64> = v.iter().zip(&grad).map(|(z, g)| z - g * (step / gnorm)).collect();
        normalize(&mut trial);
        let tv = eval(&trial)?;
        if tv < value {
            (value, v) = (tv, trial);
            step *= 1.5;
        } else {
            step *= 0.5;
        }
    }
    Ok(NittkaWitness { value, function: HybridFunction { values: v }, found: value < 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericalRangeReport {
    /// Largest `|arg(u* S u)|` over the samples.
    pub max_angle: f64,
    /// `arccos(lambda / Lambda)`.
    pub bound: f64,
}

pub fn numerical_range_check(op: &DiscreteOperator, n_samples: usize, seed: u64) -> NumericalRangeReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = op.n_dofs();
    let mut max_angle: f64 = 0.0;
    for _ in 0..n_samples {
        let u: Vec<Complex64> = (0..n).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
        let s = op.form(&u, &u);
        if s.norm() > 0.0 {
            max_angle = max_angle.max(s.arg().abs());
        }
    }
    let bound = (lambda_lower(op.field()) / op.field().sup_operator_norm()).clamp(-1.0, 1.0).acos();
    NumericalRangeReport { max_angle, bound }
}

/// Relative defect of `R(z1) - R(z2) = (z2 - z1) R(z1) R(z2)` applied to `f`.
pub fn resolvent_identity_check(op: &DiscreteOperator, z1: Complex64, z2: Complex64, f: &HybridFunction) -> Result<f64> {
    let r1 = apply_resolvent(op, z1, f)?;
    let r2 = apply_resolvent(op, z2, f)?;
    let r12 = apply_resolvent(op, z1, &r2)?;
    let lhs: Vec<Complex64> = r1.values.iter().zip(&r2.values).map(|(a, b)| a - b).collect();
    let rhs: Vec<Complex64> = r12.values.iter().map(|x| x * (z2 - z1)).collect();
    Ok(relative_gap(&lhs, &rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{CoefficientField, ComplexMatrix};
    use crate::hybrid::{build_mesh, EdgeLabel, MeshSpec};
    use crate::operator::assemble;
    use crate::operator::tests::{random_function, square, top_dynamic};

    fn nonsymmetric() -> CoefficientField {
        CoefficientField::constant(ComplexMatrix::real2(1.0, 1.0, -1.0, 1.0))
    }

    #[test]
    fn transference_gaps() {
        let m = top_dynamic(0.125);
        let op = assemble(&m, &nonsymmetric()).unwrap();
        let one = HybridFunction::from_fn(&m, |_| c(1.0, 0.0));
        let r = transference_check(&op, &one).unwrap();
        assert!(r.residual_inverse <= 1e-12, "{r:?}");
        assert!(r.resolvent_gap > 1e-3, "{r:?}");
        let flat = assemble(&m.with_sigma_scaled(0.0).unwrap(), &nonsymmetric()).unwrap();
        let r0 = transference_check(&flat, &one).unwrap();
        assert!(r0.resolvent_gap <= 1e-12 && r0.residual_inverse <= 1e-12, "{r0:?}");
        let free = assemble(&square(0.25, [EdgeLabel::Dynamic; 4]), &nonsymmetric()).unwrap();
        let f = HybridFunction::zeros(free.mesh());
        assert_eq!(transference_check(&free, &f), Err(Error::NoDirichlet));
    }

    #[test]
    fn form_test_at_q_two_is_the_form() {
        let m = top_dynamic(0.25);
        let op = assemble(&m, &nonsymmetric().map(|a| a.rotate(0.3))).unwrap();
        let u = random_function(&m, &mut ChaCha8Rng::seed_from_u64(1));
        let v = nittka_form_test(&op, &u, 2.0, 4).unwrap();
        assert!((v - op.form(&u.values, &u.values).re).abs() < 1e-12 * v.abs().max(1.0));
        assert!(v >= 0.0);
        assert!(matches!(nittka_form_test(&op, &u, 1.5, 4), Err(Error::BadExponent(_))));
    }

    #[test]
    fn form_test_converges_in_quadrature_order() {
        let m = top_dynamic(0.25);
        let op = assemble(&m, &nonsymmetric()).unwrap();
        let u = random_function(&m, &mut ChaCha8Rng::seed_from_u64(2));
        let coarse = nittka_form_test(&op, &u, 4.0, 4).unwrap();
        let fine = nittka_form_test(&op, &u, 4.0, 12).unwrap();
        // q = 4 gives a polynomial integrand of degree 2
        assert!((coarse - fine).abs() < 1e-12 * fine.abs());
    }

    #[test]
    fn real_fields_are_nonnegative() {
        let m = top_dynamic(0.25);
        let op = assemble(&m, &nonsymmetric()).unwrap();
        let lap = assemble(&m, &CoefficientField::identity(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for q in [3.0, 4.0, 7.5] {
            for _ in 0..20 {
                let u = random_function(&m, &mut rng);
                let norm = lap.form(&u.values, &u.values).re + u.values.iter().map(|z| z.norm_sqr()).sum::<f64>();
                assert!(nittka_form_test(&op, &u, q, 4).unwrap() >= -1e-10 * norm);
            }
        }
    }

    #[test]
    fn rotated_identity_has_a_witness() {
        let spec = MeshSpec::unit_square(0.25, [EdgeLabel::Neumann; 4]);
        let mut spec = spec;
        spec.allow_empty_sigma = true;
        let m = build_mesh(&spec).unwrap();
        // cos(1.2) < 1/2 = |1 - 2/4|
        let op = assemble(&m, &CoefficientField::identity(2).rotate(1.2)).unwrap();
        let w = nittka_witness_search(&op, 4.0, 4, 1).unwrap();
        assert!(w.found && w.value < 0.0, "{}", w.value);
    }

    #[test]
    fn sectorial_numerical_range() {
        let m = top_dynamic(0.25);
        let op = assemble(&m, &nonsymmetric().map(|a| a.rotate(-0.2))).unwrap();
        let r = numerical_range_check(&op, 200, 4);
        assert!(r.max_angle <= r.bound + 1e-9, "{r:?}");
    }

    #[test]
    fn resolvent_identity() {
        let m = top_dynamic(0.25);
        let op = assemble(&m, &nonsymmetric()).unwrap();
        let f = random_function(&m, &mut ChaCha8Rng::seed_from_u64(5));
        assert!(resolvent_identity_check(&op, c(-1.0, 0.5), c(-3.0, -2.0), &f).unwrap() < 1e-10);
    }
}
