use nalgebra::{Matrix4, Vector4};

use super::{bellman_eval, bellman_hessian, difference_hessian, from_real, real_gradient, BellmanParams};
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

/// Relative gap between the fine and coarse rules above which results are rejected.
pub const QUADRATURE_TOL: f64 = 1e-4;

type Rule = Vec<([f64; 4], f64)>;

/// Radial bump `exp(-1 / (1 - |w|^2 / nu^2))` on the `nu`-ball of `R^4`, discretized
/// by tensor Gauss rules on `[-nu, nu]^4` and normalized to unit discrete mass.
#[derive(Debug, Clone)]
pub struct Mollifier {
    nu: f64,
    fine: Rule,
    coarse: Rule,
}

fn bump_rule(nu: f64, n: usize) -> Rule {
    let (x, w) = gauss_legendre(n);
    let mut rule = Vec::with_capacity(n.pow(4));
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    let s = x[a] * x[a] + x[b] * x[b] + x[c] * x[c] + x[d] * x[d];
                    if s >= 1.0 {
                        continue;
                    }
                    let weight = w[a] * w[b] * w[c] * w[d] * (-1.0 / (1.0 - s)).exp();
                    rule.push(([nu * x[a], nu * x[b], nu * x[c], nu * x[d]], weight));
                }
            }
        }
    }
    let mass: f64 = rule.iter().map(|(_, w)| w).sum();
    rule.iter_mut().for_each(|(_, w)| *w /= mass);
    rule
}

impl Mollifier {
    pub fn new(nu: f64) -> Self {
        Self { nu, fine: bump_rule(nu, 8), coarse: bump_rule(nu, 6) }
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    fn fd_step(&self) -> f64 {
        (1e-2 * self.nu).max(1e-7)
    }

    fn hessian_at(&self, params: &BellmanParams, y: &[f64; 4]) -> Matrix4<f64> {
        let (z, e) = from_real(y);
        bellman_hessian(params, z, e).unwrap_or_else(|_| difference_hessian(params, y, self.fd_step()))
    }

    fn gradient_at(&self, params: &BellmanParams, y: &[f64; 4]) -> Vector4<f64> {
        let (z, e) = from_real(y);
        real_gradient(params, z, e).unwrap_or_else(|_| {
            let h = self.fd_step();
            Vector4::from_fn(|i, _| {
                let (mut p, mut m) = (*y, *y);
                p[i] += h;
                m[i] -= h;
                let (zp, ep) = from_real(&p);
                let (zm, em) = from_real(&m);
                (bellman_eval(params, zp, ep) - bellman_eval(params, zm, em)) / (2.0 * h)
            })
        })
    }

    fn convolve<T, F>(&self, rule: &Rule, x: &[f64; 4], zero: T, f: F) -> T
    where
        T: std::ops::Add<Output = T> + std::ops::Mul<f64, Output = T>,
        F: Fn(&[f64; 4]) -> T,
    {
        rule.iter().fold(zero, |acc, (w, weight)| {
            let y = [x[0] - w[0], x[1] - w[1], x[2] - w[2], x[3] - w[3]];
            acc + f(&y) * *weight
        })
    }

    /// Hessian of `Q * phi_nu` at a real point.
    pub fn hessian(&self, params: &BellmanParams, x: &[f64; 4]) -> Result<Matrix4<f64>> {
        let fine = self.convolve(&self.fine, x, Matrix4::zeros(), |y| self.hessian_at(params, y));
        let coarse = self.convolve(&self.coarse, x, Matrix4::zeros(), |y| self.hessian_at(params, y));
        check(fine.abs().max(), (fine - coarse).abs().max())?;
        Ok(fine)
    }

    /// Gradient of `Q * phi_nu` at a real point.
    pub fn gradient(&self, params: &BellmanParams, x: &[f64; 4]) -> Result<Vector4<f64>> {
        let fine = self.convolve(&self.fine, x, Vector4::zeros(), |y| self.gradient_at(params, y));
        let coarse = self.convolve(&self.coarse, x, Vector4::zeros(), |y| self.gradient_at(params, y));
        check(fine.abs().max(), (fine - coarse).abs().max())?;
        Ok(fine)
    }
}

fn check(scale: f64, gap: f64) -> Result<()> {
    let estimate = gap / scale.max(1e-12);
    if estimate > QUADRATURE_TOL {
        Err(Error::QuadratureFailure { estimate })
    } else {
        Ok(())
    }
}

pub fn mollified_hessian(params: &BellmanParams, x: &[f64; 4]) -> Result<Matrix4<f64>> {
    Mollifier::new(params.nu).hessian(params, x)
}

pub fn mollified_gradient(params: &BellmanParams, x: &[f64; 4]) -> Result<Vector4<f64>> {
    Mollifier::new(params.nu).gradient(params, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bellman::to_real;
    use num_complex::Complex64;

    #[test]
    fn rule_has_unit_mass_and_is_symmetric() {
        let m = Mollifier::new(0.3);
        let mass: f64 = m.fine.iter().map(|(_, w)| w).sum();
        assert!((mass - 1.0).abs() < 1e-14);
        for k in 0..4 {
            let first: f64 = m.fine.iter().map(|(x, w)| w * x[k]).sum();
            assert!(first.abs() < 1e-15);
        }
        assert!(m.fine.iter().all(|(x, _)| x.iter().map(|v| v * v).sum::<f64>() < 0.09));
    }

    #[test]
    fn quadratic_q_has_exact_hessian() {
        let params = BellmanParams::new(2.0, 0.0, 0.5).unwrap();
        let h = mollified_hessian(&params, &[0.1, 0.2, -0.3, 0.4]).unwrap();
        assert!((h - Matrix4::identity() * 2.0).abs().max() < 1e-13);
    }

    #[test]
    fn small_radius_reproduces_pointwise_gradient() {
        let params = BellmanParams::new(4.0, 1.0, 1e-3).unwrap();
        let (z, e) = (Complex64::new(1.3, -0.4), Complex64::new(0.2, 0.1));
        let x = to_real(z, e);
        let g = mollified_gradient(&params, &x).unwrap();
        let exact = real_gradient(&params, z, e).unwrap();
        assert!((g - exact).norm() < 1e-5 * (1.0 + exact.norm()));
        let h = mollified_hessian(&params, &x).unwrap();
        let hp = bellman_hessian(&params, z, e).unwrap();
        assert!((h - hp).abs().max() < 1e-4 * (1.0 + hp.abs().max()));
    }

    #[test]
    fn gradient_at_origin_vanishes() {
        for &nu in &[1e-1, 1e-2, 1e-3] {
            let params = BellmanParams::new(4.0, 1.0, nu).unwrap();
            let m = Mollifier::new(nu);
            let g = m.convolve(&m.fine, &[0.0; 4], Vector4::zeros(), |y| m.gradient_at(&params, y));
            assert!(g.norm() < 1e-12, "nu={nu}: {}", g.norm());
        }
    }
}
