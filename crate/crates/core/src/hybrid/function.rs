use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::mesh::HybridMesh;
use crate::error::{Error, Result};

/// Nodal values on the free (non-Dirichlet) vertices of a mesh, in dof order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridFunction {
    pub values: Vec<Complex64>,
}

impl HybridFunction {
    pub fn new(mesh: &HybridMesh, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != mesh.n_dofs() {
            return Err(Error::DimensionMismatch { expected: mesh.n_dofs(), got: values.len() });
        }
        Ok(Self { values })
    }

    pub fn from_fn(mesh: &HybridMesh, f: impl Fn([f64; 2]) -> Complex64) -> Self {
        Self { values: (0..mesh.n_dofs()).map(|d| f(mesh.dof_point(d))).collect() }
    }

    pub fn zeros(mesh: &HybridMesh) -> Self {
        Self { values: vec![Complex64::new(0.0, 0.0); mesh.n_dofs()] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Applies `phi` nodewise.
    pub fn map(&self, phi: impl Fn(Complex64) -> Complex64) -> Self {
        Self { values: self.values.iter().map(|&z| phi(z)).collect() }
    }
}

fn check_exponent(p: f64) -> Result<()> {
    if p >= 1.0 {
        Ok(())
    } else {
        Err(Error::BadExponent(p))
    }
}

fn weighted_norm(values: &[Complex64], weights: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return values
            .iter()
            .zip(weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(z, _)| z.norm())
            .fold(0.0, f64::max);
    }
    values.iter().zip(weights).map(|(z, w)| w * z.norm().powf(p)).sum::<f64>().powf(1.0 / p)
}

/// Lumped norm in `L^p(O) (+) L^p(Sigma)`; `p = inf` gives the nodal maximum.
pub fn hybrid_norm(mesh: &HybridMesh, u: &HybridFunction, p: f64) -> Result<f64> {
    check_exponent(p)?;
    if u.len() != mesh.n_dofs() {
        return Err(Error::DimensionMismatch { expected: mesh.n_dofs(), got: u.len() });
    }
    Ok(weighted_norm(&u.values, &mesh.total_weights(), p))
}

/// Volume and `Sigma` parts of the lumped norm.
pub fn hybrid_norm_parts(mesh: &HybridMesh, u: &HybridFunction, p: f64) -> Result<(f64, f64)> {
    check_exponent(p)?;
    Ok((weighted_norm(&u.values, mesh.volume_weights(), p), weighted_norm(&u.values, mesh.sigma_weights(), p)))
}

/// Identification map: nodal values on `O` together with their restriction to `Sigma`.
pub fn embed_j(v: &[Complex64]) -> HybridFunction {
    HybridFunction { values: v.to_vec() }
}

/// Left inverse of [`embed_j`].
pub fn restrict_jinv(u: &HybridFunction) -> Vec<Complex64> {
    u.values.clone()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid::mesh::{build_mesh, EdgeLabel, MeshSpec};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn dynamic_square(h: f64) -> HybridMesh {
        build_mesh(&MeshSpec::unit_square(h, [EdgeLabel::Dynamic; 4])).unwrap()
    }

    #[test]
    fn constant_function_norms() {
        let m = dynamic_square(0.125);
        let one = HybridFunction::from_fn(&m, |_| c(1.0, 0.0));
        for &p in &[1.0, 2.0, 3.5] {
            let n = hybrid_norm(&m, &one, p).unwrap();
            assert!((n - 5f64.powf(1.0 / p)).abs() < 1e-13, "p={p}: {n}");
        }
        assert_eq!(hybrid_norm(&m, &HybridFunction::zeros(&m), 2.0).unwrap(), 0.0);
        assert!(matches!(hybrid_norm(&m, &one, 0.5), Err(Error::BadExponent(_))));
    }

    #[test]
    fn sup_norm() {
        let m = dynamic_square(0.5);
        let mut u = HybridFunction::zeros(&m);
        u.values[0] = c(1.0, 0.0);
        u.values[1] = c(0.0, -2.0);
        u.values[2] = c(3.0, 0.0);
        assert_eq!(hybrid_norm(&m, &u, f64::INFINITY).unwrap(), 3.0);
    }

    #[test]
    fn j_round_trip_and_lipschitz_commutation() {
        let m = dynamic_square(0.25);
        let v: Vec<Complex64> = (0..m.n_dofs()).map(|k| c(k as f64 * 0.1 - 1.0, 0.3 * k as f64)).collect();
        assert_eq!(restrict_jinv(&embed_j(&v)), v);
        let phi = |z: Complex64| if z.norm() <= 1.0 { z } else { z / z.norm() };
        let lhs = embed_j(&v.iter().map(|&z| phi(z)).collect::<Vec<_>>());
        assert_eq!(lhs, embed_j(&v).map(phi));
        let (vol, sig) = hybrid_norm_parts(&m, &embed_j(&v), 2.0).unwrap();
        let total = hybrid_norm(&m, &embed_j(&v), 2.0).unwrap();
        assert!((total * total - vol * vol - sig * sig).abs() < 1e-12);
    }
}
