use std::collections::HashMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{check_len, DiscreteOperator};
use crate::error::{Error, Result};
use crate::hybrid::HybridFunction;
use crate::linalg::{c, BandedLu};

pub const MAX_EXPONENTIAL_DOFS: usize = 200;
const HERMITIAN_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    ImplicitEuler,
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemigroupTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<HybridFunction>,
    pub scheme: Scheme,
}

/// Factored `M + dt S` for repeated implicit Euler steps.
#[derive(Debug, Clone)]
pub struct ImplicitEulerStepper {
    pub dt: f64,
    lu: BandedLu,
    mass: Vec<f64>,
}

impl ImplicitEulerStepper {
    pub fn new(op: &DiscreteOperator, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!("time step {dt}")));
        }
        let diag: Vec<Complex64> = op.mass.iter().map(|&m| c(m, 0.0)).collect();
        Ok(Self { dt, lu: op.factor_affine(c(dt, 0.0), &diag)?, mass: op.mass.clone() })
    }

    pub fn step(&self, u: &[Complex64]) -> Vec<Complex64> {
        let rhs: Vec<Complex64> = u.iter().zip(&self.mass).map(|(z, m)| z * m).collect();
        self.lu.solve(&rhs)
    }
}

/// Dense `exp(-t L_h)` through `T = M^{-1/2} S M^{-1/2}`.
///
/// Uses a Hermitian eigendecomposition when `T` is Hermitian and a dense matrix
/// exponential per time otherwise.
#[derive(Debug, Clone)]
pub struct ExponentialPropagator {
    sqrt_mass: Vec<f64>,
    kind: PropagatorKind,
}

#[derive(Debug, Clone)]
enum PropagatorKind {
    Hermitian { values: DVector<f64>, vectors: DMatrix<Complex64> },
    General { t_matrix: DMatrix<Complex64> },
}

impl ExponentialPropagator {
    pub fn new(op: &DiscreteOperator) -> Result<Self> {
        let n = op.n_dofs();
        if n > MAX_EXPONENTIAL_DOFS {
            return Err(Error::TooLargeForExponential { dofs: n, max: MAX_EXPONENTIAL_DOFS });
        }
        let sqrt_mass: Vec<f64> = op.mass.iter().map(|m| m.sqrt()).collect();
        let mut t_matrix = op.stiffness.to_dense();
        for i in 0..n {
            for j in 0..n {
                t_matrix[(i, j)] /= sqrt_mass[i] * sqrt_mass[j];
            }
        }
        let kind = if op.stiffness.hermitian_defect() <= HERMITIAN_TOL {
            let h = (&t_matrix + t_matrix.adjoint()) * c(0.5, 0.0);
            let eig = SymmetricEigen::new(h);
            PropagatorKind::Hermitian { values: eig.eigenvalues, vectors: eig.eigenvectors }
        } else {
            PropagatorKind::General { t_matrix }
        };
        Ok(Self { sqrt_mass, kind })
    }

    /// `exp(-t L_h) u`.
    pub fn apply(&self, t: f64, u: &[Complex64]) -> Vec<Complex64> {
        let y = DVector::from_iterator(u.len(), u.iter().zip(&self.sqrt_mass).map(|(z, s)| z * s));
        let out = match &self.kind {
            PropagatorKind::Hermitian { values, vectors } => {
                let mut coef = vectors.adjoint() * y;
                for (k, z) in coef.iter_mut().enumerate() {
                    *z *= (-t * values[k]).exp();
                }
                vectors * coef
            }
            PropagatorKind::General { t_matrix } => (t_matrix * c(-t, 0.0)).exp() * y,
        };
        out.iter().zip(&self.sqrt_mass).map(|(z, s)| z / s).collect()
    }
}

/// One step of size `dt`.
pub fn semigroup_step(op: &DiscreteOperator, u: &HybridFunction, dt: f64, scheme: Scheme) -> Result<HybridFunction> {
    check_len(op, u)?;
    let values = match scheme {
        Scheme::ImplicitEuler => ImplicitEulerStepper::new(op, dt)?.step(&u.values),
        Scheme::Exponential => {
            if !(dt > 0.0) {
                return Err(Error::InvalidInput(format!("time step {dt}")));
            }
            ExponentialPropagator::new(op)?.apply(dt, &u.values)
        }
    };
    Ok(HybridFunction { values })
}

/// Trajectory on an increasing grid starting at 0. Implicit Euler takes one step per
/// interval and reuses factorizations across equal step sizes.
pub fn run_trajectory(
    op: &DiscreteOperator,
    u0: &HybridFunction,
    grid: &[f64],
    scheme: Scheme,
) -> Result<SemigroupTrajectory> {
    check_len(op, u0)?;
    if grid.first() != Some(&0.0) || grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidInput("time grid must start at 0 and increase strictly".into()));
    }
    let mut states = vec![u0.clone()];
    match scheme {
        Scheme::ImplicitEuler => {
            let mut cache: HashMap<u64, ImplicitEulerStepper> = HashMap::new();
            for w in grid.windows(2) {
                let dt = w[1] - w[0];
                let key = dt.to_bits();
                if !cache.contains_key(&key) {
                    cache.insert(key, ImplicitEulerStepper::new(op, dt)?);
                }
                let next = cache[&key].step(&states.last().unwrap().values);
                states.push(HybridFunction { values: next });
            }
        }
        Scheme::Exponential => {
            let prop = ExponentialPropagator::new(op)?;
            for &t in &grid[1..] {
                states.push(HybridFunction { values: prop.apply(t, &u0.values) });
            }
        }
    }
    Ok(SemigroupTrajectory { times: grid.to_vec(), states, scheme })
}

/// Uniform grid `0, dt, ..., n dt`.
pub fn uniform_grid(dt: f64, n_steps: usize) -> Vec<f64> {
    (0..=n_steps).map(|k| k as f64 * dt).collect()
}
