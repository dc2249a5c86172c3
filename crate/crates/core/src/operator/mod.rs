//! Discrete dynamical-boundary operator `L_h = M^{-1} S` on P1 elements with lumped hybrid mass.

mod checks;
mod contractivity;
mod semigroup;

pub use checks::{
    nittka_form_test, nittka_witness_search, numerical_range_check, resolvent_identity_check,
    transference_check, NittkaWitness, NumericalRangeReport, TransferenceReport,
};
pub use contractivity::{
    contractivity_suite, write_norm_csv, ContractivityOptions, ContractivityReport, ContractivityRow, DualityRow,
};
pub use semigroup::{
    run_trajectory, semigroup_step, uniform_grid, ExponentialPropagator, ImplicitEulerStepper, Scheme, SemigroupTrajectory,
    MAX_EXPONENTIAL_DOFS,
};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::hybrid::{HybridFunction, HybridMesh};
use crate::linalg::{c, BandedLu, CsrMatrix, Ordering};

/// Stiffness `S`, lumped masses and the mesh/field they were built from.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub stiffness: CsrMatrix,
    /// Lumped hybrid mass `w_vol + w_sigma` per dof.
    pub mass: Vec<f64>,
    /// Lumped volume-only mass per dof.
    pub mass_vol: Vec<f64>,
    mesh: HybridMesh,
    field: CoefficientField,
    ordering: Ordering,
}

/// Gradients of the three barycentric basis functions and the triangle area.
pub fn triangle_gradients(mesh: &HybridMesh, t: usize) -> ([[f64; 2]; 3], f64) {
    let v = mesh.vertices();
    let [i, j, k] = mesh.triangles()[t];
    let (a, b, cc) = (v[i], v[j], v[k]);
    let det = (b[0] - a[0]) * (cc[1] - a[1]) - (cc[0] - a[0]) * (b[1] - a[1]);
    let g = |p: [f64; 2], q: [f64; 2]| [(p[1] - q[1]) / det, (q[0] - p[0]) / det];
    ([g(b, cc), g(cc, a), g(a, b)], 0.5 * det.abs())
}

/// Builds `S_ij = a(phi_j, phi_i)` on the free dofs and the lumped masses.
pub fn assemble(mesh: &HybridMesh, field: &CoefficientField) -> Result<DiscreteOperator> {
    field.validate(Some(mesh.triangles().len()))?;
    if field.dim() != 2 {
        return Err(Error::DimensionMismatch { expected: 2, got: field.dim() });
    }
    let n = mesh.n_dofs();
    let triplets: Vec<(usize, usize, Complex64)> = (0..mesh.triangles().len())
        .into_par_iter()
        .flat_map_iter(|t| {
            let (grads, area) = triangle_gradients(mesh, t);
            let tri = mesh.triangles()[t];
            let a = field.at(t);
            let mut local = Vec::with_capacity(9);
            for (li, &vi) in tri.iter().enumerate() {
                let Some(di) = mesh.dof_of_vertex(vi) else { continue };
                for (lj, &vj) in tri.iter().enumerate() {
                    let Some(dj) = mesh.dof_of_vertex(vj) else { continue };
                    local.push((di, dj, a.pair_real(&grads[li], &grads[lj]) * area));
                }
            }
            local
        })
        .collect();
    let stiffness = CsrMatrix::from_triplets(n, n, triplets);
    let ordering = Ordering::reverse_cuthill_mckee(&stiffness);
    Ok(DiscreteOperator {
        stiffness,
        mass: mesh.total_weights(),
        mass_vol: mesh.volume_weights().to_vec(),
        mesh: mesh.clone(),
        field: field.clone(),
        ordering,
    })
}

impl DiscreteOperator {
    pub fn mesh(&self) -> &HybridMesh {
        &self.mesh
    }

    pub fn field(&self) -> &CoefficientField {
        &self.field
    }

    pub fn n_dofs(&self) -> usize {
        self.mass.len()
    }

    pub fn ordering(&self) -> &Ordering {
        &self.ordering
    }

    /// Same mesh with the field replaced (reassembles `S`).
    pub fn with_field(&self, field: &CoefficientField) -> Result<Self> {
        assemble(&self.mesh, field)
    }

    /// `M f` as a complex vector.
    pub fn mass_apply(&self, f: &[Complex64]) -> Vec<Complex64> {
        f.iter().zip(&self.mass).map(|(z, m)| z * m).collect()
    }

    /// Factors `scale * S + diag(diag)` on the stored ordering.
    pub fn factor_affine(&self, scale: Complex64, diag: &[Complex64]) -> Result<BandedLu> {
        BandedLu::factor(&self.stiffness.affine(scale, diag), &self.ordering)
    }

    /// Sesquilinear value `v* S u = a(u, v)`.
    pub fn form(&self, u: &[Complex64], v: &[Complex64]) -> Complex64 {
        self.stiffness.matvec(u).iter().zip(v).map(|(su, v)| su * v.conj()).sum()
    }

    /// Constant gradient of the P1 interpolant on triangle `t` (Dirichlet values are zero).
    pub fn gradient_on(&self, u: &[Complex64], t: usize) -> [Complex64; 2] {
        let (grads, _) = triangle_gradients(&self.mesh, t);
        let mut g = [c(0.0, 0.0); 2];
        for (l, &v) in self.mesh.triangles()[t].iter().enumerate() {
            if let Some(d) = self.mesh.dof_of_vertex(v) {
                g[0] += u[d] * grads[l][0];
                g[1] += u[d] * grads[l][1];
            }
        }
        g
    }

    /// `sum_T |T| |grad u|_T |grad v|_T`.
    pub fn gradient_product(&self, u: &[Complex64], v: &[Complex64]) -> f64 {
        (0..self.mesh.triangles().len())
            .map(|t| {
                let (_, area) = triangle_gradients(&self.mesh, t);
                let (gu, gv) = (self.gradient_on(u, t), self.gradient_on(v, t));
                let nu = (gu[0].norm_sqr() + gu[1].norm_sqr()).sqrt();
                let nv = (gv[0].norm_sqr() + gv[1].norm_sqr()).sqrt();
                area * nu * nv
            })
            .sum()
    }
}

/// `(z - L_h)^{-1} f`, i.e. the solution of `(zM - S) x = M f`.
pub fn apply_resolvent(op: &DiscreteOperator, z: Complex64, f: &HybridFunction) -> Result<HybridFunction> {
    check_len(op, f)?;
    let diag: Vec<Complex64> = op.mass.iter().map(|&m| z * m).collect();
    let lu = op.factor_affine(c(-1.0, 0.0), &diag)?;
    Ok(HybridFunction { values: lu.solve(&op.mass_apply(&f.values)) })
}

pub(crate) fn check_len(op: &DiscreteOperator, f: &HybridFunction) -> Result<()> {
    if f.len() != op.n_dofs() {
        return Err(Error::DimensionMismatch { expected: op.n_dofs(), got: f.len() });
    }
    Ok(())
}
