//! Complex matrix-valued coefficient fields and their pointwise algebra.
//!
//! Fields are piecewise constant on mesh cells, so every essential infimum or
//! supremum over the domain becomes a min or max over the stored matrices.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A `d x d` complex coefficient matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix(DMatrix<Complex64>);

impl ComplexMatrix {
    pub fn new(m: DMatrix<Complex64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
        }
        if m.nrows() < 2 {
            return Err(Error::InvalidInput(format!("dimension {} < 2", m.nrows())));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidInput("non-finite coefficient entry".into()));
        }
        Ok(Self(m))
    }

    /// Row-major `[re, im]` pairs.
    pub fn from_rows(rows: &[Vec<[f64; 2]>]) -> Result<Self> {
        let d = rows.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidInput("coefficient matrix is not square".into()));
        }
        Self::new(DMatrix::from_fn(d, d, |i, j| Complex64::new(rows[i][j][0], rows[i][j][1])))
    }

    /// Real 2x2 matrix `[[a, b], [c, d]]`.
    pub fn real2(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self::from_complex2([[a.into(), b.into()], [c.into(), d.into()]])
    }

    pub fn from_complex2(m: [[Complex64; 2]; 2]) -> Self {
        Self(DMatrix::from_fn(2, 2, |i, j| m[i][j]))
    }

    pub fn identity(d: usize) -> Self {
        Self(DMatrix::identity(d, d))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.0[(i, j)]
    }

    pub fn to_rows(&self) -> Vec<Vec<[f64; 2]>> {
        (0..self.dim())
            .map(|i| (0..self.dim()).map(|j| [self.0[(i, j)].re, self.0[(i, j)].im]).collect())
            .collect()
    }

    pub fn rotate(&self, theta: f64) -> Self {
        Self(self.0.map(|z| z * Complex64::from_polar(1.0, theta)))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|z| z * s))
    }

    pub fn adjoint(&self) -> Self {
        Self(self.0.adjoint())
    }

    pub fn real_part(&self) -> DMatrix<f64> {
        self.0.map(|z| z.re)
    }

    pub fn imag_part(&self) -> DMatrix<f64> {
        self.0.map(|z| z.im)
    }

    /// Spectral norm (largest singular value).
    pub fn operator_norm(&self) -> f64 {
        self.0.clone().singular_values().max()
    }

    pub fn is_real(&self) -> bool {
        self.0.iter().all(|z| z.im == 0.0)
    }

    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        (0..self.dim()).map(|i| (0..self.dim()).map(|j| self.0[(i, j)] * x[j]).sum()).collect()
    }

    /// Bilinear pairing `g_i^T A g_j` for real vectors.
    pub fn pair_real(&self, gi: &[f64], gj: &[f64]) -> Complex64 {
        let d = self.dim();
        let mut s = Complex64::new(0.0, 0.0);
        for a in 0..d {
            for b in 0..d {
                s += self.0[(a, b)] * gi[a] * gj[b];
            }
        }
        s
    }
}

impl Serialize for ComplexMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(d)?;
        ComplexMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Piecewise-constant matrix field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field<M> {
    Constant(M),
    PerCell(Vec<M>),
}

pub type CoefficientField = Field<ComplexMatrix>;
pub type RealMatrixField = Field<DMatrix<f64>>;

impl<M> Field<M> {
    /// Distinct stored matrices (one for a constant field).
    pub fn matrices(&self) -> &[M] {
        match self {
            Field::Constant(m) => std::slice::from_ref(m),
            Field::PerCell(ms) => ms,
        }
    }

    /// Matrix on a given cell.
    pub fn at(&self, cell: usize) -> &M {
        match self {
            Field::Constant(m) => m,
            Field::PerCell(ms) => &ms[cell],
        }
    }

    pub fn cell_count(&self) -> Option<usize> {
        match self {
            Field::Constant(_) => None,
            Field::PerCell(ms) => Some(ms.len()),
        }
    }

    pub fn map<N>(&self, f: impl Fn(&M) -> N) -> Field<N> {
        match self {
            Field::Constant(m) => Field::Constant(f(m)),
            Field::PerCell(ms) => Field::PerCell(ms.iter().map(f).collect()),
        }
    }
}

impl CoefficientField {
    pub fn constant(m: ComplexMatrix) -> Self {
        Field::Constant(m)
    }

    pub fn identity(d: usize) -> Self {
        Field::Constant(ComplexMatrix::identity(d))
    }

    pub fn dim(&self) -> usize {
        self.matrices().first().map_or(0, ComplexMatrix::dim)
    }

    /// Checks shared dimension and, when bound to a mesh, the cell count.
    pub fn validate(&self, cells: Option<usize>) -> Result<()> {
        let ms = self.matrices();
        if ms.is_empty() {
            return Err(Error::InvalidInput("empty coefficient field".into()));
        }
        let d = ms[0].dim();
        if let Some(m) = ms.iter().find(|m| m.dim() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: m.dim() });
        }
        if let (Some(n), Some(expected)) = (self.cell_count(), cells) {
            if n != expected {
                return Err(Error::DimensionMismatch { expected, got: n });
            }
        }
        Ok(())
    }

    pub fn rotate(&self, theta: f64) -> Self {
        self.map(|m| m.rotate(theta))
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|m| m.scale(s))
    }

    pub fn adjoint(&self) -> Self {
        self.map(ComplexMatrix::adjoint)
    }

    pub fn real_part(&self) -> RealMatrixField {
        self.map(ComplexMatrix::real_part)
    }

    pub fn imag_part(&self) -> RealMatrixField {
        self.map(ComplexMatrix::imag_part)
    }

    /// `Lambda(A)`: max over cells of the spectral norm.
    pub fn sup_operator_norm(&self) -> f64 {
        self.matrices().iter().map(ComplexMatrix::operator_norm).fold(0.0, f64::max)
    }

    pub fn is_real(&self) -> bool {
        self.matrices().iter().all(ComplexMatrix::is_real)
    }
}

impl RealMatrixField {
    pub fn sup_operator_norm(&self) -> f64 {
        self.matrices()
            .iter()
            .map(|m| m.clone().singular_values().max())
            .fold(0.0, f64::max)
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.matrices().iter().all(|m| (m - m.transpose()).amax() <= tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, SQRT_2};

    fn hermitian() -> ComplexMatrix {
        ComplexMatrix::from_complex2([
            [Complex64::new(2.0, 0.0), Complex64::new(0.0, 1.0)],
            [Complex64::new(0.0, -1.0), Complex64::new(2.0, 0.0)],
        ])
    }

    #[test]
    fn rotation_examples() {
        let id = CoefficientField::identity(2);
        assert_eq!(id.rotate(0.0), id);
        let quarter = id.rotate(FRAC_PI_2);
        let re = quarter.real_part();
        let im = quarter.imag_part();
        assert!(re.matrices()[0].amax() < 1e-15);
        assert_abs_diff_eq!(im.matrices()[0][(0, 0)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(im.matrices()[0][(0, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn norms_and_adjoint() {
        assert_abs_diff_eq!(CoefficientField::identity(2).sup_operator_norm(), 1.0, epsilon = 1e-14);
        assert_eq!(hermitian().adjoint(), hermitian());
        let m = CoefficientField::constant(ComplexMatrix::real2(1.0, 1.0, -1.0, 1.0));
        assert_abs_diff_eq!(m.sup_operator_norm(), SQRT_2, epsilon = 1e-14);
    }

    #[test]
    fn normal_matrix_norm_matches_dense_svd() {
        // [[1, t], [-t, 1]] is normal with eigenvalues 1 +- it
        for &t in &[0.0, 0.5, 1.0, 3.0] {
            let m = ComplexMatrix::real2(1.0, t, -t, 1.0);
            let svd = m.as_matrix().clone().svd(false, false);
            assert_abs_diff_eq!(m.operator_norm(), svd.singular_values.max(), epsilon = 1e-14);
            assert_abs_diff_eq!(m.operator_norm(), (1.0 + t * t).sqrt(), epsilon = 1e-12);
        }
    }

    #[test]
    fn per_cell_validation() {
        let f = CoefficientField::PerCell(vec![ComplexMatrix::identity(2); 3]);
        assert!(f.validate(Some(3)).is_ok());
        assert!(matches!(f.validate(Some(4)), Err(Error::DimensionMismatch { .. })));
        let mixed = CoefficientField::PerCell(vec![ComplexMatrix::identity(2), ComplexMatrix::identity(3)]);
        assert!(mixed.validate(None).is_err());
    }

    #[test]
    fn serde_uses_re_im_pairs() {
        let f = CoefficientField::constant(hermitian());
        let s = serde_json::to_string(&f).unwrap();
        assert_eq!(s, r#"{"constant":[[[2.0,0.0],[0.0,1.0]],[[0.0,-1.0],[2.0,0.0]]]}"#);
        let back: CoefficientField = serde_json::from_str(&s).unwrap();
        assert_eq!(back, f);
        assert!(serde_json::from_str::<ComplexMatrix>("[[[1,0]]]").is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn matrix() -> impl Strategy<Value = ComplexMatrix> {
            proptest::collection::vec(-3.0..3.0f64, 8).prop_map(|v| {
                ComplexMatrix::from_complex2([
                    [Complex64::new(v[0], v[1]), Complex64::new(v[2], v[3])],
                    [Complex64::new(v[4], v[5]), Complex64::new(v[6], v[7])],
                ])
            })
        }

        proptest! {
            #[test]
            fn rotation_preserves_norm(m in matrix(), theta in -3.1..3.1f64) {
                let r = m.rotate(theta);
                prop_assert!((r.operator_norm() - m.operator_norm()).abs() <= 1e-12 * (1.0 + m.operator_norm()));
                let back = r.rotate(-theta);
                for (a, b) in back.as_matrix().iter().zip(m.as_matrix().iter()) {
                    prop_assert!((a - b).norm() <= 1e-15 * 8.0);
                }
            }

            #[test]
            fn adjoint_involution_and_recomposition(m in matrix()) {
                prop_assert_eq!(m.adjoint().adjoint(), m.clone());
                let re = m.real_part();
                let im = m.imag_part();
                for i in 0..2 {
                    for j in 0..2 {
                        prop_assert_eq!(Complex64::new(re[(i, j)], im[(i, j)]), m.get(i, j));
                    }
                }
            }
        }
    }
}
