use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Compressed sparse row matrix with complex entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<Complex64>,
}

impl CsrMatrix {
    /// Build from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, Complex64)>,
    ) -> Self {
        let mut rows: Vec<Vec<(usize, Complex64)>> = vec![Vec::new(); n_rows];
        for (i, j, v) in triplets {
            assert!(i < n_rows && j < n_cols, "triplet ({i}, {j}) out of bounds");
            rows[i].push((j, v));
        }
        let mut indptr = Vec::with_capacity(n_rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for (j, v) in row {
                if last == Some(j) {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            indptr.push(indices.len());
        }
        Self { n_rows, n_cols, indptr, indices, values }
    }

    pub fn from_diagonal(diag: &[Complex64]) -> Self {
        let n = diag.len();
        Self::from_triplets(n, n, diag.iter().enumerate().map(|(i, &v)| (i, i, v)))
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        let range = self.indptr[i]..self.indptr[i + 1];
        self.indices[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.n_rows).flat_map(move |i| self.row(i).map(move |(j, v)| (i, j, v)))
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        let range = self.indptr[i]..self.indptr[i + 1];
        match self.indices[range.clone()].binary_search(&j) {
            Ok(k) => self.values[range.start + k],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    pub fn matvec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.n_cols);
        (0..self.n_rows)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self::from_triplets(self.n_cols, self.n_rows, self.iter().map(|(i, j, v)| (j, i, v.conj())))
    }

    pub fn scaled(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// `scale * self + diag(diag)`.
    pub fn affine(&self, scale: Complex64, diag: &[Complex64]) -> Self {
        assert_eq!(self.n_rows, self.n_cols);
        assert_eq!(diag.len(), self.n_rows);
        Self::from_triplets(
            self.n_rows,
            self.n_cols,
            self.iter()
                .map(|(i, j, v)| (i, j, scale * v))
                .chain(diag.iter().enumerate().map(|(i, &d)| (i, i, d))),
        )
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.n_rows, self.n_cols);
        for (i, j, v) in self.iter() {
            m[(i, j)] += v;
        }
        m
    }

    /// Largest absolute difference between this matrix and its adjoint.
    pub fn hermitian_defect(&self) -> f64 {
        self.iter()
            .map(|(i, j, v)| (v - self.get(j, i).conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Coordinate text format: one `row col re im` line per stored entry.
    pub fn write_coordinate<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "% {} {} {}", self.n_rows, self.n_cols, self.nnz())?;
        for (i, j, v) in self.iter() {
            writeln!(w, "{} {} {:.17e} {:.17e}", i, j, v.re, v.im)?;
        }
        Ok(())
    }

    /// Symmetrized adjacency lists (diagonal excluded).
    pub(crate) fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_rows];
        for (i, j, _) in self.iter() {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for a in &mut adj {
            a.sort_unstable();
            a.dedup();
        }
        adj
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn duplicates_are_summed() {
        let m = CsrMatrix::from_triplets(2, 2, vec![(0, 1, c(1.0, 0.0)), (0, 1, c(0.0, 2.0)), (1, 0, c(3.0, 0.0))]);
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(0, 1), c(1.0, 2.0));
        assert_eq!(m.get(1, 1), c(0.0, 0.0));
    }

    #[test]
    fn adjoint_and_matvec() {
        let m = CsrMatrix::from_triplets(2, 3, vec![(0, 2, c(1.0, 1.0)), (1, 0, c(2.0, 0.0))]);
        let y = m.matvec(&[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 1.0)]);
        assert_eq!(y, vec![c(-1.0, 1.0), c(2.0, 0.0)]);
        let a = m.adjoint();
        assert_eq!(a.get(2, 0), c(1.0, -1.0));
        assert_eq!(a.n_rows(), 3);
    }

    #[test]
    fn coordinate_export() {
        let m = CsrMatrix::from_diagonal(&[c(1.0, 0.0), c(0.0, -1.0)]);
        let mut buf = Vec::new();
        m.write_coordinate(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("1 1 "));
    }
}
