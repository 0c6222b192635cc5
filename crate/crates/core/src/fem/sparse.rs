//! Thin wrapper around a compressed-row sparse matrix.

use nalgebra::DMatrix;
use sprs::CsMat;

/// Sparse matrix in compressed row storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseOperator {
    mat: CsMat<f64>,
}

impl SparseOperator {
    /// Sum duplicate triplets into a CSR matrix.
    ///
    /// Duplicates are summed in insertion order, so mirrored insertions give
    /// an exactly symmetric matrix.
    pub fn from_triplets(
        shape: (usize, usize),
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let mut trip: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        trip.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; shape.0 + 1];
        let mut indices: Vec<usize> = Vec::with_capacity(trip.len());
        let mut data: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            assert!(
                r < shape.0 && c < shape.1,
                "triplet ({r}, {c}) outside {shape:?}"
            );
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..shape.0 {
            indptr[i + 1] += indptr[i];
        }
        SparseOperator {
            mat: CsMat::new(shape, indptr, indices, data),
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseOperator { mat: CsMat::eye(n) }
    }

    pub fn from_diagonal(d: &[f64]) -> Self {
        Self::from_triplets(
            (d.len(), d.len()),
            d.iter().enumerate().map(|(i, &v)| (i, i, v)),
        )
    }

    pub fn nrows(&self) -> usize {
        self.mat.rows()
    }

    pub fn ncols(&self) -> usize {
        self.mat.cols()
    }

    pub fn nnz(&self) -> usize {
        self.mat.nnz()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.mat.get(i, j).copied().unwrap_or(0.0)
    }

    /// Column indices and values of row `i`.
    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let ip = self.mat.indptr();
        let (a, b) = (ip.index(i), ip.index(i + 1));
        (&self.mat.indices()[a..b], &self.mat.data()[a..b])
    }

    /// All stored entries as `(row, col, value)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows()).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows()];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols(), "matvec dimension mismatch");
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        }
    }

    /// `x^T A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        self.matvec(y).iter().zip(x).map(|(a, b)| a * b).sum()
    }

    pub fn transpose(&self) -> Self {
        SparseOperator {
            mat: self.mat.transpose_view().to_csr(),
        }
    }

    pub fn matmul(&self, other: &SparseOperator) -> Self {
        SparseOperator {
            mat: &self.mat * &other.mat,
        }
    }

    /// Galerkin product `P^T A P`.
    pub fn galerkin(&self, p: &SparseOperator) -> Self {
        p.transpose().matmul(&self.matmul(p))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows()).map(|i| self.get(i, i)).collect()
    }

    /// Largest `|A_ij - A_ji|` over all stored entries.
    pub fn max_asymmetry(&self) -> f64 {
        self.triplets()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.mat.data().iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scaled(&self, s: f64) -> Self {
        SparseOperator {
            mat: self.mat.map(|v| v * s),
        }
    }

    /// `self + s * other`.
    pub fn add_scaled(&self, s: f64, other: &SparseOperator) -> Self {
        SparseOperator {
            mat: &self.mat + &other.mat.map(|v| v * s),
        }
    }

    /// Rows `rows` and columns `cols` (both given as index lists).
    pub fn submatrix(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut col_map = vec![usize::MAX; self.ncols()];
        for (k, &c) in cols.iter().enumerate() {
            col_map[c] = k;
        }
        let mut trip = Vec::new();
        for (ri, &r) in rows.iter().enumerate() {
            let (cs, vs) = self.row(r);
            for (&c, &v) in cs.iter().zip(vs) {
                if col_map[c] != usize::MAX {
                    trip.push((ri, col_map[c], v));
                }
            }
        }
        Self::from_triplets((rows.len(), cols.len()), trip)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut d = DMatrix::zeros(self.nrows(), self.ncols());
        for (i, j, v) in self.triplets() {
            d[(i, j)] += v;
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SparseOperator {
        SparseOperator::from_triplets(
            (3, 3),
            vec![
                (0, 0, 2.0),
                (0, 1, -1.0),
                (1, 0, -1.0),
                (1, 1, 2.0),
                (1, 2, -1.0),
                (2, 1, -1.0),
                (2, 2, 2.0),
                (0, 0, 1.0),
            ],
        )
    }

    #[test]
    fn duplicates_are_summed() {
        let a = sample();
        assert_eq!(a.get(0, 0), 3.0);
        assert_eq!(a.nnz(), 7);
        assert_eq!(a.max_asymmetry(), 0.0);
    }

    #[test]
    fn matvec_matches_dense() {
        let a = sample();
        let x = [1.0, 2.0, 3.0];
        let y = a.matvec(&x);
        let yd = a.to_dense() * nalgebra::DVector::from_column_slice(&x);
        for i in 0..3 {
            assert_eq!(y[i], yd[i]);
        }
    }

    #[test]
    fn galerkin_matches_dense() {
        let a = sample();
        let p = SparseOperator::from_triplets(
            (3, 2),
            vec![(0, 0, 1.0), (1, 0, 0.5), (1, 1, 0.5), (2, 1, 1.0)],
        );
        let g = a.galerkin(&p).to_dense();
        let pd = p.to_dense();
        let gd = pd.transpose() * a.to_dense() * pd;
        assert!((g - gd).abs().max() < 1e-15);
    }

    #[test]
    fn submatrix_picks_entries() {
        let a = sample();
        let s = a.submatrix(&[0, 2], &[1, 2]);
        assert_eq!(
            s.to_dense(),
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, -1.0, 2.0])
        );
    }
}
