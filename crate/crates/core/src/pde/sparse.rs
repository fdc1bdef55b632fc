//! Minimal compressed-row matrix used for the space-time operators.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds from (row, col, value) triplets; duplicates are summed and
    /// explicit zeros are dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        let mut rows_of = Vec::with_capacity(triplets.len());
        for (r, c, v) in triplets {
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().expect("nonempty") += v;
            } else {
                col_idx.push(c);
                values.push(v);
                rows_of.push(r);
                last = Some((r, c));
            }
        }
        let keep: Vec<bool> = values.iter().map(|v| *v != 0.0).collect();
        let mut ci = Vec::new();
        let mut vs = Vec::new();
        for (k, &r) in rows_of.iter().enumerate() {
            if keep[k] {
                row_ptr[r + 1] += 1;
                ci.push(col_idx[k]);
                vs.push(values[k]);
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            col_idx: ci,
            values: vs,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Nonzeros of one row as (column, value) pairs.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(col, _)| col == c).map_or(0.0, |(_, v)| v)
    }

    /// y += scale * A x
    pub fn mul_add(&self, scale: f64, x: &[f64], y: &mut [f64]) {
        for (r, yr) in y.iter_mut().enumerate().take(self.nrows) {
            let mut s = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yr += scale * s;
        }
    }

    pub fn mul_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.nrows);
        self.mul_add(1.0, x.as_slice(), y.as_mut_slice());
        y
    }

    /// A * B for a dense B.
    pub fn mul_dense(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(self.ncols, b.nrows());
        let mut out = DMatrix::zeros(self.nrows, b.ncols());
        for j in 0..b.ncols() {
            let col = b.column(j);
            for r in 0..self.nrows {
                let mut s = 0.0;
                for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                    s += self.values[k] * col[self.col_idx[k]];
                }
                out[(r, j)] = s;
            }
        }
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.nrows, self.ncols);
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                out[(r, c)] = v;
            }
        }
        out
    }

    /// Sum of scaled matrices of equal shape.
    pub fn linear_combination(terms: &[(f64, &CsrMatrix)]) -> CsrMatrix {
        let (nrows, ncols) = (terms[0].1.nrows, terms[0].1.ncols);
        let mut triplets = Vec::new();
        for (scale, m) in terms {
            assert_eq!((m.nrows, m.ncols), (nrows, ncols));
            for r in 0..m.nrows {
                for (c, v) in m.row(r) {
                    triplets.push((r, c, scale * v));
                }
            }
        }
        CsrMatrix::from_triplets(nrows, ncols, triplets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed_and_zeros_dropped() {
        let m = CsrMatrix::from_triplets(
            2,
            3,
            vec![(1, 2, 1.0), (0, 0, 2.0), (1, 2, 3.0), (0, 1, 0.0), (1, 0, 1.0), (1, 0, -1.0)],
        );
        assert_eq!(m.nnz(), 2);
        assert_eq!(m.get(1, 2), 4.0);
        assert_eq!(m.get(0, 0), 2.0);
        assert_eq!(m.get(0, 1), 0.0);
    }

    #[test]
    fn products_match_dense() {
        let m = CsrMatrix::from_triplets(3, 3, vec![(0, 0, 1.0), (1, 2, -2.0), (2, 1, 0.5), (2, 2, 3.0)]);
        let x = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(m.mul_vec(&x), m.to_dense() * &x);
        let b = DMatrix::from_fn(3, 2, |i, j| (i + 2 * j) as f64);
        assert_eq!(m.mul_dense(&b), m.to_dense() * b);
    }
}
