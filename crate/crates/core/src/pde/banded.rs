//! LU factorization with partial pivoting for banded matrices, with solves
//! against the matrix and its transpose.

use crate::error::{Error, Result};

/// Square banded matrix with `lower` sub-diagonals and `upper` super-diagonals.
///
/// Each row is stored contiguously with room for `lower` extra super-diagonals
/// of pivoting fill-in, so a row occupies `2 * lower + upper + 1` slots.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    lower: usize,
    upper: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, lower: usize, upper: usize) -> Self {
        let width = 2 * lower + upper + 1;
        BandMatrix {
            n,
            lower,
            upper,
            width,
            data: vec![0.0; n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, row: usize, col: usize) -> usize {
        debug_assert!(col + self.lower >= row && col <= row + self.lower + self.upper);
        row * self.width + (col + self.lower - row)
    }

    /// Adds `value` at (row, col); the position must lie inside the band.
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        assert!(
            col + self.lower >= row && col <= row + self.upper,
            "entry ({row}, {col}) outside the band"
        );
        let s = self.slot(row, col);
        self.data[s] += value;
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        if col + self.lower < row || col > row + self.lower + self.upper {
            return 0.0;
        }
        self.data[self.slot(row, col)]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|row| {
                let lo = row.saturating_sub(self.lower);
                let hi = (row + self.upper).min(self.n - 1);
                (lo..=hi).map(|col| self.get(row, col) * x[col]).sum()
            })
            .collect()
    }

    /// Factorizes in place; fails on an exactly singular pivot.
    pub fn factor(mut self) -> Result<BandLu> {
        let n = self.n;
        let kl = self.lower;
        let reach = self.lower + self.upper;
        let mut pivots = vec![0usize; n];
        let mut scale = 0.0f64;
        for v in &self.data {
            scale = scale.max(v.abs());
        }
        for j in 0..n {
            let last = (j + kl).min(n - 1);
            let mut p = j;
            let mut best = self.data[self.slot(j, j)].abs();
            for r in j + 1..=last {
                let v = self.data[self.slot(r, j)].abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            pivots[j] = p;
            if best == 0.0 || best <= scale * f64::EPSILON * n as f64 {
                return Err(Error::Numerical(format!(
                    "singular banded matrix: pivot {best:e} in column {j}"
                )));
            }
            let col_end = (j + reach).min(n - 1);
            if p != j {
                for c in j..=col_end {
                    let a = self.slot(j, c);
                    let b = self.slot(p, c);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.slot(j, j)];
            for r in j + 1..=last {
                let rj = self.slot(r, j);
                let factor = self.data[rj] / pivot;
                self.data[rj] = factor;
                if factor != 0.0 {
                    for c in j + 1..=col_end {
                        let jc = self.slot(j, c);
                        let rc = self.slot(r, c);
                        self.data[rc] -= factor * self.data[jc];
                    }
                }
            }
        }
        Ok(BandLu { lu: self, pivots })
    }
}

/// Packed L and U factors with the row interchanges applied during
/// elimination.
#[derive(Debug, Clone)]
pub struct BandLu {
    lu: BandMatrix,
    pivots: Vec<usize>,
}

impl BandLu {
    pub fn dim(&self) -> usize {
        self.lu.n
    }

    /// Overwrites `b` with the solution of `A x = b`.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let m = &self.lu;
        let n = m.n;
        let kl = m.lower;
        let reach = m.lower + m.upper;
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                b.swap(j, p);
            }
            let bj = b[j];
            if bj != 0.0 {
                for r in j + 1..=(j + kl).min(n - 1) {
                    b[r] -= m.data[m.slot(r, j)] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let mut s = b[j];
            for c in j + 1..=(j + reach).min(n - 1) {
                s -= m.data[m.slot(j, c)] * b[c];
            }
            b[j] = s / m.data[m.slot(j, j)];
        }
    }

    /// Overwrites `b` with the solution of `A^T x = b`.
    pub fn solve_transpose_in_place(&self, b: &mut [f64]) {
        let m = &self.lu;
        let n = m.n;
        let kl = m.lower;
        let reach = m.lower + m.upper;
        // U^T z = b
        for j in 0..n {
            let mut s = b[j];
            for r in j.saturating_sub(reach)..j {
                s -= m.data[m.slot(r, j)] * b[r];
            }
            b[j] = s / m.data[m.slot(j, j)];
        }
        // L^T with interchanges, in reverse order
        for j in (0..n).rev() {
            let mut s = b[j];
            for r in j + 1..=(j + kl).min(n - 1) {
                s -= m.data[m.slot(r, j)] * b[r];
            }
            b[j] = s;
            let p = self.pivots[j];
            if p != j {
                b.swap(j, p);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_band(n: usize, kl: usize, ku: usize, seed: u64) -> (BandMatrix, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut band = BandMatrix::zeros(n, kl, ku);
        let mut dense = DMatrix::zeros(n, n);
        for r in 0..n {
            for c in r.saturating_sub(kl)..=(r + ku).min(n - 1) {
                // small diagonal so pivoting is exercised
                let v: f64 = rng.random_range(-1.0..1.0) * if r == c { 0.1 } else { 1.0 };
                band.add(r, c, v);
                dense[(r, c)] = v;
            }
        }
        (band, dense)
    }

    #[test]
    fn matches_dense_solves() {
        for (seed, n) in [(1u64, 7usize), (2, 20), (3, 41)] {
            let (band, dense) = random_band(n, 2, 2, seed);
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            let rhs: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let lu = band.clone().factor().unwrap();

            let mut x = rhs.clone();
            lu.solve_in_place(&mut x);
            let expected = dense.clone().lu().solve(&DVector::from_vec(rhs.clone())).unwrap();
            for i in 0..n {
                assert!((x[i] - expected[i]).abs() < 1e-9 * (1.0 + expected[i].abs()));
            }

            let mut y = rhs.clone();
            lu.solve_transpose_in_place(&mut y);
            let expected_t = dense
                .transpose()
                .lu()
                .solve(&DVector::from_vec(rhs.clone()))
                .unwrap();
            for i in 0..n {
                assert!((y[i] - expected_t[i]).abs() < 1e-9 * (1.0 + expected_t[i].abs()));
            }
        }
    }

    #[test]
    fn product_matches_dense() {
        let (band, dense) = random_band(9, 2, 1, 5);
        let x: Vec<f64> = (0..9).map(|i| i as f64 - 4.0).collect();
        let y = band.mul_vec(&x);
        let expected = &dense * DVector::from_vec(x);
        for i in 0..9 {
            assert!((y[i] - expected[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let mut band = BandMatrix::zeros(3, 1, 1);
        band.add(0, 0, 1.0);
        band.add(1, 0, 1.0);
        // row 2 stays empty
        band.add(1, 1, 1.0);
        assert!(matches!(band.factor(), Err(Error::Numerical(_))));
    }
}
