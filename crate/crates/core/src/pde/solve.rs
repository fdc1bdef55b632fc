use nalgebra::DVector;

use super::banded::BandLu;
use super::system::{interleave, is_interior_row, SpaceTimeSystem};
use super::{Grid, StateTrajectory};
use crate::error::{Error, Result};

/// A(mu) factored through its block lower-bidiagonal structure: identity on
/// step 0, one shared step matrix S on the diagonal of steps 1..=Nt, and
/// -I/dt on the interior rows of the sub-diagonal.
#[derive(Debug, Clone)]
pub struct FactoredSystem {
    grid: Grid,
    step: BandLu,
}

impl FactoredSystem {
    pub fn new(sys: &SpaceTimeSystem) -> Result<Self> {
        let step = sys
            .step_band()
            .factor()
            .map_err(|e| e.context("step matrix (shared by steps 1..=Nt)"))?;
        Ok(FactoredSystem {
            grid: *sys.grid(),
            step,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn gather(&self, src: &[f64], dst: &mut [f64]) {
        for (local, v) in src.iter().enumerate() {
            dst[interleave(&self.grid, local)] = *v;
        }
    }

    fn scatter(&self, src: &[f64], dst: &mut [f64]) {
        for (local, v) in dst.iter_mut().enumerate() {
            *v = src[interleave(&self.grid, local)];
        }
    }

    /// Solves A(mu) x = b by forward substitution in time.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let grid = &self.grid;
        let block = grid.block_size();
        let inv_dt = 1.0 / grid.dt;
        let mut x = DVector::zeros(grid.unknowns());
        x.rows_mut(0, block).copy_from(&b.rows(0, block));
        let mut work = vec![0.0; block];
        let mut local = vec![0.0; block];
        for k in 1..=grid.nt {
            let off = k * block;
            for r in 0..block {
                local[r] = b[off + r];
                if is_interior_row(grid, r) {
                    local[r] += inv_dt * x[off - block + r];
                }
            }
            self.gather(&local, &mut work);
            self.step.solve_in_place(&mut work);
            self.scatter(&work, &mut local);
            x.rows_mut(off, block).copy_from_slice(&local);
        }
        x
    }

    /// Solves A(mu)^T y = r by backward substitution in time.
    pub fn solve_transpose(&self, r: &DVector<f64>) -> DVector<f64> {
        let grid = &self.grid;
        let block = grid.block_size();
        let inv_dt = 1.0 / grid.dt;
        let mut y = DVector::zeros(grid.unknowns());
        let mut work = vec![0.0; block];
        let mut local = vec![0.0; block];
        for k in (1..=grid.nt).rev() {
            let off = k * block;
            for row in 0..block {
                local[row] = r[off + row];
                if k < grid.nt && is_interior_row(grid, row) {
                    local[row] += inv_dt * y[off + block + row];
                }
            }
            self.gather(&local, &mut work);
            self.step.solve_transpose_in_place(&mut work);
            self.scatter(&work, &mut local);
            y.rows_mut(off, block).copy_from_slice(&local);
        }
        for row in 0..block {
            let mut v = r[row];
            if grid.nt >= 1 && is_interior_row(grid, row) {
                v += inv_dt * y[block + row];
            }
            y[row] = v;
        }
        y
    }
}

/// Solves the full-order space-time system step by step.
pub fn solve_full(sys: &SpaceTimeSystem) -> Result<StateTrajectory> {
    let factored = FactoredSystem::new(sys)?;
    let xi = factored.solve(&sys.rhs());
    if xi.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite state in full solve".into()));
    }
    Ok(StateTrajectory {
        grid: *sys.grid(),
        xi,
    })
}
