//! Space-time system A(mu) xi = b(mu) of the implicit upwind scheme, kept in
//! affine form: A(mu) = sum_q theta_q(mu) A_q and b(mu) = sum_r phi_r(mu) b_r.

use std::sync::Arc;

use nalgebra::DVector;

use super::banded::BandMatrix;
use super::sparse::CsrMatrix;
use super::Grid;
use crate::channel::{BoundaryCoefficients, Equilibrium};

/// Number of operator terms in the affine expansion.
pub const OPERATOR_TERMS: usize = 7;
/// Number of right-hand-side terms in the affine expansion.
pub const RHS_TERMS: usize = 4;

/// Operator term indices.
pub mod term {
    /// Time derivative, step-0 identity and the unit parts of the boundary rows.
    pub const CONSTANT: usize = 0;
    pub const LAMBDA_1: usize = 1;
    pub const LAMBDA_2: usize = 2;
    pub const GAMMA: usize = 3;
    pub const DELTA: usize = 4;
    pub const W0: usize = 5;
    pub const WL: usize = 6;
}

/// Right-hand-side term indices.
pub mod rhs_term {
    pub const XI1_INITIAL: usize = 0;
    pub const XI2_INITIAL: usize = 1;
    pub const UPSTREAM: usize = 2;
    pub const DOWNSTREAM: usize = 3;
}

/// Parameter-dependent weights of the affine terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffineCoefficients {
    pub operator: [f64; OPERATOR_TERMS],
    pub rhs: [f64; RHS_TERMS],
}

impl AffineCoefficients {
    pub fn new(eq: &Equilibrium, bc: &BoundaryCoefficients, xi1_0: f64, xi2_0: f64) -> Self {
        AffineCoefficients {
            operator: [1.0, eq.lambda_1, eq.lambda_2, eq.gamma, eq.delta, bc.w0, bc.wl],
            rhs: [xi1_0, xi2_0, bc.a, bc.c],
        }
    }
}

/// Calls `push(row, col, value)` for every entry of the per-step matrix, in
/// block-local indices (xi1 at 0..nx, xi2 at nx..2nx).
pub(crate) fn step_stencil(
    grid: &Grid,
    theta: &[f64; OPERATOR_TERMS],
    mut push: impl FnMut(usize, usize, f64),
) {
    use term::*;
    let nx = grid.nx;
    let inv_dt = 1.0 / grid.dt;
    let inv_dx = 1.0 / grid.dx;
    let t = theta;

    push(0, 0, t[CONSTANT] - t[W0]);
    push(0, nx, t[W0]);
    for i in 1..nx {
        push(i, i, t[CONSTANT] * inv_dt + t[LAMBDA_1] * inv_dx + t[GAMMA]);
        push(i, i - 1, -t[LAMBDA_1] * inv_dx);
        push(i, nx + i, t[DELTA]);
    }
    for i in 0..nx - 1 {
        let r = nx + i;
        push(r, r, t[CONSTANT] * inv_dt + t[LAMBDA_2] * inv_dx + t[DELTA]);
        push(r, r + 1, -t[LAMBDA_2] * inv_dx);
        push(r, i, t[GAMMA]);
    }
    let last = 2 * nx - 1;
    push(last, nx - 1, -t[WL]);
    push(last, last, t[CONSTANT] + t[WL]);
}

/// Rows of a step block that carry the time derivative (all but the two
/// boundary rows).
pub(crate) fn is_interior_row(grid: &Grid, local_row: usize) -> bool {
    local_row != 0 && local_row != 2 * grid.nx - 1
}

/// The parameter-independent matrices A_q and vectors b_r for one grid.
#[derive(Debug, Clone)]
pub struct AffineTerms {
    grid: Grid,
    operators: Vec<CsrMatrix>,
    rhs: Vec<DVector<f64>>,
}

impl AffineTerms {
    pub fn new(grid: &Grid) -> Self {
        let n = grid.unknowns();
        let block = grid.block_size();
        let inv_dt = 1.0 / grid.dt;
        let operators = (0..OPERATOR_TERMS)
            .map(|q| {
                let mut theta = [0.0; OPERATOR_TERMS];
                theta[q] = 1.0;
                let mut triplets = Vec::new();
                if q == term::CONSTANT {
                    for r in 0..block {
                        triplets.push((r, r, 1.0));
                    }
                }
                for k in 1..=grid.nt {
                    let off = k * block;
                    step_stencil(grid, &theta, |r, c, v| {
                        if v != 0.0 {
                            triplets.push((off + r, off + c, v));
                        }
                    });
                    if q == term::CONSTANT {
                        for r in (0..block).filter(|&r| is_interior_row(grid, r)) {
                            triplets.push((off + r, off - block + r, -inv_dt));
                        }
                    }
                }
                CsrMatrix::from_triplets(n, n, triplets)
            })
            .collect();

        let mut rhs = vec![DVector::zeros(n); RHS_TERMS];
        for i in 0..grid.nx {
            rhs[rhs_term::XI1_INITIAL][grid.index(0, 0, i)] = 1.0;
            rhs[rhs_term::XI2_INITIAL][grid.index(0, 1, i)] = 1.0;
        }
        for k in 1..=grid.nt {
            rhs[rhs_term::UPSTREAM][grid.index(k, 0, 0)] = 1.0;
            rhs[rhs_term::DOWNSTREAM][grid.index(k, 1, grid.nx - 1)] = 1.0;
        }
        AffineTerms {
            grid: *grid,
            operators,
            rhs,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn operators(&self) -> &[CsrMatrix] {
        &self.operators
    }

    pub fn rhs_terms(&self) -> &[DVector<f64>] {
        &self.rhs
    }
}

/// Affine space-time system for one parameter value.
#[derive(Debug, Clone)]
pub struct SpaceTimeSystem {
    pub terms: Arc<AffineTerms>,
    pub coefficients: AffineCoefficients,
}

/// Builds the space-time system for the given equilibrium, boundary
/// coefficients and constant initial state.
pub fn assemble(
    eq: &Equilibrium,
    bc: &BoundaryCoefficients,
    grid: &Grid,
    xi1_0: f64,
    xi2_0: f64,
) -> SpaceTimeSystem {
    SpaceTimeSystem {
        terms: Arc::new(AffineTerms::new(grid)),
        coefficients: AffineCoefficients::new(eq, bc, xi1_0, xi2_0),
    }
}

impl SpaceTimeSystem {
    pub fn grid(&self) -> &Grid {
        self.terms.grid()
    }

    /// A(mu) as one sparse matrix.
    pub fn matrix(&self) -> CsrMatrix {
        let parts: Vec<(f64, &CsrMatrix)> = self
            .coefficients
            .operator
            .iter()
            .copied()
            .zip(self.terms.operators())
            .collect();
        CsrMatrix::linear_combination(&parts)
    }

    pub fn rhs(&self) -> DVector<f64> {
        let mut b = DVector::zeros(self.grid().unknowns());
        for (phi, term) in self.coefficients.rhs.iter().zip(self.terms.rhs_terms()) {
            if *phi != 0.0 {
                b.axpy(*phi, term, 1.0);
            }
        }
        b
    }

    /// A(mu) x through the affine terms.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = DVector::zeros(self.grid().unknowns());
        for (theta, op) in self.coefficients.operator.iter().zip(self.terms.operators()) {
            if *theta != 0.0 {
                op.mul_add(*theta, x.as_slice(), y.as_mut_slice());
            }
        }
        y
    }

    /// Residual A(mu) x - b(mu).
    pub fn residual(&self, x: &DVector<f64>) -> DVector<f64> {
        self.apply(x) - self.rhs()
    }

    /// Per-step matrix in interleaved ordering (xi1^i -> 2i, xi2^i -> 2i+1),
    /// which has two sub- and two super-diagonals.
    pub(crate) fn step_band(&self) -> BandMatrix {
        step_band(self.grid(), &self.coefficients.operator)
    }
}

pub(crate) fn interleave(grid: &Grid, local: usize) -> usize {
    if local < grid.nx {
        2 * local
    } else {
        2 * (local - grid.nx) + 1
    }
}

pub(crate) fn step_band(grid: &Grid, theta: &[f64; OPERATOR_TERMS]) -> BandMatrix {
    let mut band = BandMatrix::zeros(grid.block_size(), 2, 2);
    step_stencil(grid, theta, |r, c, v| {
        band.add(interleave(grid, r), interleave(grid, c), v)
    });
    band
}
