//! Space-time reduced basis: snapshots, POD, Galerkin reduced solves and the
//! residual-based error bound.

mod bound;
mod calibrate;
mod persist;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::channel::PhysicalParams;
use crate::error::{Error, Result};
use crate::pde::{ChannelModel, Grid};
use crate::uq::{sample_rows, stream, Distribution};

pub use bound::{error_bound, smallest_singular_value, AlphaOptions, ErrorBound};
pub use calibrate::{calibrate, variance_table, CalibrationModel};
pub use persist::{load_basis, save_basis};

/// Full-order solutions at sampled parameter values.
#[derive(Debug, Clone)]
pub struct SnapshotSet {
    pub grid: Grid,
    pub params: Vec<PhysicalParams>,
    pub states: Vec<DVector<f64>>,
}

impl SnapshotSet {
    pub fn count(&self) -> usize {
        self.states.len()
    }

    /// The N x count snapshot matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.states)
    }
}

/// Solves the full model at `count` parameter values drawn from `dists`.
/// Draws without valid boundary coefficients are redrawn.
pub fn collect_snapshots(
    model: &ChannelModel,
    dists: &[Distribution],
    count: usize,
    seed: u64,
) -> Result<SnapshotSet> {
    if count == 0 {
        return Err(Error::config("snapshots", "snapshot count must be at least 1"));
    }
    let draws = sample_rows(dists, count, seed, stream::SNAPSHOTS, &|r| {
        model.is_admissible(r)
    })?;
    let params: Vec<PhysicalParams> = (0..count)
        .map(|j| PhysicalParams::from_slice(draws.row(j)))
        .collect::<Result<_>>()?;
    let states: Vec<Result<DVector<f64>>> = params
        .par_iter()
        .map(|mu| {
            model
                .solve(mu)
                .map(|t| t.xi)
                .map_err(|e| e.context(format!("snapshot at {mu:?}")))
        })
        .collect();
    Ok(SnapshotSet {
        grid: *model.grid(),
        params,
        states: states.into_iter().collect::<Result<_>>()?,
    })
}

/// Orthonormal basis Z with the Galerkin-projected affine terms.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedBasis {
    pub(crate) z: DMatrix<f64>,
    /// Singular values of the snapshot matrix, in decreasing order.
    pub(crate) singular_values: Vec<f64>,
    pub(crate) operators: Vec<DMatrix<f64>>,
    pub(crate) rhs: Vec<DVector<f64>>,
    pub(crate) fingerprint: Vec<f64>,
}

impl ReducedBasis {
    /// Projects the model's affine terms onto the columns of `z`.
    pub fn from_columns(model: &ChannelModel, z: DMatrix<f64>, singular_values: Vec<f64>) -> Self {
        let terms = model.terms();
        let zt = z.transpose();
        let operators = terms
            .operators()
            .iter()
            .map(|a| &zt * a.mul_dense(&z))
            .collect();
        let rhs = terms.rhs_terms().iter().map(|b| &zt * b).collect();
        ReducedBasis {
            z,
            singular_values,
            operators,
            rhs,
            fingerprint: model.fingerprint(),
        }
    }

    pub fn size(&self) -> usize {
        self.z.ncols()
    }

    pub fn full_dim(&self) -> usize {
        self.z.nrows()
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    pub fn fingerprint(&self) -> &[f64] {
        &self.fingerprint
    }

    /// Numerical rank of the snapshot matrix the basis was built from.
    pub fn snapshot_rank(&self) -> usize {
        numerical_rank(&self.singular_values, self.full_dim())
    }

    /// Leading `m` columns; the projected terms are the leading blocks.
    pub fn truncate(&self, m: usize) -> Result<ReducedBasis> {
        if m == 0 || m > self.size() {
            return Err(Error::config(
                "m",
                format!("basis size must lie in 1..={}, got {m}", self.size()),
            ));
        }
        Ok(ReducedBasis {
            z: self.z.columns(0, m).into_owned(),
            singular_values: self.singular_values.clone(),
            operators: self
                .operators
                .iter()
                .map(|a| a.view((0, 0), (m, m)).into_owned())
                .collect(),
            rhs: self.rhs.iter().map(|b| b.rows(0, m).into_owned()).collect(),
            fingerprint: self.fingerprint.clone(),
        })
    }

    fn check_model(&self, model: &ChannelModel) -> Result<()> {
        if model.fingerprint() != self.fingerprint {
            return Err(Error::config(
                "basis",
                "reduced basis was built for a different grid or configuration",
            ));
        }
        Ok(())
    }

    /// Reduced state for `mu`: solves sum_q theta_q Z^T A_q Z x = Z^T b.
    pub fn solve(&self, model: &ChannelModel, mu: &PhysicalParams) -> Result<DVector<f64>> {
        self.check_model(model)?;
        let coef = model.coefficients(mu)?;
        let m = self.size();
        let mut a: DMatrix<f64> = DMatrix::zeros(m, m);
        for (theta, op) in coef.operator.iter().zip(&self.operators) {
            a += op * *theta;
        }
        let mut b = DVector::zeros(m);
        for (phi, r) in coef.rhs.iter().zip(&self.rhs) {
            b.axpy(*phi, r, 1.0);
        }
        if b.iter().all(|v| *v == 0.0) {
            return Ok(b);
        }
        let x = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::Numerical(format!("singular reduced matrix (m = {m})")))?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical(format!("non-finite reduced solution (m = {m})")));
        }
        Ok(x)
    }

    /// Reduced output ||x||, equal to ||Z x|| since Z is orthonormal.
    pub fn output(&self, model: &ChannelModel, mu: &PhysicalParams) -> Result<f64> {
        Ok(self.solve(model, mu)?.norm())
    }

    pub fn reconstruct(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.z * x
    }
}

/// Free-function form of [`ReducedBasis::solve`].
pub fn solve_reduced(rb: &ReducedBasis, mu: &PhysicalParams, model: &ChannelModel) -> Result<DVector<f64>> {
    rb.solve(model, mu)
}

fn numerical_rank(sv: &[f64], rows: usize) -> usize {
    let Some(&top) = sv.first() else { return 0 };
    let tol = top * rows.max(sv.len()) as f64 * f64::EPSILON;
    sv.iter().take_while(|s| **s > tol).count()
}

/// Left singular vectors and singular values of the snapshot matrix, sorted
/// by decreasing singular value, truncated at the numerical rank.
fn snapshot_svd(snapshots: &SnapshotSet) -> (DMatrix<f64>, Vec<f64>) {
    let svd = snapshots.matrix().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sv: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let rank = numerical_rank(&sv, u.nrows());
    let cols: Vec<DVector<f64>> = order[..rank].iter().map(|&k| u.column(k).into_owned()).collect();
    let z = if cols.is_empty() {
        DMatrix::zeros(u.nrows(), 0)
    } else {
        DMatrix::from_columns(&cols)
    };
    (z, sv)
}

fn check_grid(model: &ChannelModel, snapshots: &SnapshotSet) -> Result<()> {
    if snapshots.grid != *model.grid() {
        return Err(Error::config("grid", "snapshots were computed on a different grid"));
    }
    Ok(())
}

fn basis_of_size(model: &ChannelModel, z: DMatrix<f64>, sv: Vec<f64>, m: usize) -> Result<ReducedBasis> {
    let rank = z.ncols();
    if m == 0 || m > rank {
        return Err(Error::Numerical(format!(
            "requested basis size {m} but the snapshot matrix has numerical rank {rank}"
        )));
    }
    Ok(ReducedBasis::from_columns(model, z.columns(0, m).into_owned(), sv))
}

/// POD basis of size `m` (the first `m` left singular vectors of the raw
/// snapshot matrix).
pub fn pod(model: &ChannelModel, snapshots: &SnapshotSet, m: usize) -> Result<ReducedBasis> {
    check_grid(model, snapshots)?;
    let (z, sv) = snapshot_svd(snapshots);
    basis_of_size(model, z, sv, m)
}

/// POD basis at the numerical rank of the snapshots; nested bases follow from
/// [`ReducedBasis::truncate`].
pub fn pod_full(model: &ChannelModel, snapshots: &SnapshotSet) -> Result<ReducedBasis> {
    check_grid(model, snapshots)?;
    let (z, sv) = snapshot_svd(snapshots);
    let rank = z.ncols();
    basis_of_size(model, z, sv, rank)
}
