use nalgebra::DVector;

use super::ReducedBasis;
use crate::channel::PhysicalParams;
use crate::error::{Error, Result};
use crate::pde::{ChannelModel, FactoredSystem, SpaceTimeSystem};

/// Stopping rule of the inverse power iteration for sigma_min(A).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlphaOptions {
    /// Relative change of the eigenvalue estimate below which the iteration stops.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for AlphaOptions {
    fn default() -> Self {
        AlphaOptions {
            tol: 1e-8,
            max_iter: 2000,
        }
    }
}

/// Computable bound on the state and output error of the reduced solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorBound {
    /// ||A(mu) Z x - b(mu)||
    pub rho: f64,
    /// Smallest singular value of A(mu).
    pub alpha: f64,
    pub bound: f64,
}

/// Smallest singular value of A(mu) by inverse power iteration on A^T A,
/// using the block-triangular factorization for both solves.
pub fn smallest_singular_value(sys: &SpaceTimeSystem, opts: AlphaOptions) -> Result<f64> {
    let factored = FactoredSystem::new(sys)?;
    let n = sys.grid().unknowns();
    let mut x = DVector::from_fn(n, |i, _| 1.0 + 0.5 * ((i as f64) * 0.7).sin());
    x /= x.norm();
    let mut previous = 0.0;
    for _ in 0..opts.max_iter {
        // Rayleigh quotient of (A^T A)^{-1}: ||A^{-T} x||^2
        let w = factored.solve_transpose(&x);
        let estimate = w.norm_squared();
        let y = factored.solve(&w);
        let norm = y.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Numerical("inverse power iteration broke down".into()));
        }
        x = y / norm;
        if (estimate - previous).abs() <= opts.tol * estimate {
            return Ok(1.0 / estimate.sqrt());
        }
        previous = estimate;
    }
    Err(Error::Numerical(format!(
        "smallest singular value did not converge in {} iterations",
        opts.max_iter
    )))
}

/// rho / alpha for the reduced solution `xi_tilde` at `mu`.
pub fn error_bound(
    rb: &ReducedBasis,
    model: &ChannelModel,
    mu: &PhysicalParams,
    xi_tilde: &DVector<f64>,
    opts: AlphaOptions,
) -> Result<ErrorBound> {
    rb.check_model(model)?;
    let sys = model.system(mu)?;
    let rho = sys.residual(&rb.reconstruct(xi_tilde)).norm();
    let alpha = smallest_singular_value(&sys, opts)?;
    Ok(ErrorBound {
        rho,
        alpha,
        bound: rho / alpha,
    })
}
