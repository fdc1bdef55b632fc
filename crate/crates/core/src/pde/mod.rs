//! Implicit upwind discretization of the linearized characteristic system on a
//! space-time grid, with the full-order solve and the discrete output.

pub mod banded;
pub mod export;
pub mod solve;
pub mod sparse;
pub mod system;

use std::sync::Arc;

use nalgebra::DVector;

use crate::channel::{
    boundary_coefficients_with, equilibrium_of, DownstreamLinearization, Equilibrium,
    NominalConfig, PhysicalParams,
};
use crate::error::{Error, Result};

pub use solve::{solve_full, FactoredSystem};
pub use system::{assemble, AffineCoefficients, AffineTerms, SpaceTimeSystem};

/// Uniform space-time grid. Grid point `i` sits at `x = i * dx` for
/// `i = 0..nx`, and step `k` at `t = k * dt` for `k = 0..=nt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub nt: usize,
    pub dx: f64,
    pub dt: f64,
    pub length: f64,
    pub horizon: f64,
}

impl Grid {
    pub fn new(nx: usize, nt: usize, length: f64, horizon: f64) -> Result<Self> {
        if nx < 2 || nt < 1 {
            return Err(Error::config(
                "grid",
                format!("need Nx >= 2 and Nt >= 1, got Nx = {nx}, Nt = {nt}"),
            ));
        }
        if !(length > 0.0 && horizon > 0.0) {
            return Err(Error::config("grid", "L and T_star must be positive"));
        }
        Ok(Grid {
            nx,
            nt,
            dx: length / nx as f64,
            dt: horizon / nt as f64,
            length,
            horizon,
        })
    }

    /// Total number of unknowns, 2 (Nt + 1) Nx.
    pub fn unknowns(&self) -> usize {
        2 * (self.nt + 1) * self.nx
    }

    /// Unknowns per time step.
    pub fn block_size(&self) -> usize {
        2 * self.nx
    }

    /// Position of component `comp` (0 for xi1, 1 for xi2) at point `i` and
    /// step `k` in the space-time vector.
    pub fn index(&self, k: usize, comp: usize, i: usize) -> usize {
        debug_assert!(k <= self.nt && comp < 2 && i < self.nx);
        k * self.block_size() + comp * self.nx + i
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    pub fn t(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

fn steps_in(total: f64, step: f64, key: &str) -> Result<usize> {
    if !(step > 0.0 && total > 0.0 && step.is_finite() && total.is_finite()) {
        return Err(Error::config(key, format!("{key} must be positive, got {step}")));
    }
    let ratio = total / step;
    let count = ratio.round();
    if (ratio - count).abs() > 1e-9 * ratio.max(1.0) || count < 1.0 {
        return Err(Error::config(
            key,
            format!("{key} = {step} does not divide {total}"),
        ));
    }
    Ok(count as usize)
}

/// Grid with `Nx = L / dx` points and `Nt = T* / dt` steps; both steps must
/// divide their extent.
pub fn build_grid(length: f64, horizon: f64, dx: f64, dt: f64) -> Result<Grid> {
    let nx = steps_in(length, dx, "dx")?;
    let nt = steps_in(horizon, dt, "dt")?;
    Grid::new(nx, nt, length, horizon)
}

/// Full space-time state, time-major with `[xi1(0..nx), xi2(0..nx)]` per step.
#[derive(Debug, Clone, PartialEq)]
pub struct StateTrajectory {
    pub grid: Grid,
    pub xi: DVector<f64>,
}

impl StateTrajectory {
    pub fn new(grid: Grid, xi: DVector<f64>) -> Result<Self> {
        if xi.len() != grid.unknowns() {
            return Err(Error::Numerical(format!(
                "state length {} does not match the grid ({} unknowns)",
                xi.len(),
                grid.unknowns()
            )));
        }
        Ok(StateTrajectory { grid, xi })
    }

    /// (xi1, xi2) at step `k`.
    pub fn step(&self, k: usize) -> (&[f64], &[f64]) {
        let nx = self.grid.nx;
        let block = &self.xi.as_slice()[k * 2 * nx..(k + 1) * 2 * nx];
        block.split_at(nx)
    }

    /// Discrete spatial L2 norm sqrt(dx * sum_i xi1^2 + xi2^2) of every step.
    pub fn step_norms(&self) -> Vec<f64> {
        (0..=self.grid.nt)
            .map(|k| {
                let (a, b) = self.step(k);
                let s: f64 = a.iter().chain(b).map(|v| v * v).sum();
                (self.grid.dx * s).sqrt()
            })
            .collect()
    }
}

/// Euclidean norm of the whole space-time state, without quadrature weights.
pub fn discrete_output(traj: &StateTrajectory) -> f64 {
    traj.xi.norm()
}

/// Least-squares slope of ln(norm) against time. Steps with a zero norm are
/// skipped; `None` if fewer than two remain.
pub fn log_norm_slope(times: &[f64], norms: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(norms)
        .filter(|(_, n)| **n > 0.0)
        .map(|(t, n)| (*t, n.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    Some(sxy / sxx)
}

/// The channel model on a fixed grid and nominal configuration. Affine terms
/// are built once and shared by every evaluation.
#[derive(Debug, Clone)]
pub struct ChannelModel {
    cfg: NominalConfig,
    grid: Grid,
    terms: Arc<AffineTerms>,
    nominal_eq: Equilibrium,
}

impl ChannelModel {
    pub fn new(cfg: NominalConfig, grid: Grid) -> Result<Self> {
        cfg.validate()?;
        let nominal_eq = cfg.nominal_equilibrium()?;
        Ok(ChannelModel {
            terms: Arc::new(AffineTerms::new(&grid)),
            cfg,
            grid,
            nominal_eq,
        })
    }

    pub fn config(&self) -> &NominalConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn terms(&self) -> &Arc<AffineTerms> {
        &self.terms
    }

    /// Affine weights for the true parameters `mu`.
    pub fn coefficients(&self, mu: &PhysicalParams) -> Result<AffineCoefficients> {
        mu.validate()?;
        let eq = equilibrium_of(mu, &self.cfg)?;
        let bc = boundary_coefficients_with(mu, &eq, &self.cfg, &self.nominal_eq)?;
        Ok(AffineCoefficients::new(&eq, &bc, mu.xi1_0, mu.xi2_0))
    }

    pub fn system_with(&self, coefficients: AffineCoefficients) -> SpaceTimeSystem {
        SpaceTimeSystem {
            terms: Arc::clone(&self.terms),
            coefficients,
        }
    }

    pub fn system(&self, mu: &PhysicalParams) -> Result<SpaceTimeSystem> {
        Ok(self.system_with(self.coefficients(mu)?))
    }

    pub fn solve(&self, mu: &PhysicalParams) -> Result<StateTrajectory> {
        solve_full(&self.system(mu)?)
    }

    pub fn evaluate(&self, mu: &PhysicalParams) -> Result<f64> {
        Ok(discrete_output(&self.solve(mu)?))
    }

    /// Output for a parameter vector in canonical order.
    pub fn evaluate_slice(&self, mu: &[f64]) -> Result<f64> {
        self.evaluate(&PhysicalParams::from_slice(mu)?)
    }

    /// Whether the boundary coefficients exist for `mu` (no domain error).
    pub fn is_admissible(&self, mu: &[f64]) -> bool {
        PhysicalParams::from_slice(mu)
            .and_then(|p| self.coefficients(&p))
            .is_ok()
    }

    /// Grid and configuration values that a stored basis depends on.
    pub fn fingerprint(&self) -> Vec<f64> {
        let g = &self.grid;
        let c = &self.cfg;
        let mut f = vec![
            g.length,
            g.horizon,
            g.dx,
            g.dt,
            g.nx as f64,
            g.nt as f64,
            c.k_0,
            c.k_l,
            c.q_star,
            c.g,
        ];
        f.extend(c.nominal.to_array());
        f.push(match c.downstream {
            DownstreamLinearization::Tangent => 0.0,
            DownstreamLinearization::Legacy => 1.0,
        });
        f
    }
}

/// Output Y for one parameter value: equilibrium, boundary coefficients,
/// assembly, full solve and discrete output.
pub fn evaluate(mu: &PhysicalParams, cfg: &NominalConfig, grid: &Grid) -> Result<f64> {
    ChannelModel::new(cfg.clone(), *grid)?.evaluate(mu)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        let g = build_grid(250.0, 75.0, 5.0, 5.0).unwrap();
        assert_eq!((g.nx, g.nt, g.unknowns()), (50, 15, 1600));
        let g = build_grid(10.0, 1.0, 5.0, 1.0).unwrap();
        assert_eq!((g.nx, g.nt, g.unknowns()), (2, 1, 8));
        assert!(matches!(
            build_grid(250.0, 75.0, 7.0, 5.0),
            Err(Error::Config { .. })
        ));
        assert!(build_grid(10.0, 1.0, 10.0, 1.0).is_err());
    }

    #[test]
    fn output_of_unit_support_vector() {
        let grid = build_grid(10.0, 1.0, 5.0, 1.0).unwrap();
        let mut xi = DVector::zeros(grid.unknowns());
        xi[5] = 3.0;
        let traj = StateTrajectory::new(grid, xi).unwrap();
        assert_eq!(discrete_output(&traj), 3.0);
    }

    #[test]
    fn slope_of_exponential() {
        let t: Vec<f64> = (0..10).map(|k| k as f64).collect();
        let n: Vec<f64> = t.iter().map(|t| (-0.3 * t).exp()).collect();
        assert!((log_norm_slope(&t, &n).unwrap() + 0.3).abs() < 1e-12);
    }
}
