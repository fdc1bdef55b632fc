use std::io::Write;

use super::StateTrajectory;
use crate::channel::from_characteristic;

pub const TRAJECTORY_HEADER: &str = "t,x,xi1,xi2,h,v";

/// Writes one row per (step, point) with the deviations h and v recovered from
/// the characteristic coordinates.
pub fn write_trajectory_csv<W: Write>(
    out: &mut W,
    traj: &StateTrajectory,
    h_star: f64,
    g: f64,
) -> std::io::Result<()> {
    writeln!(out, "{TRAJECTORY_HEADER}")?;
    let grid = &traj.grid;
    for k in 0..=grid.nt {
        let (xi1, xi2) = traj.step(k);
        for i in 0..grid.nx {
            let (h, v) = from_characteristic(xi1[i], xi2[i], h_star, g);
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                grid.t(k),
                grid.x(i),
                xi1[i],
                xi2[i],
                h,
                v
            )?;
        }
    }
    Ok(())
}
