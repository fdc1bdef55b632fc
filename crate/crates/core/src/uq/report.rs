use std::io::Write;

use super::sobol::ParameterIndices;
use crate::channel::PARAM_NAMES;

pub const INDEX_HEADER: &str =
    "param,first,first_lo,first_hi,total,total_lo,total_hi,vhat_first,vhat_total,n,level";

fn name(i: usize) -> String {
    PARAM_NAMES
        .get(i)
        .map_or_else(|| format!("x{}", i + 1), |s| s.to_string())
}

/// One row per parameter, in parameter order.
pub fn write_index_csv<W: Write>(out: &mut W, indices: &[ParameterIndices]) -> std::io::Result<()> {
    writeln!(out, "{INDEX_HEADER}")?;
    for p in indices {
        writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e}",
            name(p.index),
            p.first.value,
            p.first.ci_lo,
            p.first.ci_hi,
            p.total.value,
            p.total.ci_lo,
            p.total.ci_hi,
            p.first.v_hat,
            p.total.v_hat,
            p.first.n,
            p.first.level
        )?;
    }
    Ok(())
}

/// Whitespace-separated plot data: `position name estimate lo hi` for either
/// the first-order (`total = false`) or the total indices.
pub fn write_plot_data<W: Write>(
    out: &mut W,
    indices: &[ParameterIndices],
    total: bool,
) -> std::io::Result<()> {
    writeln!(out, "# pos param estimate ci_lo ci_hi")?;
    for (pos, p) in indices.iter().enumerate() {
        let e = if total { &p.total } else { &p.first };
        writeln!(
            out,
            "{} {} {:.16e} {:.16e} {:.16e}",
            pos + 1,
            name(p.index),
            e.value,
            e.ci_lo,
            e.ci_hi
        )?;
    }
    Ok(())
}
