use std::ops::RangeInclusive;

use rayon::prelude::*;

use super::ReducedBasis;
use crate::channel::PhysicalParams;
use crate::error::{Error, Result};
use crate::pde::ChannelModel;
use crate::uq::{sample_rows, stream, Distribution};

/// Log-linear model Var(f_m - f) ~ c q^m and the basis-size rule derived
/// from it.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationModel {
    pub c: f64,
    pub q: f64,
    /// (m, empirical variance of the reduced-minus-full output).
    pub table: Vec<(usize, f64)>,
}

impl CalibrationModel {
    /// Model with given constants and no data.
    pub fn from_constants(c: f64, q: f64) -> Result<Self> {
        if !(c > 0.0 && q > 0.0 && q < 1.0) {
            return Err(Error::config(
                "calib",
                format!("need c > 0 and 0 < q < 1, got c = {c}, q = {q}"),
            ));
        }
        Ok(CalibrationModel {
            c,
            q,
            table: Vec::new(),
        })
    }

    /// Least-squares fit of ln(variance) against m.
    pub fn fit(table: Vec<(usize, f64)>) -> Result<Self> {
        let pts: Vec<(f64, f64)> = table
            .iter()
            .filter(|(_, v)| *v > 0.0)
            .map(|&(m, v)| (m as f64, v.ln()))
            .collect();
        if pts.len() < 2 {
            return Err(Error::Numerical(format!(
                "calibration needs two positive variances, table: {table:?}"
            )));
        }
        let k = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        let q = slope.exp();
        let c = (my - slope * mx).exp();
        if !(q < 1.0) {
            let rows: Vec<String> = table.iter().map(|(m, v)| format!("{m}:{v:e}")).collect();
            return Err(Error::Numerical(format!(
                "calibration failed: fitted q = {q} shows no decay (variances {})",
                rows.join(", ")
            )));
        }
        Ok(CalibrationModel { c, q, table })
    }

    /// -ln(n c ln ln n) / ln q, before rounding up.
    pub fn raw_size(&self, n: usize) -> f64 {
        let n = n as f64;
        -(n * self.c * n.ln().ln()).ln() / self.q.ln()
    }

    /// Basis size for a Monte-Carlo sample of size `n`, at least 1.
    pub fn size(&self, n: usize) -> usize {
        self.raw_size(n).ceil().max(1.0) as usize
    }

    /// [`Self::size`] capped at `cap`.
    pub fn recommended(&self, n: usize, cap: usize) -> usize {
        self.size(n).min(cap).max(1)
    }
}

/// Empirical variance of f_m - f over a fresh sample of `validation_count`
/// admissible draws for every m in `m_range` (nested truncations of `basis`).
pub fn variance_table(
    model: &ChannelModel,
    basis: &ReducedBasis,
    dists: &[Distribution],
    m_range: RangeInclusive<usize>,
    validation_count: usize,
    seed: u64,
) -> Result<Vec<(usize, f64)>> {
    if validation_count < 2 {
        return Err(Error::config("validation", "validation count must be at least 2"));
    }
    if *m_range.start() == 0 || *m_range.end() > basis.size() || m_range.is_empty() {
        return Err(Error::config(
            "m_range",
            format!(
                "range {}..={} must lie within 1..={} (snapshot rank)",
                m_range.start(),
                m_range.end(),
                basis.size()
            ),
        ));
    }
    let draws = sample_rows(dists, validation_count, seed, stream::CALIBRATION, &|r| {
        model.is_admissible(r)
    })?;
    let params: Vec<PhysicalParams> = (0..validation_count)
        .map(|j| PhysicalParams::from_slice(draws.row(j)))
        .collect::<Result<_>>()?;
    let full: Vec<f64> = params
        .par_iter()
        .map(|mu| model.evaluate(mu))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let mut table = Vec::new();
    for m in m_range {
        let rb = basis.truncate(m)?;
        let delta: Vec<f64> = params
            .par_iter()
            .zip(&full)
            .map(|(mu, f)| rb.output(model, mu).map(|r| r - f))
            .collect::<Vec<_>>()
            .into_iter()
            .collect::<Result<_>>()?;
        let k = delta.len() as f64;
        let mean = delta.iter().sum::<f64>() / k;
        let var = delta.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (k - 1.0);
        table.push((m, var));
    }
    Ok(table)
}

/// [`variance_table`] followed by the log-linear fit.
pub fn calibrate(
    model: &ChannelModel,
    basis: &ReducedBasis,
    dists: &[Distribution],
    m_range: RangeInclusive<usize>,
    validation_count: usize,
    seed: u64,
) -> Result<CalibrationModel> {
    CalibrationModel::fit(variance_table(
        model,
        basis,
        dists,
        m_range,
        validation_count,
        seed,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_constants() {
        let cal = CalibrationModel::from_constants(0.2414, 0.5070).unwrap();
        assert!((cal.raw_size(30000) - 14.33).abs() < 5e-3);
        assert_eq!(cal.size(30000), 15);
    }

    #[test]
    fn exact_geometric_fit() {
        let table: Vec<(usize, f64)> = (3..=10).map(|m| (m, 0.3 * 0.6f64.powi(m as i32))).collect();
        let cal = CalibrationModel::fit(table).unwrap();
        assert!((cal.c - 0.3).abs() < 1e-12 && (cal.q - 0.6).abs() < 1e-12);
    }

    #[test]
    fn growth_is_rejected() {
        let table = vec![(3, 1.0), (4, 2.0), (5, 4.0)];
        assert!(matches!(CalibrationModel::fit(table), Err(Error::Numerical(_))));
    }

    #[test]
    fn size_is_nondecreasing() {
        let cal = CalibrationModel::from_constants(0.2414, 0.5070).unwrap();
        let mut last = 0;
        for n in [10, 100, 1000, 10_000, 30_000, 1_000_000] {
            assert!(cal.size(n) >= last);
            last = cal.size(n);
        }
        assert_eq!(cal.recommended(30000, 8), 8);
    }
}
