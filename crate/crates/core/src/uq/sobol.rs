use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use super::{complement, pick_freeze_mix, sample_design, Distribution, SampleMatrix};
use crate::error::{Error, Result};

/// Centered moments of a pick-freeze pair around the pooled mean.
struct PairMoments {
    mean: f64,
    cov: f64,
    var: f64,
}

fn pair_moments(y1: &[f64], y2: &[f64]) -> Result<PairMoments> {
    let n = y1.len();
    if n < 2 || y2.len() != n {
        return Err(Error::Domain(format!(
            "need two output samples of equal length >= 2, got {} and {}",
            n,
            y2.len()
        )));
    }
    let nf = n as f64;
    let mean = y1.iter().chain(y2).sum::<f64>() / (2.0 * nf);
    let mut cov = 0.0;
    let mut var = 0.0;
    for (a, b) in y1.iter().zip(y2) {
        let (da, db) = (a - mean, b - mean);
        cov += da * db;
        var += 0.5 * (da * da + db * db);
    }
    cov /= nf;
    var /= nf;
    let floor = 16.0 * (f64::EPSILON * mean.abs()).powi(2);
    if !(var > floor) {
        return Err(Error::Numerical(format!(
            "degenerate estimate: output variance {var:e} is zero at working precision"
        )));
    }
    Ok(PairMoments { mean, cov, var })
}

/// Pick-freeze estimate of the closed index of `u` from `y1 = f(M1)` and
/// `y2u = f(mix(M1, M2, u))`: symmetrized covariance over symmetrized
/// variance, both around the pooled mean.
pub fn estimate_closed(y1: &[f64], y2u: &[f64]) -> Result<f64> {
    let m = pair_moments(y1, y2u)?;
    Ok(m.cov / m.var)
}

/// Plug-in estimate of the asymptotic standard deviation of the closed
/// index estimator.
pub fn asymptotic_variance(y1: &[f64], y2u: &[f64], s_hat: f64) -> Result<f64> {
    let m = pair_moments(y1, y2u)?;
    let n = y1.len() as f64;
    let z: Vec<f64> = y1
        .iter()
        .zip(y2u)
        .map(|(a, b)| {
            let (da, db) = (a - m.mean, b - m.mean);
            da * db - 0.5 * s_hat * (da * da + db * db)
        })
        .collect();
    let zm = z.iter().sum::<f64>() / n;
    let zv = z.iter().map(|v| (v - zm).powi(2)).sum::<f64>() / n;
    Ok(zv.sqrt() / m.var)
}

/// Two-sided standard normal quantile z_{1 - (1 - level)/2}.
pub fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Domain(format!("level must lie in (0, 1), got {level}")));
    }
    let std = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(std.inverse_cdf(1.0 - (1.0 - level) / 2.0))
}

pub fn confidence_interval(s_hat: f64, v_hat: f64, n: usize, level: f64) -> Result<(f64, f64)> {
    let half = normal_quantile(level)? * v_hat / (n as f64).sqrt();
    Ok((s_hat - half, s_hat + half))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexKind {
    Closed,
    First,
    Total,
}

/// One index estimate with its asymptotic confidence interval.
#[derive(Debug, Clone, PartialEq)]
pub struct SobolEstimate {
    /// Index set whose closed index was estimated; for a total index this is
    /// the complement of the parameter.
    pub u: Vec<usize>,
    pub kind: IndexKind,
    pub value: f64,
    pub v_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n: usize,
    pub level: f64,
    /// Set when the raw estimate falls outside [0, 1].
    pub out_of_range: bool,
}

impl SobolEstimate {
    pub fn closed(u: Vec<usize>, y1: &[f64], y2u: &[f64], level: f64) -> Result<Self> {
        let s = estimate_closed(y1, y2u)?;
        let v = asymptotic_variance(y1, y2u, s)?;
        Self::build(u, IndexKind::Closed, s, v, y1.len(), level)
    }

    fn build(u: Vec<usize>, kind: IndexKind, value: f64, v_hat: f64, n: usize, level: f64) -> Result<Self> {
        let (ci_lo, ci_hi) = confidence_interval(value, v_hat, n, level)?;
        Ok(SobolEstimate {
            u,
            kind,
            value,
            v_hat,
            ci_lo,
            ci_hi,
            n,
            level,
            out_of_range: !(0.0..=1.0).contains(&value),
        })
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_hi - self.ci_lo)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci_lo <= x && x <= self.ci_hi
    }
}

/// Outputs of a first-order/total pick-freeze design: the base sample and,
/// for every parameter i, the mixes for `{i}` and its complement.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignOutputs {
    pub base: Vec<f64>,
    pub first: Vec<Vec<f64>>,
    pub total: Vec<Vec<f64>>,
}

pub fn estimate_first(i: usize, out: &DesignOutputs) -> Result<f64> {
    estimate_closed(&out.base, &out.first[i])
}

pub fn estimate_total(i: usize, out: &DesignOutputs) -> Result<f64> {
    Ok(1.0 - estimate_closed(&out.base, &out.total[i])?)
}

/// First-order and total estimates for one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterIndices {
    pub index: usize,
    pub first: SobolEstimate,
    pub total: SobolEstimate,
}

impl ParameterIndices {
    pub fn from_outputs(i: usize, out: &DesignOutputs, level: f64) -> Result<Self> {
        let p = out.first.len();
        let n = out.base.len();
        let first = SobolEstimate::closed(vec![i], &out.base, &out.first[i], level)?;
        let s = estimate_closed(&out.base, &out.total[i])?;
        let v = asymptotic_variance(&out.base, &out.total[i], s)?;
        let total = SobolEstimate::build(complement(i, p), IndexKind::Total, 1.0 - s, v, n, level)?;
        Ok(ParameterIndices { index: i, first, total })
    }
}

#[derive(Debug, Clone)]
pub struct SensitivityRun {
    pub indices: Vec<ParameterIndices>,
    pub outputs: DesignOutputs,
    pub evaluations: usize,
}

/// Evaluates `f` on the base matrix and the 2p first-order/total mixes, in
/// parallel, and returns every estimate. Results do not depend on the thread
/// schedule: each output lands at a fixed index.
pub fn evaluate_design<F>(f: &F, m1: &SampleMatrix, m2: &SampleMatrix) -> Result<DesignOutputs>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let p = m1.cols();
    let n = m1.rows();
    let mut sets: Vec<(String, SampleMatrix)> = vec![("base".into(), m1.clone())];
    for i in 0..p {
        sets.push((format!("u = {{{i}}}"), pick_freeze_mix(m1, m2, &[i])?));
    }
    for i in 0..p {
        sets.push((
            format!("u = complement of {{{i}}}"),
            pick_freeze_mix(m1, m2, &complement(i, p))?,
        ));
    }
    let values: Vec<Result<f64>> = (0..sets.len() * n)
        .into_par_iter()
        .map(|idx| {
            let (s, j) = (idx / n, idx % n);
            f(sets[s].1.row(j)).map_err(|e| e.context(format!("row {j}, {}", sets[s].0)))
        })
        .collect();
    let mut flat = Vec::with_capacity(values.len());
    for v in values {
        flat.push(v?);
    }
    let mut chunks = flat.chunks(n).map(<[f64]>::to_vec);
    let base = chunks.next().expect("base sample");
    let first: Vec<Vec<f64>> = chunks.by_ref().take(p).collect();
    let total: Vec<Vec<f64>> = chunks.collect();
    Ok(DesignOutputs { base, first, total })
}

/// Full first-order/total analysis: samples the design, runs `n (1 + 2p)`
/// evaluations and builds the estimates with their confidence intervals.
/// With `accept`, design rows whose evaluated points would leave the model's
/// domain are redrawn.
pub fn run_sensitivity<F>(
    f: &F,
    dists: &[Distribution],
    n: usize,
    seed: u64,
    level: f64,
    accept: Option<&(dyn Fn(&[f64]) -> bool + Sync)>,
) -> Result<SensitivityRun>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    normal_quantile(level)?;
    let (m1, m2) = sample_design(dists, n, seed, accept)?;
    let outputs = evaluate_design(f, &m1, &m2)?;
    let p = dists.len();
    let indices = (0..p)
        .map(|i| ParameterIndices::from_outputs(i, &outputs, level))
        .collect::<Result<Vec<_>>>()?;
    Ok(SensitivityRun {
        indices,
        evaluations: n * (1 + 2 * p),
        outputs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles() {
        assert!((normal_quantile(0.95).unwrap() - 1.959964).abs() < 1e-5);
        assert!((normal_quantile(0.5).unwrap() - 0.67449).abs() < 1e-5);
        assert!(normal_quantile(1.0).is_err());
    }

    #[test]
    fn width_halves_when_n_quadruples() {
        let (a, b) = confidence_interval(0.3, 0.8, 100, 0.95).unwrap();
        let (c, d) = confidence_interval(0.3, 0.8, 400, 0.95).unwrap();
        assert!(((b - a) / (d - c) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn identical_outputs_give_one() {
        let y = [1.0, 3.0, 2.0, 7.0];
        assert_eq!(estimate_closed(&y, &y).unwrap(), 1.0);
    }

    #[test]
    fn constant_output_is_degenerate() {
        let y = [2.0; 5];
        assert!(matches!(estimate_closed(&y, &y), Err(Error::Numerical(_))));
    }

    #[test]
    fn tiny_noise_is_stable() {
        let y1: Vec<f64> = (0..1000).map(|j| 1.0 + 1e-9 * ((j * 7919 % 1000) as f64 / 1000.0)).collect();
        let y2: Vec<f64> = (0..1000).map(|j| 1.0 + 1e-9 * ((j * 104729 % 1000) as f64 / 1000.0)).collect();
        let s = estimate_closed(&y1, &y2).unwrap();
        let v = asymptotic_variance(&y1, &y2, s).unwrap();
        assert!(s.is_finite() && v.is_finite() && v > 0.0);
    }

    #[test]
    fn evaluation_count() {
        let d = [Distribution::Normal { mean: 0.0, sd: 1.0 }; 2];
        let run = run_sensitivity(&|x: &[f64]| Ok(x[0] + 2.0 * x[1]), &d, 50, 1, 0.95, None).unwrap();
        assert_eq!(run.evaluations, 250);
        assert_eq!(run.outputs.first.len() + run.outputs.total.len() + 1, 5);
    }
}
