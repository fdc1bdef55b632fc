//! Input distributions, pick-freeze designs and Sobol index estimation.

mod report;
mod sobol;

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Normal, Uniform};

use crate::channel::{PhysicalParams, PARAM_COUNT, PARAM_NAMES};
use crate::error::{Error, Result};

pub use report::{write_index_csv, write_plot_data, INDEX_HEADER};
pub use sobol::{
    asymptotic_variance, confidence_interval, estimate_closed, evaluate_design, DesignOutputs, estimate_first, estimate_total,
    normal_quantile, run_sensitivity, IndexKind, ParameterIndices, SensitivityRun, SobolEstimate,
};

/// Law of one uncertain input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Distribution {
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Distribution {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Distribution::Normal { mean, sd } if mean.is_finite() && sd.is_finite() && sd > 0.0 => {
                Ok(())
            }
            Distribution::Uniform { lo, hi } if lo.is_finite() && hi.is_finite() && lo < hi => Ok(()),
            other => Err(Error::Domain(format!("invalid distribution {other}"))),
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Distribution::Normal { mean, .. } => mean,
            Distribution::Uniform { lo, hi } => 0.5 * (lo + hi),
        }
    }

    /// Parses `normal(mean, sd)` or `uniform(lo, hi)`.
    pub fn parse(text: &str) -> Option<Self> {
        let text = text.trim();
        let open = text.find('(')?;
        let inner = text[open + 1..].strip_suffix(')')?;
        let args: Vec<f64> = inner
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .ok()?;
        if args.len() != 2 {
            return None;
        }
        let dist = match text[..open].trim().to_ascii_lowercase().as_str() {
            "normal" => Distribution::Normal {
                mean: args[0],
                sd: args[1],
            },
            "uniform" => Distribution::Uniform {
                lo: args[0],
                hi: args[1],
            },
            _ => return None,
        };
        dist.validate().ok().map(|_| dist)
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Distribution::Normal { mean, sd } => write!(f, "normal({mean}, {sd})"),
            Distribution::Uniform { lo, hi } => write!(f, "uniform({lo}, {hi})"),
        }
    }
}

/// One distribution per uncertain parameter, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionSpec {
    pub params: [Distribution; PARAM_COUNT],
}

impl DistributionSpec {
    /// Input uncertainty of the reference experiment.
    pub fn reference() -> Self {
        use Distribution::*;
        DistributionSpec {
            params: [
                Normal { mean: 4.0, sd: 0.03 },
                Normal { mean: 80.0, sd: 1.03 },
                Normal { mean: 2e-4, sd: 2.5e-6 },
                Uniform { lo: 9e-4, hi: 1.1e-3 },
                Normal { mean: 10.0, sd: 0.13 },
                Uniform { lo: -0.01, hi: 0.01 },
                Uniform { lo: -0.01, hi: 0.01 },
                Normal { mean: 0.65, sd: 0.0066 },
                Normal { mean: 0.65, sd: 0.0066 },
            ],
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (d, name) in self.params.iter().zip(PARAM_NAMES) {
            d.validate().map_err(|e| e.context(name))?;
        }
        Ok(())
    }

    pub fn means(&self) -> PhysicalParams {
        let m: Vec<f64> = self.params.iter().map(Distribution::mean).collect();
        PhysicalParams::from_slice(&m).expect("length is fixed")
    }
}

impl Default for DistributionSpec {
    fn default() -> Self {
        Self::reference()
    }
}

/// Row-major `rows x cols` matrix of parameter draws.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl SampleMatrix {
    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        SampleMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.cols..(j + 1) * self.cols]
    }

    pub fn get(&self, j: usize, c: usize) -> f64 {
        self.data[j * self.cols + c]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|j| self.get(j, c)).collect()
    }
}

/// Independent stream for every (matrix, column) pair, so the draws do not
/// depend on evaluation order.
pub(crate) struct ColumnStreams {
    rngs: Vec<ChaCha8Rng>,
    samplers: Vec<Sampler>,
}

enum Sampler {
    Normal(Normal<f64>),
    Uniform(Uniform<f64>),
}

impl ColumnStreams {
    pub(crate) fn new(dists: &[Distribution], seed: u64, matrix: u64) -> Result<Self> {
        let p = dists.len() as u64;
        let mut rngs = Vec::with_capacity(dists.len());
        let mut samplers = Vec::with_capacity(dists.len());
        for (c, d) in dists.iter().enumerate() {
            d.validate()?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(matrix * p + c as u64);
            rngs.push(rng);
            samplers.push(match *d {
                Distribution::Normal { mean, sd } => Sampler::Normal(
                    Normal::new(mean, sd).map_err(|e| Error::Domain(e.to_string()))?,
                ),
                Distribution::Uniform { lo, hi } => Sampler::Uniform(
                    Uniform::new(lo, hi).map_err(|e| Error::Domain(e.to_string()))?,
                ),
            });
        }
        Ok(ColumnStreams { rngs, samplers })
    }

    pub(crate) fn draw_row(&mut self, out: &mut [f64]) {
        for ((v, rng), s) in out.iter_mut().zip(&mut self.rngs).zip(&self.samplers) {
            *v = match s {
                Sampler::Normal(d) => d.sample(rng),
                Sampler::Uniform(d) => d.sample(rng),
            };
        }
    }
}

/// Stream families. The pick-freeze matrices use families 0 and 1; every
/// other sampler gets its own family so that no two samples share draws.
pub mod stream {
    pub const SNAPSHOTS: u64 = 2;
    pub const CALIBRATION: u64 = 3;
    pub const CERTIFICATION: u64 = 4;
    pub const EXPORT: u64 = 5;
}

/// Draws `n` rows from `dists` on stream family `family`, redrawing rows
/// rejected by `accept`.
pub fn sample_rows(
    dists: &[Distribution],
    n: usize,
    seed: u64,
    family: u64,
    accept: &dyn Fn(&[f64]) -> bool,
) -> Result<SampleMatrix> {
    const MAX_TRIES: usize = 10_000;
    let p = dists.len();
    let mut streams = ColumnStreams::new(dists, seed, family)?;
    let mut data = vec![0.0; n * p];
    for row in data.chunks_mut(p) {
        let mut tries = 0;
        loop {
            streams.draw_row(row);
            if accept(row) {
                break;
            }
            tries += 1;
            if tries >= MAX_TRIES {
                return Err(Error::Domain(format!(
                    "no admissible parameter draw after {MAX_TRIES} attempts"
                )));
            }
        }
    }
    Ok(SampleMatrix::from_rows(n, p, data))
}

/// Two independent `n x p` sample matrices (M1, M2) for a pick-freeze design.
pub fn sample_parameters(
    dists: &[Distribution],
    n: usize,
    seed: u64,
) -> Result<(SampleMatrix, SampleMatrix)> {
    sample_design(dists, n, seed, None)
}

/// Like [`sample_parameters`], but a row pair is redrawn whenever the base row
/// or one of its first-order/total mixes fails `accept`.
pub fn sample_design(
    dists: &[Distribution],
    n: usize,
    seed: u64,
    accept: Option<&(dyn Fn(&[f64]) -> bool + Sync)>,
) -> Result<(SampleMatrix, SampleMatrix)> {
    const MAX_TRIES: usize = 10_000;
    if n < 2 {
        return Err(Error::Domain(format!("sample size must be at least 2, got {n}")));
    }
    let p = dists.len();
    let mut s1 = ColumnStreams::new(dists, seed, 0)?;
    let mut s2 = ColumnStreams::new(dists, seed, 1)?;
    let mut d1 = vec![0.0; n * p];
    let mut d2 = vec![0.0; n * p];
    let mut mix = vec![0.0; p];
    for (r1, r2) in d1.chunks_mut(p).zip(d2.chunks_mut(p)) {
        let mut tries = 0;
        loop {
            s1.draw_row(r1);
            s2.draw_row(r2);
            let Some(accept) = accept else { break };
            let ok = accept(r1)
                && (0..p).all(|i| {
                    for c in 0..p {
                        mix[c] = if c == i { r1[c] } else { r2[c] };
                    }
                    if !accept(&mix) {
                        return false;
                    }
                    for c in 0..p {
                        mix[c] = if c == i { r2[c] } else { r1[c] };
                    }
                    accept(&mix)
                });
            if ok {
                break;
            }
            tries += 1;
            if tries >= MAX_TRIES {
                return Err(Error::Domain(format!(
                    "no admissible design row after {MAX_TRIES} attempts"
                )));
            }
        }
    }
    Ok((
        SampleMatrix::from_rows(n, p, d1),
        SampleMatrix::from_rows(n, p, d2),
    ))
}

/// Columns in `u` from `m1`, the others from `m2`.
pub fn pick_freeze_mix(m1: &SampleMatrix, m2: &SampleMatrix, u: &[usize]) -> Result<SampleMatrix> {
    if u.is_empty() {
        return Err(Error::Domain("index set must not be empty".into()));
    }
    if (m1.rows, m1.cols) != (m2.rows, m2.cols) {
        return Err(Error::Domain("sample matrices differ in shape".into()));
    }
    if let Some(&bad) = u.iter().find(|&&i| i >= m1.cols) {
        return Err(Error::Domain(format!(
            "index {bad} out of range for {} parameters",
            m1.cols
        )));
    }
    let mut in_u = vec![false; m1.cols];
    for &i in u {
        in_u[i] = true;
    }
    let data = (0..m1.rows)
        .flat_map(|j| (0..m1.cols).map(move |c| (j, c)))
        .map(|(j, c)| if in_u[c] { m1.get(j, c) } else { m2.get(j, c) })
        .collect();
    Ok(SampleMatrix::from_rows(m1.rows, m1.cols, data))
}

/// `{0..p} \ {i}`
pub fn complement(i: usize, p: usize) -> Vec<usize> {
    (0..p).filter(|&c| c != i).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_round_trip() {
        let d = Distribution::parse("normal(4, 0.03)").unwrap();
        assert_eq!(d, Distribution::Normal { mean: 4.0, sd: 0.03 });
        assert_eq!(Distribution::parse(&d.to_string()), Some(d));
        assert_eq!(
            Distribution::parse(" Uniform(-0.01,0.01) "),
            Some(Distribution::Uniform { lo: -0.01, hi: 0.01 })
        );
        assert_eq!(Distribution::parse("normal(1, -1)"), None);
        assert_eq!(Distribution::parse("gamma(1, 1)"), None);
        assert_eq!(Distribution::parse("uniform(2, 1)"), None);
    }

    #[test]
    fn reference_means_are_nominal() {
        assert_eq!(DistributionSpec::reference().means(), PhysicalParams::reference());
    }

    #[test]
    fn normal_column_statistics() {
        let n = 100_000;
        let d = [Distribution::Normal { mean: 4.0, sd: 0.03 }];
        let (m1, _) = sample_parameters(&d, n, 1).unwrap();
        let mean = m1.column(0).iter().sum::<f64>() / n as f64;
        assert!((mean - 4.0).abs() < 4.0 * 0.03 / (n as f64).sqrt());
    }

    #[test]
    fn uniform_column_in_range_and_seeded() {
        let spec = DistributionSpec::reference();
        let (a1, a2) = sample_parameters(&spec.params, 500, 9).unwrap();
        let (b1, b2) = sample_parameters(&spec.params, 500, 9).unwrap();
        let (c1, _) = sample_parameters(&spec.params, 500, 10).unwrap();
        assert_eq!((&a1, &a2), (&b1, &b2));
        assert_ne!(a1, c1);
        assert_ne!(a1, a2);
        assert!(a1.column(5).iter().all(|v| (-0.01..=0.01).contains(v)));
    }

    #[test]
    fn mixes() {
        let m1 = SampleMatrix::from_rows(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let m2 = SampleMatrix::from_rows(2, 2, vec![-1.0, -2.0, -3.0, -4.0]);
        assert_eq!(pick_freeze_mix(&m1, &m2, &[0, 1]).unwrap(), m1);
        let a = pick_freeze_mix(&m1, &m2, &[0]).unwrap();
        assert_eq!(a.row(0), &[1.0, -2.0]);
        let b = pick_freeze_mix(&m1, &m2, &complement(0, 2)).unwrap();
        assert_eq!(b.row(1), &[-3.0, 4.0]);
        assert!(pick_freeze_mix(&m1, &m2, &[]).is_err());
    }

    #[test]
    fn rejected_rows_are_redrawn() {
        let d = [Distribution::Uniform { lo: 0.0, hi: 1.0 }; 2];
        let accept = |r: &[f64]| r[0] < 0.5;
        let (m1, m2) = sample_design(&d, 200, 3, Some(&accept)).unwrap();
        assert!(m1.column(0).iter().all(|v| *v < 0.5));
        assert!(m2.column(0).iter().all(|v| *v < 0.5));
    }
}
