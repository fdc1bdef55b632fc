//! Flat `key = value` run configuration with per-field provenance.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use crate::channel::{DownstreamLinearization, NominalConfig, PhysicalParams, PARAM_COUNT, PARAM_NAMES};
use crate::error::{Error, Result};
use crate::pde::{build_grid, Grid};
use crate::rb::AlphaOptions;
use crate::uq::{Distribution, DistributionSpec};

/// Where a configuration value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Default,
    File,
    Flag,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Default => "default",
            Source::File => "file",
            Source::Flag => "flag",
        })
    }
}

/// Reduced basis size: fixed, or chosen by calibration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisSize {
    Auto,
    Fixed(usize),
}

impl fmt::Display for BasisSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisSize::Auto => f.write_str("auto"),
            BasisSize::Fixed(m) => write!(f, "{m}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub length: f64,
    pub horizon: f64,
    pub dx: f64,
    pub dt: f64,
    pub k_0: f64,
    pub k_l: f64,
    pub q_star: f64,
    pub g: f64,
    pub downstream: DownstreamLinearization,
    pub nominal: PhysicalParams,
    pub dists: DistributionSpec,
    /// Parameters of the single `simulate` run.
    pub mu: PhysicalParams,
    pub snapshots: usize,
    pub m: BasisSize,
    pub m_min: usize,
    pub m_max: usize,
    pub validation: usize,
    pub n: usize,
    pub level: f64,
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    pub threads: usize,
    pub alpha: AlphaOptions,
    /// Calibration constants used instead of the fitted ones when both are set.
    pub calib_c: Option<f64>,
    pub calib_q: Option<f64>,
    /// Basis file to load instead of building one.
    pub basis: Option<PathBuf>,
    pub out: PathBuf,
    /// Validation self-test: negate the coupling coefficient gamma.
    pub flip_gamma: bool,
    /// Validation self-test: scale the first basis column.
    pub scale_z: f64,
    sources: BTreeMap<String, Source>,
}

pub const OUT_ENV: &str = "CANALSENSE_OUT";

impl Default for RunConfig {
    fn default() -> Self {
        let cfg = NominalConfig::default();
        RunConfig {
            length: cfg.length,
            horizon: cfg.horizon,
            dx: 5.0,
            dt: 5.0,
            k_0: cfg.k_0,
            k_l: cfg.k_l,
            q_star: cfg.q_star,
            g: cfg.g,
            downstream: cfg.downstream,
            nominal: cfg.nominal,
            dists: DistributionSpec::reference(),
            mu: cfg.nominal,
            snapshots: 100,
            m: BasisSize::Auto,
            m_min: 3,
            m_max: 14,
            validation: 1000,
            n: 30000,
            level: 0.95,
            seed: 1,
            threads: 0,
            alpha: AlphaOptions::default(),
            calib_c: None,
            calib_q: None,
            basis: None,
            out: std::env::var_os(OUT_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("out")),
            flip_gamma: false,
            scale_z: 1.0,
            sources: BTreeMap::new(),
        }
    }
}

fn num<T: std::str::FromStr>(key: &str, value: &str, what: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(key, format!("expected {what}, got `{value}`")))
}

fn param_index(name: &str) -> Option<usize> {
    PARAM_NAMES.iter().position(|p| *p == name)
}

fn opt_f64(v: Option<f64>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

impl RunConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str, source: Source) -> Result<()> {
        let value = value.trim();
        match key {
            "L" => self.length = num(key, value, "a number")?,
            "T_star" => self.horizon = num(key, value, "a number")?,
            "dx" => self.dx = num(key, value, "a number")?,
            "dt" => self.dt = num(key, value, "a number")?,
            "k_0" => self.k_0 = num(key, value, "a number")?,
            "k_L" => self.k_l = num(key, value, "a number")?,
            "Q_star" => self.q_star = num(key, value, "a number")?,
            "g" => self.g = num(key, value, "a number")?,
            "downstream_bc" => {
                self.downstream = DownstreamLinearization::parse(value)
                    .ok_or_else(|| Error::config(key, "expected `tangent` or `legacy`"))?
            }
            "snapshots" => self.snapshots = num(key, value, "an integer")?,
            "m" => {
                self.m = if value == "auto" {
                    BasisSize::Auto
                } else {
                    BasisSize::Fixed(num(key, value, "an integer or `auto`")?)
                }
            }
            "m_min" => self.m_min = num(key, value, "an integer")?,
            "m_max" => self.m_max = num(key, value, "an integer")?,
            "validation" => self.validation = num(key, value, "an integer")?,
            "n" => self.n = num(key, value, "an integer")?,
            "level" => self.level = num(key, value, "a number")?,
            "seed" => self.seed = num(key, value, "an unsigned integer")?,
            "threads" => self.threads = num(key, value, "an integer")?,
            "alpha_tol" => self.alpha.tol = num(key, value, "a number")?,
            "alpha_max_iter" => self.alpha.max_iter = num(key, value, "an integer")?,
            "calib.c" => self.calib_c = Some(num(key, value, "a number")?),
            "calib.q" => self.calib_q = Some(num(key, value, "a number")?),
            "basis" => self.basis = Some(PathBuf::from(value)),
            "out" => self.out = PathBuf::from(value),
            "validate.flip_gamma" => self.flip_gamma = num(key, value, "true or false")?,
            "validate.scale_z" => self.scale_z = num(key, value, "a number")?,
            _ => {
                let (group, name) = key
                    .split_once('.')
                    .ok_or_else(|| Error::config(key, format!("unknown key {key}")))?;
                let i = param_index(name)
                    .ok_or_else(|| Error::config(key, format!("unknown key {key}")))?;
                match group {
                    "nominal" => self.nominal.set(i, num(key, value, "a number")?),
                    "mu" => self.mu.set(i, num(key, value, "a number")?),
                    "dist" => {
                        self.dists.params[i] = Distribution::parse(value).ok_or_else(|| {
                            Error::config(key, "expected normal(mean, sd) or uniform(lo, hi)")
                        })?
                    }
                    _ => return Err(Error::config(key, format!("unknown key {key}"))),
                }
            }
        }
        self.sources.insert(key.to_string(), source);
        Ok(())
    }

    /// Applies the lines of a configuration file. Blank lines and `#`
    /// comments are ignored.
    pub fn apply_text(&mut self, text: &str, source: Source) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(
                    format!("line {}", lineno + 1),
                    format!("expected `key = value`, got `{line}`"),
                )
            })?;
            self.set(key.trim(), value, source)?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text, Source::File)
    }

    /// Applies a `KEY=VALUE` override.
    pub fn apply_assignment(&mut self, assignment: &str) -> Result<()> {
        let (k, v) = assignment.split_once('=').ok_or_else(|| {
            Error::config(assignment, "overrides must look like KEY=VALUE")
        })?;
        self.set(k.trim(), v, Source::Flag)
    }

    pub fn source(&self, key: &str) -> Source {
        self.sources.get(key).copied().unwrap_or(Source::Default)
    }

    /// Every key with its resolved value, in a fixed order.
    pub fn entries(&self) -> Vec<(String, String)> {
        let mut e: Vec<(String, String)> = vec![
            ("L".into(), self.length.to_string()),
            ("T_star".into(), self.horizon.to_string()),
            ("dx".into(), self.dx.to_string()),
            ("dt".into(), self.dt.to_string()),
            ("k_0".into(), self.k_0.to_string()),
            ("k_L".into(), self.k_l.to_string()),
            ("Q_star".into(), self.q_star.to_string()),
            ("g".into(), self.g.to_string()),
            ("downstream_bc".into(), self.downstream.as_str().into()),
        ];
        for i in 0..PARAM_COUNT {
            e.push((format!("nominal.{}", PARAM_NAMES[i]), self.nominal.get(i).to_string()));
        }
        for i in 0..PARAM_COUNT {
            e.push((format!("dist.{}", PARAM_NAMES[i]), self.dists.params[i].to_string()));
        }
        for i in 0..PARAM_COUNT {
            e.push((format!("mu.{}", PARAM_NAMES[i]), self.mu.get(i).to_string()));
        }
        e.extend([
            ("snapshots".into(), self.snapshots.to_string()),
            ("m".into(), self.m.to_string()),
            ("m_min".into(), self.m_min.to_string()),
            ("m_max".into(), self.m_max.to_string()),
            ("validation".into(), self.validation.to_string()),
            ("n".into(), self.n.to_string()),
            ("level".into(), self.level.to_string()),
            ("seed".into(), self.seed.to_string()),
            ("threads".into(), self.threads.to_string()),
            ("alpha_tol".into(), self.alpha.tol.to_string()),
            ("alpha_max_iter".into(), self.alpha.max_iter.to_string()),
            ("calib.c".into(), opt_f64(self.calib_c)),
            ("calib.q".into(), opt_f64(self.calib_q)),
            (
                "basis".into(),
                self.basis
                    .as_ref()
                    .map_or_else(|| "none".into(), |p| p.display().to_string()),
            ),
            ("out".into(), self.out.display().to_string()),
            ("validate.flip_gamma".into(), self.flip_gamma.to_string()),
            ("validate.scale_z".into(), self.scale_z.to_string()),
        ]);
        e
    }

    /// Resolved configuration with the source of every value. The output
    /// directory and thread count are left out so that runs differing only in
    /// those produce identical files.
    pub fn echo(&self) -> String {
        let mut s = String::from("# resolved configuration: key = value  # source\n");
        for (k, v) in self.entries() {
            if k == "out" || k == "threads" {
                continue;
            }
            s.push_str(&format!("{k} = {v}  # {}\n", self.source(&k)));
        }
        s
    }

    pub fn nominal_config(&self) -> NominalConfig {
        NominalConfig {
            nominal: self.nominal,
            k_0: self.k_0,
            k_l: self.k_l,
            q_star: self.q_star,
            g: self.g,
            length: self.length,
            horizon: self.horizon,
            downstream: self.downstream,
        }
    }

    pub fn grid(&self) -> Result<Grid> {
        build_grid(self.length, self.horizon, self.dx, self.dt)
    }

    /// Checks cross-field constraints.
    pub fn validate(&self) -> Result<()> {
        self.grid()?;
        self.nominal_config()
            .validate()
            .map_err(|e| Error::config("nominal", e.to_string()))?;
        self.dists
            .validate()
            .map_err(|e| Error::config("dist", e.to_string()))?;
        if self.snapshots == 0 {
            return Err(Error::config("snapshots", "must be at least 1"));
        }
        if self.m == BasisSize::Fixed(0) {
            return Err(Error::config("m", "must be at least 1"));
        }
        if self.m_min == 0 || self.m_min >= self.m_max {
            return Err(Error::config("m_min", "need 1 <= m_min < m_max"));
        }
        if self.validation < 2 {
            return Err(Error::config("validation", "must be at least 2"));
        }
        if self.n < 2 {
            return Err(Error::config("n", "must be at least 2"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::config("level", "must lie in (0, 1)"));
        }
        if !(self.alpha.tol > 0.0) || self.alpha.max_iter == 0 {
            return Err(Error::config("alpha_tol", "need alpha_tol > 0 and alpha_max_iter >= 1"));
        }
        if self.calib_c.is_some() != self.calib_q.is_some() {
            return Err(Error::config("calib", "set both calib.c and calib.q, or neither"));
        }
        Ok(())
    }
}

/// Defaults, then the optional file, then `KEY=VALUE` overrides.
pub fn parse_config(path: Option<&Path>, overrides: &[String]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(p) = path {
        cfg.apply_file(p)?;
    }
    for o in overrides {
        cfg.apply_assignment(o)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_is_the_reference_setup() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("", Source::File).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.nominal, PhysicalParams::reference());
        assert_eq!(cfg.dists, DistributionSpec::reference());
        let grid = cfg.grid().unwrap();
        assert_eq!((grid.nx, grid.nt), (50, 15));
        assert_eq!((cfg.snapshots, cfg.n, cfg.level), (100, 30000, 0.95));
    }

    #[test]
    fn single_override() {
        let mut cfg = RunConfig::default();
        cfg.apply_text("n = 2000  # smaller run\n", Source::File).unwrap();
        let expected = RunConfig {
            n: 2000,
            ..RunConfig::default()
        };
        assert_eq!(cfg.entries(), expected.entries());
        assert_eq!(cfg.source("n"), Source::File);
        assert_eq!(cfg.source("seed"), Source::Default);
    }

    #[test]
    fn unknown_key() {
        let err = RunConfig::default().apply_text("dz = 5", Source::File).unwrap_err();
        assert!(err.to_string().contains("unknown key dz"), "{err}");
        assert!(RunConfig::default().set("nominal.zz", "1", Source::Flag).is_err());
    }

    #[test]
    fn typed_values() {
        let mut cfg = RunConfig::default();
        cfg.set("dist.C", "uniform(0.0008, 0.0012)", Source::Flag).unwrap();
        cfg.set("m", "12", Source::Flag).unwrap();
        cfg.set("mu.xi1_0", "0.01", Source::Flag).unwrap();
        assert_eq!(cfg.m, BasisSize::Fixed(12));
        assert_eq!(cfg.mu.xi1_0, 0.01);
        assert!(cfg.set("n", "many", Source::Flag).is_err());
        assert!(cfg.echo().contains("m = 12  # flag"));
    }

    #[test]
    fn echo_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.set("level", "0.9", Source::Flag).unwrap();
        cfg.set("nominal.B", "80.5", Source::Flag).unwrap();
        let mut again = RunConfig::default();
        for line in cfg.echo().lines().filter(|l| !l.starts_with('#')) {
            let (k, v) = line.split_once('=').unwrap();
            let v = v.split('#').next().unwrap();
            if v.trim() != "none" {
                again.set(k.trim(), v, Source::File).unwrap();
            }
        }
        assert_eq!(again.entries(), cfg.entries());
    }
}
