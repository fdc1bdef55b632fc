use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::config::{BasisSize, RunConfig};
use crate::channel::{
    boundary_coefficients, check_stability, control_positions, equilibrium_of,
    from_characteristic, to_characteristic, PhysicalParams, PARAM_NAMES,
};
use crate::error::{Error, Result};
use crate::pde::export::write_trajectory_csv;
use crate::pde::system::term;
use crate::pde::{discrete_output, log_norm_slope, solve_full, ChannelModel};
use crate::rb::{
    collect_snapshots, error_bound, load_basis, pod_full, save_basis, variance_table,
    CalibrationModel, ReducedBasis,
};
use crate::uq::{
    run_sensitivity, sample_rows, stream, write_index_csv, write_plot_data, Distribution,
};

fn out_path(cfg: &RunConfig, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    Ok(cfg.out.join(name))
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    f(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))
}

fn write_text(cfg: &RunConfig, name: &str, text: &str) -> Result<PathBuf> {
    let path = out_path(cfg, name)?;
    write_file(&path, |w| w.write_all(text.as_bytes()))?;
    Ok(path)
}

fn echo_config(cfg: &RunConfig) -> Result<()> {
    write_text(cfg, "config.resolved", &cfg.echo()).map(|_| ())
}

fn model_of(cfg: &RunConfig) -> Result<ChannelModel> {
    ChannelModel::new(cfg.nominal_config(), cfg.grid()?)
}

/// Single full-order run at `mu.*`: trajectory, step norms and gate positions.
pub fn simulate(cfg: &RunConfig) -> Result<String> {
    echo_config(cfg)?;
    let model = model_of(cfg)?;
    let nominal = model.config();
    let eq = equilibrium_of(&cfg.mu, nominal)?;
    let traj = model.solve(&cfg.mu)?;
    let y = discrete_output(&traj);
    let grid = *model.grid();

    let path = out_path(cfg, "trajectory.csv")?;
    write_file(&path, |w| write_trajectory_csv(w, &traj, eq.h_star, nominal.g))?;

    let norms = traj.step_norms();
    let path = out_path(cfg, "norms.csv")?;
    write_file(&path, |w| {
        writeln!(w, "t,norm")?;
        for (k, n) in norms.iter().enumerate() {
            writeln!(w, "{:.16e},{:.16e}", grid.t(k), n)?;
        }
        Ok(())
    })?;

    let mut controls = Vec::with_capacity(grid.nt + 1);
    for k in 0..=grid.nt {
        let (xi1, xi2) = traj.step(k);
        let (h0, _) = from_characteristic(xi1[0], xi2[0], eq.h_star, nominal.g);
        let last = grid.nx - 1;
        let (hl, _) = from_characteristic(xi1[last], xi2[last], eq.h_star, nominal.g);
        let (u0, ul) = control_positions(eq.h_star + h0, eq.h_star + hl, nominal)?;
        controls.push((grid.t(k), u0, ul));
    }
    let path = out_path(cfg, "controls.csv")?;
    write_file(&path, |w| {
        writeln!(w, "t,U0,UL")?;
        for (t, u0, ul) in &controls {
            writeln!(w, "{t:.16e},{u0:.16e},{ul:.16e}")?;
        }
        Ok(())
    })?;

    let summary = format!(
        "Y = {y:.16e}\nH_star = {:.16e}\nV_star = {:.16e}\nstability_margin = {:.16e}\n",
        eq.h_star,
        eq.v_star,
        check_stability(nominal.k_0, nominal.k_l, &eq)
    );
    write_text(cfg, "simulate.txt", &summary)?;
    Ok(summary)
}

fn write_pod_report(cfg: &RunConfig, sv: &[f64]) -> Result<()> {
    let total: f64 = sv.iter().map(|s| s * s).sum();
    let path = out_path(cfg, "pod_report.csv")?;
    write_file(&path, |w| {
        writeln!(w, "m,sigma_m,cum_energy")?;
        let mut acc = 0.0;
        for (k, s) in sv.iter().enumerate() {
            acc += s * s;
            let energy = if total > 0.0 { acc / total } else { 1.0 };
            writeln!(w, "{},{:.16e},{:.16e}", k + 1, s, energy)?;
        }
        Ok(())
    })
}

struct CalibrationOutcome {
    model: CalibrationModel,
    fitted: Option<CalibrationModel>,
    injected: bool,
    rank: usize,
}

fn run_calibration(cfg: &RunConfig, model: &ChannelModel, full: &ReducedBasis) -> Result<CalibrationOutcome> {
    let rank = full.size();
    let hi = cfg.m_max.min(rank);
    if cfg.m_min > hi {
        return Err(Error::config(
            "m_min",
            format!("m_min = {} exceeds the snapshot rank {rank}", cfg.m_min),
        ));
    }
    let table = variance_table(model, full, &cfg.dists.params, cfg.m_min..=hi, cfg.validation, cfg.seed)?;
    let outcome = match (cfg.calib_c, cfg.calib_q) {
        (Some(c), Some(q)) => {
            let mut injected = CalibrationModel::from_constants(c, q)?;
            injected.table = table.clone();
            CalibrationOutcome {
                model: injected,
                fitted: CalibrationModel::fit(table).ok(),
                injected: true,
                rank,
            }
        }
        _ => {
            let fitted = CalibrationModel::fit(table)?;
            CalibrationOutcome {
                model: fitted.clone(),
                fitted: Some(fitted),
                injected: false,
                rank,
            }
        }
    };
    Ok(outcome)
}

fn calibration_summary(cfg: &RunConfig, out: &CalibrationOutcome) -> String {
    let mut s = String::new();
    if let Some(f) = &out.fitted {
        s.push_str(&format!("fitted_c = {:.16e}\nfitted_q = {:.16e}\n", f.c, f.q));
    } else {
        s.push_str("fitted_c = none\nfitted_q = none\n");
    }
    let cal = &out.model;
    s.push_str(&format!(
        "rule_constants = {}\nc = {:.16e}\nq = {:.16e}\nn = {}\nm_raw = {:.6}\nm_rule = {}\nsnapshot_rank = {}\nm_recommended = {}\n",
        if out.injected { "injected" } else { "fitted" },
        cal.c,
        cal.q,
        cfg.n,
        cal.raw_size(cfg.n),
        cal.size(cfg.n),
        out.rank,
        cal.recommended(cfg.n, out.rank)
    ));
    s
}

fn write_calibration(cfg: &RunConfig, out: &CalibrationOutcome) -> Result<String> {
    let path = out_path(cfg, "calibration.csv")?;
    write_file(&path, |w| {
        writeln!(w, "m,var_delta")?;
        for (m, v) in &out.model.table {
            writeln!(w, "{m},{v:.16e}")?;
        }
        Ok(())
    })?;
    let summary = calibration_summary(cfg, out);
    write_text(cfg, "calibration.txt", &summary)?;
    Ok(summary)
}

/// Snapshots and the POD basis at the snapshot rank.
fn offline(cfg: &RunConfig, model: &ChannelModel) -> Result<ReducedBasis> {
    let snaps = collect_snapshots(model, &cfg.dists.params, cfg.snapshots, cfg.seed)?;
    let full = pod_full(model, &snaps)?;
    write_pod_report(cfg, full.singular_values())?;
    Ok(full)
}

fn sized(full: &ReducedBasis, m: usize) -> Result<ReducedBasis> {
    if m > full.size() {
        return Err(Error::Numerical(format!(
            "requested basis size {m} but the snapshot matrix has numerical rank {}",
            full.size()
        )));
    }
    full.truncate(m)
}

/// Basis for the online phase: loaded from `basis` if set, otherwise built,
/// with `m = auto` resolved by calibration.
fn online_basis(cfg: &RunConfig, model: &ChannelModel) -> Result<ReducedBasis> {
    if let Some(path) = &cfg.basis {
        let rb = load_basis(path, model)?;
        return match cfg.m {
            BasisSize::Fixed(m) => sized(&rb, m),
            BasisSize::Auto => Ok(rb),
        };
    }
    let full = offline(cfg, model)?;
    match cfg.m {
        BasisSize::Fixed(m) => sized(&full, m),
        BasisSize::Auto => {
            let cal = run_calibration(cfg, model, &full)?;
            write_calibration(cfg, &cal)?;
            full.truncate(cal.model.recommended(cfg.n, cal.rank))
        }
    }
}

pub fn build_rb(cfg: &RunConfig) -> Result<String> {
    echo_config(cfg)?;
    let model = model_of(cfg)?;
    let full = offline(cfg, &model)?;
    let rb = match cfg.m {
        BasisSize::Fixed(m) => sized(&full, m)?,
        BasisSize::Auto => {
            let cal = run_calibration(cfg, &model, &full)?;
            write_calibration(cfg, &cal)?;
            full.truncate(cal.model.recommended(cfg.n, cal.rank))?
        }
    };
    let path = match &cfg.basis {
        Some(p) => p.clone(),
        None => out_path(cfg, "basis.rb")?,
    };
    save_basis(&rb, &path)?;
    let summary = format!(
        "basis = {}\nN = {}\nm = {}\nsnapshot_rank = {}\n",
        path.display(),
        rb.full_dim(),
        rb.size(),
        full.size()
    );
    write_text(cfg, "build_rb.txt", &summary)?;
    Ok(summary)
}

pub fn calibrate(cfg: &RunConfig) -> Result<String> {
    echo_config(cfg)?;
    let model = model_of(cfg)?;
    let full = offline(cfg, &model)?;
    let cal = run_calibration(cfg, &model, &full)?;
    write_calibration(cfg, &cal)
}

pub fn sobol(cfg: &RunConfig, use_full: bool) -> Result<String> {
    echo_config(cfg)?;
    let model = model_of(cfg)?;
    let accept = |r: &[f64]| model.is_admissible(r);
    let (run, evaluator) = if use_full {
        let f = |x: &[f64]| model.evaluate_slice(x);
        let run = run_sensitivity(&f, &cfg.dists.params, cfg.n, cfg.seed, cfg.level, Some(&accept))?;
        (run, "full".to_string())
    } else {
        let rb = online_basis(cfg, &model)?;
        let f = |x: &[f64]| rb.output(&model, &PhysicalParams::from_slice(x)?);
        let run = run_sensitivity(&f, &cfg.dists.params, cfg.n, cfg.seed, cfg.level, Some(&accept))?;
        (run, format!("reduced (m = {})", rb.size()))
    };
    let path = out_path(cfg, "sobol_indices.csv")?;
    write_file(&path, |w| write_index_csv(w, &run.indices))?;
    let path = out_path(cfg, "sobol_first.dat")?;
    write_file(&path, |w| write_plot_data(w, &run.indices, false))?;
    let path = out_path(cfg, "sobol_total.dat")?;
    write_file(&path, |w| write_plot_data(w, &run.indices, true))?;

    let mut s = format!(
        "evaluator = {evaluator}\nn = {}\nevaluations = {}\nlevel = {}\n",
        cfg.n, run.evaluations, cfg.level
    );
    for p in &run.indices {
        s.push_str(&format!(
            "{:>6}  first {:+.4} [{:+.4}, {:+.4}]  total {:+.4} [{:+.4}, {:+.4}]{}\n",
            PARAM_NAMES[p.index],
            p.first.value,
            p.first.ci_lo,
            p.first.ci_hi,
            p.total.value,
            p.total.ci_lo,
            p.total.ci_hi,
            if p.first.out_of_range || p.total.out_of_range {
                "  (outside [0, 1])"
            } else {
                ""
            }
        ));
    }
    write_text(cfg, "sobol_summary.txt", &s)?;
    Ok(s)
}

pub fn export_samples(cfg: &RunConfig, use_full: bool) -> Result<String> {
    echo_config(cfg)?;
    let model = model_of(cfg)?;
    let draws = sample_rows(&cfg.dists.params, cfg.n, cfg.seed, stream::EXPORT, &|r| {
        model.is_admissible(r)
    })?;
    let rows: Vec<usize> = (0..cfg.n).collect();
    let ys: Vec<Result<f64>> = if use_full {
        rows.par_iter().map(|&j| model.evaluate_slice(draws.row(j))).collect()
    } else {
        let rb = online_basis(cfg, &model)?;
        rows.par_iter()
            .map(|&j| rb.output(&model, &PhysicalParams::from_slice(draws.row(j))?))
            .collect()
    };
    let ys: Vec<f64> = ys.into_iter().collect::<Result<_>>()?;
    let path = out_path(cfg, "samples.csv")?;
    write_file(&path, |w| {
        writeln!(w, "{},Y", PARAM_NAMES.join(","))?;
        for (j, y) in ys.iter().enumerate() {
            let cells: Vec<String> = draws.row(j).iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(w, "{},{y:.16e}", cells.join(","))?;
        }
        Ok(())
    })?;
    Ok(format!("samples = {}\nrows = {}\n", path.display(), ys.len()))
}

/// Outcome of one validation check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
}

impl Check {
    fn at_most(name: &'static str, measured: f64, threshold: f64) -> Self {
        Check {
            name,
            passed: measured <= threshold,
            measured,
            threshold,
        }
    }

    fn below(name: &'static str, measured: f64, threshold: f64) -> Self {
        Check {
            name,
            passed: measured < threshold,
            measured,
            threshold,
        }
    }
}

/// Deviation of a Sobol estimate from its analytic value, in units of
/// 3 v_hat / sqrt(n).
fn oracle_ratio(estimate: f64, v_hat: f64, n: usize, exact: f64) -> f64 {
    (estimate - exact).abs() / (3.0 * v_hat / (n as f64).sqrt())
}

fn sobol_oracles(seed: u64) -> Result<(f64, f64)> {
    let n = 10_000;
    let normal = [Distribution::Normal { mean: 0.0, sd: 1.0 }; 2];
    let lin = run_sensitivity(&|x: &[f64]| Ok(x[0] + 2.0 * x[1]), &normal, n, seed, 0.95, None)?;
    let linear = [
        (&lin.indices[0].first, 0.2),
        (&lin.indices[1].first, 0.8),
        (&lin.indices[0].total, 0.2),
        (&lin.indices[1].total, 0.8),
    ]
    .iter()
    .map(|(e, s)| oracle_ratio(e.value, e.v_hat, n, *s))
    .fold(0.0, f64::max);
    let unit = [Distribution::Uniform { lo: 0.0, hi: 1.0 }; 2];
    let prod = run_sensitivity(&|x: &[f64]| Ok(x[0] * x[1]), &unit, n, seed, 0.95, None)?;
    let product = [
        (&prod.indices[0].first, 3.0 / 7.0),
        (&prod.indices[0].total, 4.0 / 7.0),
    ]
    .iter()
    .map(|(e, s)| oracle_ratio(e.value, e.v_hat, n, *s))
    .fold(0.0, f64::max);
    Ok((linear, product))
}

/// Runs the invariant suite; returns every check.
pub fn validation_checks(cfg: &RunConfig) -> Result<Vec<Check>> {
    let model = model_of(cfg)?;
    let nominal_cfg = model.config();
    let nom = nominal_cfg.nominal;
    let eq = nominal_cfg.nominal_equilibrium()?;
    let mut checks = Vec::new();

    let identity = (nom.bottom_slope * eq.h_star - nom.friction * eq.v_star.powi(2)).abs()
        / (nom.bottom_slope * eq.h_star);
    checks.push(Check::at_most("equilibrium_identity", identity, 1e-12));
    checks.push(Check::below(
        "stability_margin",
        check_stability(nominal_cfg.k_0, nominal_cfg.k_l, &eq),
        1.0,
    ));

    let bc = boundary_coefficients(&nom, nominal_cfg)?;
    checks.push(Check::at_most("nominal_offset_upstream", bc.a.abs(), 1e-12));
    checks.push(Check::at_most("nominal_offset_downstream", bc.c.abs(), 1e-12));
    checks.push(Check::at_most(
        "nominal_gain_upstream",
        (bc.upstream_gain() - nominal_cfg.k_0).abs(),
        1e-10,
    ));
    checks.push(Check::at_most(
        "nominal_gain_downstream",
        (bc.downstream_gain() - nominal_cfg.k_l).abs(),
        1e-10,
    ));

    let mut roundtrip: f64 = 0.0;
    for j in 0..1000 {
        let h = 10.0 * ((j as f64) * 0.37).sin();
        let v = 10.0 * ((j as f64) * 0.91).cos();
        let (a, b) = to_characteristic(h, v, eq.h_star, nominal_cfg.g);
        let (h2, v2) = from_characteristic(a, b, eq.h_star, nominal_cfg.g);
        roundtrip = roundtrip.max((h2 - h).abs()).max((v2 - v).abs());
    }
    checks.push(Check::at_most("characteristic_roundtrip", roundtrip, 1e-12));

    let mut mu = nom;
    mu.xi1_0 = 0.01;
    mu.xi2_0 = 0.01;
    let mut coef = model.coefficients(&mu)?;
    if cfg.flip_gamma {
        coef.operator[term::GAMMA] = -coef.operator[term::GAMMA];
    }
    let traj = solve_full(&model.system_with(coef))?;
    let norms = traj.step_norms();
    let times: Vec<f64> = (0..norms.len()).map(|k| traj.grid.t(k)).collect();
    let slope = log_norm_slope(&times, &norms).unwrap_or(f64::NAN);
    checks.push(Check::below("decay_log_slope", slope, 0.0));
    checks.push(Check::below(
        "decay_final_over_initial",
        norms[norms.len() - 1] / norms[0],
        1.0,
    ));

    let snaps = collect_snapshots(&model, &cfg.dists.params, cfg.snapshots, cfg.seed)?;
    let full = pod_full(&model, &snaps)?;
    let rb = full.truncate(8.min(full.size()))?;
    let mut z: DMatrix<f64> = rb.z().clone();
    z.column_mut(0).scale_mut(cfg.scale_z);
    let gram = z.transpose() * &z - DMatrix::identity(z.ncols(), z.ncols());
    checks.push(Check::at_most("basis_orthonormality", gram.amax(), 1e-10));

    let draws = sample_rows(&cfg.dists.params, 20, cfg.seed, stream::CERTIFICATION, &|r| {
        model.is_admissible(r)
    })?;
    let violations: Vec<Result<bool>> = (0..20)
        .into_par_iter()
        .map(|j| {
            let mu = PhysicalParams::from_slice(draws.row(j))?;
            let x: DVector<f64> = rb.solve(&model, &mu)?;
            let state = model.solve(&mu)?;
            let eb = error_bound(&rb, &model, &mu, &x, cfg.alpha)?;
            let state_err = (&state.xi - rb.reconstruct(&x)).norm();
            let out_err = (discrete_output(&state) - x.norm()).abs();
            Ok(state_err > eb.bound || out_err > eb.bound)
        })
        .collect();
    let violations = violations
        .into_iter()
        .collect::<Result<Vec<bool>>>()?
        .iter()
        .filter(|v| **v)
        .count();
    checks.push(Check::at_most("error_bound_violations", violations as f64, 0.0));

    let (linear, product) = sobol_oracles(cfg.seed)?;
    checks.push(Check::at_most("sobol_linear_gaussian", linear, 1.0));
    checks.push(Check::at_most("sobol_product_uniform", product, 1.0));
    Ok(checks)
}

pub fn validate(cfg: &RunConfig) -> Result<String> {
    echo_config(cfg)?;
    let checks = validation_checks(cfg)?;
    let mut s = String::from("check,status,measured,threshold\n");
    for c in &checks {
        s.push_str(&format!(
            "{},{},{:.16e},{:.16e}\n",
            c.name,
            if c.passed { "PASS" } else { "FAIL" },
            c.measured,
            c.threshold
        ));
    }
    write_text(cfg, "validate.csv", &s)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name).collect();
    if failed.is_empty() {
        Ok(s)
    } else {
        print!("{s}");
        Err(Error::Validation(format!("failed checks: {}", failed.join(", "))))
    }
}
