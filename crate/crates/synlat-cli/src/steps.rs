//! Scenario execution: each step runs into its own subdirectory of the
//! scenario output, and the table steps merge their per-point fits into a
//! single CSV next to the point runs.

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;
use synlat::analysis::{calibrate_flux, gap_prediction, pair_hopping_rate};
use synlat::fit::{linear_fit, LinearFit};
use synlat::lattice::{wrap_angle, LatticeSpec};

use crate::catalog::{Scenario, Step};
use crate::config::{FitConfig, FitModel, Loaded, RunConfig};
use crate::output::{atomic_write, fmt_f64, write_csv, write_json};
use crate::runner::execute_run;
use crate::sweep::{run_scan, ScanSpec};
use crate::ConfigError;

#[derive(Serialize)]
struct ScenarioManifest<'a> {
    tool: &'static str,
    version: &'static str,
    name: &'a str,
    description: &'a str,
    steps: Vec<&'a str>,
}

/// Run every step of a scenario under `out_root/<name>`. The scenario's own
/// TOML is written first so the output documents exactly what ran. Fit
/// non-convergence in a `simulate` step is reported once at the end, after
/// all steps completed and all outputs are on disk.
pub fn execute_scenario(
    scn: &Scenario,
    out_root: &Path,
    workers: Option<usize>,
) -> anyhow::Result<PathBuf> {
    let dir = out_root.join(&scn.name);
    fs::create_dir_all(&dir).with_context(|| format!("create {}", dir.display()))?;
    let text = toml::to_string_pretty(scn).context("serialize scenario")?;
    atomic_write(&dir.join("scenario.toml"), text.as_bytes())?;

    let mut unconverged = 0usize;
    for step in &scn.steps {
        unconverged += execute_step(step, &dir, workers)
            .with_context(|| format!("step `{}`", step.label()))?;
    }

    write_json(
        &dir.join("manifest.json"),
        &ScenarioManifest {
            tool: "synlat",
            version: env!("CARGO_PKG_VERSION"),
            name: &scn.name,
            description: &scn.description,
            steps: scn.steps.iter().map(Step::label).collect(),
        },
    )?;

    if unconverged > 0 {
        anyhow::bail!(
            "{unconverged} fit(s) did not converge; outputs retained in {}",
            dir.display()
        );
    }
    Ok(dir)
}

/// Returns the number of unconverged `simulate`-step fits; table and scan
/// steps record convergence per row instead.
fn execute_step(step: &Step, dir: &Path, workers: Option<usize>) -> anyhow::Result<usize> {
    match step {
        Step::Simulate { label, config } => {
            let out = execute_run(label, &Loaded::inline(config.clone()), &dir.join(label))?;
            Ok(out.fits.iter().filter(|r| !r.result.converged).count())
        }
        Step::Scan { label, config, param, grid, classify_breakdown, breakdown_bounds_mhz } => {
            let doc: toml::Value =
                toml::from_str(&toml::to_string(config).context("serialize scan base")?)?;
            run_scan(
                &ScanSpec {
                    base: &doc,
                    base_dir: PathBuf::from("."),
                    param: param.clone(),
                    grid: grid.clone(),
                    classify: *classify_breakdown,
                    bounds: *breakdown_bounds_mhz,
                    workers,
                },
                &dir.join(label),
            )?;
            Ok(0)
        }
        Step::DetuningSweep { label, j_min, j_max, rabi_mhz, deltas_mhz, periods, samples } => {
            detuning_sweep(
                &dir.join(label),
                *j_min,
                *j_max,
                *rabi_mhz,
                deltas_mhz,
                *periods,
                *samples,
            )
        }
        Step::RateTable { label, rabi_mhz, detuning_mhz, v_grid_mhz, cycles, cap_us, samples, tol } => {
            rate_table(
                &dir.join(label),
                *rabi_mhz,
                *detuning_mhz,
                v_grid_mhz,
                *cycles,
                *cap_us,
                *samples,
                *tol,
            )
        }
        Step::GaussTable { label, j_min, j_max, rabi_mhz, detuning_mhz, v_grid_mhz, tol } => {
            gauss_table(
                &dir.join(label),
                *j_min,
                *j_max,
                *rabi_mhz,
                *detuning_mhz,
                v_grid_mhz,
                *tol,
            )
        }
        Step::CosineTable { label, j_min, j_max, rabi_mhz, detuning_mhz, v_grid_mhz, cap_us, tol } => {
            cosine_table(
                &dir.join(label),
                *j_min,
                *j_max,
                *rabi_mhz,
                *detuning_mhz,
                v_grid_mhz,
                *cap_us,
                *tol,
            )
        }
        Step::GapTable { label, detuning_mhz, rabi_grid_mhz, v_grid_mhz } => {
            gap_table(&dir.join(label), *detuning_mhz, rabi_grid_mhz, v_grid_mhz)
        }
        Step::Calibration { label, j_min, j_max, rabi_mhz, inject_rad, points } => {
            calibration(&dir.join(label), *j_min, *j_max, *rabi_mhz, *inject_rad, *points)
        }
    }
}

fn pair_config(
    lattice: LatticeSpec,
    v: f64,
    t_final_us: f64,
    samples: usize,
    tol: f64,
    model: FitModel,
) -> RunConfig {
    let mut c = RunConfig {
        lattice,
        interaction: Some(crate::config::InteractionConfig {
            v_mhz: Some(v),
            separation_um: None,
            c3_table_path: None,
        }),
        initial: crate::config::InitialConfig { site: None, pair: Some([0, 0]) },
        time: crate::config::TimeConfig { t_final_us, samples },
        solver: crate::config::SolverConfig { tol, ..Default::default() },
        observables: crate::config::ObservablesConfig::default(),
        fits: vec![FitConfig { model, series: "p00".into() }],
        spam: None,
    };
    c.observables.trajectory = false;
    c.observables.p00 = true;
    c
}

/// Stroboscopic window as a uniform grid: `n` steps of the drive period `dt`
/// (`samples = n + 1`), so micromotion at the drive frequency cancels at
/// every output point.
fn strobe_window(dt: f64, t_max: f64) -> Result<(f64, usize), ConfigError> {
    let n = (t_max / dt).floor() as usize;
    if n < 8 {
        return Err(ConfigError::new(format!(
            "stroboscopic window too short: {n} drive periods in {t_max} us"
        )));
    }
    Ok((n as f64 * dt, n + 1))
}

fn detuning_sweep(
    dir: &Path,
    j_min: i32,
    j_max: i32,
    rabi_mhz: f64,
    deltas: &[f64],
    periods: f64,
    samples: usize,
) -> anyhow::Result<usize> {
    fs::create_dir_all(dir)?;
    let mut rows = Vec::new();
    for &delta in deltas {
        if !(delta > 0.0) {
            return Err(ConfigError::new(format!("detuning sweep needs positive tilts, got {delta}")).into());
        }
        let label = format!("d{delta:.2}");
        let mut c = RunConfig {
            lattice: LatticeSpec::uniform_chain(j_min, j_max, rabi_mhz, delta),
            interaction: None,
            initial: crate::config::InitialConfig { site: Some(0), pair: None },
            time: crate::config::TimeConfig { t_final_us: periods / delta, samples },
            solver: crate::config::SolverConfig::default(),
            observables: crate::config::ObservablesConfig::default(),
            fits: vec![FitConfig { model: FitModel::BlochOscillation, series: "lambda".into() }],
            spam: None,
        };
        c.observables.trajectory = false;
        c.observables.width = true;
        let out = execute_run(&label, &Loaded::inline(c), &dir.join(&label))?;
        let fit = &out.fits[0].result;
        rows.push(vec![
            fmt_f64(delta),
            fmt_f64(fit.value("omega_mhz").unwrap_or(f64::NAN)),
            fmt_f64(fit.std_err("omega_mhz").unwrap_or(f64::NAN)),
            fmt_f64(fit.value("A").unwrap_or(f64::NAN)),
            fmt_f64(fit.std_err("A").unwrap_or(f64::NAN)),
            fmt_f64(delta),
            fmt_f64(rabi_mhz / (2.0 * delta)),
            fit.converged.to_string(),
        ]);
    }
    write_csv(
        &dir.join("bloch_table.csv"),
        "delta_mhz,omega_mhz,omega_err,a,a_err,omega_pred_mhz,a_pred,converged",
        &rows,
    )?;
    Ok(0)
}

fn rate_table(
    dir: &Path,
    rabi: f64,
    delta: f64,
    v_grid: &[f64],
    cycles: f64,
    cap_us: f64,
    samples: usize,
    tol: f64,
) -> anyhow::Result<usize> {
    fs::create_dir_all(dir)?;
    let mut rows = Vec::new();
    for &v in v_grid {
        let rate = pair_hopping_rate(v, rabi, delta)?;
        let label = format!("v{v:.3}");
        let c = pair_config(
            LatticeSpec::bichromatic_chain(0, 1, rabi, delta),
            v,
            (cycles / rate).min(cap_us),
            samples,
            tol,
            FitModel::DampedSine,
        );
        let out = execute_run(&label, &Loaded::inline(c), &dir.join(&label))?;
        let fit = &out.fits[0].result;
        rows.push(vec![
            fmt_f64(v),
            fmt_f64(fit.value("omega_mhz").unwrap_or(f64::NAN)),
            fmt_f64(fit.std_err("omega_mhz").unwrap_or(f64::NAN)),
            fmt_f64(rate),
            fit.converged.to_string(),
        ]);
    }
    write_csv(
        &dir.join("rate_table.csv"),
        "V_mhz,omega_mhz,omega_err,rate_pred_mhz,converged",
        &rows,
    )?;
    Ok(0)
}

#[derive(Serialize)]
struct ScalingSummary {
    /// `ln β` against `ln V`: slope 2 means quadratic scaling.
    loglog: LinearFit,
}

fn gauss_table(
    dir: &Path,
    j_min: i32,
    j_max: i32,
    rabi: f64,
    delta: f64,
    v_grid: &[f64],
    tol: f64,
) -> anyhow::Result<usize> {
    fs::create_dir_all(dir)?;
    let dt = 1.0 / delta;
    let mut rows = Vec::new();
    let (mut lnv, mut lnb) = (Vec::new(), Vec::new());
    for &v in v_grid {
        let rate = pair_hopping_rate(v, rabi, delta)?;
        let w_pred = TAU * rate;
        // β, a, b are only jointly identifiable on the prefix where the
        // cosine has not yet turned over (w·t up to ~1.2)
        let (t_final, samples) = strobe_window(dt, 1.2 / w_pred)?;
        let label = format!("v{v:.2}");
        let c = pair_config(
            LatticeSpec::bichromatic_chain(j_min, j_max, rabi, delta),
            v,
            t_final,
            samples,
            tol,
            FitModel::GaussianDecay,
        );
        let out = execute_run(&label, &Loaded::inline(c), &dir.join(&label))?;
        let fit = &out.fits[0].result;
        let beta = fit.value("beta_per_us2").unwrap_or(f64::NAN);
        rows.push(vec![
            fmt_f64(v),
            fmt_f64(beta),
            fmt_f64(fit.std_err("beta_per_us2").unwrap_or(f64::NAN)),
            fmt_f64(w_pred),
            fit.converged.to_string(),
        ]);
        if fit.converged && beta > 0.0 {
            lnv.push(v.ln());
            lnb.push(beta.ln());
        }
    }
    write_csv(
        &dir.join("beta_table.csv"),
        "V_mhz,beta_per_us2,beta_err,omega_pred_rad_per_us,converged",
        &rows,
    )?;
    let loglog = linear_fit(&lnv, &lnb)?;
    write_json(&dir.join("summary.json"), &ScalingSummary { loglog })?;
    Ok(0)
}

#[derive(Serialize)]
struct LinearSummary {
    /// Fitted angular frequency against V.
    linear: LinearFit,
}

fn cosine_table(
    dir: &Path,
    j_min: i32,
    j_max: i32,
    rabi: f64,
    delta: f64,
    v_grid: &[f64],
    cap_us: f64,
    tol: f64,
) -> anyhow::Result<usize> {
    fs::create_dir_all(dir)?;
    let dt = 1.0 / delta;
    let mut rows = Vec::new();
    let (mut vs, mut ws) = (Vec::new(), Vec::new());
    for &v in v_grid {
        let rate = pair_hopping_rate(v, rabi, delta)?;
        let (t_final, samples) = strobe_window(dt, (0.85 / rate).min(cap_us))?;
        let label = format!("v{v:.2}");
        let c = pair_config(
            LatticeSpec::bichromatic_chain(j_min, j_max, rabi, delta),
            v,
            t_final,
            samples,
            tol,
            FitModel::Cosine,
        );
        let out = execute_run(&label, &Loaded::inline(c), &dir.join(&label))?;
        let fit = &out.fits[0].result;
        let w = fit.value("omega_rad_per_us").unwrap_or(f64::NAN);
        rows.push(vec![
            fmt_f64(v),
            fmt_f64(w),
            fmt_f64(fit.std_err("omega_rad_per_us").unwrap_or(f64::NAN)),
            fmt_f64(fit.value("a").unwrap_or(f64::NAN)),
            fit.converged.to_string(),
        ]);
        if fit.converged {
            vs.push(v);
            ws.push(w);
        }
    }
    write_csv(
        &dir.join("omega_table.csv"),
        "V_mhz,omega_rad_per_us,omega_err,a,converged",
        &rows,
    )?;
    let linear = linear_fit(&vs, &ws)?;
    write_json(&dir.join("summary.json"), &LinearSummary { linear })?;
    Ok(0)
}

fn gap_table(
    dir: &Path,
    delta: f64,
    rabi_grid: &[f64],
    v_grid: &[f64],
) -> anyhow::Result<usize> {
    fs::create_dir_all(dir)?;
    let mut rows = Vec::new();
    for &omega in rabi_grid {
        for &v in v_grid {
            let p = gap_prediction(delta, v, omega)?;
            rows.push(vec![
                fmt_f64(p.omega_mhz),
                fmt_f64(p.v_mhz),
                fmt_f64(p.exact_mhz),
                fmt_f64(p.approx_mhz),
                fmt_f64(p.breakdown_lo_mhz),
                fmt_f64(p.breakdown_hi_mhz),
            ]);
        }
    }
    write_csv(
        &dir.join("gaps.csv"),
        "omega_mhz,v_mhz,exact_mhz,approx_mhz,breakdown_lo_mhz,breakdown_hi_mhz",
        &rows,
    )?;
    Ok(0)
}

#[derive(Serialize)]
struct CalibrationSummary {
    inject_rad: f64,
    flux_estimate_rad: f64,
    /// Signed recovery error, wrapped to (-π, π].
    error_rad: f64,
    sigma_rad: f64,
    t_probe_us: f64,
}

fn calibration(
    dir: &Path,
    j_min: i32,
    j_max: i32,
    rabi: f64,
    inject_rad: f64,
    points: usize,
) -> anyhow::Result<usize> {
    fs::create_dir_all(dir)?;
    let ring = LatticeSpec::flat_ring(j_min, j_max, rabi, inject_rad);
    let cal = calibrate_flux(&ring, rabi, None, points)?;
    let rows: Vec<Vec<String>> = cal
        .offsets_rad
        .iter()
        .zip(&cal.p_opposite)
        .map(|(&o, &p)| vec![fmt_f64(o), fmt_f64(p)])
        .collect();
    write_csv(&dir.join("sweep.csv"), "offset_rad,p_opposite", &rows)?;
    write_json(&dir.join("calibration.json"), &cal)?;
    write_json(
        &dir.join("summary.json"),
        &CalibrationSummary {
            inject_rad,
            flux_estimate_rad: cal.flux_estimate_rad,
            error_rad: wrap_angle(cal.flux_estimate_rad - inject_rad),
            sigma_rad: cal.sigma_rad,
            t_probe_us: cal.t_probe_us,
        },
    )?;
    Ok(0)
}
