//! Parameter sweeps: one run per grid point, executed concurrently, with the
//! fitted frequency and damping of each point merged into a single table.

use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use serde::Serialize;
use synlat::analysis::ScanRow;

use crate::config::{self, FitModel, Loaded};
use crate::output::{fmt_f64, write_csv, write_json};
use crate::runner::execute_run;
use crate::ConfigError;

/// A sweep of one scalar config key over a grid.
pub struct ScanSpec<'a> {
    /// Base config document; the swept key is overwritten per point.
    pub base: &'a toml::Value,
    pub base_dir: PathBuf,
    /// Dotted key path, e.g. `interaction.v_mhz`.
    pub param: String,
    pub grid: Vec<f64>,
    /// Write `breakdown.csv` + `summary.json` classifying each point by
    /// damping (γ > 5% of the fitted frequency).
    pub classify: bool,
    /// Predicted breakdown window in the swept parameter, echoed into the
    /// summary for comparison.
    pub bounds: Option<[f64; 2]>,
    /// Worker threads for the point runs; `None` = one per core.
    pub workers: Option<usize>,
}

#[derive(Debug, Serialize)]
struct PointError {
    index: usize,
    value: f64,
    error: String,
}

#[derive(Serialize)]
struct ScanSummary<'a> {
    param: &'a str,
    points: usize,
    errors: usize,
    unconverged: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    breakdown_bounds: Option<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    inside_breakdown: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    outside_breakdown: Option<usize>,
}

/// Point results come back in grid order regardless of completion order, so
/// the merged CSV is deterministic.
pub fn run_scan(spec: &ScanSpec<'_>, dir: &Path) -> anyhow::Result<()> {
    if spec.grid.is_empty() {
        return Err(ConfigError::new("scan: empty grid").into());
    }
    // Fail fast on a config problem before spawning workers: the first point
    // must deserialize, and the merged table needs a damped-sine fit to read
    // frequency and damping from.
    {
        let mut doc = spec.base.clone();
        config::apply_override(&mut doc, &spec.param, toml::Value::Float(spec.grid[0]))?;
        let cfg = config::config_from_value(doc)?;
        match cfg.fits.first() {
            Some(f) if f.model == FitModel::DampedSine => {}
            _ => {
                return Err(ConfigError::new(
                    "config error at `fits`: scans need `fits[0].model = \"damped_sine\"`",
                )
                .into())
            }
        }
    }

    std::fs::create_dir_all(dir.join("points"))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.workers.unwrap_or(0))
        .build()
        .context("build worker pool")?;

    let results: Vec<Result<ScanRow, String>> = pool.install(|| {
        (0..spec.grid.len())
            .into_par_iter()
            .map(|i| {
                let v = spec.grid[i];
                let label = format!("p{i:03}");
                let mut doc = spec.base.clone();
                config::apply_override(&mut doc, &spec.param, toml::Value::Float(v))?;
                let cfg = config::config_from_value(doc)?;
                let loaded = Loaded { config: cfg, base_dir: spec.base_dir.clone() };
                let out = execute_run(&label, &loaded, &dir.join("points").join(&label))?;
                let fit = &out.fits[0].result;
                let pick = |n: &str| {
                    fit.value(n)
                        .ok_or_else(|| anyhow::anyhow!("fit has no parameter `{n}`"))
                };
                Ok(ScanRow {
                    v_mhz: v,
                    omega_mhz: pick("omega_mhz")?,
                    omega_err: fit.std_err("omega_mhz").unwrap_or(f64::NAN),
                    gamma_per_us: pick("gamma_per_us")?,
                    gamma_err: fit.std_err("gamma_per_us").unwrap_or(f64::NAN),
                    converged: fit.converged,
                })
            })
            .map(|r: anyhow::Result<ScanRow>| r.map_err(|e| format!("{e:#}")))
            .collect()
    });

    // A failed point keeps its grid slot as a nan row; the error text goes to
    // errors.json and the scan itself still succeeds.
    let mut rows: Vec<ScanRow> = Vec::with_capacity(results.len());
    let mut errors: Vec<PointError> = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(row) => rows.push(row),
            Err(msg) => {
                errors.push(PointError { index: i, value: spec.grid[i], error: msg });
                rows.push(ScanRow {
                    v_mhz: spec.grid[i],
                    omega_mhz: f64::NAN,
                    omega_err: f64::NAN,
                    gamma_per_us: f64::NAN,
                    gamma_err: f64::NAN,
                    converged: false,
                });
            }
        }
    }

    let first_col = if spec.param == "interaction.v_mhz" {
        "V_mhz".to_string()
    } else {
        spec.param.rsplit('.').next().unwrap_or(&spec.param).to_string()
    };
    let header = format!("{first_col},omega_mhz,omega_err,gamma_per_us,gamma_err,converged");
    let csv_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_f64(r.v_mhz),
                fmt_f64(r.omega_mhz),
                fmt_f64(r.omega_err),
                fmt_f64(r.gamma_per_us),
                fmt_f64(r.gamma_err),
                r.converged.to_string(),
            ]
        })
        .collect();
    write_csv(&dir.join("scan.csv"), &header, &csv_rows)?;
    if !errors.is_empty() {
        write_json(&dir.join("errors.json"), &errors)?;
    }

    let (mut inside, mut outside) = (None, None);
    if spec.classify {
        let class_rows: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                vec![
                    fmt_f64(r.v_mhz),
                    fmt_f64(r.omega_mhz),
                    fmt_f64(r.gamma_per_us),
                    fmt_f64(r.gamma_per_us / r.omega_mhz.abs()),
                    r.inside_breakdown().to_string(),
                ]
            })
            .collect();
        write_csv(
            &dir.join("breakdown.csv"),
            &format!("{first_col},omega_mhz,gamma_per_us,gamma_over_omega,inside_breakdown"),
            &class_rows,
        )?;
        let n_in = rows.iter().filter(|r| r.converged && r.inside_breakdown()).count();
        let n_out = rows.iter().filter(|r| r.converged && !r.inside_breakdown()).count();
        inside = Some(n_in);
        outside = Some(n_out);
    }

    write_json(
        &dir.join("summary.json"),
        &ScanSummary {
            param: &spec.param,
            points: spec.grid.len(),
            errors: errors.len(),
            unconverged: rows.iter().filter(|r| !r.converged).count(),
            breakdown_bounds: spec.bounds,
            inside_breakdown: inside,
            outside_breakdown: outside,
        },
    )?;
    Ok(())
}
