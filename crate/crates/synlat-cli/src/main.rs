//! Command-line front end. Exit codes: 0 success, 1 runtime failure (solver
//! or fit non-convergence, I/O) with partial outputs retained, 2 config or
//! usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use synlat_cli::config::{self, FitModel};
use synlat_cli::output::write_json;
use synlat_cli::runner::{execute_run, fit_series, linspace, FitReport};
use synlat_cli::sweep::{run_scan, ScanSpec};
use synlat_cli::{catalog, steps, ConfigError};

#[derive(Parser)]
#[command(name = "synlat", version, about = "Synthetic-lattice simulator and analysis toolkit")]
struct Cli {
    /// Output root; defaults to $SYNLAT_OUT, then ./out
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one configured simulation
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Override a config key: key.path=value (repeatable)
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Shorthand for --set solver.tol=<TOL>
        #[arg(long)]
        tol: Option<f64>,
        /// Run label and output subdirectory; defaults to the config stem
        #[arg(long)]
        label: Option<String>,
    },
    /// Fit a model to two columns of a CSV file
    Fit {
        #[arg(long)]
        data: PathBuf,
        /// bloch_oscillation | damped_sine | gaussian_decay | cosine
        #[arg(long)]
        model: String,
        /// Abscissa column name; default: first column
        #[arg(long)]
        x: Option<String>,
        /// Ordinate column name; default: second column
        #[arg(long)]
        y: Option<String>,
        /// Also write the report JSON here
        #[arg(long)]
        save: Option<PathBuf>,
    },
    /// Sweep one config key over a grid, one run per point
    Scan {
        #[arg(long)]
        config: PathBuf,
        /// Dotted key to sweep
        #[arg(long, default_value = "interaction.v_mhz")]
        param: String,
        /// Grid: "lo:hi:n" (inclusive linspace) or comma-separated values
        #[arg(long)]
        grid: String,
        /// Worker threads; default: one per core
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Run a built-in scenario (see --list)
    Scenario {
        name: Option<String>,
        /// List available scenarios
        #[arg(long)]
        list: bool,
        /// Print the scenario's TOML without running it
        #[arg(long)]
        print_config: bool,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Sweep the wrap-link phase of a flat ring and locate its flux
    CalibrateFlux {
        /// TOML file with a [lattice] table (or a bare lattice spec)
        #[arg(long)]
        config: PathBuf,
        /// Coupling used for the probe time; default: the first link's
        #[arg(long)]
        rabi: Option<f64>,
        #[arg(long, default_value_t = 32)]
        points: usize,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config_err = e.chain().any(|c| c.downcast_ref::<ConfigError>().is_some());
            ExitCode::from(if config_err { 2u8 } else { 1u8 })
        }
    }
}

fn out_root(cli_out: &Option<PathBuf>) -> PathBuf {
    cli_out
        .clone()
        .or_else(|| std::env::var_os("SYNLAT_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn with_tol(mut sets: Vec<String>, tol: Option<f64>) -> Vec<String> {
    if let Some(t) = tol {
        sets.push(format!("solver.tol={t}"));
    }
    sets
}

fn parse_model(s: &str) -> Result<FitModel, ConfigError> {
    match s {
        "bloch_oscillation" => Ok(FitModel::BlochOscillation),
        "damped_sine" => Ok(FitModel::DampedSine),
        "gaussian_decay" => Ok(FitModel::GaussianDecay),
        "cosine" => Ok(FitModel::Cosine),
        _ => Err(ConfigError::new(format!(
            "unknown model `{s}` (expected bloch_oscillation, damped_sine, gaussian_decay, or cosine)"
        ))),
    }
}

fn parse_grid(s: &str) -> Result<Vec<f64>, ConfigError> {
    let bad = |m: &str| ConfigError::new(format!("bad grid `{s}`: {m}"));
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad("expected lo:hi:n"));
        }
        let lo: f64 = parts[0].parse().map_err(|_| bad("lo is not a number"))?;
        let hi: f64 = parts[1].parse().map_err(|_| bad("hi is not a number"))?;
        let n: usize = parts[2].parse().map_err(|_| bad("n is not an integer"))?;
        if n < 2 {
            return Err(bad("need at least 2 points"));
        }
        Ok(linspace(lo, hi, n))
    } else {
        s.split(',')
            .map(|p| p.trim().parse::<f64>().map_err(|_| bad("not a number")))
            .collect()
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let root = out_root(&cli.out);
    match cli.cmd {
        Cmd::Simulate { config: path, set, tol, label } => {
            let loaded = config::load(&path, &with_tol(set, tol))?;
            let label = label.unwrap_or_else(|| {
                path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
            });
            let dir = root.join(&label);
            let out = execute_run(&label, &loaded, &dir)?;
            println!("wrote {}", dir.display());
            let bad = out.fits.iter().filter(|r| !r.result.converged).count();
            if bad > 0 {
                anyhow::bail!("{bad} fit(s) did not converge; outputs retained in {}", dir.display());
            }
            Ok(())
        }
        Cmd::Fit { data, model, x, y, save } => {
            let model = parse_model(&model)?;
            let (xs, ys, y_name) = read_xy(&data, x.as_deref(), y.as_deref())?;
            let (normalized_from, result) = fit_series(model, &xs, &ys)?;
            let report = FitReport {
                model: model.name().to_string(),
                series: y_name,
                normalized_from,
                result,
            };
            let mut text = serde_json::to_string_pretty(&report)?;
            text.push('\n');
            print!("{text}");
            if let Some(p) = save {
                write_json(&p, &report)?;
            }
            if !report.result.converged {
                anyhow::bail!("fit did not converge");
            }
            Ok(())
        }
        Cmd::Scan { config: path, param, grid, workers, set, tol } => {
            let grid = parse_grid(&grid)?;
            let doc = config::document_from_file(&path, &with_tol(set, tol))?;
            let base_dir =
                path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."));
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "scan".into());
            let dir = root.join(format!("scan-{stem}"));
            run_scan(
                &ScanSpec {
                    base: &doc,
                    base_dir,
                    param,
                    grid,
                    classify: false,
                    bounds: None,
                    workers,
                },
                &dir,
            )?;
            println!("wrote {}", dir.display());
            Ok(())
        }
        Cmd::Scenario { name, list, print_config, workers } => {
            if list {
                for s in catalog::catalog() {
                    println!("{:16} {}", s.name, s.description);
                }
                return Ok(());
            }
            let name = name.ok_or_else(|| {
                ConfigError::new("scenario: give a name or --list to see what's available")
            })?;
            let scn = catalog::find(&name).ok_or_else(|| {
                ConfigError::new(format!(
                    "unknown scenario `{name}`; available: {}",
                    catalog::names().join(", ")
                ))
            })?;
            if print_config {
                print!("{}", toml::to_string_pretty(&scn)?);
                return Ok(());
            }
            let dir = steps::execute_scenario(&scn, &root, workers)?;
            println!("wrote {}", dir.display());
            Ok(())
        }
        Cmd::CalibrateFlux { config: path, rabi, points, set } => {
            let doc = config::document_from_file(&path, &set)?;
            let lattice_value = match &doc {
                toml::Value::Table(t) if t.contains_key("lattice") => {
                    t.get("lattice").cloned().expect("checked")
                }
                other => other.clone(),
            };
            let mut spec: synlat::lattice::LatticeSpec =
                serde_path_to_error::deserialize(lattice_value).map_err(|e| {
                    ConfigError::new(format!("config error at `lattice.{}`: {}", e.path(), e.inner()))
                })?;
            if spec.detunings.is_empty() {
                spec.detunings = vec![0.0; spec.sites.len()];
            }
            let rabi = match rabi.or_else(|| spec.links.first().map(|l| l.rabi_mhz)) {
                Some(r) => r,
                None => return Err(ConfigError::new("config error at `lattice.links`: empty").into()),
            };
            let cal = synlat::analysis::calibrate_flux(&spec, rabi, None, points)
                .context("flux calibration failed")?;
            let dir = root.join("calibrate-flux");
            fs::create_dir_all(&dir)?;
            let rows: Vec<Vec<String>> = cal
                .offsets_rad
                .iter()
                .zip(&cal.p_opposite)
                .map(|(&o, &p)| {
                    vec![synlat_cli::output::fmt_f64(o), synlat_cli::output::fmt_f64(p)]
                })
                .collect();
            synlat_cli::output::write_csv(&dir.join("sweep.csv"), "offset_rad,p_opposite", &rows)?;
            write_json(&dir.join("calibration.json"), &cal)?;
            println!(
                "flux estimate {:+.5} rad (sigma {:.5}), probe at {:.4} us; wrote {}",
                cal.flux_estimate_rad,
                cal.sigma_rad,
                cal.t_probe_us,
                dir.display()
            );
            Ok(())
        }
    }
}

/// Read two numeric columns from a CSV file. Column defaults: first for x,
/// second for y. Only the requested cells are parsed.
fn read_xy(
    path: &Path,
    x: Option<&str>,
    y: Option<&str>,
) -> anyhow::Result<(Vec<f64>, Vec<f64>, String)> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError::new(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| ConfigError::new(format!("{}: empty file", path.display())))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    let find = |want: Option<&str>, default: usize, what: &str| -> Result<usize, ConfigError> {
        match want {
            Some(name) => cols.iter().position(|c| *c == name).ok_or_else(|| {
                ConfigError::new(format!(
                    "{}: no column `{name}` (have: {})",
                    path.display(),
                    cols.join(", ")
                ))
            }),
            None => {
                if cols.len() <= default {
                    return Err(ConfigError::new(format!(
                        "{}: need at least {} columns for a default {what} pick",
                        path.display(),
                        default + 1
                    )));
                }
                Ok(default)
            }
        }
    };
    let xi = find(x, 0, "x")?;
    let yi = find(y, 1, "y")?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (k, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        let get = |i: usize| -> anyhow::Result<f64> {
            cells
                .get(i)
                .ok_or_else(|| anyhow::anyhow!("{}: row {} too short", path.display(), k + 2))?
                .trim()
                .parse::<f64>()
                .with_context(|| format!("{}: row {}, column {}", path.display(), k + 2, i + 1))
        };
        xs.push(get(xi)?);
        ys.push(get(yi)?);
    }
    Ok((xs, ys, cols[yi].to_string()))
}
