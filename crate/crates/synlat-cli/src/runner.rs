//! Single-run execution: build the Hamiltonian from a config, propagate,
//! write the requested observable tables, run fits, and emit the manifest.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use ndarray::Array2;
use serde::Serialize;
use synlat::fit::{self, FitError, FitResult};
use synlat::hamiltonian::{self, Hamiltonian};
use synlat::observables::{self, CorrelationSnapshot, PopulationSeries};
use synlat::propagate::{self, Provenance, QuantumState};

use crate::config::{FitModel, Loaded, RunConfig, Series, SpamMode, parse_series};
use crate::output::{atomic_write, basis_columns, fmt_f64, write_csv, write_json};
use crate::ConfigError;

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    let h = (b - a) / (n - 1) as f64;
    (0..n).map(|k| a + h * k as f64).collect()
}

/// One fit's outcome, as written to its JSON report and echoed in the
/// manifest.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub model: String,
    pub series: String,
    /// `[min, max]` of the raw series when it was rescaled to [-1, 1] before
    /// fitting (unit-amplitude cosine model only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalized_from: Option<[f64; 2]>,
    pub result: FitResult,
}

/// SPAM post-processing note for the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct SpamNote {
    pub mode: SpamMode,
    pub p_u: f64,
    pub p_l: f64,
    /// Cells of the renormalized tables that landed outside [0, 1].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out_of_unit_interval: Option<usize>,
}

pub struct RunOutput {
    pub dir: PathBuf,
    /// Files written, relative to `dir`, in write order.
    pub files: Vec<String>,
    pub provenance: Option<Provenance>,
    pub fits: Vec<FitReport>,
}

#[derive(Serialize)]
struct FitSummary<'a> {
    file: &'a str,
    model: &'a str,
    series: &'a str,
    converged: bool,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    label: &'a str,
    config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    solver: Option<&'a Provenance>,
    files: &'a [String],
    fits: Vec<FitSummary<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    spam: Option<&'a SpamNote>,
}

/// Fit one series with the named model. Non-convergence is not an error
/// here: the result comes back with `converged = false` and the caller
/// decides what that means for the process exit code. The cosine model has
/// unit amplitude, so its input is rescaled to [-1, 1] first and the
/// original range returned alongside.
pub fn fit_series(
    model: FitModel,
    times: &[f64],
    values: &[f64],
) -> anyhow::Result<(Option<[f64; 2]>, FitResult)> {
    let mut normalized_from = None;
    let fitted = match model {
        FitModel::BlochOscillation => fit::fit_bloch_oscillation(times, values),
        FitModel::DampedSine => fit::fit_damped_sine(times, values),
        FitModel::GaussianDecay => fit::fit_gaussian_decay(times, values),
        FitModel::Cosine => {
            let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if !(hi > lo) {
                anyhow::bail!("cosine fit: series has no variation to normalize");
            }
            normalized_from = Some([lo, hi]);
            let u: Vec<f64> =
                values.iter().map(|&p| (2.0 * p - hi - lo) / (hi - lo)).collect();
            fit::fit_cosine(times, &u)
        }
    };
    let result = match fitted {
        Ok(r) => r,
        Err(FitError::DidNotConverge(r)) => *r,
        Err(e) => return Err(e).context(format!("{} fit failed", model.name())),
    };
    Ok((normalized_from, result))
}

/// A population table pending SPAM post-processing.
struct PopTable {
    stem: &'static str,
    columns: Vec<String>,
    values: Array2<f64>,
}

fn table_rows(times: &[f64], values: &Array2<f64>) -> Vec<Vec<String>> {
    times
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let mut row = Vec::with_capacity(1 + values.ncols());
            row.push(fmt_f64(t));
            row.extend(values.row(k).iter().map(|&v| fmt_f64(v)));
            row
        })
        .collect()
}

fn correlation_weights(snap: &CorrelationSnapshot) -> (f64, f64) {
    let n = snap.labels.len();
    let mut diag = 0.0;
    let mut anti = 0.0;
    for a in 0..n {
        for b in 0..n {
            if snap.labels[a] == snap.labels[b] {
                diag += snap.matrix[[a, b]];
            }
            if snap.labels[a] == -snap.labels[b] {
                anti += snap.matrix[[a, b]];
            }
        }
    }
    (diag, anti)
}

/// Execute one run into `dir`. The resolved config is written first and the
/// manifest last, so on failure the directory documents what was attempted
/// and any tables completed before the error are retained.
pub fn execute_run(label: &str, loaded: &Loaded, dir: &Path) -> anyhow::Result<RunOutput> {
    let cfg = &loaded.config;
    fs::create_dir_all(dir).with_context(|| format!("create {}", dir.display()))?;
    let mut files: Vec<String> = Vec::new();

    let resolved = toml::to_string_pretty(cfg).context("serialize resolved config")?;
    atomic_write(&dir.join("resolved_config.toml"), resolved.as_bytes())?;
    files.push("resolved_config.toml".into());

    let is_pair = cfg.initial.pair.is_some();
    let h: Hamiltonian = if is_pair {
        let inter = cfg
            .interaction
            .as_ref()
            .ok_or_else(|| ConfigError::new("config error at `interaction`: required"))?
            .build(&loaded.base_dir)?;
        hamiltonian::pair(&cfg.lattice, &inter)
            .map_err(|e| ConfigError::new(format!("config error at `lattice`: {e}")))?
    } else {
        hamiltonian::single_particle(&cfg.lattice)
            .map_err(|e| ConfigError::new(format!("config error at `lattice`: {e}")))?
    };
    let psi0 = match (cfg.initial.site, cfg.initial.pair) {
        (Some(j), None) => QuantumState::site(h.basis(), j),
        (None, Some([a, b])) => QuantumState::pair_site(h.basis(), a, b),
        _ => unreachable!("validated"),
    }
    .map_err(|e| ConfigError::new(format!("config error at `initial`: {e}")))?;

    let times = linspace(0.0, cfg.time.t_final_us, cfg.time.samples);
    let traj = if h.is_static() {
        propagate::evolve_static(&h, &psi0, &times)
    } else {
        match cfg.solver.max_substeps {
            None => propagate::evolve_timedep(&h, &psi0, &times, cfg.solver.tol),
            Some(n) => propagate::evolve_timedep_budgeted(
                &h,
                &psi0,
                &times,
                cfg.solver.tol,
                propagate::StepBudget { max_total_substeps: n, ..Default::default() },
            ),
        }
    }
    .context("propagation failed")?;
    let provenance = traj.provenance().clone();

    // -- population tables ------------------------------------------------
    let mut tables: Vec<PopTable> = Vec::new();
    if cfg.observables.trajectory {
        tables.push(PopTable {
            stem: "trajectory",
            columns: basis_columns(traj.basis()),
            values: traj.population_matrix(),
        });
        write_json(&dir.join("provenance.json"), &provenance)?;
        files.push("provenance.json".into());
    }
    let marginals: Option<PopulationSeries> =
        if is_pair && (cfg.observables.pair_sites || cfg.observables.width) {
            Some(observables::pair_site_populations(&traj)?)
        } else {
            None
        };
    if cfg.observables.pair_sites {
        let m = marginals.as_ref().expect("built above");
        tables.push(PopTable {
            stem: "pair_sites",
            columns: m.labels.iter().map(|j| format!("P_{j}")).collect(),
            values: m.values.clone(),
        });
    }
    if cfg.observables.p00 {
        let [a, b] = cfg.initial.pair.expect("validated");
        let p = observables::pair_state_population(&traj, a, b)?;
        tables.push(PopTable {
            stem: "p00",
            columns: vec!["p00".into()],
            values: Array2::from_shape_vec((p.len(), 1), p)?,
        });
    }
    for t in &tables {
        let name = format!("{}.csv", t.stem);
        let header = format!("t_us,{}", t.columns.join(","));
        write_csv(&dir.join(&name), &header, &table_rows(&times, &t.values))?;
        files.push(name);
    }

    if cfg.observables.width {
        let m = match &marginals {
            Some(m) => m.clone(),
            None => observables::site_populations(&traj)?,
        };
        let w = observables::wavepacket_width(&m);
        let rows: Vec<Vec<String>> = w
            .times
            .iter()
            .zip(&w.lambda)
            .map(|(&t, &l)| vec![fmt_f64(t), fmt_f64(l)])
            .collect();
        write_csv(&dir.join("width.csv"), "t_us,lambda", &rows)?;
        files.push("width.csv".into());
    }

    // -- correlation snapshots --------------------------------------------
    if !cfg.observables.correlations_at_us.is_empty() {
        let snaps = observables::pair_correlations(&traj, &cfg.observables.correlations_at_us)?;
        let sub = dir.join("correlations");
        fs::create_dir_all(&sub)?;
        let index_rows: Vec<Vec<String>> = snaps
            .iter()
            .enumerate()
            .map(|(k, s)| {
                vec![
                    k.to_string(),
                    fmt_f64(s.requested_us),
                    fmt_f64(s.grid_us),
                    s.exact.to_string(),
                ]
            })
            .collect();
        write_csv(&sub.join("index.csv"), "k,requested_us,grid_us,exact", &index_rows)?;
        files.push("correlations/index.csv".into());
        let mut long_rows: Vec<Vec<String>> = Vec::new();
        let mut weight_rows: Vec<Vec<String>> = Vec::new();
        for (k, s) in snaps.iter().enumerate() {
            let labels: Vec<String> = s.labels.iter().map(|j| j.to_string()).collect();
            let header = format!("i,{}", labels.join(","));
            let rows: Vec<Vec<String>> = s
                .labels
                .iter()
                .enumerate()
                .map(|(a, &la)| {
                    let mut row = vec![la.to_string()];
                    row.extend(s.matrix.row(a).iter().map(|&v| fmt_f64(v)));
                    row
                })
                .collect();
            let name = format!("c_{k}.csv");
            write_csv(&sub.join(&name), &header, &rows)?;
            files.push(format!("correlations/{name}"));
            for (a, &la) in s.labels.iter().enumerate() {
                for (b, &lb) in s.labels.iter().enumerate() {
                    long_rows.push(vec![
                        fmt_f64(s.grid_us),
                        la.to_string(),
                        lb.to_string(),
                        fmt_f64(s.matrix[[a, b]]),
                    ]);
                }
            }
            let (diag, anti) = correlation_weights(s);
            weight_rows.push(vec![fmt_f64(s.grid_us), fmt_f64(diag), fmt_f64(anti)]);
        }
        write_csv(&sub.join("long.csv"), "t_us,i,j,value", &long_rows)?;
        files.push("correlations/long.csv".into());
        write_csv(&sub.join("weights.csv"), "t_us,diagonal,anti_diagonal", &weight_rows)?;
        files.push("correlations/weights.csv".into());
    }

    // -- fits ---------------------------------------------------------------
    let mut fits: Vec<FitReport> = Vec::new();
    for (k, f) in cfg.fits.iter().enumerate() {
        let series = parse_series(&f.series).expect("validated");
        let values: Vec<f64> = match series {
            Series::Lambda => {
                let m = if is_pair {
                    observables::pair_site_populations(&traj)?
                } else {
                    observables::site_populations(&traj)?
                };
                observables::wavepacket_width(&m).lambda
            }
            Series::PairOrigin => {
                let [a, b] = cfg.initial.pair.expect("validated");
                observables::pair_state_population(&traj, a, b)?
            }
            Series::Site(l) => {
                let m = if is_pair {
                    observables::pair_site_populations(&traj)?
                } else {
                    observables::site_populations(&traj)?
                };
                m.site(l).expect("validated label")
            }
        };
        let (normalized_from, result) = fit_series(f.model, &times, &values)?;
        let report = FitReport {
            model: f.model.name().to_string(),
            series: f.series.clone(),
            normalized_from,
            result,
        };
        let name = format!("fit_{k:02}_{}.json", f.model.name());
        write_json(&dir.join(&name), &report)?;
        files.push(name);
        fits.push(report);
    }

    // -- SPAM variants of the population tables ----------------------------
    let mut spam_note: Option<SpamNote> = None;
    if let Some(sc) = &cfg.spam {
        let model = sc.build(is_pair)?;
        let mut excursions = 0usize;
        for t in &tables {
            let (suffix, mapped): (&str, Array2<f64>) = match sc.mode {
                SpamMode::Forward => {
                    let v = t.values.mapv(|p| model.forward(p));
                    ("bare", v)
                }
                SpamMode::Renormalize => {
                    let v = t.values.mapv(|p| {
                        let r = model.renormalize(p);
                        if !r.in_unit_interval {
                            excursions += 1;
                        }
                        r.value
                    });
                    ("renorm", v)
                }
            };
            let name = format!("{}_{suffix}.csv", t.stem);
            let header = format!("t_us,{}", t.columns.join(","));
            write_csv(&dir.join(&name), &header, &table_rows(&times, &mapped))?;
            files.push(name);
        }
        spam_note = Some(SpamNote {
            mode: sc.mode,
            p_u: model.p_u(),
            p_l: model.p_l(),
            out_of_unit_interval: match sc.mode {
                SpamMode::Renormalize => Some(excursions),
                SpamMode::Forward => None,
            },
        });
    }

    // -- manifest last: its presence marks a completed run ------------------
    let manifest = Manifest {
        tool: "synlat",
        version: env!("CARGO_PKG_VERSION"),
        label,
        config: cfg,
        solver: Some(&provenance),
        files: &files,
        fits: fits
            .iter()
            .enumerate()
            .map(|(k, r)| FitSummary {
                file: {
                    // find the file written for this fit
                    let prefix = format!("fit_{k:02}_");
                    files
                        .iter()
                        .find(|f| f.starts_with(&prefix))
                        .map(String::as_str)
                        .unwrap_or("")
                },
                model: &r.model,
                series: &r.series,
                converged: r.result.converged,
            })
            .collect(),
        spam: spam_note.as_ref(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;

    Ok(RunOutput { dir: dir.to_path_buf(), files, provenance: Some(provenance), fits })
}
