//! Built-in scenario catalog. Each scenario is a named list of steps whose
//! TOML form round-trips losslessly, so `scenario --print-config` output can
//! be edited and re-run.

use std::f64::consts::FRAC_PI_3;

use serde::{Deserialize, Serialize};
use synlat::analysis::breakdown_bounds;
use synlat::lattice::LatticeSpec;

use crate::config::{
    FitConfig, FitModel, InitialConfig, InteractionConfig, ObservablesConfig, RunConfig,
    SolverConfig, TimeConfig,
};

/// One unit of scenario work. `Simulate` and `Scan` reuse the generic run
/// machinery; the table steps wrap protocols that need derived time windows
/// (stroboscopic grids, prediction-scaled durations) and merge their rows
/// into a single CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Step {
    Simulate {
        label: String,
        config: RunConfig,
    },
    Scan {
        label: String,
        config: RunConfig,
        param: String,
        grid: Vec<f64>,
        #[serde(default)]
        classify_breakdown: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        breakdown_bounds_mhz: Option<[f64; 2]>,
    },
    /// Width-oscillation fits across tilts, merged with the ω = Δ and
    /// A = Ω/2Δ predictions.
    DetuningSweep {
        label: String,
        j_min: i32,
        j_max: i32,
        rabi_mhz: f64,
        deltas_mhz: Vec<f64>,
        /// Window length in refocusing periods 1/Δ.
        periods: f64,
        samples: usize,
    },
    /// Pair-hopping rate vs interaction on the driven two-site system,
    /// against the second-order prediction.
    RateTable {
        label: String,
        rabi_mhz: f64,
        detuning_mhz: f64,
        v_grid_mhz: Vec<f64>,
        /// Window length in predicted oscillation cycles.
        cycles: f64,
        cap_us: f64,
        samples: usize,
        tol: f64,
    },
    /// Early-time Gaussian decay coefficient of the pair origin state vs
    /// interaction, sampled stroboscopically at the drive period.
    GaussTable {
        label: String,
        j_min: i32,
        j_max: i32,
        rabi_mhz: f64,
        detuning_mhz: f64,
        v_grid_mhz: Vec<f64>,
        tol: f64,
    },
    /// Long-time pair oscillation frequency vs interaction, stroboscopic.
    CosineTable {
        label: String,
        j_min: i32,
        j_max: i32,
        rabi_mhz: f64,
        detuning_mhz: f64,
        v_grid_mhz: Vec<f64>,
        cap_us: f64,
        tol: f64,
    },
    /// Exact vs perturbative pair gap over an (Ω, V) grid.
    GapTable {
        label: String,
        detuning_mhz: f64,
        rabi_grid_mhz: Vec<f64>,
        v_grid_mhz: Vec<f64>,
    },
    /// Closed-loop ring flux calibration against an injected wrap phase.
    Calibration {
        label: String,
        j_min: i32,
        j_max: i32,
        rabi_mhz: f64,
        inject_rad: f64,
        points: usize,
    },
}

impl Step {
    pub fn label(&self) -> &str {
        match self {
            Step::Simulate { label, .. }
            | Step::Scan { label, .. }
            | Step::DetuningSweep { label, .. }
            | Step::RateTable { label, .. }
            | Step::GaussTable { label, .. }
            | Step::CosineTable { label, .. }
            | Step::GapTable { label, .. }
            | Step::Calibration { label, .. } => label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub steps: Vec<Step>,
}

fn single_run(lattice: LatticeSpec, site: i32, t_final_us: f64, samples: usize) -> RunConfig {
    RunConfig {
        lattice,
        interaction: None,
        initial: InitialConfig { site: Some(site), pair: None },
        time: TimeConfig { t_final_us, samples },
        solver: SolverConfig::default(),
        observables: ObservablesConfig::default(),
        fits: Vec::new(),
        spam: None,
    }
}

fn pair_run(lattice: LatticeSpec, v_mhz: f64, t_final_us: f64, samples: usize) -> RunConfig {
    RunConfig {
        lattice,
        interaction: Some(InteractionConfig {
            v_mhz: Some(v_mhz),
            separation_um: None,
            c3_table_path: None,
        }),
        initial: InitialConfig { site: None, pair: Some([0, 0]) },
        time: TimeConfig { t_final_us, samples },
        solver: SolverConfig::default(),
        observables: ObservablesConfig::default(),
        fits: Vec::new(),
        spam: None,
    }
}

fn fit(model: FitModel, series: &str) -> FitConfig {
    FitConfig { model, series: series.to_string() }
}

fn sim(label: &str, config: RunConfig) -> Step {
    Step::Simulate { label: label.to_string(), config }
}

pub fn catalog() -> Vec<Scenario> {
    let mut out = Vec::new();

    // ballistic quantum walk on the flat chain
    out.push(Scenario {
        name: "fig1-qw".into(),
        description: "Continuous-time quantum walk on the flat synthetic chain".into(),
        steps: vec![sim("qw", {
            let mut c = single_run(LatticeSpec::uniform_chain(-4, 4, 0.45, 0.0), 0, 4.0, 161);
            c.observables.width = true;
            c
        })],
    });

    // Bloch oscillation of the width on a tilted chain
    out.push(Scenario {
        name: "fig1-bo".into(),
        description: "Bloch oscillation of the wavepacket width on a tilted chain".into(),
        steps: vec![sim("bo", {
            let mut c = single_run(LatticeSpec::uniform_chain(-4, 4, 0.45, 0.4), 0, 5.0, 201);
            c.observables.width = true;
            c.fits = vec![fit(FitModel::BlochOscillation, "lambda")];
            c
        })],
    });

    // frequency/amplitude of the width oscillation vs tilt
    out.push(Scenario {
        name: "fig1-fg".into(),
        description: "Width-oscillation frequency and amplitude across tilt strengths".into(),
        steps: vec![Step::DetuningSweep {
            label: "tilts".into(),
            j_min: -4,
            j_max: 4,
            rabi_mhz: 0.45,
            deltas_mhz: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            periods: 2.0,
            samples: 129,
        }],
    });

    // ring revivals under the staircase drive, plus flat and open references
    out.push(Scenario {
        name: "fig2-escher".into(),
        description: "Ring revivals under the staircase drive, with flat-ring and \
                      cut-ring references"
            .into(),
        steps: {
            let mut steps =
                vec![sim("d0.00", single_run(LatticeSpec::flat_ring(-3, 4, 0.90, 0.0), 0, 4.0, 801))];
            for delta in [0.15, 0.30, 0.45] {
                steps.push(sim(
                    &format!("d{delta:.2}"),
                    single_run(LatticeSpec::escher_ring(-3, 4, 0.90, delta, 0.0), 0, 4.0, 801),
                ));
            }
            steps.push(sim(
                "obc-d0.45",
                single_run(
                    LatticeSpec::escher_ring(-3, 4, 0.90, 0.45, 0.0).without_wrap(),
                    0,
                    4.0,
                    801,
                ),
            ));
            steps
        },
    });

    // interacting pair on the tilted chain at three interaction strengths
    out.push(Scenario {
        name: "fig3-pairbo".into(),
        description: "Interacting pair dynamics on the tilted chain at three \
                      interaction strengths"
            .into(),
        steps: [0.34, 0.75, 1.50]
            .iter()
            .map(|&v| {
                sim(&format!("v{v:.2}"), {
                    let mut c =
                        pair_run(LatticeSpec::uniform_chain(-4, 4, 0.45, 0.8), v, 8.0, 321);
                    c.observables.pair_sites = true;
                    c.observables.p00 = true;
                    c.fits = vec![fit(FitModel::DampedSine, "p00")];
                    c
                })
            })
            .collect(),
    });

    // pair oscillation frequency and damping vs interaction
    let scan_base = {
        let mut c = pair_run(LatticeSpec::uniform_chain(-4, 4, 0.45, 0.8), 1.0, 8.0, 321);
        c.observables.trajectory = false;
        c.observables.p00 = true;
        c.fits = vec![fit(FitModel::DampedSine, "p00")];
        c
    };
    let scan_grid: Vec<f64> = (0..=16).map(|k| k as f64 / 10.0).collect();
    out.push(Scenario {
        name: "fig3-scan".into(),
        description: "Pair oscillation frequency and damping across the interaction sweep"
            .into(),
        steps: vec![Step::Scan {
            label: "scan".into(),
            config: scan_base.clone(),
            param: "interaction.v_mhz".into(),
            grid: scan_grid.clone(),
            classify_breakdown: false,
            breakdown_bounds_mhz: None,
        }],
    });

    // interaction-assisted pair hopping on the driven two-site system
    out.push(Scenario {
        name: "fig4-pairhop".into(),
        description: "Interaction-assisted pair hopping under the bichromatic drive".into(),
        steps: vec![
            sim("v0.00", {
                let mut c =
                    pair_run(LatticeSpec::bichromatic_chain(0, 1, 1.92, 7.2), 0.0, 4.0, 401);
                c.solver.tol = 1e-6;
                c.observables.p00 = true;
                c
            }),
            sim("v1.56", {
                let mut c =
                    pair_run(LatticeSpec::bichromatic_chain(0, 1, 1.92, 7.2), 1.56, 4.0, 401);
                c.solver.tol = 1e-6;
                c.observables.p00 = true;
                c.fits = vec![fit(FitModel::DampedSine, "p00")];
                c
            }),
            Step::RateTable {
                label: "rates".into(),
                rabi_mhz: 1.92,
                detuning_mhz: 7.2,
                v_grid_mhz: crate::runner::linspace(0.5, 2.2, 9),
                cycles: 1.2,
                cap_us: 20.0,
                samples: 257,
                tol: 1e-6,
            },
        ],
    });

    // quadratic scaling of the early-time decay coefficient
    out.push(Scenario {
        name: "fig4-decay".into(),
        description: "Gaussian decay coefficient of the pair origin state vs interaction"
            .into(),
        steps: vec![Step::GaussTable {
            label: "beta".into(),
            j_min: -4,
            j_max: 4,
            rabi_mhz: 0.90,
            detuning_mhz: 5.0,
            v_grid_mhz: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            tol: 1e-5,
        }],
    });

    // exact vs perturbative pair gap
    out.push(Scenario {
        name: "figs1-gap".into(),
        description: "Exact and perturbative pair gap over the interaction grid".into(),
        steps: vec![Step::GapTable {
            label: "gaps".into(),
            detuning_mhz: 0.8,
            rabi_grid_mhz: vec![0.16, 0.45],
            v_grid_mhz: (0..=100).map(|k| k as f64 / 50.0).collect(),
        }],
    });

    // long-time oscillation frequency grows linearly with V
    out.push(Scenario {
        name: "figs3-longtime".into(),
        description: "Long-time pair oscillation frequency across the interaction sweep"
            .into(),
        steps: vec![Step::CosineTable {
            label: "omega".into(),
            j_min: -4,
            j_max: 4,
            rabi_mhz: 0.90,
            detuning_mhz: 5.0,
            v_grid_mhz: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            cap_us: 48.0,
            tol: 1e-5,
        }],
    });

    // correlation structure: anti-diagonal repulsion vs diagonal pairing
    out.push(Scenario {
        name: "figs4-corr".into(),
        description: "Pair correlation matrices on the tilted chain and under the \
                      bichromatic drive"
            .into(),
        steps: vec![
            sim("tilted", {
                let mut c = pair_run(LatticeSpec::uniform_chain(-4, 4, 0.45, 0.8), 0.8, 2.0, 81);
                c.observables.pair_sites = true;
                c.observables.p00 = true;
                c.observables.correlations_at_us = vec![0.5, 1.0, 2.0];
                c
            }),
            sim("bichromatic", {
                let mut c =
                    pair_run(LatticeSpec::bichromatic_chain(-4, 4, 0.90, 5.0), 0.8, 2.0, 81);
                c.solver.tol = 1e-7;
                c.observables.pair_sites = true;
                c.observables.p00 = true;
                c.observables.correlations_at_us = vec![0.5, 1.0, 2.0];
                c
            }),
        ],
    });

    // closed-loop flux calibration with a known injected phase
    out.push(Scenario {
        name: "figs5-calib".into(),
        description: "Ring flux calibration sweep against an injected wrap phase".into(),
        steps: vec![Step::Calibration {
            label: "calib".into(),
            j_min: -3,
            j_max: 4,
            rabi_mhz: 0.90,
            inject_rad: FRAC_PI_3,
            points: 32,
        }],
    });

    // breakdown classification of the interaction scan
    let (lo, hi) = breakdown_bounds(0.8, 0.45);
    out.push(Scenario {
        name: "figs6-breakdown".into(),
        description: "Damping-based breakdown classification of the interaction scan".into(),
        steps: vec![Step::Scan {
            label: "scan".into(),
            config: scan_base,
            param: "interaction.v_mhz".into(),
            grid: scan_grid,
            classify_breakdown: true,
            breakdown_bounds_mhz: Some([lo, hi]),
        }],
    });

    out
}

pub fn find(name: &str) -> Option<Scenario> {
    catalog().into_iter().find(|s| s.name == name)
}

pub fn names() -> Vec<String> {
    catalog().into_iter().map(|s| s.name).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenarios_round_trip_through_toml() {
        for s in catalog() {
            let text = toml::to_string_pretty(&s).unwrap_or_else(|e| {
                panic!("{} does not serialize: {e}", s.name);
            });
            let back: Scenario = toml::from_str(&text)
                .unwrap_or_else(|e| panic!("{} does not re-parse: {e}", s.name));
            assert_eq!(s, back, "{} drifted through TOML", s.name);
        }
    }

    #[test]
    fn names_are_unique_and_follow_the_figure_convention() {
        let names = names();
        assert_eq!(names.len(), 13);
        let mut dedup = names.clone();
        dedup.sort();
        dedup.dedup();
        assert_eq!(dedup.len(), names.len());
        for n in &names {
            assert!(n.starts_with("fig"), "unexpected name {n}");
        }
    }

    #[test]
    fn every_simulate_config_validates() {
        for s in catalog() {
            for step in &s.steps {
                match step {
                    Step::Simulate { label, config } => {
                        crate::config::validate(config)
                            .unwrap_or_else(|e| panic!("{}/{label}: {e}", s.name));
                    }
                    Step::Scan { label, config, .. } => {
                        crate::config::validate(config)
                            .unwrap_or_else(|e| panic!("{}/{label}: {e}", s.name));
                    }
                    _ => {}
                }
            }
        }
    }
}
