//! Closed-form analysis formulas (energy gaps, breakdown bounds, pair-hopping
//! rates) and the composite procedures built on the solver: the
//! frequency-vs-interaction scan and the ring flux calibration.

use ndarray_linalg::{Eigh, UPLO};
use serde::Serialize;

use crate::fit::{self, FitError, FitResult};
use crate::hamiltonian;
use crate::lattice::{wrap_angle, C3Table, Drive, InteractionSpec, LatticeError, LatticeSpec};
use crate::observables::{self, ObservableError};
use crate::propagate::{self, EvolveError, QuantumState};
use crate::TAU;

#[derive(Debug, thiserror::Error)]
pub enum AnalysisError {
    #[error("negative radicand {0} in the exact gap formula")]
    NegativeRadicand(f64),
    #[error("pair-hopping rate has a pole at |V| = Δ (V = {v}, Δ = {delta})")]
    PoleAtResonance { v: f64, delta: f64 },
    #[error("flux calibration requires a flat static ring: {0}")]
    NotFlatRing(String),
    #[error("calibration probe is undefined: {0}")]
    BadProbe(String),
    #[error("no clear calibration peak: P_opposite spread is only {spread:.3}")]
    FlatResponse { spread: f64 },
    #[error("phase sweep needs at least 8 points, got {0}")]
    TooFewPoints(usize),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("eigendecomposition failed: {0}")]
    Linalg(String),
}

/// Exact energy gap of the three-site pair problem:
///
/// ```text
/// G = ½ { 10Δ² − 4ΔV + 2V² + 5Ω²
///         − [ (6Δ² + 4ΔV − 2V² + Ω²)² + 8Ω²(3Δ² − 10ΔV + 3V² + Ω²) ]^{1/2} }^{1/2}
/// ```
pub fn gap_exact(delta: f64, v: f64, omega: f64) -> Result<f64, AnalysisError> {
    let d2 = delta * delta;
    let v2 = v * v;
    let o2 = omega * omega;
    let a = 10.0 * d2 - 4.0 * delta * v + 2.0 * v2 + 5.0 * o2;
    let inner = {
        let first = 6.0 * d2 + 4.0 * delta * v - 2.0 * v2 + o2;
        first * first + 8.0 * o2 * (3.0 * d2 - 10.0 * delta * v + 3.0 * v2 + o2)
    };
    if inner < 0.0 {
        return Err(AnalysisError::NegativeRadicand(inner));
    }
    let outer = a - inner.sqrt();
    if outer < -1e-9 {
        return Err(AnalysisError::NegativeRadicand(outer));
    }
    Ok(0.5 * outer.max(0.0).sqrt())
}

/// Two-level approximation of the gap: `G ≈ √(|Δ−V|² + Ω²)`.
pub fn gap_approx(delta: f64, v: f64, omega: f64) -> f64 {
    ((delta - v) * (delta - v) + omega * omega).sqrt()
}

/// Interaction window where Stark localization of the pair breaks down:
/// `V = Δ ± Ω`.
pub fn breakdown_bounds(delta: f64, omega: f64) -> (f64, f64) {
    (delta - omega, delta + omega)
}

/// Gap formulas and breakdown window bundled for one parameter point.
#[derive(Debug, Clone, Serialize)]
pub struct GapPrediction {
    pub delta_mhz: f64,
    pub v_mhz: f64,
    pub omega_mhz: f64,
    pub exact_mhz: f64,
    pub approx_mhz: f64,
    pub breakdown_lo_mhz: f64,
    pub breakdown_hi_mhz: f64,
}

pub fn gap_prediction(delta: f64, v: f64, omega: f64) -> Result<GapPrediction, AnalysisError> {
    let (lo, hi) = breakdown_bounds(delta, omega);
    Ok(GapPrediction {
        delta_mhz: delta,
        v_mhz: v,
        omega_mhz: omega,
        exact_mhz: gap_exact(delta, v, omega)?,
        approx_mhz: gap_approx(delta, v, omega),
        breakdown_lo_mhz: lo,
        breakdown_hi_mhz: hi,
    })
}

/// Second-order rate of the interaction-activated pair transition
/// `|0,0> ↔ |1,1>` under bichromatic driving: `Ω_eff = 2|V|Ω² / |Δ² − V²|`.
pub fn pair_hopping_rate(v: f64, omega: f64, delta: f64) -> Result<f64, AnalysisError> {
    let denom = delta * delta - v * v;
    if denom.abs() < 1e-12 * delta.abs().max(1.0) {
        return Err(AnalysisError::PoleAtResonance { v, delta });
    }
    Ok(2.0 * v.abs() * omega * omega / denom.abs())
}

/// Sorted eigenvalues of the explicit three-site pair Hamiltonian
/// (sites {-1, 0, 1}, tilt Δ, uniform Ω, exchange V): the spectrum behind
/// [`gap_exact`]. The gap is `E[6] - E[4]`, the distance from the central
/// (pair-at-origin) branch to the branch above the zero cluster.
pub fn three_site_pair_spectrum(
    delta: f64,
    v: f64,
    omega: f64,
) -> Result<Vec<f64>, AnalysisError> {
    let spec = LatticeSpec::uniform_chain(-1, 1, omega, delta);
    let inter = InteractionSpec::from_v(v, C3Table::builtin())?;
    let h = hamiltonian::pair(&spec, &inter)?;
    let (evals, _) = h
        .static_part()
        .eigh(UPLO::Lower)
        .map_err(|e| AnalysisError::Linalg(e.to_string()))?;
    let mut out = evals.to_vec();
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(out)
}

/// One row of the frequency-vs-interaction scan.
#[derive(Debug, Clone, Serialize)]
pub struct ScanRow {
    pub v_mhz: f64,
    pub omega_mhz: f64,
    pub omega_err: f64,
    pub gamma_per_us: f64,
    pub gamma_err: f64,
    pub converged: bool,
}

impl ScanRow {
    /// Breakdown classification: damping above 5% of the fitted frequency.
    pub fn inside_breakdown(&self) -> bool {
        self.gamma_per_us > 0.05 * self.omega_mhz.abs()
    }
}

/// Simulate the interacting pair on `spec` for each V in the grid, fit the
/// atom-averaged `P_0(t)` with the damped-sine model, and tabulate ω and γ.
/// Fit non-convergence is recorded per row, not fatal.
pub fn frequency_vs_interaction_scan(
    spec: &LatticeSpec,
    inter_template: &InteractionSpec,
    v_grid: &[f64],
    t_final: f64,
    n_times: usize,
) -> Result<Vec<ScanRow>, AnalysisError> {
    if n_times < 16 || !(t_final > 0.0) {
        return Err(AnalysisError::BadProbe(format!(
            "scan needs t_final > 0 and at least 16 samples, got {t_final} / {n_times}"
        )));
    }
    let times: Vec<f64> =
        (0..n_times).map(|k| t_final * k as f64 / (n_times - 1) as f64).collect();
    let mut rows = Vec::with_capacity(v_grid.len());
    for &v in v_grid {
        let inter = inter_template.with_v(v);
        let h = hamiltonian::pair(spec, &inter)?;
        let psi0 = QuantumState::pair_site(h.basis(), 0, 0)?;
        let traj = propagate::evolve_static(&h, &psi0, &times)?;
        let marginals = observables::pair_site_populations(&traj)?;
        let p0 = marginals
            .site(0)
            .ok_or_else(|| AnalysisError::BadProbe("lattice has no site 0".into()))?;
        match fit::fit_damped_sine(&times, &p0) {
            Ok(f) => rows.push(row_from_fit(v, &f, true)),
            Err(FitError::DidNotConverge(f)) => rows.push(row_from_fit(v, &f, false)),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(rows)
}

fn row_from_fit(v: f64, f: &FitResult, converged: bool) -> ScanRow {
    ScanRow {
        v_mhz: v,
        omega_mhz: f.value("omega_mhz").unwrap_or(f64::NAN),
        omega_err: f.std_err("omega_mhz").unwrap_or(f64::NAN),
        gamma_per_us: f.value("gamma_per_us").unwrap_or(f64::NAN),
        gamma_err: f.std_err("gamma_per_us").unwrap_or(f64::NAN),
        converged,
    }
}

/// Result of a ring flux calibration sweep.
#[derive(Debug, Clone, Serialize)]
pub struct FluxCalibration {
    /// Wrap-phase offsets applied on top of the spec's own wrap phase.
    pub offsets_rad: Vec<f64>,
    /// Population of the site opposite the origin at the probe time.
    pub p_opposite: Vec<f64>,
    pub t_probe_us: f64,
    /// Peak of the Gaussian fit, in offset coordinates, wrapped to (-π, π].
    pub peak_offset_rad: f64,
    /// Estimated pre-existing loop flux: the offset that nulls it, negated.
    pub flux_estimate_rad: f64,
    pub sigma_rad: f64,
    pub fit: FitResult,
}

/// Calibrate the net flux of a flat ring by sweeping an additional wrap-link
/// phase over [0, 2π) and locating the transfer peak of the site opposite the
/// origin at `t_probe` (default `2/Ω`). Transfer peaks at zero total flux, so
/// the peak offset reveals the flux already present.
pub fn calibrate_flux(
    ring: &LatticeSpec,
    omega_mhz: f64,
    t_probe: Option<f64>,
    n_points: usize,
) -> Result<FluxCalibration, AnalysisError> {
    ring.validate()?;
    let flat = match ring.drive {
        Drive::Static => ring.clone(),
        Drive::Escher { detuning_mhz } if detuning_mhz == 0.0 => {
            let mut r = ring.clone();
            r.drive = Drive::Static;
            r
        }
        other => {
            return Err(AnalysisError::NotFlatRing(format!("drive {other:?} is not flat")))
        }
    };
    if flat.wrap_link().is_none() {
        return Err(AnalysisError::NotFlatRing("no wraparound link".into()));
    }
    if flat.detunings.iter().any(|&d| d != 0.0) {
        return Err(AnalysisError::NotFlatRing("per-site detunings present".into()));
    }
    if n_points < 8 {
        return Err(AnalysisError::TooFewPoints(n_points));
    }
    if !(omega_mhz > 0.0) {
        return Err(AnalysisError::BadProbe(format!("Ω = {omega_mhz} MHz")));
    }
    let t_probe = t_probe.unwrap_or(2.0 / omega_mhz);
    if !(t_probe > 0.0) || !t_probe.is_finite() {
        return Err(AnalysisError::BadProbe(format!("t_probe = {t_probe} μs")));
    }

    // probe the site diametrically opposite the origin
    let n = flat.n_sites();
    let origin_idx = flat
        .site_index(0)
        .ok_or_else(|| AnalysisError::BadProbe("ring does not contain site 0".into()))?;
    let opposite_label = flat.sites[(origin_idx + n / 2) % n];
    let wrap_key = {
        let w = flat.wrap_link().expect("checked above");
        (w.from, w.to)
    };

    let offsets: Vec<f64> = (0..n_points).map(|k| TAU * k as f64 / n_points as f64).collect();
    let mut p_opposite = Vec::with_capacity(n_points);
    for &off in &offsets {
        let mut swept = flat.clone();
        for l in swept.links.iter_mut() {
            if (l.from, l.to) == wrap_key {
                l.phase_rad = (l.phase_rad + off).rem_euclid(TAU);
            }
        }
        let h = hamiltonian::single_particle(&swept)?;
        let psi0 = QuantumState::site(h.basis(), 0)?;
        let traj = propagate::evolve_static(&h, &psi0, &[0.0, t_probe])?;
        let idx = h.basis().index_single(opposite_label).expect("label from the basis");
        p_opposite.push(traj.populations(1)[idx]);
    }

    let spread = p_opposite.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - p_opposite.iter().cloned().fold(f64::INFINITY, f64::min);
    if spread < 0.05 {
        return Err(AnalysisError::FlatResponse { spread });
    }

    // unwrap the sweep around the raw maximum and fit a Gaussian peak there
    let k0 = p_opposite
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    let half = n_points / 4;
    let mut window: Vec<(f64, f64)> = (0..n_points)
        .filter(|&k| {
            let d = (k as i64 - k0 as i64).rem_euclid(n_points as i64);
            d <= half as i64 || d >= (n_points - half) as i64
        })
        .map(|k| {
            let x = offsets[k0] + wrap_angle(offsets[k] - offsets[k0]);
            (x, p_opposite[k])
        })
        .collect();
    window.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let xs: Vec<f64> = window.iter().map(|w| w.0).collect();
    let ys: Vec<f64> = window.iter().map(|w| w.1).collect();
    let fit = fit::fit_gaussian_peak(&xs, &ys)?;
    let mu = fit.value("mu").expect("gaussian peak has mu");
    let sigma = fit.value("sigma").expect("gaussian peak has sigma").abs();
    let peak_offset_rad = wrap_angle(mu);
    Ok(FluxCalibration {
        offsets_rad: offsets,
        p_opposite,
        t_probe_us: t_probe,
        peak_offset_rad,
        flux_estimate_rad: wrap_angle(-peak_offset_rad),
        sigma_rad: sigma,
        fit,
    })
}
