//! Observables extracted from trajectories: site populations, wavepacket
//! width, pair marginals, two-particle correlations, and refocusing times.

use ndarray::Array2;
use serde::Serialize;

use crate::hamiltonian::Basis;
use crate::propagate::StateTrajectory;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ObservableError {
    #[error("observable requires a single-particle trajectory")]
    SingleBasisRequired,
    #[error("observable requires a pair trajectory")]
    PairBasisRequired,
    #[error("pair state |{0},{1}> is not in the basis")]
    UnknownPair(i32, i32),
    #[error("no refocusing on an untilted lattice (Δ = {0})")]
    NoRefocusing(f64),
    #[error("snapshot time {0} μs outside the trajectory span")]
    SnapshotOutOfRange(f64),
}

/// Per-site probability series. For pair trajectories the values are the
/// atom-averaged marginals.
#[derive(Debug, Clone)]
pub struct PopulationSeries {
    pub times: Vec<f64>,
    /// Site labels, one per column.
    pub labels: Vec<i32>,
    /// `(n_times, n_sites)` probabilities.
    pub values: Array2<f64>,
}

impl PopulationSeries {
    /// Column for a given site label.
    pub fn site(&self, label: i32) -> Option<Vec<f64>> {
        let c = self.labels.iter().position(|&l| l == label)?;
        Some(self.values.column(c).to_vec())
    }
}

/// Wavepacket width series `λ(t) = Σ_j |j| P_j(t)`.
#[derive(Debug, Clone, Serialize)]
pub struct WidthSeries {
    pub times: Vec<f64>,
    pub lambda: Vec<f64>,
}

/// Site populations `P_j(t) = |<j|ψ(t)>|²` of a single-particle trajectory.
pub fn site_populations(traj: &StateTrajectory) -> Result<PopulationSeries, ObservableError> {
    match traj.basis() {
        Basis::Single { sites } => Ok(PopulationSeries {
            times: traj.times().to_vec(),
            labels: sites.clone(),
            values: traj.population_matrix(),
        }),
        Basis::Pair { .. } => Err(ObservableError::SingleBasisRequired),
    }
}

/// Atom-averaged site marginals of a pair trajectory:
/// `P_j = ½ (Σ_b |ψ_{j,b}|² + Σ_a |ψ_{a,j}|²)`.
pub fn pair_site_populations(traj: &StateTrajectory) -> Result<PopulationSeries, ObservableError> {
    let sites = match traj.basis() {
        Basis::Pair { sites } => sites.clone(),
        Basis::Single { .. } => return Err(ObservableError::PairBasisRequired),
    };
    let n = sites.len();
    let mut values = Array2::zeros((traj.len(), n));
    for k in 0..traj.len() {
        let psi = traj.state(k);
        for a in 0..n {
            for b in 0..n {
                let p = psi[a * n + b].norm_sqr();
                values[[k, a]] += 0.5 * p;
                values[[k, b]] += 0.5 * p;
            }
        }
    }
    Ok(PopulationSeries { times: traj.times().to_vec(), labels: sites, values })
}

/// Probability series of one ordered pair state, e.g. `P_00(t)`.
pub fn pair_state_population(
    traj: &StateTrajectory,
    i: i32,
    j: i32,
) -> Result<Vec<f64>, ObservableError> {
    let idx = match traj.basis() {
        Basis::Pair { .. } => {
            traj.basis().index_pair(i, j).ok_or(ObservableError::UnknownPair(i, j))?
        }
        Basis::Single { .. } => return Err(ObservableError::PairBasisRequired),
    };
    Ok((0..traj.len()).map(|k| traj.state(k)[idx].norm_sqr()).collect())
}

/// Width `λ(t) = Σ_j |j| P_j(t)`; for an initial state at the origin this is
/// bounded by `max_j |j|`.
pub fn wavepacket_width(pops: &PopulationSeries) -> WidthSeries {
    let lambda = pops
        .values
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .zip(&pops.labels)
                .map(|(&p, &j)| p * j.abs() as f64)
                .sum()
        })
        .collect();
    WidthSeries { times: pops.times.clone(), lambda }
}

/// Joint two-particle distribution at one snapshot time.
#[derive(Debug, Clone)]
pub struct CorrelationSnapshot {
    pub requested_us: f64,
    /// Grid time actually used (nearest output point; no interpolation).
    pub grid_us: f64,
    pub grid_index: usize,
    /// Whether the requested time was on the grid (to 1e-9 μs).
    pub exact: bool,
    pub labels: Vec<i32>,
    /// `C_ij = |<i,j|ψ>|²` with row = first atom, column = second.
    pub matrix: Array2<f64>,
}

/// Correlation matrices `C_ij` at the requested times. Times off the output
/// grid are not interpolated: the nearest grid point is used and flagged.
pub fn pair_correlations(
    traj: &StateTrajectory,
    at_times: &[f64],
) -> Result<Vec<CorrelationSnapshot>, ObservableError> {
    let sites = match traj.basis() {
        Basis::Pair { sites } => sites.clone(),
        Basis::Single { .. } => return Err(ObservableError::PairBasisRequired),
    };
    let n = sites.len();
    let times = traj.times();
    let span = (times[0], *times.last().unwrap());
    let mut out = Vec::with_capacity(at_times.len());
    for &want in at_times {
        if want < span.0 - 1e-9 || want > span.1 + 1e-9 {
            return Err(ObservableError::SnapshotOutOfRange(want));
        }
        let (idx, &grid_t) = times
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                (**a - want).abs().partial_cmp(&(**b - want).abs()).unwrap()
            })
            .expect("non-empty grid");
        let psi = traj.state(idx);
        let mut matrix = Array2::zeros((n, n));
        for a in 0..n {
            for b in 0..n {
                matrix[[a, b]] = psi[a * n + b].norm_sqr();
            }
        }
        out.push(CorrelationSnapshot {
            requested_us: want,
            grid_us: grid_t,
            grid_index: idx,
            exact: (grid_t - want).abs() < 1e-9,
            labels: sites.clone(),
            matrix,
        });
    }
    Ok(out)
}

/// Bloch-oscillation refocusing time of a tilted lattice: `t_r = 1/|Δ|` μs
/// for `Δ` in MHz. An untilted lattice never refocuses.
pub fn refocusing_time(delta_mhz: f64) -> Result<f64, ObservableError> {
    if delta_mhz == 0.0 || !delta_mhz.is_finite() {
        return Err(ObservableError::NoRefocusing(delta_mhz));
    }
    Ok(1.0 / delta_mhz.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::{pair, single_particle};
    use crate::lattice::{C3Table, InteractionSpec, LatticeSpec};
    use crate::propagate::{evolve_static, QuantumState};

    fn pair_traj() -> StateTrajectory {
        let spec = LatticeSpec::uniform_chain(-1, 1, 0.8, 0.3);
        let inter = InteractionSpec::from_v(0.5, C3Table::builtin()).unwrap();
        let h = pair(&spec, &inter).unwrap();
        let psi0 = QuantumState::pair_site(h.basis(), 0, 0).unwrap();
        let times: Vec<f64> = (0..=16).map(|k| k as f64 * 0.125).collect();
        evolve_static(&h, &psi0, &times).unwrap()
    }

    #[test]
    fn marginals_sum_to_one_and_match_joint() {
        let traj = pair_traj();
        let marg = pair_site_populations(&traj).unwrap();
        let snaps = pair_correlations(&traj, traj.times()).unwrap();
        for (k, snap) in snaps.iter().enumerate() {
            let total: f64 = marg.values.row(k).sum();
            assert!((total - 1.0).abs() < 1e-12);
            for (c, &label) in marg.labels.iter().enumerate() {
                let a = snap.labels.iter().position(|&l| l == label).unwrap();
                let from_joint: f64 =
                    0.5 * (snap.matrix.row(a).sum() + snap.matrix.column(a).sum());
                assert!((marg.values[[k, c]] - from_joint).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn width_is_bounded_by_edge() {
        let spec = LatticeSpec::uniform_chain(-4, 4, 0.9, 0.0);
        let h = single_particle(&spec).unwrap();
        let psi0 = QuantumState::site(h.basis(), 0).unwrap();
        let times: Vec<f64> = (0..=40).map(|k| k as f64 * 0.1).collect();
        let traj = evolve_static(&h, &psi0, &times).unwrap();
        let width = wavepacket_width(&site_populations(&traj).unwrap());
        assert!(width.lambda[0].abs() < 1e-12);
        assert!(width.lambda.iter().all(|&l| l >= 0.0 && l <= 4.0 + 1e-12));
        // ballistic spread puts weight away from the origin
        assert!(width.lambda.iter().cloned().fold(0.0f64, f64::max) > 1.0);
    }

    #[test]
    fn pair_state_population_picks_one_index() {
        let traj = pair_traj();
        let p00 = pair_state_population(&traj, 0, 0).unwrap();
        assert!((p00[0] - 1.0).abs() < 1e-12);
        let idx = traj.basis().index_pair(0, 0).unwrap();
        for (k, &p) in p00.iter().enumerate() {
            assert!((p - traj.state(k)[idx].norm_sqr()).abs() < 1e-15);
        }
        assert!(matches!(
            pair_state_population(&traj, 5, 0),
            Err(ObservableError::UnknownPair(5, 0))
        ));
    }

    #[test]
    fn snapshots_refuse_interpolation() {
        let traj = pair_traj(); // grid spacing 0.125
        let snaps = pair_correlations(&traj, &[0.25, 0.3]).unwrap();
        assert!(snaps[0].exact);
        assert_eq!(snaps[0].grid_index, 2);
        assert!(!snaps[1].exact);
        assert!((snaps[1].grid_us - 0.25).abs() < 1e-12 || (snaps[1].grid_us - 0.375).abs() < 1e-12);
        assert!(matches!(
            pair_correlations(&traj, &[99.0]),
            Err(ObservableError::SnapshotOutOfRange(_))
        ));
    }

    #[test]
    fn basis_kind_is_enforced() {
        let spec = LatticeSpec::uniform_chain(-1, 1, 0.8, 0.0);
        let h = single_particle(&spec).unwrap();
        let psi0 = QuantumState::site(h.basis(), 0).unwrap();
        let traj = evolve_static(&h, &psi0, &[0.0, 0.5]).unwrap();
        assert!(matches!(pair_site_populations(&traj), Err(ObservableError::PairBasisRequired)));
        assert!(matches!(pair_correlations(&traj, &[0.0]), Err(ObservableError::PairBasisRequired)));
        assert!(site_populations(&traj).is_ok());
        assert!(matches!(
            site_populations(&pair_traj()),
            Err(ObservableError::SingleBasisRequired)
        ));
    }

    #[test]
    fn refocusing_inverse_detuning() {
        assert!((refocusing_time(0.4).unwrap() - 2.5).abs() < 1e-15);
        assert!((refocusing_time(-0.8).unwrap() - 1.25).abs() < 1e-15);
        assert!(matches!(refocusing_time(0.0), Err(ObservableError::NoRefocusing(_))));
    }
}
