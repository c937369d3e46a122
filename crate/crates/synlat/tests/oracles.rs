//! Cross-checks of the production solvers against independent references:
//! a fixed-step RK4 integrator and Bessel-series closed forms for walks on
//! ideal (edge-free) lattices.

mod common;

use common::{bessel_j, linspace, rk4_evolve};
use synlat::hamiltonian::{self};
use synlat::lattice::{C3Table, InteractionSpec, LatticeSpec};
use synlat::observables;
use synlat::propagate::{evolve_static, evolve_timedep, QuantumState};
use synlat::{C64, TAU};

fn max_amp_diff(a: &ndarray::Array1<C64>, b: &ndarray::Array1<C64>) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).norm()))
}

#[test]
fn stepper_matches_rk4_on_escher_ring() {
    let spec = LatticeSpec::escher_ring(-2, 2, 0.9, 0.45, 0.0);
    let h = hamiltonian::single_particle(&spec).unwrap();
    let psi0 = QuantumState::site(h.basis(), 0).unwrap();
    let t_final = 2.0;

    let traj = evolve_timedep(&h, &psi0, &[0.0, t_final], 1e-10).unwrap();
    let reference = rk4_evolve(&h, psi0.amplitudes(), t_final, 200_000);

    let diff = max_amp_diff(traj.state(1), &reference);
    assert!(diff < 1e-6, "stepper vs RK4 amplitude diff {diff:.3e}");
}

#[test]
fn stepper_matches_rk4_on_bichromatic_pair() {
    let spec = LatticeSpec::bichromatic_chain(-1, 1, 0.9, 5.0);
    let inter = InteractionSpec::from_v(0.8, C3Table::builtin()).unwrap();
    let h = hamiltonian::pair(&spec, &inter).unwrap();
    let psi0 = QuantumState::pair_site(h.basis(), 0, 0).unwrap();
    let t_final = 1.0;

    let traj = evolve_timedep(&h, &psi0, &[0.0, t_final], 1e-10).unwrap();
    let reference = rk4_evolve(&h, psi0.amplitudes(), t_final, 400_000);

    let diff = max_amp_diff(traj.state(1), &reference);
    assert!(diff < 1e-6, "stepper vs RK4 amplitude diff {diff:.3e}");
}

#[test]
fn static_solver_matches_rk4_on_fluxed_ring() {
    // Complex Hermitian static matrix: the wrap phase makes the eigenbasis
    // genuinely complex, so this exercises more than the real-symmetric path.
    let spec = LatticeSpec::flat_ring(-2, 2, 0.9, std::f64::consts::FRAC_PI_3);
    let h = hamiltonian::single_particle(&spec).unwrap();
    let psi0 = QuantumState::site(h.basis(), 0).unwrap();
    let t_final = 1.7;

    let traj = evolve_static(&h, &psi0, &[0.0, t_final]).unwrap();
    let reference = rk4_evolve(&h, psi0.amplitudes(), t_final, 100_000);

    let diff = max_amp_diff(traj.state(1), &reference);
    assert!(diff < 1e-8, "static solver vs RK4 amplitude diff {diff:.3e}");
}

/// Continuum quantum walk: on an edge-free chain the site populations are
/// `P_j(t) = J_j(2π Ω t)²`. The chain is wide enough that the truncation
/// error at the tested times is far below the tolerance. This pins the
/// Ω/2 hopping convention and the 2π in the propagator at once.
#[test]
fn quantum_walk_populations_match_bessel() {
    let omega = 0.45;
    let spec = LatticeSpec::uniform_chain(-16, 16, omega, 0.0);
    let h = hamiltonian::single_particle(&spec).unwrap();
    let psi0 = QuantumState::site(h.basis(), 0).unwrap();
    let times = [0.0, 0.5, 1.0, 2.0];
    let traj = evolve_static(&h, &psi0, &times).unwrap();

    for (k, &t) in times.iter().enumerate() {
        let pops = traj.populations(k);
        let arg = TAU * omega * t;
        for j in -10..=10i32 {
            let idx = h.basis().index_single(j).unwrap();
            let expected = bessel_j(j, arg).powi(2);
            let got = pops[idx];
            assert!(
                (got - expected).abs() < 1e-9,
                "P_{j}({t}) = {got:.12} vs Bessel {expected:.12}"
            );
        }
    }
}

/// Tilted edge-free chain: Wannier-Stark breathing with
/// `P_j(t) = J_j(ζ)²`, `ζ(t) = (2Ω/Δ) sin(π Δ t)`, hence
/// `λ(t) = Σ_j |j| J_j(ζ(t))²` and an exact refocus at t = 1/Δ.
#[test]
fn tilted_walk_width_matches_bessel_breathing() {
    let (omega, delta) = (0.45, 0.8);
    let spec = LatticeSpec::uniform_chain(-16, 16, omega, delta);
    let h = hamiltonian::single_particle(&spec).unwrap();
    let psi0 = QuantumState::site(h.basis(), 0).unwrap();
    let times = linspace(0.0, 2.5, 51);
    let traj = evolve_static(&h, &psi0, &times).unwrap();
    let pops = observables::site_populations(&traj).unwrap();
    let width = observables::wavepacket_width(&pops);

    for (k, &t) in times.iter().enumerate() {
        let zeta = (2.0 * omega / delta) * (std::f64::consts::PI * delta * t).sin();
        let expected: f64 =
            (-16..=16i32).map(|j| j.abs() as f64 * bessel_j(j, zeta).powi(2)).sum();
        let got = width.lambda[k];
        assert!(
            (got - expected).abs() < 1e-9,
            "λ({t}) = {got:.12} vs Bessel {expected:.12}"
        );
    }

    // exact revival one Bloch period in
    let k_rev = times.iter().position(|&t| (t - 1.0 / delta).abs() < 1e-12).unwrap();
    assert!(width.lambda[k_rev] < 1e-9, "width at t = 1/Δ: {:.3e}", width.lambda[k_rev]);
}

/// The escher staircase has an exact solution: in the tilted frame every hop
/// around the loop (wraparound included) carries the same e^{i 2π Δ t}, so a
/// uniform gauge puts a linearly growing flux through the ring — the
/// induction picture. Plane waves |k> then stay eigenstates at all times with
/// E_k(t) = Ω cos(2πΔt − 2πk/N), which integrates to
/// φ_k(t) = (Ω/Δ)[sin(2πΔt − 2πk/N) + sin(2πk/N)].
/// This pins the sign of the wraparound modulation: with the wrong sign the
/// wrap rotates at (2N−1)Δ and the ring degenerates to an open chain.
#[test]
fn escher_ring_matches_induction_closed_form() {
    let (omega, delta) = (0.9, 0.45);
    let spec = LatticeSpec::escher_ring(-3, 4, omega, delta, 0.0);
    let h = hamiltonian::single_particle(&spec).unwrap();
    let psi0 = QuantumState::site(h.basis(), 0).unwrap();
    let times = linspace(0.0, 4.0, 17);
    let traj = evolve_timedep(&h, &psi0, &times, 1e-10).unwrap();

    let n = 8usize;
    let p0_loop = 3; // site 0 sits at loop position label + 3
    for (step, &t) in times.iter().enumerate() {
        let pops = traj.populations(step);
        for (idx, &label) in spec.sites.iter().enumerate() {
            let p_loop = (label + 3) as usize;
            let mut amp = C64::new(0.0, 0.0);
            for k in 0..n {
                let kk = TAU * k as f64 / n as f64;
                let phi = (omega / delta) * ((TAU * delta * t - kk).sin() + kk.sin());
                let bloch = kk * (p_loop as f64 - p0_loop as f64);
                amp += C64::from_polar(1.0, bloch - phi);
            }
            amp /= C64::from(n as f64);
            let expected = amp.norm_sqr();
            let got = pops[idx];
            assert!(
                (got - expected).abs() < 1e-7,
                "P_{label}({t}) = {got:.9} vs closed form {expected:.9}"
            );
        }
    }
}

fn pair_return_fit(delta: f64, omega: f64, v: f64, times: &[f64]) -> synlat::fit::FitResult {
    let spec = LatticeSpec::uniform_chain(-4, 4, omega, delta);
    let inter = InteractionSpec::from_v(v, C3Table::builtin()).unwrap();
    let h = hamiltonian::pair(&spec, &inter).unwrap();
    let psi0 = QuantumState::pair_site(h.basis(), 0, 0).unwrap();
    let traj = evolve_static(&h, &psi0, times).unwrap();
    let marginals = observables::pair_site_populations(&traj).unwrap();
    let p0 = marginals.site(0).unwrap();
    synlat::fit::fit_damped_sine(times, &p0).unwrap()
}

/// Interacting pair: at weak V the averaged return probability oscillates at
/// the detuning-shifted gap √(|Δ−V|² + Ω²) and revives almost fully; at
/// V ≈ Δ the revivals collapse and the fitted damping rate jumps by an order
/// of magnitude.
#[test]
fn pair_return_fit_recovers_shifted_gap() {
    let (delta, omega) = (0.8, 0.45);
    let times = linspace(0.0, 4.0, 161);

    let weak = pair_return_fit(delta, omega, 0.34, &times);
    let expected = ((delta - 0.34f64).powi(2) + omega * omega).sqrt();
    let w = weak.value("omega_mhz").unwrap();
    let g_weak = weak.value("gamma_per_us").unwrap();
    assert!(
        (w - expected).abs() / expected < 0.10,
        "fitted ω = {w:.4} vs √(|Δ−V|²+Ω²) = {expected:.4}"
    );
    assert!(g_weak.abs() < 0.15, "weak-V damping should be small, got γ = {g_weak:.4} μs⁻¹");

    // resonant pair: no revival, strong damping
    let resonant = pair_return_fit(delta, omega, 0.75, &times);
    let g_res = resonant.value("gamma_per_us").unwrap();
    assert!(
        g_res > 5.0 * g_weak.abs().max(0.02),
        "expected breakdown damping ≫ weak-V damping, got {g_res:.4} vs {g_weak:.4} μs⁻¹"
    );
}
