//! Shared helpers for the integration tests.
//!
//! The point of this module is independence: the RK4 integrator and the
//! Bessel series below share no code with the production propagator, so
//! agreement between the two is evidence rather than tautology.

#![allow(dead_code)]

use ndarray::{Array1, Array2};
use synlat::hamiltonian::Hamiltonian;
use synlat::{C64, TAU};

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0f64, |m, (&x, &y)| m.max((x - y).abs()))
}

/// Fixed-step classical RK4 on `dψ/dt = -i 2π H(t) ψ`, deliberately a
/// different discretization from the production midpoint-exponential stepper.
pub fn rk4_evolve(h: &Hamiltonian, psi0: &Array1<C64>, t_final: f64, n_steps: usize) -> Array1<C64> {
    let dim = h.dim();
    let mut hmat = Array2::<C64>::zeros((dim, dim));
    let mut deriv = |t: f64, psi: &Array1<C64>, hmat: &mut Array2<C64>| -> Array1<C64> {
        h.eval_into(t, hmat);
        let mut out = hmat.dot(psi);
        out.mapv_inplace(|a| C64::new(0.0, -TAU) * a);
        out
    };
    let mut psi = psi0.clone();
    let dt = t_final / n_steps as f64;
    for k in 0..n_steps {
        let t = k as f64 * dt;
        let k1 = deriv(t, &psi, &mut hmat);
        let k2 = deriv(t + 0.5 * dt, &(&psi + &(&k1 * C64::from(0.5 * dt))), &mut hmat);
        let k3 = deriv(t + 0.5 * dt, &(&psi + &(&k2 * C64::from(0.5 * dt))), &mut hmat);
        let k4 = deriv(t + dt, &(&psi + &(&k3 * C64::from(dt))), &mut hmat);
        let incr = (k1 + &(k2 * C64::from(2.0)) + &(k3 * C64::from(2.0)) + k4)
            * C64::from(dt / 6.0);
        psi = &psi + &incr;
    }
    psi
}

/// `J_n(x)` from the ascending power series; good to ~1e-14 for |x| ≲ 15,
/// which covers every argument the tests use.
pub fn bessel_j(n: i32, x: f64) -> f64 {
    if n < 0 {
        let j = bessel_j(-n, x);
        return if n % 2 == 0 { j } else { -j };
    }
    let half = 0.5 * x;
    // term_0 = (x/2)^n / n!
    let mut term = 1.0f64;
    for k in 1..=n {
        term *= half / k as f64;
    }
    let mut sum = term;
    let neg_quarter_x2 = -half * half;
    for m in 1..200 {
        term *= neg_quarter_x2 / (m as f64 * (m + n) as f64);
        sum += term;
        if term.abs() < 1e-18 * sum.abs().max(1e-30) {
            break;
        }
    }
    sum
}
