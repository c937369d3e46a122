//! Simulation and analysis of synthetic lattices built from driven multi-level
//! systems: single-particle quantum walks and Bloch oscillations, flux-threaded
//! rings with and without a synthetic tilt, and dipolar-exchange pair dynamics.
//!
//! # Conventions
//!
//! All energies are quoted as frequencies, nu = E / h, in MHz; time is in
//! microseconds. Propagators therefore carry an explicit 2π:
//! `U(t) = exp(-i 2π H t)` with `H` in MHz and `t` in μs. A state detuned by
//! `Δ` MHz accumulates phase `2π Δ t`, and a tilted lattice refocuses at
//! `t_r = 1/Δ` μs.
//!
//! Site labels are the (consecutive, possibly negative) integers of the
//! synthetic dimension, e.g. `-4 ..= 4` for a nine-site chain. Basis indices
//! are the corresponding 0-based positions; conversions live on [`hamiltonian::Basis`].
//!
//! Phases on hopping links are stored in radians and reduced mod 2π where
//! they are consumed; the flux through a ring is the directed sum of link
//! phases around the loop.

pub mod analysis;
pub mod fit;
pub mod hamiltonian;
pub mod lattice;
pub mod observables;
pub mod propagate;
pub mod spam;

pub use num_complex::Complex64 as C64;

/// 2π, the angular-frequency conversion used throughout.
pub const TAU: f64 = std::f64::consts::TAU;
