//! Hamiltonian assembly for single particles and interacting pairs.
//!
//! A [`Hamiltonian`] is a static Hermitian part plus a list of [`DriveTerm`]s,
//! each a fixed matrix `M` with a scalar modulation `f(t)`:
//!
//! ```text
//! H(t) = S + Σ_k  f_k(t) M_k + conj(f_k(t)) M_k†
//! ```
//!
//! so `H(t)` is Hermitian for any modulation. Energies are frequencies in
//! MHz (`ν = E/h`), and all builders follow the convention that a link
//! `from -> to` puts `(Ω/2)·e^{iφ}` on the element `<to|H|from>`.

use ndarray::Array2;
use num_complex::Complex64 as C64;

use crate::lattice::{Drive, InteractionSpec, LabFrameSpec, LatticeError, LatticeSpec};
use crate::TAU;

/// Basis of the Hilbert space: site labels for one particle, or ordered pairs
/// of labels for two. Pair index `(a, b)` flattens to `a * n + b`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Basis {
    Single { sites: Vec<i32> },
    Pair { sites: Vec<i32> },
}

impl Basis {
    pub fn single(sites: Vec<i32>) -> Self {
        Basis::Single { sites }
    }

    pub fn pair(sites: Vec<i32>) -> Self {
        Basis::Pair { sites }
    }

    pub fn sites(&self) -> &[i32] {
        match self {
            Basis::Single { sites } | Basis::Pair { sites } => sites,
        }
    }

    pub fn n_sites(&self) -> usize {
        self.sites().len()
    }

    pub fn dim(&self) -> usize {
        let n = self.n_sites();
        match self {
            Basis::Single { .. } => n,
            Basis::Pair { .. } => n * n,
        }
    }

    pub fn is_pair(&self) -> bool {
        matches!(self, Basis::Pair { .. })
    }

    /// Position of a site label within the site list.
    pub fn site_index(&self, label: i32) -> Option<usize> {
        self.sites().iter().position(|&s| s == label)
    }

    /// Basis index of a single-particle state |j>.
    pub fn index_single(&self, j: i32) -> Option<usize> {
        match self {
            Basis::Single { .. } => self.site_index(j),
            Basis::Pair { .. } => None,
        }
    }

    /// Basis index of a pair state |i, j> (first atom at i, second at j).
    pub fn index_pair(&self, i: i32, j: i32) -> Option<usize> {
        match self {
            Basis::Single { .. } => None,
            Basis::Pair { .. } => {
                let n = self.n_sites();
                let a = self.site_index(i)?;
                let b = self.site_index(j)?;
                Some(a * n + b)
            }
        }
    }

    /// Labels of a pair basis index.
    pub fn pair_labels(&self, idx: usize) -> Option<(i32, i32)> {
        match self {
            Basis::Single { .. } => None,
            Basis::Pair { sites } => {
                let n = sites.len();
                if idx >= n * n {
                    return None;
                }
                Some((sites[idx / n], sites[idx % n]))
            }
        }
    }
}

/// Scalar modulation of a drive term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Modulation {
    /// `f(t) = exp(-i (2π ν t + φ))`, ν in MHz.
    Phase { freq_mhz: f64, phase_rad: f64 },
    /// `f(t) = cos(2π ν t + φ)`.
    Cosine { freq_mhz: f64, phase_rad: f64 },
}

impl Modulation {
    pub fn eval(&self, t: f64) -> C64 {
        match *self {
            Modulation::Phase { freq_mhz, phase_rad } => {
                C64::from_polar(1.0, -(TAU * freq_mhz * t + phase_rad))
            }
            Modulation::Cosine { freq_mhz, phase_rad } => {
                C64::new((TAU * freq_mhz * t + phase_rad).cos(), 0.0)
            }
        }
    }

    /// Modulation frequency magnitude, for step-size heuristics.
    pub fn freq_mhz(&self) -> f64 {
        match *self {
            Modulation::Phase { freq_mhz, .. } | Modulation::Cosine { freq_mhz, .. } => {
                freq_mhz.abs()
            }
        }
    }
}

/// One time-dependent term `f(t) M + conj(f(t)) M†`.
#[derive(Debug, Clone)]
pub struct DriveTerm {
    matrix: Array2<C64>,
    adjoint: Array2<C64>,
    pub modulation: Modulation,
}

impl DriveTerm {
    pub fn new(matrix: Array2<C64>, modulation: Modulation) -> Self {
        let adjoint = matrix.t().mapv(|a| a.conj());
        Self { matrix, adjoint, modulation }
    }

    pub fn matrix(&self) -> &Array2<C64> {
        &self.matrix
    }
}

/// Static part plus drive terms on a fixed basis.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    basis: Basis,
    static_part: Array2<C64>,
    drives: Vec<DriveTerm>,
}

impl Hamiltonian {
    pub(crate) fn new(basis: Basis, static_part: Array2<C64>, drives: Vec<DriveTerm>) -> Self {
        let d = basis.dim();
        assert_eq!(static_part.dim(), (d, d), "static part shape");
        for term in &drives {
            assert_eq!(term.matrix.dim(), (d, d), "drive term shape");
        }
        let h = Self { basis, static_part, drives };
        debug_assert!(h.hermiticity_error(0.37) < 1e-12 * (1.0 + h.scale()));
        h
    }

    pub fn basis(&self) -> &Basis {
        &self.basis
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn static_part(&self) -> &Array2<C64> {
        &self.static_part
    }

    pub fn drive_terms(&self) -> &[DriveTerm] {
        &self.drives
    }

    pub fn is_static(&self) -> bool {
        self.drives.is_empty()
    }

    /// Largest modulation frequency over all drive terms, MHz.
    pub fn max_drive_freq(&self) -> f64 {
        self.drives.iter().map(|d| d.modulation.freq_mhz()).fold(0.0, f64::max)
    }

    /// `H(t)` as a dense matrix.
    pub fn eval(&self, t: f64) -> Array2<C64> {
        let mut out = Array2::zeros(self.static_part.raw_dim());
        self.eval_into(t, &mut out);
        out
    }

    /// `H(t)` written into a caller-owned buffer (hot path of the stepper).
    pub fn eval_into(&self, t: f64, out: &mut Array2<C64>) {
        out.assign(&self.static_part);
        for term in &self.drives {
            let f = term.modulation.eval(t);
            let fc = f.conj();
            ndarray::Zip::from(&mut *out)
                .and(&term.matrix)
                .and(&term.adjoint)
                .for_each(|o, &m, &a| *o += f * m + fc * a);
        }
    }

    /// Max-abs deviation of `H(t)` from its own adjoint.
    pub fn hermiticity_error(&self, t: f64) -> f64 {
        let h = self.eval(t);
        let mut worst = 0.0f64;
        for a in 0..h.nrows() {
            for b in a..h.ncols() {
                worst = worst.max((h[[a, b]] - h[[b, a]].conj()).norm());
            }
        }
        worst
    }

    /// Upper bound on `max_t ||H(t)||` (worst-case row sum with `|f| <= 1`);
    /// used to size propagation steps.
    pub fn scale(&self) -> f64 {
        let d = self.dim();
        let mut worst = 0.0f64;
        for a in 0..d {
            let mut row = 0.0;
            for b in 0..d {
                row += self.static_part[[a, b]].norm();
                for term in &self.drives {
                    row += term.matrix[[a, b]].norm() + term.adjoint[[a, b]].norm();
                }
            }
            worst = worst.max(row);
        }
        worst
    }
}

/// Single-particle Hamiltonian of a lattice spec.
///
/// Static drive: `H[j][j] = Δ_j`, `H[to][from] = (Ω/2) e^{iφ}` per link.
/// Escher drive: uniform tilt `j·Δ` on the diagonal, static chain links, and
/// the wraparound link modulated at `N·Δ` (N sites) — the per-link drive
/// detuning accumulated once around the loop.
/// Bichromatic drive: delegates to [`rotating_frame`].
pub fn single_particle(spec: &LatticeSpec) -> Result<Hamiltonian, LatticeError> {
    spec.validate()?;
    if let Drive::Bichromatic { .. } = spec.drive {
        return rotating_frame(spec);
    }
    let basis = Basis::single(spec.sites.clone());
    let n = basis.dim();
    let mut s: Array2<C64> = Array2::zeros((n, n));
    let mut drives = Vec::new();

    let diag: Vec<f64> = match spec.drive {
        Drive::Escher { detuning_mhz } => {
            spec.sites.iter().map(|&j| j as f64 * detuning_mhz).collect()
        }
        _ => spec.detunings.clone(),
    };
    for (a, &d) in diag.iter().enumerate() {
        s[[a, a]] = C64::new(d, 0.0);
    }

    let wrap_key = spec.wrap_link().map(|l| (l.from.min(l.to), l.from.max(l.to)));
    for link in &spec.links {
        let a = basis.site_index(link.from).expect("validated");
        let b = basis.site_index(link.to).expect("validated");
        let amp = C64::from_polar(0.5 * link.rabi_mhz, link.phase_rad.rem_euclid(TAU));
        let is_wrap = wrap_key == Some((link.from.min(link.to), link.from.max(link.to)));
        match (spec.drive, is_wrap) {
            (Drive::Escher { detuning_mhz }, true) => {
                // Modulated wraparound hop: amplitude on <to|..|from> with the
                // phase convention of the static limit. The signed frequency
                // ±N·Δ makes the wrap one more ±Δ staircase step in the tilted
                // frame — every hop around the loop then rotates at the same
                // e^{+i2πΔt}, which is what makes the staircase continuous.
                // For the stored direction j_max -> j_min this is −N·Δ,
                // i.e. <j_max|H|j_min> ∝ e^{-i 2π NΔ t}.
                let mut m: Array2<C64> = Array2::zeros((n, n));
                m[[b, a]] = amp;
                let sign = if link.to > link.from { 1.0 } else { -1.0 };
                drives.push(DriveTerm::new(
                    m,
                    Modulation::Phase {
                        freq_mhz: sign * spec.n_sites() as f64 * detuning_mhz,
                        phase_rad: 0.0,
                    },
                ));
            }
            _ => {
                s[[b, a]] += amp;
                s[[a, b]] += amp.conj();
            }
        }
    }
    Ok(Hamiltonian::new(basis, s, drives))
}

/// Rotating-frame Hamiltonian of a bichromatically driven lattice: no static
/// part at all, every link carrying `Ω_j e^{iφ_j}` under a global `cos(2πΔt)`.
pub fn rotating_frame(spec: &LatticeSpec) -> Result<Hamiltonian, LatticeError> {
    spec.validate()?;
    let detuning = match spec.drive {
        Drive::Bichromatic { detuning_mhz } => detuning_mhz,
        _ => {
            return Err(LatticeError::DriveForbidsTilt { drive: "rotating-frame requires bichromatic" })
        }
    };
    let basis = Basis::single(spec.sites.clone());
    let n = basis.dim();
    let s: Array2<C64> = Array2::zeros((n, n));
    // Both tones survive the frame transform as a real cosine at Δ with the
    // full Ω (two tones of Ω/2 each... each tone has strength Ω, the pair
    // collapses to 2·(Ω/2)·cos = Ω·cos on the hop element).
    let mut m: Array2<C64> = Array2::zeros((n, n));
    for link in &spec.links {
        let a = basis.site_index(link.from).expect("validated");
        let b = basis.site_index(link.to).expect("validated");
        m[[b, a]] += C64::from_polar(link.rabi_mhz, link.phase_rad.rem_euclid(TAU));
    }
    let drives = vec![DriveTerm::new(
        m,
        Modulation::Cosine { freq_mhz: detuning, phase_rad: 0.0 },
    )];
    Ok(Hamiltonian::new(basis, s, drives))
}

/// Two-particle Hamiltonian: each atom carries the single-particle terms, and
/// ordered pair states exchange as `<i,j|H|j,i> = V_ij` from the interaction
/// spec. Pairs without a tabulated coefficient do not exchange.
pub fn pair(spec: &LatticeSpec, inter: &InteractionSpec) -> Result<Hamiltonian, LatticeError> {
    let single = single_particle(spec)?;
    let n = single.dim();
    let basis = Basis::pair(spec.sites.clone());
    let d = basis.dim();

    let lift_a = |m: &Array2<C64>| -> Array2<C64> {
        let mut out = Array2::zeros((d, d));
        for a in 0..n {
            for b in 0..n {
                let v = m[[a, b]];
                if v != C64::new(0.0, 0.0) {
                    for k in 0..n {
                        out[[a * n + k, b * n + k]] += v;
                    }
                }
            }
        }
        out
    };
    let lift_b = |m: &Array2<C64>| -> Array2<C64> {
        let mut out = Array2::zeros((d, d));
        for a in 0..n {
            for b in 0..n {
                let v = m[[a, b]];
                if v != C64::new(0.0, 0.0) {
                    for k in 0..n {
                        out[[k * n + a, k * n + b]] += v;
                    }
                }
            }
        }
        out
    };

    let mut s = lift_a(single.static_part()) + lift_b(single.static_part());
    for (&(i, j), _) in inter.c3().iter() {
        let (a, b) = match (basis.site_index(i), basis.site_index(j)) {
            (Some(a), Some(b)) => (a, b),
            _ => continue, // pair involves a state outside this lattice
        };
        let v = C64::new(inter.v_between(i, j), 0.0);
        s[[a * n + b, b * n + a]] += v;
        s[[b * n + a, a * n + b]] += v;
    }

    let drives = single
        .drive_terms()
        .iter()
        .flat_map(|term| {
            [
                DriveTerm::new(lift_a(term.matrix()), term.modulation),
                DriveTerm::new(lift_b(term.matrix()), term.modulation),
            ]
        })
        .collect();

    Ok(Hamiltonian::new(basis, s, drives))
}

/// Lab-frame Hamiltonian of the bichromatically driven ladder: bare energies
/// on the diagonal, each upward hop `|j+1><j|` driven by two tones at
/// `ω_j ± Δ` with amplitude `Ω/2` each.
pub fn lab_frame(spec: &LabFrameSpec) -> Result<Hamiltonian, LatticeError> {
    spec.validate()?;
    let n = spec.n_levels();
    let basis = Basis::single((0..n as i32).collect());
    let mut s: Array2<C64> = Array2::zeros((n, n));
    for (a, &e) in spec.bare_energies_mhz.iter().enumerate() {
        s[[a, a]] = C64::new(e, 0.0);
    }
    let mut drives = Vec::with_capacity(2 * (n - 1));
    for (j, w) in spec.transition_frequencies().into_iter().enumerate() {
        let mut m: Array2<C64> = Array2::zeros((n, n));
        m[[j + 1, j]] = C64::new(0.5 * spec.rabi_mhz, 0.0);
        for freq in [w + spec.detuning_mhz, w - spec.detuning_mhz] {
            drives.push(DriveTerm::new(m.clone(), Modulation::Phase { freq_mhz: freq, phase_rad: 0.0 }));
        }
    }
    Ok(Hamiltonian::new(basis, s, drives))
}
