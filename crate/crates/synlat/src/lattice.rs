//! Lattice descriptions: site ranges, hopping links, drive schemes, and the
//! dipolar-exchange interaction table.
//!
//! A [`LatticeSpec`] is a declarative description of a synthetic lattice; the
//! builders in [`crate::hamiltonian`] turn it into a concrete Hamiltonian.
//! Specs are plain data and round-trip through serde unchanged, so they double
//! as the on-disk configuration format.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;

use crate::TAU;

/// Errors arising from malformed lattice descriptions.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LatticeError {
    #[error("site list must be non-empty consecutive integers, got {0:?}")]
    BadSites(Vec<i32>),
    #[error("expected {expected} per-site detunings, got {got}")]
    DetuningCount { expected: usize, got: usize },
    #[error("link {from} -> {to} does not connect adjacent sites")]
    NonAdjacentLink { from: i32, to: i32 },
    #[error("duplicate link between {a} and {b}")]
    DuplicateLink { a: i32, b: i32 },
    #[error("link {from} -> {to} references a site outside the lattice")]
    UnknownSite { from: i32, to: i32 },
    #[error("negative Rabi rate {0} MHz on a link")]
    NegativeRabi(f64),
    #[error("open boundary cannot carry a wraparound link")]
    WrapOnOpenChain,
    #[error("periodic boundary requires exactly one wraparound link")]
    MissingWrapLink,
    #[error("{drive} drive requires all per-site detunings to be zero (the tilt comes from the drive)")]
    DriveForbidsTilt { drive: &'static str },
    #[error("escher drive requires a periodic boundary")]
    EscherNeedsRing,
    #[error("interaction table has no reference entry for the {{0,-1}} pair")]
    MissingReferencePair,
    #[error("invalid pair separation {0} μm")]
    BadSeparation(f64),
    #[error("C3 table parse error at line {line}: {msg}")]
    C3Parse { line: usize, msg: String },
    #[error("lab-frame description needs at least two levels, got {0}")]
    TooFewLevels(usize),
    #[error("lab-frame Rabi rate must be non-negative, got {0}")]
    BadLabRabi(f64),
}

/// Boundary condition of the synthetic chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
    Periodic,
}

/// How the hopping links are driven.
///
/// * `Static`: every link is resonant; the spec's per-site detunings enter the
///   diagonal as written. Produces a time-independent Hamiltonian.
/// * `Escher { detuning_mhz }`: ring staircase. All sites acquire a uniform
///   synthetic tilt `j·Δ` from detuned drive tones, and the single wraparound
///   link is modulated at `N·Δ` (N sites, signed by the link direction) so it
///   acts as one more `Δ` step — every hop around the loop then costs the
///   same energy and the staircase never ends.
/// * `Bichromatic { detuning_mhz }`: every link is driven by two tones at
///   `ω_j ± Δ`, both detuned; no static hopping survives and pair dynamics are
///   carried by interaction-assisted processes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Drive {
    Static,
    Escher { detuning_mhz: f64 },
    Bichromatic { detuning_mhz: f64 },
}

impl Drive {
    pub fn is_static(&self) -> bool {
        matches!(self, Drive::Static)
    }
}

/// One hopping link `from -> to` with amplitude `rabi_mhz / 2` and phase
/// `phase_rad` on the matrix element `<to|H|from>`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Link {
    pub from: i32,
    pub to: i32,
    pub rabi_mhz: f64,
    /// Hopping phase in radians; consumers reduce it mod 2π.
    #[serde(default)]
    pub phase_rad: f64,
}

impl Link {
    pub fn new(from: i32, to: i32, rabi_mhz: f64, phase_rad: f64) -> Self {
        Self { from, to, rabi_mhz, phase_rad: phase_rad.rem_euclid(TAU) }
    }

    /// Unordered site pair, for duplicate detection.
    fn key(&self) -> (i32, i32) {
        (self.from.min(self.to), self.from.max(self.to))
    }
}

/// Declarative description of a synthetic lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeSpec {
    /// Consecutive integer site labels, ascending (e.g. `-4..=4`).
    pub sites: Vec<i32>,
    pub links: Vec<Link>,
    /// Per-site detunings Δ_j in MHz, same order as `sites`. Must be all zero
    /// for the escher and bichromatic drives, which generate their own tilt.
    #[serde(default)]
    pub detunings: Vec<f64>,
    pub boundary: Boundary,
    pub drive: Drive,
}

impl LatticeSpec {
    /// Uniform open chain `j_min..=j_max` with static drive, hopping `rabi_mhz`
    /// on every link, and linear tilt `detunings[j] = j * tilt_mhz`.
    pub fn uniform_chain(j_min: i32, j_max: i32, rabi_mhz: f64, tilt_mhz: f64) -> Self {
        let sites: Vec<i32> = (j_min..=j_max).collect();
        let links = sites
            .iter()
            .take(sites.len() - 1)
            .map(|&j| Link::new(j, j + 1, rabi_mhz, 0.0))
            .collect();
        let detunings = sites.iter().map(|&j| j as f64 * tilt_mhz).collect();
        Self { sites, links, detunings, boundary: Boundary::Open, drive: Drive::Static }
    }

    /// Flat (untilted) ring with a wraparound link carrying `wrap_phase_rad`.
    /// All the flux through the ring sits on the wraparound link.
    pub fn flat_ring(j_min: i32, j_max: i32, rabi_mhz: f64, wrap_phase_rad: f64) -> Self {
        let sites: Vec<i32> = (j_min..=j_max).collect();
        let mut links: Vec<Link> = sites
            .iter()
            .take(sites.len() - 1)
            .map(|&j| Link::new(j, j + 1, rabi_mhz, 0.0))
            .collect();
        links.push(Link::new(j_max, j_min, rabi_mhz, wrap_phase_rad));
        let detunings = vec![0.0; sites.len()];
        Self { sites, links, detunings, boundary: Boundary::Periodic, drive: Drive::Static }
    }

    /// Tilted ring in the escher configuration: uniform tilt `detuning_mhz`
    /// supplied by the drive, modulated wraparound link.
    pub fn escher_ring(
        j_min: i32,
        j_max: i32,
        rabi_mhz: f64,
        detuning_mhz: f64,
        wrap_phase_rad: f64,
    ) -> Self {
        let mut spec = Self::flat_ring(j_min, j_max, rabi_mhz, wrap_phase_rad);
        spec.drive = Drive::Escher { detuning_mhz };
        spec
    }

    /// Open chain with every link driven bichromatically at `ω_j ± detuning_mhz`.
    pub fn bichromatic_chain(j_min: i32, j_max: i32, rabi_mhz: f64, detuning_mhz: f64) -> Self {
        let mut spec = Self::uniform_chain(j_min, j_max, rabi_mhz, 0.0);
        spec.drive = Drive::Bichromatic { detuning_mhz };
        spec
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    /// The wraparound link (from `j_max` back to `j_min`), if present.
    pub fn wrap_link(&self) -> Option<&Link> {
        let (lo, hi) = match (self.sites.first(), self.sites.last()) {
            (Some(&lo), Some(&hi)) => (lo, hi),
            _ => return None,
        };
        self.links.iter().find(|l| l.key() == (lo, hi) && lo != hi && (hi - lo) > 1)
    }

    /// Drop the wraparound link, turning a ring into an open chain. An escher
    /// drive becomes an explicit static tilt `j·Δ`, so the open-boundary
    /// comparison evolves under the same on-site energies.
    pub fn without_wrap(&self) -> Self {
        let wrap_key = self.wrap_link().map(Link::key);
        let mut spec = self.clone();
        if let Some(key) = wrap_key {
            spec.links.retain(|l| l.key() != key);
        }
        spec.boundary = Boundary::Open;
        if let Drive::Escher { detuning_mhz } = self.drive {
            spec.drive = Drive::Static;
            spec.detunings = self.sites.iter().map(|&j| j as f64 * detuning_mhz).collect();
        }
        spec
    }

    /// Net flux through the ring: directed sum of link phases around the loop
    /// in the `+1` direction, reduced to `(-π, π]`.
    pub fn loop_flux(&self) -> f64 {
        let total: f64 = self.links.iter().map(|l| {
            // A link stored against the +1 direction contributes -φ.
            if self.is_wrap(l) {
                if l.from > l.to { l.phase_rad } else { -l.phase_rad }
            } else if l.to == l.from + 1 {
                l.phase_rad
            } else {
                -l.phase_rad
            }
        }).sum();
        wrap_angle(total)
    }

    fn is_wrap(&self, l: &Link) -> bool {
        (l.from - l.to).abs() > 1
    }

    /// Index of a site label within the spec, if present.
    pub fn site_index(&self, label: i32) -> Option<usize> {
        self.sites.iter().position(|&s| s == label)
    }

    /// Check structural invariants. Builders call this before assembling
    /// matrices; configs loaded from disk should be validated eagerly.
    pub fn validate(&self) -> Result<(), LatticeError> {
        if self.sites.is_empty()
            || !self.sites.windows(2).all(|w| w[1] == w[0] + 1)
        {
            return Err(LatticeError::BadSites(self.sites.clone()));
        }
        if self.detunings.len() != self.sites.len() {
            return Err(LatticeError::DetuningCount {
                expected: self.sites.len(),
                got: self.detunings.len(),
            });
        }
        let (lo, hi) = (self.sites[0], *self.sites.last().unwrap());
        let mut seen: Vec<(i32, i32)> = Vec::with_capacity(self.links.len());
        let mut wraps = 0usize;
        for l in &self.links {
            if l.rabi_mhz < 0.0 {
                return Err(LatticeError::NegativeRabi(l.rabi_mhz));
            }
            if l.from < lo || l.from > hi || l.to < lo || l.to > hi {
                return Err(LatticeError::UnknownSite { from: l.from, to: l.to });
            }
            let adjacent = (l.to - l.from).abs() == 1;
            let is_wrap = l.key() == (lo, hi) && hi - lo > 1;
            if !adjacent && !is_wrap {
                return Err(LatticeError::NonAdjacentLink { from: l.from, to: l.to });
            }
            if is_wrap {
                wraps += 1;
            }
            let key = l.key();
            if seen.contains(&key) {
                return Err(LatticeError::DuplicateLink { a: key.0, b: key.1 });
            }
            seen.push(key);
        }
        match self.boundary {
            Boundary::Open if wraps > 0 => return Err(LatticeError::WrapOnOpenChain),
            Boundary::Periodic if wraps != 1 => return Err(LatticeError::MissingWrapLink),
            _ => {}
        }
        match self.drive {
            Drive::Escher { .. } => {
                if self.boundary != Boundary::Periodic {
                    return Err(LatticeError::EscherNeedsRing);
                }
                if self.detunings.iter().any(|&d| d != 0.0) {
                    return Err(LatticeError::DriveForbidsTilt { drive: "escher" });
                }
            }
            Drive::Bichromatic { .. } => {
                if self.detunings.iter().any(|&d| d != 0.0) {
                    return Err(LatticeError::DriveForbidsTilt { drive: "bichromatic" });
                }
            }
            Drive::Static => {}
        }
        Ok(())
    }
}

/// Reduce an angle to `(-π, π]`.
pub fn wrap_angle(phi: f64) -> f64 {
    let mut x = phi.rem_euclid(TAU);
    if x > std::f64::consts::PI {
        x -= TAU;
    }
    x
}

/// Table of dipolar C3 coefficients per unordered transition pair, in
/// MHz·μm³. Pairs absent from the table do not exchange.
#[derive(Debug, Clone, PartialEq)]
pub struct C3Table {
    entries: BTreeMap<(i32, i32), f64>,
}

impl C3Table {
    /// The coefficients of the 60S/60P ladder used throughout, compiled in.
    pub fn builtin() -> Self {
        // Data asset checked against the source at build time by unit test.
        Self::from_csv_str(include_str!("../data/c3_table.csv"))
            .expect("builtin table parses")
    }

    /// Parse `i,j,c3_mhz_um3` rows; a non-numeric first line is a header.
    pub fn from_csv_str(text: &str) -> Result<Self, LatticeError> {
        let mut entries = BTreeMap::new();
        for (k, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if k == 0 && fields[0].parse::<i32>().is_err() {
                continue; // header
            }
            if fields.len() != 3 {
                return Err(LatticeError::C3Parse {
                    line: k + 1,
                    msg: format!("expected 3 fields, got {}", fields.len()),
                });
            }
            let parse_err = |msg: String| LatticeError::C3Parse { line: k + 1, msg };
            let i: i32 = fields[0].parse().map_err(|e| parse_err(format!("{e}")))?;
            let j: i32 = fields[1].parse().map_err(|e| parse_err(format!("{e}")))?;
            let c3: f64 = fields[2].parse().map_err(|e| parse_err(format!("{e}")))?;
            if i == j {
                return Err(parse_err(format!("self-pair {{{i},{j}}}")));
            }
            let key = (i.min(j), i.max(j));
            if entries.insert(key, c3).is_some() {
                return Err(parse_err(format!("duplicate pair {{{i},{j}}}")));
            }
        }
        Ok(Self { entries })
    }

    /// C3 for the unordered pair `{i, j}`; `None` when the pair does not
    /// exchange.
    pub fn get(&self, i: i32, j: i32) -> Option<f64> {
        self.entries.get(&(i.min(j), i.max(j))).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&(i32, i32), &f64)> {
        self.entries.iter()
    }
}

/// Exchange interaction between a fixed pair of atoms, parameterized by the
/// reference matrix element `V = V_{0,-1}` in MHz. Other pair elements scale
/// as `V_{ij} = V · C3_{ij} / C3_{0,-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionSpec {
    v_mhz: f64,
    c3: C3Table,
}

impl InteractionSpec {
    /// From the reference strength directly.
    pub fn from_v(v_mhz: f64, c3: C3Table) -> Result<Self, LatticeError> {
        if c3.get(0, -1).map_or(true, |c| c == 0.0) {
            return Err(LatticeError::MissingReferencePair);
        }
        Ok(Self { v_mhz, c3 })
    }

    /// From an interatomic separation: `V = C3_{0,-1} / d³`.
    pub fn from_separation(d_um: f64, c3: C3Table) -> Result<Self, LatticeError> {
        if !(d_um > 0.0) || !d_um.is_finite() {
            return Err(LatticeError::BadSeparation(d_um));
        }
        let c0 = c3.get(0, -1).ok_or(LatticeError::MissingReferencePair)?;
        if c0 == 0.0 {
            return Err(LatticeError::MissingReferencePair);
        }
        Ok(Self { v_mhz: c0 / d_um.powi(3), c3 })
    }

    /// Reference strength `V = V_{0,-1}` in MHz.
    pub fn v_mhz(&self) -> f64 {
        self.v_mhz
    }

    pub fn c3(&self) -> &C3Table {
        &self.c3
    }

    /// Exchange element `V_{ij}` for the unordered state pair `{i, j}`; zero
    /// when the pair is not in the table.
    pub fn v_between(&self, i: i32, j: i32) -> f64 {
        let c0 = self.c3.get(0, -1).expect("validated at construction");
        match self.c3.get(i, j) {
            Some(cij) => self.v_mhz * cij / c0,
            None => 0.0,
        }
    }

    /// Rescale to a different reference strength, keeping the same table.
    pub fn with_v(&self, v_mhz: f64) -> Self {
        Self { v_mhz, c3: self.c3.clone() }
    }
}

impl fmt::Display for InteractionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "V = {} MHz ({} pairs)", self.v_mhz, self.c3.len())
    }
}

/// Lab-frame description of the driven ladder: bare level energies ε_j and a
/// shared bichromatic drive of strength `rabi_mhz` per tone, detuned ±Δ from
/// each transition. Transition frequencies are the exact differences
/// `ω_j = ε_{j+1} - ε_j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabFrameSpec {
    /// Bare energies ε_j in MHz, ascending site order.
    pub bare_energies_mhz: Vec<f64>,
    /// Rabi rate Ω of each tone, MHz.
    pub rabi_mhz: f64,
    /// Tone offset Δ from each transition, MHz.
    pub detuning_mhz: f64,
}

impl LabFrameSpec {
    pub fn n_levels(&self) -> usize {
        self.bare_energies_mhz.len()
    }

    /// `ω_j = ε_{j+1} - ε_j` for each link.
    pub fn transition_frequencies(&self) -> Vec<f64> {
        self.bare_energies_mhz.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn validate(&self) -> Result<(), LatticeError> {
        if self.n_levels() < 2 {
            return Err(LatticeError::TooFewLevels(self.n_levels()));
        }
        if self.rabi_mhz < 0.0 {
            return Err(LatticeError::BadLabRabi(self.rabi_mhz));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chain_constructor_shapes() {
        let spec = LatticeSpec::uniform_chain(-4, 4, 0.9, 0.4);
        assert_eq!(spec.n_sites(), 9);
        assert_eq!(spec.links.len(), 8);
        assert_eq!(spec.detunings[0], -1.6);
        assert_eq!(spec.detunings[8], 1.6);
        spec.validate().unwrap();
    }

    #[test]
    fn ring_has_one_wrap_link() {
        let spec = LatticeSpec::flat_ring(-3, 4, 0.9, 0.3);
        assert_eq!(spec.n_sites(), 8);
        assert_eq!(spec.links.len(), 8);
        let wrap = spec.wrap_link().unwrap();
        assert_eq!((wrap.from, wrap.to), (4, -3));
        assert!((wrap.phase_rad - 0.3).abs() < 1e-15);
        spec.validate().unwrap();
    }

    #[test]
    fn without_wrap_opens_the_ring() {
        let spec = LatticeSpec::escher_ring(-3, 4, 0.9, 0.45, 0.0);
        let open = spec.without_wrap();
        assert_eq!(open.boundary, Boundary::Open);
        assert_eq!(open.links.len(), 7);
        assert!(open.drive.is_static());
        // tilt materializes on the diagonal
        assert!((open.detunings[0] - (-3.0 * 0.45)).abs() < 1e-15);
        assert!((open.detunings[7] - 4.0 * 0.45).abs() < 1e-15);
        open.validate().unwrap();
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let mut spec = LatticeSpec::uniform_chain(-2, 2, 0.5, 0.0);
        spec.links[0].to = 0; // -2 -> 0 skips a site and is not the wrap pair
        assert!(matches!(spec.validate(), Err(LatticeError::NonAdjacentLink { .. })));

        // endpoint-to-endpoint on an open chain reads as a misplaced wrap
        let mut spec = LatticeSpec::uniform_chain(-1, 1, 0.5, 0.0);
        spec.links[0].to = 1;
        assert!(matches!(spec.validate(), Err(LatticeError::WrapOnOpenChain)));

        let mut spec = LatticeSpec::uniform_chain(-1, 1, 0.5, 0.0);
        spec.links[0].rabi_mhz = -0.1;
        assert!(matches!(spec.validate(), Err(LatticeError::NegativeRabi(_))));

        let mut spec = LatticeSpec::uniform_chain(-1, 1, 0.5, 0.0);
        spec.detunings.pop();
        assert!(matches!(spec.validate(), Err(LatticeError::DetuningCount { .. })));

        let mut spec = LatticeSpec::escher_ring(-3, 4, 0.9, 0.45, 0.0);
        spec.boundary = Boundary::Open;
        assert!(matches!(
            spec.validate(),
            Err(LatticeError::WrapOnOpenChain) | Err(LatticeError::EscherNeedsRing)
        ));

        let mut spec = LatticeSpec::escher_ring(-3, 4, 0.9, 0.45, 0.0);
        spec.detunings[0] = 0.1;
        assert!(matches!(spec.validate(), Err(LatticeError::DriveForbidsTilt { .. })));

        let mut spec = LatticeSpec::uniform_chain(0, 3, 0.5, 0.0);
        spec.sites = vec![0, 1, 3, 4];
        assert!(matches!(spec.validate(), Err(LatticeError::BadSites(_))));
    }

    #[test]
    fn link_phase_normalized() {
        let l = Link::new(0, 1, 0.5, -0.25 * TAU);
        assert!((l.phase_rad - 0.75 * TAU).abs() < 1e-12);
        assert!(l.phase_rad >= 0.0 && l.phase_rad < TAU);
    }

    #[test]
    fn loop_flux_sums_directed_phases() {
        let mut spec = LatticeSpec::flat_ring(-3, 4, 0.9, 0.0);
        for l in spec.links.iter_mut() {
            l.phase_rad = 0.1;
        }
        // seven +1-direction links and a wrap stored as j_max -> j_min,
        // which also points in the +1 direction around the loop
        assert!((spec.loop_flux() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn builtin_c3_table_contents() {
        let t = C3Table::builtin();
        assert_eq!(t.len(), 14);
        assert_eq!(t.get(0, 1), Some(-756.4));
        assert_eq!(t.get(1, 0), Some(-756.4));
        assert_eq!(t.get(0, -1), Some(756.4));
        assert_eq!(t.get(-3, 4), Some(705.0));
        assert_eq!(t.get(3, -4), Some(705.0));
        // the {1,-1} pair does not exchange
        assert_eq!(t.get(1, -1), None);
        assert_eq!(t.get(0, 2), None);
    }

    #[test]
    fn c3_parse_errors() {
        assert!(matches!(
            C3Table::from_csv_str("i,j,c3\n0,0,5.0"),
            Err(LatticeError::C3Parse { .. })
        ));
        assert!(matches!(
            C3Table::from_csv_str("0,1,5.0\n1,0,4.0"),
            Err(LatticeError::C3Parse { line: 2, .. })
        ));
        assert!(matches!(
            C3Table::from_csv_str("0,1"),
            Err(LatticeError::C3Parse { .. })
        ));
    }

    #[test]
    fn interaction_scaling_and_signs() {
        let inter = InteractionSpec::from_v(-1.56, C3Table::builtin()).unwrap();
        // reference pair carries V itself
        assert!((inter.v_between(0, -1) - (-1.56)).abs() < 1e-12);
        // the {0,1} pair has the opposite sign of the reference
        assert!((inter.v_between(0, 1) - 1.56).abs() < 1e-12);
        // scaling by the tabulated ratio
        let expect = -1.56 * (-639.1) / 756.4;
        assert!((inter.v_between(1, 2) - expect).abs() < 1e-12);
        // absent pairs do not exchange
        assert_eq!(inter.v_between(1, -1), 0.0);
        assert_eq!(inter.v_between(0, 4), 0.0);
    }

    #[test]
    fn interaction_from_separation() {
        // V = C3(0,-1)/d^3
        let inter = InteractionSpec::from_separation(10.0, C3Table::builtin()).unwrap();
        assert!((inter.v_mhz() - 0.7564).abs() < 1e-12);
        assert!(InteractionSpec::from_separation(0.0, C3Table::builtin()).is_err());
        assert!(InteractionSpec::from_separation(-2.0, C3Table::builtin()).is_err());
    }

    #[test]
    fn lab_frame_transitions_exact() {
        let lab = LabFrameSpec {
            bare_energies_mhz: vec![0.0, 100.0, 220.0],
            rabi_mhz: 1.92,
            detuning_mhz: 7.2,
        };
        lab.validate().unwrap();
        assert_eq!(lab.transition_frequencies(), vec![100.0, 120.0]);
        let bad = LabFrameSpec { bare_energies_mhz: vec![0.0], rabi_mhz: 1.0, detuning_mhz: 1.0 };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn spec_serde_round_trip() {
        let spec = LatticeSpec::escher_ring(-3, 4, 0.9, 0.45, 0.6);
        let text = serde_json::to_string(&spec).unwrap();
        let back: LatticeSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(spec, back);
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * std::f64::consts::PI) - std::f64::consts::PI).abs() < 1e-12);
        assert!((wrap_angle(-0.1) - (-0.1)).abs() < 1e-15);
        assert!((wrap_angle(TAU + 0.2) - 0.2).abs() < 1e-12);
    }
}
