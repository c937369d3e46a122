//! State-preparation-and-measurement (SPAM) contrast model: an affine map
//! between ideal probabilities and measured ("bare") populations,
//!
//! ```text
//! P_bare = P_l + (P_u - P_l) · P_ideal
//! ```
//!
//! with its exact inverse for renormalizing measurements. Inversion is not
//! clamped: noisy inputs can legitimately renormalize outside [0, 1], and the
//! excursion is flagged rather than hidden.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpamError {
    #[error("SPAM contrast requires 0 <= P_l < P_u <= 1, got P_l = {p_l}, P_u = {p_u}")]
    BadContrast { p_u: f64, p_l: f64 },
}

/// Measurement contrast: ceiling `P_u` and floor `P_l`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpamModel {
    p_u: f64,
    p_l: f64,
}

impl SpamModel {
    pub fn new(p_u: f64, p_l: f64) -> Result<Self, SpamError> {
        if !(0.0..=1.0).contains(&p_l) || !(0.0..=1.0).contains(&p_u) || p_l >= p_u {
            return Err(SpamError::BadContrast { p_u, p_l });
        }
        Ok(Self { p_u, p_l })
    }

    /// Default contrast for single-atom and atom-averaged populations.
    pub fn singles() -> Self {
        Self { p_u: 0.93, p_l: 0.32 }
    }

    /// Default contrast for two-atom pair-state populations.
    pub fn pair() -> Self {
        Self { p_u: 0.86, p_l: 0.32 }
    }

    pub fn p_u(&self) -> f64 {
        self.p_u
    }

    pub fn p_l(&self) -> f64 {
        self.p_l
    }

    /// Ideal probability -> experiment-like population.
    pub fn forward(&self, p_ideal: f64) -> f64 {
        // two-sided form is exact at both endpoints
        self.p_l * (1.0 - p_ideal) + self.p_u * p_ideal
    }

    /// Bare population -> renormalized probability, unclamped.
    pub fn renormalize(&self, p_bare: f64) -> Renormalized {
        let value = (p_bare - self.p_l) / (self.p_u - self.p_l);
        Renormalized { value, in_unit_interval: (0.0..=1.0).contains(&value) }
    }

    pub fn forward_slice(&self, ps: &[f64]) -> Vec<f64> {
        ps.iter().map(|&p| self.forward(p)).collect()
    }

    pub fn renormalize_slice(&self, ps: &[f64]) -> Vec<Renormalized> {
        ps.iter().map(|&p| self.renormalize(p)).collect()
    }
}

/// Renormalized value with its unit-interval flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Renormalized {
    pub value: f64,
    pub in_unit_interval: bool,
}
