use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerances used across the toolkit.
///
/// Every check takes its threshold from here (or from an explicit argument),
/// never from a hidden constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Max entry of `|E - E^dagger|` accepted as Hermitian.
    pub hermiticity: f64,
    /// Slack below zero allowed for the smallest eigenvalue of an effect.
    pub positivity: f64,
    /// Generic equality slack (norm comparisons, covariance, kernel identity).
    pub equality: f64,
    /// An effect with spectral norm above this is "nonzero".
    pub support: f64,
    /// Commutator norm below which two effects are said to commute.
    pub commutativity: f64,
    /// Normalization defect accepted by constructors.
    pub normalization: f64,
    /// Gap `1 - ||F(D)||` below which an event counts as norm one.
    pub norm1: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            hermiticity: 1e-10,
            positivity: 1e-10,
            equality: 1e-10,
            support: 1e-12,
            commutativity: 1e-12,
            normalization: 1e-8,
            norm1: 1e-10,
        }
    }
}

impl Tolerances {
    /// Default thresholds for truncated constructions, which only accept a
    /// looser normalization defect.
    pub fn truncated() -> Self {
        Self {
            normalization: 1e-3,
            ..Self::default()
        }
    }

    /// Override one tolerance by name, as in `--tol equality=1e-9`.
    pub fn set(&mut self, key: &str, value: f64) -> Result<()> {
        if !(value.is_finite() && value >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "tolerance {key} must be finite and nonnegative, got {value}"
            )));
        }
        let slot = match key {
            "hermiticity" => &mut self.hermiticity,
            "positivity" => &mut self.positivity,
            "equality" => &mut self.equality,
            "support" => &mut self.support,
            "commutativity" => &mut self.commutativity,
            "normalization" => &mut self.normalization,
            "norm1" => &mut self.norm1,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown tolerance key '{other}'"
                )))
            }
        };
        *slot = value;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_by_name() {
        let mut tol = Tolerances::default();
        tol.set("equality", 1e-6).unwrap();
        assert_eq!(tol.equality, 1e-6);
        assert!(tol.set("nope", 1.0).is_err());
        assert!(tol.set("support", -1.0).is_err());
        assert!(tol.set("support", f64::NAN).is_err());
    }

    #[test]
    fn truncated_only_loosens_normalization() {
        let t = Tolerances::truncated();
        assert_eq!(t.normalization, 1e-3);
        assert_eq!(t.equality, Tolerances::default().equality);
    }
}
