//! Per-user utility families.
//!
//! All logarithms are natural. A base-2 utility such as `log2(1 + Γ)` is
//! expressed as `Rate { theta: 1 }` with `weight = 1 / ln 2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilityKind {
    PropFair,
    AlphaFair { alpha: f64 },
    Rate { theta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilitySpec {
    kind: UtilityKind,
    weight: f64,
}

impl UtilitySpec {
    pub fn new(kind: UtilityKind, weight: f64) -> Result<Self> {
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::InvalidUtility(format!(
                "weight must be positive, got {weight}"
            )));
        }
        match kind {
            UtilityKind::PropFair => {}
            UtilityKind::AlphaFair { alpha } => {
                if !(alpha.is_finite() && alpha >= 0.0) {
                    return Err(Error::InvalidUtility(format!(
                        "alpha must be >= 0, got {alpha}"
                    )));
                }
                if alpha == 1.0 {
                    return Err(Error::InvalidUtility(
                        "alpha = 1 is excluded; use prop_fair".into(),
                    ));
                }
            }
            UtilityKind::Rate { theta } => {
                if !(theta > 0.0 && theta <= 1.0) {
                    return Err(Error::InvalidUtility(format!(
                        "theta must lie in (0, 1], got {theta}"
                    )));
                }
            }
        }
        Ok(UtilitySpec { kind, weight })
    }

    pub fn prop_fair(weight: f64) -> Result<Self> {
        Self::new(UtilityKind::PropFair, weight)
    }

    pub fn alpha_fair(alpha: f64, weight: f64) -> Result<Self> {
        Self::new(UtilityKind::AlphaFair { alpha }, weight)
    }

    pub fn rate(theta: f64, weight: f64) -> Result<Self> {
        Self::new(UtilityKind::Rate { theta }, weight)
    }

    pub fn kind(&self) -> UtilityKind {
        self.kind
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            UtilityKind::PropFair => "prop_fair",
            UtilityKind::AlphaFair { .. } => "alpha_fair",
            UtilityKind::Rate { .. } => "rate",
        }
    }

    /// True when the utility diverges to -inf as Γ -> 0.
    pub fn unbounded_at_zero(&self) -> bool {
        match self.kind {
            UtilityKind::PropFair => true,
            UtilityKind::AlphaFair { alpha } => alpha > 1.0,
            UtilityKind::Rate { .. } => false,
        }
    }

    fn check_value_domain(&self, gamma: f64) -> Result<()> {
        let needs_positive = match self.kind {
            UtilityKind::PropFair => true,
            UtilityKind::AlphaFair { alpha } => alpha >= 1.0,
            UtilityKind::Rate { .. } => false,
        };
        if gamma.is_nan() || gamma < 0.0 || (needs_positive && gamma <= 0.0) {
            return Err(Error::Domain(format!(
                "{} utility undefined at SINR {gamma}",
                self.name()
            )));
        }
        Ok(())
    }

    fn check_derivative_domain(&self, gamma: f64) -> Result<()> {
        self.check_value_domain(gamma)?;
        if let UtilityKind::AlphaFair { alpha } = self.kind {
            if alpha > 0.0 && gamma <= 0.0 {
                return Err(Error::Domain(format!(
                    "alpha_fair derivative unbounded at SINR {gamma}"
                )));
            }
        }
        Ok(())
    }

    pub fn value(&self, gamma: f64) -> Result<f64> {
        self.check_value_domain(gamma)?;
        let w = self.weight;
        Ok(match self.kind {
            UtilityKind::PropFair => w * gamma.ln(),
            UtilityKind::Rate { theta } => w * (theta * gamma).ln_1p(),
            UtilityKind::AlphaFair { alpha } => w * gamma.powf(1.0 - alpha) / (1.0 - alpha),
        })
    }

    /// Like [`value`](Self::value), but maps Γ = 0 under an unbounded-below
    /// utility to `-inf` instead of failing.
    pub fn value_or_neg_inf(&self, gamma: f64) -> f64 {
        match self.value(gamma) {
            Ok(v) => v,
            Err(_) if gamma == 0.0 => f64::NEG_INFINITY,
            Err(_) => f64::NAN,
        }
    }

    pub fn derivative(&self, gamma: f64) -> Result<f64> {
        self.check_derivative_domain(gamma)?;
        let w = self.weight;
        Ok(match self.kind {
            UtilityKind::PropFair => w / gamma,
            UtilityKind::Rate { theta } => w * theta / (1.0 + theta * gamma),
            UtilityKind::AlphaFair { alpha } => w * gamma.powf(-alpha),
        })
    }

    pub fn second_derivative(&self, gamma: f64) -> Result<f64> {
        self.check_derivative_domain(gamma)?;
        let w = self.weight;
        Ok(match self.kind {
            UtilityKind::PropFair => -w / (gamma * gamma),
            UtilityKind::Rate { theta } => {
                let d = 1.0 + theta * gamma;
                -w * theta * theta / (d * d)
            }
            UtilityKind::AlphaFair { alpha } => -alpha * w * gamma.powf(-alpha - 1.0),
        })
    }

    /// Γ solving `derivative(Γ) = y`, or 0 when no non-negative root exists.
    pub fn inverse_derivative(&self, y: f64) -> Result<f64> {
        if !(y > 0.0) {
            return Err(Error::Domain(format!(
                "inverse derivative needs y > 0, got {y}"
            )));
        }
        let w = self.weight;
        Ok(match self.kind {
            UtilityKind::PropFair => w / y,
            UtilityKind::AlphaFair { alpha } => {
                if alpha == 0.0 {
                    // Linear utility: derivative is constant, no interior root.
                    0.0
                } else {
                    (w / y).powf(1.0 / alpha)
                }
            }
            UtilityKind::Rate { theta } => ((w * theta / y - 1.0) / theta).max(0.0),
        })
    }

    /// Coefficient of relative risk aversion `-Γ U'' / U'`.
    pub fn risk_aversion(&self, gamma: f64) -> Result<f64> {
        if !(gamma > 0.0) {
            return Err(Error::Domain(format!(
                "risk aversion needs SINR > 0, got {gamma}"
            )));
        }
        Ok(match self.kind {
            UtilityKind::PropFair => 1.0,
            UtilityKind::AlphaFair { alpha } => alpha,
            UtilityKind::Rate { theta } => theta * gamma / (1.0 + theta * gamma),
        })
    }
}
