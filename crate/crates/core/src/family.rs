//! Mean/variance families and their quasi-log-likelihood kernels.
//!
//! A family specifies the inverse link μ(·) and variance function V(·). The
//! kernel ℓ(y, η) is the antiderivative of (y − t)/V(t) evaluated at t = μ(η),
//! with the arbitrary lower limit dropped; dividing by the dispersion ψ gives
//! the per-observation quasi-log-likelihood.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum QuasiFamily {
    /// μ(s) = s, V(t) = 1. Kernel yη − η²/2.
    LinearIdentity,
    /// μ(s) = eˢ, V(t) = t. Kernel yη − eᵉᵗᵃ.
    PoissonLog,
    /// μ(s) = eˢ, V(t) = t + t²/θ. Kernel yη − (y+θ)·log(θ+eᵉᵗᵃ).
    NegBinLog { theta: f64 },
}

/// log(θ + e^η) without overflowing for large η.
fn log_theta_plus_exp(theta: f64, eta: f64) -> f64 {
    if eta > 35.0 {
        eta + (theta * (-eta).exp()).ln_1p()
    } else {
        (theta + eta.exp()).ln()
    }
}

/// e^η / (θ + e^η), computed as a sigmoid of η − log θ.
fn expit_shifted(theta: f64, eta: f64) -> f64 {
    let x = eta - theta.ln();
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl QuasiFamily {
    pub fn negbin(theta: f64) -> Result<Self> {
        if !(theta > 0.0) || !theta.is_finite() {
            return Err(Error::InvalidConfig {
                context: format!("negative-binomial theta must be a positive real, got {theta}"),
            });
        }
        Ok(QuasiFamily::NegBinLog { theta })
    }

    pub fn name(&self) -> &'static str {
        match self {
            QuasiFamily::LinearIdentity => "linear-identity",
            QuasiFamily::PoissonLog => "poisson-log",
            QuasiFamily::NegBinLog { .. } => "negbin-log",
        }
    }

    /// Inverse link μ(s).
    pub fn mu(&self, s: f64) -> f64 {
        match self {
            QuasiFamily::LinearIdentity => s,
            QuasiFamily::PoissonLog | QuasiFamily::NegBinLog { .. } => s.exp(),
        }
    }

    pub fn mu_d1(&self, s: f64) -> f64 {
        match self {
            QuasiFamily::LinearIdentity => 1.0,
            QuasiFamily::PoissonLog | QuasiFamily::NegBinLog { .. } => s.exp(),
        }
    }

    pub fn mu_d2(&self, s: f64) -> f64 {
        match self {
            QuasiFamily::LinearIdentity => 0.0,
            QuasiFamily::PoissonLog | QuasiFamily::NegBinLog { .. } => s.exp(),
        }
    }

    /// Variance function V(t) on the mean scale.
    pub fn variance(&self, t: f64) -> f64 {
        match self {
            QuasiFamily::LinearIdentity => 1.0,
            QuasiFamily::PoissonLog => t,
            QuasiFamily::NegBinLog { theta } => t + t * t / theta,
        }
    }

    pub fn variance_d1(&self, t: f64) -> f64 {
        match self {
            QuasiFamily::LinearIdentity => 0.0,
            QuasiFamily::PoissonLog => 1.0,
            QuasiFamily::NegBinLog { theta } => 1.0 + 2.0 * t / theta,
        }
    }

    /// Kernel ℓ(y, η) at ψ = 1.
    pub fn kernel(&self, y: f64, eta: f64) -> f64 {
        match self {
            QuasiFamily::LinearIdentity => y * eta - 0.5 * eta * eta,
            QuasiFamily::PoissonLog => y * eta - eta.exp(),
            QuasiFamily::NegBinLog { theta } => {
                y * eta - (y + theta) * log_theta_plus_exp(*theta, eta)
            }
        }
    }

    /// ∂ℓ/∂η at ψ = 1; equals (y − μ)·μ′/V by the chain rule.
    pub fn kernel_d1(&self, y: f64, eta: f64) -> f64 {
        match self {
            QuasiFamily::LinearIdentity => y - eta,
            QuasiFamily::PoissonLog => y - eta.exp(),
            QuasiFamily::NegBinLog { theta } => {
                let sig = expit_shifted(*theta, eta);
                y - (y + theta) * sig
            }
        }
    }

    /// ∂²ℓ/∂η² at ψ = 1.
    pub fn kernel_d2(&self, y: f64, eta: f64) -> f64 {
        match self {
            QuasiFamily::LinearIdentity => -1.0,
            QuasiFamily::PoissonLog => -eta.exp(),
            QuasiFamily::NegBinLog { theta } => {
                let sig = expit_shifted(*theta, eta);
                -(y + theta) * sig * (1.0 - sig)
            }
        }
    }

    /// Expected-information weight μ′(η)²/V(μ(η)).
    pub fn fisher_weight(&self, eta: f64) -> f64 {
        match self {
            QuasiFamily::LinearIdentity => 1.0,
            QuasiFamily::PoissonLog => eta.exp(),
            QuasiFamily::NegBinLog { theta } => theta * expit_shifted(*theta, eta),
        }
    }

    /// True when V′/V·(μ′)² − μ″ ≡ 0, which makes the quasi-log-likelihood
    /// concave in β for every real response.
    pub fn is_globally_concave(&self) -> bool {
        match self {
            QuasiFamily::LinearIdentity | QuasiFamily::PoissonLog => true,
            QuasiFamily::NegBinLog { .. } => false,
        }
    }

    pub fn theta(&self) -> Option<f64> {
        match self {
            QuasiFamily::NegBinLog { theta } => Some(*theta),
            _ => None,
        }
    }
}
