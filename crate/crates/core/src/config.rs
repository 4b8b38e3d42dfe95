//! Prior and run configuration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Prior on the inclusion probability w.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Sparsity {
    /// w held at a constant in (0, 1).
    Fixed(f64),
    /// w ~ Beta(a, b), inducing a Beta-Binomial prior over models.
    BetaBinomial { a: f64, b: f64 },
}

/// Spike-and-slab prior: point mass at zero plus a N(0, s²) slab, with the
/// sparsity level fixed or Beta-distributed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub slab_variance: f64,
    pub sparsity: Sparsity,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            slab_variance: 9.0,
            sparsity: Sparsity::BetaBinomial { a: 1.0, b: 1.0 },
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.slab_variance > 0.0) || !self.slab_variance.is_finite() {
            return Err(Error::InvalidConfig {
                context: format!("slab variance must be positive, got {}", self.slab_variance),
            });
        }
        match self.sparsity {
            Sparsity::Fixed(w) => {
                if !(w > 0.0 && w < 1.0) {
                    return Err(Error::InvalidConfig {
                        context: format!("fixed w must lie strictly inside (0,1), got {w}"),
                    });
                }
            }
            Sparsity::BetaBinomial { a, b } => {
                if !(a > 0.0 && b > 0.0) {
                    return Err(Error::InvalidConfig {
                        context: format!("Beta hyperparameters must be positive, got a={a}, b={b}"),
                    });
                }
            }
        }
        Ok(())
    }
}

/// How the dispersion ψ is obtained before model search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum DispersionMode {
    /// Pearson estimator on the full-model quasi-likelihood fit, divisor n − p.
    FullModelQmle,
    /// Pearson estimator on an L1-regularised fit, divisor n − k with k the
    /// number of nonzero coefficients. `None` builds a 20-point log grid.
    L1Regularized { lambda_grid: Option<Vec<f64>> },
    /// Use the given ψ as-is.
    FixedValue(f64),
}

/// Newton stopping parameters for MAP and quasi-ML fits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub sweeps: usize,
    pub burn_in: usize,
    pub seed: u64,
    pub fdr_alpha: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub cache_cap: Option<usize>,
    pub dispersion_mode: DispersionMode,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            sweeps: 3000,
            burn_in: 1500,
            seed: 0,
            fdr_alpha: 0.05,
            newton_tol: 1e-8,
            newton_max_iter: 100,
            cache_cap: None,
            dispersion_mode: DispersionMode::FullModelQmle,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sweeps == 0 {
            return Err(Error::InvalidConfig {
                context: "sweeps must be positive".into(),
            });
        }
        if self.burn_in >= self.sweeps {
            return Err(Error::InvalidConfig {
                context: format!(
                    "burn-in ({}) must be smaller than sweeps ({})",
                    self.burn_in, self.sweeps
                ),
            });
        }
        if !(self.fdr_alpha > 0.0 && self.fdr_alpha < 1.0) {
            return Err(Error::InvalidConfig {
                context: format!("fdr_alpha must lie in (0,1), got {}", self.fdr_alpha),
            });
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::InvalidConfig {
                context: format!("newton_tol must be positive, got {}", self.newton_tol),
            });
        }
        if self.newton_max_iter == 0 {
            return Err(Error::InvalidConfig {
                context: "newton_max_iter must be positive".into(),
            });
        }
        if let Some(cap) = self.cache_cap {
            if cap == 0 {
                return Err(Error::InvalidConfig {
                    context: "cache_cap must be positive when set".into(),
                });
            }
        }
        if let DispersionMode::FixedValue(psi) = self.dispersion_mode {
            if !(psi > 0.0) || !psi.is_finite() {
                return Err(Error::NonPositiveDispersion { value: psi });
            }
        }
        Ok(())
    }

    pub fn newton(&self) -> NewtonSettings {
        NewtonSettings {
            tol: self.newton_tol,
            max_iter: self.newton_max_iter,
        }
    }
}
