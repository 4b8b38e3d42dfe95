//! Nested quasi-Bayes-factor statistic: twice the gap in total
//! quasi-log-likelihood between a model and a nested submodel, each at its
//! own quasi-ML fit with the prior removed.

use qpsel_core::{fit_qmle, quasi_loglik, Dataset, ModelIndicator, NewtonSettings, QuasiFamily};

use crate::error::{Error, Result};

pub fn nested_bf_statistic(
    d: &Dataset,
    gamma: &ModelIndicator,
    gamma_star: &ModelIndicator,
    fam: QuasiFamily,
    psi: f64,
) -> Result<f64> {
    if !gamma.contains(gamma_star) {
        return Err(Error::NotNested);
    }
    let settings = NewtonSettings {
        tol: 1e-10,
        max_iter: 200,
    };
    let total_at_mle = |g: &ModelIndicator| -> Result<f64> {
        let xg = d.submatrix(g)?;
        let (beta, _) = fit_qmle(d.y(), &xg, fam, settings)?;
        Ok(quasi_loglik(d, g, &beta, psi, fam)?)
    };
    Ok(2.0 * (total_at_mle(gamma)? - total_at_mle(gamma_star)?))
}
