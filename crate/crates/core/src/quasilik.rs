//! Total quasi-log-likelihood, its derivatives, quasi-ML fitting, and
//! dispersion estimation.
//!
//! All quantities here are on the total scale n·Qₙ, i.e. summed over
//! observations, so the sampler and marginal code never have to rescale.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::config::{DispersionMode, NewtonSettings};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::family::QuasiFamily;
use crate::indicator::ModelIndicator;
use crate::lasso;

/// Floor applied to dispersion estimates when the fit is (numerically) exact.
pub const PSI_FLOOR: f64 = 1e-10;

/// Value, gradient, and negative Hessians of the total quasi-log-likelihood
/// at a given coefficient vector.
#[derive(Clone, Debug)]
pub struct QuasiEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    /// −∇² of the total quasi-log-likelihood (observed information), ψ-scaled.
    pub neg_hessian: DMatrix<f64>,
    /// Expected-information version built from the weights μ′²/V.
    pub fisher_neg_hessian: DMatrix<f64>,
}

/// XᵀWX with the result filled symmetrically from one triangle.
pub(crate) fn weighted_gram(xg: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let k = xg.ncols();
    let n = xg.nrows();
    let mut m = DMatrix::zeros(k, k);
    for a in 0..k {
        let ca = xg.column(a);
        for b in a..k {
            let cb = xg.column(b);
            let mut acc = 0.0;
            for i in 0..n {
                acc += w[i] * ca[i] * cb[i];
            }
            m[(a, b)] = acc;
            m[(b, a)] = acc;
        }
    }
    m
}

/// Σᵢ kernel(yᵢ, ηᵢ) at ψ = 1 over an explicit submatrix.
pub(crate) fn total_kernel(y: &DVector<f64>, xg: &DMatrix<f64>, beta: &DVector<f64>, fam: QuasiFamily) -> f64 {
    let eta = xg * beta;
    y.iter()
        .zip(eta.iter())
        .map(|(&yi, &ei)| fam.kernel(yi, ei))
        .sum()
}

pub(crate) fn eval_on_submatrix(
    y: &DVector<f64>,
    xg: &DMatrix<f64>,
    beta: &DVector<f64>,
    psi: f64,
    fam: QuasiFamily,
) -> QuasiEval {
    let n = y.len();
    let eta = xg * beta;
    let mut value = 0.0;
    let mut score = DVector::zeros(n);
    let mut d_obs = DVector::zeros(n);
    let mut d_fisher = DVector::zeros(n);
    for i in 0..n {
        value += fam.kernel(y[i], eta[i]);
        score[i] = fam.kernel_d1(y[i], eta[i]);
        d_obs[i] = -fam.kernel_d2(y[i], eta[i]);
        d_fisher[i] = fam.fisher_weight(eta[i]);
    }
    let gradient = xg.transpose() * &score / psi;
    let neg_hessian = weighted_gram(xg, &d_obs) / psi;
    let fisher_neg_hessian = weighted_gram(xg, &d_fisher) / psi;
    QuasiEval {
        value: value / psi,
        gradient,
        neg_hessian,
        fisher_neg_hessian,
    }
}

fn check_eval_inputs(
    d: &Dataset,
    gamma: &ModelIndicator,
    beta: &DVector<f64>,
    psi: f64,
) -> Result<()> {
    gamma.check_forced_included()?;
    if !(psi > 0.0) || !psi.is_finite() {
        return Err(Error::NonPositiveDispersion { value: psi });
    }
    if beta.len() != gamma.size() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "beta has {} entries but the model has {} active columns",
                beta.len(),
                gamma.size()
            ),
        });
    }
    if gamma.p() != d.p() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "indicator covers {} columns but the design has {}",
                gamma.p(),
                d.p()
            ),
        });
    }
    Ok(())
}

/// Total quasi-log-likelihood n·Qₙ(y, X_γ; β_γ, ψ).
pub fn quasi_loglik(
    d: &Dataset,
    gamma: &ModelIndicator,
    beta: &DVector<f64>,
    psi: f64,
    fam: QuasiFamily,
) -> Result<f64> {
    check_eval_inputs(d, gamma, beta, psi)?;
    let xg = d.submatrix(gamma)?;
    Ok(total_kernel(d.y(), &xg, beta, fam) / psi)
}

/// Value plus analytic gradient and negative Hessians.
pub fn quasi_eval(
    d: &Dataset,
    gamma: &ModelIndicator,
    beta: &DVector<f64>,
    psi: f64,
    fam: QuasiFamily,
) -> Result<QuasiEval> {
    check_eval_inputs(d, gamma, beta, psi)?;
    let xg = d.submatrix(gamma)?;
    Ok(eval_on_submatrix(d.y(), &xg, beta, psi, fam))
}

/// Cholesky with escalating diagonal jitter. Returns the factor and whether
/// jitter was needed.
pub(crate) fn cholesky_with_jitter(
    m: &DMatrix<f64>,
    max_doublings: usize,
) -> Result<(Cholesky<f64, Dyn>, bool)> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok((c, false));
    }
    let k = m.nrows().max(1);
    let base = 1e-8 * m.trace().abs() / k as f64;
    let base = if base > 0.0 { base } else { 1e-12 };
    let mut jitter = base;
    for _ in 0..=max_doublings {
        let mut jittered = m.clone();
        for i in 0..m.nrows() {
            jittered[(i, i)] += jitter;
        }
        if let Some(c) = Cholesky::new(jittered) {
            return Ok((c, true));
        }
        jitter *= 2.0;
    }
    Err(Error::SingularHessian)
}

/// Quasi-ML fit: damped Newton on the unpenalised total quasi-log-likelihood
/// at ψ = 1 (ψ rescales the objective, so the maximiser is unchanged). The
/// step matrix is the expected information, which is positive definite
/// whenever the submatrix has full column rank.
pub fn fit_qmle(
    y: &DVector<f64>,
    xg: &DMatrix<f64>,
    fam: QuasiFamily,
    settings: NewtonSettings,
) -> Result<(DVector<f64>, usize)> {
    let k = xg.ncols();
    if k == 0 {
        return Ok((DVector::zeros(0), 0));
    }
    let mut beta = DVector::zeros(k);
    let mut obj = total_kernel(y, xg, &beta, fam);
    let mut tol_abs = settings.tol;
    let mut iters = 0;
    for iter in 0..settings.max_iter {
        let eval = eval_on_submatrix(y, xg, &beta, 1.0, fam);
        let grad_inf = eval.gradient.amax();
        if iter == 0 {
            tol_abs = settings.tol * grad_inf.max(1.0);
        }
        if grad_inf <= tol_abs {
            return Ok((beta, iters));
        }
        let (chol, _) = cholesky_with_jitter(&eval.fisher_neg_hessian, 6)?;
        let step = chol.solve(&eval.gradient);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..50 {
            let cand = &beta + t * &step;
            let cand_obj = total_kernel(y, xg, &cand, fam);
            if cand_obj.is_finite() && cand_obj >= obj {
                beta = cand;
                obj = cand_obj;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            break;
        }
        iters += 1;
    }
    let grad_inf = eval_on_submatrix(y, xg, &beta, 1.0, fam).gradient.amax();
    if grad_inf > 1e3 * tol_abs {
        Err(Error::OptimizerDiverged { iters, grad_inf })
    } else {
        Ok((beta, iters))
    }
}

/// Pearson statistic Σ (yᵢ − μᵢ)²/V(μᵢ) at the fitted means.
fn pearson_sum(y: &DVector<f64>, mu: &DVector<f64>, fam: QuasiFamily) -> f64 {
    y.iter()
        .zip(mu.iter())
        .map(|(&yi, &mi)| {
            let r = yi - mi;
            r * r / fam.variance(mi)
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct DispersionEstimate {
    pub psi: f64,
    /// Set when the raw estimate fell below the floor (an exact fit).
    pub exact_fit: bool,
    /// Penalty level chosen by cross-validation (L1 mode only).
    pub lambda: Option<f64>,
    /// Nonzero-coefficient count of the L1 solution (L1 mode only).
    pub nonzero: Option<usize>,
}

impl DispersionEstimate {
    fn plain(psi_raw: f64) -> Self {
        Self {
            psi: psi_raw.max(PSI_FLOOR),
            exact_fit: psi_raw < PSI_FLOOR,
            lambda: None,
            nonzero: None,
        }
    }
}

/// Dispersion estimate ψ̂ for the given family and mode.
pub fn estimate_dispersion(
    d: &Dataset,
    fam: QuasiFamily,
    mode: &DispersionMode,
) -> Result<DispersionEstimate> {
    match mode {
        DispersionMode::FixedValue(psi) => {
            if !(*psi > 0.0) || !psi.is_finite() {
                return Err(Error::NonPositiveDispersion { value: *psi });
            }
            Ok(DispersionEstimate {
                psi: *psi,
                exact_fit: false,
                lambda: None,
                nonzero: None,
            })
        }
        DispersionMode::FullModelQmle => {
            let (n, p) = (d.n(), d.p());
            if n <= p {
                return Err(Error::InsufficientSamples { n, required: p });
            }
            let (beta, _) = fit_qmle(d.y(), d.x(), fam, NewtonSettings::default())?;
            let mu = (d.x() * &beta).map(|e| fam.mu(e));
            let raw = pearson_sum(d.y(), &mu, fam) / (n - p) as f64;
            Ok(DispersionEstimate::plain(raw))
        }
        DispersionMode::L1Regularized { lambda_grid } => {
            match fam {
                QuasiFamily::LinearIdentity | QuasiFamily::PoissonLog => {}
                other => {
                    return Err(Error::WrongFamily {
                        expected: "linear-identity or poisson-log",
                        found: other.name().to_string(),
                    })
                }
            }
            let n = d.n();
            if n <= 1 {
                return Err(Error::InsufficientSamples { n, required: 1 });
            }
            let fit = lasso::lasso_path_cv(d.y(), d.x(), fam, lambda_grid.as_deref())?;
            let k = fit.nonzero;
            if n <= k {
                return Err(Error::InsufficientSamples { n, required: k });
            }
            let mu = (d.x() * &fit.beta).map(|e| fam.mu(e));
            let raw = pearson_sum(d.y(), &mu, fam) / (n - k) as f64;
            let mut est = DispersionEstimate::plain(raw);
            est.lambda = Some(fit.lambda);
            est.nonzero = Some(k);
            Ok(est)
        }
    }
}

/// Moment-matched negative-binomial overdispersion: the θ for which the
/// NB-weighted Pearson statistic at the full-model Poisson fit equals n − p.
/// Returns the cap 1e6 when the data show no overdispersion.
pub fn estimate_nb_theta(d: &Dataset) -> Result<f64> {
    let (n, p) = (d.n(), d.p());
    if n <= p {
        return Err(Error::InsufficientSamples { n, required: p });
    }
    for (i, v) in d.y().iter().enumerate() {
        if *v < 0.0 {
            return Err(Error::NegativeResponse { row: i });
        }
    }
    let (beta, _) = fit_qmle(d.y(), d.x(), QuasiFamily::PoissonLog, NewtonSettings::default())?;
    let mu = (d.x() * &beta).map(|e| e.exp());
    let target = (n - p) as f64;
    let stat = |theta: f64| -> f64 {
        d.y()
            .iter()
            .zip(mu.iter())
            .map(|(&yi, &mi)| {
                let r = yi - mi;
                r * r / (mi + mi * mi / theta)
            })
            .sum::<f64>()
    };
    let (lo, hi) = (1e-3, 1e6);
    // stat is increasing in theta.
    if stat(hi) <= target {
        return Ok(hi);
    }
    if stat(lo) >= target {
        return Ok(lo);
    }
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if stat(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-12 {
            break;
        }
    }
    Ok((lo * hi).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dataset(y: Vec<f64>, rows: usize, cols: usize, x: &[f64]) -> Dataset {
        let names = (0..cols).map(|j| format!("c{j}")).collect();
        Dataset::new(
            DVector::from_vec(y),
            DMatrix::from_row_slice(rows, cols, x),
            names,
        )
        .unwrap()
    }

    #[test]
    fn linear_zero_case() {
        let d = dataset(vec![0.0], 1, 1, &[0.0]);
        let g = ModelIndicator::with_active(1, &[0], &[]).unwrap();
        let v = quasi_loglik(
            &d,
            &g,
            &DVector::from_vec(vec![0.0]),
            1.0,
            QuasiFamily::LinearIdentity,
        )
        .unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn poisson_minus_one_case() {
        let d = dataset(vec![1.0], 1, 1, &[0.0]);
        let g = ModelIndicator::with_active(1, &[0], &[]).unwrap();
        let v = quasi_loglik(
            &d,
            &g,
            &DVector::from_vec(vec![0.0]),
            1.0,
            QuasiFamily::PoissonLog,
        )
        .unwrap();
        assert_relative_eq!(v, -1.0);
    }

    #[test]
    fn matches_naive_summation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 5;
        let x: Vec<f64> = (0..n * 2).map(|_| rng.random::<f64>() - 0.5).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..6) as f64).collect();
        let d = dataset(y.clone(), n, 2, &x);
        let g = ModelIndicator::with_active(2, &[0, 1], &[]).unwrap();
        let beta = DVector::from_vec(vec![0.3, -0.2]);
        let psi = 1.7;
        let v = quasi_loglik(&d, &g, &beta, psi, QuasiFamily::PoissonLog).unwrap();
        // Independent term-by-term summation of the kernel.
        let mut naive = 0.0;
        for i in 0..n {
            let eta = x[i * 2] * 0.3 + x[i * 2 + 1] * (-0.2);
            naive += (y[i] * eta - eta.exp()) / psi;
        }
        assert_relative_eq!(v, naive, max_relative = 1e-12);
    }

    #[test]
    fn dispersion_factors_out() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 8;
        let x: Vec<f64> = (0..n * 2).map(|_| rng.random::<f64>() - 0.5).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64).collect();
        let d = dataset(y, n, 2, &x);
        let g = ModelIndicator::with_active(2, &[0, 1], &[]).unwrap();
        let beta = DVector::from_vec(vec![0.4, 0.1]);
        for fam in [
            QuasiFamily::LinearIdentity,
            QuasiFamily::PoissonLog,
            QuasiFamily::negbin(2.5).unwrap(),
        ] {
            let at_one = quasi_loglik(&d, &g, &beta, 1.0, fam).unwrap();
            for psi in [0.3, 2.0, 11.0] {
                let v = quasi_loglik(&d, &g, &beta, psi, fam).unwrap();
                assert_relative_eq!(v, at_one / psi, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn linear_neg_hessian_is_exact_gram() {
        let d = dataset(vec![1.0, 2.0, 0.5], 3, 2, &[1.0, 0.2, 1.0, -0.4, 1.0, 0.9]);
        let g = ModelIndicator::with_active(2, &[0, 1], &[]).unwrap();
        let psi = 2.0;
        let eval = quasi_eval(
            &d,
            &g,
            &DVector::from_vec(vec![0.7, -0.3]),
            psi,
            QuasiFamily::LinearIdentity,
        )
        .unwrap();
        let expected = d.x().transpose() * d.x() / psi;
        assert_relative_eq!(eval.neg_hessian[(0, 0)], expected[(0, 0)]);
        assert_relative_eq!(eval.neg_hessian[(0, 1)], expected[(0, 1)]);
        assert_relative_eq!(eval.neg_hessian[(1, 1)], expected[(1, 1)]);
        // For families satisfying the concavity identity both Hessians agree.
        assert_relative_eq!(
            eval.fisher_neg_hessian[(0, 1)],
            eval.neg_hessian[(0, 1)],
            max_relative = 1e-14
        );
    }

    #[test]
    fn hessians_are_symmetric_and_fisher_is_psd() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for fam in [
            QuasiFamily::LinearIdentity,
            QuasiFamily::PoissonLog,
            QuasiFamily::negbin(1.5).unwrap(),
        ] {
            for _ in 0..50 {
                let n = 12;
                let k = 3;
                let x: Vec<f64> = (0..n * k).map(|_| rng.random::<f64>() - 0.5).collect();
                let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..7) as f64).collect();
                let d = dataset(y, n, k, &x);
                let g = ModelIndicator::with_active(k, &[0, 1, 2], &[]).unwrap();
                let beta = DVector::from_fn(k, |_, _| rng.random::<f64>() - 0.5);
                let eval = quasi_eval(&d, &g, &beta, 1.3, fam).unwrap();
                for a in 0..k {
                    for b in 0..k {
                        assert_eq!(eval.neg_hessian[(a, b)], eval.neg_hessian[(b, a)]);
                        assert_eq!(
                            eval.fisher_neg_hessian[(a, b)],
                            eval.fisher_neg_hessian[(b, a)]
                        );
                    }
                }
                assert!(Cholesky::new(eval.fisher_neg_hessian.clone()).is_some());
                if fam.is_globally_concave() {
                    assert!(Cholesky::new(eval.neg_hessian.clone()).is_some());
                }
            }
        }
    }

    #[test]
    fn intercept_only_dispersion_is_unit() {
        let d = dataset(vec![1.0, 2.0, 3.0], 3, 1, &[1.0, 1.0, 1.0]);
        let est = estimate_dispersion(
            &d,
            QuasiFamily::LinearIdentity,
            &DispersionMode::FullModelQmle,
        )
        .unwrap();
        assert_relative_eq!(est.psi, 1.0, max_relative = 1e-10);
        assert!(!est.exact_fit);
    }

    #[test]
    fn exact_fit_is_clamped_with_flag() {
        // y lies exactly on the line through the two columns.
        let d = dataset(vec![1.0, 2.0, 3.0], 3, 2, &[1.0, 0.0, 1.0, 1.0, 1.0, 2.0]);
        let est = estimate_dispersion(
            &d,
            QuasiFamily::LinearIdentity,
            &DispersionMode::FullModelQmle,
        )
        .unwrap();
        assert_eq!(est.psi, PSI_FLOOR);
        assert!(est.exact_fit);
    }

    #[test]
    fn insufficient_samples_for_full_model() {
        let d = dataset(vec![1.0, 2.0], 2, 2, &[1.0, 0.0, 1.0, 1.0]);
        assert!(matches!(
            estimate_dispersion(
                &d,
                QuasiFamily::LinearIdentity,
                &DispersionMode::FullModelQmle
            ),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn fixed_mode_passes_through() {
        let d = dataset(vec![1.0, 2.0], 2, 1, &[1.0, 1.0]);
        let est = estimate_dispersion(
            &d,
            QuasiFamily::PoissonLog,
            &DispersionMode::FixedValue(5.5),
        )
        .unwrap();
        assert_eq!(est.psi, 5.5);
        assert!(matches!(
            estimate_dispersion(&d, QuasiFamily::PoissonLog, &DispersionMode::FixedValue(0.0)),
            Err(Error::NonPositiveDispersion { .. })
        ));
    }

    #[test]
    fn nb_theta_requires_enough_samples() {
        let d = dataset(vec![1.0, 2.0], 2, 2, &[1.0, 0.0, 1.0, 1.0]);
        assert!(matches!(
            estimate_nb_theta(&d),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn nb_theta_caps_on_equidispersed_counts() {
        // Poisson(2) draws; seed chosen so the sample Pearson statistic sits
        // below n − p and the bisection reports the near-Poisson cap.
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let n = 400;
        let lam = 2.0f64;
        let y: Vec<f64> = (0..n)
            .map(|_| rand_distr::Distribution::sample(&rand_distr::Poisson::new(lam).unwrap(), &mut rng))
            .collect();
        let x: Vec<f64> = vec![1.0; n];
        let d = dataset(y, n, 1, &x);
        let theta = estimate_nb_theta(&d).unwrap();
        assert_eq!(theta, 1e6);
    }
}
