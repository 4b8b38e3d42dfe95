//! Random-scan Gibbs sampling over inclusion indicators, exact enumeration
//! for small p, and coefficient sampling conditional on a selected model.

use std::collections::HashSet;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use crate::config::{PriorConfig, RunConfig, Sparsity};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::family::QuasiFamily;
use crate::indicator::ModelIndicator;
use crate::marginal::{map_estimate, CacheStats, EvalCache};
use crate::quasilik::{cholesky_with_jitter, total_kernel, weighted_gram};

/// Numerically stable 1/(1 + e^{-x}).
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug)]
pub struct SamplerOutput {
    /// One indicator per sweep, recorded after the full scan.
    pub gamma_draws: Vec<ModelIndicator>,
    /// Sparsity draws; absent under a fixed w.
    pub w_draws: Option<Vec<f64>>,
    /// Rao-Blackwellised inclusion probabilities over post-burn-in sweeps.
    pub rb_ppi: Vec<f64>,
    /// Running RB averages over all sweeps, one row per sweep.
    pub cumulative_ppi: Vec<Vec<f64>>,
    pub cache_stats: CacheStats,
    /// Distinct models whose marginal was requested during the run.
    pub visited_models: usize,
}

impl SamplerOutput {
    /// CSV of the cumulative RB traces, one column per predictor.
    pub fn write_cumulative_ppi_csv<W: Write>(&self, names: &[String], mut w: W) -> Result<()> {
        writeln!(w, "sweep,{}", names.join(","))?;
        for (t, row) in self.cumulative_ppi.iter().enumerate() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{},{}", t + 1, cells.join(","))?;
        }
        Ok(())
    }

    pub fn write_rb_ppi_csv<W: Write>(&self, names: &[String], mut w: W) -> Result<()> {
        writeln!(w, "column,rb_ppi")?;
        for (name, v) in names.iter().zip(&self.rb_ppi) {
            writeln!(w, "{name},{v}")?;
        }
        Ok(())
    }

    /// Hex bit-pattern per sweep, gzip-compressed.
    pub fn write_gamma_draws_gz<W: Write>(&self, w: W) -> Result<()> {
        let mut enc = flate2::write::GzEncoder::new(w, flate2::Compression::default());
        for g in &self.gamma_draws {
            writeln!(enc, "{}", g.bits_hex())?;
        }
        enc.finish()?;
        Ok(())
    }
}

/// Runs the random-scan Gibbs sampler from the given initial state. Each sweep
/// scans a fresh uniform permutation of the columns, resamples every free
/// indicator from its conditional Bernoulli, then (under a Beta prior)
/// resamples w from Beta(a + |γ|₀, b + p − |γ|₀).
pub fn gibbs_run(
    d: &Dataset,
    fam: QuasiFamily,
    prior: &PriorConfig,
    run: &RunConfig,
    psi: f64,
    init: &ModelIndicator,
) -> Result<SamplerOutput> {
    gibbs_run_with_cache(d, fam, prior, run, psi, init).map(|(out, _)| out)
}

/// As `gibbs_run`, additionally handing back the model cache for audit dumps.
pub fn gibbs_run_with_cache(
    d: &Dataset,
    fam: QuasiFamily,
    prior: &PriorConfig,
    run: &RunConfig,
    psi: f64,
    init: &ModelIndicator,
) -> Result<(SamplerOutput, EvalCache)> {
    prior.validate()?;
    run.validate()?;
    init.check_forced_included()?;
    if init.p() != d.p() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "indicator covers {} columns but the design has {}",
                init.p(),
                d.p()
            ),
        });
    }
    let p = d.p();
    let settings = run.newton();
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let mut cache = EvalCache::new(run.cache_cap);
    let mut visited: HashSet<ModelIndicator> = HashSet::new();

    let (beta_hyper, mut w) = match prior.sparsity {
        Sparsity::Fixed(w) => (None, w),
        Sparsity::BetaBinomial { a, b } => (Some((a, b)), a / (a + b)),
    };

    let mut gamma = init.clone();
    let mut perm: Vec<usize> = (0..p).collect();
    let mut gamma_draws = Vec::with_capacity(run.sweeps);
    let mut w_draws = beta_hyper.map(|_| Vec::with_capacity(run.sweeps));
    let mut cum = vec![0.0f64; p];
    let mut post = vec![0.0f64; p];
    let mut cumulative_ppi = Vec::with_capacity(run.sweeps);

    for sweep in 0..run.sweeps {
        perm.shuffle(&mut rng);
        let mut probs = vec![1.0f64; p];
        let log_odds_prior = w.ln() - (-w).ln_1p();
        for &j in &perm {
            if gamma.is_forced(j) {
                continue;
            }
            let plus = gamma.including(j);
            let minus = gamma.excluding(j);
            let mut misses = cache.stats().misses;
            let lf_plus = cache
                .get_or_eval(d, &plus, psi, fam, prior, settings)?
                .log_qmarginal;
            if cache.stats().misses != misses {
                visited.insert(plus.clone());
            }
            misses = cache.stats().misses;
            let lf_minus = cache
                .get_or_eval(d, &minus, psi, fam, prior, settings)?
                .log_qmarginal;
            if cache.stats().misses != misses {
                visited.insert(minus.clone());
            }
            let p_incl = sigmoid(lf_plus - lf_minus + log_odds_prior);
            probs[j] = p_incl;
            gamma = if rng.random::<f64>() < p_incl {
                plus
            } else {
                minus
            };
        }
        if let Some((a, b)) = beta_hyper {
            let k = gamma.size() as f64;
            let post_beta = Beta::new(a + k, b + (p as f64 - k)).map_err(|e| {
                Error::InvalidConfig {
                    context: format!("invalid Beta posterior: {e}"),
                }
            })?;
            w = post_beta.sample(&mut rng);
            w_draws.as_mut().expect("beta prior implies w draws").push(w);
        }
        gamma_draws.push(gamma.clone());
        for j in 0..p {
            cum[j] += probs[j];
            if sweep >= run.burn_in {
                post[j] += probs[j];
            }
        }
        cumulative_ppi.push(cum.iter().map(|s| s / (sweep + 1) as f64).collect());
    }

    let kept = (run.sweeps - run.burn_in) as f64;
    let rb_ppi = post.iter().map(|s| s / kept).collect();
    let output = SamplerOutput {
        gamma_draws,
        w_draws,
        rb_ppi,
        cumulative_ppi,
        cache_stats: cache.stats(),
        visited_models: visited.len(),
    };
    Ok((output, cache))
}

#[derive(Clone, Debug)]
pub struct ExactModel {
    pub gamma: ModelIndicator,
    pub log_qmarginal: f64,
    pub prob: f64,
}

#[derive(Clone, Debug)]
pub struct ExactPosterior {
    pub models: Vec<ExactModel>,
    pub ppi: Vec<f64>,
}

pub const ENUMERATION_MAX_P: usize = 15;

/// Normalises model scores by log-sum-exp; scores are log f̃ + log prior.
fn posterior_from_log_scores(items: Vec<(ModelIndicator, f64, f64)>, p: usize) -> ExactPosterior {
    let max = items
        .iter()
        .map(|(_, _, s)| *s)
        .fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = items.iter().map(|(_, _, s)| (s - max).exp()).sum();
    let mut ppi = vec![0.0f64; p];
    let models = items
        .into_iter()
        .map(|(gamma, logf, score)| {
            let prob = (score - max).exp() / total;
            for j in gamma.active_indices() {
                ppi[j] += prob;
            }
            ExactModel {
                gamma,
                log_qmarginal: logf,
                prob,
            }
        })
        .collect();
    ExactPosterior { models, ppi }
}

/// Exhaustive model posterior under a fixed w: π̃(γ) ∝ f̃(γ)·w^|γ|₀(1−w)^{p−|γ|₀}
/// over every model containing the forced-in columns.
pub fn enumerate_exact(
    d: &Dataset,
    fam: QuasiFamily,
    prior: &PriorConfig,
    psi: f64,
    forced: &[usize],
) -> Result<ExactPosterior> {
    let p = d.p();
    if p > ENUMERATION_MAX_P {
        return Err(Error::TooManyPredictors {
            p,
            max: ENUMERATION_MAX_P,
        });
    }
    let w = match prior.sparsity {
        Sparsity::Fixed(w) => w,
        Sparsity::BetaBinomial { .. } => return Err(Error::RequiresFixedSparsity),
    };
    prior.validate()?;
    let base = ModelIndicator::new(p, forced)?;
    let free = base.free_indices();
    let settings = crate::config::NewtonSettings::default();
    let mut cache = EvalCache::new(None);
    let mut items = Vec::with_capacity(1 << free.len());
    for mask in 0u64..(1u64 << free.len()) {
        let mut gamma = base.clone();
        for (bit, &j) in free.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                gamma = gamma.including(j);
            }
        }
        let logf = cache
            .get_or_eval(d, &gamma, psi, fam, prior, settings)?
            .log_qmarginal;
        let k = gamma.size() as f64;
        let score = logf + k * w.ln() + (p as f64 - k) * (-w).ln_1p();
        items.push((gamma, logf, score));
    }
    Ok(posterior_from_log_scores(items, p))
}

/// Draws from the quasi-posterior of β given a selected model: a Gaussian
/// N(β̃, M⁻¹) proposal with an optional independence-Metropolis correction
/// toward exp{nQₙ + log π}. Inactive coordinates are exactly zero.
pub fn sample_beta_given_gamma(
    d: &Dataset,
    gamma: &ModelIndicator,
    fam: QuasiFamily,
    prior: &PriorConfig,
    psi: f64,
    n_draws: usize,
    seed: u64,
    mh_correction: bool,
) -> Result<DMatrix<f64>> {
    gamma.check_forced_included()?;
    let p = d.p();
    let k = gamma.size();
    let mut out = DMatrix::zeros(n_draws, p);
    if k == 0 {
        return Ok(out);
    }
    let settings = crate::config::NewtonSettings::default();
    let map = map_estimate(d, gamma, psi, fam, prior, None, settings)?;
    let xg = d.submatrix(gamma)?;
    let y = d.y();
    let s2 = prior.slab_variance;
    let eta = &xg * &map.beta;
    let d_obs = DVector::from_fn(y.len(), |i, _| -fam.kernel_d2(y[i], eta[i]));
    let mut m = weighted_gram(&xg, &d_obs) / psi;
    for i in 0..k {
        m[(i, i)] += 1.0 / s2;
    }
    let (chol, _) = cholesky_with_jitter(&m, 6)?;
    let l = chol.l();
    let lt = l.transpose();

    let log_target = |beta: &DVector<f64>| -> f64 {
        total_kernel(y, &xg, beta, fam) / psi - beta.norm_squared() / (2.0 * s2)
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let active = gamma.active_indices();
    // Chain state starts at the mode (proposal density peak, log q = 0).
    let mut cur = map.beta.clone();
    let mut cur_weight = log_target(&cur);
    for t in 0..n_draws {
        let z = DVector::from_fn(k, |_, _| {
            <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
        });
        let offset = lt
            .solve_upper_triangular(&z)
            .ok_or(Error::SingularHessian)?;
        let proposal = &map.beta + offset;
        if mh_correction {
            let prop_weight = log_target(&proposal) + 0.5 * z.norm_squared();
            let log_alpha = prop_weight - cur_weight;
            if log_alpha >= 0.0 || rng.random::<f64>() < log_alpha.exp() {
                cur = proposal;
                cur_weight = prop_weight;
            }
            for (rank, &j) in active.iter().enumerate() {
                out[(t, j)] = cur[rank];
            }
        } else {
            for (rank, &j) in active.iter().enumerate() {
                out[(t, j)] = proposal[rank];
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sigmoid_matches_alg_formula() {
        // Equal marginals, w = 0.5 → probability one half.
        assert_eq!(sigmoid(0.0), 0.5);
        // Unit Bayes factor, w = 0.75 → (1 + (1−w)/w)⁻¹ = 0.75.
        let w: f64 = 0.75;
        let p = sigmoid(0.0 + w.ln() - (1.0 - w).ln());
        assert_relative_eq!(p, 0.75, max_relative = 1e-12);
        // Extreme log-odds stay in [0, 1].
        assert!(sigmoid(1e4) <= 1.0);
        assert!(sigmoid(-1e4) >= 0.0);
    }

    #[test]
    fn exact_posterior_hand_example() {
        // p = 2, log-marginals {0, 0, 0, ln 3} for {∅, {0}, {1}, {0,1}}, w = ½:
        // each model's prior weight is ¼, so π({0,1}) = 3/6 and ppi = 4/6.
        let p = 2;
        let w: f64 = 0.5;
        let mut items = Vec::new();
        for (active, logf) in [
            (vec![], 0.0),
            (vec![0], 0.0),
            (vec![1], 0.0),
            (vec![0, 1], 3.0f64.ln()),
        ] {
            let gamma = ModelIndicator::with_active(p, &active, &[]).unwrap();
            let k = gamma.size() as f64;
            let score = logf + k * w.ln() + (p as f64 - k) * (1.0 - w).ln();
            items.push((gamma, logf, score));
        }
        let post = posterior_from_log_scores(items, p);
        assert_relative_eq!(post.models[3].prob, 0.5, max_relative = 1e-12);
        assert_relative_eq!(post.ppi[0], 4.0 / 6.0, max_relative = 1e-12);
        assert_relative_eq!(post.ppi[1], 4.0 / 6.0, max_relative = 1e-12);
    }

    #[test]
    fn symmetric_single_predictor() {
        let p = 1;
        let w: f64 = 0.5;
        let g0 = ModelIndicator::new(p, &[]).unwrap();
        let g1 = g0.including(0);
        let items = vec![
            (g0, 0.0, 0.0 + (1.0f64 - w).ln()),
            (g1, 0.0, 0.0 + w.ln()),
        ];
        let post = posterior_from_log_scores(items, p);
        assert_relative_eq!(post.models[0].prob, 0.5);
        assert_relative_eq!(post.ppi[0], 0.5);
    }
}
