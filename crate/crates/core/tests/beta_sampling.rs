//! Coefficient sampling given a selected model.

use nalgebra::{DMatrix, DVector};
use qpsel_core::{
    map_estimate, sample_beta_given_gamma, Dataset, ModelIndicator, NewtonSettings, PriorConfig,
    QuasiFamily, Sparsity,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn prior() -> PriorConfig {
    PriorConfig {
        slab_variance: 9.0,
        sparsity: Sparsity::Fixed(0.5),
    }
}

#[test]
fn empty_model_yields_zero_rows() {
    let d = Dataset::new(
        DVector::from_vec(vec![1.0, 2.0]),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 1.0, -0.3]),
        vec!["a".into(), "b".into()],
    )
    .unwrap();
    let gamma = ModelIndicator::new(2, &[]).unwrap();
    let draws =
        sample_beta_given_gamma(&d, &gamma, QuasiFamily::LinearIdentity, &prior(), 1.0, 7, 3, true)
            .unwrap();
    assert_eq!(draws.nrows(), 7);
    assert!(draws.iter().all(|&v| v == 0.0));
}

#[test]
fn linear_target_equals_proposal_so_nothing_is_rejected() {
    // For the linear family the Gaussian proposal IS the quasi-posterior, so
    // the Metropolis step accepts every move (up to rounding): consecutive
    // draws never repeat, and the sample moments match the exact posterior.
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let n = 40;
    let x: Vec<f64> = (0..n * 2).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 1.2 * x[i * 2] - 0.6 * x[i * 2 + 1] + (rng.random::<f64>() - 0.5))
        .collect();
    let d = Dataset::new(
        DVector::from_vec(y),
        DMatrix::from_row_slice(n, 2, &x),
        vec!["a".into(), "b".into()],
    )
    .unwrap();
    let gamma = ModelIndicator::with_active(2, &[0, 1], &[]).unwrap();
    let n_draws = 4000;
    let draws = sample_beta_given_gamma(
        &d,
        &gamma,
        QuasiFamily::LinearIdentity,
        &prior(),
        1.0,
        n_draws,
        11,
        true,
    )
    .unwrap();
    let mut repeats = 0;
    for t in 1..n_draws {
        if draws[(t, 0)] == draws[(t - 1, 0)] && draws[(t, 1)] == draws[(t - 1, 1)] {
            repeats += 1;
        }
    }
    assert_eq!(repeats, 0, "independence proposal should always accept");

    let map = map_estimate(
        &d,
        &gamma,
        1.0,
        QuasiFamily::LinearIdentity,
        &prior(),
        None,
        NewtonSettings::default(),
    )
    .unwrap();
    for j in 0..2 {
        let col: Vec<f64> = (0..n_draws).map(|t| draws[(t, j)]).collect();
        let mean = col.iter().sum::<f64>() / n_draws as f64;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_draws - 1) as f64)
            .sqrt();
        let se = sd / (n_draws as f64).sqrt();
        assert!(
            (mean - map.beta[j]).abs() <= 4.0 * se,
            "component {j}: mean {mean} vs mode {}",
            map.beta[j]
        );
    }
}

#[test]
fn poisson_sample_mean_tracks_the_mode() {
    // Near-Gaussian regime: at this n the posterior mean–mode gap is small
    // relative to the Monte-Carlo error of the sample mean.
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let n = 400;
    let x: Vec<f64> = (0..n * 2).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| {
            let mu = (0.8 + 0.7 * x[i * 2 + 1]).exp();
            (mu + (rng.random::<f64>() - 0.5) * mu.sqrt()).round().max(0.0)
        })
        .collect();
    let d = Dataset::new(
        DVector::from_vec(y),
        DMatrix::from_row_slice(n, 2, &x),
        vec!["a".into(), "b".into()],
    )
    .unwrap();
    let gamma = ModelIndicator::with_active(2, &[0, 1], &[]).unwrap();
    let n_draws = 2000;
    let draws = sample_beta_given_gamma(
        &d,
        &gamma,
        QuasiFamily::PoissonLog,
        &prior(),
        1.0,
        n_draws,
        13,
        true,
    )
    .unwrap();
    let map = map_estimate(
        &d,
        &gamma,
        1.0,
        QuasiFamily::PoissonLog,
        &prior(),
        None,
        NewtonSettings::default(),
    )
    .unwrap();
    for j in 0..2 {
        let col: Vec<f64> = (0..n_draws).map(|t| draws[(t, j)]).collect();
        let mean = col.iter().sum::<f64>() / n_draws as f64;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_draws - 1) as f64)
            .sqrt();
        let se = sd / (n_draws as f64).sqrt();
        assert!(
            (mean - map.beta[j]).abs() <= 3.0 * se,
            "component {j}: mean {mean} vs mode {} (se {se})",
            map.beta[j]
        );
    }
}

#[test]
fn inactive_coordinates_are_exactly_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let n = 30;
    let p = 4;
    let x: Vec<f64> = (0..n * p).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
    let y: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
    let d = Dataset::new(
        DVector::from_vec(y),
        DMatrix::from_row_slice(n, p, &x),
        (0..p).map(|j| format!("c{j}")).collect(),
    )
    .unwrap();
    let gamma = ModelIndicator::with_active(p, &[1, 3], &[]).unwrap();
    let draws = sample_beta_given_gamma(
        &d,
        &gamma,
        QuasiFamily::LinearIdentity,
        &prior(),
        1.0,
        50,
        17,
        true,
    )
    .unwrap();
    for t in 0..50 {
        assert_eq!(draws[(t, 0)], 0.0);
        assert_eq!(draws[(t, 2)], 0.0);
        assert!(draws[(t, 1)] != 0.0 || draws[(t, 3)] != 0.0);
    }
}
