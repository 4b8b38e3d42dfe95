//! Mean/variance adequacy diagnostics on a neutral index, and
//! variance-weighted predictive cross-validation.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use qpsel_core::seed::derive_seed;
use qpsel_core::{Dataset, PriorConfig, QuasiFamily, RunConfig};

use crate::error::{Error, Result};
use crate::runner::{fit_method, Method};

/// Bins need at least this many observations to be kept.
pub const MIN_BIN_COUNT: usize = 20;

/// One model's fitted means plus its implied-variance rule ψ·V(μ).
#[derive(Clone, Debug)]
pub struct FittedModel {
    pub label: String,
    pub fitted_mean: Vec<f64>,
    pub family: QuasiFamily,
    pub psi: f64,
}

impl FittedModel {
    pub fn implied_variance(&self, mu: f64) -> f64 {
        self.psi * self.family.variance(mu)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BinRow {
    pub bin: usize,
    pub count: usize,
    pub y_mean: f64,
    pub y_var: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelBinRow {
    pub mu_mean: f64,
    pub implied_var: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModelSummary {
    pub label: String,
    pub mean_mse: f64,
    pub mean_mae: f64,
    pub var_mse: f64,
    pub var_mae: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct BinnedDiagnostic {
    pub edges: Vec<f64>,
    pub bins: Vec<BinRow>,
    /// Per model, one row per surviving bin, aligned with `bins`.
    pub per_model: Vec<(String, Vec<ModelBinRow>)>,
    pub summaries: Vec<ModelSummary>,
}

impl BinnedDiagnostic {
    /// One CSV row per surviving bin per model.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "model,bin,count,y_mean,y_var,mu_mean,implied_var")?;
        for (label, rows) in &self.per_model {
            for (bin, row) in self.bins.iter().zip(rows) {
                writeln!(
                    w,
                    "{label},{},{},{},{},{},{}",
                    bin.bin, bin.count, bin.y_mean, bin.y_var, row.mu_mean, row.implied_var
                )?;
            }
        }
        Ok(())
    }
}

/// Empirical quantile with linear interpolation (type 7).
fn quantile_type7(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let h = (n as f64 - 1.0) * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Bins observations by deciles of the neutral index (the average of the
/// supplied fitted means), drops bins with fewer than 20 observations, and
/// summarises empirical and model-implied means and variances per bin.
pub fn binned_mean_variance(d: &Dataset, models: &[FittedModel]) -> Result<BinnedDiagnostic> {
    assert!(!models.is_empty(), "at least one fitted model is required");
    let n = d.n();
    for m in models {
        assert_eq!(m.fitted_mean.len(), n, "fitted means must cover every row");
    }
    let index: Vec<f64> = (0..n)
        .map(|i| models.iter().map(|m| m.fitted_mean[i]).sum::<f64>() / models.len() as f64)
        .collect();
    let mut sorted = index.clone();
    sorted.sort_by(f64::total_cmp);
    let mut edges: Vec<f64> = (1..10)
        .map(|k| quantile_type7(&sorted, k as f64 / 10.0))
        .collect();
    // Tied quantiles collapse their bins.
    edges.dedup();
    let n_bins = edges.len() + 1;
    let bin_of = |v: f64| -> usize { edges.partition_point(|&e| e < v) };

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_bins];
    for (i, &v) in index.iter().enumerate() {
        members[bin_of(v)].push(i);
    }
    let surviving: Vec<(usize, &Vec<usize>)> = members
        .iter()
        .enumerate()
        .filter(|(_, m)| m.len() >= MIN_BIN_COUNT)
        .collect();
    if surviving.len() < 3 {
        return Err(Error::TooFewBins {
            surviving: surviving.len(),
            min_count: MIN_BIN_COUNT,
        });
    }

    let mut bins = Vec::with_capacity(surviving.len());
    for &(b, members) in &surviving {
        let count = members.len();
        let y_mean = members.iter().map(|&i| d.y()[i]).sum::<f64>() / count as f64;
        let y_var = members
            .iter()
            .map(|&i| (d.y()[i] - y_mean).powi(2))
            .sum::<f64>()
            / (count as f64 - 1.0);
        bins.push(BinRow {
            bin: b,
            count,
            y_mean,
            y_var,
        });
    }

    let mut per_model = Vec::with_capacity(models.len());
    let mut summaries = Vec::with_capacity(models.len());
    for m in models {
        let mut rows = Vec::with_capacity(surviving.len());
        for &(_, members) in &surviving {
            let mu_mean =
                members.iter().map(|&i| m.fitted_mean[i]).sum::<f64>() / members.len() as f64;
            rows.push(ModelBinRow {
                mu_mean,
                implied_var: m.implied_variance(mu_mean),
            });
        }
        let k = rows.len() as f64;
        let mean_mse = bins
            .iter()
            .zip(&rows)
            .map(|(b, r)| (b.y_mean - r.mu_mean).powi(2))
            .sum::<f64>()
            / k;
        let mean_mae = bins
            .iter()
            .zip(&rows)
            .map(|(b, r)| (b.y_mean - r.mu_mean).abs())
            .sum::<f64>()
            / k;
        let var_mse = bins
            .iter()
            .zip(&rows)
            .map(|(b, r)| (b.y_var - r.implied_var).powi(2))
            .sum::<f64>()
            / k;
        let var_mae = bins
            .iter()
            .zip(&rows)
            .map(|(b, r)| (b.y_var - r.implied_var).abs())
            .sum::<f64>()
            / k;
        per_model.push((m.label.clone(), rows));
        summaries.push(ModelSummary {
            label: m.label.clone(),
            mean_mse,
            mean_mae,
            var_mse,
            var_mae,
        });
    }
    Ok(BinnedDiagnostic {
        edges,
        bins,
        per_model,
        summaries,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct WmseRow {
    pub method: String,
    pub wmse_mean: f64,
    pub wmse_se: f64,
}

/// Variance-weighted mean squared error (1/n)·Σ (yᵢ − μ̂ᵢ)²/V̂ᵢ. With unit
/// weights this is the plain held-out MSE.
pub fn weighted_mse(y: &[f64], mu: &[f64], var: &[f64]) -> f64 {
    let n = y.len() as f64;
    y.iter()
        .zip(mu)
        .zip(var)
        .map(|((&yi, &mi), &vi)| (yi - mi).powi(2) / vi)
        .sum::<f64>()
        / n
}

fn subset_rows(d: &Dataset, rows: &[usize]) -> Dataset {
    let y = DVector::from_fn(rows.len(), |i, _| d.y()[rows[i]]);
    let x = DMatrix::from_fn(rows.len(), d.p(), |i, j| d.x()[(rows[i], j)]);
    Dataset::new(y, x, d.column_names().to_vec()).expect("row subset stays valid")
}

/// Response-stratified fold labels: rows are ordered by y and fold labels are
/// shuffled within consecutive blocks, so every fold spans the response range.
fn fold_assignment(d: &Dataset, folds: usize, seed: u64) -> Vec<usize> {
    let n = d.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d.y()[a].total_cmp(&d.y()[b]).then(a.cmp(&b)));
    let mut assignment = vec![0usize; n];
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 0xF01D]));
    let mut labels: Vec<usize> = (0..folds).collect();
    for (block, chunk) in order.chunks(folds).enumerate() {
        let _ = block;
        labels.shuffle(&mut rng);
        for (slot, &row) in chunk.iter().enumerate() {
            assignment[row] = labels[slot];
        }
    }
    assignment
}

/// Ten-fold (by default) cross-validated, variance-weighted mean squared
/// error. Each training fold reruns the full pipeline — dispersion, Gibbs
/// selection, MAP refit — and held-out residuals are weighted by the model's
/// own implied variance.
pub fn cv_wmse(
    d: &Dataset,
    methods: &[Method],
    prior: &PriorConfig,
    run: &RunConfig,
    folds: usize,
    seed: u64,
    forced: &[usize],
) -> Result<Vec<WmseRow>> {
    if d.n() < folds * 5 {
        return Err(Error::TooFewSamplesForCv { n: d.n(), folds });
    }
    let assignment = fold_assignment(d, folds, seed);
    let mut per_method: Vec<Vec<f64>> = vec![Vec::with_capacity(folds); methods.len()];
    for fold in 0..folds {
        let train_rows: Vec<usize> = (0..d.n()).filter(|&i| assignment[i] != fold).collect();
        let test_rows: Vec<usize> = (0..d.n()).filter(|&i| assignment[i] == fold).collect();
        let train = subset_rows(d, &train_rows);
        for (mi, &method) in methods.iter().enumerate() {
            let mut fold_run = run.clone();
            fold_run.seed = derive_seed(&[run.seed, fold as u64, method.seed_id()]);
            let fitted = fit_method(&train, method, prior, &fold_run, forced)?;
            let mut y_test = Vec::with_capacity(test_rows.len());
            let mut mu_test = Vec::with_capacity(test_rows.len());
            let mut var_test = Vec::with_capacity(test_rows.len());
            for &i in &test_rows {
                let eta: f64 = (0..d.p()).map(|j| d.x()[(i, j)] * fitted.refit_beta[j]).sum();
                let mu = fitted.family.mu(eta);
                y_test.push(d.y()[i]);
                var_test.push(fitted.implied_variance(mu));
                mu_test.push(mu);
            }
            per_method[mi].push(weighted_mse(&y_test, &mu_test, &var_test));
        }
    }
    Ok(methods
        .iter()
        .zip(per_method)
        .map(|(m, scores)| {
            let k = scores.len() as f64;
            let mean = scores.iter().sum::<f64>() / k;
            let se = if scores.len() < 2 {
                0.0
            } else {
                (scores.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0) / k).sqrt()
            };
            WmseRow {
                method: m.label(),
                wmse_mean: mean,
                wmse_se: se,
            }
        })
        .collect())
}
