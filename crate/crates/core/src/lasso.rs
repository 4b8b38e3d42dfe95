//! Proximal-gradient (ISTA) L1 fitting of the quasi-log-likelihood, used for
//! the regularised dispersion estimate. Columns with zero sample variance are
//! treated as intercepts and left unpenalised.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::family::QuasiFamily;
use crate::quasilik::total_kernel;

pub(crate) struct LassoFit {
    pub beta: DVector<f64>,
    pub lambda: f64,
    pub nonzero: usize,
}

const GRID_POINTS: usize = 20;
const GRID_SPAN: f64 = 1e-3;
const CV_FOLDS: usize = 5;
const MAX_ITER: usize = 1000;

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// Smooth part: f(β) = −(1/n)·Σ kernel(yᵢ, ηᵢ).
fn loss(y: &DVector<f64>, x: &DMatrix<f64>, beta: &DVector<f64>, fam: QuasiFamily) -> f64 {
    -total_kernel(y, x, beta, fam) / y.len() as f64
}

fn loss_gradient(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    beta: &DVector<f64>,
    fam: QuasiFamily,
) -> DVector<f64> {
    let eta = x * beta;
    let n = y.len();
    let score = DVector::from_fn(n, |i, _| -fam.kernel_d1(y[i], eta[i]) / n as f64);
    x.transpose() * score
}

/// ISTA with backtracking on the quadratic majorisation. Penalised coordinates
/// are soft-thresholded; others take plain gradient steps.
fn ista(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    fam: QuasiFamily,
    lambda: f64,
    penalized: &[bool],
    init: &DVector<f64>,
) -> DVector<f64> {
    let mut beta = init.clone();
    let mut f = loss(y, x, &beta, fam);
    let mut step = 1.0;
    for _ in 0..MAX_ITER {
        let grad = loss_gradient(y, x, &beta, fam);
        let mut next = beta.clone();
        // Backtrack until the majorisation holds at the proximal point.
        let mut accepted = false;
        for _ in 0..60 {
            for j in 0..beta.len() {
                let raw = beta[j] - step * grad[j];
                next[j] = if penalized[j] {
                    soft_threshold(raw, step * lambda)
                } else {
                    raw
                };
            }
            let f_next = loss(y, x, &next, fam);
            let diff = &next - &beta;
            let quad = f + grad.dot(&diff) + diff.norm_squared() / (2.0 * step);
            if f_next.is_finite() && f_next <= quad + 1e-12 {
                accepted = true;
                f = f_next;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        let delta = (&next - &beta).amax();
        let scale = 1.0 + beta.amax();
        beta = next;
        if delta <= 1e-8 * scale {
            break;
        }
        // Allow the step to grow back slowly.
        step *= 1.25;
    }
    beta
}

fn penalized_mask(x: &DMatrix<f64>) -> Vec<bool> {
    let n = x.nrows() as f64;
    (0..x.ncols())
        .map(|j| {
            let col = x.column(j);
            let mean = col.sum() / n;
            col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() > 0.0
        })
        .collect()
}

/// Smallest λ that zeroes every penalised coordinate, measured at the
/// unpenalised-only fit.
fn lambda_max(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    fam: QuasiFamily,
    penalized: &[bool],
) -> f64 {
    // Fit the unpenalised coordinates alone with a huge penalty on the rest.
    let zero = DVector::zeros(x.ncols());
    let base = ista(y, x, fam, f64::INFINITY, penalized, &zero);
    let grad = loss_gradient(y, x, &base, fam);
    let mut m = 0.0f64;
    for j in 0..x.ncols() {
        if penalized[j] {
            m = m.max(grad[j].abs());
        }
    }
    if m > 0.0 {
        m
    } else {
        1.0
    }
}

fn default_grid(lmax: f64) -> Vec<f64> {
    let lmin = lmax * GRID_SPAN;
    let ratio = (lmin / lmax).ln() / (GRID_POINTS - 1) as f64;
    (0..GRID_POINTS)
        .map(|i| lmax * (ratio * i as f64).exp())
        .collect()
}

fn split_rows(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    keep: impl Fn(usize) -> bool,
) -> (DVector<f64>, DMatrix<f64>) {
    let rows: Vec<usize> = (0..y.len()).filter(|&i| keep(i)).collect();
    let ys = DVector::from_fn(rows.len(), |i, _| y[rows[i]]);
    let xs = DMatrix::from_fn(rows.len(), x.ncols(), |i, j| x[(rows[i], j)]);
    (ys, xs)
}

/// Fits the L1 path on a log grid with warm starts and picks λ by 5-fold
/// cross-validated held-out quasi-log-likelihood (ties go to the sparser,
/// larger λ). Fold assignment is the deterministic interleaving i mod 5.
pub(crate) fn lasso_path_cv(
    y: &DVector<f64>,
    x: &DMatrix<f64>,
    fam: QuasiFamily,
    grid: Option<&[f64]>,
) -> Result<LassoFit> {
    let penalized = penalized_mask(x);
    let grid: Vec<f64> = match grid {
        Some(g) => {
            let mut g = g.to_vec();
            g.sort_by(|a, b| b.partial_cmp(a).unwrap());
            g
        }
        None => default_grid(lambda_max(y, x, fam, &penalized)),
    };
    let folds = CV_FOLDS.min(y.len());
    let mut cv_score = vec![0.0f64; grid.len()];
    for fold in 0..folds {
        let (ytr, xtr) = split_rows(y, x, |i| i % folds != fold);
        let (yte, xte) = split_rows(y, x, |i| i % folds == fold);
        if ytr.is_empty() || yte.is_empty() {
            continue;
        }
        let mut warm = DVector::zeros(x.ncols());
        for (gi, &lam) in grid.iter().enumerate() {
            let beta = ista(&ytr, &xtr, fam, lam, &penalized, &warm);
            cv_score[gi] += total_kernel(&yte, &xte, &beta, fam) / yte.len() as f64;
            warm = beta;
        }
    }
    // Grid is descending, so the first maximiser is the sparsest.
    let mut best = 0;
    for gi in 1..grid.len() {
        if cv_score[gi] > cv_score[best] {
            best = gi;
        }
    }
    let lambda = grid[best];
    // Refit on the full data, warm-starting along the path down to λ*.
    let mut warm = DVector::zeros(x.ncols());
    for &lam in grid.iter().take(best + 1) {
        warm = ista(y, x, fam, lam, &penalized, &warm);
    }
    let nonzero = warm.iter().filter(|v| **v != 0.0).count();
    Ok(LassoFit {
        beta: warm,
        lambda,
        nonzero,
    })
}
