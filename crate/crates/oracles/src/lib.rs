//! Independent numerical oracles for tests.
//!
//! Everything here is deliberately self-contained: the kernels are hand-coded
//! rather than imported so agreement with the library is a genuine
//! cross-check of two routes, not one code path tested against itself.

/// Which quasi-log-likelihood kernel the oracle integrates.
#[derive(Clone, Copy, Debug)]
pub enum OracleKernel {
    /// y·η − η²/2
    Linear,
    /// y·η − e^η
    PoissonLog,
}

impl OracleKernel {
    fn eval(&self, y: f64, eta: f64) -> f64 {
        match self {
            OracleKernel::Linear => y * eta - 0.5 * eta * eta,
            OracleKernel::PoissonLog => y * eta - eta.exp(),
        }
    }

    fn eval_d1(&self, y: f64, eta: f64) -> f64 {
        match self {
            OracleKernel::Linear => y - eta,
            OracleKernel::PoissonLog => y - eta.exp(),
        }
    }
}

const LN_2PI: f64 = 1.8378770664093453;
const BOX: f64 = 30.0;

/// Log unnormalised integrand of the marginal integral at a point:
/// Σᵢ[kernel(yᵢ, xᵢᵀβ) + shiftᵢ]/ψ + log N(β; 0, s²I).
fn log_integrand(
    y: &[f64],
    x: &[Vec<f64>],
    beta: &[f64],
    psi: f64,
    s2: f64,
    kernel: OracleKernel,
    shift: Option<&[f64]>,
) -> f64 {
    let mut total = 0.0;
    for (i, (&yi, row)) in y.iter().zip(x.iter()).enumerate() {
        let eta: f64 = row.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
        let mut v = kernel.eval(yi, eta);
        if let Some(c) = shift {
            v += c[i];
        }
        total += v;
    }
    let k = beta.len() as f64;
    let quad: f64 = beta.iter().map(|b| b * b).sum();
    total / psi - 0.5 * k * (LN_2PI + s2.ln()) - quad / (2.0 * s2)
}

fn simpson_weights(n_panels: usize) -> impl Iterator<Item = (usize, f64)> {
    // n_panels even; nodes 0..=n_panels with weights 1,4,2,4,...,4,1.
    (0..=n_panels).map(move |i| {
        let w = if i == 0 || i == n_panels {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        (i, w)
    })
}

/// Adaptive 1-D composite Simpson quadrature of the marginal integral over
/// β ∈ [−30, 30]. Returns the log of the integral.
pub fn log_marginal_quadrature_1d(
    y: &[f64],
    x: &[f64],
    psi: f64,
    s2: f64,
    kernel: OracleKernel,
    shift: Option<&[f64]>,
) -> f64 {
    let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
    // Coarse scan locates the peak so everything is exponentiated safely.
    let mut gmax = f64::NEG_INFINITY;
    let scan = 4000;
    for i in 0..=scan {
        let b = -BOX + 2.0 * BOX * i as f64 / scan as f64;
        gmax = gmax.max(log_integrand(y, &rows, &[b], psi, s2, kernel, shift));
    }
    let mut prev = f64::NAN;
    let mut n_panels = 512;
    loop {
        let h = 2.0 * BOX / n_panels as f64;
        let mut acc = 0.0;
        for (i, w) in simpson_weights(n_panels) {
            let b = -BOX + h * i as f64;
            let g = log_integrand(y, &rows, &[b], psi, s2, kernel, shift);
            acc += w * (g - gmax).exp();
        }
        let integral = acc * h / 3.0;
        if !prev.is_nan() && ((integral - prev).abs() <= 1e-12 * integral.abs() || n_panels >= 1 << 20)
        {
            return gmax + integral.ln();
        }
        prev = integral;
        n_panels *= 2;
    }
}

/// Tensor-grid 2-D Simpson quadrature over [−30, 30]²; log of the integral.
pub fn log_marginal_quadrature_2d(
    y: &[f64],
    x: &[(f64, f64)],
    psi: f64,
    s2: f64,
    kernel: OracleKernel,
    shift: Option<&[f64]>,
) -> f64 {
    let rows: Vec<Vec<f64>> = x.iter().map(|&(a, b)| vec![a, b]).collect();
    let mut gmax = f64::NEG_INFINITY;
    let scan = 300;
    for i in 0..=scan {
        for j in 0..=scan {
            let b1 = -BOX + 2.0 * BOX * i as f64 / scan as f64;
            let b2 = -BOX + 2.0 * BOX * j as f64 / scan as f64;
            gmax = gmax.max(log_integrand(y, &rows, &[b1, b2], psi, s2, kernel, shift));
        }
    }
    let mut prev = f64::NAN;
    let mut n_panels = 256;
    loop {
        let h = 2.0 * BOX / n_panels as f64;
        let mut acc = 0.0;
        for (i, wi) in simpson_weights(n_panels) {
            let b1 = -BOX + h * i as f64;
            let mut inner = 0.0;
            for (j, wj) in simpson_weights(n_panels) {
                let b2 = -BOX + h * j as f64;
                let g = log_integrand(y, &rows, &[b1, b2], psi, s2, kernel, shift);
                inner += wj * (g - gmax).exp();
            }
            acc += wi * inner;
        }
        let integral = acc * h * h / 9.0;
        if !prev.is_nan() && ((integral - prev).abs() <= 1e-9 * integral.abs() || n_panels >= 2048)
        {
            return gmax + integral.ln();
        }
        prev = integral;
        n_panels *= 2;
    }
}

/// Reference MAP optimiser: plain gradient ascent with backtracking on
/// Σ kernel/ψ − ‖β‖²/(2s²). Slow but independent of any Newton machinery.
pub fn slow_map_estimate(
    y: &[f64],
    x: &[Vec<f64>],
    psi: f64,
    s2: f64,
    kernel: OracleKernel,
    dim: usize,
) -> Vec<f64> {
    let objective = |beta: &[f64]| -> f64 { log_integrand(y, x, beta, psi, s2, kernel, None) };
    let gradient = |beta: &[f64]| -> Vec<f64> {
        let mut g = vec![0.0; dim];
        for (&yi, row) in y.iter().zip(x.iter()) {
            let eta: f64 = row.iter().zip(beta.iter()).map(|(a, b)| a * b).sum();
            let d1 = kernel.eval_d1(yi, eta) / psi;
            for (gj, &xj) in g.iter_mut().zip(row.iter()) {
                *gj += d1 * xj;
            }
        }
        for j in 0..dim {
            g[j] -= beta[j] / s2;
        }
        g
    };
    let mut beta = vec![0.0; dim];
    let mut obj = objective(&beta);
    let mut step = 0.1;
    for _ in 0..200_000 {
        let g = gradient(&beta);
        let gnorm = g.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        if gnorm < 1e-11 {
            break;
        }
        let mut accepted = false;
        for _ in 0..60 {
            let cand: Vec<f64> = beta
                .iter()
                .zip(g.iter())
                .map(|(b, gj)| b + step * gj)
                .collect();
            let cand_obj = objective(&cand);
            if cand_obj.is_finite() && cand_obj > obj {
                beta = cand;
                obj = cand_obj;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        step *= 1.3;
    }
    beta
}

/// Kolmogorov–Smirnov statistic of sorted samples against a CDF.
pub fn ks_statistic(sorted: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &v) in sorted.iter().enumerate() {
        let f = cdf(v);
        d = d.max((f - i as f64 / n).abs());
        d = d.max((f - (i as f64 + 1.0) / n).abs());
    }
    d
}

/// Asymptotic KS critical value at the given level.
pub fn ks_critical_value(n: usize, alpha: f64) -> f64 {
    // c(α) = sqrt(−ln(α/2)/2)
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    c / (n as f64).sqrt()
}

/// erf via the Abramowitz–Stegun 7.1.26 rational approximation (|err| < 1.5e-7).
pub fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.3275911 * x);
    let poly = t
        * (0.254829592
            + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// CDF of the χ² distribution with one degree of freedom.
pub fn chi2_cdf_1df(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        erf((x / 2.0).sqrt())
    }
}

/// Posterior mean of the sparsity level w given per-model log-marginals, by
/// trapezoid integration of the Beta(a, b)-weighted mixture on a grid over
/// (0, 1). `models` holds (active-count, log-marginal) pairs.
pub fn w_posterior_mean_grid(models: &[(usize, f64)], p: usize, a: f64, b: f64, points: usize) -> f64 {
    let max_logf = models
        .iter()
        .map(|&(_, lf)| lf)
        .fold(f64::NEG_INFINITY, f64::max);
    let density = |w: f64| -> f64 {
        let log_beta_kernel = (a - 1.0) * w.ln() + (b - 1.0) * (1.0 - w).ln();
        let mix: f64 = models
            .iter()
            .map(|&(k, lf)| {
                (lf - max_logf + k as f64 * w.ln() + (p - k) as f64 * (1.0 - w).ln()).exp()
            })
            .sum();
        log_beta_kernel.exp() * mix
    };
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..points {
        // Open grid avoiding the endpoints where the Beta kernel may blow up.
        let w0 = (i as f64 + 0.5) / points as f64;
        let w1 = (i as f64 + 1.5) / points as f64;
        if w1 >= 1.0 {
            break;
        }
        let (f0, f1) = (density(w0), density(w1));
        let h = w1 - w0;
        num += 0.5 * h * (w0 * f0 + w1 * f1);
        den += 0.5 * h * (f0 + f1);
    }
    num / den
}
