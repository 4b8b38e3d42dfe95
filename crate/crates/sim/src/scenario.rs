//! Data generators for the three benchmark scenarios.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, StudentT};
use serde::{Deserialize, Serialize};

use qpsel_core::{Dataset, QuasiFamily};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioKind {
    /// Gamma-distributed counts with Var = ψ*·μ, ψ* = 5.5, log link, p = 20.
    OverdispersedCounts,
    /// Student-t(3) errors scaled to unit variance, identity link, p = 20.
    HeavyTailLinear,
    /// Half the rows observed without error (all covariates zero), p = 51.
    InlierLinear,
}

impl ScenarioKind {
    pub fn name(&self) -> &'static str {
        match self {
            ScenarioKind::OverdispersedCounts => "counts",
            ScenarioKind::HeavyTailLinear => "heavy-tails",
            ScenarioKind::InlierLinear => "inliers",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "counts" => Some(ScenarioKind::OverdispersedCounts),
            "heavy-tails" => Some(ScenarioKind::HeavyTailLinear),
            "inliers" => Some(ScenarioKind::InlierLinear),
            _ => None,
        }
    }

    pub fn id(&self) -> u64 {
        match self {
            ScenarioKind::OverdispersedCounts => 1,
            ScenarioKind::HeavyTailLinear => 2,
            ScenarioKind::InlierLinear => 3,
        }
    }

    /// Mean/variance family the quasi-posterior uses on this scenario.
    pub fn qp_family(&self) -> QuasiFamily {
        match self {
            ScenarioKind::OverdispersedCounts => QuasiFamily::PoissonLog,
            _ => QuasiFamily::LinearIdentity,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub n: usize,
    pub replicate_seed: u64,
}

impl ScenarioSpec {
    pub fn p(&self) -> usize {
        match self.kind {
            ScenarioKind::OverdispersedCounts | ScenarioKind::HeavyTailLinear => 20,
            ScenarioKind::InlierLinear => 51,
        }
    }

    /// Generating coefficients; the first entry multiplies the ones column.
    pub fn true_beta(&self) -> Vec<f64> {
        let mut beta = vec![0.0; self.p()];
        match self.kind {
            ScenarioKind::OverdispersedCounts => {
                beta[0] = 3.5;
                beta[6] = 1.5;
                beta[8] = -0.3;
                beta[9] = 0.3;
            }
            ScenarioKind::HeavyTailLinear => {
                beta[0] = 0.3;
                beta[1] = 0.6;
                beta[2] = -0.6;
                beta[3] = 0.3;
            }
            ScenarioKind::InlierLinear => {
                beta[1] = 0.1;
                beta[2] = 0.1;
                beta[3] = 0.1;
                beta[4] = 0.1;
            }
        }
        beta
    }

    pub fn true_psi(&self) -> f64 {
        match self.kind {
            ScenarioKind::OverdispersedCounts => 5.5,
            ScenarioKind::HeavyTailLinear => 1.0,
            ScenarioKind::InlierLinear => 1.0 / 40.0,
        }
    }

    /// Which columns carry a nonzero generating coefficient.
    pub fn truth_active(&self) -> Vec<bool> {
        self.true_beta().iter().map(|&b| b != 0.0).collect()
    }

    /// Columns entering the selection metrics; the intercept is excluded.
    pub fn scored_mask(&self) -> Vec<bool> {
        (0..self.p()).map(|j| j != 0).collect()
    }

    /// Mean/variance family used by the quasi-posterior on this scenario.
    pub fn qp_family(&self) -> QuasiFamily {
        self.kind.qp_family()
    }

    pub fn generate(&self) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(self.replicate_seed);
        match self.kind {
            ScenarioKind::OverdispersedCounts => gen_counts(self, &mut rng),
            ScenarioKind::HeavyTailLinear => gen_heavy_tails(self, &mut rng),
            ScenarioKind::InlierLinear => gen_inliers(self, &mut rng),
        }
    }
}

fn build(spec: &ScenarioSpec, xv: Vec<f64>, yv: Vec<f64>) -> Dataset {
    let p = spec.p();
    let names = std::iter::once("intercept".to_string())
        .chain((1..p).map(|j| format!("x{j}")))
        .collect();
    Dataset::new(
        DVector::from_vec(yv),
        DMatrix::from_row_slice(spec.n, p, &xv),
        names,
    )
    .expect("generated data is finite by construction")
}

/// Overdispersed counts: Y* | μ ~ Gamma(μ/ψ*, ψ*) so E = μ and Var = ψ*·μ,
/// observed counts rounded to the nearest integer (half-up).
pub fn gen_counts<R: Rng>(spec: &ScenarioSpec, rng: &mut R) -> Dataset {
    let p = spec.p();
    let beta = spec.true_beta();
    let psi = spec.true_psi();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut xv = Vec::with_capacity(spec.n * p);
    let mut yv = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let mut row = Vec::with_capacity(p);
        row.push(1.0);
        for _ in 1..p {
            row.push(normal.sample(rng));
        }
        let mu: f64 = row.iter().zip(&beta).map(|(x, b)| x * b).sum::<f64>().exp();
        let draw = Gamma::new(mu / psi, psi).unwrap().sample(rng);
        yv.push((draw + 0.5).floor());
        xv.extend_from_slice(&row);
    }
    build(spec, xv, yv)
}

/// Heavy-tailed linear responses: location-scale Student-t with the scale set
/// so the conditional variance equals ψ*.
pub fn gen_heavy_tails<R: Rng>(spec: &ScenarioSpec, rng: &mut R) -> Dataset {
    gen_heavy_tails_with_nu(spec, rng, 3.0)
}

/// Same generator with the degrees of freedom exposed (ν → ∞ recovers the
/// Gaussian design).
pub fn gen_heavy_tails_with_nu<R: Rng>(spec: &ScenarioSpec, rng: &mut R, nu: f64) -> Dataset {
    let p = spec.p();
    let beta = spec.true_beta();
    let scale = ((nu - 2.0) / nu * spec.true_psi()).sqrt();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let t = StudentT::new(nu).unwrap();
    let mut xv = Vec::with_capacity(spec.n * p);
    let mut yv = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        let mut row = Vec::with_capacity(p);
        row.push(1.0);
        for _ in 1..p {
            row.push(normal.sample(rng));
        }
        let mu: f64 = row.iter().zip(&beta).map(|(x, b)| x * b).sum();
        yv.push(mu + scale * t.sample(rng));
        xv.extend_from_slice(&row);
    }
    build(spec, xv, yv)
}

/// Inlier design: a fair coin picks between a Gaussian-covariate row with
/// noise variance 2ψ* and an all-zero covariate row whose response equals the
/// linear predictor exactly (zero, since the intercept coefficient is zero).
pub fn gen_inliers<R: Rng>(spec: &ScenarioSpec, rng: &mut R) -> Dataset {
    let p = spec.p();
    let beta = spec.true_beta();
    let noise = Normal::new(0.0, (2.0 * spec.true_psi()).sqrt()).unwrap();
    let normal = Normal::new(0.0, 1.0).unwrap();
    let mut xv = Vec::with_capacity(spec.n * p);
    let mut yv = Vec::with_capacity(spec.n);
    for _ in 0..spec.n {
        if rng.random::<f64>() < 0.5 {
            // Inlier: covariates zero, response observed without error.
            let mut row = vec![0.0; p];
            row[0] = 1.0;
            let mu: f64 = row.iter().zip(&beta).map(|(x, b)| x * b).sum();
            yv.push(mu);
            xv.extend_from_slice(&row);
        } else {
            let mut row = Vec::with_capacity(p);
            row.push(1.0);
            for _ in 1..p {
                row.push(normal.sample(rng));
            }
            let mu: f64 = row.iter().zip(&beta).map(|(x, b)| x * b).sum();
            yv.push(mu + noise.sample(rng));
            xv.extend_from_slice(&row);
        }
    }
    build(spec, xv, yv)
}
