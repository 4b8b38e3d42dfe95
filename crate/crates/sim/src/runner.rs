//! Method pipelines (dispersion → Gibbs → selection → MAP refit), replicate
//! orchestration over scenario grids, and result aggregation.

use std::io::Write;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use qpsel_core::seed::derive_seed;
use qpsel_core::{
    estimate_dispersion, estimate_nb_theta, gibbs_run, map_estimate, score_selection, select_bfdr,
    select_median, CacheStats, Dataset, ModelIndicator, PriorConfig, QuasiFamily, RunConfig,
    SamplerOutput, SelectionMetrics, SelectionResult,
};

use crate::error::{Error, Result};
use crate::scenario::{ScenarioKind, ScenarioSpec};

/// A variable-selection procedure to benchmark.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    /// Quasi-posterior with the given mean/variance family; ψ̂ comes from the
    /// run's dispersion mode.
    Qp { family: QuasiFamily },
    /// Poisson likelihood baseline: the Poisson quasi-kernel with ψ fixed at
    /// one, whose model posteriors match the full-likelihood Poisson model.
    PoissonLikelihood,
    /// Negative-binomial baseline with moment-matched θ̂ and ψ fixed at one.
    NegBinQuasi,
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Qp { family } => match family {
                QuasiFamily::LinearIdentity => "qp-linear".to_string(),
                QuasiFamily::PoissonLog => "qp-poisson".to_string(),
                QuasiFamily::NegBinLog { .. } => "qp-negbin".to_string(),
            },
            Method::PoissonLikelihood => "poisson".to_string(),
            Method::NegBinQuasi => "negbin".to_string(),
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "qp-linear" => Some(Method::Qp {
                family: QuasiFamily::LinearIdentity,
            }),
            "qp-poisson" => Some(Method::Qp {
                family: QuasiFamily::PoissonLog,
            }),
            "poisson" => Some(Method::PoissonLikelihood),
            "negbin" => Some(Method::NegBinQuasi),
            _ => None,
        }
    }

    pub fn seed_id(&self) -> u64 {
        match self {
            Method::Qp {
                family: QuasiFamily::LinearIdentity,
            } => 1,
            Method::Qp {
                family: QuasiFamily::PoissonLog,
            } => 2,
            Method::Qp { .. } => 3,
            Method::PoissonLikelihood => 4,
            Method::NegBinQuasi => 5,
        }
    }
}

/// Everything produced by running one method on one dataset.
#[derive(Debug)]
pub struct FittedMethod {
    pub label: String,
    /// Family actually used (carries θ̂ for the negative-binomial baseline).
    pub family: QuasiFamily,
    pub psi: f64,
    pub theta: Option<f64>,
    pub sampler: SamplerOutput,
    pub selection_median: SelectionResult,
    pub selection_bfdr: SelectionResult,
    /// BFDR-selected model (plus forced-in columns) used for the MAP refit.
    pub refit_gamma: ModelIndicator,
    /// MAP coefficients on the refit model, padded to length p with zeros.
    pub refit_beta: DVector<f64>,
}

impl FittedMethod {
    /// Fitted means μ(xᵢᵀβ̂) on the given rows.
    pub fn fitted_means(&self, d: &Dataset) -> Vec<f64> {
        let eta = d.x() * &self.refit_beta;
        eta.iter().map(|&e| self.family.mu(e)).collect()
    }

    /// Model-implied variance at a fitted mean: ψ·V(μ).
    pub fn implied_variance(&self, mu: f64) -> f64 {
        self.psi * self.family.variance(mu)
    }
}

fn check_counts(d: &Dataset) -> Result<()> {
    for (i, &v) in d.y().iter().enumerate() {
        if v < 0.0 || v.fract() != 0.0 {
            return Err(Error::NonCountResponse { row: i });
        }
    }
    Ok(())
}

/// Runs one method end to end: resolve ψ (and θ where needed), sample the
/// model space, select under both rules, and refit the MAP coefficients on
/// the BFDR-selected model.
pub fn fit_method(
    d: &Dataset,
    method: Method,
    prior: &PriorConfig,
    run: &RunConfig,
    forced: &[usize],
) -> Result<FittedMethod> {
    let (family, psi, theta) = match method {
        Method::Qp { family } => {
            let est = estimate_dispersion(d, family, &run.dispersion_mode)?;
            (family, est.psi, family.theta())
        }
        Method::PoissonLikelihood => {
            check_counts(d)?;
            (QuasiFamily::PoissonLog, 1.0, None)
        }
        Method::NegBinQuasi => {
            check_counts(d)?;
            let theta = estimate_nb_theta(d)?;
            (QuasiFamily::negbin(theta)?, 1.0, Some(theta))
        }
    };
    let init = ModelIndicator::new(d.p(), forced)?;
    let sampler = gibbs_run(d, family, prior, run, psi, &init)?;
    let selection_median = select_median(&sampler.rb_ppi);
    let selection_bfdr = select_bfdr(&sampler.rb_ppi, run.fdr_alpha);
    let refit_gamma =
        ModelIndicator::with_active(d.p(), &selection_bfdr.selected_indices(), forced)?;
    let map = map_estimate(d, &refit_gamma, psi, family, prior, None, run.newton())?;
    let mut refit_beta = DVector::zeros(d.p());
    for (rank, j) in refit_gamma.active_indices().into_iter().enumerate() {
        refit_beta[j] = map.beta[rank];
    }
    Ok(FittedMethod {
        label: method.label(),
        family,
        psi,
        theta,
        sampler,
        selection_median,
        selection_bfdr,
        refit_gamma,
        refit_beta,
    })
}

/// Ground truth for scoring a replicate.
#[derive(Clone, Debug)]
pub struct Truth {
    pub active: Vec<bool>,
    pub scored: Vec<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ReplicateReport {
    pub scenario: String,
    pub n: usize,
    pub method: String,
    pub rep: usize,
    pub psi: f64,
    pub theta: Option<f64>,
    pub rb_ppi: Vec<f64>,
    pub selected_median: Vec<usize>,
    pub selected_bfdr: Vec<usize>,
    pub metrics_median: Option<SelectionMetrics>,
    pub metrics_bfdr: Option<SelectionMetrics>,
    pub cache_stats: CacheStats,
    pub visited_models: usize,
    pub wall_time_ms: f64,
}

/// One method on one dataset, with metrics when the truth is known.
pub fn run_method(
    d: &Dataset,
    method: Method,
    prior: &PriorConfig,
    run: &RunConfig,
    forced: &[usize],
    truth: Option<&Truth>,
) -> Result<ReplicateReport> {
    let start = Instant::now();
    let fitted = fit_method(d, method, prior, run, forced)?;
    let (metrics_median, metrics_bfdr) = match truth {
        Some(t) => (
            Some(score_selection(
                &fitted.selection_median.selected,
                &t.active,
                &t.scored,
            )?),
            Some(score_selection(
                &fitted.selection_bfdr.selected,
                &t.active,
                &t.scored,
            )?),
        ),
        None => (None, None),
    };
    Ok(ReplicateReport {
        scenario: String::new(),
        n: d.n(),
        method: fitted.label.clone(),
        rep: 0,
        psi: fitted.psi,
        theta: fitted.theta,
        rb_ppi: fitted.sampler.rb_ppi.clone(),
        selected_median: fitted.selection_median.selected_indices(),
        selected_bfdr: fitted.selection_bfdr.selected_indices(),
        metrics_median,
        metrics_bfdr,
        cache_stats: fitted.sampler.cache_stats,
        visited_models: fitted.sampler.visited_models,
        wall_time_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

#[derive(Clone, Debug)]
pub struct GridSpec {
    pub scenarios: Vec<ScenarioKind>,
    pub n_grid: Vec<usize>,
    pub replicates: usize,
    pub methods: Vec<Method>,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "status")]
pub enum ReplicateOutcome {
    Ok(ReplicateReport),
    Failed {
        scenario: String,
        n: usize,
        method: String,
        rep: usize,
        error: String,
    },
}

#[derive(Clone, Debug, Serialize)]
pub struct AggregateRow {
    pub scenario: String,
    pub n: usize,
    pub method: String,
    pub rule: String,
    pub metric: String,
    pub mean: f64,
    pub se: f64,
    pub r: usize,
}

#[derive(Debug)]
pub struct GridResults {
    pub replicates: Vec<ReplicateOutcome>,
    pub aggregates: Vec<AggregateRow>,
}

fn mean_se(values: &[f64]) -> (f64, f64) {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

/// Runs every (scenario, n, replicate) cell, data-parallel over replicates.
/// Replicate seeds derive from the base seed and the cell coordinates; each
/// method runs its own chain on the shared replicate dataset. Failures are
/// recorded per cell rather than aborting the grid.
pub fn run_scenario_grid(
    grid: &GridSpec,
    prior: &PriorConfig,
    run_template: &RunConfig,
) -> GridResults {
    let mut cells = Vec::new();
    for &kind in &grid.scenarios {
        for &n in &grid.n_grid {
            for rep in 0..grid.replicates {
                cells.push((kind, n, rep));
            }
        }
    }
    let replicates: Vec<ReplicateOutcome> = cells
        .par_iter()
        .flat_map(|&(kind, n, rep)| {
            let data_seed = derive_seed(&[run_template.seed, kind.id(), n as u64, rep as u64]);
            let spec = ScenarioSpec {
                kind,
                n,
                replicate_seed: data_seed,
            };
            let d = spec.generate();
            let truth = Truth {
                active: spec.truth_active(),
                scored: spec.scored_mask(),
            };
            grid.methods
                .iter()
                .map(|&method| {
                    let mut run = run_template.clone();
                    run.seed = derive_seed(&[data_seed, method.seed_id()]);
                    match run_method(&d, method, prior, &run, &[0], Some(&truth)) {
                        Ok(mut report) => {
                            report.scenario = kind.name().to_string();
                            report.rep = rep;
                            ReplicateOutcome::Ok(report)
                        }
                        Err(e) => ReplicateOutcome::Failed {
                            scenario: kind.name().to_string(),
                            n,
                            method: method.label(),
                            rep,
                            error: e.to_string(),
                        },
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect();

    let mut aggregates = Vec::new();
    for &kind in &grid.scenarios {
        for &n in &grid.n_grid {
            for &method in &grid.methods {
                let ok: Vec<&ReplicateReport> = replicates
                    .iter()
                    .filter_map(|o| match o {
                        ReplicateOutcome::Ok(r)
                            if r.scenario == kind.name()
                                && r.n == n
                                && r.method == method.label() =>
                        {
                            Some(r)
                        }
                        _ => None,
                    })
                    .collect();
                if ok.is_empty() {
                    continue;
                }
                for rule in ["median", "bfdr"] {
                    let metrics = |r: &ReplicateReport| -> Option<SelectionMetrics> {
                        match rule {
                            "median" => r.metrics_median,
                            _ => r.metrics_bfdr,
                        }
                    };
                    let selected_len = |r: &ReplicateReport| -> f64 {
                        match rule {
                            "median" => r.selected_median.len() as f64,
                            _ => r.selected_bfdr.len() as f64,
                        }
                    };
                    let columns: [(&str, Box<dyn Fn(&ReplicateReport) -> Option<f64>>); 5] = [
                        ("fdr", Box::new(move |r| metrics(r).map(|m| m.fdr))),
                        ("power", Box::new(move |r| metrics(r).map(|m| m.power))),
                        ("f1", Box::new(move |r| metrics(r).map(|m| m.f1))),
                        ("mcc", Box::new(move |r| metrics(r).map(|m| m.mcc))),
                        ("n_selected", Box::new(move |r| Some(selected_len(r)))),
                    ];
                    for (metric, extract) in columns {
                        let values: Vec<f64> = ok.iter().filter_map(|r| extract(r)).collect();
                        if values.is_empty() {
                            continue;
                        }
                        let (mean, se) = mean_se(&values);
                        aggregates.push(AggregateRow {
                            scenario: kind.name().to_string(),
                            n,
                            method: method.label(),
                            rule: rule.to_string(),
                            metric: metric.to_string(),
                            mean,
                            se,
                            r: values.len(),
                        });
                    }
                }
            }
        }
    }
    GridResults {
        replicates,
        aggregates,
    }
}

/// Aggregate table in the layout (scenario, n, method, rule, metric, mean, se, R).
pub fn write_results_csv<W: Write>(rows: &[AggregateRow], mut w: W) -> Result<()> {
    writeln!(w, "scenario,n,method,rule,metric,mean,se,R")?;
    for row in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            row.scenario, row.n, row.method, row.rule, row.metric, row.mean, row.se, row.r
        )?;
    }
    Ok(())
}

/// Per-replicate JSON-lines log (includes wall-clock timing, so this file is
/// not byte-stable across runs; the results table is).
pub fn write_replicates_jsonl<W: Write>(outcomes: &[ReplicateOutcome], mut w: W) -> Result<()> {
    for o in outcomes {
        let line = serde_json::to_string(o).expect("reports serialize");
        writeln!(w, "{line}")?;
    }
    Ok(())
}
