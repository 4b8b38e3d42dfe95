//! Command implementations.

use std::fs;
use std::io::Write;
use std::path::Path;

use qpsel_core::seed::derive_seed;
use qpsel_core::{
    enumerate_exact, estimate_dispersion, estimate_nb_theta, gibbs_run_with_cache,
    sample_beta_given_gamma, select_bfdr, select_median, Dataset, DispersionMode, ModelIndicator,
    PriorConfig, QuasiFamily, RunConfig, Sparsity,
};
use qpsel_sim::{
    binned_mean_variance, cv_wmse, fit_method, run_scenario_grid, write_replicates_jsonl,
    write_results_csv, FittedModel, GridSpec, Method, ScenarioKind,
};

use crate::args;
use crate::manifest::{
    CommandConfig, CsvInputConfig, DiagnoseConfig, FitConfig, Manifest, OracleCheckConfig,
    SimulateConfig,
};

#[derive(thiserror::Error, Debug)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl From<qpsel_core::Error> for CliError {
    fn from(e: qpsel_core::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }
}

impl From<qpsel_sim::Error> for CliError {
    fn from(e: qpsel_sim::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Numeric(e.to_string())
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(format!("io: {e}"))
    }
}

type CliResult<T> = Result<T, CliError>;

fn parse_sparsity(s: &str) -> CliResult<Sparsity> {
    if let Some(rest) = s.strip_prefix("fixed:") {
        let w: f64 = rest
            .parse()
            .map_err(|_| CliError::Input(format!("cannot parse fixed sparsity `{s}`")))?;
        return Ok(Sparsity::Fixed(w));
    }
    if let Some(rest) = s.strip_prefix("beta:") {
        let parts: Vec<&str> = rest.split(',').collect();
        if parts.len() == 2 {
            let a: f64 = parts[0]
                .parse()
                .map_err(|_| CliError::Input(format!("cannot parse `{s}`")))?;
            let b: f64 = parts[1]
                .parse()
                .map_err(|_| CliError::Input(format!("cannot parse `{s}`")))?;
            return Ok(Sparsity::BetaBinomial { a, b });
        }
    }
    Err(CliError::Input(format!(
        "sparsity must be `beta:a,b` or `fixed:w`, got `{s}`"
    )))
}

fn parse_dispersion(s: &str) -> CliResult<DispersionMode> {
    match s {
        "full" => Ok(DispersionMode::FullModelQmle),
        "l1" => Ok(DispersionMode::L1Regularized { lambda_grid: None }),
        other => {
            if let Some(rest) = other.strip_prefix("fixed:") {
                let psi: f64 = rest
                    .parse()
                    .map_err(|_| CliError::Input(format!("cannot parse dispersion `{s}`")))?;
                Ok(DispersionMode::FixedValue(psi))
            } else {
                Err(CliError::Input(format!(
                    "dispersion must be `full`, `l1`, or `fixed:PSI`, got `{s}`"
                )))
            }
        }
    }
}

/// Family-aware default: count and linear quasi-posteriors estimate ψ on the
/// full model; the negative-binomial baseline runs at ψ = 1.
fn resolve_run(common: &args::CommonRunArgs, family: Option<&str>) -> CliResult<RunConfig> {
    let dispersion_mode = match &common.dispersion {
        Some(s) => parse_dispersion(s)?,
        None => match family {
            Some("negbin") => DispersionMode::FixedValue(1.0),
            _ => DispersionMode::FullModelQmle,
        },
    };
    let run = RunConfig {
        sweeps: common.sweeps,
        burn_in: common.burn_in,
        seed: common.seed,
        fdr_alpha: common.fdr_alpha,
        newton_tol: common.newton_tol,
        newton_max_iter: common.newton_max_iter,
        cache_cap: common.cache_cap,
        dispersion_mode,
    };
    run.validate()?;
    Ok(run)
}

fn resolve_prior(common: &args::CommonRunArgs) -> CliResult<PriorConfig> {
    let prior = PriorConfig {
        slab_variance: common.slab_variance,
        sparsity: parse_sparsity(&common.sparsity)?,
    };
    prior.validate()?;
    Ok(prior)
}

fn csv_config(a: &args::CsvInputArgs) -> CsvInputConfig {
    CsvInputConfig {
        input: a.input.clone(),
        add_intercept: a.add_intercept,
        standardize: a.standardize,
        force_in: a.force_in.clone(),
    }
}

fn load_dataset(cfg: &CsvInputConfig) -> CliResult<(Dataset, Vec<usize>)> {
    let d = Dataset::from_csv_path(&cfg.input, cfg.add_intercept)?;
    let d = if cfg.standardize { d.zscored() } else { d };
    let mut forced = Vec::new();
    if cfg.add_intercept {
        forced.push(0);
    }
    for name in &cfg.force_in {
        let idx = d
            .column_names()
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| CliError::Input(format!("no column named `{name}`")))?;
        if !forced.contains(&idx) {
            forced.push(idx);
        }
    }
    forced.sort_unstable();
    Ok((d, forced))
}

fn resolve_family(
    name: &str,
    theta: Option<f64>,
    d: &Dataset,
) -> CliResult<(QuasiFamily, Option<f64>)> {
    match name {
        "linear" => Ok((QuasiFamily::LinearIdentity, None)),
        "poisson" => Ok((QuasiFamily::PoissonLog, None)),
        "negbin" => {
            let theta = match theta {
                Some(t) => t,
                None => estimate_nb_theta(d)?,
            };
            Ok((QuasiFamily::negbin(theta)?, Some(theta)))
        }
        other => Err(CliError::Input(format!(
            "family must be `linear`, `poisson`, or `negbin`, got `{other}`"
        ))),
    }
}

fn write_file(dir: &Path, name: &str, contents: &[u8]) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), contents)?;
    Ok(())
}

fn write_manifest(dir: &Path, command: CommandConfig) -> CliResult<()> {
    let manifest = Manifest::new(command);
    write_file(dir, "manifest.json", manifest.to_json().as_bytes())
}

pub fn cmd_fit(a: &args::FitArgs) -> CliResult<()> {
    let cfg = FitConfig {
        csv: csv_config(&a.input),
        family: a.family.clone(),
        theta: a.theta,
        prior: resolve_prior(&a.run)?,
        run: resolve_run(&a.run, Some(a.family.as_str()))?,
        beta_draws: a.beta_draws,
        mh_correction: !a.no_mh,
        dump_cache: a.dump_cache,
        dump_draws: a.dump_draws,
    };
    run_fit(&cfg, Path::new(&a.out))
}

pub fn run_fit(cfg: &FitConfig, out: &Path) -> CliResult<()> {
    write_manifest(out, CommandConfig::Fit(cfg.clone()))?;
    let (d, forced) = load_dataset(&cfg.csv)?;
    let (family, theta) = resolve_family(&cfg.family, cfg.theta, &d)?;
    let dispersion = estimate_dispersion(&d, family, &cfg.run.dispersion_mode)?;
    let init = ModelIndicator::new(d.p(), &forced)?;
    let (sampler, cache) =
        gibbs_run_with_cache(&d, family, &cfg.prior, &cfg.run, dispersion.psi, &init)?;
    let median = select_median(&sampler.rb_ppi);
    let bfdr = select_bfdr(&sampler.rb_ppi, cfg.run.fdr_alpha);

    let mut rb = Vec::new();
    sampler.write_rb_ppi_csv(d.column_names(), &mut rb)?;
    write_file(out, "rb_ppi.csv", &rb)?;

    let mut cum = Vec::new();
    sampler.write_cumulative_ppi_csv(d.column_names(), &mut cum)?;
    write_file(out, "cumulative_ppi.csv", &cum)?;

    let selection = serde_json::json!({
        "columns": d.column_names(),
        "psi": dispersion.psi,
        "psi_exact_fit_clamped": dispersion.exact_fit,
        "theta": theta,
        "median": median,
        "bfdr": bfdr,
    });
    write_file(
        out,
        "selection.json",
        serde_json::to_string_pretty(&selection)
            .expect("selection serializes")
            .as_bytes(),
    )?;

    let refit = ModelIndicator::with_active(d.p(), &bfdr.selected_indices(), &forced)?;
    let draws = sample_beta_given_gamma(
        &d,
        &refit,
        family,
        &cfg.prior,
        dispersion.psi,
        cfg.beta_draws,
        derive_seed(&[cfg.run.seed, 0xBE7A]),
        cfg.mh_correction,
    )?;
    let mut beta_csv = String::new();
    beta_csv.push_str(&d.column_names().join(","));
    beta_csv.push('\n');
    for t in 0..draws.nrows() {
        let row: Vec<String> = (0..draws.ncols()).map(|j| format!("{}", draws[(t, j)])).collect();
        beta_csv.push_str(&row.join(","));
        beta_csv.push('\n');
    }
    write_file(out, "beta_samples.csv", beta_csv.as_bytes())?;

    if cfg.dump_cache {
        let mut buf = Vec::new();
        cache.dump_jsonl(&mut buf).map_err(qpsel_core::Error::Io)?;
        write_file(out, "cache.jsonl", &buf)?;
    }
    if cfg.dump_draws {
        let mut buf = Vec::new();
        sampler.write_gamma_draws_gz(&mut buf)?;
        write_file(out, "gamma_draws.hex.gz", &buf)?;
    }
    Ok(())
}

pub fn cmd_simulate(a: &args::SimulateArgs) -> CliResult<()> {
    let cfg = SimulateConfig {
        scenarios: a.scenario.clone(),
        n_grid: a.n_grid.clone(),
        replicates: a.replicates,
        methods: a.methods.clone(),
        jobs: a.jobs,
        prior: resolve_prior(&a.run)?,
        run: resolve_run(&a.run, None)?,
    };
    run_simulate(&cfg, Path::new(&a.out))
}

fn resolve_methods(names: &[String], kind: ScenarioKind) -> CliResult<Vec<Method>> {
    names
        .iter()
        .map(|name| match name.as_str() {
            "qp" => Ok(Method::Qp {
                family: kind.qp_family(),
            }),
            other => Method::parse(other).ok_or_else(|| {
                CliError::Input(format!(
                    "method must be one of qp, qp-linear, qp-poisson, poisson, negbin; got `{other}`"
                ))
            }),
        })
        .collect()
}

pub fn run_simulate(cfg: &SimulateConfig, out: &Path) -> CliResult<()> {
    write_manifest(out, CommandConfig::Simulate(cfg.clone()))?;
    let kinds: Vec<ScenarioKind> = cfg
        .scenarios
        .iter()
        .map(|s| {
            ScenarioKind::parse(s)
                .ok_or_else(|| CliError::Input(format!("unknown scenario `{s}`")))
        })
        .collect::<CliResult<Vec<_>>>()?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.unwrap_or(0))
        .build()
        .map_err(|e| CliError::Input(format!("cannot build thread pool: {e}")))?;

    let mut all_replicates = Vec::new();
    let mut all_aggregates = Vec::new();
    for kind in kinds {
        let methods = resolve_methods(&cfg.methods, kind)?;
        let grid = GridSpec {
            scenarios: vec![kind],
            n_grid: cfg.n_grid.clone(),
            replicates: cfg.replicates,
            methods,
        };
        let results = pool.install(|| run_scenario_grid(&grid, &cfg.prior, &cfg.run));
        all_replicates.extend(results.replicates);
        all_aggregates.extend(results.aggregates);
    }

    let mut csv = Vec::new();
    write_results_csv(&all_aggregates, &mut csv).map_err(CliError::from)?;
    write_file(out, "results.csv", &csv)?;
    let mut jsonl = Vec::new();
    write_replicates_jsonl(&all_replicates, &mut jsonl).map_err(CliError::from)?;
    write_file(out, "replicates.jsonl", &jsonl)?;
    Ok(())
}

pub fn cmd_diagnose(a: &args::DiagnoseArgs) -> CliResult<()> {
    let cfg = DiagnoseConfig {
        csv: csv_config(&a.input),
        methods: a.methods.clone(),
        folds: a.folds,
        prior: resolve_prior(&a.run)?,
        run: resolve_run(&a.run, None)?,
    };
    run_diagnose(&cfg, Path::new(&a.out))
}

pub fn run_diagnose(cfg: &DiagnoseConfig, out: &Path) -> CliResult<()> {
    write_manifest(out, CommandConfig::Diagnose(cfg.clone()))?;
    let (d, forced) = load_dataset(&cfg.csv)?;
    let methods: Vec<Method> = cfg
        .methods
        .iter()
        .map(|m| {
            Method::parse(m).ok_or_else(|| {
                CliError::Input(format!(
                    "method must be one of qp-linear, qp-poisson, poisson, negbin; got `{m}`"
                ))
            })
        })
        .collect::<CliResult<Vec<_>>>()?;

    let mut fitted_models = Vec::with_capacity(methods.len());
    for &method in &methods {
        let mut run = cfg.run.clone();
        run.seed = derive_seed(&[cfg.run.seed, method.seed_id(), 0xD1A6]);
        let fitted = fit_method(&d, method, &cfg.prior, &run, &forced)?;
        fitted_models.push(FittedModel {
            label: fitted.label.clone(),
            fitted_mean: fitted.fitted_means(&d),
            family: fitted.family,
            psi: fitted.psi,
        });
    }
    let diag = binned_mean_variance(&d, &fitted_models)?;
    let mut binned_csv = Vec::new();
    diag.write_csv(&mut binned_csv)?;
    write_file(out, "binned.csv", &binned_csv)?;

    let wmse = cv_wmse(
        &d,
        &methods,
        &cfg.prior,
        &cfg.run,
        cfg.folds,
        cfg.run.seed,
        &forced,
    )?;
    let summary = serde_json::json!({
        "binned": diag.summaries,
        "wmse": wmse,
    });
    write_file(
        out,
        "summary.json",
        serde_json::to_string_pretty(&summary)
            .expect("summary serializes")
            .as_bytes(),
    )?;
    Ok(())
}

pub fn cmd_oracle_check(a: &args::OracleCheckArgs) -> CliResult<()> {
    let prior = PriorConfig {
        slab_variance: a.run.slab_variance,
        sparsity: Sparsity::Fixed(a.w),
    };
    prior.validate().map_err(CliError::from)?;
    let cfg = OracleCheckConfig {
        csv: csv_config(&a.input),
        family: a.family.clone(),
        theta: a.theta,
        w: a.w,
        prior,
        run: resolve_run(&a.run, Some(a.family.as_str()))?,
    };
    run_oracle_check(&cfg, Path::new(&a.out))
}

pub fn run_oracle_check(cfg: &OracleCheckConfig, out: &Path) -> CliResult<()> {
    write_manifest(out, CommandConfig::OracleCheck(cfg.clone()))?;
    let (d, forced) = load_dataset(&cfg.csv)?;
    let (family, _) = resolve_family(&cfg.family, cfg.theta, &d)?;
    let dispersion = estimate_dispersion(&d, family, &cfg.run.dispersion_mode)?;
    let exact = enumerate_exact(&d, family, &cfg.prior, dispersion.psi, &forced)?;

    let mut rows: Vec<&qpsel_core::ExactModel> = exact.models.iter().collect();
    rows.sort_by(|a, b| {
        b.prob
            .total_cmp(&a.prob)
            .then_with(|| a.gamma.cmp(&b.gamma))
    });
    let mut table = String::from("gamma_hex,size,log_qmarginal,prob\n");
    for m in rows {
        table.push_str(&format!(
            "{},{},{},{}\n",
            m.gamma.bits_hex(),
            m.gamma.size(),
            m.log_qmarginal,
            m.prob
        ));
    }
    write_file(out, "model_posterior.csv", table.as_bytes())?;

    let mut ppi = String::from("column,ppi\n");
    for (name, v) in d.column_names().iter().zip(&exact.ppi) {
        ppi.push_str(&format!("{name},{v}\n"));
    }
    write_file(out, "exact_ppi.csv", ppi.as_bytes())?;
    Ok(())
}

pub fn cmd_rerun(a: &args::RerunArgs) -> CliResult<()> {
    let text = fs::read_to_string(&a.manifest)
        .map_err(|e| CliError::Input(format!("cannot read manifest: {e}")))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("invalid manifest: {e}")))?;
    if manifest.schema != crate::manifest::MANIFEST_SCHEMA {
        return Err(CliError::Input(format!(
            "unsupported manifest schema {}",
            manifest.schema
        )));
    }
    let default_dir = Path::new(&a.manifest)
        .parent()
        .map(|p| p.to_path_buf())
        .unwrap_or_default();
    let out = a
        .out
        .as_ref()
        .map(|s| Path::new(s).to_path_buf())
        .unwrap_or(default_dir);
    match manifest.command {
        CommandConfig::Fit(cfg) => run_fit(&cfg, &out),
        CommandConfig::Simulate(cfg) => run_simulate(&cfg, &out),
        CommandConfig::Diagnose(cfg) => run_diagnose(&cfg, &out),
        CommandConfig::OracleCheck(cfg) => run_oracle_check(&cfg, &out),
    }
}

/// Writes a short status line for humans; all machine output goes to files.
pub fn note(msg: &str) {
    let _ = writeln!(std::io::stderr(), "{msg}");
}
