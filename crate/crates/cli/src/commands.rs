use std::path::Path;

use nalgebra::DVector;
use serde::Serialize;
use serde_json::Value;

use wishartlab::affine_flow::{flow_pair, transition_laplace};
use wishartlab::density::{density, transition_density, DEFAULT_MAX_TERMS, DEFAULT_TOL};
use wishartlab::sde_sim::{
    girsanov_weights, hitting_stats, mc_laplace, simulate_euler_with, simulate_ou_squares_with, PathEnsemble,
    Scheme, Storage, TimeGrid,
};
use wishartlab::validity::{classify_wishart, kalman_rank, transition_density_exists, Verdict};
use wishartlab::verify::{run_battery, BatteryConfig, BatteryReport};
use wishartlab::wishart_dist::{laplace, mean, sample, sample_with_method, SampleMethod};
use wishartlab::{ProcessParams, PsdMatrix, SymMatrix};

use crate::config::{need, Command, ExperimentConfig};
use crate::output::{csv_err, csv_writer, resolve, upper_fields, upper_headers};
use crate::CliError;

pub const DEFAULT_EPS: f64 = 1e-6;

pub struct Context<'a> {
    pub command: Command,
    pub config: &'a ExperimentConfig,
    pub seed: u64,
    pub out_dir: &'a Path,
}

/// Result body of a command and whether it counts as success.
pub struct Outcome {
    pub result: Value,
    pub success: bool,
}

impl Outcome {
    fn ok<T: Serialize>(result: &T) -> Result<Self, CliError> {
        Ok(Outcome { result: to_value(result)?, success: true })
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Io(e.to_string()))
}

pub fn run(ctx: &Context) -> Result<Outcome, CliError> {
    match ctx.command {
        Command::Validate => validate(ctx),
        Command::Laplace => laplace_cmd(ctx),
        Command::Density => density_cmd(ctx),
        Command::Sample => sample_cmd(ctx),
        Command::Simulate => simulate(ctx),
        Command::Verify => verify(ctx),
        Command::Hitprob => hitprob(ctx),
        Command::Girsanov => girsanov(ctx),
    }
}

#[derive(Serialize)]
struct ProcessGate {
    kalman_rank: usize,
    transition_density_exists: bool,
}

#[derive(Serialize)]
struct ValidateResult {
    dim: Option<usize>,
    p: Option<f64>,
    verdict: Option<Verdict>,
    process: Option<ProcessGate>,
}

fn validate(ctx: &Context) -> Result<Outcome, CliError> {
    let c = ctx.config;
    if c.params.is_none() && c.process.is_none() {
        return Err(CliError::Config("`validate` requires `params` or `process`".into()));
    }
    let process = c.process.as_ref().map(|pp| ProcessGate {
        kalman_rank: kalman_rank(pp),
        transition_density_exists: transition_density_exists(pp),
    });
    Outcome::ok(&ValidateResult {
        dim: c.params.as_ref().map(|p| p.dim()),
        p: c.params.as_ref().map(|p| p.p),
        verdict: c.params.as_ref().map(classify_wishart),
        process,
    })
}

#[derive(Serialize)]
struct TransitionLaplace {
    t: f64,
    phi: f64,
    psi: PsdMatrix,
    laplace: f64,
}

#[derive(Serialize)]
struct StaticLaplace {
    laplace: f64,
    mean: SymMatrix,
}

fn laplace_cmd(ctx: &Context) -> Result<Outcome, CliError> {
    let c = ctx.config;
    let cmd = ctx.command;
    let u = need(&c.u, "u", cmd)?;
    if let Some(process) = &c.process {
        let t = *need(&c.t, "t", cmd)?;
        let x = need(&c.x, "x", cmd)?;
        let pair = flow_pair(process, t, u)?;
        let value = transition_laplace(process, t, u, x)?;
        return Outcome::ok(&TransitionLaplace { t, phi: pair.phi, psi: pair.psi, laplace: value });
    }
    let params = need(&c.params, "params", cmd)?;
    if params.dim() != u.dim() {
        return Err(wishartlab::Error::DimensionMismatch("u and params differ in dimension".into()).into());
    }
    Outcome::ok(&StaticLaplace { laplace: laplace(params, u), mean: mean(params) })
}

fn density_cmd(ctx: &Context) -> Result<Outcome, CliError> {
    let c = ctx.config;
    let xi = need(&c.xi, "xi", ctx.command)?;
    let max_terms = c.max_terms.unwrap_or(DEFAULT_MAX_TERMS);
    let tol = c.tol.unwrap_or(DEFAULT_TOL);
    let result = if let Some(process) = &c.process {
        let t = *need(&c.t, "t", ctx.command)?;
        let x = need(&c.x, "x", ctx.command)?;
        transition_density(process, t, x, xi, max_terms, tol)?
    } else {
        density(need(&c.params, "params", ctx.command)?, xi, max_terms, tol)?
    };
    Outcome::ok(&result)
}

#[derive(Serialize)]
struct SampleSummary {
    method: SampleMethod,
    n: usize,
    seed: u64,
    sample_mean: SymMatrix,
    exact_mean: SymMatrix,
    csv: String,
}

fn sample_cmd(ctx: &Context) -> Result<Outcome, CliError> {
    let c = ctx.config;
    let params = need(&c.params, "params", ctx.command)?;
    let n = *need(&c.n, "n", ctx.command)?;
    let batch = match c.method {
        Some(m) => sample_with_method(params, n, ctx.seed, m)?,
        None => sample(params, n, ctx.seed)?,
    };
    let path = resolve(ctx.out_dir, &c.outputs.csv, "samples.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(upper_headers(params.dim())).map_err(csv_err)?;
    let d = params.dim();
    let mut acc = nalgebra::DMatrix::zeros(d, d);
    for x in &batch.draws {
        w.write_record(upper_fields(x.sym())).map_err(csv_err)?;
        acc += x.as_mat();
    }
    w.flush().map_err(csv_err)?;
    let summary = SampleSummary {
        method: batch.method,
        n,
        seed: ctx.seed,
        sample_mean: SymMatrix::symmetrize(&(acc / n as f64)),
        exact_mean: mean(params),
        csv: file_name(&path),
    };
    Outcome::ok(&summary)
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

/// Ensemble from `process`, `T`, `dt`, `n` and either `x` (Euler) or `y` (OU squares).
fn ensemble(ctx: &Context, storage: Storage) -> Result<PathEnsemble, CliError> {
    let c = ctx.config;
    let cmd = ctx.command;
    let process = need(&c.process, "process", cmd)?;
    let grid = TimeGrid::uniform(*need(&c.t_end, "T", cmd)?, *need(&c.dt, "dt", cmd)?)?;
    let n = *need(&c.n, "n", cmd)?;
    match c.scheme.unwrap_or(Scheme::Euler) {
        Scheme::Euler => Ok(simulate_euler_with(process, need(&c.x, "x", cmd)?, &grid, n, ctx.seed, storage)?),
        Scheme::OuSquares => {
            let y: Vec<DVector<f64>> =
                need(&c.y, "y", cmd)?.iter().map(|v| DVector::from_vec(v.clone())).collect();
            Ok(simulate_ou_squares_with(process, &y, &grid, n, ctx.seed, storage)?)
        }
    }
}

#[derive(Serialize)]
struct LaplaceComparison {
    u: PsdMatrix,
    mc: f64,
    standard_error: f64,
    exact: f64,
}

fn compare_endpoints(
    process: &ProcessParams,
    ens: &PathEnsemble,
    us: &[PsdMatrix],
) -> Result<Vec<LaplaceComparison>, CliError> {
    let endpoints = ens.endpoints();
    let t = ens.grid.end();
    us.iter()
        .map(|u| {
            let est = mc_laplace(&endpoints, u)?;
            Ok(LaplaceComparison {
                u: u.clone(),
                mc: est.estimate,
                standard_error: est.standard_error,
                exact: transition_laplace(process, t, u, &ens.x0)?,
            })
        })
        .collect()
}

#[derive(Serialize)]
struct SimulateSummary {
    scheme: Scheme,
    n: usize,
    seed: u64,
    steps: usize,
    t_end: f64,
    eps: f64,
    hit_fraction: f64,
    hit_standard_error: f64,
    endpoint_laplace: Vec<LaplaceComparison>,
    csv: String,
}

fn simulate(ctx: &Context) -> Result<Outcome, CliError> {
    let c = ctx.config;
    let storage = Storage::Every(c.store_every.unwrap_or(1));
    let ens = ensemble(ctx, storage)?;
    let eps = c.eps.unwrap_or(DEFAULT_EPS);
    let hits = hitting_stats(&ens, eps)?;
    let endpoint_laplace = compare_endpoints(&ens.process, &ens, c.u_grid.as_deref().unwrap_or_default())?;

    let path = resolve(ctx.out_dir, &c.outputs.csv, "paths.csv");
    let mut w = csv_writer(&path)?;
    let mut header = vec!["path".to_string(), "step".into(), "t".into()];
    header.extend(upper_headers(ens.process.dim()));
    header.push("min_eig_pre_projection".into());
    w.write_record(&header).map_err(csv_err)?;
    let times = ens.stored_times();
    for (i, (states, mins)) in ens.paths.iter().zip(&ens.pre_projection_min_eig).enumerate() {
        for (j, (x, m)) in states.iter().zip(mins).enumerate() {
            let mut row = vec![i.to_string(), ens.stored_steps[j].to_string(), times[j].to_string()];
            row.extend(upper_fields(x));
            row.push(m.to_string());
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush().map_err(csv_err)?;

    let summary = SimulateSummary {
        scheme: ens.scheme,
        n: ens.n_paths(),
        seed: ctx.seed,
        steps: ens.grid.steps(),
        t_end: ens.grid.end(),
        eps,
        hit_fraction: hits.hit_fraction,
        hit_standard_error: hits.standard_error,
        endpoint_laplace,
        csv: file_name(&path),
    };
    Outcome::ok(&summary)
}

#[derive(Serialize)]
struct HitSummary {
    scheme: Scheme,
    n: usize,
    seed: u64,
    eps: f64,
    hits: usize,
    hit_fraction: f64,
    standard_error: f64,
    mean_first_hit_time: Option<f64>,
    first_hit_times: Vec<Option<f64>>,
}

fn hitprob(ctx: &Context) -> Result<Outcome, CliError> {
    let ens = ensemble(ctx, Storage::Endpoint)?;
    let eps = ctx.config.eps.unwrap_or(DEFAULT_EPS);
    let stats = hitting_stats(&ens, eps)?;
    let hit_times: Vec<f64> = stats.first_hit_times.iter().flatten().copied().collect();
    let mean_first_hit_time =
        (!hit_times.is_empty()).then(|| hit_times.iter().sum::<f64>() / hit_times.len() as f64);
    Outcome::ok(&HitSummary {
        scheme: ens.scheme,
        n: ens.n_paths(),
        seed: ctx.seed,
        eps,
        hits: hit_times.len(),
        hit_fraction: stats.hit_fraction,
        standard_error: stats.standard_error,
        mean_first_hit_time,
        first_hit_times: stats.first_hit_times,
    })
}

#[derive(Serialize)]
struct GirsanovSummary {
    seed: u64,
    n: usize,
    mean_weight: f64,
    se_weight: f64,
    /// Closed-form target transform at each `u`, aligned with the report.
    target_exact: Vec<f64>,
    report: wishartlab::sde_sim::GirsanovReport,
}

fn girsanov(ctx: &Context) -> Result<Outcome, CliError> {
    let c = ctx.config;
    let source = need(&c.process, "process", ctx.command)?;
    let target = need(&c.target, "target", ctx.command)?;
    if c.scheme == Some(Scheme::OuSquares) {
        return Err(CliError::Config("`girsanov` replays Euler paths; scheme must be Euler".into()));
    }
    let ens = ensemble(ctx, Storage::Endpoint)?;
    let us = c.u_grid.clone().unwrap_or_default();
    let report = girsanov_weights(&ens, source, target, &us)?;
    let target_exact = us
        .iter()
        .map(|u| transition_laplace(target, ens.grid.end(), u, &ens.x0))
        .collect::<wishartlab::Result<Vec<f64>>>()?;
    Outcome::ok(&GirsanovSummary {
        seed: ctx.seed,
        n: ens.n_paths(),
        mean_weight: report.mean_weight,
        se_weight: report.se_weight,
        target_exact,
        report,
    })
}

fn verify(ctx: &Context) -> Result<Outcome, CliError> {
    let c = ctx.config;
    let defaults = BatteryConfig::with_seed(ctx.seed);
    let battery = BatteryConfig {
        seed: ctx.seed,
        mc_draws: c.mc_draws.unwrap_or(defaults.mc_draws),
        mc_paths: c.mc_paths.unwrap_or(defaults.mc_paths),
        random_instances: c.random_instances.unwrap_or(defaults.random_instances),
    };
    let report: BatteryReport = run_battery(&battery)?;
    #[derive(Serialize)]
    struct VerifyResult {
        config: BatteryConfig,
        #[serde(flatten)]
        report: BatteryReport,
    }
    let success = report.passed;
    let result = to_value(&VerifyResult { config: battery, report })?;
    Ok(Outcome { result, success })
}
