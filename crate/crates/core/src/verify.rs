//! Canned self-checks: Monte Carlo against closed-form transforms, Riccati
//! residuals, semiflow composition, zonal normalization and the Kalman
//! equivalence. Every check reports its metric, threshold and margin.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::affine_flow::{flow_pair, transition_laplace};
use crate::density::{partitions_of, zonal};
use crate::error::Result;
use crate::params::{ProcessParams, WishartParams};
use crate::rng::{substream, StreamRng};
use crate::sde_sim::{mc_laplace, simulate_ou_squares_with, Storage, TimeGrid};
use crate::symcone::{Mat, PsdMatrix, SymMatrix};
use crate::validity::kalman_equiv_probe;
use crate::wishart_dist::{laplace, sample_with_method, SampleMethod};

/// Sizes of the randomized checks.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct BatteryConfig {
    pub seed: u64,
    pub mc_draws: usize,
    pub mc_paths: usize,
    pub random_instances: usize,
}

impl BatteryConfig {
    pub fn with_seed(seed: u64) -> Self {
        BatteryConfig { seed, mc_draws: 50_000, mc_paths: 5_000, random_instances: 100 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    /// Observed worst-case value; smaller is better.
    pub metric: f64,
    pub threshold: f64,
    /// `threshold − metric`; negative when the check fails.
    pub margin: f64,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &str, metric: f64, threshold: f64, detail: String) -> Self {
        CheckResult {
            name: name.to_string(),
            passed: metric <= threshold,
            metric,
            threshold,
            margin: threshold - metric,
            detail,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatteryReport {
    pub seed: u64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

pub fn run_battery(config: &BatteryConfig) -> Result<BatteryReport> {
    let checks = vec![
        sampler_transform(config)?,
        process_transform(config)?,
        riccati_residuals(config)?,
        semiflow(config)?,
        zonal_normalization(config)?,
        kalman_equivalence(config)?,
    ];
    Ok(BatteryReport { seed: config.seed, passed: checks.iter().all(|c| c.passed), checks })
}

fn gaussian(rng: &mut StreamRng, rows: usize, cols: usize, scale: f64) -> Mat {
    Mat::from_fn(rows, cols, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

fn random_psd(rng: &mut StreamRng, d: usize, scale: f64) -> Result<PsdMatrix> {
    let g = gaussian(rng, d, d, scale);
    PsdMatrix::new(SymMatrix::symmetrize(&(&g * g.transpose())))
}

fn random_process(rng: &mut StreamRng, d: usize) -> Result<ProcessParams> {
    let p = rng.random_range(0.0..3.0);
    ProcessParams::new(p, gaussian(rng, d, d, 0.5), gaussian(rng, d, d, 0.7))
}

fn u_grid() -> Result<Vec<PsdMatrix>> {
    Ok(vec![
        PsdMatrix::from_diagonal(&[0.1, 0.1])?,
        PsdMatrix::identity(2),
        PsdMatrix::from_rows(&[vec![0.5, 0.2], vec![0.2, 0.3]])?,
        PsdMatrix::from_rows(&[vec![1.0, -0.4], vec![-0.4, 2.0]])?,
    ])
}

/// Worst `|mc − exact| / SE` over the grid.
fn worst_z(samples: &[PsdMatrix], exact: impl Fn(&PsdMatrix) -> Result<f64>) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for u in u_grid()? {
        let est = mc_laplace(samples, &u)?;
        let diff = (est.estimate - exact(&u)?).abs();
        worst = worst.max(if est.standard_error > 0.0 { diff / est.standard_error } else { diff * 1e12 });
    }
    Ok(worst)
}

fn sampler_transform(config: &BatteryConfig) -> Result<CheckResult> {
    let sigma = PsdMatrix::from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]])?;
    let omega = PsdMatrix::new(SymMatrix::outer(&DVector::from_vec(vec![1.0, 1.0])))?;
    let params = WishartParams::new(1.0, omega, sigma)?;
    let batch = sample_with_method(&params, config.mc_draws, config.seed, SampleMethod::GaussianSum)?;
    let z = worst_z(&batch.draws, |u| Ok(laplace(&params, u)))?;
    Ok(CheckResult::new("lt_vs_mc_sampler", z, 4.0, format!("{} draws, worst |diff|/SE", config.mc_draws)))
}

fn process_transform(config: &BatteryConfig) -> Result<CheckResult> {
    let process = ProcessParams::new(2.0, Mat::identity(2, 2) * -0.5, Mat::identity(2, 2))?;
    let y = vec![
        DVector::from_vec(vec![1.0, 0.0]),
        DVector::from_vec(vec![0.0, 1.0]),
        DVector::zeros(2),
        DVector::zeros(2),
    ];
    let grid = TimeGrid::uniform(1.0, 0.05)?;
    let ens = simulate_ou_squares_with(&process, &y, &grid, config.mc_paths, config.seed, Storage::Endpoint)?;
    let x = ens.x0.clone();
    let z = worst_z(&ens.endpoints(), |u| transition_laplace(&process, 1.0, u, &x))?;
    Ok(CheckResult::new("lt_vs_mc_process", z, 4.0, format!("{} OU-squares paths, worst |diff|/SE", config.mc_paths)))
}

fn riccati_residuals(config: &BatteryConfig) -> Result<CheckResult> {
    let mut rng = substream(config.seed, 3);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..config.random_instances {
        let d = 1 + i % 3;
        let process = random_process(&mut rng, d)?;
        let u = random_psd(&mut rng, d, 0.8)?;
        let t = [0.1, 1.0, 3.0][(i / 3) % 3];
        let lo = flow_pair(&process, t - h, &u)?;
        let mid = flow_pair(&process, t, &u)?;
        let hi = flow_pair(&process, t + h, &u)?;
        let alpha = process.alpha().as_mat();
        let psi = mid.psi.as_mat();
        let dphi = (hi.phi - lo.phi) / (2.0 * h);
        let dpsi = (hi.psi.as_mat() - lo.psi.as_mat()) / (2.0 * h);
        let phi_rhs = 2.0 * process.p * (alpha * psi).trace();
        let psi_rhs = -2.0 * psi * alpha * psi + psi * &process.beta + process.beta.transpose() * psi;
        worst = worst.max((dphi - phi_rhs).abs()).max((dpsi - psi_rhs).amax());
    }
    Ok(CheckResult::new(
        "riccati_residuals",
        worst,
        1e-6,
        format!("{} instances, central differences with h = {h:e}", config.random_instances),
    ))
}

fn semiflow(config: &BatteryConfig) -> Result<CheckResult> {
    let mut rng = substream(config.seed, 4);
    let mut worst: f64 = 0.0;
    for i in 0..config.random_instances {
        let d = 1 + i % 3;
        let process = random_process(&mut rng, d)?;
        let u = random_psd(&mut rng, d, 0.8)?;
        let t = rng.random_range(0.05..2.0);
        let s = rng.random_range(0.05..2.0);
        let whole = flow_pair(&process, t + s, &u)?;
        let first = flow_pair(&process, t, &u)?;
        let second = flow_pair(&process, s, &first.psi)?;
        let phi_err = (whole.phi - first.phi - second.phi).abs() / whole.phi.abs().max(1.0);
        let psi_err = (whole.psi.as_mat() - second.psi.as_mat()).amax() / whole.psi.as_mat().amax().max(1.0);
        worst = worst.max(phi_err).max(psi_err);
    }
    Ok(CheckResult::new("semiflow", worst, 1e-10, format!("{} (t, s, u) tuples, scaled error", config.random_instances)))
}

fn zonal_normalization(config: &BatteryConfig) -> Result<CheckResult> {
    let mut rng = substream(config.seed, 5);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let d = 1 + i % 3;
        let xi = random_psd(&mut rng, d, 1.0)?;
        let tr = xi.sym().trace();
        for k in 0..=6 {
            let mut total = 0.0;
            for kappa in partitions_of(k, d) {
                total += zonal(&kappa, xi.sym())?;
            }
            let target = tr.powi(k as i32);
            worst = worst.max((total - target).abs() / target);
        }
    }
    Ok(CheckResult::new("zonal_normalization", worst, 1e-8, "20 matrices, weights up to 6, relative error".into()))
}

fn kalman_equivalence(config: &BatteryConfig) -> Result<CheckResult> {
    let mut rng = substream(config.seed, 6);
    let mut disagreements = 0;
    for i in 0..config.random_instances {
        let d = 1 + (i / 4) % 4;
        // half the cases zero out trailing rows of Q, often losing controllability
        let keep = if i % 2 == 0 { d } else { rng.random_range(0..d) };
        let mut q = gaussian(&mut rng, d, d, 0.7);
        for r in keep..d {
            q.row_mut(r).fill(0.0);
        }
        let beta = if i % 4 == 3 { Mat::zeros(d, d) } else { gaussian(&mut rng, d, d, 0.7) };
        let (rank_maximal, sigma_pd) = kalman_equiv_probe(&ProcessParams::new(1.0, beta, q)?, 1.0)?;
        if rank_maximal != sigma_pd {
            disagreements += 1;
        }
    }
    Ok(CheckResult::new(
        "kalman_equivalence",
        disagreements as f64,
        0.0,
        format!("disagreements over {} (beta, Q) pairs", config.random_instances),
    ))
}
