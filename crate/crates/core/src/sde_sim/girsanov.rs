//! Drift-change weights for Euler ensembles.
//!
//! Replaying the Brownian increments of a source ensemble, the weight
//! `Z ← Z · exp(−⟨γ, ΔB⟩ − ½‖γ‖²Δt)` with
//! `γ = √X (βᵀ − β̃ᵀ) Q⁻¹ + (p − p̃) (√X)⁻¹ Qᵀ` turns expectations under the
//! source parameters `(p, β)` into expectations under the target `(p̃, β̃)`.
//! The pairing `⟨γ, ΔB⟩ = Σ γ_ij ΔB_ij` is the Frobenius one, which is what
//! makes `B + ∫γ dt` a Brownian motion under the reweighted measure.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::euler::run_path;
use super::{McEstimate, PathEnsemble, Scheme};
use crate::error::{Error, Result};
use crate::params::ProcessParams;
use crate::rng::substream;
use crate::symcone::{Mat, PsdMatrix, SymMatrix};

const Q_MATCH_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReweightedLaplace {
    pub u: PsdMatrix,
    pub estimate: f64,
    pub standard_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GirsanovReport {
    /// `Z_T` per path.
    pub weights: Vec<f64>,
    pub mean_weight: f64,
    pub se_weight: f64,
    /// `E[Z_T e^{−tr(u X_T)}]` for each requested `u`.
    pub reweighted_laplace: Vec<ReweightedLaplace>,
}

/// Weights turning the Euler `ensemble` simulated under `source` into
/// samples of `target`.
pub fn girsanov_weights(
    ensemble: &PathEnsemble,
    source: &ProcessParams,
    target: &ProcessParams,
    u_grid: &[PsdMatrix],
) -> Result<GirsanovReport> {
    let d = source.dim();
    check_preconditions(ensemble, source, target)?;
    if u_grid.iter().any(|u| u.dim() != d) {
        return Err(Error::DimensionMismatch("u and process differ in dimension".into()));
    }
    let q_inv = source.q.clone().try_inverse().ok_or_else(|| {
        Error::PreconditionViolation("Q must be invertible for a drift change".into())
    })?;
    let drift_part = (&source.beta - &target.beta).transpose() * &q_inv;
    let shape_gap = source.p - target.p;
    let q_t = source.q.transpose();
    let x0 = ensemble.x0.sym().clone();

    let per_path: Vec<Result<(f64, SymMatrix)>> = (0..ensemble.n_paths())
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(ensemble.seed, i as u64);
            let mut ln_z = 0.0;
            let mut failure = None;
            let mut last = x0.clone();
            run_path(source, &x0, &ensemble.grid, &mut rng, |view| {
                if failure.is_some() {
                    return;
                }
                let root = view.root_before.as_mat();
                let mut gamma: Mat = root * &drift_part;
                if shape_gap != 0.0 {
                    match root.clone().try_inverse() {
                        Some(inv) if inv.iter().all(|v| v.is_finite()) => gamma += inv * &q_t * shape_gap,
                        _ => {
                            failure = Some(view.step);
                            return;
                        }
                    }
                }
                ln_z -= gamma.component_mul(view.db).sum() + 0.5 * gamma.norm_squared() * view.dt;
                last = view.state_after.clone();
            });
            match failure {
                Some(step) => Err(Error::PreconditionViolation(format!(
                    "path {i} reached a singular state at step {step}"
                ))),
                None => Ok((ln_z.exp(), last)),
            }
        })
        .collect();
    let mut weights = Vec::with_capacity(per_path.len());
    let mut endpoints = Vec::with_capacity(per_path.len());
    for r in per_path {
        let (w, x) = r?;
        weights.push(w);
        endpoints.push(x);
    }

    let mean = McEstimate::from_values(&weights)?;
    let reweighted_laplace = u_grid
        .iter()
        .map(|u| {
            let values: Vec<f64> = weights
                .iter()
                .zip(&endpoints)
                .map(|(w, x)| w * (-x.trace_product(u.as_mat())).exp())
                .collect();
            let est = McEstimate::from_values(&values)?;
            Ok(ReweightedLaplace { u: u.clone(), estimate: est.estimate, standard_error: est.standard_error })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GirsanovReport { weights, mean_weight: mean.estimate, se_weight: mean.standard_error, reweighted_laplace })
}

fn check_preconditions(ensemble: &PathEnsemble, source: &ProcessParams, target: &ProcessParams) -> Result<()> {
    let d = source.dim();
    if target.dim() != d || ensemble.process.dim() != d {
        return Err(Error::DimensionMismatch("source, target and ensemble differ in dimension".into()));
    }
    if ensemble.scheme != Scheme::Euler {
        return Err(Error::PreconditionViolation("weights replay Euler increments; got an OU-squares ensemble".into()));
    }
    if &ensemble.process != source {
        return Err(Error::PreconditionViolation("ensemble was not simulated under the source process".into()));
    }
    if (&source.q - &target.q).amax() > Q_MATCH_TOL * source.q.amax().max(1.0) {
        return Err(Error::PreconditionViolation("source and target must share Q".into()));
    }
    let threshold = (d as f64 + 1.0) / 2.0;
    if source.p.min(target.p) < threshold {
        return Err(Error::PreconditionViolation(format!(
            "both shapes must be at least (d+1)/2 = {threshold}"
        )));
    }
    if !ensemble.x0.is_positive_definite() {
        return Err(Error::PreconditionViolation("start state must be positive definite".into()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde_sim::{simulate_euler_with, Storage, TimeGrid};

    fn setup(p: f64) -> (ProcessParams, PathEnsemble) {
        let process = ProcessParams::new(p, Mat::zeros(2, 2), Mat::identity(2, 2)).unwrap();
        let grid = TimeGrid::uniform(0.1, 0.01).unwrap();
        let ens = simulate_euler_with(&process, &PsdMatrix::identity(2), &grid, 8, 3, Storage::Endpoint).unwrap();
        (process, ens)
    }

    #[test]
    fn identical_target_gives_unit_weights() {
        let (process, ens) = setup(2.0);
        let u = PsdMatrix::identity(2);
        let report = girsanov_weights(&ens, &process, &process, std::slice::from_ref(&u)).unwrap();
        assert!(report.weights.iter().all(|w| *w == 1.0));
        assert_eq!(report.se_weight, 0.0);
        // replayed endpoints coincide with the stored ones
        let direct = crate::sde_sim::mc_laplace(&ens.endpoints(), &u).unwrap();
        assert_eq!(report.reweighted_laplace[0].estimate, direct.estimate);
    }

    #[test]
    fn weights_are_positive() {
        let (process, ens) = setup(2.0);
        let target = ProcessParams::new(2.5, Mat::identity(2, 2) * -0.3, Mat::identity(2, 2)).unwrap();
        let report = girsanov_weights(&ens, &process, &target, &[]).unwrap();
        assert!(report.weights.iter().all(|w| *w > 0.0 && w.is_finite()));
    }

    #[test]
    fn precondition_gates() {
        let (process, ens) = setup(2.0);
        let low = ProcessParams::new(1.0, Mat::zeros(2, 2), Mat::identity(2, 2)).unwrap();
        assert!(matches!(girsanov_weights(&ens, &process, &low, &[]), Err(Error::PreconditionViolation(_))));
        let other_q = ProcessParams::new(2.0, Mat::zeros(2, 2), Mat::identity(2, 2) * 2.0).unwrap();
        assert!(matches!(girsanov_weights(&ens, &process, &other_q, &[]), Err(Error::PreconditionViolation(_))));
        let (wrong_source, _) = setup(2.5);
        assert!(matches!(
            girsanov_weights(&ens, &wrong_source, &process, &[]),
            Err(Error::PreconditionViolation(_))
        ));
    }
}
