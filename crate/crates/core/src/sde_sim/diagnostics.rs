//! Boundary hitting and the log-determinant decomposition of a path.

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};

use super::PathEnsemble;
use crate::error::{Error, Result};
use crate::params::ProcessParams;
use crate::symcone::SymMatrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HittingStats {
    pub eps: f64,
    /// First grid time with pre-projection `λ_min < eps`, per path.
    pub first_hit_times: Vec<Option<f64>>,
    pub hit_fraction: f64,
    /// Binomial standard error of `hit_fraction`.
    pub standard_error: f64,
}

/// First times each path's pre-projection `λ_min` drops below `eps`.
pub fn hitting_stats(ensemble: &PathEnsemble, eps: f64) -> Result<HittingStats> {
    if !(eps > 0.0) {
        return Err(Error::InvalidParams(format!("eps must be positive, got {eps}")));
    }
    let times = ensemble.grid.times();
    let first_hit_times: Vec<Option<f64>> = ensemble
        .record_lows
        .iter()
        .map(|lows| lows.iter().find(|(_, v)| *v < eps).map(|&(i, _)| times[i]))
        .collect();
    let n = first_hit_times.len();
    let hits = first_hit_times.iter().filter(|t| t.is_some()).count();
    let (hit_fraction, standard_error) = if n == 0 {
        (0.0, 0.0)
    } else {
        let f = hits as f64 / n as f64;
        (f, (f * (1.0 - f) / n as f64).sqrt())
    };
    Ok(HittingStats { eps, first_hit_times, hit_fraction, standard_error })
}

/// Discrete series along one path:
/// `h_t = log det(e^{−βᵀt} X_t e^{−βt})`,
/// `P_t = Σ (2p − (d+1)) tr(α X_s⁻¹) Δs` (left points) and `M_t = h_t − h_0 − P_t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogDetDiagnostics {
    pub times: Vec<f64>,
    pub h: Vec<f64>,
    pub p_drift: Vec<f64>,
    pub m: Vec<f64>,
    /// Realized quadratic variation `Σ (ΔM)²`.
    pub m_quadratic_variation: f64,
    /// `Σ 4 tr(α X_s⁻¹) Δs`, the quadratic variation predicted by Itô's formula.
    pub predicted_quadratic_variation: f64,
}

/// Requires every state to be positive definite; pass the prefix of a path
/// that ends before its first hit.
pub fn logdet_diagnostics(times: &[f64], states: &[SymMatrix], process: &ProcessParams) -> Result<LogDetDiagnostics> {
    if times.len() != states.len() || times.is_empty() {
        return Err(Error::DimensionMismatch("times and states must be nonempty and aligned".into()));
    }
    let d = process.dim();
    let alpha = process.alpha().as_mat();
    let tr_beta = process.beta.trace();
    let coef = 2.0 * process.p - (d as f64 + 1.0);

    let mut h = Vec::with_capacity(states.len());
    let mut integrand = Vec::with_capacity(states.len());
    for (step, (t, x)) in times.iter().zip(states).enumerate() {
        if x.dim() != d {
            return Err(Error::DimensionMismatch("state and process differ in dimension".into()));
        }
        let chol = Cholesky::new(x.as_mat().clone()).ok_or(Error::SingularState { step })?;
        let ln_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        if !ln_det.is_finite() {
            return Err(Error::SingularState { step });
        }
        // det(e^{−βᵀt} X e^{−βt}) = det X · e^{−2t tr β}
        h.push(ln_det - 2.0 * t * tr_beta);
        integrand.push(alpha.component_mul(&chol.inverse()).sum());
    }

    let mut p_drift = vec![0.0; states.len()];
    let mut qv_pred = 0.0;
    for s in 1..states.len() {
        let dt = times[s] - times[s - 1];
        p_drift[s] = p_drift[s - 1] + coef * integrand[s - 1] * dt;
        qv_pred += 4.0 * integrand[s - 1] * dt;
    }
    let m: Vec<f64> = h.iter().zip(&p_drift).map(|(hv, pv)| hv - h[0] - pv).collect();
    let qv = m.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
    Ok(LogDetDiagnostics {
        times: times.to_vec(),
        h,
        p_drift,
        m,
        m_quadratic_variation: qv,
        predicted_quadratic_variation: qv_pred,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde_sim::{simulate_euler, TimeGrid};
    use crate::symcone::{Mat, PsdMatrix};

    #[test]
    fn deterministic_flow_keeps_transformed_determinant() {
        let beta = Mat::from_row_slice(2, 2, &[-0.4, 0.3, 0.1, -0.2]);
        let process = ProcessParams::new(1.5, beta.clone(), Mat::zeros(2, 2)).unwrap();
        let x = PsdMatrix::from_rows(&[vec![1.0, 0.2], vec![0.2, 0.5]]).unwrap();
        let grid = TimeGrid::uniform(1.0, 0.1).unwrap();
        let times = grid.times().to_vec();
        let states: Vec<SymMatrix> = times
            .iter()
            .map(|&t| crate::affine_flow::omega_flow(&beta, &x, t).unwrap().into_sym())
            .collect();
        let diag = logdet_diagnostics(&times, &states, &process).unwrap();
        assert!(diag.p_drift.iter().all(|v| *v == 0.0));
        assert!(diag.m.iter().all(|v| v.abs() < 1e-12));
        assert!(diag.h.iter().all(|v| (v - diag.h[0]).abs() < 1e-12));
    }

    #[test]
    fn critical_shape_has_no_drift_term() {
        let process = ProcessParams::new(1.5, Mat::zeros(2, 2), Mat::identity(2, 2)).unwrap();
        let grid = TimeGrid::uniform(0.2, 0.01).unwrap();
        let ens = simulate_euler(&process, &PsdMatrix::identity(2), &grid, 1, 5).unwrap();
        let diag = logdet_diagnostics(grid.times(), &ens.paths[0], &process).unwrap();
        assert!(diag.p_drift.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn singular_state_is_reported() {
        let process = ProcessParams::new(2.0, Mat::zeros(2, 2), Mat::identity(2, 2)).unwrap();
        let states = vec![SymMatrix::identity(2), SymMatrix::from_diagonal(&[1.0, 0.0])];
        assert_eq!(
            logdet_diagnostics(&[0.0, 0.1], &states, &process).unwrap_err(),
            Error::SingularState { step: 1 }
        );
    }

    #[test]
    fn hitting_uses_first_crossing() {
        let process = ProcessParams::new(2.0, Mat::zeros(2, 2), Mat::identity(2, 2)).unwrap();
        let grid = TimeGrid::uniform(0.3, 0.1).unwrap();
        let mut ens = simulate_euler(&process, &PsdMatrix::identity(2), &grid, 2, 0).unwrap();
        ens.record_lows = vec![vec![(0, 1.0), (2, 0.05), (3, 0.01)], vec![(0, 1.0)]];
        let stats = hitting_stats(&ens, 0.02).unwrap();
        assert_eq!(stats.first_hit_times[0], Some(grid.times()[3]));
        assert_eq!(stats.first_hit_times[1], None);
        assert_eq!(stats.hit_fraction, 0.5);
        assert!(hitting_stats(&ens, 0.0).is_err());
    }
}
