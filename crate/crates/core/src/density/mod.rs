//! Lebesgue densities of Wishart laws and of Wishart transition functions.
//!
//! For `p > (d−1)/2` and invertible `σ` the law `Γ(p, ω; σ)` has density
//!
//! `(det σ)^{−p} e^{−tr(σ⁻¹ξ) − tr(σa)} (det ξ)^{p−(d+1)/2}
//!   · Σ_m Σ_{|κ|=m} C_κ(√a ξ √a) / (m! (p)_κ) / Γ_d(p)`
//!
//! with `a = σ⁻¹ωσ⁻¹`. The series is summed in weight blocks in log space.

pub mod partition;
pub mod zonal;

use nalgebra::Cholesky;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::affine_flow::transition_law;
use crate::error::{Error, Result};
use crate::params::{ProcessParams, WishartParams};
use crate::symcone::{rank_of_values, sqrt_psd, PsdMatrix, SymMatrix};
use crate::validity::transition_density_exists;

pub use partition::{ln_mv_gamma, mv_gamma, partitions_of, pochhammer_partition, Partition};
pub use zonal::{zonal, zonal_with_limit, ZonalTable, DEFAULT_MAX_WEIGHT};

use partition::ln_pochhammer_partition;

pub const DEFAULT_MAX_TERMS: usize = 120;
pub const DEFAULT_TOL: f64 = 1e-12;

/// Eigenvalues of `√a ξ √a` below this fraction of the largest are treated
/// as exact zeros.
const ARG_ZERO_REL: f64 = 1e-14;
const EXPONENT_ZERO_TOL: f64 = 1e-12;
const FIRST_TABLE_WEIGHT: usize = 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityResult {
    pub value: f64,
    /// Number of weight blocks `m = 0, 1, …` summed.
    pub terms_used: usize,
    /// Estimated truncation error of `value`.
    pub tail_estimate: f64,
    /// False when the block ratios had not dropped below one, so the tail
    /// estimate is only the size of the last block.
    pub reliable: bool,
}

/// Density of `Γ(p, ω; σ)` at `ξ`. Summation stops once the estimated tail
/// is below `tol` relative to the partial sum, or after `max_terms` blocks.
pub fn density(params: &WishartParams, xi: &PsdMatrix, max_terms: usize, tol: f64) -> Result<DensityResult> {
    let d = params.dim();
    if xi.dim() != d {
        return Err(Error::DimensionMismatch("xi and params differ in dimension".into()));
    }
    if max_terms == 0 || !(tol >= 0.0) {
        return Err(Error::InvalidParams("max_terms must be positive and tol non-negative".into()));
    }
    let df = d as f64;
    let p = params.p;
    if !(p > (df - 1.0) / 2.0) {
        return Err(Error::HypothesisViolation(format!(
            "density requires p > (d-1)/2 = {}, got p = {p}",
            (df - 1.0) / 2.0
        )));
    }
    let sigma_values = params.sigma.sym().spectrum().values;
    let chol = match Cholesky::new(params.sigma.as_mat().clone()) {
        Some(c) if rank_of_values(&sigma_values) == d => c,
        _ => return Err(Error::HypothesisViolation("density requires an invertible scale sigma".into())),
    };

    let exponent = p - (df + 1.0) / 2.0;
    let xi_values = xi.sym().spectrum().values;
    let ln_det_xi = if rank_of_values(&xi_values) < d {
        if exponent > EXPONENT_ZERO_TOL {
            return Ok(DensityResult { value: 0.0, terms_used: 0, tail_estimate: 0.0, reliable: true });
        }
        if exponent < -EXPONENT_ZERO_TOL {
            return Ok(DensityResult {
                value: f64::INFINITY,
                terms_used: 0,
                tail_estimate: 0.0,
                reliable: true,
            });
        }
        0.0
    } else {
        xi_values.iter().map(|v| v.ln()).sum::<f64>()
    };

    let sigma_inv = chol.inverse();
    let ln_det_sigma: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let a = SymMatrix::symmetrize(&(&sigma_inv * params.omega.as_mat() * &sigma_inv));
    let tr_sigma_inv_xi = xi.sym().trace_product(&sigma_inv);
    let tr_sigma_a = params.omega.sym().trace_product(&sigma_inv);
    let ln_prefactor = -p * ln_det_sigma - tr_sigma_inv_xi - tr_sigma_a + exponent * ln_det_xi - ln_mv_gamma(d, p)?;

    let root_a = sqrt_psd(&PsdMatrix::trusted(a));
    let y = xi.sym().congruence(root_a.as_mat());
    let series = hypergeometric_series(p, &y.spectrum().values, max_terms, tol);
    Ok(DensityResult {
        value: (ln_prefactor + series.ln_sum).exp(),
        terms_used: series.blocks,
        tail_estimate: (ln_prefactor + series.ln_tail).exp(),
        reliable: series.reliable,
    })
}

/// Density of `X_t` given `X_0 = x`, defined when the Kalman gate holds.
pub fn transition_density(
    process: &ProcessParams,
    t: f64,
    x: &PsdMatrix,
    xi: &PsdMatrix,
    max_terms: usize,
    tol: f64,
) -> Result<DensityResult> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidParams(format!("transition density needs t > 0, got {t}")));
    }
    if !transition_density_exists(process) {
        return Err(Error::NoDensity);
    }
    let law = transition_law(process, t, x)?;
    density(&law, xi, max_terms, tol)
}

struct Series {
    ln_sum: f64,
    ln_tail: f64,
    blocks: usize,
    reliable: bool,
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let hi = a.max(b);
    hi + ((a - hi).exp() + (b - hi).exp()).ln()
}

/// `Σ_m Σ_{|κ|=m} C_κ(y)/(m!(p)_κ)` in log form, from the eigenvalues of `y`.
fn hypergeometric_series(p: f64, eigenvalues: &[f64], max_terms: usize, tol: f64) -> Series {
    let top = eigenvalues.iter().cloned().fold(0.0, f64::max);
    let args: Vec<f64> = if top > 0.0 {
        eigenvalues.iter().filter(|v| **v > ARG_ZERO_REL * top).map(|v| v / top).collect()
    } else {
        Vec::new()
    };
    if args.is_empty() {
        return Series { ln_sum: 0.0, ln_tail: f64::NEG_INFINITY, blocks: 1, reliable: true };
    }
    let ln_scale = top.ln();
    let last_weight = max_terms - 1;
    let mut cap = FIRST_TABLE_WEIGHT.min(last_weight);
    loop {
        let table = zonal::table(args.len(), cap);
        let values = table.evaluate(&args);
        let mut block = vec![f64::NEG_INFINITY; cap + 1];
        for (kappa, c) in table.partitions().iter().zip(&values) {
            let m = kappa.weight();
            if m > cap || *c <= 0.0 {
                continue;
            }
            let term = c.ln() + m as f64 * ln_scale - ln_gamma(m as f64 + 1.0) - ln_pochhammer_partition(p, kappa);
            block[m] = log_add(block[m], term);
        }

        let mut ln_sum = f64::NEG_INFINITY;
        let mut ratios: Vec<f64> = Vec::new();
        for m in 0..=cap {
            ln_sum = log_add(ln_sum, block[m]);
            if m >= 1 {
                ratios.push(block[m] - block[m - 1]);
            }
            if m >= 2 {
                let ln_r = ratios[m - 1].max(ratios[m - 2]);
                if ln_r < 0.0 {
                    let ln_tail = block[m] + ln_r - (-ln_r.exp()).ln_1p();
                    if block[m] == f64::NEG_INFINITY || ln_tail <= tol.ln() + ln_sum {
                        return Series { ln_sum, ln_tail, blocks: m + 1, reliable: true };
                    }
                }
            }
        }
        if cap == last_weight {
            let ln_r = ratios.iter().rev().take(2).cloned().fold(f64::NEG_INFINITY, f64::max);
            let (ln_tail, reliable) = if ratios.is_empty() {
                (block[cap], false)
            } else if ln_r < 0.0 {
                (block[cap] + ln_r - (-ln_r.exp()).ln_1p(), true)
            } else {
                (block[cap], false)
            };
            return Series { ln_sum, ln_tail, blocks: cap + 1, reliable };
        }
        cap = (2 * cap).min(last_weight);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symcone::Mat;
    use statrs::function::gamma::gamma;

    fn scalar(v: f64) -> PsdMatrix {
        PsdMatrix::from_diagonal(&[v]).unwrap()
    }

    /// Scalar law Γ(p, ω; σ) as a Poisson(ω/σ) mixture of Gamma(p + k, σ).
    fn scalar_oracle(p: f64, omega: f64, sigma: f64, x: f64) -> f64 {
        let lam = omega / sigma;
        (0..400)
            .map(|k| {
                let k = k as f64;
                let ln_w = -lam + k * lam.ln() - ln_gamma(k + 1.0);
                let shape = p + k;
                let ln_g = (shape - 1.0) * x.ln() - x / sigma - shape * sigma.ln() - ln_gamma(shape);
                (ln_w + ln_g).exp()
            })
            .sum()
    }

    #[test]
    fn scalar_noncentral_matches_poisson_mixture() {
        for &(p, om, sg, x) in &[(1.5, 2.0, 2.0, 1.3), (0.7, 5.0, 0.5, 4.0), (3.0, 0.1, 1.0, 0.2)] {
            let params = WishartParams::new(p, scalar(om), scalar(sg)).unwrap();
            let r = density(&params, &scalar(x), 60, 1e-15).unwrap();
            let oracle = scalar_oracle(p, om, sg, x);
            assert!((r.value - oracle).abs() < 1e-8 * oracle, "{} vs {}", r.value, oracle);
        }
    }

    #[test]
    fn central_matches_gamma_in_one_dimension() {
        let params = WishartParams::central(2.5, scalar(3.0)).unwrap();
        let r = density(&params, &scalar(1.2), 50, 1e-12).unwrap();
        let oracle = 1.2f64.powf(1.5) * (-0.4f64).exp() / (3f64.powf(2.5) * gamma(2.5));
        assert!((r.value - oracle).abs() < 1e-13 * oracle);
        assert_eq!(r.terms_used, 1);
        assert_eq!(r.tail_estimate, 0.0);
    }

    #[test]
    fn singular_argument_cases() {
        let xi = PsdMatrix::from_diagonal(&[1.0, 0.0]).unwrap();
        let above = WishartParams::central(2.0, PsdMatrix::identity(2)).unwrap();
        assert_eq!(density(&above, &xi, 50, 1e-12).unwrap().value, 0.0);
        let edge = WishartParams::central(1.5, PsdMatrix::identity(2)).unwrap();
        assert!(density(&edge, &xi, 50, 1e-12).unwrap().value > 0.0);
        let below = WishartParams::central(1.2, PsdMatrix::identity(2)).unwrap();
        assert_eq!(density(&below, &xi, 50, 1e-12).unwrap().value, f64::INFINITY);
    }

    #[test]
    fn hypothesis_violations() {
        let low = WishartParams::central(0.5, PsdMatrix::identity(2)).unwrap();
        assert!(matches!(
            density(&low, &PsdMatrix::identity(2), 10, 1e-12),
            Err(Error::HypothesisViolation(_))
        ));
        let singular = WishartParams::central(2.0, PsdMatrix::from_diagonal(&[1.0, 0.0]).unwrap()).unwrap();
        assert!(matches!(
            density(&singular, &PsdMatrix::identity(2), 10, 1e-12),
            Err(Error::HypothesisViolation(_))
        ));
    }

    #[test]
    fn truncation_reports_tail() {
        let params = WishartParams::new(1.5, scalar(40.0), scalar(1.0)).unwrap();
        let short = density(&params, &scalar(30.0), 5, 1e-14).unwrap();
        assert_eq!(short.terms_used, 5);
        assert!(!short.reliable);
        let full = density(&params, &scalar(30.0), 200, 1e-14).unwrap();
        assert!(full.reliable);
        assert!(full.terms_used < 200);
        assert!(full.tail_estimate <= 1e-13 * full.value);
    }

    #[test]
    fn transition_density_at_zero_start_is_central() {
        let process = ProcessParams::new(1.5, Mat::zeros(2, 2), Mat::identity(2, 2)).unwrap();
        let xi = PsdMatrix::from_rows(&[vec![1.0, 0.3], vec![0.3, 0.7]]).unwrap();
        let r = transition_density(&process, 0.5, &PsdMatrix::zeros(2), &xi, 50, 1e-12).unwrap();
        let central = WishartParams::central(1.5, PsdMatrix::identity(2)).unwrap();
        let direct = density(&central, &xi, 50, 1e-12).unwrap();
        assert!((r.value - direct.value).abs() < 1e-12 * direct.value);
    }

    #[test]
    fn transition_density_gate() {
        let q = Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let process = ProcessParams::new(1.5, Mat::zeros(2, 2), q).unwrap();
        let xi = PsdMatrix::identity(2);
        assert_eq!(
            transition_density(&process, 1.0, &xi, &xi, 10, 1e-12).unwrap_err(),
            Error::NoDensity
        );
    }
}
