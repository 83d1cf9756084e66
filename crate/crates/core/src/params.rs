//! Parameter triples for Wishart laws and Wishart processes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::symcone::{mat_serde, Mat, PsdMatrix, SymMatrix};

/// Shape `p`, non-centrality `ω` and scale `σ` of the law `Γ(p, ω; σ)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawWishartParams")]
pub struct WishartParams {
    pub p: f64,
    pub omega: PsdMatrix,
    pub sigma: PsdMatrix,
}

#[derive(Deserialize)]
struct RawWishartParams {
    p: f64,
    omega: PsdMatrix,
    sigma: PsdMatrix,
}

impl TryFrom<RawWishartParams> for WishartParams {
    type Error = Error;
    fn try_from(raw: RawWishartParams) -> Result<Self> {
        WishartParams::new(raw.p, raw.omega, raw.sigma)
    }
}

impl WishartParams {
    pub fn new(p: f64, omega: PsdMatrix, sigma: PsdMatrix) -> Result<Self> {
        if !(p.is_finite() && p >= 0.0) {
            return Err(Error::InvalidParams(format!("shape p must be >= 0, got {p}")));
        }
        if omega.dim() != sigma.dim() {
            return Err(Error::DimensionMismatch(format!(
                "omega is {0}x{0} but sigma is {1}x{1}",
                omega.dim(),
                sigma.dim()
            )));
        }
        Ok(WishartParams { p, omega, sigma })
    }

    /// Central law `Γ(p; σ)`.
    pub fn central(p: f64, sigma: PsdMatrix) -> Result<Self> {
        let d = sigma.dim();
        Self::new(p, PsdMatrix::zeros(d), sigma)
    }

    pub fn dim(&self) -> usize {
        self.sigma.dim()
    }
}

/// Wishart SDE parameters `(p, β, Q)` with the cached diffusion matrix `α = QᵀQ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawProcessParams")]
pub struct ProcessParams {
    pub p: f64,
    #[serde(with = "mat_serde")]
    pub beta: Mat,
    #[serde(with = "mat_serde")]
    pub q: Mat,
    #[serde(skip_serializing)]
    alpha: PsdMatrix,
}

#[derive(Deserialize)]
struct RawProcessParams {
    p: f64,
    #[serde(with = "mat_serde")]
    beta: Mat,
    #[serde(with = "mat_serde")]
    q: Mat,
}

impl TryFrom<RawProcessParams> for ProcessParams {
    type Error = Error;
    fn try_from(raw: RawProcessParams) -> Result<Self> {
        ProcessParams::new(raw.p, raw.beta, raw.q)
    }
}

impl ProcessParams {
    pub fn new(p: f64, beta: Mat, q: Mat) -> Result<Self> {
        if !(p.is_finite() && p >= 0.0) {
            return Err(Error::InvalidParams(format!("drift parameter p must be >= 0, got {p}")));
        }
        if !beta.is_square() || !q.is_square() || beta.nrows() != q.nrows() || q.nrows() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "beta is {}x{}, q is {}x{}",
                beta.nrows(),
                beta.ncols(),
                q.nrows(),
                q.ncols()
            )));
        }
        if beta.iter().chain(q.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let alpha = PsdMatrix::trusted(SymMatrix::symmetrize(&(q.transpose() * &q)));
        Ok(ProcessParams { p, beta, q, alpha })
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    /// `α = QᵀQ`.
    pub fn alpha(&self) -> &PsdMatrix {
        &self.alpha
    }
}
