//! Exponentially affine transform of the Wishart transition law.
//!
//! For parameters `(p, β, α = QᵀQ)` the transition Laplace transform is
//! `exp(−φ(t,u) − tr(ψ(t,u) x))` with
//!
//! ```text
//! ω_t(x) = e^{βt} x e^{βᵀt}
//! σ_t(α) = 2 ∫_0^t e^{βs} α e^{βᵀs} ds
//! φ(t,u) = p log det(I + u σ_t(α))
//! ψ(t,u) = e^{βᵀt} u (I + σ_t(α) u)^{-1} e^{βt}
//! ```
//!
//! `ψ` uses the resolvent form `u (I + σu)^{-1}` so that singular `u`
//! (including `u = 0`) is handled without inverting `u`.

use nalgebra::Cholesky;

use crate::error::{Error, Result};
use crate::params::{ProcessParams, WishartParams};
use crate::symcone::{matrix_exp, sqrt_psd, Mat, PsdMatrix, SymMatrix};
use crate::wishart_dist;

/// Relative disagreement between the two `σ_t` routes that raises an error.
pub const SIGMA_ROUTE_TOL: f64 = 1e-8;
const QUAD_REL_TOL: f64 = 1e-12;
const QUAD_MAX_DEPTH: u32 = 40;

/// `e^{βt} x e^{βᵀt}`.
pub fn omega_flow(beta: &Mat, x: &PsdMatrix, t: f64) -> Result<PsdMatrix> {
    let e = matrix_exp(&(beta * t))?;
    Ok(PsdMatrix::trusted(x.sym().congruence(&e)))
}

/// `2 ∫_0^t e^{βs} α e^{βᵀs} ds`, by the block-triangular matrix exponential,
/// cross-checked against adaptive Gauss–Kronrod quadrature.
pub fn sigma_flow(beta: &Mat, alpha: &PsdMatrix, t: f64) -> Result<PsdMatrix> {
    let primary = sigma_flow_van_loan(beta, alpha, t)?;
    let check = sigma_flow_quadrature(beta, alpha, t)?;
    let scale = primary.as_mat().norm().max(check.as_mat().norm());
    if scale > 0.0 {
        let rel_diff = (primary.as_mat() - check.as_mat()).norm() / scale;
        if !(rel_diff <= SIGMA_ROUTE_TOL) {
            return Err(Error::QuadratureDivergence { rel_diff });
        }
    }
    Ok(primary)
}

/// Van Loan route: with `C = [[β, α], [0, −βᵀ]]`, the upper-right block of
/// `e^{Ct}` times `(e^{βt})ᵀ` is `∫_0^t e^{βs} α e^{βᵀs} ds`.
pub fn sigma_flow_van_loan(beta: &Mat, alpha: &PsdMatrix, t: f64) -> Result<PsdMatrix> {
    check_time(t)?;
    let d = beta.nrows();
    let mut block = Mat::zeros(2 * d, 2 * d);
    block.view_mut((0, 0), (d, d)).copy_from(&(beta * t));
    block.view_mut((0, d), (d, d)).copy_from(&(alpha.as_mat() * t));
    block
        .view_mut((d, d), (d, d))
        .copy_from(&(-beta.transpose() * t));
    let e = matrix_exp(&block)?;
    let upper_left = e.view((0, 0), (d, d)).into_owned();
    let upper_right = e.view((0, d), (d, d)).into_owned();
    let integral = upper_right * upper_left.transpose();
    Ok(PsdMatrix::trusted(SymMatrix::symmetrize(&(integral * 2.0))))
}

// 15-point Kronrod nodes on [-1, 1] (non-negative half) with the embedded
// 7-point Gauss weights on the odd-indexed nodes.
const GK_NODES: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const GK_WEIGHTS: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// Quadrature route of [`sigma_flow`].
pub fn sigma_flow_quadrature(beta: &Mat, alpha: &PsdMatrix, t: f64) -> Result<PsdMatrix> {
    check_time(t)?;
    let d = beta.nrows();
    if t == 0.0 {
        return Ok(PsdMatrix::zeros(d));
    }
    let integrand = |s: f64| -> Result<Mat> {
        let e = matrix_exp(&(beta * s))?;
        Ok(&e * alpha.as_mat() * e.transpose())
    };
    let (whole, err) = gk15(&integrand, 0.0, t)?;
    let scale = whole.norm();
    let integral = if err <= QUAD_REL_TOL * scale {
        whole
    } else {
        adaptive(&integrand, 0.0, t, QUAD_REL_TOL * scale.max(f64::MIN_POSITIVE), 0)?
    };
    Ok(PsdMatrix::trusted(SymMatrix::symmetrize(&(integral * 2.0))))
}

fn adaptive(f: &impl Fn(f64) -> Result<Mat>, a: f64, b: f64, tol: f64, depth: u32) -> Result<Mat> {
    let (value, err) = gk15(f, a, b)?;
    if err <= tol || depth >= QUAD_MAX_DEPTH {
        return Ok(value);
    }
    let mid = 0.5 * (a + b);
    let left = adaptive(f, a, mid, 0.5 * tol, depth + 1)?;
    let right = adaptive(f, mid, b, 0.5 * tol, depth + 1)?;
    Ok(left + right)
}

fn gk15(f: &impl Fn(f64) -> Result<Mat>, a: f64, b: f64) -> Result<(Mat, f64)> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center)?;
    let mut kronrod = &fc * GK_WEIGHTS[7];
    let mut gauss = &fc * GAUSS_WEIGHTS[3];
    for k in 0..7 {
        let dx = half * GK_NODES[k];
        let sum = f(center - dx)? + f(center + dx)?;
        kronrod += &sum * GK_WEIGHTS[k];
        if k % 2 == 1 {
            gauss += &sum * GAUSS_WEIGHTS[k / 2];
        }
    }
    let err = (&kronrod - &gauss).norm() * half;
    Ok((kronrod * half, err))
}

fn check_time(t: f64) -> Result<()> {
    if t.is_finite() && t >= 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!("time must be finite and >= 0, got {t}")))
    }
}

/// Exponents `(φ, ψ)` of the transition transform at `(t, u)`.
#[derive(Clone, Debug)]
pub struct FlowPair {
    pub phi: f64,
    pub psi: PsdMatrix,
    pub t: f64,
    pub u: PsdMatrix,
}

pub fn flow_pair(process: &ProcessParams, t: f64, u: &PsdMatrix) -> Result<FlowPair> {
    check_dims(process, u)?;
    let sigma_t = sigma_flow(&process.beta, process.alpha(), t)?;
    flow_pair_from_sigma(process, t, u, &sigma_t)
}

pub(crate) fn flow_pair_from_sigma(
    process: &ProcessParams,
    t: f64,
    u: &PsdMatrix,
    sigma_t: &PsdMatrix,
) -> Result<FlowPair> {
    let d = process.dim();
    let ident = Mat::identity(d, d);

    // log det(I + uσ) = log det(I + σ^{1/2} u σ^{1/2}), the latter symmetric PD.
    let root = sqrt_psd(sigma_t);
    let sym = SymMatrix::symmetrize(&(&ident + u.sym().congruence(root.as_mat()).as_mat()));
    let chol = Cholesky::new(sym.into_mat()).ok_or(Error::SingularResolvent)?;
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();

    // u (I + σu)^{-1} = ((I + uσ)^{-1} u)ᵀ
    let lhs = &ident + u.as_mat() * sigma_t.as_mat();
    let solved = lhs.lu().solve(u.as_mat()).ok_or(Error::SingularResolvent)?;
    if solved.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularResolvent);
    }
    let e = matrix_exp(&(&process.beta * t))?;
    let psi = SymMatrix::symmetrize(&(e.transpose() * solved.transpose() * &e));

    Ok(FlowPair {
        phi: process.p * log_det,
        psi: PsdMatrix::trusted(psi),
        t,
        u: u.clone(),
    })
}

/// `E[exp(−tr(u X_t)) | X_0 = x] = exp(−φ(t,u) − tr(ψ(t,u) x))`.
pub fn transition_laplace(process: &ProcessParams, t: f64, u: &PsdMatrix, x: &PsdMatrix) -> Result<f64> {
    check_dims(process, x)?;
    let fp = flow_pair(process, t, u)?;
    Ok((-fp.phi - fp.psi.sym().trace_product(x.as_mat())).exp())
}

/// Same transform evaluated as the Laplace transform of the marginal law
/// `Γ(p, ω_t(x); σ_t(α))`.
pub fn transition_laplace_direct(
    process: &ProcessParams,
    t: f64,
    u: &PsdMatrix,
    x: &PsdMatrix,
) -> Result<f64> {
    check_dims(process, x)?;
    check_dims(process, u)?;
    let law = transition_law(process, t, x)?;
    Ok(wishart_dist::laplace(&law, u))
}

/// Marginal law of `X_t` started at `x`.
pub fn transition_law(process: &ProcessParams, t: f64, x: &PsdMatrix) -> Result<WishartParams> {
    let omega_t = omega_flow(&process.beta, x, t)?;
    let sigma_t = sigma_flow(&process.beta, process.alpha(), t)?;
    WishartParams::new(process.p, omega_t, sigma_t)
}

/// Generator applied to `f_u(x) = exp(−tr(ux))` in coordinates: the
/// second-order term uses the diffusion tensor
/// `A_ijkl = x_ik α_jl + x_il α_jk + x_jk α_il + x_jl α_ik`, the first-order
/// term the drift `βx + xβᵀ + 2pα`.
pub fn generator_on_exponential(process: &ProcessParams, u: &PsdMatrix, x: &PsdMatrix) -> f64 {
    let d = process.dim();
    let (u, x, a) = (u.as_mat(), x.as_mat(), process.alpha().as_mat());
    let f = (-u.component_mul(x).sum()).exp();

    // ∂f/∂x_ij = −u_ij f and ∂²f/∂x_ij∂x_kl = u_ij u_kl f
    let mut second = 0.0;
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    let tensor = x[(i, k)] * a[(j, l)]
                        + x[(i, l)] * a[(j, k)]
                        + x[(j, k)] * a[(i, l)]
                        + x[(j, l)] * a[(i, k)];
                    second += tensor * u[(i, j)] * u[(k, l)];
                }
            }
        }
    }
    let drift = &process.beta * x + x * process.beta.transpose() + a * (2.0 * process.p);
    let first = -drift.component_mul(u).sum();
    f * (0.5 * second + first)
}

/// Time derivative of the transition transform at `t = 0`:
/// `−f_u(x) (2p tr(αu) + tr((−2uαu + uβ + βᵀu) x))`.
pub fn generator_from_transform(process: &ProcessParams, u: &PsdMatrix, x: &PsdMatrix) -> f64 {
    let (u, x, a) = (u.as_mat(), x.as_mat(), process.alpha().as_mat());
    let beta = &process.beta;
    let f = (-u.component_mul(x).sum()).exp();
    let dpsi = -(u * a * u) * 2.0 + u * beta + beta.transpose() * u;
    let dphi = 2.0 * process.p * (a * u).trace();
    -f * (dphi + (dpsi * x).trace())
}

fn check_dims(process: &ProcessParams, m: &PsdMatrix) -> Result<()> {
    if m.dim() != process.dim() {
        return Err(Error::DimensionMismatch(format!(
            "process is {0}x{0} but argument is {1}x{1}",
            process.dim(),
            m.dim()
        )));
    }
    Ok(())
}
