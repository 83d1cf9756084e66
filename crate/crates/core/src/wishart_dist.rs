//! The law `Γ(p, ω; σ)`: Laplace transform, mean, exact samplers and the
//! congruence / tilting / convolution algebra.

use nalgebra::{Cholesky, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::WishartParams;
use crate::rng::{substream, StreamRng};
use crate::symcone::{rank_of_values, sqrt_psd, Mat, PsdMatrix, SymMatrix};
use crate::validity::{classify_wishart, Status, HALF_INTEGER_TOL};

/// Eigen-mass below the rank threshold is folded back only above this size.
const DISCARDED_MASS_FLOOR: f64 = 1e-14;
const PARAM_MATCH_TOL: f64 = 1e-12;

/// `det(I + σu)^{−p} · exp(−tr(u (I + σu)^{−1} ω))` for PSD `u`.
pub fn laplace(params: &WishartParams, u: &PsdMatrix) -> f64 {
    transform(params, u.as_mat())
}

/// Laplace transform on the full domain `{u : I + σ^{1/2} u σ^{1/2} ≻ 0}`,
/// which includes indefinite `u`.
pub fn laplace_general(params: &WishartParams, u: &SymMatrix) -> Result<f64> {
    if u.dim() != params.dim() {
        return Err(Error::DimensionMismatch("u and params differ in dimension".into()));
    }
    let d = params.dim();
    let root = sqrt_psd(&params.sigma);
    let inner = Mat::identity(d, d) + u.congruence(root.as_mat()).as_mat();
    if Cholesky::new(SymMatrix::symmetrize(&inner).into_mat()).is_none() {
        return Err(Error::InvalidParams(
            "u lies outside the domain of the moment generating function".into(),
        ));
    }
    Ok(transform(params, u.as_mat()))
}

fn transform(params: &WishartParams, u: &Mat) -> f64 {
    let d = params.dim();
    let ident = Mat::identity(d, d);
    let sigma = params.sigma.as_mat();
    let m = &ident + sigma * u;
    let det = m.determinant();
    // (I + uσ)^{-1} u is the transpose of u (I + σu)^{-1}
    let resolvent_t = (&ident + u * sigma)
        .lu()
        .solve(u)
        .expect("I + uσ is invertible on the transform domain");
    let exponent = resolvent_t.component_mul(params.omega.as_mat()).sum();
    (-params.p * det.ln() - exponent).exp()
}

/// `E[X] = pσ + ω`.
pub fn mean(params: &WishartParams) -> SymMatrix {
    &params.sigma.sym().scale(params.p) + params.omega.sym()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SampleMethod {
    /// `Σ ξᵢξᵢᵀ` over `2p` Gaussian vectors with means built from `ω`.
    GaussianSum,
    /// Bartlett central part of shape `p − rank(ω)/2` plus a Gaussian sum
    /// of `rank(ω)` vectors carrying the non-centrality.
    BartlettComposite,
}

#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub draws: Vec<PsdMatrix>,
    pub seed: u64,
    pub method: SampleMethod,
}

/// Draws `n` samples with the first applicable method.
pub fn sample(params: &WishartParams, n: usize, seed: u64) -> Result<SampleBatch> {
    require_valid(params)?;
    let plan = SamplerPlan::new(params)?;
    let method = plan.default_method()?;
    Ok(plan.draw_batch(method, n, seed))
}

/// Draws with an explicitly chosen method; errors if it does not apply.
pub fn sample_with_method(
    params: &WishartParams,
    n: usize,
    seed: u64,
    method: SampleMethod,
) -> Result<SampleBatch> {
    require_valid(params)?;
    let plan = SamplerPlan::new(params)?;
    if !plan.supports(method) {
        return Err(Error::UnsupportedShape(format!(
            "{method:?} does not apply to p = {}, rank(omega) = {}",
            params.p,
            plan.means.len()
        )));
    }
    Ok(plan.draw_batch(method, n, seed))
}

fn require_valid(params: &WishartParams) -> Result<()> {
    let verdict = classify_wishart(params);
    if verdict.status != Status::Valid {
        return Err(Error::InvalidParams(format!(
            "existence verdict is {:?}, sampling requires Valid",
            verdict.status
        )));
    }
    Ok(())
}

/// Precomputed pieces shared by every draw of a batch.
struct SamplerPlan {
    dim: usize,
    p: f64,
    /// Mean vectors `μᵢ` with `Σ μᵢμᵢᵀ = ω` (after rank truncation).
    means: Vec<DVector<f64>>,
    /// `(σ/2)^{1/2}`, the covariance root of each Gaussian factor.
    cov_root: Mat,
}

impl SamplerPlan {
    fn new(params: &WishartParams) -> Result<Self> {
        let d = params.dim();
        let spec = params.omega.sym().spectrum();
        let rank = rank_of_values(&spec.values);
        let mut kept: Vec<(f64, DVector<f64>)> = (d - rank..d)
            .map(|j| (spec.values[j], spec.vectors.column(j).into_owned()))
            .collect();
        let discarded: f64 = spec.values[..d - rank].iter().filter(|v| **v > 0.0).sum();
        if discarded > DISCARDED_MASS_FLOOR {
            if let Some(top) = kept.last_mut() {
                top.0 += discarded;
            }
        }
        let means = kept.into_iter().map(|(l, v)| v * l.sqrt()).collect();
        let half_sigma = params.sigma.scale(0.5)?;
        Ok(SamplerPlan {
            dim: d,
            p: params.p,
            means,
            cov_root: sqrt_psd(&half_sigma).into_sym().into_mat(),
        })
    }

    fn gaussian_count(&self) -> Option<usize> {
        let two_p = 2.0 * self.p;
        if (two_p - two_p.round()).abs() <= HALF_INTEGER_TOL && two_p.round() >= self.means.len() as f64 {
            Some(two_p.round() as usize)
        } else {
            None
        }
    }

    fn central_shape(&self) -> Option<f64> {
        let shape = self.p - self.means.len() as f64 / 2.0;
        (shape > (self.dim as f64 - 1.0) / 2.0).then_some(shape)
    }

    fn supports(&self, method: SampleMethod) -> bool {
        match method {
            SampleMethod::GaussianSum => self.gaussian_count().is_some(),
            SampleMethod::BartlettComposite => self.central_shape().is_some(),
        }
    }

    fn default_method(&self) -> Result<SampleMethod> {
        if self.supports(SampleMethod::GaussianSum) {
            Ok(SampleMethod::GaussianSum)
        } else if self.supports(SampleMethod::BartlettComposite) {
            Ok(SampleMethod::BartlettComposite)
        } else {
            Err(Error::UnsupportedShape(format!(
                "p = {} with rank(omega) = {} admits neither a Gaussian-sum nor a Bartlett construction",
                self.p,
                self.means.len()
            )))
        }
    }

    fn draw_batch(&self, method: SampleMethod, n: usize, seed: u64) -> SampleBatch {
        let draws = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = substream(seed, i as u64);
                PsdMatrix::trusted(self.draw(method, &mut rng))
            })
            .collect();
        SampleBatch { draws, seed, method }
    }

    fn draw(&self, method: SampleMethod, rng: &mut StreamRng) -> SymMatrix {
        let d = self.dim;
        let mut acc = Mat::zeros(d, d);
        let gaussians = match method {
            SampleMethod::GaussianSum => self.gaussian_count().unwrap_or(0),
            SampleMethod::BartlettComposite => self.means.len(),
        };
        let zero = DVector::zeros(d);
        for i in 0..gaussians {
            let mu = self.means.get(i).unwrap_or(&zero);
            let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let xi = mu + &self.cov_root * z;
            acc += &xi * xi.transpose();
        }
        if method == SampleMethod::BartlettComposite {
            let shape = self.central_shape().expect("checked by supports()");
            let a = bartlett_factor(d, 2.0 * shape, rng);
            let la = &self.cov_root * a;
            acc += &la * la.transpose();
        }
        SymMatrix::symmetrize(&acc)
    }
}

/// Lower-triangular `A` with `A_ii² ~ χ²(df − i)` and standard normal entries
/// below the diagonal, so that `AAᵀ` is standard Wishart with `df` degrees of
/// freedom (requires `df > d − 1`).
fn bartlett_factor(d: usize, df: f64, rng: &mut StreamRng) -> Mat {
    let mut a = Mat::zeros(d, d);
    for i in 0..d {
        let chi = ChiSquared::new(df - i as f64).expect("df > d - 1");
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    a
}

/// Law of `q X q` for `X ~ Γ(p, ω; σ)`: `Γ(p, qωq; qσq)`. With `σ = I` this
/// is `Γ(p, qωq; q²)`.
pub fn pushforward_scale(params: &WishartParams, q: &PsdMatrix) -> Result<WishartParams> {
    if q.dim() != params.dim() {
        return Err(Error::DimensionMismatch("q and params differ in dimension".into()));
    }
    let qm = q.as_mat();
    WishartParams::new(
        params.p,
        PsdMatrix::trusted(params.omega.sym().congruence(qm)),
        PsdMatrix::trusted(params.sigma.sym().congruence(qm)),
    )
}

/// Exponential tilt of `Γ(p, ω; I)` by `v = σ_new^{−1} − I`, which is
/// `Γ(p, σ_new ω σ_new; σ_new)`.
pub fn tilt_to_scale(params: &WishartParams, sigma_new: &PsdMatrix) -> Result<WishartParams> {
    let d = params.dim();
    if sigma_new.dim() != d {
        return Err(Error::DimensionMismatch("sigma_new and params differ in dimension".into()));
    }
    if (params.sigma.as_mat() - Mat::identity(d, d)).amax() > PARAM_MATCH_TOL {
        return Err(Error::InvalidParams("tilting is defined from unit scale sigma = I".into()));
    }
    if rank_of_values(&sigma_new.sym().spectrum().values) < d {
        return Err(Error::NotInvertible);
    }
    WishartParams::new(
        params.p,
        PsdMatrix::trusted(params.omega.sym().congruence(sigma_new.as_mat())),
        sigma_new.clone(),
    )
}

/// `Γ(p₁, ω₁; σ) ⋆ Γ(p₂, ω₂; σ) = Γ(p₁ + p₂, ω₁ + ω₂; σ)`.
pub fn convolve(a: &WishartParams, b: &WishartParams) -> Result<WishartParams> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch("convolution of laws of different dimension".into()));
    }
    let scale = a.sigma.as_mat().amax().max(1.0);
    if (a.sigma.as_mat() - b.sigma.as_mat()).amax() > PARAM_MATCH_TOL * scale {
        return Err(Error::ScaleMismatch);
    }
    WishartParams::new(
        a.p + b.p,
        PsdMatrix::trusted(a.omega.sym() + b.omega.sym()),
        a.sigma.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> PsdMatrix {
        PsdMatrix::from_diagonal(&[v]).unwrap()
    }

    #[test]
    fn laplace_scalar_value() {
        // d = 1, p = ½, σ = 2, ω = 3, u = 1 → 3^{-1/2} e^{-1}
        let params = WishartParams::new(0.5, scalar(3.0), scalar(2.0)).unwrap();
        let v = laplace(&params, &scalar(1.0));
        assert!((v - (-1.0f64).exp() / 3f64.sqrt()).abs() < 1e-15);
        assert_eq!(laplace(&params, &scalar(0.0)), 1.0);
    }

    #[test]
    fn laplace_diagonal_factorizes() {
        let sig = [2.0, 0.5, 1.3];
        let om = [1.0, 0.0, 4.0];
        let uu = [0.7, 2.0, 0.1];
        let p = 1.7;
        let params = WishartParams::new(
            p,
            PsdMatrix::from_diagonal(&om).unwrap(),
            PsdMatrix::from_diagonal(&sig).unwrap(),
        )
        .unwrap();
        let v = laplace(&params, &PsdMatrix::from_diagonal(&uu).unwrap());
        let oracle: f64 = (0..3)
            .map(|i| (1.0 + sig[i] * uu[i]).powf(-p) * (-uu[i] * om[i] / (1.0 + sig[i] * uu[i])).exp())
            .product();
        assert!((v - oracle).abs() < 1e-14 * oracle);
    }

    #[test]
    fn mean_examples() {
        let zero = WishartParams::new(3.0, PsdMatrix::zeros(2), PsdMatrix::zeros(2)).unwrap();
        assert_eq!(mean(&zero).as_mat().amax(), 0.0);
        // noncentral chi-square with k = 3, λ = 2: mean 5
        let chi = WishartParams::new(1.5, scalar(2.0), scalar(2.0)).unwrap();
        assert_eq!(mean(&chi).as_mat()[(0, 0)], 5.0);
        let p = WishartParams::new(
            1.0,
            PsdMatrix::from_diagonal(&[1.0, 0.0]).unwrap(),
            PsdMatrix::from_diagonal(&[2.0, 2.0]).unwrap(),
        )
        .unwrap();
        assert_eq!(mean(&p), SymMatrix::from_diagonal(&[3.0, 2.0]));
    }

    #[test]
    fn degenerate_scale_returns_omega() {
        let v = DVector::from_vec(vec![1.0, 2.0]);
        let omega = PsdMatrix::new(SymMatrix::outer(&v)).unwrap();
        let params = WishartParams::new(1.0, omega.clone(), PsdMatrix::zeros(2)).unwrap();
        let batch = sample(&params, 5, 1).unwrap();
        assert_eq!(batch.method, SampleMethod::GaussianSum);
        for x in &batch.draws {
            assert!((x.as_mat() - omega.as_mat()).amax() < 1e-14);
        }
    }

    #[test]
    fn scalar_half_shape_draws_are_squared_normals() {
        let params = WishartParams::new(0.5, scalar(0.0), scalar(2.0)).unwrap();
        let batch = sample(&params, 4, 9).unwrap();
        // same stream, one standard normal per draw
        for (i, x) in batch.draws.iter().enumerate() {
            let z: f64 = substream(9, i as u64).sample(StandardNormal);
            assert!((x.as_mat()[(0, 0)] - z * z).abs() < 1e-15);
        }
    }

    #[test]
    fn batches_are_reproducible() {
        let params = WishartParams::new(1.7, PsdMatrix::identity(2), PsdMatrix::identity(2)).unwrap();
        let a = sample(&params, 20, 5).unwrap();
        let b = sample(&params, 20, 5).unwrap();
        assert_eq!(a.method, SampleMethod::BartlettComposite);
        assert_eq!(a.draws, b.draws);
    }

    #[test]
    fn sampler_error_paths() {
        // p ∉ Λ_3
        let bad = WishartParams::new(0.75, PsdMatrix::zeros(3), PsdMatrix::identity(3)).unwrap();
        assert!(matches!(sample(&bad, 1, 0), Err(Error::InvalidParams(_))));
        // p = (d−1)/2 = 1 with full-rank ω: valid law, no constructive sampler
        let hard = WishartParams::new(1.0, PsdMatrix::identity(3), PsdMatrix::identity(3)).unwrap();
        assert!(matches!(sample(&hard, 1, 0), Err(Error::UnsupportedShape(_))));
        let ok = WishartParams::new(1.0, PsdMatrix::zeros(3), PsdMatrix::identity(3)).unwrap();
        assert!(matches!(
            sample_with_method(&ok, 1, 0, SampleMethod::BartlettComposite),
            Err(Error::UnsupportedShape(_))
        ));
    }

    #[test]
    fn algebra_examples() {
        let base = WishartParams::new(0.8, scalar(1.0), scalar(1.0)).unwrap();
        let pushed = pushforward_scale(&base, &scalar(2f64.sqrt())).unwrap();
        assert!((pushed.omega.as_mat()[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((pushed.sigma.as_mat()[(0, 0)] - 2.0).abs() < 1e-15);
        assert_eq!(pushforward_scale(&base, &scalar(1.0)).unwrap(), base);

        let tilted = tilt_to_scale(&base, &scalar(2.0)).unwrap();
        assert_eq!(tilted.omega.as_mat()[(0, 0)], 4.0);
        assert_eq!(tilted.sigma.as_mat()[(0, 0)], 2.0);
        assert_eq!(tilt_to_scale(&base, &scalar(1.0)).unwrap(), base);
        assert_eq!(tilt_to_scale(&base, &scalar(0.0)).unwrap_err(), Error::NotInvertible);

        let unit = WishartParams::new(0.0, scalar(0.0), scalar(1.0)).unwrap();
        assert_eq!(convolve(&base, &unit).unwrap(), base);
        let other = WishartParams::new(0.8, scalar(1.0), scalar(3.0)).unwrap();
        assert_eq!(convolve(&base, &other).unwrap_err(), Error::ScaleMismatch);
    }

    #[test]
    fn scalar_convolution_adds_shapes_and_noncentralities() {
        let a = WishartParams::new(0.5, scalar(1.5), scalar(2.0)).unwrap();
        let b = WishartParams::new(1.0, scalar(0.5), scalar(2.0)).unwrap();
        let c = convolve(&a, &b).unwrap();
        assert_eq!((c.p, c.omega.as_mat()[(0, 0)]), (1.5, 2.0));
        for u in [0.1, 0.5, 2.0] {
            let u = scalar(u);
            let prod = laplace(&a, &u) * laplace(&b, &u);
            assert!((laplace(&c, &u) - prod).abs() < 1e-15);
        }
    }

    #[test]
    fn general_domain_rejects_far_negative_u() {
        let params = WishartParams::new(1.0, scalar(0.0), scalar(1.0)).unwrap();
        assert!(laplace_general(&params, &SymMatrix::from_diagonal(&[-0.5])).is_ok());
        assert!(laplace_general(&params, &SymMatrix::from_diagonal(&[-1.5])).is_err());
    }
}
