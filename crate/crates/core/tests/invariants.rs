//! Property tests for structural identities of the kernels.

use nalgebra::{DVector, QR};
use proptest::prelude::*;

use wishartlab::affine_flow::{flow_pair, sigma_flow_quadrature, sigma_flow_van_loan};
use wishartlab::density::{density, partitions_of, pochhammer_partition, zonal};
use wishartlab::symcone::{matrix_exp, psd_project};
use wishartlab::validity::{classify_wishart, kalman_equiv_probe};
use wishartlab::wishart_dist::{convolve, laplace, laplace_general, pushforward_scale, tilt_to_scale};
use wishartlab::{Mat, ProcessParams, PsdMatrix, SymMatrix, WishartParams};

fn mat(d: usize, entries: &[f64]) -> Mat {
    Mat::from_iterator(d, d, entries.iter().copied().take(d * d))
}

fn gram(d: usize, cols: usize, entries: &[f64]) -> PsdMatrix {
    let g = Mat::from_iterator(d, cols, entries.iter().copied().take(d * cols));
    PsdMatrix::new(SymMatrix::symmetrize(&(&g * g.transpose()))).unwrap()
}

fn pd(d: usize, entries: &[f64], floor: f64) -> PsdMatrix {
    let g = gram(d, d, entries);
    PsdMatrix::new(SymMatrix::symmetrize(&(g.as_mat() + Mat::identity(d, d) * floor))).unwrap()
}

fn orthogonal(d: usize, entries: &[f64]) -> Mat {
    QR::new(mat(d, entries) + Mat::identity(d, d) * 0.1).q()
}

fn entries(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n)
}

/// Singular value ratio of `[Qᵀ, tBQᵀ, (tB)²Qᵀ/2!, …]`. Its square tracks the
/// conditioning of the Gramian at `t`.
fn scaled_kalman_ratio(b: &Mat, q: &Mat, t: f64) -> f64 {
    let d = b.nrows();
    let mut block = q.transpose();
    let mut k = Mat::zeros(d, d * d);
    for j in 0..d {
        k.columns_mut(j * d, d).copy_from(&block);
        block = b * &block * (t / (j + 1) as f64);
    }
    let s = k.singular_values();
    let top = s.max();
    if top > 0.0 { s.min() / top } else { 0.0 }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zonal_sums_to_trace_power(d in 1usize..5, k in 0usize..8, e in entries(16)) {
        let xi = gram(d, d, &e).into_sym();
        let sum: f64 = partitions_of(k, d).iter().map(|kappa| zonal(kappa, &xi).unwrap()).sum();
        prop_assert!(close(sum, xi.trace().powi(k as i32), 1e-11));
    }

    #[test]
    fn zonal_is_orthogonally_invariant(d in 2usize..5, k in 1usize..7, e in entries(16), o in entries(16)) {
        let xi = gram(d, d, &e).into_sym();
        let q = orthogonal(d, &o);
        let rotated = xi.congruence(&q);
        for kappa in partitions_of(k, d) {
            let a = zonal(&kappa, &xi).unwrap();
            let b = zonal(&kappa, &rotated).unwrap();
            prop_assert!((a - b).abs() <= 1e-10 * xi.trace().powi(k as i32).max(1e-300));
        }
    }

    #[test]
    fn pochhammer_is_positive_above_threshold(k in 0usize..10, d in 1usize..5, a_off in 0.01f64..4.0) {
        for kappa in partitions_of(k, d) {
            let a = (kappa.len() as f64 - 1.0).max(0.0) / 2.0 + a_off;
            prop_assert!(pochhammer_partition(a, &kappa) > 0.0);
        }
    }

    #[test]
    fn classification_is_congruence_stable(
        d in 1usize..5,
        two_p in 0usize..8,
        r in 0usize..5,
        e in entries(16),
        s in entries(16),
        a in entries(16),
    ) {
        let r = r.min(d);
        let p = two_p as f64 / 2.0 + if two_p % 3 == 0 { 0.2 } else { 0.0 };
        let omega = gram(d, r, &e);
        let sigma = pd(d, &s, 0.3);
        let base = classify_wishart(&WishartParams::new(p, omega.clone(), sigma.clone()).unwrap());
        let transform = Mat::identity(d, d) + mat(d, &a) * 0.3;
        prop_assume!(transform.clone().svd(false, false).singular_values.min() > 0.2);
        let moved = WishartParams::new(
            p,
            PsdMatrix::new(omega.sym().congruence(&transform)).unwrap(),
            PsdMatrix::new(sigma.sym().congruence(&transform)).unwrap(),
        ).unwrap();
        let v = classify_wishart(&moved);
        prop_assert_eq!(base.status, v.status);
        prop_assert_eq!(base.rule, v.rule);
    }

    #[test]
    fn pushforward_matches_transform(d in 1usize..4, p in 0.5f64..3.0, e in entries(9), s in entries(9), q in entries(9), u in entries(9)) {
        let law = WishartParams::new(p.max((d as f64 - 1.0) / 2.0), gram(d, d, &e), pd(d, &s, 0.2)).unwrap();
        let q = pd(d, &q, 0.1);
        let u = gram(d, d, &u);
        let image = pushforward_scale(&law, &q).unwrap();
        let quq = PsdMatrix::new(u.sym().congruence(q.as_mat())).unwrap();
        prop_assert!(close(laplace(&image, &u), laplace(&law, &quq), 1e-10));
    }

    #[test]
    fn tilt_matches_normalized_transform(d in 1usize..4, p in 0.5f64..3.0, e in entries(9), s in entries(9), u in entries(9)) {
        let law = WishartParams::new(p.max((d as f64 - 1.0) / 2.0), gram(d, d, &e), PsdMatrix::identity(d)).unwrap();
        // eigenvalues of sigma_new in (0, 1] keep the tilt v = sigma_new^{-1} - I positive
        let raw = pd(d, &s, 0.5);
        let top = raw.sym().spectrum().max();
        let sigma_new = raw.scale(1.0 / top).unwrap();
        let v = sigma_new.as_mat().clone().try_inverse().unwrap() - Mat::identity(d, d);
        let u = gram(d, d, &u);
        let tilted = tilt_to_scale(&law, &sigma_new).unwrap();
        let shifted = SymMatrix::symmetrize(&(u.as_mat() + &v));
        let num = laplace_general(&law, &shifted).unwrap();
        let den = laplace_general(&law, &SymMatrix::symmetrize(&v)).unwrap();
        prop_assert!(close(laplace(&tilted, &u), num / den, 1e-9));
    }

    #[test]
    fn convolution_multiplies_transforms(d in 1usize..4, p1 in 0.0f64..2.0, p2 in 0.0f64..2.0, e in entries(9), f in entries(9), s in entries(9), u in entries(9)) {
        let sigma = pd(d, &s, 0.2);
        let a = WishartParams::new(p1, gram(d, d, &e), sigma.clone()).unwrap();
        let b = WishartParams::new(p2, gram(d, d, &f), sigma).unwrap();
        let u = gram(d, d, &u);
        let c = convolve(&a, &b).unwrap();
        prop_assert!(close(laplace(&c, &u), laplace(&a, &u) * laplace(&b, &u), 1e-10));
    }

    #[test]
    fn flow_pair_composes(d in 1usize..4, p in 0.0f64..3.0, b in entries(9), q in entries(9), u in entries(9), s in 0.0f64..1.5, t in 0.0f64..1.5) {
        let process = ProcessParams::new(p, mat(d, &b) * 0.5, mat(d, &q) * 0.7).unwrap();
        let u = gram(d, d, &u);
        let whole = flow_pair(&process, s + t, &u).unwrap();
        let first = flow_pair(&process, t, &u).unwrap();
        let second = flow_pair(&process, s, &first.psi).unwrap();
        let scale = 1.0 + whole.psi.sym().frobenius_norm();
        prop_assert!((whole.phi - first.phi - second.phi).abs() <= 1e-10 * (1.0 + whole.phi.abs()));
        prop_assert!((whole.psi.as_mat() - second.psi.as_mat()).amax() <= 1e-10 * scale);
    }

    #[test]
    fn sigma_routes_agree(d in 1usize..4, b in entries(9), q in entries(9), t in 0.0f64..2.0) {
        let process = ProcessParams::new(1.0, mat(d, &b) * 0.5, mat(d, &q) * 0.7).unwrap();
        let vl = sigma_flow_van_loan(&process.beta, process.alpha(), t).unwrap();
        let quad = sigma_flow_quadrature(&process.beta, process.alpha(), t).unwrap();
        let scale = vl.sym().frobenius_norm().max(1e-300);
        prop_assert!((vl.as_mat() - quad.as_mat()).norm() <= 1e-8 * scale);
    }

    #[test]
    fn kalman_sides_agree(d in 1usize..5, cols in 0usize..5, b in entries(16), q in entries(16), t in 0.05f64..2.0) {
        // Q with a chosen number of nonzero rows makes rank-deficient cases common
        let mut qm = mat(d, &q);
        for i in cols.min(d)..d {
            qm.row_mut(i).fill(0.0);
        }
        // roughly Gramian eigenvalue ratios in (1e-16, 1e-6) are not decidable in double precision
        let r = scaled_kalman_ratio(&mat(d, &b), &qm, t);
        prop_assume!(r < 1e-8 || r * r > 1e-6);
        let process = ProcessParams::new(1.0, mat(d, &b), qm).unwrap();
        let (rank_full, sigma_pd) = kalman_equiv_probe(&process, t).unwrap();
        prop_assert_eq!(rank_full, sigma_pd);
    }

    #[test]
    fn density_is_finite_and_nonnegative(d in 1usize..4, p_off in 0.05f64..3.0, e in entries(9), s in entries(9), x in entries(9)) {
        let p = (d as f64 - 1.0) / 2.0 + p_off;
        let law = WishartParams::new(p, gram(d, d, &e).scale(0.5).unwrap(), pd(d, &s, 0.3)).unwrap();
        let xi = pd(d, &x, 0.05);
        let r = density(&law, &xi, 120, 1e-12).unwrap();
        prop_assert!(r.value.is_finite() && r.value >= 0.0);
    }

    #[test]
    fn projection_is_idempotent(d in 1usize..5, e in entries(16)) {
        let a = SymMatrix::symmetrize(&mat(d, &e));
        let (once, _) = psd_project(&a);
        let (twice, min_eig) = psd_project(once.sym());
        prop_assert!(min_eig >= -1e-14 * a.frobenius_norm().max(1.0));
        prop_assert!((once.as_mat() - twice.as_mat()).amax() <= 1e-14 * a.frobenius_norm().max(1.0));
    }

    #[test]
    fn matrix_exp_inverts(d in 1usize..5, e in entries(16), scale in 0.0f64..4.0) {
        let m = mat(d, &e) * scale;
        let prod = matrix_exp(&m).unwrap() * matrix_exp(&(-&m)).unwrap();
        prop_assert!((prod - Mat::identity(d, d)).amax() <= 1e-11 * (2.0 * scale * d as f64).exp());
    }

    #[test]
    fn rank_one_outer_has_rank_one(v in prop::collection::vec(0.1f64..1.0, 3)) {
        let x = PsdMatrix::new(SymMatrix::outer(&DVector::from_vec(v))).unwrap();
        prop_assert_eq!(x.sym().spectrum().rank(), 1);
    }
}
