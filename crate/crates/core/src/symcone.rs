//! Dense symmetric and positive semidefinite matrices.
//!
//! Everything downstream (flows, samplers, densities, path simulation) works
//! on [`SymMatrix`] values whose storage is exactly symmetric, and on
//! [`PsdMatrix`] values that passed an eigenvalue check at construction.
//! Eigendecompositions always symmetrize their input as `(A + Aᵀ)/2` first.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Plain dense `d × d` matrix (used for β, Q and intermediate products).
pub type Mat = DMatrix<f64>;

/// Default PSD validation floor, relative to `1 + |λ|_max`.
pub const DEFAULT_EIG_FLOOR: f64 = 1e-10;
/// Relative threshold for numerical rank: eigenvalues `> RANK_REL_TOL · λ_max` count.
pub const RANK_REL_TOL: f64 = 1e-10;
/// Absolute rank floor used when the spectrum is identically zero.
pub const RANK_ABS_FLOOR: f64 = 1e-300;
/// Symmetry tolerance applied when reading matrices from JSON.
pub const READ_SYMMETRY_TOL: f64 = 1e-12;

/// Symmetric `d × d` matrix with exactly symmetric storage.
#[derive(Clone, PartialEq)]
pub struct SymMatrix(Mat);

impl SymMatrix {
    /// Wraps `m` after checking it is square, finite and symmetric to
    /// `READ_SYMMETRY_TOL` (scaled by the largest entry); the result is
    /// exactly symmetrized.
    pub fn new(m: Mat) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "expected a square matrix, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 {
            return Err(Error::DimensionMismatch("dimension must be >= 1".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        let scale = m.amax().max(1.0);
        let asymmetry = (&m - m.transpose()).amax();
        if asymmetry > READ_SYMMETRY_TOL * scale {
            return Err(Error::NotSymmetric { asymmetry });
        }
        Ok(Self::symmetrize(&m))
    }

    /// `(m + mᵀ)/2` without any tolerance check.
    pub fn symmetrize(m: &Mat) -> Self {
        debug_assert!(m.is_square());
        let d = m.nrows();
        let mut out = Mat::zeros(d, d);
        for i in 0..d {
            out[(i, i)] = m[(i, i)];
            for j in 0..i {
                let v = 0.5 * (m[(i, j)] + m[(j, i)]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
        SymMatrix(out)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(mat_from_rows(rows)?)
    }

    pub fn identity(d: usize) -> Self {
        SymMatrix(Mat::identity(d, d))
    }

    pub fn zeros(d: usize) -> Self {
        SymMatrix(Mat::zeros(d, d))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        SymMatrix(Mat::from_diagonal(&DVector::from_column_slice(diag)))
    }

    /// Rank-one matrix `v vᵀ`.
    pub fn outer(v: &DVector<f64>) -> Self {
        Self::symmetrize(&(v * v.transpose()))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_mat(&self) -> &Mat {
        &self.0
    }

    pub fn into_mat(self) -> Mat {
        self.0
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    /// `tr(self · other)` for a general matrix `other`.
    pub fn trace_product(&self, other: &Mat) -> f64 {
        self.0.component_mul(&other.transpose()).sum()
    }

    pub fn scale(&self, c: f64) -> Self {
        SymMatrix(&self.0 * c)
    }

    /// `q · self · qᵀ`, symmetrized.
    pub fn congruence(&self, q: &Mat) -> Self {
        Self::symmetrize(&(q * &self.0 * q.transpose()))
    }

    /// Spectral decomposition with eigenvalues sorted ascending.
    pub fn spectrum(&self) -> Spectrum {
        Spectrum::of(&self.0)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.spectrum().min()
    }

    /// Row-major upper triangle `(0,0), (0,1), …, (d-1,d-1)`.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let d = self.dim();
        let mut out = Vec::with_capacity(d * (d + 1) / 2);
        for i in 0..d {
            for j in i..d {
                out.push(self.0[(i, j)]);
            }
        }
        out
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        mat_to_rows(&self.0)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }
}

impl fmt::Debug for SymMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SymMatrix{:?}", self.to_rows())
    }
}

impl Add for &SymMatrix {
    type Output = SymMatrix;
    fn add(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 + &rhs.0)
    }
}

impl Sub for &SymMatrix {
    type Output = SymMatrix;
    fn sub(self, rhs: &SymMatrix) -> SymMatrix {
        SymMatrix(&self.0 - &rhs.0)
    }
}

impl Mul<f64> for &SymMatrix {
    type Output = SymMatrix;
    fn mul(self, rhs: f64) -> SymMatrix {
        self.scale(rhs)
    }
}

impl Serialize for SymMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for SymMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        SymMatrix::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Eigenvalues (ascending) and matching orthonormal eigenvectors.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: Mat,
}

impl Spectrum {
    /// Decomposes the symmetric part of `m`.
    pub fn of(m: &Mat) -> Self {
        let sym = SymMatrix::symmetrize(m);
        let eig = SymmetricEigen::new(sym.0);
        let d = eig.eigenvalues.len();
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = Mat::from_fn(d, d, |i, j| eig.eigenvectors[(i, order[j])]);
        Spectrum { values, vectors }
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        *self.values.last().unwrap()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// `V · diag(f(λ)) · Vᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let d = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &lambda) in self.values.iter().enumerate() {
            let w = f(lambda);
            for i in 0..d {
                scaled[(i, j)] *= w;
            }
        }
        SymMatrix::symmetrize(&(scaled * self.vectors.transpose()))
    }

    /// Numerical rank under the relative threshold rule.
    pub fn rank(&self) -> usize {
        rank_of_values(&self.values)
    }
}

pub(crate) fn rank_of_values(values: &[f64]) -> usize {
    let top = values.iter().fold(0.0_f64, |m, v| m.max(*v));
    let threshold = if top > 0.0 {
        (RANK_REL_TOL * top).max(RANK_ABS_FLOOR)
    } else {
        RANK_ABS_FLOOR
    };
    values.iter().filter(|&&v| v > threshold).count()
}

/// Element of the closed PSD cone, validated against `eig_floor`.
#[derive(Clone, PartialEq)]
pub struct PsdMatrix {
    base: SymMatrix,
    eig_floor: f64,
}

impl PsdMatrix {
    pub fn new(base: SymMatrix) -> Result<Self> {
        Self::with_floor(base, DEFAULT_EIG_FLOOR)
    }

    /// Accepts `base` when `λ_min ≥ −eig_floor · (1 + |λ|_max)`.
    pub fn with_floor(base: SymMatrix, eig_floor: f64) -> Result<Self> {
        let spec = base.spectrum();
        let min_eig = spec.min();
        if min_eig < -eig_floor * (1.0 + spec.max_abs()) {
            return Err(Error::NotPsd { min_eig });
        }
        Ok(PsdMatrix { base, eig_floor })
    }

    /// Wraps a matrix that is PSD by construction (congruences, Gram matrices).
    pub(crate) fn trusted(base: SymMatrix) -> Self {
        PsdMatrix {
            base,
            eig_floor: DEFAULT_EIG_FLOOR,
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(SymMatrix::from_rows(rows)?)
    }

    pub fn identity(d: usize) -> Self {
        Self::trusted(SymMatrix::identity(d))
    }

    pub fn zeros(d: usize) -> Self {
        Self::trusted(SymMatrix::zeros(d))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(SymMatrix::from_diagonal(diag))
    }

    pub fn sym(&self) -> &SymMatrix {
        &self.base
    }

    pub fn as_mat(&self) -> &Mat {
        self.base.as_mat()
    }

    pub fn into_sym(self) -> SymMatrix {
        self.base
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn eig_floor(&self) -> f64 {
        self.eig_floor
    }

    pub fn scale(&self, c: f64) -> Result<Self> {
        Self::new(self.base.scale(c))
    }

    /// Full numerical rank under the relative threshold rule.
    pub fn is_positive_definite(&self) -> bool {
        rank_tol(self) == self.dim()
    }
}

impl fmt::Debug for PsdMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PsdMatrix{:?}", self.base.to_rows())
    }
}

impl Serialize for PsdMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.base.serialize(s)
    }
}

impl<'de> Deserialize<'de> for PsdMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let base = SymMatrix::deserialize(d)?;
        PsdMatrix::new(base).map_err(serde::de::Error::custom)
    }
}

/// Unique PSD square root; eigenvalues below zero are clamped first.
pub fn sqrt_psd(a: &PsdMatrix) -> PsdMatrix {
    PsdMatrix::trusted(a.sym().spectrum().map(|l| l.max(0.0).sqrt()))
}

/// Nearest PSD matrix in Frobenius norm, plus the pre-projection `λ_min`.
pub fn psd_project(a: &SymMatrix) -> (PsdMatrix, f64) {
    let spec = a.spectrum();
    let min_eig = spec.min();
    if min_eig >= 0.0 {
        return (PsdMatrix::trusted(a.clone()), min_eig);
    }
    (PsdMatrix::trusted(spec.map(|l| l.max(0.0))), min_eig)
}

/// One eigendecomposition giving the projection, its square root and `λ_min`.
pub(crate) fn project_with_root(a: &SymMatrix) -> (SymMatrix, SymMatrix, f64) {
    let spec = a.spectrum();
    let min_eig = spec.min();
    let projected = if min_eig >= 0.0 {
        a.clone()
    } else {
        spec.map(|l| l.max(0.0))
    };
    let root = spec.map(|l| l.max(0.0).sqrt());
    (projected, root, min_eig)
}

/// Count of eigenvalues above `1e-10 · λ_max` (and above `1e-300`).
pub fn rank_tol(a: &PsdMatrix) -> usize {
    a.sym().spectrum().rank()
}

/// Exponential of a symmetric matrix through its eigendecomposition.
pub fn exp_symmetric(s: &SymMatrix) -> SymMatrix {
    s.spectrum().map(f64::exp)
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
// Backward-error bounds for degrees 3, 5, 7, 9, 13 in the 1-norm.
const THETA: [f64; 5] = [
    1.495585217958292e-2,
    2.539398330063230e-1,
    9.504178996162932e-1,
    2.097847961257068,
    5.371920351148152,
];

/// Matrix exponential by scaling and squaring with diagonal Padé approximants.
pub fn matrix_exp(m: &Mat) -> Result<Mat> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch("matrix_exp needs a square matrix".into()));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite);
    }
    let d = m.nrows();
    let ident = Mat::identity(d, d);
    let norm = one_norm(m);
    if norm == 0.0 {
        return Ok(ident);
    }

    let a2 = m * m;
    for (k, coeffs) in [&PADE3[..], &PADE5[..], &PADE7[..], &PADE9[..]]
        .iter()
        .enumerate()
    {
        if norm <= THETA[k] {
            let mut pow = ident.clone();
            let mut u = Mat::zeros(d, d);
            let mut v = Mat::zeros(d, d);
            for (i, pair) in coeffs.chunks(2).enumerate() {
                if i > 0 {
                    pow = &pow * &a2;
                }
                v += &pow * pair[0];
                u += &pow * pair[1];
            }
            let u = m * u;
            return pade_solve(&u, &v);
        }
    }

    let s = ((norm / THETA[4]).log2().ceil()).max(0.0) as i32;
    let scale = 0.5_f64.powi(s);
    let a = m * scale;
    let a2 = a2 * (scale * scale);
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let b = &PADE13;
    let inner_u = &a6 * b[13] + &a4 * b[11] + &a2 * b[9];
    let u = &a * (&a6 * inner_u + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let inner_v = &a6 * b[12] + &a4 * b[10] + &a2 * b[8];
    let v = &a6 * inner_v + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    let mut r = pade_solve(&u, &v)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

fn pade_solve(u: &Mat, v: &Mat) -> Result<Mat> {
    let p = v + u;
    let q = v - u;
    q.lu().solve(&p).ok_or(Error::NonFinite)
}

fn one_norm(m: &Mat) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub(crate) fn mat_from_rows(rows: &[Vec<f64>]) -> Result<Mat> {
    let n = rows.len();
    if n == 0 {
        return Err(Error::DimensionMismatch("empty matrix".into()));
    }
    let m = rows[0].len();
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::DimensionMismatch("ragged rows".into()));
    }
    Ok(Mat::from_fn(n, m, |i, j| rows[i][j]))
}

pub(crate) fn mat_to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

/// Serde adapter: general matrices as row-major arrays of arrays.
pub mod mat_serde {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Mat, s: S) -> std::result::Result<S::Ok, S::Error> {
        mat_to_rows(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Mat, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let m = mat_from_rows(&rows).map_err(serde::de::Error::custom)?;
        if m.iter().any(|v| !v.is_finite()) {
            return Err(serde::de::Error::custom(Error::NonFinite));
        }
        Ok(m)
    }
}
