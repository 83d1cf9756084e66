//! Integer partitions, the multivariate gamma function and generalized
//! hypergeometric coefficients.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, ln_gamma};

use crate::error::{Error, Result};

/// Non-increasing list of positive parts. Trailing zeros are dropped on
/// construction, so `(2, 1, 0)` and `(2, 1)` are the same partition.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct Partition(Vec<usize>);

impl Partition {
    pub fn new(mut parts: Vec<usize>) -> Result<Self> {
        while parts.last() == Some(&0) {
            parts.pop();
        }
        if parts.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::InvalidParams(format!("partition parts must be non-increasing: {parts:?}")));
        }
        Ok(Partition(parts))
    }

    pub fn empty() -> Self {
        Partition(Vec::new())
    }

    pub fn parts(&self) -> &[usize] {
        &self.0
    }

    /// Part `i` (0-based), zero past the end.
    pub fn part(&self, i: usize) -> usize {
        self.0.get(i).copied().unwrap_or(0)
    }

    /// Number of nonzero parts.
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weight(&self) -> usize {
        self.0.iter().sum()
    }

    /// Column lengths `κ'_j` for `j = 1..κ₁`.
    pub fn conjugate(&self) -> Vec<usize> {
        let width = self.part(0);
        (0..width).map(|j| self.0.iter().take_while(|&&k| k > j).count()).collect()
    }
}

impl TryFrom<Vec<usize>> for Partition {
    type Error = Error;
    fn try_from(parts: Vec<usize>) -> Result<Self> {
        Partition::new(parts)
    }
}

impl From<Partition> for Vec<usize> {
    fn from(p: Partition) -> Self {
        p.0
    }
}

/// All partitions of `weight` with at most `max_len` parts, in reverse
/// lexicographic order.
pub fn partitions_of(weight: usize, max_len: usize) -> Vec<Partition> {
    let mut out = Vec::new();
    let mut current = Vec::new();
    fill(weight, weight, max_len, &mut current, &mut out);
    out
}

fn fill(rest: usize, cap: usize, slots: usize, current: &mut Vec<usize>, out: &mut Vec<Partition>) {
    if rest == 0 {
        out.push(Partition(current.clone()));
        return;
    }
    if slots == 0 {
        return;
    }
    for k in (1..=rest.min(cap)).rev() {
        current.push(k);
        fill(rest - k, k, slots - 1, current, out);
        current.pop();
    }
}

fn check_mv_gamma_args(d: usize, a: f64) -> Result<()> {
    for j in 0..d {
        let arg = a - j as f64 / 2.0;
        if !(arg > 0.0) {
            return Err(Error::PoleError { arg });
        }
    }
    Ok(())
}

/// `ln Γ_d(a) = d(d−1)/4 · ln π + Σ_{j<d} ln Γ(a − j/2)`.
pub fn ln_mv_gamma(d: usize, a: f64) -> Result<f64> {
    check_mv_gamma_args(d, a)?;
    let df = d as f64;
    let head = df * (df - 1.0) / 4.0 * std::f64::consts::PI.ln();
    Ok(head + (0..d).map(|j| ln_gamma(a - j as f64 / 2.0)).sum::<f64>())
}

/// Multivariate gamma `Γ_d(a)`, finite for `a > (d−1)/2`.
pub fn mv_gamma(d: usize, a: f64) -> Result<f64> {
    check_mv_gamma_args(d, a)?;
    let df = d as f64;
    let head = std::f64::consts::PI.powf(df * (df - 1.0) / 4.0);
    Ok(head * (0..d).map(|j| gamma(a - j as f64 / 2.0)).product::<f64>())
}

/// `(a)_κ = Π_i (a − (i−1)/2)_{κ_i}` with ordinary rising factorials.
pub fn pochhammer_partition(a: f64, kappa: &Partition) -> f64 {
    kappa
        .parts()
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let base = a - i as f64 / 2.0;
            (0..k).map(|s| base + s as f64).product::<f64>()
        })
        .product()
}

/// `ln (a)_κ` when every factor is positive, i.e. `a > (len(κ) − 1)/2`.
pub(crate) fn ln_pochhammer_partition(a: f64, kappa: &Partition) -> f64 {
    kappa
        .parts()
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let base = a - i as f64 / 2.0;
            ln_gamma(base + k as f64) - ln_gamma(base)
        })
        .sum()
}
