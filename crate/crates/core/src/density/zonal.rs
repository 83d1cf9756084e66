//! Zonal polynomials `C_κ` from eigenvalues.
//!
//! The Jack polynomial `J_κ` (parameter 2) satisfies the branching rule
//!
//! `J_κ(x₁..xₙ) = Σ_μ J_μ(x₁..xₙ₋₁) · xₙ^{|κ|−|μ|} · β_κμ`
//!
//! over partitions `μ` with `κ/μ` a horizontal strip. Rescaling by
//! `C_κ = 2^k k! / j_κ · J_κ` turns it into the same rule for `C_κ` with
//! coefficients `γ_κμ = β_κμ c_κ / c_μ`. Tables of `γ` are built once per
//! (number of variables, max weight) and shared through a global cache.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use statrs::function::gamma::ln_gamma;

use super::partition::{partitions_of, Partition};
use crate::error::{Error, Result};
use crate::symcone::SymMatrix;

/// Largest weight accepted by [`zonal`].
pub const DEFAULT_MAX_WEIGHT: usize = 30;

const JACK_ALPHA: f64 = 2.0;

/// Branching coefficients for all partitions with at most `vars` parts and
/// weight at most `max_weight`.
#[derive(Debug)]
pub struct ZonalTable {
    vars: usize,
    max_weight: usize,
    partitions: Vec<Partition>,
    index: HashMap<Partition, usize>,
    /// `(index of μ, weight gap, γ_κμ)` for each κ.
    preds: Vec<Vec<(usize, usize, f64)>>,
}

/// Per-partition log hook data.
struct Hooks {
    conj: Vec<usize>,
    /// Column sums of `ln h^*(i,j) = ln(ν'_j − i + α(ν_i − j + 1))`.
    upper: Vec<f64>,
    /// Column sums of `ln h_*(i,j) = ln(ν'_j − i + 1 + α(ν_i − j))`.
    lower: Vec<f64>,
    /// `ln j_ν = Σ ln h^* + ln h_*`.
    ln_j: f64,
}

impl Hooks {
    fn of(nu: &Partition) -> Self {
        let conj = nu.conjugate();
        let mut upper = vec![0.0; conj.len()];
        let mut lower = vec![0.0; conj.len()];
        for (j, &col) in conj.iter().enumerate() {
            for i in 0..col {
                let arm = (nu.part(i) - j) as f64;
                let leg = (col - i) as f64;
                upper[j] += (leg - 1.0 + JACK_ALPHA * arm).ln();
                lower[j] += (leg + JACK_ALPHA * (arm - 1.0)).ln();
            }
        }
        let ln_j = upper.iter().chain(&lower).sum();
        Hooks { conj, upper, lower, ln_j }
    }
}

impl ZonalTable {
    pub fn build(vars: usize, max_weight: usize) -> Self {
        let partitions: Vec<Partition> = (0..=max_weight).flat_map(|m| partitions_of(m, vars)).collect();
        let index: HashMap<Partition, usize> =
            partitions.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        let hooks: Vec<Hooks> = partitions.iter().map(Hooks::of).collect();
        let ln_fact: Vec<f64> = (0..=max_weight).map(|m| ln_gamma(m as f64 + 1.0)).collect();

        let mut preds = Vec::with_capacity(partitions.len());
        for (ki, kappa) in partitions.iter().enumerate() {
            let hk = &hooks[ki];
            let k = kappa.weight();
            let mut list = Vec::new();
            for mu in strips_below(kappa) {
                let mi = index[&mu];
                let hm = &hooks[mi];
                let m = mu.weight();
                let col = |j: usize| hm.conj.get(j).copied().unwrap_or(0);
                let mut ln_beta = 0.0;
                for j in 0..hk.conj.len() {
                    ln_beta += if hk.conj[j] == col(j) { hk.upper[j] } else { hk.lower[j] };
                }
                for j in 0..hm.conj.len() {
                    ln_beta -= if hk.conj[j] == hm.conj[j] { hm.upper[j] } else { hm.lower[j] };
                }
                let ln_gamma_km = ln_beta + (k - m) as f64 * JACK_ALPHA.ln() + ln_fact[k] - ln_fact[m]
                    - hk.ln_j
                    + hm.ln_j;
                list.push((mi, k - m, ln_gamma_km.exp()));
            }
            preds.push(list);
        }
        ZonalTable { vars, max_weight, partitions, index, preds }
    }

    pub fn vars(&self) -> usize {
        self.vars
    }

    pub fn max_weight(&self) -> usize {
        self.max_weight
    }

    /// Partitions in order of non-decreasing weight.
    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn index_of(&self, kappa: &Partition) -> Option<usize> {
        self.index.get(kappa).copied()
    }

    /// `C_κ(x)` for every partition in the table, aligned with
    /// [`partitions`](Self::partitions). Requires `x.len() <= vars`.
    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        assert!(x.len() <= self.vars, "more variables than the table supports");
        let n = self.partitions.len();
        let mut prev = vec![0.0; n];
        prev[0] = 1.0;
        for (layer, &xv) in x.iter().enumerate() {
            let mut powers = Vec::with_capacity(self.max_weight + 1);
            let mut acc = 1.0;
            for _ in 0..=self.max_weight {
                powers.push(acc);
                acc *= xv;
            }
            let mut cur = vec![0.0; n];
            for (ki, kappa) in self.partitions.iter().enumerate() {
                if kappa.len() > layer + 1 {
                    continue;
                }
                cur[ki] = self.preds[ki].iter().map(|&(mi, gap, g)| prev[mi] * powers[gap] * g).sum();
            }
            prev = cur;
        }
        prev
    }
}

/// Partitions `μ ⊆ κ` with `κ/μ` a horizontal strip, i.e. interlacing
/// `κ_{i+1} ≤ μ_i ≤ κ_i`.
fn strips_below(kappa: &Partition) -> Vec<Partition> {
    let len = kappa.len();
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(len);
    fn rec(kappa: &Partition, i: usize, len: usize, current: &mut Vec<usize>, out: &mut Vec<Partition>) {
        if i == len {
            out.push(Partition::new(current.clone()).expect("interlacing parts are non-increasing"));
            return;
        }
        for v in kappa.part(i + 1)..=kappa.part(i) {
            current.push(v);
            rec(kappa, i + 1, len, current, out);
            current.pop();
        }
    }
    rec(kappa, 0, len, &mut current, &mut out);
    out
}

type TableCache = Mutex<HashMap<usize, Arc<ZonalTable>>>;

/// Shared table with at least `max_weight` for `vars` variables.
pub fn table(vars: usize, max_weight: usize) -> Arc<ZonalTable> {
    static CACHE: OnceLock<TableCache> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().unwrap_or_else(|e| e.into_inner());
    if let Some(t) = guard.get(&vars) {
        if t.max_weight >= max_weight {
            return Arc::clone(t);
        }
    }
    let built = Arc::new(ZonalTable::build(vars, max_weight));
    guard.insert(vars, Arc::clone(&built));
    built
}

/// `C_κ(ξ)` with the default weight limit.
pub fn zonal(kappa: &Partition, xi: &SymMatrix) -> Result<f64> {
    zonal_with_limit(kappa, xi, DEFAULT_MAX_WEIGHT)
}

/// `C_κ(ξ)`, normalized so that `Σ_{|κ|=k} C_κ(ξ) = (tr ξ)^k`.
pub fn zonal_with_limit(kappa: &Partition, xi: &SymMatrix, max_weight: usize) -> Result<f64> {
    let k = kappa.weight();
    if k > max_weight {
        return Err(Error::WeightOverflow { weight: k, max: max_weight });
    }
    let d = xi.dim();
    if kappa.len() > d {
        return Ok(0.0);
    }
    let spec = xi.spectrum();
    let scale = spec.max_abs();
    if scale == 0.0 {
        return Ok(if k == 0 { 1.0 } else { 0.0 });
    }
    let x: Vec<f64> = spec.values.iter().map(|v| v / scale).collect();
    let t = table(d, k);
    let idx = t.index_of(kappa).expect("partition fits the table");
    Ok(scale.powi(k as i32) * t.evaluate(&x)[idx])
}
