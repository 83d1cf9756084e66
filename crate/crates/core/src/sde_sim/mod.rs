//! Path simulation for Wishart processes and the diagnostics built on it.
//!
//! Two schemes fill a [`PathEnsemble`]: an Euler scheme for the matrix SDE
//! and exact sums of squared Ornstein–Uhlenbeck vectors when `2p` is an
//! integer. Each path draws from its own keyed random stream.

mod diagnostics;
mod euler;
mod girsanov;
mod ou;

pub use diagnostics::{hitting_stats, logdet_diagnostics, HittingStats, LogDetDiagnostics};
pub use euler::{simulate_euler, simulate_euler_with};
pub use girsanov::{girsanov_weights, GirsanovReport, ReweightedLaplace};
pub use ou::{simulate_ou_squares, simulate_ou_squares_with};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ProcessParams;
use crate::symcone::{PsdMatrix, SymMatrix};

/// Strictly increasing simulation times starting at zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct TimeGrid(Vec<f64>);

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.first() != Some(&0.0) {
            return Err(Error::GridError("grid must start at t = 0".into()));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::GridError("grid times must be finite".into()));
        }
        if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::GridError(format!("grid is not strictly increasing at index {}", i + 1)));
        }
        Ok(TimeGrid(times))
    }

    /// `[0, T]` cut into `ceil(T/dt)` equal steps.
    pub fn uniform(t_end: f64, dt: f64) -> Result<Self> {
        if !(t_end > 0.0 && dt > 0.0 && t_end.is_finite() && dt.is_finite()) {
            return Err(Error::GridError(format!("need T > 0 and dt > 0, got T = {t_end}, dt = {dt}")));
        }
        let steps = ((t_end / dt) - 1e-9).ceil().max(1.0) as usize;
        let times = (0..=steps).map(|i| t_end * i as f64 / steps as f64).collect();
        TimeGrid::new(times)
    }

    pub fn times(&self) -> &[f64] {
        &self.0
    }

    /// Number of steps `M` (one less than the number of times).
    pub fn steps(&self) -> usize {
        self.0.len() - 1
    }

    pub fn end(&self) -> f64 {
        *self.0.last().expect("grid is nonempty")
    }

    pub fn dt(&self, step: usize) -> f64 {
        self.0[step + 1] - self.0[step]
    }
}

impl TryFrom<Vec<f64>> for TimeGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        TimeGrid::new(v)
    }
}

impl From<TimeGrid> for Vec<f64> {
    fn from(g: TimeGrid) -> Self {
        g.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    Euler,
    OuSquares,
}

/// Which grid states are kept in memory. Hitting information is tracked at
/// every step regardless.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Storage {
    Full,
    Endpoint,
    /// Every `k`-th grid state plus the endpoint.
    Every(usize),
}

impl Storage {
    fn indices(self, steps: usize) -> Vec<usize> {
        match self {
            Storage::Full => (0..=steps).collect(),
            Storage::Endpoint => vec![steps],
            Storage::Every(k) => {
                let k = k.max(1);
                let mut v: Vec<usize> = (0..=steps).step_by(k).collect();
                if v.last() != Some(&steps) {
                    v.push(steps);
                }
                v
            }
        }
    }
}

/// Simulated paths of one process from one starting point.
#[derive(Clone, Debug)]
pub struct PathEnsemble {
    pub process: ProcessParams,
    pub grid: TimeGrid,
    pub x0: PsdMatrix,
    pub seed: u64,
    pub scheme: Scheme,
    /// Grid indices of the stored states.
    pub stored_steps: Vec<usize>,
    /// `paths[i][j]` is the state of path `i` at grid index `stored_steps[j]`.
    pub paths: Vec<Vec<SymMatrix>>,
    /// Minimum eigenvalue before projection, aligned with `paths`.
    pub pre_projection_min_eig: Vec<Vec<f64>>,
    /// Per path, `(grid index, value)` each time the pre-projection minimum
    /// eigenvalue reached a new running low. Starts with grid index 0.
    pub record_lows: Vec<Vec<(usize, f64)>>,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    /// Final states of all paths.
    pub fn endpoints(&self) -> Vec<PsdMatrix> {
        self.paths
            .iter()
            .map(|p| PsdMatrix::trusted(p.last().expect("endpoint is always stored").clone()))
            .collect()
    }

    /// Stored times, aligned with each path's states.
    pub fn stored_times(&self) -> Vec<f64> {
        self.stored_steps.iter().map(|&i| self.grid.times()[i]).collect()
    }
}

/// Per-path output of a scheme, before assembly into an ensemble.
pub(crate) struct PathRecord {
    pub states: Vec<SymMatrix>,
    pub min_eigs: Vec<f64>,
    pub lows: Vec<(usize, f64)>,
}

impl PathRecord {
    pub(crate) fn new(capacity: usize) -> Self {
        PathRecord { states: Vec::with_capacity(capacity), min_eigs: Vec::with_capacity(capacity), lows: Vec::new() }
    }

    pub(crate) fn observe(&mut self, step: usize, min_eig: f64) {
        if self.lows.last().is_none_or(|&(_, low)| min_eig < low) {
            self.lows.push((step, min_eig));
        }
    }
}

pub(crate) fn assemble(
    process: &ProcessParams,
    grid: &TimeGrid,
    x0: &PsdMatrix,
    seed: u64,
    scheme: Scheme,
    stored_steps: Vec<usize>,
    records: Vec<PathRecord>,
) -> PathEnsemble {
    let mut paths = Vec::with_capacity(records.len());
    let mut mins = Vec::with_capacity(records.len());
    let mut lows = Vec::with_capacity(records.len());
    for r in records {
        paths.push(r.states);
        mins.push(r.min_eigs);
        lows.push(r.lows);
    }
    PathEnsemble {
        process: process.clone(),
        grid: grid.clone(),
        x0: x0.clone(),
        seed,
        scheme,
        stored_steps,
        paths,
        pre_projection_min_eig: mins,
        record_lows: lows,
    }
}

/// Sample mean and standard error of a Monte Carlo estimate.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub standard_error: f64,
}

impl McEstimate {
    pub fn from_values(values: &[f64]) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::EmptyBatch);
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Ok(McEstimate { estimate: mean, standard_error: se })
    }
}

/// Monte Carlo estimate of `E[exp(−tr(uX))]`.
pub fn mc_laplace(samples: &[PsdMatrix], u: &PsdMatrix) -> Result<McEstimate> {
    if let Some(s) = samples.first() {
        if s.dim() != u.dim() {
            return Err(Error::DimensionMismatch("samples and u differ in dimension".into()));
        }
    }
    let values: Vec<f64> = samples.iter().map(|x| (-x.sym().trace_product(u.as_mat())).exp()).collect();
    McEstimate::from_values(&values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_validation() {
        assert!(TimeGrid::new(vec![0.0, 0.5, 1.0]).is_ok());
        assert!(matches!(TimeGrid::new(vec![0.1, 0.5]), Err(Error::GridError(_))));
        assert!(matches!(TimeGrid::new(vec![0.0, 0.5, 0.5]), Err(Error::GridError(_))));
        assert!(matches!(TimeGrid::new(vec![0.0, 0.5, 0.2]), Err(Error::GridError(_))));
        let g = TimeGrid::uniform(1.0, 1e-3).unwrap();
        assert_eq!(g.steps(), 1000);
        assert_eq!(g.end(), 1.0);
        assert_eq!(TimeGrid::uniform(1.0, 0.3).unwrap().steps(), 4);
    }

    #[test]
    fn storage_indices() {
        assert_eq!(Storage::Endpoint.indices(5), vec![5]);
        assert_eq!(Storage::Every(2).indices(5), vec![0, 2, 4, 5]);
        assert_eq!(Storage::Full.indices(2), vec![0, 1, 2]);
    }

    #[test]
    fn mc_laplace_trivial_cases() {
        let c = PsdMatrix::from_diagonal(&[1.0, 2.0]).unwrap();
        let samples = vec![c.clone(); 7];
        let zero = mc_laplace(&samples, &PsdMatrix::zeros(2)).unwrap();
        assert_eq!((zero.estimate, zero.standard_error), (1.0, 0.0));
        let u = PsdMatrix::identity(2);
        let r = mc_laplace(&samples, &u).unwrap();
        assert!((r.estimate - (-3.0f64).exp()).abs() < 1e-15);
        assert_eq!(r.standard_error, 0.0);
        assert_eq!(mc_laplace(&[], &u).unwrap_err(), Error::EmptyBatch);
    }

    #[test]
    fn record_lows_track_running_minimum() {
        let mut r = PathRecord::new(4);
        for (i, v) in [1.0, 0.5, 0.7, 0.2, 0.2].iter().enumerate() {
            r.observe(i, *v);
        }
        assert_eq!(r.lows, vec![(0, 1.0), (1, 0.5), (3, 0.2)]);
    }
}
