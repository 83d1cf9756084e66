//! Euler scheme for `dX = √X dB Q + Qᵀ dBᵀ √X + (2pα + βX + Xβᵀ) dt`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{assemble, PathEnsemble, PathRecord, Scheme, Storage, TimeGrid};
use crate::error::{Error, Result};
use crate::params::ProcessParams;
use crate::rng::{substream, StreamRng};
use crate::symcone::{project_with_root, Mat, PsdMatrix, SymMatrix};

/// What one step exposes to a path visitor.
pub(crate) struct StepView<'a> {
    pub step: usize,
    pub dt: f64,
    /// Brownian increment `ΔB` with `N(0, Δt)` entries.
    pub db: &'a Mat,
    /// `√X` at the left end of the step.
    pub root_before: &'a SymMatrix,
    /// Projected state at the right end of the step.
    pub state_after: &'a SymMatrix,
    /// `λ_min` of the right-end state before projection.
    pub min_eig: f64,
}

/// Runs one path from `x0`, handing every step to `visit`.
pub(crate) fn run_path(
    process: &ProcessParams,
    x0: &SymMatrix,
    grid: &TimeGrid,
    rng: &mut StreamRng,
    mut visit: impl FnMut(StepView<'_>),
) {
    let d = process.dim();
    let q = &process.q;
    let beta = &process.beta;
    let constant_drift = process.alpha().as_mat() * (2.0 * process.p);
    let (mut state, mut root, _) = project_with_root(x0);
    let mut db = Mat::zeros(d, d);
    for step in 0..grid.steps() {
        let dt = grid.dt(step);
        let sd = dt.sqrt();
        for v in db.iter_mut() {
            *v = sd * rng.sample::<f64, _>(StandardNormal);
        }
        let x = state.as_mat();
        let noise = root.as_mat() * &db * q;
        let bx = beta * x;
        let raw = x + &noise + noise.transpose() + (&constant_drift + &bx + bx.transpose()) * dt;
        let (next, next_root, min_eig) = project_with_root(&SymMatrix::symmetrize(&raw));
        visit(StepView { step, dt, db: &db, root_before: &root, state_after: &next, min_eig });
        state = next;
        root = next_root;
    }
}

/// Euler paths with every grid state stored.
pub fn simulate_euler(
    process: &ProcessParams,
    x: &PsdMatrix,
    grid: &TimeGrid,
    n: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    simulate_euler_with(process, x, grid, n, seed, Storage::Full)
}

/// Euler paths keeping only the grid states selected by `storage`.
pub fn simulate_euler_with(
    process: &ProcessParams,
    x: &PsdMatrix,
    grid: &TimeGrid,
    n: usize,
    seed: u64,
    storage: Storage,
) -> Result<PathEnsemble> {
    if x.dim() != process.dim() {
        return Err(Error::DimensionMismatch("start state and process differ in dimension".into()));
    }
    let stored = storage.indices(grid.steps());
    let x0 = x.sym().clone();
    let x0_min = x0.min_eigenvalue();
    let records: Vec<PathRecord> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let mut rec = PathRecord::new(stored.len());
            let mut next_stored = 0;
            rec.observe(0, x0_min);
            if stored[0] == 0 {
                rec.states.push(x0.clone());
                rec.min_eigs.push(x0_min);
                next_stored = 1;
            }
            run_path(process, &x0, grid, &mut rng, |view| {
                let idx = view.step + 1;
                rec.observe(idx, view.min_eig);
                if next_stored < stored.len() && stored[next_stored] == idx {
                    rec.states.push(view.state_after.clone());
                    rec.min_eigs.push(view.min_eig);
                    next_stored += 1;
                }
            });
            rec
        })
        .collect();
    Ok(assemble(process, grid, x, seed, Scheme::Euler, stored, records))
}
