//! Exact paths for integer `2p`: `X_t = Σᵢ Y_{i,t} Y_{i,t}ᵀ` where the `Y_i`
//! are independent OU processes `dY = βY dt + Qᵀ dW`.

use std::collections::HashMap;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::{assemble, PathEnsemble, PathRecord, Scheme, Storage, TimeGrid};
use crate::affine_flow::sigma_flow;
use crate::error::{Error, Result};
use crate::params::ProcessParams;
use crate::rng::substream;
use crate::symcone::{matrix_exp, sqrt_psd, Mat, PsdMatrix, SymMatrix};
use crate::validity::HALF_INTEGER_TOL;

/// OU-squares paths with every grid state stored.
pub fn simulate_ou_squares(
    process: &ProcessParams,
    y: &[DVector<f64>],
    grid: &TimeGrid,
    n: usize,
    seed: u64,
) -> Result<PathEnsemble> {
    simulate_ou_squares_with(process, y, grid, n, seed, Storage::Full)
}

/// OU-squares paths keeping only the grid states selected by `storage`.
pub fn simulate_ou_squares_with(
    process: &ProcessParams,
    y: &[DVector<f64>],
    grid: &TimeGrid,
    n: usize,
    seed: u64,
    storage: Storage,
) -> Result<PathEnsemble> {
    let d = process.dim();
    let two_p = 2.0 * process.p;
    if (two_p - two_p.round()).abs() > HALF_INTEGER_TOL || two_p.round() < 1.0 {
        return Err(Error::ShapeError(format!("2p must be a positive integer, got 2p = {two_p}")));
    }
    let k = two_p.round() as usize;
    if y.len() != k {
        return Err(Error::ShapeError(format!("expected 2p = {k} starting vectors, got {}", y.len())));
    }
    if y.iter().any(|v| v.len() != d) {
        return Err(Error::DimensionMismatch("starting vectors must have length d".into()));
    }

    // (e^{βh}, (σ_h/2)^{1/2}) per distinct step length
    let mut by_step: HashMap<u64, (Mat, Mat)> = HashMap::new();
    let mut step_keys = Vec::with_capacity(grid.steps());
    for s in 0..grid.steps() {
        let h = grid.dt(s);
        let key = h.to_bits();
        if let std::collections::hash_map::Entry::Vacant(e) = by_step.entry(key) {
            let sigma = sigma_flow(&process.beta, process.alpha(), h)?;
            let root = sqrt_psd(&sigma.scale(0.5)?).into_sym().into_mat();
            e.insert((matrix_exp(&(&process.beta * h))?, root));
        }
        step_keys.push(key);
    }

    let gram = |ys: &[DVector<f64>]| {
        let mut acc = Mat::zeros(d, d);
        for v in ys {
            acc += v * v.transpose();
        }
        SymMatrix::symmetrize(&acc)
    };
    let x0 = gram(y);
    let stored = storage.indices(grid.steps());
    let records: Vec<PathRecord> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i as u64);
            let mut rec = PathRecord::new(stored.len());
            let mut ys: Vec<DVector<f64>> = y.to_vec();
            let mut next_stored = 0;
            for idx in 0..=grid.steps() {
                if idx > 0 {
                    let (e, c) = &by_step[&step_keys[idx - 1]];
                    for v in ys.iter_mut() {
                        let z = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                        *v = e * &*v + c * z;
                    }
                }
                let x = if idx == 0 { x0.clone() } else { gram(&ys) };
                let min_eig = x.min_eigenvalue();
                rec.observe(idx, min_eig);
                if next_stored < stored.len() && stored[next_stored] == idx {
                    rec.states.push(x);
                    rec.min_eigs.push(min_eig);
                    next_stored += 1;
                }
            }
            rec
        })
        .collect();
    let x0 = PsdMatrix::trusted(x0);
    Ok(assemble(process, grid, &x0, seed, Scheme::OuSquares, stored, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::affine_flow::omega_flow;

    #[test]
    fn noiseless_factors_follow_the_flow() {
        let beta = Mat::from_row_slice(2, 2, &[-0.4, 0.3, 0.1, -0.2]);
        let process = ProcessParams::new(1.0, beta.clone(), Mat::zeros(2, 2)).unwrap();
        let y = vec![DVector::from_vec(vec![1.0, 0.0]), DVector::from_vec(vec![0.5, 1.0])];
        let grid = TimeGrid::uniform(1.0, 0.25).unwrap();
        let ens = simulate_ou_squares(&process, &y, &grid, 2, 1).unwrap();
        for (j, t) in ens.stored_times().iter().enumerate() {
            let exact = omega_flow(&beta, &ens.x0, *t).unwrap();
            assert!((ens.paths[1][j].as_mat() - exact.as_mat()).amax() < 1e-12);
        }
    }

    #[test]
    fn rank_one_paths_stay_on_the_boundary() {
        let process = ProcessParams::new(0.5, Mat::zeros(2, 2), Mat::identity(2, 2)).unwrap();
        let y = vec![DVector::from_vec(vec![1.0, 1.0])];
        let grid = TimeGrid::uniform(1.0, 0.1).unwrap();
        let ens = simulate_ou_squares(&process, &y, &grid, 5, 2).unwrap();
        for s in ens.paths.iter().flatten() {
            let spec = s.spectrum();
            assert!(spec.values[0].abs() <= 1e-12 * spec.max().max(1.0));
        }
    }

    #[test]
    fn shape_errors() {
        let half = ProcessParams::new(0.75, Mat::zeros(2, 2), Mat::identity(2, 2)).unwrap();
        let grid = TimeGrid::uniform(1.0, 0.5).unwrap();
        let y = vec![DVector::zeros(2)];
        assert!(matches!(simulate_ou_squares(&half, &y, &grid, 1, 0), Err(Error::ShapeError(_))));
        let one = ProcessParams::new(1.0, Mat::zeros(2, 2), Mat::identity(2, 2)).unwrap();
        assert!(matches!(simulate_ou_squares(&one, &y, &grid, 1, 0), Err(Error::ShapeError(_))));
    }
}
