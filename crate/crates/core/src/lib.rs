//! Wishart laws and Wishart processes on the cone of positive semidefinite
//! matrices.

pub mod affine_flow;
pub mod density;
pub mod error;
pub mod params;
pub mod rng;
pub mod sde_sim;
pub mod symcone;
pub mod validity;
pub mod verify;
pub mod wishart_dist;

pub use error::{Error, Result};
pub use params::{ProcessParams, WishartParams};
pub use symcone::{Mat, PsdMatrix, SymMatrix};
