//! Radial numerics for singular solutions of the heat equation with an
//! inverse-square potential and nonlinear absorption,
//!
//! `u_t - Δu - κ|x|^{-2} u + |x|^α u^p = 0` in `R^N × (0, ∞)`.
//!
//! The ground-state transform `ũ = u |x|^{-λ}` turns the Hardy operator into
//! the weighted Laplacian `r^{-2λ}∇·(r^{2λ}∇)`; all solvers work on radial
//! profiles of `ũ` on a graded cell-centered mesh.

pub mod error;
pub mod evolve;
pub mod grid;
pub mod io;
pub mod linalg;
pub mod model;
pub mod operators;
pub mod profile;
pub mod suite;
pub mod verify;

pub use error::{Error, Result};
pub use grid::{Frame, RadialField, RadialGrid};
pub use model::{derive_params, DerivedParams, Model, ProblemParams};
