//! Small-time large-deviation asymptotics for the exit of a diffusion bridge
//! from a domain.
//!
//! The diffusion matrix `a = sigma sigma^T` of a model induces the Riemannian
//! metric `a^{-1}`; its distance `d` governs every exponent. For a bridge from
//! `x` to `y` over a short horizon `t`, the probability of leaving a domain `D`
//! behaves like `exp(-J/t)` with
//!
//! ```text
//! J = inf_{z on ∂D} 1/2 ((d(x,z) + d(z,y))^2 - d(x,y)^2)
//! ```
//!
//! Modules:
//! - [`model`]: diffusion models and their metric tensors,
//! - [`geodesic`]: discrete path energy and numerical geodesic distance,
//! - [`hyperbolic`]: closed-form half-plane geometry for Hull-White models,
//! - [`exit`]: the exit exponent, optimal crossing time, frozen-coefficient comparator,
//! - [`montecarlo`]: bridge simulation and empirical exponents.

#![allow(clippy::neg_cmp_op_on_partial_ord)]


pub mod error;
pub mod exit;
pub mod format;
pub mod geodesic;
pub mod hyperbolic;
pub mod model;
pub mod montecarlo;
pub mod search;

pub use error::{Error, Result};
pub use geodesic::{DiscretePath, GeodesicSolution, SolverOptions};
pub use model::{DiffusionModel, ModelKind, Point};
