//! Numerical toolkit for the pseudo-double-phase Dirichlet problem
//!
//! ```text
//! -sum_i d_i(|d_i u|^{p-2} d_i u + mu(x) |d_i u|^{q-2} d_i u) = f  in (0,1)^n,
//!                                                      u = 0  on the boundary,
//! ```
//!
//! solved by minimizing its energy on a staggered finite-difference grid,
//! together with the solution operator `f -> u`, its derivative, adjoint
//! reduced gradients for optimal control, and a sampler for
//! `gamma`-hyperconvexity inequalities.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the usual double precision instantiation.

pub mod cg;
pub mod control;
pub mod convexity;
pub mod error;
pub mod grid;
pub mod io;
pub mod phase;
pub mod precond;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use grid::{
    difference_adjoint, forward_diff, neg_laplacian, neg_second_difference, quadrature,
    sobolev_norm, EdgeField, Grid, GridFunction, Quadrature,
};
pub use phase::{
    apply_divergence_operator, apply_pseudo_operator, energy, energy_change, energy_gradient,
    hessian_apply, validate_exponents, weak_residual, EnergyBreakdown, ExponentMode, Exponents,
    Linearization, WeightField,
};
pub use scalar::Scalar;

pub type Grid64 = Grid<f64>;
pub type GridFunction64 = GridFunction<f64>;
pub type EdgeField64 = EdgeField<f64>;
pub type Exponents64 = Exponents<f64>;
pub type WeightField64 = WeightField<f64>;
pub type SolverConfig64 = solver::SolverConfig<f64>;
pub type SolveReport64 = solver::SolveReport<f64>;
pub type ControlConfig64 = control::ControlConfig<f64>;
pub type ControlReport64 = control::ControlReport<f64>;
pub type ConvexityCertificate64 = convexity::ConvexityCertificate<f64>;
