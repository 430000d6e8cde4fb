//! The double phase energy, its operators and its exponents.

mod energy;
mod exponents;
mod weight;

pub use energy::{
    apply_divergence_operator, apply_pseudo_operator, energy, energy_change, energy_gradient,
    hessian_apply, pseudo_fluxes, weak_residual, EnergyBreakdown, Linearization,
};
pub use exponents::{
    validate_exponents, ExponentMode, Exponents, DEFAULT_REGULARIZATION, SOBOLEV_RELATION_TOL,
};
pub use weight::WeightField;
