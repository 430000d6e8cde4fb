use thiserror::Error;

/// Errors raised by the discretization, the energy and the solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unsupported dimension {0}: only n = 1 and n = 2 are implemented")]
    UnsupportedDimension(usize),
    #[error("grid resolution must be at least one interior node per axis (got m = {0})")]
    Resolution(usize),
    #[error("axis {axis} out of range for a {dim}-dimensional grid")]
    AxisOutOfRange { axis: usize, dim: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("norm exponent must satisfy p >= 1 (got {0})")]
    NormExponent(f64),
    #[error("invalid exponents: {0}")]
    Exponents(String),
    #[error("invalid weight field: {0}")]
    Weight(String),
    #[error("singular linearization: Hessian coefficient {coefficient} on axis {axis} edge {edge} with zero regularization")]
    SingularLinearization {
        axis: usize,
        edge: usize,
        coefficient: f64,
    },
    #[error("conjugate gradients met non-positive curvature {curvature} at iteration {iteration}")]
    NonPositiveCurvature { iteration: usize, curvature: f64 },
    #[error("conjugate gradients did not reach tolerance in {iterations} iterations (residual {residual})")]
    CgNotConverged { iterations: usize, residual: f64 },
    #[error("solver did not converge: {0}")]
    NotConverged(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid trial: {0}")]
    Trial(String),
    #[error("objective derivative self-test failed: {0}")]
    ObjectiveSelfTest(String),
    #[error("csv: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, Error>;
