use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter `{name}` must be positive and finite, got {value}")]
    NonPositiveParameter { name: String, value: f64 },
    #[error("structural condition violated: {condition}")]
    StructuralConditionViolated { condition: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("condensation requires N >= N1 (N = {n}, N1 = {n1})")]
    CondensationBelowGeometricGeneration { n: usize, n1: usize },
    #[error("singular tree system")]
    SingularSystem,
    #[error("depth mismatch: expected {expected}, got {got}")]
    DepthMismatch { expected: usize, got: usize },
    #[error("Kirchhoff residual {residual:e} at edge ({n},{k}) exceeds tolerance {tolerance:e}")]
    KirchhoffViolated { n: usize, k: usize, residual: f64, tolerance: f64 },
    #[error("tree is not geometric: {0}")]
    NotGeometric(String),
    #[error("exponents must satisfy 0 < sigma < sigma' < 1/2 (sigma = {sigma}, sigma' = {sigma_prime})")]
    ExponentOrderViolated { sigma: f64, sigma_prime: f64 },
    #[error("at least {required} distinct depths required, got {got}")]
    InsufficientDepths { required: usize, got: usize },
    #[error("fundamental-solution scale equals the radius ({0})")]
    ScaleEqualsRadius(f64),
    #[error("mode-0 radiation condition cannot be met: constant at infinity {constant:e} with log R = 0")]
    UnresolvableMode0 { constant: f64 },
    #[error("mode cutoff {cutoff} below required {required}")]
    CutoffTooSmall { cutoff: usize, required: usize },
    #[error("level {level} below chart level {required}")]
    DepthBelowChartLevel { level: usize, required: usize },
    #[error("alpha1 must be nonzero")]
    Alpha1Zero,
    #[error("interface operator is singular (condition estimate {condition:e}{})",
        .nearest_pencil_eigenvalue.map(|a| format!(", nearest pencil eigenvalue {a:.12e}")).unwrap_or_default())]
    SingularInterfaceOperator { condition: f64, nearest_pencil_eigenvalue: Option<f64> },
    #[error("at least {required} levels required, got {got}")]
    InsufficientLevels { required: usize, got: usize },
    #[error("dense assembly of {size} unknowns refused (limit {limit}); pass allow_large")]
    TooLarge { size: usize, limit: usize },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
