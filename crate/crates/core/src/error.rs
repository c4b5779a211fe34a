use thiserror::Error;

/// Errors raised by the library. Every variant carries enough context to
/// locate the offending input without re-running the computation.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum LabError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix is not hermitian: max |A_ij - conj(A_ji)| = {deviation:.3e} exceeds {tol:.3e}")]
    NotHermitian { deviation: f64, tol: f64 },

    #[error("function undefined at eigenvalue {eigenvalue}")]
    Domain { eigenvalue: f64 },

    #[error("operator is not positive: min eigenvalue {min_eigenvalue:.3e} below -{tol:.3e}")]
    NotPositive { min_eigenvalue: f64, tol: f64 },

    #[error("interval endpoint {endpoint} is within {tol:.3e} of eigenvalue {eigenvalue}")]
    ClusterSplit {
        endpoint: f64,
        eigenvalue: f64,
        tol: f64,
    },

    #[error("density is not faithful: min eigenvalue {min_eigenvalue:.3e} <= power floor {floor:.1e}")]
    NotFaithful { min_eigenvalue: f64, floor: f64 },

    #[error("state normalization failed: trace {trace} differs from 1")]
    Normalization { trace: f64 },

    #[error("invalid exponent: {0}")]
    Exponent(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("domination violated: max eigenvalue of rho_psi - rho_phi is {max_violation:.3e}")]
    Domination { max_violation: f64 },

    #[error("densities do not commute: ||[rho_psi, rho_phi]|| = {commutator_norm:.3e}")]
    Invariance { commutator_norm: f64 },

    #[error("both states are singular; kernel of the relative modular operator has dimension {kernel_dim}")]
    DegenerateSupport { kernel_dim: usize },

    #[error("times outside the closed strip region: {0}")]
    Region(String),

    #[error("series did not converge within {terms} terms (last partial norm {last_norm:.3e})")]
    Divergent { terms: usize, last_norm: f64 },

    #[error("quadrature budget exceeded: estimated error {estimate:.3e} > budget {budget:.3e}")]
    QuadratureBudget { estimate: f64, budget: f64 },

    #[error("eigensolver failed to converge")]
    EigenFailure,

    #[error("uncertified tail family: {0}")]
    UncertifiedTail(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
