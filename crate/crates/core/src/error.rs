use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not hermitian (max asymmetry {asymmetry:e})")]
    NotHermitian { asymmetry: f64 },

    #[error("hermitian eigensolver did not converge within {max_iterations} sweeps (p = {dim})")]
    EigenFailure { dim: usize, max_iterations: usize },

    #[error("matrix is not positive definite")]
    NotPositiveDefinite,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sample {index} has zero norm")]
    ZeroNormSample { index: usize },

    #[error("structure basis is linearly dependent; offending indices {indices:?}")]
    DependentBasis { indices: Vec<usize> },

    #[error(
        "structure projection did not converge after {sweeps} sweeps \
         (affine residual {affine_residual:e}, min eigenvalue {min_eigenvalue:e})"
    )]
    ProjectionNotConverged {
        sweeps: usize,
        affine_residual: f64,
        min_eigenvalue: f64,
    },

    #[error("COCA solver hit the Newton step cap ({iterations}) without converging")]
    SolverNotConverged {
        iterations: usize,
        history: Vec<crate::coca::IterationRecord>,
    },

    #[error("COCA problem appears infeasible: dual iterates diverged at iteration {iteration}")]
    Infeasible { iteration: usize },

    #[error("Fisher information is singular (condition {condition:e}); null direction {direction:?}")]
    NonIdentifiable { condition: f64, direction: Vec<f64> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numerical failure budget exceeded: {failed} of {total} trials aborted at n = {n}")]
    FailureBudget { n: usize, failed: usize, total: usize },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
