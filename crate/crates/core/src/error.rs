//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {left}x{left} vs {right}x{right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("matrix is not Hermitian (max |A - A^dag| entry = {residual:.3e})")]
    NotHermitian { residual: f64 },

    #[error("invalid density matrix: {reason}")]
    InvalidDensity { reason: String },

    #[error("basis operator index out of range: ({j}, {k}) for dim {dim}")]
    IndexOutOfRange { j: usize, k: usize, dim: usize },

    #[error("eigendecomposition did not converge (off-diagonal residual {residual:.3e})")]
    EigenFailed { residual: f64 },

    #[error("unsupported Runge-Kutta order {order} (supported: 1..=5)")]
    UnsupportedOrder { order: usize },

    #[error("invalid Butcher tableau: {reason}")]
    InvalidTableau { reason: String },

    #[error("non-finite state at step {step} of {total} (numerical divergence)")]
    Divergence { step: usize, total: usize },

    #[error("time {t} is not on the grid with step {step}")]
    OffGrid { t: f64, step: f64 },

    #[error("invalid propagator interval: from {from} to {to}")]
    InvalidInterval { from: f64, to: f64 },

    #[error("grid misalignment: coarse grid {coarse} does not divide fine grid {fine}")]
    GridMisaligned { coarse: usize, fine: usize },

    #[error("reference trajectory failed Richardson validation: achieved {achieved:.3e} > tolerance {tolerance:.3e}")]
    RichardsonFailed { achieved: f64, tolerance: f64 },

    #[error("quadrature did not converge: grid-halving estimate {estimate:.3e} exceeds {tolerance:.3e}")]
    QuadratureNonConvergence { estimate: f64, tolerance: f64 },

    #[error("too few points for slope fit: {valid} above the noise floor, need at least 3")]
    TooFewPoints { valid: usize },

    #[error("protocol has no closed-form gradient bound; supply sample states instead")]
    NoClosedFormGradient,

    #[error("bound violated: |e_N(T)| = {norm_e:.6e} > bound = {bound:.6e} at order {order}, N = {n_grid}")]
    BoundViolated {
        order: usize,
        n_grid: usize,
        norm_e: f64,
        bound: f64,
    },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for configuration problems, 3 for
    /// numerical failures, 1 for verification failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io(_) => 2,
            Error::BoundViolated { .. } => 1,
            _ => 3,
        }
    }
}
