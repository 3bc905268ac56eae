use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("matrix is singular or not positive definite")]
    Singular,

    #[error("eigenvalue iteration did not converge")]
    EigenNonConvergence,

    #[error("step size underflow at t = {t} (h = {h:.3e})")]
    StepSizeUnderflow { t: f64, h: f64, last_state: [f64; 6] },

    #[error("solution blew up at t = {t}")]
    BlowUp { t: f64, last_state: [f64; 6] },

    #[error("trajectory spans {span} time units, need at least {required}")]
    TrajectoryTooShort { span: f64, required: f64 },

    #[error("state coordinate index {0} out of range (0..6)")]
    BadIndex(usize),

    #[error("matrix is not Hurwitz (spectral abscissa {0:.6e})")]
    NotHurwitz(f64),

    #[error("solver-infeasible (best phase-1 residual {best_residual:.3e})")]
    Infeasible { best_residual: f64 },

    #[error("solver did not converge after {iterations} iterations: {reason}")]
    SolverStalled { iterations: usize, reason: String },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("linear check failed before sampling: {0}")]
    LinearCheckFailed(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
