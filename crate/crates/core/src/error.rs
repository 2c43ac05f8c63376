use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum LinalgError {
    #[error("matrix dimension {0} outside supported range 1..=8")]
    Dimension(usize),
    #[error("expected {expected} entries, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("eigenvalue iteration failed to converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("matrix is singular to working precision (column {column})")]
    Singular { column: usize },
}

/// Errors raised by the numerical library.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Linalg(#[from] LinalgError),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("hypothesis a) violated: m(A(t)) = {m:.3e} ≤ 0 at t = {t}")]
    NonPositiveLowerBound { t: f64, m: f64 },

    #[error("step size underflow at t = {t} (h = {h:.3e}); problem too stiff for the explicit integrator")]
    Stiffness { t: f64, h: f64 },

    #[error("trajectory left the ball at t = {t}: |z| = {norm}")]
    Escape { t: f64, norm: f64 },

    #[error("non-finite field value at t = {t}")]
    NonFiniteField { t: f64 },

    #[error("degenerate transition: condition number {cond:.3e} exceeds cap {cap:.1e} (interval {index})")]
    DegenerateTransition { index: usize, cond: f64, cap: f64 },

    #[error("unknown field family `{0}`")]
    UnknownFamily(String),

    #[error("parameter `{key}`: {reason}")]
    BadParameter { key: String, reason: String },

    #[error("field rejected: class N fails on {count} validation samples (min Re<h(z),z>/|z|^2 = {min_inner:.3e})")]
    ClassNRejected { count: usize, min_inner: f64 },

    #[error("field file: {0}")]
    FieldFile(String),

    #[error("integral of m(A) reached only {reached:.6} < {target} by t = {t_max}")]
    HorizonExhausted { target: usize, reached: f64, t_max: f64 },

    #[error("schedule rejected: mu^h = {mu_h:.6e} >= nu_{index} = {nu:.6e}")]
    ScheduleRejected { index: usize, mu_h: f64, nu: f64 },

    #[error("chain construction needs degree ≥ 2 jet matching (ell = {ell} ≥ 2)")]
    RequiresHigherOrderMatching { ell: f64 },

    #[error("time {t} lies beyond the schedule horizon u_N = {u_max}")]
    BeyondHorizon { t: f64, u_max: f64 },

    #[error("chain did not converge at t = {t} within the horizon (m = {m_used}, last increment {last_increment:.3e})")]
    ChainNotConverged { t: f64, m_used: usize, last_increment: f64 },
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input or a
    /// failed mathematical hypothesis).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Stiffness { .. }
                | Error::DegenerateTransition { .. }
                | Error::ChainNotConverged { .. }
                | Error::NonFiniteField { .. }
                | Error::Linalg(LinalgError::NoConvergence { .. })
                | Error::Linalg(LinalgError::Singular { .. })
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
