//! Error type shared by all solver modules.

use std::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// Expression could not be parsed; `offset` is a byte offset into the input.
    Parse { offset: usize, message: String },
    /// An expression evaluated to a non-finite value at some grid point.
    NonFinite { x: f64, detail: String },
    /// A model coefficient sampled non-positive where positivity is required.
    NonPositiveCoefficient { name: &'static str, x: f64, value: f64 },
    /// Invalid scalar parameter or mesh request.
    InvalidParameter(String),
    /// Linear solver hit a (numerically) singular matrix.
    SingularMatrix { pivot_index: usize },
    /// Iterative eigenvalue solver did not reach the requested tolerance.
    EigenNonConvergence { iterations: usize, residual: f64 },
    /// Converged eigenvector is not positive; the discrete operator lost the
    /// M-matrix structure. Reported instead of being silently repaired.
    NonPositiveEigenvector { min_component: f64 },
    /// Newton or fixed-point iteration failed; `history` holds the residual trail.
    NonConvergence { what: String, history: Vec<f64> },
    /// Time stepper exhausted its positivity retry budget or produced NaN.
    StepFailure(String),
    /// A solver produced output violating a structural invariant (fatal).
    InvariantViolation(String),
    /// Hypothesis of a limit problem does not hold for the given data.
    HypothesisViolated(String),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::Parse { offset, message } => {
                write!(f, "parse error at byte {offset}: {message}")
            }
            CoreError::NonFinite { x, detail } => {
                write!(f, "non-finite value at x = {x}: {detail}")
            }
            CoreError::NonPositiveCoefficient { name, x, value } => {
                write!(f, "coefficient {name} is {value} <= 0 at x = {x}")
            }
            CoreError::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            CoreError::SingularMatrix { pivot_index } => {
                write!(f, "singular matrix: zero pivot at index {pivot_index}")
            }
            CoreError::EigenNonConvergence { iterations, residual } => write!(
                f,
                "eigenvalue iteration did not converge after {iterations} iterations \
                 (residual {residual:.3e})"
            ),
            CoreError::NonPositiveEigenvector { min_component } => write!(
                f,
                "principal eigenvector has non-positive component {min_component:.3e}"
            ),
            CoreError::NonConvergence { what, history } => write!(
                f,
                "{what} did not converge; last residuals {:?}",
                &history[history.len().saturating_sub(3)..]
            ),
            CoreError::StepFailure(msg) => write!(f, "time step failure: {msg}"),
            CoreError::InvariantViolation(msg) => write!(f, "invariant violation: {msg}"),
            CoreError::HypothesisViolated(msg) => write!(f, "hypothesis violated: {msg}"),
        }
    }
}

impl std::error::Error for CoreError {}

pub type Result<T> = std::result::Result<T, CoreError>;
