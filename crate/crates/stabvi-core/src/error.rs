//! Error type shared by the solver modules.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, Error>;

/// Failure modes of problem construction, evaluation, and the engines.
///
/// The `FailedLemma*`/`FailedTheorem*` variants are test oracles, not
/// recoverable states: they fire when a property the underlying theory
/// guarantees is violated beyond float tolerance, which means either the run
/// configuration breaks a hypothesis or the implementation is wrong.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A slice had the wrong length for the problem dimensions.
    DimensionMismatch { what: &'static str, expected: usize, got: usize },
    /// Dynamics or an objective produced a non-finite number.
    NumericEscape { what: &'static str, x: Vec<f64>, u: Vec<f64> },
    /// A point left the domain box; carries the offending point.
    DomainExit { x: Vec<f64> },
    /// Two grid value functions with different grids were combined.
    GridMismatch,
    /// Every control candidate at a state sends the successor outside the
    /// domain, so no backup value exists there.
    InfeasibleBackup { x: Vec<f64> },
    /// A constructor or operation precondition was violated.
    ContractViolation(String),
    /// The fixed-point oracle did not converge.
    OracleFailure(String),
    /// Policy-evaluation iterates decreased (they must be non-decreasing).
    FailedLemmaMonotoneUp { node: Vec<f64>, residual: f64 },
    /// Stabilizing-VI iterates increased (they must be non-increasing).
    FailedLemmaMonotoneDown { node: Vec<f64>, residual: f64 },
    /// An approximate-VI iterate escaped its exact bounding pair.
    FailedTheoremSandwich { node: Vec<f64>, iteration: usize, margin: f64 },
    /// A declared admissible policy failed the simulation check.
    InadmissiblePolicy { from: Vec<f64>, reason: String },
    /// A standing assumption (for example positive-definite `U(.,0)`) failed.
    AssumptionViolation(String),
    /// A theorem was invoked outside its hypotheses.
    PreconditionFailed(String),
    /// No positive sublevel set of the value function fits inside the domain.
    EmptyEroa(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DimensionMismatch { what, expected, got } => {
                write!(f, "dimension mismatch for {what}: expected {expected}, got {got}")
            }
            Error::NumericEscape { what, x, u } => {
                write!(f, "non-finite {what} at x={x:?}, u={u:?}")
            }
            Error::DomainExit { x } => write!(f, "point left the domain: x={x:?}"),
            Error::GridMismatch => write!(f, "value functions live on different grids"),
            Error::InfeasibleBackup { x } => {
                write!(f, "every control candidate exits the domain at x={x:?}")
            }
            Error::ContractViolation(msg) => write!(f, "contract violation: {msg}"),
            Error::OracleFailure(msg) => write!(f, "oracle failure: {msg}"),
            Error::FailedLemmaMonotoneUp { node, residual } => write!(
                f,
                "policy-evaluation iterates decreased by {residual:.3e} at node {node:?}"
            ),
            Error::FailedLemmaMonotoneDown { node, residual } => write!(
                f,
                "stabilizing-VI iterates increased by {residual:.3e} at node {node:?}"
            ),
            Error::FailedTheoremSandwich { node, iteration, margin } => write!(
                f,
                "sandwich bound violated at iteration {iteration}, node {node:?} (margin {margin:.3e})"
            ),
            Error::InadmissiblePolicy { from, reason } => {
                write!(f, "policy failed the admissibility check from {from:?}: {reason}")
            }
            Error::AssumptionViolation(msg) => write!(f, "assumption violated: {msg}"),
            Error::PreconditionFailed(msg) => write!(f, "precondition failed: {msg}"),
            Error::EmptyEroa(msg) => write!(f, "no contained sublevel set: {msg}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for Error {}
