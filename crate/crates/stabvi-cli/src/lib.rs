//! Experiment harness around `stabvi-core`.
//!
//! Parses line-oriented config files into an [`config::ExperimentConfig`],
//! builds the benchmark problem, runs the selected pipeline, and writes CSV
//! artifacts plus a machine-readable verdict report. All randomness flows
//! from the single `seed` key, and with timing off (the default) every
//! artifact is byte-identical across reruns of the same config.

pub mod benchmarks;
pub mod config;
pub mod csvio;
pub mod pipelines;
pub mod report;

use std::fmt;

/// Process exit codes of the harness.
///
/// `0` all enabled checks passed; `1` internal or I/O failure; `2` a theorem
/// check failed; `3` a precondition or standing assumption was violated;
/// `4` the configuration was rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitCode {
    Ok = 0,
    Internal = 1,
    TheoremFailed = 2,
    PreconditionViolated = 3,
    ConfigError = 4,
}

/// Harness-level failure, carrying its exit code.
#[derive(Debug)]
pub enum HarnessError {
    /// One message per offending key; all collected before reporting.
    Config(Vec<String>),
    Precondition(String),
    TheoremFailure(String),
    Io(std::io::Error),
    Internal(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            HarnessError::Config(_) => ExitCode::ConfigError,
            HarnessError::Precondition(_) => ExitCode::PreconditionViolated,
            HarnessError::TheoremFailure(_) => ExitCode::TheoremFailed,
            HarnessError::Io(_) | HarnessError::Internal(_) => ExitCode::Internal,
        }
    }
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Config(errors) => {
                writeln!(f, "configuration rejected ({} problem(s)):", errors.len())?;
                for e in errors {
                    writeln!(f, "  - {e}")?;
                }
                Ok(())
            }
            HarnessError::Precondition(msg) => write!(f, "precondition violated: {msg}"),
            HarnessError::TheoremFailure(msg) => write!(f, "theorem check failed: {msg}"),
            HarnessError::Io(e) => write!(f, "i/o error: {e}"),
            HarnessError::Internal(msg) => write!(f, "internal error: {msg}"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e)
    }
}

impl From<stabvi_core::Error> for HarnessError {
    fn from(e: stabvi_core::Error) -> Self {
        use stabvi_core::Error as E;
        match e {
            E::FailedLemmaMonotoneUp { .. }
            | E::FailedLemmaMonotoneDown { .. }
            | E::FailedTheoremSandwich { .. } => HarnessError::TheoremFailure(e.to_string()),
            E::InadmissiblePolicy { .. }
            | E::AssumptionViolation(_)
            | E::PreconditionFailed(_)
            | E::EmptyEroa(_) => HarnessError::Precondition(e.to_string()),
            E::ContractViolation(_) => HarnessError::Config(vec![e.to_string()]),
            other => HarnessError::Internal(other.to_string()),
        }
    }
}

/// Wall clock for iteration traces; used only when `timing = on`.
pub struct WallClock {
    start: std::time::Instant,
}

impl WallClock {
    pub fn new() -> Self {
        Self { start: std::time::Instant::now() }
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl stabvi_core::Clock for WallClock {
    fn now_seconds(&self) -> f64 {
        self.start.elapsed().as_secs_f64()
    }
}
