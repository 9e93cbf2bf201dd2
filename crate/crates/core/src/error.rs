use thiserror::Error;

/// Failures raised by lifted-system maps and shift operators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SystemError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("outside the domain of {map}: {reason}")]
    Domain { map: &'static str, reason: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("inconsistent problem dimensions: {0}")]
    Dimension(String),
    #[error("hessian is not symmetric (asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("hessian is not positive semidefinite (smallest eigenvalue {0:e})")]
    NotPsd(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NlpError {
    #[error("evaluation failed at iterate {iterate:?}: {source}")]
    Evaluation {
        iterate: Vec<f64>,
        #[source]
        source: SystemError,
    },
    #[error("invalid problem: {0}")]
    Invalid(String),
    #[error(transparent)]
    Qp(#[from] QpError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SafeSetError {
    #[error("trajectory does not converge to the equilibrium window (distance {distance:e})")]
    NotConverged { distance: f64 },
    #[error("stored point {time} of iteration {iteration} is infeasible: {reason}")]
    Infeasible { iteration: usize, time: usize, reason: String },
    #[error("window width {got} does not match the safe set width {expected}")]
    Width { expected: usize, got: usize },
    #[error("safe set is empty")]
    Empty,
    #[error(transparent)]
    System(#[from] SystemError),
    #[error("malformed safe set document: {0}")]
    Document(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("unknown example `{0}`")]
    UnknownExample(String),
    #[error("invalid override `{field}`: {reason}")]
    InvalidOverride { field: String, reason: String },
    #[error("could not parse configuration: {0}")]
    Parse(String),
    #[error("seed trajectory generation failed: {0}")]
    Seed(String),
}

/// Top-level error type for campaign drivers and the command-line tool.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    System(#[from] SystemError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Nlp(#[from] NlpError),
    #[error(transparent)]
    SafeSet(#[from] SafeSetError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("closed loop failed: {0}")]
    ClosedLoop(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
