use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// A single problem found while validating a run configuration.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigIssue {
    /// Dotted path into the config, e.g. `problem.blocks[0].l`.
    pub path: String,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("vector entries must be finite and nonempty ({what})")]
    NonFinite { what: &'static str },

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("metric is singular to tolerance (condition estimate {condition:.3e})")]
    SingularMetric { condition: f64 },

    #[error("step size must be positive, got {gamma}")]
    NonPositiveStep { gamma: f64 },

    #[error("step size {gamma} at iteration {n} lies outside [{lo}, {hi}]")]
    StepOutOfRange { n: usize, gamma: f64, lo: f64, hi: f64 },

    #[error("epsilon = {epsilon} must lie in (0, 1/(beta*mu + 1)) = (0, {bound})")]
    EpsilonOutOfRange { epsilon: f64, bound: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value produced in substep `{substep}` at iteration {n}")]
    NonFiniteIterate { substep: &'static str, n: usize },

    #[error("divergence guard tripped at iteration {n}: |x| = {norm:.3e} exceeds {threshold:.3e} (check the declared Lipschitz constant)")]
    Divergence { n: usize, norm: f64, threshold: f64 },

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("unknown operator `{name}` for role {role}")]
    UnknownOperator { name: String, role: &'static str },

    #[error("trace lacks the distances needed for {0}")]
    MissingDistances(&'static str),

    #[error("invalid configuration:\n{}", .0.iter().map(|i| format!("  - {i}")).collect::<Vec<_>>().join("\n"))]
    Config(Vec<ConfigIssue>),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
