//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A vector or matrix block has the wrong dimension. The block name
    /// identifies the offending piece of the program or state.
    #[error("dimension mismatch in block `{block}`: expected {expected}, got {got}")]
    DimensionMismatch {
        block: &'static str,
        expected: usize,
        got: usize,
    },

    /// A state or argument lies outside the admissible domain.
    #[error("domain violation: {0}")]
    Domain(String),

    /// Evaluation requested at a point where the function is not smooth.
    #[error("non-smooth locus: {0}")]
    NonSmooth(String),

    /// An operation was called outside its supported problem class.
    #[error("misuse: {0}")]
    Misuse(String),

    /// The saddle set is required but has not been computed.
    #[error("saddle set not available: run solve_saddle first")]
    MissingSaddleSet,

    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// Newton iteration failed to reach the requested residual.
    #[error("Newton did not converge in {iters} iterations (residual {residual:.3e})")]
    NewtonNoConvergence { residual: f64, iters: usize },

    /// State norm exceeded the blow-up threshold during integration.
    #[error("integration blow-up at t = {t} (last valid time {last_valid})")]
    Blowup { t: f64, last_valid: f64 },

    /// Data violate a hypothesis the theory needs (reported verbatim).
    #[error("hypothesis violation: {0}")]
    Hypothesis(String),

    /// A Lyapunov evaluation hit an active-set partition boundary.
    #[error("state on a partition boundary: evaluate v2_partition instead")]
    PartitionBoundary,

    /// Parse failure in a program or scenario file.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
