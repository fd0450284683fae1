use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("UE {ue} has no positive channel gain to any BS (uncoverable UE)")]
    UncoverableUe { ue: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("SNR ratio undefined: both gains of UE {ue} towards BS {bs_a} and BS {bs_b} are zero")]
    UncoverableLinkPair { bs_a: usize, bs_b: usize, ue: usize },

    #[error("common-candidate vector leaves UE {ue} without a serving BS")]
    Unassociable { ue: usize },

    #[error("association loop did not settle after {iterations} iterations")]
    NonTermination { iterations: usize },

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("brute force limited to M <= {max_bs} and N <= {max_ue}, got M = {num_bs}, N = {num_ue}")]
    SizeGuard {
        num_bs: usize,
        num_ue: usize,
        max_bs: usize,
        max_ue: usize,
    },

    #[error("power shift precondition violated: {0}")]
    ShiftPrecondition(String),

    #[error("shift step {step} exceeds the feasible maximum {max_step}, bound by {binding}")]
    ShiftStep {
        step: f64,
        max_step: f64,
        binding: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
