use std::io;

use thiserror::Error;

/// Errors raised by configuration handling, the slot loop and the oracles.
#[derive(Debug, Error)]
pub enum Error {
    /// A configuration inequality does not hold.
    #[error("invalid config: {0}")]
    Config(String),

    /// Malformed config file or CLI value.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// A per-slot runtime invariant failed. `name` identifies the property.
    #[error("invariant `{name}` violated at slot {slot}: {detail}")]
    Invariant {
        name: &'static str,
        slot: u64,
        detail: String,
    },

    /// Grid plus battery cannot cover the base station demand.
    #[error("infeasible supply: demand {demand} exceeds grid cap {j_max} plus available discharge {discharge}")]
    InfeasibleSupply {
        demand: f64,
        j_max: f64,
        discharge: f64,
    },

    #[error("instance too large for exhaustive enumeration: {0}")]
    InstanceTooLarge(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
