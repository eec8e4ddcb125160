use thiserror::Error;

use crate::coupling::CouplingViolation;
use crate::dist::Distribution;

/// Errors raised while building or validating model inputs.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid distribution parameters: {0:?}")]
    InvalidDistribution(Distribution),
    #[error("invalid network {id}: {reason}")]
    InvalidNetwork { id: usize, reason: String },
    #[error("attack fraction {value} for network {index} is outside [0, 1]")]
    InvalidAttack { index: usize, value: f64 },
    #[error(transparent)]
    Coupling(#[from] CouplingViolation),
    #[error("expected {expected} networks, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{0}")]
    Parse(String),
}

/// Errors raised by the coupling strategies.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("no surviving nodes in any network")]
    NoSurvivors,
    #[error("bounds for row {row} admit no row-stochastic assignment")]
    InfeasibleBounds { row: usize },
    #[error("invalid coefficient bounds: {0}")]
    InvalidBounds(String),
    #[error("{solver} needs {needs}")]
    Unsupported { solver: &'static str, needs: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}
