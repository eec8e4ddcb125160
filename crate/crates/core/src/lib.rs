//! Cascading failures in interconnected networks under load redistribution.
//!
//! Each node carries an initial load and some free space. After an attack removes part
//! of the nodes, the load they carried is handed to surviving nodes, in the same network
//! or in a coupled one, and any node whose received extra load exceeds its free space
//! fails and passes its own load on.
//!
//! * [`meanfield`] is the deterministic large-network recursion.
//! * [`montecarlo`] simulates finite populations on complete or sparse graphs.
//! * [`strategy`] decides how load is split between networks at each step.
//! * [`search`] finds critical attack sizes and sweeps strategies.

// `!(x > 0.0)` is used on purpose so NaN takes the rejecting branch
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod coupling;
pub mod dist;
pub mod error;
pub mod meanfield;
pub mod montecarlo;
pub mod model;
pub mod search;
pub mod strategy;

pub use coupling::{validate_coupling, CouplingMatrix, CouplingViolation};
pub use dist::Distribution;
pub use error::{ModelError, StrategyError};
pub use meanfield::{MeanFieldOutcome, MeanFieldState, MeanFieldSystem, MeanFieldTrajectory};
pub use model::{AttackSpec, NetworkConfig, Topology};
pub use strategy::{CouplingDecision, CouplingStrategy, SwoBounds, SwoSolver};
