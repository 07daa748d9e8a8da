//! Validate-then-reprompt control of a heater/sensor plant.
//!
//! An actor agent proposes heater actions; a deterministic validator checks
//! each proposal (hysteresis rule or digital-twin rollout); failed proposals
//! are returned to the actor with feedback a bounded number of times before a
//! safety action takes over. The plant is either an in-process two-node
//! thermal twin or a device speaking a small TCP line protocol.

pub mod agents;
pub mod backends;
pub mod cli;
pub mod config;
pub mod error;
pub mod metrics;
pub mod orchestrator;
pub mod plantio;
pub mod runlog;
pub mod twin;

pub use error::{BackendError, Error, Result};
