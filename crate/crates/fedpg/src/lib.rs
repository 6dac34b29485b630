//! Federated policy-gradient training for joint UAV trajectory and RIS phase
//! control over a satellite backhaul, with fluid-antenna ground users.

pub mod channel;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod env;
pub mod error;
pub mod estimator;
pub mod fas;
pub mod federated;
pub mod geometry;
pub mod policy;
pub mod rng;

pub use error::{Error, Result};
