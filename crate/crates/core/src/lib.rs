//! Cycle-stepped simulator for chiplet interconnects: a 2D mesh NoC with
//! three physical channels and in-router collectives, compared against a
//! hierarchical crossbar baseline.

pub mod cli;
pub mod config;
pub mod endpoints;
pub mod error;
pub mod fabric;
pub mod metrics;
pub mod netif;
pub mod noc;
pub mod rng;
pub mod router;
pub mod scenario;
pub mod sim;
pub mod topology;
pub mod traffic;
pub mod xbar;

pub use config::SimConfig;
pub use error::{ConfigError, Result, SimError};
