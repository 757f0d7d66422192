use thiserror::Error;

use crate::noc::Coord;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{key}: {message}")]
    Semantic { key: String, message: String },
}

impl ConfigError {
    pub fn semantic(key: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Semantic {
            key: key.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("workload error: {0}")]
    Workload(String),
    #[error("no route at node {node} for destination {dst}")]
    Routing { node: Coord, dst: Coord },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("transaction rejected: {0}")]
    Rejected(String),
    #[error("DMA job rejected: {0}")]
    JobRejected(String),
    #[error("invalid multicast set: {0}")]
    Contract(String),
    #[error("timeout at cycle {cycle} with {} undelivered packet(s): {}", stuck.len(), stuck.join(", "))]
    Timeout { cycle: u64, stuck: Vec<String> },
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
