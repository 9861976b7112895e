//! Multi-worker execution of a schedule: worker threads, in-process
//! collectives, and deterministic random number streams.

use thiserror::Error;

use crate::sampler::SamplerError;

pub mod collective;
pub mod engine;
pub mod streams;

pub use collective::{CollectiveCounts, GroupContext};
pub use engine::{resolve_monitors, run_chains, ChainInit, Engine, EngineConfig, RunConfig};
pub use streams::RngStreams;

#[derive(Debug, Clone, Error)]
pub enum RuntimeError {
    #[error("chain {chain}: worker group aborted: {reason}")]
    Aborted { chain: u32, reason: String },
    #[error("chain {chain} rank {rank}: {message}")]
    Worker { chain: u32, rank: u32, message: String },
    #[error("{0}")]
    Config(String),
    #[error("runtime protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}
