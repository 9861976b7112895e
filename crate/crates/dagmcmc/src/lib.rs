//! MCMC engine for Bayesian models expressed as directed acyclic graphs.
//!
//! Models are written in a small BUGS-style language, compiled to a graph of
//! stochastic and constant nodes, and sampled with adaptive random-walk
//! Metropolis updates. The per-iteration work of one chain can be spread over
//! several cooperating workers: parameters with many likelihood terms have
//! their log-likelihood evaluated as partial sums on every worker, while
//! groups of conditionally independent parameters are sampled on different
//! workers in parallel. Multiple chains run concurrently on disjoint worker
//! groups. For a fixed master seed, worker count and chain count, runs are
//! bit-for-bit reproducible.
//!
//! The crate ships runnable examples covering each stage of the workflow;
//! start with `examples/seeds_run.rs`. The `dagmcmc` binary drives the same
//! pipeline from a script file.

pub mod diagnostics;
pub mod fixtures;
pub mod graph;
pub mod lang;
pub mod runtime;
pub mod sampler;
pub mod schedule;
pub mod script;
