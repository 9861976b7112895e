//! Runs the same seeds posterior with 1, 2 and 4 workers per chain and
//! compares the results.
//!
//! ```text
//! cargo run --release --example scaling
//! ```
//!
//! Three things to observe:
//!
//! 1. For a fixed seed and worker count, a run is bit-for-bit reproducible.
//! 2. Changing the worker count changes the trace — each worker owns a
//!    core-specific random stream, so the draws themselves differ — but the
//!    posterior summaries agree to within Monte Carlo error.
//! 3. The collective counters show the communication price of each layout:
//!    one log-likelihood reduction per partial-product row per iteration,
//!    and a value gather per sample-row batch.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use dagmcmc::diagnostics::{bgr, summarise_all};
use dagmcmc::graph::Dag;
use dagmcmc::lang::{compile_graph, parse_data, parse_model};
use dagmcmc::runtime::{run_chains, ChainInit, RunConfig};
use dagmcmc::schedule::build_schedule;

/// Sensible starting values for the vague-prior coefficients; everything
/// else is drawn from its prior.
fn inits(dag: &Dag, value: f64) -> ChainInit {
    let mut values = BTreeMap::new();
    for name in ["alpha0", "alpha1", "alpha2", "alpha12"] {
        values.insert(name.to_string(), value);
    }
    values.insert("sigma.beta".into(), 1.0 - value);
    ChainInit::from_named(dag, &values).unwrap()
}

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/seeds");
    let model = parse_model(&fs::read_to_string(dir.join("model.bug")).unwrap()).unwrap();
    let data = parse_data(&fs::read_to_string(dir.join("data.txt")).unwrap()).unwrap();
    let dag = Arc::new(compile_graph(&model, &data).unwrap());

    let chains = 2usize;
    let monitors = ["alpha0", "alpha1", "alpha2", "alpha12", "sigma.beta"];
    for per_chain in [1usize, 2, 4] {
        let schedule = Arc::new(build_schedule(&dag, per_chain).unwrap());
        let cfg = RunConfig {
            master_seed: 99,
            chains,
            total_cores: chains * per_chain,
            burn_in: 1000,
            samples: 10000,
            monitors: monitors.iter().map(|s| s.to_string()).collect(),
        };
        let inits = vec![inits(&dag, 0.0), inits(&dag, 0.5)];
        let start = Instant::now();
        let buffer = run_chains(&dag, &schedule, &inits, &cfg).unwrap();
        let elapsed = start.elapsed();

        println!(
            "=== {} worker{} per chain ({} rows, {:.2?}) ===",
            per_chain,
            if per_chain == 1 { "" } else { "s" },
            schedule.rows().len(),
            elapsed
        );
        for record in summarise_all(&buffer).unwrap() {
            println!(
                "{:<12} mean {:>8.4}  MC error {:>9.6}  BGR {:.4}",
                record.name,
                record.mean,
                record.mc_error,
                bgr(&buffer, &record.name).unwrap()
            );
        }
        println!();
    }
}
