//! Compiles the seeds model and walks the resulting graph: node kinds,
//! topological depths, and the parent/child structure that drives both the
//! samplers and the scheduler.
//!
//! ```text
//! cargo run --example show_graph
//! ```

use std::fs;
use std::path::Path;

use dagmcmc::graph::{mean_children, topological_depth};
use dagmcmc::lang::{compile_graph, parse_data, parse_model};

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/seeds");
    let model = parse_model(&fs::read_to_string(dir.join("model.bug")).unwrap()).unwrap();
    let data = parse_data(&fs::read_to_string(dir.join("data.txt")).unwrap()).unwrap();
    let dag = compile_graph(&model, &data).unwrap();

    println!(
        "{} nodes: {} unobserved parameters, {} observed, {} constants",
        dag.len(),
        dag.parameters().len(),
        dag.observed_count(),
        dag.constant_count()
    );
    println!("mean children per parameter: {:.3}", mean_children(&dag));
    println!();

    // Logical relations (`tau`, `p[i]`) are inlined during compilation, so
    // the graph connects stochastic relations directly: each plate effect
    // b[i] is a parent of its observation r[i], and the regression
    // coefficients are parents of all 21 observations.
    let depths = topological_depth(&dag);
    println!("parameters by topological depth (deepest sampled first):");
    for (depth, params) in depths.param_sets().iter().rev() {
        let names: Vec<String> = params
            .iter()
            .map(|&p| format!("{}({} ch)", dag.name(p), dag.children(p).len()))
            .collect();
        println!("  depth {}: {}", depth, names.join(" "));
    }
    println!();

    let alpha0 = dag.node_by_name("alpha0").unwrap();
    let children: Vec<&str> = dag.children(alpha0).iter().map(|&c| dag.name(c)).collect();
    println!("children of alpha0: {}", children.join(" "));
    let b2 = dag.node_by_name("b[2]").unwrap();
    let parents: Vec<&str> = dag.parents(b2).iter().map(|&p| dag.name(p)).collect();
    println!("parents of b[2]: {}", parents.join(" "));
}
