//! Prints the computation schedule of the seeds model for several worker
//! counts.
//!
//! ```text
//! cargo run --example show_schedule
//! ```
//!
//! The schedule is a table with one column per worker. Each *sample* row
//! updates a set of mutually conditionally-independent parameters, one per
//! worker, in parallel; workers then gather the new values. Parameters whose
//! likelihood dominates the iteration cost — many children, or everything at
//! the deepest level of a flat model — instead get a *partial-product* row:
//! every worker evaluates its share of the likelihood and the proposal is
//! accepted jointly. Blank cells (`-`) idle that worker for one row.
//!
//! Watch the seeds schedule change with the worker count: the 21 plate
//! effects fold into ceil(21/C) sample rows, while the four regression
//! coefficients and the random-effect scale keep one partial-product row
//! each, replicated across workers.

use std::fs;
use std::path::Path;

use dagmcmc::lang::{compile_graph, parse_data, parse_model};
use dagmcmc::schedule::build_schedule;

fn main() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/seeds");
    let model = parse_model(&fs::read_to_string(dir.join("model.bug")).unwrap()).unwrap();
    let data = parse_data(&fs::read_to_string(dir.join("data.txt")).unwrap()).unwrap();
    let dag = compile_graph(&model, &data).unwrap();

    for cores in [1, 2, 4, 8] {
        let table = build_schedule(&dag, cores).unwrap();
        println!("=== {} core{} ===", cores, if cores == 1 { "" } else { "s" });
        print!("{}", table.render_text(&dag));
        println!();
    }

    // The same information is available as JSON for tooling.
    let table = build_schedule(&dag, 4).unwrap();
    println!("=== 4 cores, JSON ===");
    println!("{:#}", table.to_json(&dag));
}
