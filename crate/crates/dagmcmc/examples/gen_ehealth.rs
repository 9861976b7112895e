//! Generates a synthetic e-health data set — a two-part hierarchical linear
//! model over prescription records — and shows how the scheduler treats its
//! one deliberately outsized person record.
//!
//! ```text
//! cargo run --example gen_ehealth [out-dir]
//! ```
//!
//! Without an argument the files go to a temporary directory. The generator
//! gives one person roughly forty times the average number of observations,
//! so that person's random effect crosses the "many children" threshold: the
//! scheduler switches it from sampling-parallelism (a sample-row slot) to
//! likelihood-parallelism (a partial-product row), exactly like the shared
//! scale and mean parameters.

use std::fs;
use std::path::{Path, PathBuf};

use dagmcmc::fixtures::{generate_ehealth, EhealthConfig, EHEALTH_TRUTH};
use dagmcmc::lang::{compile_graph, parse_data, parse_model};
use dagmcmc::schedule::{build_schedule, Cell, RowKind};

fn main() {
    let arg = std::env::args().nth(1).map(PathBuf::from);
    let tmp;
    let out_dir: &Path = match &arg {
        Some(p) => p,
        None => {
            tmp = tempdir();
            &tmp
        }
    };

    let config = EhealthConfig { persons: 120, regions: 8, prescriptions: 3000, seed: 2024 };
    let fixture = generate_ehealth(&config, out_dir).unwrap();
    println!(
        "wrote model + data for {} persons in {} regions to {}",
        config.persons,
        config.regions,
        out_dir.display()
    );
    println!(
        "  {} indexed observations (person known), {} nonindexed",
        fixture.indexed, fixture.nonindexed
    );
    println!(
        "  person {} holds {} observations; the rest average {:.1}",
        fixture.dominant_person,
        fixture.dominant_observations,
        (fixture.indexed - fixture.dominant_observations) as f64 / (config.persons - 1) as f64
    );
    println!("  ground truth: {:?}", EHEALTH_TRUTH);
    println!();

    let model = parse_model(&fs::read_to_string(&fixture.model).unwrap()).unwrap();
    let data = parse_data(&fs::read_to_string(&fixture.data).unwrap()).unwrap();
    let dag = compile_graph(&model, &data).unwrap();
    let table = build_schedule(&dag, 4).unwrap();

    let dominant = dag.node_by_name("person.effect[1]").unwrap();
    let ordinary = dag.node_by_name("person.effect[2]").unwrap();
    for (label, node) in [("dominant", dominant), ("ordinary", ordinary)] {
        let mut placement = "unscheduled";
        for row in table.rows() {
            let hit = row.cells.iter().any(|cell| match cell {
                Cell::Sample(t) | Cell::Partial(t) => table.target_nodes(*t).contains(&node),
                Cell::Blank => false,
            });
            if hit {
                placement = match row.kind {
                    RowKind::Sample => "a sample row (sampling parallelism)",
                    RowKind::PartialProduct => {
                        "a partial-product row (likelihood parallelism)"
                    }
                };
                break;
            }
        }
        println!(
            "{} person effect ({} children) sits in {}",
            label,
            dag.children(node).len(),
            placement
        );
    }
}

fn tempdir() -> PathBuf {
    let dir = std::env::temp_dir().join("dagmcmc-ehealth-example");
    fs::create_dir_all(&dir).unwrap();
    dir
}
