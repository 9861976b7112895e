//! End-to-end run of the bundled seeds fixture: a random-effects logistic
//! regression for 21 plates of germinating seeds, fit with two chains spread
//! over eight workers.
//!
//! The fixture directory holds the model, data, starting values and the
//! script below; this example executes the script exactly as the `dagmcmc`
//! binary would:
//!
//! ```text
//! cargo run --example seeds_run
//! ```
//!
//! The script burns in for 1,000 iterations with adaptive proposal scales,
//! freezes adaptation when monitors are set, retains 10,000 iterations per
//! chain, prints the summary table, then dumps the computation schedule
//! (sample rows for the plate effects, partial-product rows for the shared
//! parameters).

use std::path::Path;

use dagmcmc::script::{run_script, ScriptOptions};

fn main() {
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/seeds/script.txt");
    let mut stdout = std::io::stdout();
    if let Err(e) = run_script(&script, &ScriptOptions::default(), &mut stdout) {
        eprintln!("error: {}", e);
        std::process::exit(1);
    }
}
