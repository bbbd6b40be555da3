//! Run a JSON experiment config through the library, as the `hjsys` binary does.
//!
//! ```bash
//! cargo run --release --example run_experiment -- crates/core/examples/configs/ergodic.json /tmp/hjsys_out
//! ```

use std::path::PathBuf;

use hjsys::experiment::{run, ExperimentConfig};

fn main() -> hjsys::Result<()> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/configs/validate_coupling.json")));
    let out = args.next().map(PathBuf::from);
    let config = ExperimentConfig::load(&path)?;
    let outcome = run(&config, out.as_deref())?;
    for c in &outcome.checks {
        println!("{c}");
    }
    println!("{}", serde_json::to_string_pretty(&outcome.summary)?);
    Ok(())
}
