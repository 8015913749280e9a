//! Generates the default synthetic cohort, runs every stage on it and
//! prints the run summary.
//!
//! `cargo run -p cogassess --example cohort -- <out_dir>`

use std::path::PathBuf;
use std::time::Instant;

use cogassess::pipeline::{run, synth, PipelineConfig, SynthSpec};

fn main() -> cogassess::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "cohort_out".into()));
    let t = Instant::now();
    let (bundles, _) = synth(&SynthSpec::default(), &out.join("data"))?;
    let outcome = run(&PipelineConfig::default(), &bundles, &out.join("run"))?;
    println!("{}", serde_json::to_string_pretty(&outcome.summary)?);
    println!("elapsed {:.1} s", t.elapsed().as_secs_f64());
    Ok(())
}
