// Config-driven run: load a bundled JSON config, write `trace.csv` and
// `summary.json`, then query one index the way the CLI does.
//
// `cargo run --example config_run`

use std::error::Error;
use std::path::Path;

use whittle_crawl::experiment::{cmd_index, cmd_run, ExperimentConfig, IndexQuery, RunOverrides};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/table1_m1.json");
    let config = ExperimentConfig::load(&path)?;
    let out = std::env::temp_dir().join(format!("whittle-crawl-example-{}", std::process::id()));
    let report = cmd_run(
        &config,
        &RunOverrides {
            out: Some(out.clone()),
            ..RunOverrides::default()
        },
    )?;
    for line in report.lines() {
        println!("{line}");
    }
    let csv = std::fs::read_to_string(out.join("trace.csv"))?;
    println!(
        "trace.csv: {} lines, header {:?}",
        csv.lines().count(),
        csv.lines().next()
    );

    let r = cmd_index(&config, 1, IndexQuery::Lattice(3))?;
    println!(
        "source {} at x_3 = {:.3}: eta {:?}, gamma {:.4}",
        r.source, r.state, r.eta, r.gamma
    );
    std::fs::remove_dir_all(&out)?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
