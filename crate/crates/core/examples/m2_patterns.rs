// Two crawls per epoch: source 0 every time, the slow source 3 on a long period.
//
// `cargo run --example m2_patterns`

use std::error::Error;

use whittle_crawl::model::table1_fleet;
use whittle_crawl::policy::PolicySpec;
use whittle_crawl::sim::{self, RunOptions};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let fleet = table1_fleet(2.0)?;
    let (trace, summary) = sim::run(
        &fleet,
        &PolicySpec::Whittle,
        &RunOptions::deterministic(1000),
    )?;

    if let Some(c) = &summary.cycle {
        println!("cycle of period {}:", c.period);
        for (t, ids) in c.pattern.iter().enumerate() {
            println!("  +{t}: crawl {ids:?}");
        }
    }
    for (id, s) in summary.per_source.iter().enumerate() {
        println!(
            "source {id}: fraction {:.3}, gaps {:?}",
            s.crawl_fraction, s.interval_histogram
        );
    }
    println!("average reward {:.4}", summary.average_reward);

    // Index of every source over the last few epochs.
    for rec in &trace.records[trace.records.len() - 3..] {
        let row: Vec<String> = rec
            .sources
            .iter()
            .map(|s| format!("{:7.2}{}", s.index, if s.action { "*" } else { " " }))
            .collect();
        println!("epoch {:4}: {}", rec.epoch, row.join(" "));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
