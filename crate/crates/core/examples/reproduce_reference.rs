// Single-crawl budget on the reference fleet: the index policy settles into
// alternating the two richest sources, and crawling only source 0 earns `u_0`.
//
// `cargo run --example reproduce_reference`

use std::error::Error;

use whittle_crawl::model::table1_fleet;
use whittle_crawl::policy::{PolicySpec, StaticEntry};
use whittle_crawl::sim::{self, periodic_pattern_reward, RunOptions};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let fleet = table1_fleet(1.0)?;
    let opts = RunOptions::deterministic(1000);

    let (_, whittle) = sim::run(&fleet, &PolicySpec::Whittle, &opts)?;
    let cycle = whittle.cycle.clone().ok_or("index policy did not settle")?;
    println!(
        "index policy: cycle period {} pattern {:?}",
        cycle.period, cycle.pattern
    );
    println!(
        "  simulated average reward {:.4}, closed form for the cycle {:.4}",
        whittle.average_reward,
        periodic_pattern_reward(&fleet, &cycle)
    );
    for (id, s) in whittle.per_source.iter().enumerate() {
        println!("  source {id}: crawl fraction {:.3}", s.crawl_fraction);
    }

    let single = PolicySpec::Static {
        schedule: vec![
            Some(StaticEntry {
                period: 1,
                offset: 0,
            }),
            None,
            None,
            None,
        ],
    };
    let (_, greedy) = sim::run(&fleet, &single, &opts)?;
    println!(
        "crawl source 0 every epoch: average reward {:.4} (u_0 = {:.4})",
        greedy.average_reward,
        fleet.sources()[0].u()
    );
    println!(
        "gain of the index policy: {:.1}%",
        100.0 * (whittle.average_reward / greedy.average_reward - 1.0)
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
