// Index policy against simpler schedulers over a range of budgets.
//
// `cargo run --example baselines`

use std::error::Error;

use whittle_crawl::model::table1_fleet;
use whittle_crawl::policy::{PolicySpec, StaticEntry};
use whittle_crawl::sim::{self, RunOptions};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let opts = RunOptions::deterministic(2000);
    println!(
        "{:>6} {:>10} {:>10} {:>10} {:>10}",
        "budget", "whittle", "greedy", "rr", "static"
    );
    for budget in [1.0, 2.0, 3.0] {
        let fleet = table1_fleet(budget)?;
        // Hand-picked periods, richer sources more often.
        let schedule = vec![
            Some(StaticEntry {
                period: 1,
                offset: 0,
            }),
            Some(StaticEntry {
                period: 2,
                offset: 0,
            }),
            Some(StaticEntry {
                period: 4,
                offset: 1,
            }),
            Some(StaticEntry {
                period: 8,
                offset: 3,
            }),
        ];
        let policies = [
            PolicySpec::Whittle,
            PolicySpec::GreedyState,
            PolicySpec::RoundRobin,
            PolicySpec::Static { schedule },
        ];
        let mut row = format!("{budget:>6}");
        for spec in &policies {
            let (_, s) = sim::run(&fleet, spec, &opts)?;
            row.push_str(&format!(" {:>10.3}", s.average_reward));
        }
        println!("{row}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
