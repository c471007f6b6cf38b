// Closed-form index against the dynamic-programming oracle.
//
// `cargo run --release --example oracle_agreement`

use std::error::Error;

use whittle_crawl::dp_oracle::{oracle_index, solve_average_lattice, CrawlPeriod, SubsidyProblem};
use whittle_crawl::model::table1_sources;
use whittle_crawl::whittle_index;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    for (id, p) in table1_sources().iter().enumerate() {
        let mut worst: f64 = 0.0;
        for k in 1..=25 {
            let x = p.lattice_state(k);
            let closed = whittle_index(x, p);
            let oracle = oracle_index(x, p, 1e-9 * closed.max(1.0))?;
            worst = worst.max((oracle - closed).abs() / closed.max(1.0));
        }
        // Off the lattice the oracle falls back to a discounted grid solve.
        let x = 0.5 * (p.lattice_state(2) + p.lattice_state(3));
        let off = oracle_index(x, p, 1e-6)?;
        println!(
            "source {id}: k=1..25 worst relative gap {worst:.1e}; between k=2,3 oracle {off:.4} closed {:.4}",
            whittle_index(x, p)
        );
    }

    // The index of x_3 is the subsidy at which the best crawl period moves past 3.
    let p = table1_sources()[1];
    let lambda = whittle_index(p.lattice_state(3), &p);
    let below = solve_average_lattice(&SubsidyProblem::new(p, lambda * (1.0 - 1e-6)), 200);
    let above = solve_average_lattice(&SubsidyProblem::new(p, lambda * (1.0 + 1e-6)), 200);
    assert_eq!(below.best_period, CrawlPeriod::Every(3));
    assert_eq!(above.best_period, CrawlPeriod::Every(4));
    println!(
        "source 1 around lambda={lambda:.4}: best period {:?} below, {:?} above",
        below.best_period, above.best_period
    );
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
