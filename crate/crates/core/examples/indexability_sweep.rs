// Passive sets of the subsidy problem grow with the subsidy.
//
// `cargo run --release --example indexability_sweep`

use std::error::Error;

use whittle_crawl::dp_oracle::{boundary_estimates, index_bracket, passive_set_sweep};
use whittle_crawl::model::table1_sources;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    for (id, p) in table1_sources().iter().enumerate() {
        let (lo, hi) = index_bracket(p);
        let lambdas: Vec<f64> = (0..20).map(|i| lo + (hi - lo) * i as f64 / 19.0).collect();
        // Fails on a split passive set or a shrinking one.
        let parts = passive_set_sweep(p, &lambdas, 0.99, 1001)?;
        println!("source {id} (u={:.2}, u_star={:.2}):", p.u(), p.u_star());
        for q in parts.iter().step_by(3) {
            let a = if q.all_passive() {
                "all passive".to_string()
            } else if q.all_active(p) {
                "all active".to_string()
            } else {
                format!("passive below {:.2}", q.threshold)
            };
            println!("  lambda {:8.3}: {a}", q.lambda);
        }
        let (all_active, all_passive) = boundary_estimates(p, &parts);
        println!("  all active up to {all_active:?}, all passive from {all_passive:?}");
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
