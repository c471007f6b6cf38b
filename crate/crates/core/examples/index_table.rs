// Whittle indices of the reference fleet along the reachable lattice.
//
// `cargo run --example index_table`

use std::error::Error;

use whittle_crawl::model::table1_sources;
use whittle_crawl::whittle::{index_breakdown, lattice_index, HittingTime};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let sources = table1_sources();
    for (id, p) in sources.iter().enumerate() {
        println!(
            "source {id}: alpha={:.4} u={:.3} u_star={:.3}",
            p.alpha(),
            p.u(),
            p.u_star()
        );
        println!("  {:>3} {:>10} {:>5} {:>10}", "k", "state", "eta", "gamma");
        for k in [1, 2, 3, 4, 5, 8, 12, 20] {
            let x = p.lattice_state(k);
            let b = index_breakdown(x, p);
            let eta = match b.eta {
                HittingTime::Periods(n) => n.to_string(),
                HittingTime::Never => "never".into(),
            };
            // Closed form and lattice form must coincide on lattice states.
            let lattice = lattice_index(k, p)?;
            assert!((lattice - b.gamma).abs() <= 1e-9 * b.gamma.max(1.0));
            println!("  {k:>3} {x:>10.3} {eta:>5} {:>10.4}", b.gamma);
        }
        let above = index_breakdown(p.u_star() * 1.1, p);
        println!(
            "  above saturation: gamma({:.3}) = {:.4}",
            above.state, above.gamma
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
