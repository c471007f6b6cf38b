// Poisson arrivals with random utilities: sample mean of the per-period
// utility, and a seeded fleet run where source 0 is occasionally skipped.
//
// `cargo run --release --example stochastic_utility`

use std::error::Error;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use whittle_crawl::model::table1_fleet;
use whittle_crawl::policy::PolicySpec;
use whittle_crawl::sim::{self, sample_net_utility, ArrivalModel, RunOptions, UtilityDistribution};

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let fleet = table1_fleet(2.0)?;
    let model = ArrivalModel {
        utility: UtilityDistribution::Exponential,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = &fleet.sources()[0];
    let n = 100_000;
    let samples: Vec<f64> = (0..n)
        .map(|_| sample_net_utility(p, &model, &mut rng))
        .collect();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let sd = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
    println!(
        "source 0 per-period utility: mean {mean:.3} (u = {:.3}), sd {sd:.3}",
        p.u()
    );

    let (_, summary) = sim::run(
        &fleet,
        &PolicySpec::Whittle,
        &RunOptions::stochastic(20_000, 20140601, model),
    )?;
    println!("average reward {:.4}", summary.average_reward);
    for (id, s) in summary.per_source.iter().enumerate() {
        println!(
            "source {id}: fraction {:.5}, gaps {:?}",
            s.crawl_fraction, s.interval_histogram
        );
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
