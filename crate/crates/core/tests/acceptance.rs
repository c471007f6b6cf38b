//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run with `cargo test -p whittle-crawl --test acceptance`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use whittle_crawl::dp_oracle::{
    index_bracket, oracle_index, passive_set_sweep, solve_average_lattice, solve_discounted,
    solve_vanishing_discount, SubsidyProblem,
};
use whittle_crawl::experiment::{cmd_run, ExperimentConfig, RunOverrides};
use whittle_crawl::model::{table1_fleet, table1_sources};
use whittle_crawl::policy::{PolicySpec, StaticEntry};
use whittle_crawl::sim::{
    self, periodic_pattern_reward, sample_net_utility, ArrivalModel, RunOptions,
    UtilityDistribution,
};
use whittle_crawl::whittle_index;

const REFERENCE_GREEDY: f64 = 179.79;
const REFERENCE_M1: f64 = 254.66;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn config(name: &str) -> ExperimentConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name);
    ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn ensure(cond: bool, detail: String) -> Outcome {
    if cond {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn ac1_greedy_single_source() -> Outcome {
    let fleet = table1_fleet(1.0).map_err(|e| e.to_string())?;
    let spec = PolicySpec::Static {
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
    let start = Instant::now();
    let (_, summary) =
        sim::run(&fleet, &spec, &RunOptions::deterministic(1000)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    let r = summary.average_reward;
    ensure(
        (r - REFERENCE_GREEDY).abs() <= 0.05 && elapsed < 1.0,
        format!("average reward {r:.4} vs {REFERENCE_GREEDY} (+-0.05), {elapsed:.3} s"),
    )
}

fn ac2_m1_structure() -> Outcome {
    let fleet = table1_fleet(1.0).map_err(|e| e.to_string())?;
    let (_, summary) = sim::run(
        &fleet,
        &PolicySpec::Whittle,
        &RunOptions::deterministic(1000),
    )
    .map_err(|e| e.to_string())?;
    let cycle = summary.cycle.ok_or("no cycle detected")?;
    let alternating = cycle.period == 2
        && (cycle.pattern == vec![vec![0], vec![1]] || cycle.pattern == vec![vec![1], vec![0]]);
    let idle = summary.per_source[2].crawl_count == 0 && summary.per_source[3].crawl_count == 0;
    ensure(
        alternating && idle,
        format!(
            "cycle period {} pattern {:?}, crawls of sources 2,3 = {},{}",
            cycle.period,
            cycle.pattern,
            summary.per_source[2].crawl_count,
            summary.per_source[3].crawl_count
        ),
    )
}

fn ac3_m1_reward() -> Outcome {
    let fleet = table1_fleet(1.0).map_err(|e| e.to_string())?;
    let (_, summary) = sim::run(
        &fleet,
        &PolicySpec::Whittle,
        &RunOptions::deterministic(1000),
    )
    .map_err(|e| e.to_string())?;
    let s = table1_sources();
    let analytic = (s[0].u() * (1.0 + s[0].alpha()) + s[1].u() * (1.0 + s[1].alpha())) / 2.0;
    let r = summary.average_reward;
    let vs_reference = (r - REFERENCE_M1).abs() / REFERENCE_M1;
    let vs_analytic = (r - analytic).abs() / analytic;
    let cycle_value = summary
        .cycle
        .as_ref()
        .map(|c| periodic_pattern_reward(&fleet, c))
        .unwrap_or(f64::NAN);
    ensure(
        vs_reference <= 0.03 && vs_analytic <= 0.001,
        format!(
            "simulated {r:.4}; reference {REFERENCE_M1} (gap {:.2}%); analytic {analytic:.4} (gap {:.4}%); cycle closed form {cycle_value:.4}",
            100.0 * vs_reference,
            100.0 * vs_analytic
        ),
    )
}

fn ac4_m2_structure() -> Outcome {
    let fleet = table1_fleet(2.0).map_err(|e| e.to_string())?;
    let (_, summary) = sim::run(
        &fleet,
        &PolicySpec::Whittle,
        &RunOptions::deterministic(1000),
    )
    .map_err(|e| e.to_string())?;
    let cycle = summary.cycle.ok_or("no cycle detected")?;
    let always_0 = cycle.pattern.iter().all(|ids| ids.contains(&0));
    let crawls_3 = cycle.pattern.iter().filter(|ids| ids.contains(&3)).count();
    // Source 3 crawled at least once per cycle, at most once every 5 epochs.
    let periodic_3 = crawls_3 >= 1 && cycle.period / crawls_3 > 4;
    let gaps_3: Vec<u64> = summary.per_source[3]
        .interval_histogram
        .keys()
        .copied()
        .collect();
    ensure(
        always_0 && periodic_3 && gaps_3.iter().all(|&g| g > 4),
        format!(
            "cycle period {}, source 0 every epoch: {always_0}, source 3 crawl gaps {gaps_3:?}",
            cycle.period
        ),
    )
}

fn ac5_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (id, p) in table1_sources().iter().enumerate() {
        for k in 1..=25 {
            let x = p.lattice_state(k);
            let closed = whittle_index(x, p);
            let allowed = 1e-6f64.max(1e-6 * closed.abs());
            let oracle = oracle_index(x, p, allowed * 1e-3)
                .map_err(|e| format!("source {id} k={k}: {e}"))?;
            let ratio = (oracle - closed).abs() / allowed;
            if ratio > 1.0 {
                return Err(format!(
                    "source {id} k={k}: closed {closed} oracle {oracle} exceeds {allowed:.1e}"
                ));
            }
            worst = worst.max(ratio);
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    ensure(
        elapsed < 30.0,
        format!("4 sources x k=1..25, worst gap {worst:.3} of allowance, {elapsed:.2} s"),
    )
}

fn ac6_indexability_sweep() -> Outcome {
    let mut interior = 0;
    for (id, p) in table1_sources().iter().enumerate() {
        let (lo, hi) = index_bracket(p);
        let lambdas: Vec<f64> = (0..50).map(|i| lo + (hi - lo) * i as f64 / 49.0).collect();
        let parts =
            passive_set_sweep(p, &lambdas, 0.99, 4001).map_err(|e| format!("source {id}: {e}"))?;
        interior += parts
            .iter()
            .filter(|q| !q.all_passive() && !q.all_active(p))
            .count();
    }
    Ok(format!(
        "4 sources x 50 subsidies, 0 violations, {interior} interior thresholds"
    ))
}

fn ac7_value_function() -> Outcome {
    let mut details = Vec::new();
    for (id, p) in table1_sources().iter().enumerate() {
        let (_, hi) = index_bracket(p);
        let lipschitz = (1.0 + 1e-6) / (1.0 - p.alpha());
        for delta in [0.9, 0.99] {
            for frac in [0.0, 0.1, 0.25, 0.5, 0.75, 1.0] {
                let prob = SubsidyProblem::new(*p, frac * hi);
                let vf = solve_discounted(&prob, delta, 4001, 1e-10)
                    .map_err(|e| format!("source {id} delta={delta}: {e}"))?;
                let scale = vf.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                let drop = vf.monotonicity_violation() / scale;
                let convex = vf.min_second_difference();
                let slope = vf.max_slope();
                if drop > 1e-12 || convex < -1e-8 * p.u_star() || slope > lipschitz {
                    return Err(format!(
                        "source {id} delta={delta} lambda={}: drop {drop:.1e}, 2nd diff {convex:.2e}, slope {slope:.6} vs {lipschitz:.6}",
                        frac * hi
                    ));
                }
            }
        }
        let mut worst: f64 = 0.0;
        for frac in [0.0, 0.1, 0.25, 0.4, 0.6] {
            let prob = SubsidyProblem::new(*p, frac * hi);
            let beta = solve_average_lattice(&prob, 200).beta;
            let approx = solve_vanishing_discount(&prob, 0.999, 4001, 1e-10)
                .map_err(|e| format!("source {id}: {e}"))?
                .beta
                .ok_or("missing beta")?;
            worst = worst.max((approx - beta).abs() / beta.abs());
        }
        if worst > 0.01 {
            return Err(format!(
                "source {id}: (1-delta)V(u) off beta by {:.3}%",
                100.0 * worst
            ));
        }
        details.push(format!("{:.4}%", 100.0 * worst));
    }
    Ok(format!(
        "monotone, convex, Lipschitz at delta 0.9/0.99; vanishing-discount gaps {}",
        details.join(" ")
    ))
}

fn ac8_stochastic() -> Outcome {
    let p = table1_sources()[0];
    let model = ArrivalModel {
        utility: UtilityDistribution::Exponential,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 1_000_000;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..n {
        let v = sample_net_utility(&p, &model, &mut rng);
        sum += v;
        sum_sq += v * v;
    }
    let mean = sum / n as f64;
    let var = (sum_sq / n as f64 - mean * mean) * n as f64 / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let z = (mean - p.u()) / se;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let report = cmd_run(
        &config("table1_m2_stoch.json"),
        &RunOverrides {
            out: Some(dir.path().to_owned()),
            ..RunOverrides::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let fraction = report.summaries[0].summary.per_source[0].crawl_fraction;
    ensure(
        z.abs() <= 3.0 && fraction < 1.0,
        format!(
            "mean U {mean:.4} vs u {:.4} ({z:+.2} SE); stochastic M=2 source 0 crawl fraction {fraction:.5}",
            p.u()
        ),
    )
}

fn ac9_determinism() -> Outcome {
    let cfg = config("table1_m2_stoch.json");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let read_trace = |sub: &str| -> Result<Vec<u8>, String> {
        let out: PathBuf = dir.path().join(sub);
        cmd_run(
            &cfg,
            &RunOverrides {
                out: Some(out.clone()),
                ..RunOverrides::default()
            },
        )
        .map_err(|e| e.to_string())?;
        std::fs::read(out.join("trace.csv")).map_err(|e| e.to_string())
    };
    let a = read_trace("a")?;
    let b = read_trace("b")?;
    ensure(
        a == b,
        format!(
            "two stochastic runs, same seed: trace.csv {} bytes, identical: {}",
            a.len(),
            a == b
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("AC1 greedy single-source reward", ac1_greedy_single_source),
        ("AC2 M=1 alternation", ac2_m1_structure),
        ("AC3 M=1 reward", ac3_m1_reward),
        ("AC4 M=2 structure", ac4_m2_structure),
        ("AC5 oracle equivalence", ac5_oracle_equivalence),
        ("AC6 indexability sweep", ac6_indexability_sweep),
        ("AC7 value-function properties", ac7_value_function),
        ("AC8 stochastic consistency", ac8_stochastic),
        ("AC9 determinism", ac9_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        match check() {
            Ok(detail) => println!("[PASS] {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] {name}: {detail}");
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
