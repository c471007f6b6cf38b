use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgGroup, Parser, Subcommand};

use whittle_crawl::experiment::{
    cmd_index, cmd_run, cmd_verify, ExperimentConfig, ExperimentError, IndexQuery, RunOverrides,
    VerifySettings,
};

#[derive(Parser)]
#[command(
    version,
    about = "Whittle index crawl scheduling: simulate, inspect and verify"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a config; writes trace.csv and summary.json
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        horizon: Option<u64>,
        #[arg(long)]
        replications: Option<usize>,
    },
    /// Print the Whittle index of one source at a state or lattice step
    #[command(group(ArgGroup::new("at").required(true).args(["x", "k"])))]
    Index {
        config: PathBuf,
        /// Source id (0-based position in the config)
        #[arg(long)]
        source: usize,
        #[arg(long)]
        x: Option<f64>,
        #[arg(long)]
        k: Option<u64>,
    },
    /// Check the closed-form index against the dynamic-programming oracle
    Verify {
        config: PathBuf,
        /// Allowed oracle/closed-form gap, absolute below 1 and relative above
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        #[arg(long, default_value_t = 25)]
        lattice_steps: u64,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, ExperimentError> {
    match cli.command {
        Command::Run {
            config,
            out,
            seed,
            horizon,
            replications,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let report = cmd_run(
                &cfg,
                &RunOverrides {
                    out,
                    seed,
                    horizon,
                    replications,
                },
            )?;
            for s in &report.summaries {
                if !s.summary.transient_sources.is_empty() {
                    eprintln!(
                        "warning: initial states of sources {:?} lie outside [u, u_star]",
                        s.summary.transient_sources
                    );
                    break;
                }
            }
            for line in report.lines() {
                println!("{line}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Index {
            config,
            source,
            x,
            k,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let query = match (x, k) {
                (Some(x), _) => IndexQuery::State(x),
                (None, Some(k)) => IndexQuery::Lattice(k),
                (None, None) => unreachable!("clap requires one of --x/--k"),
            };
            let r = cmd_index(&cfg, source, query)?;
            let eta = r.eta.map_or("never".to_string(), |n| n.to_string());
            println!(
                "source={} state={} eta={eta} gamma={}",
                r.source, r.state, r.gamma
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            config,
            tol,
            lattice_steps,
        } => {
            let cfg = ExperimentConfig::load(&config)?;
            let settings = VerifySettings {
                oracle_tol: tol,
                lattice_steps,
                ..VerifySettings::default()
            };
            let report = cmd_verify(&cfg, &settings)?;
            print!("{}", report.table());
            if report.all_passed() {
                println!("all checks passed");
                Ok(ExitCode::SUCCESS)
            } else {
                for r in report.rows.iter().filter(|r| !r.passed) {
                    eprintln!("FAILED {} on source {}: {}", r.check, r.source, r.detail);
                }
                Ok(ExitCode::from(1))
            }
        }
    }
}
