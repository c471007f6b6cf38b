//! JSON experiment configs and the commands behind the `whittle-crawl` binary.
//!
//! A config describes the fleet, the policy and the run:
//!
//! ```json
//! {
//!   "fleet": {
//!     "period": 1.0,
//!     "budget": 1.0,
//!     "sources": [{ "lambda_rate": 250.0, "xi_mean": 1.0, "mu": 0.7, "cost": 1.0 }]
//!   },
//!   "policy": { "kind": "whittle" },
//!   "mode": "deterministic",
//!   "horizon": 1000
//! }
//! ```
//!
//! Optional keys: `warmup` (default a tenth of the horizon), `seed` (required
//! in stochastic mode), `arrivals` (`{"utility": "constant" | "exponential"}`),
//! `output` (`{"dir": ...}`) and a per-source initial state `x0`. Unknown keys
//! are rejected.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dp_oracle::{
    self, index_bracket, oracle_index, passive_set_sweep, solve_average_lattice, solve_discounted,
    solve_discounted_from, OracleError, SubsidyProblem,
};
use crate::model::{FleetParams, ParamError, SourceParams};
use crate::policy::{PolicyError, PolicySpec};
use crate::sim::{self, ArrivalModel, Mode, RunOptions, SimError, Summary};
use crate::whittle::{self, lattice_index, whittle_index};

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: invalid config: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Param(#[from] ParamError),
    #[error("invalid config: {0}")]
    Policy(#[from] PolicyError),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("source id {id} out of range: fleet has {len} sources")]
    SourceOutOfRange { id: usize, len: usize },
    #[error("invalid tolerance: {0}")]
    Tolerance(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub lambda_rate: f64,
    pub xi_mean: f64,
    pub mu: f64,
    pub cost: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FleetConfig {
    pub period: f64,
    pub budget: f64,
    pub sources: Vec<SourceConfig>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub fleet: FleetConfig,
    pub policy: PolicySpec,
    #[serde(default)]
    pub mode: Mode,
    pub horizon: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrivals: Option<ArrivalModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

/// A config that passed validation, with the fleet and run options built.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub fleet: FleetParams,
    pub options: RunOptions,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text).map_err(|source| ExperimentError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn fleet(&self) -> Result<FleetParams, ParamError> {
        let sources = self
            .fleet
            .sources
            .iter()
            .map(|s| SourceParams::new(s.lambda_rate, s.xi_mean, s.mu, s.cost, self.fleet.period))
            .collect::<Result<Vec<_>, _>>()?;
        FleetParams::new(sources, self.fleet.budget)
    }

    /// Checks every precondition and builds the fleet and run options.
    pub fn validate(&self) -> Result<Experiment, ExperimentError> {
        let fleet = self.fleet()?;
        crate::policy::Policy::new(self.policy.clone(), &fleet)?;
        let warmup = self.warmup.unwrap_or(self.horizon / 10);
        if self.horizon <= warmup {
            return Err(ExperimentError::Invalid(format!(
                "horizon {} must exceed warmup {warmup}",
                self.horizon
            )));
        }
        if self.mode == Mode::Stochastic && self.seed.is_none() {
            return Err(ExperimentError::Invalid(
                "stochastic mode needs a seed".into(),
            ));
        }
        if self.mode == Mode::Deterministic && self.arrivals.is_some() {
            return Err(ExperimentError::Invalid(
                "`arrivals` only applies to stochastic mode".into(),
            ));
        }
        let initial_states = if self.fleet.sources.iter().any(|s| s.x0.is_some()) {
            let x: Vec<f64> = self
                .fleet
                .sources
                .iter()
                .zip(fleet.sources())
                .map(|(s, p)| s.x0.unwrap_or(p.u()))
                .collect();
            if let Some(bad) = x.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(ExperimentError::Invalid(format!(
                    "initial state {bad} must be finite and nonnegative"
                )));
            }
            Some(x)
        } else {
            None
        };
        let options = RunOptions {
            mode: self.mode,
            horizon: self.horizon,
            warmup,
            seed: self.seed,
            initial_states,
            arrivals: self.arrivals.unwrap_or_default(),
        };
        Ok(Experiment {
            config: self.clone(),
            fleet,
            options,
        })
    }
}

/// Command-line overrides for `run`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOverrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub horizon: Option<u64>,
    /// Independent runs with seeds `seed, seed + 1, ...`.
    pub replications: Option<usize>,
}

impl RunOverrides {
    pub fn apply(&self, config: &ExperimentConfig) -> ExperimentConfig {
        let mut c = config.clone();
        if let Some(seed) = self.seed {
            c.seed = Some(seed);
        }
        if let Some(h) = self.horizon {
            c.horizon = h;
        }
        if let Some(out) = &self.out {
            c.output = Some(OutputConfig { dir: out.clone() });
        }
        c
    }
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub tool_version: String,
    pub policy: String,
    pub seed: Option<u64>,
    #[serde(flatten)]
    pub summary: Summary,
    pub config: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub summaries: Vec<SummaryFile>,
}

impl RunReport {
    /// One line per replication: average reward, average cost and cycle.
    pub fn lines(&self) -> Vec<String> {
        self.summaries.iter().map(summary_line).collect()
    }
}

pub fn summary_line(s: &SummaryFile) -> String {
    let cycle = match &s.summary.cycle {
        Some(c) => {
            let pattern: Vec<String> = c.pattern.iter().map(|ids| format!("{ids:?}")).collect();
            format!("period {} {}", c.period, pattern.join(" "))
        }
        None => "none".into(),
    };
    let seed = s.seed.map_or(String::new(), |v| format!(" seed={v}"));
    format!(
        "policy={}{seed} average_reward={:.4} (no warmup {:.4}) average_cost={:.4} cycle={cycle}",
        s.policy,
        s.summary.average_reward,
        s.summary.average_reward_no_warmup,
        s.summary.average_cost
    )
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), ExperimentError> {
    fs::write(path, bytes).map_err(|source| ExperimentError::Io {
        path: path.to_owned(),
        source,
    })
}

fn create_dir(path: &Path) -> Result<(), ExperimentError> {
    fs::create_dir_all(path).map_err(|source| ExperimentError::Io {
        path: path.to_owned(),
        source,
    })
}

fn run_into(exp: &Experiment, dir: &Path) -> Result<SummaryFile, ExperimentError> {
    let (trace, summary) = sim::run(&exp.fleet, &exp.config.policy, &exp.options)?;
    create_dir(dir)?;
    let mut csv = Vec::new();
    trace.write_csv(&mut csv).map_err(SimError::from)?;
    write_file(&dir.join("trace.csv"), &csv)?;
    let file = SummaryFile {
        tool_version: TOOL_VERSION.into(),
        policy: exp.config.policy.name().into(),
        seed: exp.options.seed,
        summary,
        config: exp.config.clone(),
    };
    write_file(
        &dir.join("summary.json"),
        serde_json::to_string_pretty(&file)?.as_bytes(),
    )?;
    Ok(file)
}

/// Runs the experiment in `config` and writes `trace.csv` and `summary.json`.
///
/// With more than one replication, each run goes to `rep_<r>/` under the
/// output directory and `replications.json` lists them in replication order.
pub fn cmd_run(
    config: &ExperimentConfig,
    overrides: &RunOverrides,
) -> Result<RunReport, ExperimentError> {
    let config = overrides.apply(config);
    let out_dir = config
        .output
        .as_ref()
        .map_or_else(|| PathBuf::from("out"), |o| o.dir.clone());
    let replications = overrides.replications.unwrap_or(1);
    if replications == 0 {
        return Err(ExperimentError::Invalid(
            "replications must be at least 1".into(),
        ));
    }
    if replications == 1 {
        let exp = config.validate()?;
        let summary = run_into(&exp, &out_dir)?;
        return Ok(RunReport {
            out_dir,
            summaries: vec![summary],
        });
    }
    let base_seed = config.seed.unwrap_or(0);
    let summaries = (0..replications)
        .into_par_iter()
        .map(|r| {
            let mut c = config.clone();
            c.seed = Some(base_seed + r as u64);
            let exp = c.validate()?;
            run_into(&exp, &out_dir.join(format!("rep_{r}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    create_dir(&out_dir)?;
    write_file(
        &out_dir.join("replications.json"),
        serde_json::to_string_pretty(&summaries)?.as_bytes(),
    )?;
    Ok(RunReport { out_dir, summaries })
}

/// State at which to evaluate the index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IndexQuery {
    State(f64),
    /// Lattice step `k`, i.e. the state `(1 - alpha^k) u_star`.
    Lattice(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IndexReport {
    pub source: usize,
    pub state: f64,
    pub eta: Option<u64>,
    pub gamma: f64,
}

pub fn cmd_index(
    config: &ExperimentConfig,
    source: usize,
    query: IndexQuery,
) -> Result<IndexReport, ExperimentError> {
    let fleet = config.fleet()?;
    let p = fleet
        .source(source)
        .ok_or(ExperimentError::SourceOutOfRange {
            id: source,
            len: fleet.len(),
        })?;
    let (state, gamma) = match query {
        IndexQuery::State(x) if x.is_finite() && x >= 0.0 => (x, whittle_index(x, p)),
        IndexQuery::State(x) => {
            return Err(ExperimentError::Invalid(format!(
                "state {x} must be finite and nonnegative"
            )))
        }
        IndexQuery::Lattice(k) => (p.lattice_state(k), lattice_index(k, p)?),
    };
    Ok(IndexReport {
        source,
        state,
        eta: whittle::eta(state, p).periods(),
        gamma,
    })
}

/// Tolerances and sizes for `verify`.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifySettings {
    /// Oracle and closed-form indices must agree within `max(tol, tol * gamma)`.
    pub oracle_tol: f64,
    pub lattice_steps: u64,
    pub grid_n: usize,
    pub sweep_points: usize,
    pub sweep_delta: f64,
    /// Second differences must be at least `-convexity_tol * u_star`.
    pub convexity_tol: f64,
    /// Slopes may exceed `1 / (1 - alpha)` by this relative amount.
    pub lipschitz_tol: f64,
    /// Relative gap allowed between `(1 - delta) V(u)` at `delta = 0.999` and the average reward.
    pub vanishing_tol: f64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            oracle_tol: 1e-6,
            lattice_steps: 25,
            grid_n: 4001,
            sweep_points: 50,
            sweep_delta: 0.99,
            convexity_tol: 1e-8,
            lipschitz_tol: 1e-6,
            vanishing_tol: 0.01,
        }
    }
}

impl VerifySettings {
    fn check(&self) -> Result<(), ExperimentError> {
        for (name, v) in [
            ("oracle", self.oracle_tol),
            ("convexity", self.convexity_tol),
            ("lipschitz", self.lipschitz_tol),
            ("vanishing-discount", self.vanishing_tol),
        ] {
            if v.is_nan() || v <= 0.0 {
                return Err(ExperimentError::Tolerance(format!(
                    "{name} tolerance is {v}; it must be positive because floating-point results only match up to rounding"
                )));
            }
        }
        if self.lattice_steps == 0 || self.grid_n < 3 || self.sweep_points < 2 {
            return Err(ExperimentError::Tolerance(
                "lattice steps, grid size and sweep points must be positive (grid at least 3)"
                    .into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRow {
    pub source: usize,
    pub check: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub rows: Vec<CheckRow>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn table(&self) -> String {
        let mut out = format!("{:<7} {:<20} {:<6} detail\n", "source", "check", "result");
        for r in &self.rows {
            out.push_str(&format!(
                "{:<7} {:<20} {:<6} {}\n",
                r.source,
                r.check,
                if r.passed { "PASS" } else { "FAIL" },
                r.detail
            ));
        }
        out
    }
}

/// Subsidies used for the value-function checks, as fractions of the bracket.
const CHECK_FRACTIONS: [f64; 7] = [0.0, 0.1, 0.25, 0.4, 0.5, 0.75, 1.0];

fn check_value_functions(p: &SourceParams, s: &VerifySettings) -> CheckRow {
    let (_, hi) = index_bracket(p);
    let mut worst_convexity = f64::INFINITY;
    let mut worst_slope: f64 = 0.0;
    let mut worst_monotone: f64 = 0.0;
    let mut failure = None;
    for delta in [0.9, 0.99] {
        for frac in CHECK_FRACTIONS {
            let prob = SubsidyProblem::new(*p, frac * hi);
            match solve_discounted(&prob, delta, s.grid_n, 1e-10) {
                Ok(vf) => {
                    let scale = vf.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                    worst_monotone = worst_monotone.max(vf.monotonicity_violation() / scale);
                    worst_convexity = worst_convexity.min(vf.min_second_difference());
                    worst_slope = worst_slope.max(vf.max_slope());
                }
                Err(e) => failure = Some(format!("delta={delta} lambda={}: {e}", frac * hi)),
            }
        }
    }
    let lipschitz = 1.0 / (1.0 - p.alpha());
    let passed = failure.is_none()
        && worst_monotone <= 1e-12
        && worst_convexity >= -s.convexity_tol * p.u_star()
        && worst_slope <= lipschitz * (1.0 + s.lipschitz_tol);
    CheckRow {
        source: 0,
        check: "value-function",
        passed,
        detail: failure.unwrap_or_else(|| {
            format!(
                "monotone drop {worst_monotone:.1e}, min 2nd diff {worst_convexity:.3e}, max slope {worst_slope:.6} <= {lipschitz:.6}"
            )
        }),
    }
}

fn check_uniqueness(p: &SourceParams, s: &VerifySettings) -> CheckRow {
    let (_, hi) = index_bracket(p);
    let tol = 1e-10;
    let mut worst: f64 = 0.0;
    let mut failure = None;
    for frac in [0.1, 0.4, 0.75] {
        let prob = SubsidyProblem::new(*p, frac * hi);
        let a = solve_discounted_from(&prob, 0.99, s.grid_n, tol, 0.0);
        let b = solve_discounted_from(&prob, 0.99, s.grid_n, tol, 100.0 * p.u_star() / 0.01);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                let scale = a.values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
                worst = worst.max(a.sup_distance(&b) / scale);
            }
            (Err(e), _) | (_, Err(e)) => failure = Some(e.to_string()),
        }
    }
    CheckRow {
        source: 0,
        check: "uniqueness",
        passed: failure.is_none() && worst <= 10.0 * tol,
        detail: failure.unwrap_or_else(|| format!("max relative gap between starts {worst:.1e}")),
    }
}

/// Longest cycle worth considering: beyond it `alpha^n` is below rounding.
fn lattice_horizon(p: &SourceParams) -> u64 {
    (f64::EPSILON.ln() / -(p.mu() * p.period())).ceil() as u64 + 2
}

fn check_vanishing_discount(p: &SourceParams, s: &VerifySettings) -> CheckRow {
    let (_, hi) = index_bracket(p);
    let mut worst: f64 = 0.0;
    let mut failure = None;
    for frac in [0.0, 0.1, 0.25, 0.4, 0.6] {
        let prob = SubsidyProblem::new(*p, frac * hi);
        let beta = solve_average_lattice(&prob, lattice_horizon(p)).beta;
        match dp_oracle::solve_vanishing_discount(&prob, 0.999, s.grid_n, 1e-10) {
            Ok(vf) => {
                let approx = vf.beta.expect("relative value function has beta");
                worst = worst.max((approx - beta).abs() / beta.abs());
            }
            Err(e) => failure = Some(e.to_string()),
        }
    }
    CheckRow {
        source: 0,
        check: "vanishing-discount",
        passed: failure.is_none() && worst <= s.vanishing_tol,
        detail: failure.unwrap_or_else(|| format!("max relative gap {worst:.3e} at delta=0.999")),
    }
}

fn check_sweep(p: &SourceParams, s: &VerifySettings) -> CheckRow {
    let (lo, hi) = index_bracket(p);
    let n = s.sweep_points;
    let lambdas: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect();
    match passive_set_sweep(p, &lambdas, s.sweep_delta, s.grid_n) {
        Ok(parts) => {
            let interior = parts
                .iter()
                .filter(|q| !q.all_passive() && !q.all_active(p))
                .count();
            let (all_active, all_passive) = dp_oracle::boundary_estimates(p, &parts);
            CheckRow {
                source: 0,
                check: "indexability-sweep",
                passed: true,
                detail: format!(
                    "{n} subsidies, {interior} interior thresholds, all-active up to {}, all-passive from {}",
                    all_active.map_or("-".into(), |v| format!("{v:.3}")),
                    all_passive.map_or("-".into(), |v| format!("{v:.3}"))
                ),
            }
        }
        Err(e) => CheckRow {
            source: 0,
            check: "indexability-sweep",
            passed: false,
            detail: e.to_string(),
        },
    }
}

fn check_oracle(p: &SourceParams, s: &VerifySettings) -> CheckRow {
    // (k, gap, allowed) at the largest gap / allowed ratio seen so far
    let mut worst = (0u64, 0.0f64, 1.0f64);
    let mut failure = None;
    for k in 1..=s.lattice_steps {
        let x = p.lattice_state(k);
        let closed = whittle_index(x, p);
        let allowed = s.oracle_tol.max(s.oracle_tol * closed.abs());
        match oracle_index(x, p, allowed * 1e-3) {
            Ok(oracle) => {
                let gap = (oracle - closed).abs();
                if gap / allowed >= worst.1 / worst.2 {
                    worst = (k, gap, allowed);
                }
            }
            Err(e) => {
                failure = Some(format!("k={k}: {e}"));
                break;
            }
        }
    }
    CheckRow {
        source: 0,
        check: "oracle-agreement",
        passed: failure.is_none() && worst.1 <= worst.2,
        detail: failure.unwrap_or_else(|| {
            format!(
                "k=1..{}: worst gap {:.2e} (allowed {:.2e}) at k={}",
                s.lattice_steps, worst.1, worst.2, worst.0
            )
        }),
    }
}

fn check_lattice_form(p: &SourceParams) -> CheckRow {
    let mut worst: f64 = 0.0;
    for k in 1..=40 {
        let a = lattice_index(k, p).expect("k >= 1");
        let b = whittle_index(p.lattice_state(k), p);
        worst = worst.max((a - b).abs() / a.abs().max(1.0));
    }
    CheckRow {
        source: 0,
        check: "lattice-form",
        passed: worst <= 1e-10,
        detail: format!("k=1..40: max relative gap {worst:.1e}"),
    }
}

/// Runs every verification check on every source of the fleet.
pub fn verify_fleet(
    fleet: &FleetParams,
    settings: &VerifySettings,
) -> Result<VerifyReport, ExperimentError> {
    settings.check()?;
    let rows = fleet
        .sources()
        .par_iter()
        .enumerate()
        .flat_map_iter(|(id, p)| {
            [
                check_value_functions(p, settings),
                check_uniqueness(p, settings),
                check_vanishing_discount(p, settings),
                check_sweep(p, settings),
                check_oracle(p, settings),
                check_lattice_form(p),
            ]
            .into_iter()
            .map(move |row| CheckRow { source: id, ..row })
        })
        .collect();
    Ok(VerifyReport { rows })
}

pub fn cmd_verify(
    config: &ExperimentConfig,
    settings: &VerifySettings,
) -> Result<VerifyReport, ExperimentError> {
    verify_fleet(&config.fleet()?, settings)
}
