//! Dynamic-programming solvers for the single-source subsidy problem.
//!
//! A source that stays passive earns a subsidy `C * lambda` per period; a
//! crawl earns the current state `x` and resets the source to `u`. These
//! solvers do not use the closed-form index. They are the reference the
//! closed form in [`crate::whittle`] is checked against:
//!
//! - [`solve_discounted`] computes the discounted value function on a uniform
//!   grid over `[u, u_star]` with linear interpolation.
//! - [`solve_average_lattice`] evaluates the long-run reward of every
//!   "crawl every n periods" cycle exactly.
//! - [`oracle_index`] bisects on `lambda` for the indifference point.
//! - [`passive_set_sweep`] extracts the passive set across a range of subsidies.

use rayon::prelude::*;
use thiserror::Error;

use crate::model::SourceParams;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(
        "solver did not converge after {iterations} iterations (scaled residual {residual:e})"
    )]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("state {x} outside the recurrent range [{lo}, {hi})")]
    StateOutOfRange { x: f64, lo: f64, hi: f64 },
    #[error("no sign change of the indifference condition on [{lo}, {hi}]: indexability violated")]
    BracketFailure { lo: f64, hi: f64 },
    #[error(
        "passive set at lambda = {lambda} is not a single interval ({sign_changes} sign changes)"
    )]
    StructureViolation { lambda: f64, sign_changes: usize },
    #[error(
        "threshold decreased from {threshold_prev} (lambda = {lambda_prev}) to {threshold} (lambda = {lambda})"
    )]
    MonotonicityViolation {
        lambda_prev: f64,
        threshold_prev: f64,
        lambda: f64,
        threshold: f64,
    },
}

/// Single-source problem with a passivity subsidy `lambda`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsidyProblem {
    pub params: SourceParams,
    pub lambda: f64,
}

impl SubsidyProblem {
    pub fn new(params: SourceParams, lambda: f64) -> Self {
        Self { params, lambda }
    }

    /// Per-period subsidy `C * lambda` earned while passive.
    pub fn subsidy(&self) -> f64 {
        self.params.cost() * self.lambda
    }

    /// One-period reward `x v + C lambda (1 - v)`.
    pub fn reward(&self, x: f64, active: bool) -> f64 {
        if active {
            x
        } else {
            self.subsidy()
        }
    }
}

/// Uniform grid over `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Grid {
    lo: f64,
    hi: f64,
    n: usize,
}

impl Grid {
    fn over(p: &SourceParams, n: usize) -> Self {
        Grid {
            lo: p.u(),
            hi: p.u_star(),
            n,
        }
    }

    fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.n - 1) as f64
    }

    fn point(&self, j: usize) -> f64 {
        if j + 1 == self.n {
            self.hi
        } else {
            self.lo + self.step() * j as f64
        }
    }

    /// Interpolation nodes and weights for `x` (clamped into range).
    fn weights(&self, x: f64) -> [(usize, f64); 2] {
        let s = ((x - self.lo) / self.step()).clamp(0.0, (self.n - 1) as f64);
        let m = (s.floor() as usize).min(self.n - 2);
        let w = s - m as f64;
        [(m, 1.0 - w), (m + 1, w)]
    }
}

/// Value function tabulated on a uniform grid over `[u, u_star]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    /// Long-run average reward, for relative (average-reward) value functions.
    /// Those are normalized so that the value at `u` is zero.
    pub beta: Option<f64>,
}

impl ValueFunction {
    fn grid_spec(&self) -> Grid {
        Grid {
            lo: self.grid[0],
            hi: self.grid[self.grid.len() - 1],
            n: self.grid.len(),
        }
    }

    /// Piecewise-linear interpolation; clamps outside the grid.
    pub fn interpolate(&self, x: f64) -> f64 {
        self.grid_spec()
            .weights(x)
            .iter()
            .map(|&(j, w)| w * self.values[j])
            .sum()
    }

    /// Largest decrease between neighbouring grid values (zero if monotone).
    pub fn monotonicity_violation(&self) -> f64 {
        self.values
            .windows(2)
            .map(|w| (w[0] - w[1]).max(0.0))
            .fold(0.0, f64::max)
    }

    /// Smallest second difference `V[j+1] - 2 V[j] + V[j-1]`.
    pub fn min_second_difference(&self) -> f64 {
        self.values
            .windows(3)
            .map(|w| w[2] - 2.0 * w[1] + w[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// Largest absolute slope between neighbouring grid points.
    pub fn max_slope(&self) -> f64 {
        self.grid
            .windows(2)
            .zip(self.values.windows(2))
            .map(|(x, v)| ((v[1] - v[0]) / (x[1] - x[0])).abs())
            .fold(0.0, f64::max)
    }

    pub fn sup_distance(&self, other: &ValueFunction) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    fn scale(&self) -> f64 {
        self.values.iter().fold(1.0f64, |m, v| m.max(v.abs()))
    }
}

fn check_discounted_args(delta: f64, grid_n: usize, tol: f64) -> Result<(), OracleError> {
    if !(0.0..1.0).contains(&delta) {
        return Err(OracleError::InvalidArgument(format!(
            "discount {delta} must lie in [0, 1)"
        )));
    }
    if grid_n < 2 {
        return Err(OracleError::InvalidArgument(format!(
            "grid needs at least 2 points, got {grid_n}"
        )));
    }
    if tol.is_nan() || tol <= 0.0 {
        return Err(OracleError::InvalidArgument(format!(
            "tolerance {tol} must be positive: floating-point fixed points are only reached up to rounding"
        )));
    }
    Ok(())
}

/// One application of the discounted Bellman operator on the grid:
/// `(TV)(x) = max(C lambda + delta V(alpha x + u), x + delta V(u))`.
pub fn bellman_operator(prob: &SubsidyProblem, delta: f64, vf: &ValueFunction) -> Vec<f64> {
    let p = &prob.params;
    let anchor = vf.values[0];
    vf.grid
        .iter()
        .map(|&x| {
            let passive = prob.subsidy() + delta * vf.interpolate(p.alpha() * x + p.u());
            let active = x + delta * anchor;
            passive.max(active)
        })
        .collect()
}

/// Sup-norm Bellman residual divided by `max(1, sup |V|)`.
pub fn bellman_residual(prob: &SubsidyProblem, delta: f64, vf: &ValueFunction) -> f64 {
    let next = bellman_operator(prob, delta, vf);
    let diff = next
        .iter()
        .zip(&vf.values)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    diff / vf.scale()
}

/// Solves the grid Bellman equation exactly for a given value at `u`.
///
/// The passive successor `alpha x + u` never lies left of `x` on `[u, u_star]`,
/// so sweeping from `u_star` down determines every value from those to its
/// right, the node itself (solved in closed form) and the anchor `V(u)`.
/// Returns the values and their derivative with respect to the anchor.
fn backward_sweep(
    prob: &SubsidyProblem,
    delta: f64,
    grid: Grid,
    anchor: f64,
) -> (Vec<f64>, Vec<f64>) {
    let p = &prob.params;
    let mut values = vec![0.0; grid.n];
    let mut slopes = vec![0.0; grid.n];
    for j in (0..grid.n).rev() {
        let x = grid.point(j);
        let successor = (p.alpha() * x + p.u()).min(grid.hi);
        let mut self_weight = 0.0;
        let mut known = 0.0;
        let mut known_slope = 0.0;
        for (m, w) in grid.weights(successor) {
            if w == 0.0 {
                continue;
            }
            if m <= j {
                // Successor sits in the cell starting at x (m == j) or at
                // rounding distance below it; both refer back to V[j].
                self_weight += w;
            } else {
                known += w * values[m];
                known_slope += w * slopes[m];
            }
        }
        let denom = 1.0 - delta * self_weight;
        let passive = (prob.subsidy() + delta * known) / denom;
        let passive_slope = delta * known_slope / denom;
        let active = x + delta * anchor;
        if passive > active {
            values[j] = passive;
            slopes[j] = passive_slope;
        } else {
            values[j] = active;
            slopes[j] = delta;
        }
    }
    (values, slopes)
}

/// Discounted value function for `prob` on a `grid_n`-point grid.
///
/// `tol` bounds the Bellman residual relative to `max(1, sup |V|)`.
pub fn solve_discounted(
    prob: &SubsidyProblem,
    delta: f64,
    grid_n: usize,
    tol: f64,
) -> Result<ValueFunction, OracleError> {
    let guess = prob.params.u() / (1.0 - delta);
    solve_discounted_from(prob, delta, grid_n, tol, guess)
}

/// [`solve_discounted`] starting from a given guess for `V(u)`.
///
/// The map from the guessed `V(u)` to the value the sweep returns at `u` is
/// convex, piecewise linear and has slope at most `delta`, so Newton's method
/// on the anchor terminates after finitely many policy changes.
pub fn solve_discounted_from(
    prob: &SubsidyProblem,
    delta: f64,
    grid_n: usize,
    tol: f64,
    anchor_guess: f64,
) -> Result<ValueFunction, OracleError> {
    const MAX_NEWTON: usize = 200;
    check_discounted_args(delta, grid_n, tol)?;
    let grid = Grid::over(&prob.params, grid_n);
    let mut anchor = anchor_guess;
    for iteration in 1..=MAX_NEWTON {
        let (values, slopes) = backward_sweep(prob, delta, grid, anchor);
        let gap = anchor - values[0];
        let scale = values.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if gap.abs() <= 0.25 * tol * scale || iteration == MAX_NEWTON {
            let (values, _) = backward_sweep(prob, delta, grid, values[0]);
            let vf = ValueFunction {
                grid: (0..grid.n).map(|j| grid.point(j)).collect(),
                values,
                beta: None,
            };
            let residual = bellman_residual(prob, delta, &vf);
            return if residual <= tol {
                Ok(vf)
            } else {
                Err(OracleError::NonConvergence {
                    iterations: iteration,
                    residual,
                })
            };
        }
        anchor -= gap / (1.0 - slopes[0]);
    }
    unreachable!("loop returns on its last iteration")
}

/// Plain value iteration, kept as a second route to the discounted fixed point.
///
/// Starts from `initial` (zeros when absent) and stops once successive
/// iterates differ by at most `tol * max(1, sup |V|)`.
pub fn value_iteration(
    prob: &SubsidyProblem,
    delta: f64,
    grid_n: usize,
    tol: f64,
    max_iter: usize,
    initial: Option<Vec<f64>>,
) -> Result<ValueFunction, OracleError> {
    check_discounted_args(delta, grid_n, tol)?;
    let grid = Grid::over(&prob.params, grid_n);
    let values = match initial {
        Some(v) if v.len() == grid_n => v,
        Some(v) => {
            return Err(OracleError::InvalidArgument(format!(
                "initial values have length {}, grid has {grid_n}",
                v.len()
            )))
        }
        None => vec![0.0; grid_n],
    };
    let mut vf = ValueFunction {
        grid: (0..grid.n).map(|j| grid.point(j)).collect(),
        values,
        beta: None,
    };
    let mut change = f64::INFINITY;
    for _ in 0..max_iter {
        let next = bellman_operator(prob, delta, &vf);
        change = next
            .iter()
            .zip(&vf.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        vf.values = next;
        if change <= tol * vf.scale() {
            return Ok(vf);
        }
    }
    Err(OracleError::NonConvergence {
        iterations: max_iter,
        residual: change / vf.scale(),
    })
}

/// Relative value function from a discounted solve near `delta = 1`:
/// `h(x) = V_delta(x) - V_delta(u)` and `beta = (1 - delta) V_delta(u)`.
pub fn solve_vanishing_discount(
    prob: &SubsidyProblem,
    delta: f64,
    grid_n: usize,
    tol: f64,
) -> Result<ValueFunction, OracleError> {
    let vf = solve_discounted(prob, delta, grid_n, tol)?;
    let anchor = vf.values[0];
    Ok(ValueFunction {
        values: vf.values.iter().map(|v| v - anchor).collect(),
        grid: vf.grid,
        beta: Some((1.0 - delta) * anchor),
    })
}

/// How often the optimal single-source cycle crawls.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrawlPeriod {
    Every(u64),
    Never,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AverageSolution {
    pub beta: f64,
    pub best_period: CrawlPeriod,
}

/// Long-run reward of crawling every `n` periods from `u`: `n - 1` subsidised
/// passive periods, then a crawl collecting `(1 - alpha^n) u_star`.
pub fn cycle_reward(prob: &SubsidyProblem, n: u64) -> f64 {
    let p = &prob.params;
    let nf = n as f64;
    (prob.subsidy() * (nf - 1.0) + p.one_minus_alpha_pow(nf) * p.u_star()) / nf
}

/// Best average reward over never crawling and crawling every `n <= n_max` periods.
///
/// Ties go to the shorter period, and to crawling over never crawling.
pub fn solve_average_lattice(prob: &SubsidyProblem, n_max: u64) -> AverageSolution {
    let mut best = AverageSolution {
        beta: cycle_reward(prob, 1),
        best_period: CrawlPeriod::Every(1),
    };
    for n in 2..=n_max.max(1) {
        let r = cycle_reward(prob, n);
        if r > best.beta {
            best = AverageSolution {
                beta: r,
                best_period: CrawlPeriod::Every(n),
            };
        }
    }
    if prob.subsidy() > best.beta {
        best = AverageSolution {
            beta: prob.subsidy(),
            best_period: CrawlPeriod::Never,
        };
    }
    best
}

/// Settings for the discounted route of [`oracle_index_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleSettings {
    pub delta: f64,
    pub grid_n: usize,
    pub solver_tol: f64,
    /// Relative distance under which a state counts as a lattice point.
    pub lattice_tol: f64,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            delta: 0.9999,
            grid_n: 4001,
            solver_tol: 1e-9,
            lattice_tol: 1e-12,
        }
    }
}

/// Subsidy bracket `[0, 2 u_star / C]`; the index never exceeds `u_star / C`.
pub fn index_bracket(p: &SourceParams) -> (f64, f64) {
    (0.0, 2.0 * p.u_star() / p.cost())
}

/// Position of `x` on the orbit from `u`, found by stepping the passive dynamics.
fn lattice_position(x: f64, p: &SourceParams, rel_tol: f64) -> Option<u64> {
    let mut y = p.u();
    let mut k = 1;
    loop {
        if (y - x).abs() <= rel_tol * p.u_star() {
            return Some(k);
        }
        if y > x || k > 10_000 {
            return None;
        }
        y = crate::model::passive_step(y, p);
        k += 1;
    }
}

/// Bisects for the largest `lambda` at which `active(lambda)` still holds.
fn bisect<F>(lo: f64, hi: f64, tol: f64, mut active: F) -> Result<f64, OracleError>
where
    F: FnMut(f64) -> Result<bool, OracleError>,
{
    if !active(lo)? || active(hi)? {
        return Err(OracleError::BracketFailure { lo, hi });
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if active(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Whittle index at `x` by bisection on the subsidy, using default settings.
pub fn oracle_index(x: f64, p: &SourceParams, tol: f64) -> Result<f64, OracleError> {
    oracle_index_with(x, p, tol, &OracleSettings::default())
}

/// Whittle index at `x`: the subsidy at which crawling at `x` and waiting are
/// equally good.
///
/// On the reachable lattice `x = x_k` this is where the best cycle from
/// [`solve_average_lattice`] switches from crawling within `k` periods to
/// waiting longer. Off the lattice it is where the discounted solution stops
/// preferring to crawl at `x`. The result is within `tol` of the crossing.
pub fn oracle_index_with(
    x: f64,
    p: &SourceParams,
    tol: f64,
    settings: &OracleSettings,
) -> Result<f64, OracleError> {
    if tol.is_nan() || tol <= 0.0 {
        return Err(OracleError::InvalidArgument(format!(
            "bisection tolerance {tol} must be positive"
        )));
    }
    let slack = settings.lattice_tol * p.u_star();
    if !(x >= p.u() - slack && x < p.u_star()) {
        return Err(OracleError::StateOutOfRange {
            x,
            lo: p.u(),
            hi: p.u_star(),
        });
    }
    let (lo, hi) = index_bracket(p);
    match lattice_position(x, p, settings.lattice_tol) {
        Some(k) => {
            let horizon = (f64::EPSILON.ln() / -(p.mu() * p.period())).ceil() as u64;
            let n_max = k + 1 + horizon;
            bisect(lo, hi, tol, |lambda| {
                let sol = solve_average_lattice(&SubsidyProblem::new(*p, lambda), n_max);
                Ok(matches!(sol.best_period, CrawlPeriod::Every(n) if n <= k))
            })
        }
        None => bisect(lo, hi, tol, |lambda| {
            let prob = SubsidyProblem::new(*p, lambda);
            let vf = solve_discounted(&prob, settings.delta, settings.grid_n, settings.solver_tol)?;
            Ok(prefers_active(&prob, settings.delta, &vf, x))
        }),
    }
}

fn prefers_active(prob: &SubsidyProblem, delta: f64, vf: &ValueFunction, x: f64) -> bool {
    let p = &prob.params;
    let active = x + delta * vf.values[0];
    let passive = prob.subsidy() + delta * vf.interpolate(p.alpha() * x + p.u());
    active >= passive
}

/// Passive set `[u, threshold)` and active set `[threshold, u_star]` at one subsidy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivePassivePartition {
    pub lambda: f64,
    /// First grid state where crawling is optimal; `f64::INFINITY` when
    /// every state is passive.
    pub threshold: f64,
}

impl ActivePassivePartition {
    pub fn all_passive(&self) -> bool {
        self.threshold.is_infinite()
    }

    pub fn all_active(&self, p: &SourceParams) -> bool {
        self.threshold <= p.u()
    }
}

fn partition_at(
    p: &SourceParams,
    lambda: f64,
    delta: f64,
    grid_n: usize,
    tol: f64,
) -> Result<ActivePassivePartition, OracleError> {
    let prob = SubsidyProblem::new(*p, lambda);
    let vf = solve_discounted(&prob, delta, grid_n, tol)?;
    let active: Vec<bool> = vf
        .grid
        .iter()
        .map(|&x| prefers_active(&prob, delta, &vf, x))
        .collect();
    let sign_changes = active.windows(2).filter(|w| w[0] != w[1]).count();
    // Passive states must all precede active ones.
    if sign_changes > 1 || (sign_changes == 1 && active[0]) {
        return Err(OracleError::StructureViolation {
            lambda,
            sign_changes,
        });
    }
    let threshold = active
        .iter()
        .position(|&a| a)
        .map_or(f64::INFINITY, |j| vf.grid[j]);
    Ok(ActivePassivePartition { lambda, threshold })
}

/// Passive/active partitions for ascending subsidies `lambdas`.
///
/// Fails if any partition is not of the form `[u, a)`, `[a, u_star]`, or if
/// the threshold `a` ever decreases as the subsidy grows.
pub fn passive_set_sweep(
    p: &SourceParams,
    lambdas: &[f64],
    delta: f64,
    grid_n: usize,
) -> Result<Vec<ActivePassivePartition>, OracleError> {
    const SWEEP_TOL: f64 = 1e-10;
    if lambdas.windows(2).any(|w| w[1] < w[0]) {
        return Err(OracleError::InvalidArgument(
            "subsidies must be ascending".into(),
        ));
    }
    check_discounted_args(delta, grid_n, SWEEP_TOL)?;
    let partitions = lambdas
        .par_iter()
        .map(|&lambda| partition_at(p, lambda, delta, grid_n, SWEEP_TOL))
        .collect::<Result<Vec<_>, _>>()?;
    for w in partitions.windows(2) {
        if w[1].threshold < w[0].threshold {
            return Err(OracleError::MonotonicityViolation {
                lambda_prev: w[0].lambda,
                threshold_prev: w[0].threshold,
                lambda: w[1].lambda,
                threshold: w[1].threshold,
            });
        }
    }
    Ok(partitions)
}

/// Empirical boundary subsidies from a sweep: the largest `lambda` with every
/// state active and the smallest with every state passive.
pub fn boundary_estimates(
    p: &SourceParams,
    partitions: &[ActivePassivePartition],
) -> (Option<f64>, Option<f64>) {
    let all_active = partitions
        .iter()
        .filter(|q| q.all_active(p))
        .map(|q| q.lambda)
        .fold(None, |m: Option<f64>, l| Some(m.map_or(l, |m| m.max(l))));
    let all_passive = partitions
        .iter()
        .filter(|q| q.all_passive())
        .map(|q| q.lambda)
        .fold(None, |m: Option<f64>, l| Some(m.map_or(l, |m| m.min(l))));
    (all_active, all_passive)
}
