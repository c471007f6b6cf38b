//! Source parameters, derived constants and the single-source state dynamics.
//!
//! A source publishes content at Poisson rate `lambda_rate`; each item starts
//! with utility of mean `xi_mean` that decays at rate `mu`. Over one crawl
//! period `T` the expected uncollected utility evolves as
//!
//! ```text
//! passive: x' = alpha * x + u
//! active:  x' = u
//! ```
//!
//! with `alpha = exp(-mu T)` and `u = (lambda_rate * xi_mean / mu) (1 - alpha)`.
//! Left alone, every orbit converges to the saturation value
//! `u_star = u / (1 - alpha) = lambda_rate * xi_mean / mu`.

use thiserror::Error;

/// Rejected source or fleet parameters.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    #[error("invalid parameter `{name}` = {value}: must be finite and strictly positive")]
    NotPositive { name: &'static str, value: f64 },
    #[error("budget {budget} exceeds the total crawl cost {total_cost} of all sources")]
    BudgetUnreachable { budget: f64, total_cost: f64 },
    #[error("fleet has no sources")]
    EmptyFleet,
    #[error("lattice step must be at least 1")]
    ZeroLatticeStep,
}

fn check_positive(name: &'static str, value: f64) -> Result<f64, ParamError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(ParamError::NotPositive { name, value })
    }
}

/// Constants derived from the source primitives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivedConstants {
    /// One-period survival factor `exp(-mu T)`, in `(0, 1)`.
    pub alpha: f64,
    /// Expected utility accumulated over one period starting from an empty source.
    pub u: f64,
    /// Fixed point of the passive dynamics, `u / (1 - alpha)`.
    pub u_star: f64,
}

/// Computes `(alpha, u, u_star)` from the arrival rate, mean utility, decay
/// rate and crawl period.
pub fn derive_constants(
    lambda_rate: f64,
    xi_mean: f64,
    mu: f64,
    period: f64,
) -> Result<DerivedConstants, ParamError> {
    let lambda_rate = check_positive("lambda_rate", lambda_rate)?;
    let xi_mean = check_positive("xi_mean", xi_mean)?;
    let mu = check_positive("mu", mu)?;
    let period = check_positive("period", period)?;

    let decay = mu * period;
    let alpha = (-decay).exp();
    let u_star = lambda_rate * xi_mean / mu;
    // 1 - alpha via expm1 keeps precision when mu T is small.
    let u = u_star * -(-decay).exp_m1();
    Ok(DerivedConstants { alpha, u, u_star })
}

/// Parameters of one source, with the derived constants cached at construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceParams {
    lambda_rate: f64,
    xi_mean: f64,
    mu: f64,
    cost: f64,
    period: f64,
    derived: DerivedConstants,
}

impl SourceParams {
    pub fn new(
        lambda_rate: f64,
        xi_mean: f64,
        mu: f64,
        cost: f64,
        period: f64,
    ) -> Result<Self, ParamError> {
        let derived = derive_constants(lambda_rate, xi_mean, mu, period)?;
        let cost = check_positive("cost", cost)?;
        Ok(Self {
            lambda_rate,
            xi_mean,
            mu,
            cost,
            period,
            derived,
        })
    }

    /// Same source with a different crawl cost.
    pub fn with_cost(&self, cost: f64) -> Result<Self, ParamError> {
        Self::new(self.lambda_rate, self.xi_mean, self.mu, cost, self.period)
    }

    pub fn lambda_rate(&self) -> f64 {
        self.lambda_rate
    }

    pub fn xi_mean(&self) -> f64 {
        self.xi_mean
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn cost(&self) -> f64 {
        self.cost
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn derived(&self) -> DerivedConstants {
        self.derived
    }

    pub fn alpha(&self) -> f64 {
        self.derived.alpha
    }

    pub fn u(&self) -> f64 {
        self.derived.u
    }

    pub fn u_star(&self) -> f64 {
        self.derived.u_star
    }

    /// `1 - alpha`, computed without cancellation.
    pub fn one_minus_alpha(&self) -> f64 {
        -(-self.mu * self.period).exp_m1()
    }

    /// `1 - alpha^n`, computed without cancellation.
    pub fn one_minus_alpha_pow(&self, n: f64) -> f64 {
        -(-n * self.mu * self.period).exp_m1()
    }

    /// State reached `k >= 1` periods after a crawl: `(1 - alpha^k) u_star`.
    ///
    /// These are the only values a source takes once it has been crawled.
    pub fn lattice_state(&self, k: u64) -> f64 {
        self.one_minus_alpha_pow(k as f64) * self.derived.u_star
    }

    /// Whether `x` lies in the recurrent range `[u, u_star]`.
    pub fn in_recurrent_range(&self, x: f64) -> bool {
        x >= self.derived.u && x <= self.derived.u_star
    }
}

/// One period without a crawl: `alpha * x + u`.
pub fn passive_step(x: f64, p: &SourceParams) -> f64 {
    p.alpha() * x + p.u()
}

/// One period ending with a crawl: the state resets to `u` whatever it was.
pub fn active_step(p: &SourceParams) -> f64 {
    p.u()
}

/// `n` passive steps in closed form: `alpha^n x + (1 - alpha^n) u_star`.
pub fn passive_iterate(x: f64, n: u64, p: &SourceParams) -> f64 {
    let n = n as f64;
    p.alpha().powf(n) * x + p.one_minus_alpha_pow(n) * p.u_star()
}

/// A fleet of sources sharing one crawl period, with an average crawl budget.
///
/// Source ids are positions in [`FleetParams::sources`].
#[derive(Debug, Clone, PartialEq)]
pub struct FleetParams {
    sources: Vec<SourceParams>,
    budget: f64,
}

impl FleetParams {
    pub fn new(sources: Vec<SourceParams>, budget: f64) -> Result<Self, ParamError> {
        if sources.is_empty() {
            return Err(ParamError::EmptyFleet);
        }
        let budget = check_positive("budget", budget)?;
        let total_cost: f64 = sources.iter().map(SourceParams::cost).sum();
        if budget > total_cost {
            return Err(ParamError::BudgetUnreachable { budget, total_cost });
        }
        Ok(Self { sources, budget })
    }

    pub fn sources(&self) -> &[SourceParams] {
        &self.sources
    }

    pub fn source(&self, id: usize) -> Option<&SourceParams> {
        self.sources.get(id)
    }

    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn total_cost(&self) -> f64 {
        self.sources.iter().map(SourceParams::cost).sum()
    }

    /// Post-crawl state `u_i` of every source.
    pub fn reset_states(&self) -> Vec<f64> {
        self.sources.iter().map(SourceParams::u).collect()
    }
}

/// The four sources of the reference numerical example (`T = 1`, unit costs).
pub fn table1_sources() -> Vec<SourceParams> {
    [
        (250.0, 1.0, 0.7),
        (250.0, 0.7, 0.35),
        (250.0, 0.2, 0.7),
        (250.0, 0.08, 0.21),
    ]
    .into_iter()
    .map(|(lambda_rate, xi_mean, mu)| {
        SourceParams::new(lambda_rate, xi_mean, mu, 1.0, 1.0).expect("valid table data")
    })
    .collect()
}

/// The reference fleet with crawl budget `budget`.
pub fn table1_fleet(budget: f64) -> Result<FleetParams, ParamError> {
    FleetParams::new(table1_sources(), budget)
}
