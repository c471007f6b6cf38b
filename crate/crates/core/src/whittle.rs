//! Closed-form Whittle index for a single source.
//!
//! Under subsidy `lambda` for staying passive, the optimal single-source policy
//! lets the state climb from `u` and crawls as soon as it reaches the active set
//! `[a, u_star]`. The number of periods this takes, started from `u`, is the
//! hitting time `eta(a)`; equating the long-run rewards of crawling at `a` and
//! one step later yields the index
//!
//! ```text
//! gamma(x) = [ eta(x) ((1 - alpha) x - u) + (1 - alpha^eta(x)) u_star ] / C
//! eta(x)   = ceil( log_alpha( (u - (1 - alpha) x) / u ) )
//! ```
//!
//! On the reachable lattice `x_k = (1 - alpha^k) u_star` this reduces to
//! `gamma(x_k) = (k ((1 - alpha) x_k - u) + x_k) / C`.

use crate::model::{ParamError, SourceParams};

/// Lattice values whose log argument is within this distance of `alpha^n`
/// are snapped to `n`; below it, states closer than double precision to
/// `u_star` cannot be told apart anyway.
const LATTICE_SNAP: f64 = 64.0 * f64::EPSILON;

/// Periods needed, starting from the post-crawl state `u`, for the passive
/// orbit to reach a given state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HittingTime {
    Periods(u64),
    /// The state is at or above `u_star`, which the orbit from `u` never reaches.
    Never,
}

impl HittingTime {
    pub fn periods(self) -> Option<u64> {
        match self {
            HittingTime::Periods(n) => Some(n),
            HittingTime::Never => None,
        }
    }
}

/// Largest hitting time distinguishable in double precision for this source.
pub fn eta_cap(p: &SourceParams) -> u64 {
    (f64::EPSILON.ln() / p.alpha().ln()).ceil().max(1.0) as u64
}

/// Hitting time `eta(x)`.
///
/// States below `u` (never-crawled transients) report one period. Results are
/// capped at [`eta_cap`] as `x` approaches `u_star`.
pub fn eta(x: f64, p: &SourceParams) -> HittingTime {
    let arg = (p.u() - p.one_minus_alpha() * x) / p.u();
    if arg <= 0.0 || x >= p.u_star() {
        return HittingTime::Never;
    }
    let cap = eta_cap(p);
    if arg < f64::EPSILON {
        return HittingTime::Periods(cap);
    }
    let ln_alpha = -p.mu() * p.period();
    let periods = arg.ln() / ln_alpha;
    let nearest = periods.round();
    let n = if nearest >= 1.0 && (arg - (nearest * ln_alpha).exp()).abs() <= LATTICE_SNAP {
        nearest
    } else {
        periods.ceil()
    };
    HittingTime::Periods((n.max(1.0) as u64).min(cap))
}

/// Whittle index `gamma(x)` from the closed form.
///
/// For `x >= u_star` the index continues as `x / C`, the limit of the closed
/// form at `u_star` extended monotonically over transient states.
pub fn whittle_index(x: f64, p: &SourceParams) -> f64 {
    match eta(x, p) {
        HittingTime::Never => x / p.cost(),
        HittingTime::Periods(n) => {
            let n = n as f64;
            let gap = p.one_minus_alpha() * x - p.u();
            (n * gap + p.one_minus_alpha_pow(n) * p.u_star()) / p.cost()
        }
    }
}

/// Index on the reachable lattice, `x_k = (1 - alpha^k) u_star`, using the
/// simplified form `(k ((1 - alpha) x_k - u) + x_k) / C`.
pub fn lattice_index(k: u64, p: &SourceParams) -> Result<f64, ParamError> {
    if k == 0 {
        return Err(ParamError::ZeroLatticeStep);
    }
    let x = p.lattice_state(k);
    Ok((k as f64 * (p.one_minus_alpha() * x - p.u()) + x) / p.cost())
}

/// Index together with the hitting time it was computed from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexBreakdown {
    pub state: f64,
    pub eta: HittingTime,
    pub gamma: f64,
}

pub fn index_breakdown(x: f64, p: &SourceParams) -> IndexBreakdown {
    IndexBreakdown {
        state: x,
        eta: eta(x, p),
        gamma: whittle_index(x, p),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{passive_step, table1_sources};

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
    }

    /// Counts passive steps from `u` until the orbit reaches `x`.
    fn steps_to_reach(x: f64, p: &SourceParams) -> u64 {
        let mut y = p.u();
        let mut n = 1;
        while y < x * (1.0 - 1e-13) {
            y = passive_step(y, p);
            n += 1;
        }
        n
    }

    #[test]
    fn eta_at_u_is_one() {
        for p in table1_sources() {
            assert_eq!(eta(p.u(), &p), HittingTime::Periods(1));
            assert_eq!(steps_to_reach(p.u(), &p), 1);
        }
    }

    #[test]
    fn eta_on_lattice_matches_step_count() {
        for p in table1_sources() {
            for k in 1..=30 {
                let x = p.lattice_state(k);
                assert_eq!(steps_to_reach(x, &p), k);
                assert_eq!(eta(x, &p), HittingTime::Periods(k), "k={k}");
            }
        }
    }

    #[test]
    fn eta_between_lattice_points_rounds_up() {
        let p = table1_sources()[1];
        for k in 1..20 {
            let mid = 0.5 * (p.lattice_state(k) + p.lattice_state(k + 1));
            assert_eq!(eta(mid, &p), HittingTime::Periods(k + 1));
        }
    }

    #[test]
    fn eta_near_and_above_u_star() {
        let p = table1_sources()[0];
        let cap = eta_cap(&p);
        assert_eq!(eta(p.u_star() * (1.0 - 1e-17), &p), HittingTime::Never);
        let near = eta(p.u_star() * (1.0 - 1e-15), &p).periods().unwrap();
        assert!(near <= cap && near > 40);
        assert_eq!(eta(p.u_star(), &p), HittingTime::Never);
        assert_eq!(eta(2.0 * p.u_star(), &p), HittingTime::Never);
    }

    #[test]
    fn eta_below_u_is_one() {
        let p = table1_sources()[2];
        for x in [0.0, 0.3 * p.u(), 0.999 * p.u()] {
            assert_eq!(eta(x, &p), HittingTime::Periods(1));
        }
    }

    #[test]
    fn index_at_u() {
        for p in table1_sources() {
            let expected = (1.0 - p.alpha()) * p.u() / p.cost();
            assert!(close(whittle_index(p.u(), &p), expected, 1e-13));
            assert!(close(lattice_index(1, &p).unwrap(), expected, 1e-13));
        }
    }

    #[test]
    fn index_on_lattice_closed_form() {
        for p in table1_sources() {
            for k in 1..=30u64 {
                let x = p.lattice_state(k);
                let expected = (x - k as f64 * p.alpha().powi(k as i32) * p.u()) / p.cost();
                assert!(close(whittle_index(x, &p), expected, 1e-11), "k={k}");
            }
        }
    }

    #[test]
    fn index_limit_at_u_star() {
        for p in table1_sources() {
            let x = p.u_star() * (1.0 - 1e-9);
            let g = whittle_index(x, &p);
            assert!(close(g, p.u_star() / p.cost(), 1e-7), "{g}");
            assert_eq!(whittle_index(p.u_star(), &p), p.u_star() / p.cost());
            assert_eq!(
                whittle_index(3.0 * p.u_star(), &p),
                3.0 * p.u_star() / p.cost()
            );
        }
    }

    #[test]
    fn lattice_step_two_source_one() {
        let p = table1_sources()[0];
        let a = (-0.7f64).exp();
        let x2 = (1.0 - a * a) * 250.0 / 0.7;
        let expected = x2 - 2.0 * a * a * p.u();
        assert!(close(lattice_index(2, &p).unwrap(), expected, 1e-13));
    }

    #[test]
    fn lattice_index_rejects_zero() {
        let p = table1_sources()[0];
        assert_eq!(lattice_index(0, &p), Err(ParamError::ZeroLatticeStep));
    }

    #[test]
    fn lattice_and_general_forms_agree() {
        for p in table1_sources() {
            for k in 1..=40 {
                let a = lattice_index(k, &p).unwrap();
                let b = whittle_index(p.lattice_state(k), &p);
                assert!(
                    (a - b).abs() <= 1e-10 * a.abs().max(1.0),
                    "k={k}: {a} vs {b}"
                );
            }
        }
    }

    #[test]
    fn monotone_and_bounded_on_dense_grid() {
        for p in table1_sources() {
            let (lo, hi) = (p.u(), p.u_star());
            let lower = p.one_minus_alpha() * p.u() / p.cost();
            let upper = p.u_star() / p.cost();
            let mut prev = f64::NEG_INFINITY;
            for i in 0..=10_000 {
                let x = lo + (hi - lo) * i as f64 / 10_000.0;
                let g = whittle_index(x, &p);
                assert!(g >= prev - 1e-12 * g.abs(), "x={x}: {g} < {prev}");
                assert!(g >= lower * (1.0 - 1e-12) && g <= upper * (1.0 + 1e-12));
                prev = g;
            }
        }
    }

    #[test]
    fn continuous_across_lattice_points() {
        let p = table1_sources()[3];
        for k in 1..25 {
            let x = p.lattice_state(k);
            let left = whittle_index(x * (1.0 - 1e-12), &p);
            let right = whittle_index(x * (1.0 + 1e-12), &p);
            assert!(close(left, right, 1e-9), "k={k}: {left} vs {right}");
        }
    }

    mod props {
        use super::super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn cost_scaling_divides_index(
                l in 1.0f64..500.0, xi in 0.05f64..3.0, mu in 0.05f64..2.0,
                c in 0.1f64..10.0, frac in 0.0f64..1.2,
            ) {
                let p = SourceParams::new(l, xi, mu, 1.0, 1.0).unwrap();
                let q = p.with_cost(c).unwrap();
                let x = p.u() + frac * (p.u_star() - p.u());
                let a = whittle_index(x, &p) / c;
                let b = whittle_index(x, &q);
                prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(1.0));
            }

            #[test]
            fn common_utility_scaling_preserves_ranking(
                s in 0.01f64..100.0, k1 in 1u64..20, k2 in 1u64..20, k3 in 1u64..20,
            ) {
                let base = crate::model::table1_sources();
                let ks = [k1, k2, k3, k1 + k2];
                let rank = |scale: f64| {
                    let mut v: Vec<(f64, usize)> = base.iter().zip(ks).enumerate().map(|(i, (p, k))| {
                        let q = SourceParams::new(p.lambda_rate(), p.xi_mean() * scale, p.mu(), p.cost(), p.period()).unwrap();
                        (whittle_index(q.lattice_state(k), &q), i)
                    }).collect();
                    v.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                    v.into_iter().map(|(_, i)| i).collect::<Vec<_>>()
                };
                prop_assert_eq!(rank(1.0), rank(s));
            }

            #[test]
            fn nondecreasing_in_state(
                mu in 0.02f64..3.0, a in 0.0f64..1.5, b in 0.0f64..1.5,
            ) {
                let p = SourceParams::new(100.0, 1.0, mu, 1.0, 1.0).unwrap();
                let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
                let (x, y) = (lo * p.u_star(), hi * p.u_star());
                prop_assert!(whittle_index(x, &p) <= whittle_index(y, &p) * (1.0 + 1e-12) + 1e-12);
            }
        }
    }
}
