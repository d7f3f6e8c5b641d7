//! Discounted payoff of a single harvester facing a frozen profile.

use crate::control::CostModel;
use crate::error::{Error, Result};
use crate::numerics::{default_truncation, discounted_integral, integrate, IntegratorOptions};
use crate::profile::Profile;

/// Control of a harvester, in the physical velocity variable.
pub enum Strategy<'a> {
    Constant(f64),
    /// `first` on `[0, at)`, then `then` forever.
    Switch { first: f64, then: f64, at: f64 },
    /// State feedback `s -> a(s)` in the co-moving frame.
    Feedback(&'a (dyn Fn(f64) -> f64 + Sync)),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PayoffValue {
    pub value: f64,
    pub tail_bound: f64,
}

/// Quadrature tolerance used for payoff integrals.
pub const PAYOFF_TOL: f64 = 1e-11;

/// Payoff `int_0^inf e^{-lambda t} (Theta(s(t)) - L(a(t))) dt` with `s' = a - c`, `s(0) = s0`.
/// `t_trunc` defaults to the horizon where `e^{-lambda T}/lambda = 1e-8`.
pub fn payoff(
    profile: &dyn Profile,
    cost: &CostModel,
    s0: f64,
    strategy: &Strategy<'_>,
    t_trunc: Option<f64>,
) -> Result<PayoffValue> {
    let lambda = cost.lambda;
    let horizon = t_trunc.unwrap_or_else(|| default_truncation(lambda));
    if !s0.is_finite() {
        return Err(Error::BlowUp { t: 0.0 });
    }
    match *strategy {
        Strategy::Constant(a) => open_loop(profile, cost, s0, a, horizon),
        Strategy::Switch { first, then, at } => {
            if !(at > 0.0) {
                return open_loop(profile, cost, s0, then, horizon);
            }
            let v = first - cost.c;
            let head_cost = cost.cost(first);
            let (head, _) = crate::numerics::integrate_adaptive(
                &|t: f64| (-lambda * t).exp() * (profile.theta(s0 + v * t) - head_cost),
                0.0,
                at,
                PAYOFF_TOL,
                ((lambda * at).ceil() as usize * 4).clamp(8, 4096),
            );
            let tail = open_loop(profile, cost, s0 + v * at, then, horizon)?;
            let w = (-lambda * at).exp();
            Ok(PayoffValue {
                value: head + w * tail.value,
                tail_bound: w * tail.tail_bound,
            })
        }
        Strategy::Feedback(policy) => {
            let c = cost.c;
            let path = integrate(
                |_, y: &[f64; 2]| [policy(y[0]) - c, 0.0],
                [s0, 0.0],
                (0.0, horizon),
                &[],
                &IntegratorOptions::with_step(1e-2),
            )?;
            if path.y.iter().any(|y| !y[0].is_finite() || y[0].abs() > 1e9) {
                return Err(Error::BlowUp { t: horizon });
            }
            let g = |t: f64| {
                let s = path.eval(t.min(horizon))[0];
                profile.theta(s) - cost.cost(policy(s))
            };
            let r = discounted_integral(g, lambda, horizon, PAYOFF_TOL)?;
            Ok(PayoffValue {
                value: r.value,
                tail_bound: r.tail_bound,
            })
        }
    }
}

fn open_loop(profile: &dyn Profile, cost: &CostModel, s0: f64, a: f64, horizon: f64) -> Result<PayoffValue> {
    let v = a - cost.c;
    let la = cost.cost(a);
    if v == 0.0 {
        let value = (profile.theta(s0) - la) / cost.lambda;
        return Ok(PayoffValue {
            value,
            tail_bound: 0.0,
        });
    }
    let r = discounted_integral(|t| profile.theta(s0 + v * t) - la, cost.lambda, horizon, PAYOFF_TOL)?;
    Ok(PayoffValue {
        value: r.value,
        tail_bound: r.tail_bound,
    })
}
