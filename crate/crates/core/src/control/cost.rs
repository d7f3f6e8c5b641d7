//! Movement costs and their convex conjugates.

use std::fmt::Debug;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::find_root;

/// Convex, superlinear movement cost with `L(0) = 0`.
pub trait Lagrangian: Debug + Send + Sync {
    fn value(&self, a: f64) -> f64;
    fn derivative(&self, a: f64) -> f64;

    /// `inf L''`, when known.
    fn curvature_floor(&self) -> Option<f64> {
        None
    }

    /// `(kappa, m)` when `L(a) = kappa |a|^m`.
    fn power_law(&self) -> Option<(f64, f64)> {
        None
    }
}

/// `L(a) = kappa |a|^m` with `m > 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLagrangian {
    kappa: f64,
    exponent: f64,
}

impl PowerLagrangian {
    pub fn new(kappa: f64, exponent: f64) -> Result<Self> {
        if !(kappa > 0.0) || !(exponent > 1.0) || !kappa.is_finite() || !exponent.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "power cost needs kappa > 0 and exponent > 1 (got {kappa}, {exponent})"
            )));
        }
        Ok(Self { kappa, exponent })
    }

    /// `a^2 / 2`.
    pub fn quadratic() -> Self {
        Self {
            kappa: 0.5,
            exponent: 2.0,
        }
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn exponent(&self) -> f64 {
        self.exponent
    }
}

impl Lagrangian for PowerLagrangian {
    fn value(&self, a: f64) -> f64 {
        self.kappa * a.abs().powf(self.exponent)
    }

    fn derivative(&self, a: f64) -> f64 {
        self.kappa * self.exponent * a.abs().powf(self.exponent - 1.0) * a.signum()
    }

    fn curvature_floor(&self) -> Option<f64> {
        (self.exponent == 2.0).then_some(2.0 * self.kappa)
    }

    fn power_law(&self) -> Option<(f64, f64)> {
        Some((self.kappa, self.exponent))
    }
}

/// Cost model of a single harvester: movement cost, discount and the wave speed it faces.
#[derive(Debug, Clone)]
pub struct CostModel {
    pub lagrangian: Arc<dyn Lagrangian>,
    pub lambda: f64,
    pub c: f64,
}

impl CostModel {
    pub fn new(lagrangian: Arc<dyn Lagrangian>, lambda: f64, c: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!("discount must be > 0 (got {lambda})")));
        }
        if !c.is_finite() {
            return Err(Error::InvalidParameter(format!("speed must be finite (got {c})")));
        }
        Ok(Self { lagrangian, lambda, c })
    }

    pub fn quadratic(lambda: f64, c: f64) -> Result<Self> {
        Self::new(Arc::new(PowerLagrangian::quadratic()), lambda, c)
    }

    pub fn with_speed(&self, c: f64) -> Self {
        Self { c, ..self.clone() }
    }

    #[inline]
    pub fn cost(&self, a: f64) -> f64 {
        self.lagrangian.value(a)
    }

    #[inline]
    pub fn marginal_cost(&self, a: f64) -> f64 {
        self.lagrangian.derivative(a)
    }

    /// Bridge slope `lambda L'(c)`.
    pub fn bridge_slope(&self) -> f64 {
        self.lambda * self.marginal_cost(self.c)
    }
}

/// Legendre transform `H(p) = sup_a (p a - L(a))` with its maximiser `dH(p)`.
#[derive(Debug, Clone)]
pub enum Hamiltonian {
    Power { kappa: f64, exponent: f64 },
    Numeric(Arc<dyn Lagrangian>),
}

impl Hamiltonian {
    pub fn h(&self, p: f64) -> f64 {
        match *self {
            Hamiltonian::Power { kappa, exponent: m } => {
                (m - 1.0) * kappa.powf(-1.0 / (m - 1.0)) * (p.abs() / m).powf(m / (m - 1.0))
            }
            Hamiltonian::Numeric(ref l) => {
                let a = self.dh(p);
                p * a - l.value(a)
            }
        }
    }

    pub fn dh(&self, p: f64) -> f64 {
        match *self {
            Hamiltonian::Power { kappa, exponent: m } => {
                p.signum() * (p.abs() / (m * kappa)).powf(1.0 / (m - 1.0))
            }
            Hamiltonian::Numeric(ref l) => inverse_marginal(l.as_ref(), p),
        }
    }
}

/// Solves `L'(a) = p` for a strictly increasing, unbounded `L'`.
pub fn inverse_marginal(l: &dyn Lagrangian, p: f64) -> f64 {
    if p == 0.0 {
        return 0.0;
    }
    let mut lo = -1.0;
    let mut hi = 1.0;
    while l.derivative(lo) > p {
        lo *= 2.0;
    }
    while l.derivative(hi) < p {
        hi *= 2.0;
    }
    find_root(|a| l.derivative(a) - p, lo, hi, 1e-15).unwrap_or(0.5 * (lo + hi))
}

/// Grid on which the marginal cost is required to be increasing.
const MONOTONICITY_GRID: usize = 201;

pub fn legendre(lagrangian: Arc<dyn Lagrangian>) -> Result<Hamiltonian> {
    let mut prev = f64::NEG_INFINITY;
    for i in 0..MONOTONICITY_GRID {
        let a = -10.0 + 20.0 * i as f64 / (MONOTONICITY_GRID - 1) as f64;
        let d = lagrangian.derivative(a);
        if !(d > prev) {
            return Err(Error::NonConvexLagrangian(a));
        }
        prev = d;
    }
    if lagrangian.value(0.0) != 0.0 {
        return Err(Error::InvalidParameter("movement cost must vanish at rest".into()));
    }
    Ok(match lagrangian.power_law() {
        Some((kappa, exponent)) => Hamiltonian::Power { kappa, exponent },
        None => Hamiltonian::Numeric(lagrangian),
    })
}
