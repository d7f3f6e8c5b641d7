//! Coordinated harvesting: the fleet spreads out affinely instead of holding
//! the travelling formation, and the stock recovers behind it.

use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::control::{verify_equilibrium, CostModel, Lagrangian, PowerLagrangian, VerifyOptions};
use crate::error::{Error, Result};
use crate::numerics::integrate_adaptive;
use crate::pde::{Grid1D, Scheme, Stepper};
use crate::phase_plane::Bistable;
use crate::profile::Profile;
use crate::wave::{construct_wave, slope_maximum, FishermanDensity, WaveOptions, WaveProfile};

/// Spreading velocity `x / (2 s1 + t)`.
pub fn alpha_co(t: f64, x: f64, s1: f64) -> f64 {
    x / (2.0 * s1 + t)
}

/// Position at time `t` of a harvester following [`alpha_co`] from `x0`.
pub fn spreading_path(t: f64, x0: f64, s1: f64) -> f64 {
    x0 * (1.0 + t / (2.0 * s1))
}

/// Density transported by the spreading flow: `(2 s1 / (2 s1 + t)) M((2 s1 / (2 s1 + t)) x)`.
pub fn m_co(t: f64, x: f64, density: &FishermanDensity) -> f64 {
    let r = 2.0 * density.s1() / (2.0 * density.s1() + t);
    r * density.eval(r * x)
}

/// Right edge of the transported support.
pub fn spread_support(t: f64, s1: f64) -> f64 {
    spreading_path(t, s1, s1)
}

/// `int m_co(t, x) dx` by adaptive quadrature over the exact support.
pub fn spread_mass(t: f64, density: &FishermanDensity) -> f64 {
    let hi = spread_support(t, density.s1());
    integrate_adaptive(&|x| m_co(t, x, density), 0.0, hi, 1e-13, 64).0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoopConfig {
    pub s1: f64,
    pub lambda0: f64,
    pub lambda: f64,
    pub q: f64,
    pub eta_under: f64,
}

impl CoopConfig {
    pub fn new(s1: f64, lambda0: f64, lambda: f64, eta_under: f64) -> Result<Self> {
        if !(s1 > 0.0) || !(lambda > 0.0) || !(lambda <= lambda0) || !(eta_under > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "need s1 > 0 and 0 < lambda <= lambda0 (got s1 = {s1}, lambda = {lambda}, lambda0 = {lambda0})"
            )));
        }
        Ok(Self {
            s1,
            lambda0,
            lambda,
            q: lambda0 / lambda,
            eta_under,
        })
    }
}

/// Cost `(eta_under / 2) |a|^{2 q}` with `q = lambda0 / lambda`, at speed 1. It keeps
/// `L(1)` and `lambda L'(1)`, hence the wave, equal to the base model.
pub fn lagrangian_family(lambda: f64, lambda0: f64, eta_under: f64) -> Result<CostModel> {
    if !(lambda > 0.0 && lambda <= lambda0) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < lambda <= lambda0 (got {lambda}, {lambda0})"
        )));
    }
    let q = lambda0 / lambda;
    let lq = PowerLagrangian::new(0.5 * eta_under, 2.0 * q)?;
    let l1 = PowerLagrangian::new(0.5 * eta_under, 2.0)?;
    let value_gap = (lq.value(1.0) - l1.value(1.0)).abs();
    let slope_gap = (lambda * lq.derivative(1.0) - lambda0 * l1.derivative(1.0)).abs();
    if value_gap > 1e-14 || slope_gap > 1e-12 * lambda0 {
        return Err(Error::InvalidParameter(format!(
            "cost family lost its invariants (value gap {value_gap:e}, slope gap {slope_gap:e})"
        )));
    }
    CostModel::new(Arc::new(lq), lambda, 1.0)
}

/// Largest discount on `fractions * lambda_max` whose speed-1 wave under the base cost is
/// certified, where `lambda_max L1'(1)` is the largest slope of the unstable manifold.
pub fn base_discount(f: &Bistable, fractions: &[f64], wave_opts: &WaveOptions) -> Result<f64> {
    let eta_under = f.eta_under();
    let top = slope_maximum(f, 1.0, 0, &wave_opts.manifold)?.ok_or(Error::SpeedTooLarge {
        target: f64::NAN,
        available: 0.0,
        k: 0,
    })?;
    let lambda_max = top / eta_under;
    let mut sorted = fractions.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    for q in sorted {
        let lambda = q * lambda_max;
        let cost = lagrangian_family(lambda, lambda, eta_under)?;
        let Ok((wave, density)) = construct_wave(f, &cost, 0, wave_opts) else {
            continue;
        };
        if verify_equilibrium(&wave, &density, &cost, &VerifyOptions::default())?.certified {
            return Ok(lambda);
        }
    }
    Err(Error::NoConvergence {
        iterations: fractions.len(),
        update: f64::NAN,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoopOptions {
    pub dx: f64,
    pub dt: f64,
    /// Recovery margin: the stock must reach `1 - 2 delta` on the fleet's support.
    pub delta: f64,
    pub samples: usize,
    pub output_every: f64,
    /// Discounted payoffs are integrated to `min(ln(1 / tail) / lambda, cap / lambda)`.
    pub tail: f64,
    pub cap: f64,
}

impl Default for CoopOptions {
    fn default() -> Self {
        Self {
            dx: 0.1,
            dt: 0.05,
            delta: 0.05,
            samples: 20,
            output_every: 5.0,
            tail: 1e-8,
            cap: 200.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoopSample {
    pub x0: f64,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "J_co")]
    pub j_co: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Invasion {
    #[serde(rename = "T_detect")]
    pub t_detect: f64,
    pub level: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpaceTimeFrame {
    pub t: f64,
    pub theta: Vec<f64>,
    pub harvest: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CooperationReport {
    pub lambda: f64,
    pub lambda0: f64,
    pub q: f64,
    pub samples: Vec<CoopSample>,
    pub invasion: Invasion,
    pub certified: bool,
    /// Largest `|int m_co(t) - int M| / int M` over recorded times.
    #[serde(skip)]
    pub mass_defect: f64,
    #[serde(skip)]
    pub horizon: f64,
    #[serde(skip)]
    pub grid: Grid1D,
    #[serde(skip)]
    pub frames: Vec<SpaceTimeFrame>,
}

impl CooperationReport {
    /// Share of samples where coordination strictly beats the equilibrium value.
    pub fn improved_fraction(&self) -> f64 {
        let wins = self.samples.iter().filter(|s| s.gap > 0.0).count();
        wins as f64 / self.samples.len().max(1) as f64
    }
}

/// Runs the stock under the spreading fleet from `theta(0) = Theta` and compares each
/// sampled harvester's coordinated payoff with its equilibrium value.
pub fn compare_payoffs(
    f: &Bistable,
    wave: &WaveProfile,
    density: &FishermanDensity,
    config: &CoopConfig,
    opts: &CoopOptions,
) -> Result<CooperationReport> {
    let s1 = density.s1();
    let lambda = config.lambda;
    let cost = lagrangian_family(lambda, config.lambda0, config.eta_under)?;
    let l_speed = cost.cost(1.0);
    let horizon = ((1.0 / opts.tail).ln() / lambda).min(opts.cap / lambda);
    let grid = Grid1D::new(-40.0, spread_support(horizon, s1) + 40.0, opts.dx, opts.dt)?;
    let x = grid.nodes();
    let mut theta: Vec<f64> = x.iter().map(|&xi| wave.theta(xi)).collect();
    let mut m = vec![0.0; grid.n];
    let mut stepper = Stepper::new(f, grid, Scheme::Imex)?;

    let x0s: Vec<f64> = (0..opts.samples)
        .map(|i| s1 * (i as f64 + 0.5) / opts.samples as f64)
        .collect();
    let running: Vec<f64> = x0s.iter().map(|&x0| cost.cost(x0 / (2.0 * s1))).collect();
    let mut acc = vec![0.0; x0s.len()];
    let mut last = vec![0.0; x0s.len()];
    let sample_theta = |theta: &[f64], xt: f64| {
        let pos = ((xt - grid.x_lo) / grid.dx).clamp(0.0, (grid.n - 1) as f64);
        let i = (pos.floor() as usize).min(grid.n - 2);
        let w = pos - i as f64;
        (1.0 - w) * theta[i] + w * theta[i + 1]
    };

    let base_mass = spread_mass(0.0, density);
    let mut mass_defect: f64 = 0.0;
    let recovery = 1.0 - 2.0 * opts.delta;
    let mut invasion: Option<Invasion> = None;
    let mut worst_level = f64::INFINITY;
    let steps = (horizon / grid.dt).ceil() as usize;
    let stride = ((opts.output_every / grid.dt).round() as usize).max(1);
    let mut frames = Vec::new();
    for k in 0..=steps {
        let t = k as f64 * grid.dt;
        for (mi, &xi) in m.iter_mut().zip(&x) {
            *mi = m_co(t, xi, density);
        }
        let weight = if k == 0 || k == steps { 0.5 } else { 1.0 };
        let discount = (-lambda * t).exp();
        for (j, &x0) in x0s.iter().enumerate() {
            let g = sample_theta(&theta, spreading_path(t, x0, s1)) - running[j];
            acc[j] += weight * grid.dt * discount * g;
            last[j] = g;
        }
        if k % stride == 0 || k == steps {
            let edge = spread_support(t, s1);
            let level = x
                .iter()
                .zip(&theta)
                .filter(|(xi, _)| (0.0..=edge).contains(*xi))
                .map(|(_, &u)| u)
                .fold(f64::INFINITY, f64::min);
            worst_level = worst_level.min(level);
            if invasion.is_none() && level >= recovery {
                invasion = Some(Invasion { t_detect: t, level });
            }
            let mass = spread_mass(t, density);
            mass_defect = mass_defect.max((mass - base_mass).abs() / base_mass);
            frames.push(SpaceTimeFrame {
                t,
                theta: theta.clone(),
                harvest: m.clone(),
            });
        }
        if k < steps {
            stepper.step(&mut theta, &m);
        }
    }
    let t_end = steps as f64 * grid.dt;
    let tail_weight = (-lambda * t_end).exp() / lambda;
    let samples: Vec<CoopSample> = x0s
        .par_iter()
        .enumerate()
        .map(|(j, &x0)| {
            let j_co = acc[j] + last[j] * tail_weight;
            let v = (wave.theta(x0) - l_speed) / lambda;
            CoopSample {
                x0,
                v,
                j_co,
                gap: j_co - v,
            }
        })
        .collect();
    let invasion = invasion.ok_or(Error::InvasionFailed {
        level: frames
            .last()
            .map(|fr| {
                let edge = spread_support(fr.t, s1);
                x.iter()
                    .zip(&fr.theta)
                    .filter(|(xi, _)| (0.0..=edge).contains(*xi))
                    .map(|(_, &u)| u)
                    .fold(f64::INFINITY, f64::min)
            })
            .unwrap_or(worst_level),
        t: t_end,
    })?;
    let certified = samples.iter().all(|s| s.gap > 0.0);
    Ok(CooperationReport {
        lambda,
        lambda0: config.lambda0,
        q: config.q,
        samples,
        invasion,
        certified,
        mass_defect,
        horizon: t_end,
        grid,
        frames,
    })
}

/// `sup |Theta_{L_q, lambda} - Theta_{L_1, lambda0}|` over the base wave's window.
pub fn family_invariance(
    f: &Bistable,
    base: &WaveProfile,
    lambda: f64,
    lambda0: f64,
    wave_opts: &WaveOptions,
) -> Result<f64> {
    let cost = lagrangian_family(lambda, lambda0, f.eta_under())?;
    let (other, _) = construct_wave(f, &cost, 0, wave_opts)?;
    let (lo, hi) = base.window();
    let n = 4000;
    Ok((0..=n)
        .map(|i| {
            let s = lo + (hi - lo) * i as f64 / n as f64;
            (base.theta(s) - other.theta(s)).abs()
        })
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(lambda0: f64) -> (Bistable, WaveProfile, FishermanDensity) {
        let f = Bistable::cubic(0.3).unwrap();
        let cost = lagrangian_family(lambda0, lambda0, f.eta_under()).unwrap();
        let (w, d) = construct_wave(&f, &cost, 0, &WaveOptions::default()).unwrap();
        (f, w, d)
    }

    #[test]
    fn spreading_field() {
        assert_eq!(alpha_co(3.0, 0.0, 2.0), 0.0);
        assert!((spreading_path(4.0, 2.0, 2.0) - 4.0).abs() < 1e-15);
        assert!(alpha_co(1e12, 1.0, 2.0) < 1e-11);
        // the path solves x' = alpha_co(t, x)
        let (x0, s1, t, h) = (0.7, 3.0, 2.5, 1e-5);
        let dx = (spreading_path(t + h, x0, s1) - spreading_path(t - h, x0, s1)) / (2.0 * h);
        assert!((dx - alpha_co(t, spreading_path(t, x0, s1), s1)).abs() < 1e-9);
    }

    #[test]
    fn transported_density() {
        let (_, _, d) = base(0.1);
        let s1 = d.s1();
        for i in 0..=10 {
            let x = s1 * i as f64 / 10.0;
            assert_eq!(m_co(0.0, x, &d), d.eval(x));
        }
        let sup_half = (0..=4000)
            .map(|i| m_co(2.0 * s1, 2.0 * s1 * i as f64 / 4000.0, &d))
            .fold(0.0, f64::max);
        assert!((sup_half - 0.5 * d.sup()).abs() < 1e-3 * d.sup());
        assert_eq!(m_co(2.0 * s1, 2.0 * s1 + 1e-9, &d), 0.0);
        let m0 = spread_mass(0.0, &d);
        for t in [s1, 10.0 * s1] {
            assert!((spread_mass(t, &d) - m0).abs() <= 1e-8 * m0);
        }
    }

    #[test]
    fn family_preserves_cost_at_unit_speed() {
        let eu = 0.137;
        let one = lagrangian_family(0.4, 0.4, eu).unwrap();
        assert!((one.cost(0.3) - 0.5 * eu * 0.09).abs() < 1e-15);
        let half = lagrangian_family(0.2, 0.4, eu).unwrap();
        assert!((half.marginal_cost(1.0) - 2.0 * eu).abs() < 1e-14);
        assert!((0.2 * half.marginal_cost(1.0) - 0.4 * eu).abs() < 1e-14);
        assert!((half.cost(1.0) - 0.5 * eu).abs() < 1e-15);
        assert!(lagrangian_family(0.5, 0.4, eu).is_err());
    }

    #[test]
    fn wave_is_invariant_along_the_family() {
        let (f, w, _) = base(0.1);
        for q in [2.0, 4.0, 8.0] {
            let gap = family_invariance(&f, &w, 0.1 / q, 0.1, &WaveOptions::default()).unwrap();
            assert!(gap <= 1e-8, "q = {q}: {gap}");
        }
    }

    #[test]
    fn config_checks() {
        let c = CoopConfig::new(40.0, 0.1, 0.025, 0.137).unwrap();
        assert_eq!(c.q, 4.0);
        assert!(CoopConfig::new(40.0, 0.1, 0.2, 0.137).is_err());
    }
}
