//! Equilibrium certificate for a constructed wave: the Bellman solution,
//! feedback and value identities on the harvesting support, and a family of
//! deviation probes.

use rayon::prelude::*;
use serde::Serialize;

use crate::control::hjb::{hjb_solve, HjbGrid, ValueGrid};
use crate::control::payoff::{payoff, Strategy};
use crate::control::{legendre, CostModel};
use crate::error::{Error, Result};
use crate::profile::Profile;
use crate::phase_plane::Bistable;
use crate::wave::{c0_of_lambda, construct_wave, FishermanDensity, WaveOptions, WaveProfile};

/// `s_-`: the largest `s <= 0` at which the affine continuation of the bridge
/// drops below the profile.
pub fn s_minus(wave: &WaveProfile) -> Result<f64> {
    let b = wave.bridge;
    let gap = |s: f64| b.theta0 + b.slope * s - wave.theta(s);
    let step = 1e-2;
    // the line is negative left of -theta0/slope while the profile stays positive
    let lo = -b.theta0 / b.slope - 1.0;
    let mut hi = -step;
    while gap(hi) >= 0.0 {
        hi -= step;
        if hi < lo {
            return Err(Error::NoCrossing { lo, hi: 0.0 });
        }
    }
    let root = crate::numerics::find_root(gap, hi, hi + step, 1e-13)?;
    Ok(root)
}

/// `2 sqrt(m_k / d_under)`.
pub fn lambda_threshold(m_k: f64, d_under: f64) -> Result<f64> {
    if !m_k.is_finite() || !(d_under > 0.0) {
        return Err(Error::UnboundedCurvature);
    }
    Ok(2.0 * (m_k / d_under).sqrt())
}

/// Discount above which the payoff is strictly concave in the control, from `sup |Theta''|`.
pub fn concavity_threshold(wave: &WaveProfile, d_under: f64) -> Result<f64> {
    lambda_threshold(wave.curvature_bound(), d_under)
}

/// `|Theta'(s0) - lambda L'(c)|`.
pub fn critical_point_check(profile: &dyn Profile, cost: &CostModel, s0: f64) -> f64 {
    (profile.theta_prime(s0) - cost.bridge_slope()).abs()
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    pub ds: f64,
    pub control_points: usize,
    pub control_halfwidth: f64,
    /// Extra room left of `s_-` and right of `s1`.
    pub margin: f64,
    pub probe_amplitudes: Vec<f64>,
    pub probe_horizons: Vec<f64>,
    pub gap_tol: f64,
    /// Feedback residual allowed, in control-grid cells.
    pub feedback_cells: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            ds: 1e-2,
            control_points: 401,
            control_halfwidth: 3.0,
            margin: 20.0,
            probe_amplitudes: vec![0.1, 0.5, 1.0],
            probe_horizons: vec![1.0, 5.0, 20.0],
            gap_tol: 1e-6,
            feedback_cells: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Probe {
    pub name: String,
    /// `J(c) - J(alpha)`.
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    /// Every probe is non-improving and the feedback matches the wave speed.
    Certified,
    /// Some probe strictly improves on the constant control.
    CounterexampleFound,
    /// No improving probe, but the feedback check failed.
    Inconclusive,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquilibriumReport {
    pub feedback_residual: f64,
    pub value_identity_residual: f64,
    pub probes: Vec<Probe>,
    pub lambda0: Option<f64>,
    pub s_minus: Option<f64>,
    pub certified: bool,
    #[serde(skip)]
    pub verdict: Verdict,
    #[serde(skip)]
    pub value_grid: ValueGrid,
}

impl EquilibriumReport {
    pub fn min_gap(&self) -> f64 {
        self.probes.iter().map(|p| p.gap).fold(f64::INFINITY, f64::min)
    }
}

/// Grid spacing close to `target` that puts both `0` and `s1` on nodes.
fn aligned_step(s1: f64, target: f64) -> f64 {
    let cells = (s1 / target).round().max(1.0);
    s1 / cells
}

pub fn verify_equilibrium(
    wave: &WaveProfile,
    density: &FishermanDensity,
    cost: &CostModel,
    opts: &VerifyOptions,
) -> Result<EquilibriumReport> {
    let c = cost.c;
    let s1 = density.s1();
    let sm = s_minus(wave).ok();
    let left = sm.unwrap_or_else(|| wave.window().0.max(-40.0));
    let ds = aligned_step(s1, opts.ds);
    let lo_cells = ((opts.margin - left) / ds).ceil();
    let hi_cells = ((s1 + opts.margin) / ds).ceil();
    let lipschitz = (wave.bridge.slope.max(max_slope(wave))) / cost.lambda;
    let grid = HjbGrid {
        control_points: opts.control_points,
        control_halfwidth: opts.control_halfwidth,
        marginal_box: Some(2.0 * lipschitz),
        ..HjbGrid::new(-lo_cells * ds, hi_cells * ds, ds)
    };
    let vg = hjb_solve(wave, cost, grid)?;
    let ham = legendre(cost.lagrangian.clone())?;
    let dv = vg.derivative();
    let (i0, i1) = (vg.node(0.0), vg.node(s1));
    let lc = cost.cost(c);
    let mut feedback_residual: f64 = 0.0;
    let mut value_identity_residual: f64 = 0.0;
    for ((&d, &v), &s) in dv.iter().zip(&vg.v).zip(&vg.s).take(i1 + 1).skip(i0) {
        feedback_residual = feedback_residual.max((ham.dh(d) - c).abs());
        value_identity_residual = value_identity_residual.max((v - (wave.theta(s) - lc) / cost.lambda).abs());
    }

    let starts = [("left", 0.0), ("mid", 0.5 * s1), ("right", s1)];
    let mut specs: Vec<(String, f64, Strategy<'_>)> = Vec::new();
    for &(label, s0) in &starts {
        for &amp in &opts.probe_amplitudes {
            for sign in [1.0, -1.0] {
                for &h in &opts.probe_horizons {
                    specs.push((
                        format!("pulse{}{amp}c_T{h}_{label}", if sign > 0.0 { '+' } else { '-' }),
                        s0,
                        Strategy::Switch {
                            first: c + sign * amp * c,
                            then: c,
                            at: h / cost.lambda,
                        },
                    ));
                }
            }
        }
        if let Some(sm) = sm {
            specs.push((
                format!("drift_to_s_minus_{label}"),
                s0,
                Strategy::Switch {
                    first: 0.0,
                    then: c,
                    at: (s0 - sm) / c,
                },
            ));
        }
    }
    let greedy_controls = vg.policy.clone();
    let greedy = |s: f64| vg.interpolate(&greedy_controls, s);
    let probes = specs
        .par_iter()
        .map(|(name, s0, strat)| {
            let base = payoff(wave, cost, *s0, &Strategy::Constant(c), None)?;
            let alt = payoff(wave, cost, *s0, strat, None)?;
            Ok(Probe {
                name: name.clone(),
                gap: base.value - alt.value,
            })
        })
        .chain(starts.par_iter().map(|&(label, s0)| {
            let base = payoff(wave, cost, s0, &Strategy::Constant(c), None)?;
            let alt = payoff(wave, cost, s0, &Strategy::Feedback(&greedy), None)?;
            Ok(Probe {
                name: format!("greedy_{label}"),
                gap: base.value - alt.value,
            })
        }))
        .collect::<Result<Vec<_>>>()?;

    let lambda0 = match cost.lagrangian.curvature_floor() {
        Some(d) => Some(concavity_threshold(wave, d)?),
        None => None,
    };
    let no_improvement = probes.iter().all(|p| p.gap >= -opts.gap_tol);
    let feedback_ok = feedback_residual <= opts.feedback_cells * vg.control_step;
    let verdict = match (no_improvement, feedback_ok) {
        (true, true) => Verdict::Certified,
        (false, _) => Verdict::CounterexampleFound,
        (true, false) => Verdict::Inconclusive,
    };
    Ok(EquilibriumReport {
        feedback_residual,
        value_identity_residual,
        probes,
        lambda0,
        s_minus: sm,
        certified: verdict == Verdict::Certified,
        verdict,
        value_grid: vg,
    })
}

/// One speed examined by [`certified_range`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeSample {
    pub c: f64,
    pub certified: bool,
    pub s_minus: Option<f64>,
    pub theta_at_s_minus: Option<f64>,
    pub min_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CertifiedRange {
    pub lambda: f64,
    pub c0: f64,
    pub c_lo: f64,
    pub c_hi: f64,
    pub samples: Vec<RangeSample>,
}

fn sample_speed(
    f: &Bistable,
    cost: &CostModel,
    wave_opts: &WaveOptions,
    verify_opts: &VerifyOptions,
) -> RangeSample {
    let c = cost.c;
    let built = construct_wave(f, cost, 0, wave_opts);
    let Ok((wave, density)) = built else {
        return RangeSample {
            c,
            certified: false,
            s_minus: None,
            theta_at_s_minus: None,
            min_gap: None,
        };
    };
    let report = verify_equilibrium(&wave, &density, cost, verify_opts);
    let sm = s_minus(&wave).ok();
    RangeSample {
        c,
        certified: report.as_ref().map(|r| r.certified).unwrap_or(false),
        s_minus: sm,
        theta_at_s_minus: sm.map(|s| wave.theta(s)),
        min_gap: report.ok().map(|r| r.min_gap()),
    }
}

/// Certified speeds at a fixed discount: a scan of `fractions * c0`, followed by
/// `refinements` bisection steps on the upper edge of the first certified run.
pub fn certified_range(
    f: &Bistable,
    cost: &CostModel,
    fractions: &[f64],
    refinements: usize,
    wave_opts: &WaveOptions,
    verify_opts: &VerifyOptions,
) -> Result<CertifiedRange> {
    let lambda = cost.lambda;
    let c0 = c0_of_lambda(f, cost.lagrangian.as_ref(), lambda, &wave_opts.manifold)?.speed;
    if !c0.is_finite() {
        return Err(Error::InvalidParameter("extinction speed is unbounded".into()));
    }
    let mut samples: Vec<RangeSample> = fractions
        .par_iter()
        .map(|&q| sample_speed(f, &cost.with_speed(q * c0), wave_opts, verify_opts))
        .collect();
    samples.sort_by(|a, b| a.c.total_cmp(&b.c));
    let first = samples
        .iter()
        .position(|s| s.certified)
        .ok_or(Error::NoConvergence {
            iterations: samples.len(),
            update: f64::NAN,
        })?;
    let mut last = first;
    while last + 1 < samples.len() && samples[last + 1].certified {
        last += 1;
    }
    let c_lo = samples[first].c;
    let mut c_hi = samples[last].c;
    if last + 1 < samples.len() {
        let mut fail = samples[last + 1].c;
        for _ in 0..refinements {
            let mid = 0.5 * (c_hi + fail);
            let s = sample_speed(f, &cost.with_speed(mid), wave_opts, verify_opts);
            if s.certified {
                c_hi = mid;
            } else {
                fail = mid;
            }
            samples.push(s);
        }
        samples.sort_by(|a, b| a.c.total_cmp(&b.c));
    }
    Ok(CertifiedRange {
        lambda,
        c0,
        c_lo,
        c_hi,
        samples,
    })
}

/// Discount at or above the concavity threshold of its own wave.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConvexRegime {
    pub lambda: f64,
    pub c: f64,
    pub lambda0: f64,
    pub iterations: usize,
}

/// Iterates `lambda <- factor * lambda0(wave(lambda, c_fraction * c0(lambda)))` from `start`.
pub fn convex_regime(
    f: &Bistable,
    cost: &CostModel,
    factor: f64,
    c_fraction: f64,
    start: f64,
    wave_opts: &WaveOptions,
) -> Result<ConvexRegime> {
    let d_under = cost.lagrangian.curvature_floor().ok_or(Error::UnboundedCurvature)?;
    let mut lambda = start;
    for it in 1..=50 {
        let probe = CostModel::new(cost.lagrangian.clone(), lambda, 1.0)?;
        let c0 = c0_of_lambda(f, cost.lagrangian.as_ref(), lambda, &wave_opts.manifold)?.speed;
        let c = c_fraction * c0;
        let (wave, _) = construct_wave(f, &probe.with_speed(c), 0, wave_opts)?;
        let lambda0 = concavity_threshold(&wave, d_under)?;
        let next = factor * lambda0;
        if (next - lambda).abs() <= 1e-6 * lambda {
            return Ok(ConvexRegime {
                lambda,
                c,
                lambda0,
                iterations: it,
            });
        }
        lambda = next;
    }
    Err(Error::NoConvergence {
        iterations: 50,
        update: f64::NAN,
    })
}

fn max_slope(wave: &WaveProfile) -> f64 {
    let (lo, hi) = wave.window();
    let n = ((hi - lo) / 1e-2) as usize;
    (0..=n)
        .map(|i| wave.theta_prime(lo + i as f64 * 1e-2).abs())
        .fold(0.0, f64::max)
}
