//! Finite differences for `theta_t - theta_xx = f(theta) - m theta` on a
//! truncated line with zero-flux ends, plus level-set front tracking.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::phase_plane::Bistable;
use crate::profile::Profile;
use crate::wave::FishermanDensity;

/// Minimum distance between a tracked front and either end of the domain.
pub const BOUNDARY_MARGIN: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Grid1D {
    pub x_lo: f64,
    pub x_hi: f64,
    pub n: usize,
    pub dx: f64,
    pub dt: f64,
}

impl Grid1D {
    pub fn new(x_lo: f64, x_hi: f64, dx: f64, dt: f64) -> Result<Self> {
        if !(x_hi > x_lo) || !(dx > 0.0) || !(dt > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid needs x_lo < x_hi and positive steps (got [{x_lo}, {x_hi}], dx = {dx}, dt = {dt})"
            )));
        }
        let cells = ((x_hi - x_lo) / dx).round() as usize;
        Ok(Self {
            x_lo,
            x_hi: x_lo + cells as f64 * dx,
            n: cells + 1,
            dx,
            dt,
        })
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_lo + i as f64 * self.dx
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.x(i)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Scheme {
    /// Implicit diffusion, explicit reaction and harvest.
    #[default]
    Imex,
    /// Forward Euler, subject to `dt <= dx^2 / 2`.
    Explicit,
}

/// One-step integrator owning its buffers and the factorised diffusion matrix.
pub struct Stepper<'a> {
    f: &'a Bistable,
    grid: Grid1D,
    scheme: Scheme,
    /// Modified super-diagonal and pivots of `I - dt D2`.
    upper_star: Vec<f64>,
    pivot: Vec<f64>,
    rhs: Vec<f64>,
    clip_mass: f64,
}

impl<'a> Stepper<'a> {
    pub fn new(f: &'a Bistable, grid: Grid1D, scheme: Scheme) -> Result<Self> {
        let r = grid.dt / (grid.dx * grid.dx);
        if scheme == Scheme::Explicit && r > 0.5 {
            return Err(Error::CflViolation {
                dt: grid.dt,
                dx: grid.dx,
            });
        }
        let n = grid.n;
        let (lower, diag, upper) = neumann_operator(n, r);
        let mut upper_star = vec![0.0; n];
        let mut pivot = vec![0.0; n];
        pivot[0] = diag[0];
        upper_star[0] = upper[0] / pivot[0];
        for i in 1..n {
            pivot[i] = diag[i] - lower[i] * upper_star[i - 1];
            upper_star[i] = if i + 1 < n { upper[i] / pivot[i] } else { 0.0 };
        }
        Ok(Self {
            f,
            grid,
            scheme,
            upper_star,
            pivot,
            rhs: vec![0.0; n],
            clip_mass: 0.0,
        })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    /// Total mass removed or added by clipping to `[0, 1]` so far.
    pub fn clip_mass(&self) -> f64 {
        self.clip_mass
    }

    pub fn step(&mut self, theta: &mut [f64], harvest: &[f64]) {
        let n = self.grid.n;
        let dt = self.grid.dt;
        let r = dt / (self.grid.dx * self.grid.dx);
        for i in 0..n {
            let u = theta[i];
            self.rhs[i] = u + dt * (self.f.f(u) - harvest[i] * u);
        }
        match self.scheme {
            Scheme::Imex => {
                let lower_at = |i: usize| if i + 1 == n { 2.0 * r } else { r };
                theta[0] = self.rhs[0] / self.pivot[0];
                for i in 1..n {
                    theta[i] = (self.rhs[i] + lower_at(i) * theta[i - 1]) / self.pivot[i];
                }
                for i in (0..n - 1).rev() {
                    theta[i] -= self.upper_star[i] * theta[i + 1];
                }
            }
            Scheme::Explicit => {
                let lap = |i: usize| {
                    let left = if i == 0 { theta[1] } else { theta[i - 1] };
                    let right = if i + 1 == n { theta[n - 2] } else { theta[i + 1] };
                    left - 2.0 * theta[i] + right
                };
                let next: Vec<f64> = (0..n).map(|i| self.rhs[i] + r * lap(i)).collect();
                theta.copy_from_slice(&next);
            }
        }
        for u in theta.iter_mut() {
            let clipped = u.clamp(0.0, 1.0);
            self.clip_mass += (clipped - *u).abs() * self.grid.dx;
            *u = clipped;
        }
    }
}

/// Sub-, main and super-diagonal of `I - r D2` with reflected ghost nodes.
fn neumann_operator(n: usize, r: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut lower = vec![-r; n];
    let diag = vec![1.0 + 2.0 * r; n];
    let mut upper = vec![-r; n];
    lower[0] = 0.0;
    upper[0] = -2.0 * r;
    lower[n - 1] = -2.0 * r;
    upper[n - 1] = 0.0;
    (lower, diag, upper)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontTrace {
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    pub fitted_speed: f64,
    pub fit_residual: f64,
}

/// Leftmost `x` where `values` crosses `level`, by linear interpolation.
pub fn level_crossing(x: &[f64], values: &[f64], level: f64) -> Option<f64> {
    values.windows(2).enumerate().find_map(|(i, w)| {
        let (a, b) = (w[0] - level, w[1] - level);
        if a == 0.0 {
            Some(x[i])
        } else if a * b < 0.0 || (b == 0.0 && a != 0.0) {
            Some(x[i] + (x[i + 1] - x[i]) * a / (a - b))
        } else {
            None
        }
    })
}

/// Least-squares slope and RMS residual of `positions` against `times`.
pub fn fit_line(times: &[f64], positions: &[f64]) -> (f64, f64) {
    let n = times.len() as f64;
    if times.len() < 2 {
        return (0.0, 0.0);
    }
    let tm = times.iter().sum::<f64>() / n;
    let xm = positions.iter().sum::<f64>() / n;
    let (mut stt, mut stx) = (0.0, 0.0);
    for (t, x) in times.iter().zip(positions) {
        stt += (t - tm) * (t - tm);
        stx += (t - tm) * (x - xm);
    }
    let slope = if stt > 0.0 { stx / stt } else { 0.0 };
    let ss: f64 = times
        .iter()
        .zip(positions)
        .map(|(t, x)| (x - xm - slope * (t - tm)).powi(2))
        .sum();
    (slope, (ss / n).sqrt())
}

/// Front positions of each snapshot; the speed is fitted on the second half of the time span.
pub fn front_trace(x: &[f64], times: &[f64], snapshots: &[Vec<f64>], level: f64) -> Result<FrontTrace> {
    let mut positions = Vec::with_capacity(snapshots.len());
    for snap in snapshots {
        let pos = level_crossing(x, snap, level).ok_or(Error::NoCrossing {
            lo: x[0],
            hi: x[x.len() - 1],
        })?;
        positions.push(pos);
    }
    let (speed, residual) = fit_second_half(times, &positions);
    Ok(FrontTrace {
        times: times.to_vec(),
        positions,
        fitted_speed: speed,
        fit_residual: residual,
    })
}

fn fit_second_half(times: &[f64], positions: &[f64]) -> (f64, f64) {
    let Some(&t_end) = times.last() else {
        return (0.0, 0.0);
    };
    let t_mid = times[0] + 0.5 * (t_end - times[0]);
    let start = times.iter().position(|&t| t >= t_mid).unwrap_or(0);
    fit_line(&times[start..], &positions[start..])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulationOptions {
    pub dx: f64,
    pub dt: f64,
    pub t_end: f64,
    pub level: f64,
    pub scheme: Scheme,
    /// Time between recorded snapshots.
    pub output_every: f64,
    /// Room around the initial front and its expected drift.
    pub half_width: f64,
    /// Shift of the initial profile against the harvesting density.
    pub initial_shift: f64,
}

impl Default for SimulationOptions {
    fn default() -> Self {
        Self {
            dx: 0.05,
            dt: 0.0025,
            t_end: 100.0,
            level: 0.5,
            scheme: Scheme::Imex,
            output_every: 1.0,
            half_width: 20.0,
            initial_shift: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Snapshot {
    pub t: f64,
    pub theta: Vec<f64>,
    pub harvest: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Simulation {
    pub grid: Grid1D,
    pub trace: FrontTrace,
    pub snapshots: Vec<Snapshot>,
    pub clip_mass: f64,
    /// `sup |theta(t, x) - Theta(x - c t)|` over recorded times, when a reference is available.
    pub shape_error: Option<f64>,
}

/// Time loop shared by all runs. `harvest(t, x)` is sampled at the start of each step,
/// `reference(t, x)` at each snapshot.
fn run(
    f: &Bistable,
    grid: Grid1D,
    opts: &SimulationOptions,
    initial: &dyn Fn(f64) -> f64,
    harvest: &dyn Fn(f64, f64) -> f64,
    reference: Option<&dyn Fn(f64, f64) -> f64>,
) -> Result<Simulation> {
    let x = grid.nodes();
    let mut theta: Vec<f64> = x.iter().map(|&xi| initial(xi).clamp(0.0, 1.0)).collect();
    let mut m = vec![0.0; grid.n];
    let mut stepper = Stepper::new(f, grid, opts.scheme)?;
    let steps = (opts.t_end / grid.dt).round() as usize;
    let stride = ((opts.output_every / grid.dt).round() as usize).max(1);
    let mut snapshots = Vec::new();
    let mut times = Vec::new();
    let mut positions = Vec::new();
    let mut shape_error: f64 = 0.0;
    for k in 0..=steps {
        let t = k as f64 * grid.dt;
        for (mi, &xi) in m.iter_mut().zip(&x) {
            *mi = harvest(t, xi);
        }
        if k % stride == 0 || k == steps {
            let pos = level_crossing(&x, &theta, opts.level).ok_or(Error::NoCrossing {
                lo: grid.x_lo,
                hi: grid.x_hi,
            })?;
            let margin = (pos - grid.x_lo).min(grid.x_hi - pos);
            if margin < BOUNDARY_MARGIN {
                return Err(Error::FrontLeftDomain { x: pos, t, margin });
            }
            if let Some(r) = reference {
                let err = x
                    .iter()
                    .zip(&theta)
                    .map(|(&xi, &u)| (u - r(t, xi)).abs())
                    .fold(0.0, f64::max);
                shape_error = shape_error.max(err);
            }
            times.push(t);
            positions.push(pos);
            snapshots.push(Snapshot {
                t,
                theta: theta.clone(),
                harvest: m.clone(),
            });
        }
        if k < steps {
            stepper.step(&mut theta, &m);
        }
    }
    let (fitted_speed, fit_residual) = fit_second_half(&times, &positions);
    Ok(Simulation {
        grid,
        trace: FrontTrace {
            times,
            positions,
            fitted_speed,
            fit_residual,
        },
        snapshots,
        clip_mass: stepper.clip_mass(),
        shape_error: reference.map(|_| shape_error),
    })
}

/// Unharvested run from a tanh step of unit width centred at the origin.
pub fn simulate_baseline(f: &Bistable, opts: &SimulationOptions) -> Result<Simulation> {
    let (left, right) = drift_room(f, opts);
    let grid = Grid1D::new(-left, right, opts.dx, opts.dt)?;
    let initial = |x: f64| 0.5 * (1.0 + x.tanh());
    run(f, grid, opts, &initial, &|_, _| 0.0, None)
}

/// Room to the left and right of the initial front for an unharvested run.
fn drift_room(f: &Bistable, opts: &SimulationOptions) -> (f64, f64) {
    let drift = (1.2 * cubic_front_speed(f.eta()).abs() + 0.02) * opts.t_end;
    if f.eta() <= 0.5 {
        (opts.half_width + drift, opts.half_width)
    } else {
        (opts.half_width, opts.half_width + drift)
    }
}

/// Run started on the profile with harvesting `M(x - c t)`, or without harvesting when
/// `density` is `None`.
pub fn simulate_reversed(
    f: &Bistable,
    profile: &dyn Profile,
    density: Option<&FishermanDensity>,
    c: f64,
    opts: &SimulationOptions,
) -> Result<Simulation> {
    let front0 = crate::numerics::find_root(
        |s| profile.theta(s) - opts.level,
        profile.window().0,
        profile.window().1,
        1e-12,
    )
    .unwrap_or(0.0);
    let (left_room, right_room) = match density {
        Some(_) => (opts.half_width, opts.half_width + c.max(0.0) * opts.t_end),
        None => drift_room(f, opts),
    };
    let grid = Grid1D::new(front0 - left_room, front0 + right_room, opts.dx, opts.dt)?;
    let initial = |x: f64| profile.theta(x - opts.initial_shift);
    match density {
        Some(d) => {
            let harvest = |t: f64, x: f64| d.eval(x - c * t);
            let reference = |t: f64, x: f64| profile.theta(x - c * t);
            run(f, grid, opts, &initial, &harvest, Some(&reference))
        }
        None => run(f, grid, opts, &initial, &|_, _| 0.0, None),
    }
}

/// `sqrt(2) (eta - 1/2)`: speed of the unharvested cubic front, negative when `1` invades.
pub fn cubic_front_speed(eta: f64) -> f64 {
    std::f64::consts::SQRT_2 * (eta - 0.5)
}
