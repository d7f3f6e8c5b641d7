//! Stationary Bellman equation in the co-moving frame,
//! `lambda V + c V' - H(V') = Theta`, by a semi-Lagrangian scheme.
//!
//! One time step of length `dt` moves the harvester from `s` to
//! `s + dt (a - c)`; the running reward integrates `Theta` linearly along the
//! step with the exact discount weights, so affine profiles are reproduced
//! exactly. The discrete fixed point is found by policy iteration (each policy
//! gives a tridiagonal linear system because foot points stay within one cell),
//! followed by plain value-iteration sweeps that certify the residual.

use rayon::prelude::*;
use serde::Serialize;

use crate::control::CostModel;
use crate::error::{Error, Result};
use crate::profile::Profile;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HjbGrid {
    pub s_lo: f64,
    pub s_hi: f64,
    pub ds: f64,
    pub control_points: usize,
    /// Controls span `[c - halfwidth, c + halfwidth]`.
    pub control_halfwidth: f64,
    /// Optional bound `|L'(a)| <= box` on admissible controls.
    pub marginal_box: Option<f64>,
    pub tol: f64,
    pub max_iterations: usize,
}

impl HjbGrid {
    pub fn new(s_lo: f64, s_hi: f64, ds: f64) -> Self {
        Self {
            s_lo,
            s_hi,
            ds,
            control_points: 401,
            control_halfwidth: 3.0,
            marginal_box: None,
            tol: 1e-10,
            max_iterations: 500,
        }
    }
}

/// Discrete value function on a uniform grid.
#[derive(Debug, Clone, Serialize)]
pub struct ValueGrid {
    pub s: Vec<f64>,
    pub v: Vec<f64>,
    /// Maximising control at each node.
    pub policy: Vec<f64>,
    pub ds: f64,
    pub dt: f64,
    /// Spacing of the control grid.
    pub control_step: f64,
    pub lipschitz_est: f64,
    pub iterations: usize,
    pub last_update: f64,
}

impl ValueGrid {
    /// Centred differences, one-sided at the ends.
    pub fn derivative(&self) -> Vec<f64> {
        let n = self.v.len();
        (0..n)
            .map(|i| {
                let (a, b) = (i.saturating_sub(1), (i + 1).min(n - 1));
                (self.v[b] - self.v[a]) / (self.s[b] - self.s[a])
            })
            .collect()
    }

    /// Linear interpolation with clamping.
    pub fn interpolate(&self, values: &[f64], s: f64) -> f64 {
        let x = ((s - self.s[0]) / self.ds).clamp(0.0, (self.s.len() - 1) as f64);
        let i = (x.floor() as usize).min(self.s.len() - 2);
        let t = x - i as f64;
        values[i] * (1.0 - t) + values[i + 1] * t
    }

    /// Index of the node nearest to `s`.
    pub fn node(&self, s: f64) -> usize {
        (((s - self.s[0]) / self.ds).round().max(0.0) as usize).min(self.s.len() - 1)
    }
}

/// Semi-Lagrangian operator for one profile and cost model.
pub struct HjbSolver<'a> {
    cost: &'a CostModel,
    grid: HjbGrid,
    s: Vec<f64>,
    theta: Vec<f64>,
    dtheta: Vec<f64>,
    controls: Vec<f64>,
    control_cost: Vec<f64>,
    dt: f64,
    beta: f64,
    weight: f64,
    moment: f64,
}

/// One candidate transition: reward and interpolation stencil.
struct Transition {
    reward: f64,
    /// Neighbour offset (-1, 0 or +1) and its interpolation weight.
    offset: isize,
    theta: f64,
}

impl<'a> HjbSolver<'a> {
    pub fn new(profile: &dyn Profile, cost: &'a CostModel, grid: HjbGrid) -> Result<Self> {
        if !(grid.ds > 0.0) || !(grid.s_hi > grid.s_lo) || grid.control_points < 2 {
            return Err(Error::InvalidParameter(format!("invalid value grid {grid:?}")));
        }
        let n = ((grid.s_hi - grid.s_lo) / grid.ds).round() as usize + 1;
        let s: Vec<f64> = (0..n).map(|i| grid.s_lo + i as f64 * grid.ds).collect();
        let theta: Vec<f64> = s.iter().map(|&x| profile.theta(x)).collect();
        let dtheta: Vec<f64> = s.iter().map(|&x| profile.theta_prime(x)).collect();
        let c = cost.c;
        let m = grid.control_points;
        let half = (m - 1) / 2;
        let step = grid.control_halfwidth / half as f64;
        let mut controls: Vec<f64> = (0..m)
            .map(|j| c + (j as f64 - half as f64) * step)
            .filter(|&a| grid.marginal_box.is_none_or(|b| cost.marginal_cost(a).abs() <= b))
            .collect();
        if !controls.contains(&0.0) {
            controls.push(0.0);
        }
        if !controls.contains(&c) {
            controls.push(c);
        }
        controls.sort_by(f64::total_cmp);
        let speed = controls.iter().map(|a| (a - c).abs()).fold(0.0, f64::max);
        let dt = if speed > 0.0 { 0.5 * grid.ds / speed } else { grid.ds };
        let lambda = cost.lambda;
        let x = lambda * dt;
        let beta = (-x).exp();
        let weight = -(-x).exp_m1() / lambda;
        let moment = (1.0 - beta - beta * x) / (lambda * lambda);
        let control_cost = controls.iter().map(|&a| cost.cost(a)).collect();
        Ok(Self {
            cost,
            grid,
            s,
            theta,
            dtheta,
            controls,
            control_cost,
            dt,
            beta,
            weight,
            moment,
        })
    }

    pub fn controls(&self) -> &[f64] {
        &self.controls
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Contraction factor `e^{-lambda dt}`.
    pub fn contraction(&self) -> f64 {
        self.beta
    }

    fn transition(&self, i: usize, j: usize) -> Transition {
        let v = self.controls[j] - self.cost.c;
        let reward = self.weight * (self.theta[i] - self.control_cost[j]) + v * self.dtheta[i] * self.moment;
        let frac = (v * self.dt / self.grid.ds).abs();
        let n = self.s.len();
        let offset = if v > 0.0 && i + 1 < n {
            1
        } else if v < 0.0 && i > 0 {
            -1
        } else {
            0
        };
        Transition {
            reward,
            offset,
            theta: if offset == 0 { 0.0 } else { frac },
        }
    }

    fn q_value(&self, v: &[f64], i: usize, j: usize) -> f64 {
        let t = self.transition(i, j);
        let nb = (i as isize + t.offset) as usize;
        t.reward + self.beta * ((1.0 - t.theta) * v[i] + t.theta * v[nb])
    }

    /// Bellman operator: returns the updated values and maximising control indices.
    pub fn apply(&self, v: &[f64]) -> (Vec<f64>, Vec<usize>) {
        (0..v.len())
            .into_par_iter()
            .map(|i| {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0;
                for j in 0..self.controls.len() {
                    let q = self.q_value(v, i, j);
                    if q > best {
                        best = q;
                        arg = j;
                    }
                }
                (best, arg)
            })
            .unzip()
    }

    /// Best value at node `i` when its own entry is solved for exactly.
    fn local_solve(&self, v: &[f64], i: usize) -> (f64, usize) {
        let mut best = f64::NEG_INFINITY;
        let mut arg = 0;
        for j in 0..self.controls.len() {
            let t = self.transition(i, j);
            let nb = (i as isize + t.offset) as usize;
            let stay = self.beta * (1.0 - t.theta);
            let q = if t.offset == 0 {
                t.reward / (1.0 - self.beta)
            } else {
                (t.reward + self.beta * t.theta * v[nb]) / (1.0 - stay)
            };
            if q > best {
                best = q;
                arg = j;
            }
        }
        (best, arg)
    }

    /// Alternating Gauss-Seidel sweeps; each carries information across the whole grid
    /// along one direction of motion.
    fn sweep_to_convergence(&self, v: &mut [f64]) -> Result<Vec<usize>> {
        let n = v.len();
        let mut policy = vec![0; n];
        for pass in 0..self.grid.max_iterations {
            let mut change: f64 = 0.0;
            let forward = pass % 2 == 0;
            for k in 0..n {
                let i = if forward { k } else { n - 1 - k };
                let (best, arg) = self.local_solve(v, i);
                change = change.max((best - v[i]).abs());
                v[i] = best;
                policy[i] = arg;
            }
            if change < self.grid.tol && pass > 0 {
                return Ok(policy);
            }
        }
        Err(Error::NoConvergence {
            iterations: self.grid.max_iterations,
            update: f64::NAN,
        })
    }

    /// Value of a fixed policy: tridiagonal solve of `V = r + beta P V`.
    fn evaluate(&self, policy: &[usize]) -> Vec<f64> {
        let n = self.s.len();
        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            let t = self.transition(i, policy[i]);
            rhs[i] = t.reward;
            diag[i] = 1.0 - self.beta * (1.0 - t.theta);
            match t.offset {
                1 => upper[i] = -self.beta * t.theta,
                -1 => lower[i] = -self.beta * t.theta,
                _ => {}
            }
        }
        crate::numerics::solve_tridiagonal(&lower, &diag, &upper, &rhs)
    }

    pub fn solve(&self) -> Result<ValueGrid> {
        let n = self.s.len();
        let c_index = self
            .controls
            .iter()
            .position(|&a| a == self.cost.c)
            .unwrap_or(0);
        let mut v = self.evaluate(&vec![c_index; n]);
        let mut policy = self.sweep_to_convergence(&mut v)?;
        v = self.evaluate(&policy);
        let mut iterations = 0;
        loop {
            iterations += 1;
            let improved: Vec<(usize, f64)> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let current = self.q_value(&v, i, policy[i]);
                    let mut best = current;
                    let mut best_j = policy[i];
                    for j in 0..self.controls.len() {
                        let q = self.q_value(&v, i, j);
                        if q > best + 1e-14 * (1.0 + best.abs()) {
                            best = q;
                            best_j = j;
                        }
                    }
                    (best_j, best - current)
                })
                .collect();
            let mut changed = false;
            let mut gain: f64 = 0.0;
            for (i, (j, g)) in improved.into_iter().enumerate() {
                if j != policy[i] {
                    policy[i] = j;
                    changed = true;
                    gain = gain.max(g);
                }
            }
            // improvements below the sweep tolerance cannot move the fixed point past it
            if !changed || gain < self.grid.tol {
                break;
            }
            v = self.evaluate(&policy);
            if iterations >= self.grid.max_iterations {
                return Err(Error::NoConvergence {
                    iterations,
                    update: f64::NAN,
                });
            }
        }
        // certify with value-iteration sweeps
        let mut update = f64::INFINITY;
        let mut sweeps = 0;
        while update >= self.grid.tol {
            let (next, arg) = self.apply(&v);
            update = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            policy = arg;
            sweeps += 1;
            if sweeps > self.grid.max_iterations {
                return Err(Error::NoConvergence {
                    iterations: iterations + sweeps,
                    update,
                });
            }
        }
        let lipschitz_est = v
            .windows(2)
            .map(|w| (w[1] - w[0]).abs() / self.grid.ds)
            .fold(0.0, f64::max);
        let control_step = self
            .controls
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        Ok(ValueGrid {
            s: self.s.clone(),
            v,
            policy: policy.iter().map(|&j| self.controls[j]).collect(),
            ds: self.grid.ds,
            dt: self.dt,
            control_step,
            lipschitz_est,
            iterations: iterations + sweeps,
            last_update: update,
        })
    }
}

pub fn hjb_solve(profile: &dyn Profile, cost: &CostModel, grid: HjbGrid) -> Result<ValueGrid> {
    HjbSolver::new(profile, cost, grid)?.solve()
}
