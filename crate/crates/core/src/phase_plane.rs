//! Bistable reaction term and the planar wave ODE `u' = p, p' = -f(u) - c p`.
//!
//! The unstable manifold of `(0, 0)` and the stable manifold of `(1, 0)` are
//! computed by seeding along the exact eigenvectors and integrating with the
//! RK4 kernel from [`crate::numerics`].

use std::cell::Cell;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{
    hermite, integrate, segment_index, Crossing, Event, EventHit, IntegratorOptions, State,
};

/// Cubic bistable reaction `f(u) = u (u - eta) (1 - u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bistable {
    eta: f64,
    eta_under: f64,
}

impl Bistable {
    pub fn cubic(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::InvalidEta(eta));
        }
        let disc = ((1.0 + eta) * (1.0 + eta) - 3.0 * eta).sqrt();
        Ok(Self {
            eta,
            eta_under: (1.0 + eta - disc) / 3.0,
        })
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    /// Critical point of `f` inside `(0, eta)`.
    pub fn eta_under(&self) -> f64 {
        self.eta_under
    }

    /// Critical point of `f` inside `(eta, 1)`.
    pub fn eta_over(&self) -> f64 {
        let disc = ((1.0 + self.eta) * (1.0 + self.eta) - 3.0 * self.eta).sqrt();
        (1.0 + self.eta + disc) / 3.0
    }

    #[inline]
    pub fn f(&self, u: f64) -> f64 {
        u * (u - self.eta) * (1.0 - u)
    }

    #[inline]
    pub fn df(&self, u: f64) -> f64 {
        -3.0 * u * u + 2.0 * (1.0 + self.eta) * u - self.eta
    }

    /// `F(u) = int_0^u f`.
    #[inline]
    pub fn antiderivative(&self, u: f64) -> f64 {
        let u2 = u * u;
        u2 * u * (1.0 + self.eta) / 3.0 - u2 * u2 / 4.0 - self.eta * u2 / 2.0
    }

    /// `sup |f|` on `[0, 1]`.
    pub fn sup_norm(&self) -> f64 {
        self.f(self.eta_under).abs().max(self.f(self.eta_over()).abs())
    }

    pub fn ensure_invasive(&self) -> Result<()> {
        let total = self.antiderivative(1.0);
        if total > 0.0 {
            Ok(())
        } else {
            Err(Error::NotInvasive(total))
        }
    }

    pub fn energy(&self, pt: PhasePoint) -> f64 {
        0.5 * pt.p * pt.p + self.antiderivative(pt.u)
    }

    /// Threshold speed `2 sqrt(f'(eta))` separating spiral and node behaviour at `(eta, 0)`.
    pub fn spiral_threshold(&self) -> f64 {
        2.0 * self.df(self.eta).sqrt()
    }

    /// Zero of `F` in `(eta, 1)`; the zero-energy level closes there.
    pub fn energy_turning_point(&self) -> f64 {
        crate::numerics::find_root(|u| self.antiderivative(u), self.eta, 1.0, 1e-15)
            .unwrap_or(1.0)
    }

    /// Upper half of the zero-energy curve `p = sqrt(-2 F(u))` bounding the invariant region.
    pub fn invariant_region_boundary(&self, n: usize) -> Vec<PhasePoint> {
        let top = self.energy_turning_point();
        (0..n.max(2))
            .map(|i| {
                let u = top * i as f64 / (n.max(2) - 1) as f64;
                PhasePoint {
                    u,
                    p: (-2.0 * self.antiderivative(u)).max(0.0).sqrt(),
                }
            })
            .collect()
    }

    pub fn linearize(&self, u_star: f64, c: f64) -> Result<EigenData> {
        let slope = self.df(u_star);
        let disc = c * c - 4.0 * slope;
        if disc < 0.0 {
            return Err(Error::ComplexEigenvalues { u_star, c });
        }
        let root = disc.sqrt();
        let lam_plus = 0.5 * (-c + root);
        let lam_minus = 0.5 * (-c - root);
        Ok(EigenData {
            lam_plus,
            lam_minus,
            v_plus: [1.0, lam_plus],
            v_minus: [1.0, lam_minus],
        })
    }

    pub fn classify_eta(&self, c: f64) -> Result<EtaClass> {
        if !(c > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "classification at (eta, 0) needs c > 0 (got {c})"
            )));
        }
        let threshold = self.spiral_threshold();
        Ok(if c < threshold {
            EtaClass {
                kind: EtaKind::SpiralSink,
                degenerate: false,
            }
        } else {
            EtaClass {
                kind: EtaKind::StableNode,
                degenerate: c == threshold,
            }
        })
    }

    /// Planar field of the travelling-wave ODE at speed `c`.
    pub fn wave_field(&self, c: f64) -> impl Fn(f64, &State) -> State + '_ {
        move |_, y| [y[1], -self.f(y[0]) - c * y[1]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub u: f64,
    pub p: f64,
}

impl From<State> for PhasePoint {
    fn from(y: State) -> Self {
        Self { u: y[0], p: y[1] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EigenData {
    pub lam_plus: f64,
    pub lam_minus: f64,
    pub v_plus: [f64; 2],
    pub v_minus: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EtaKind {
    SpiralSink,
    StableNode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EtaClass {
    pub kind: EtaKind,
    /// Set exactly at the boundary speed `c = 2 sqrt(f'(eta))`.
    pub degenerate: bool,
}

/// Sampled phase-plane curve with strictly increasing abscissa and Hermite dense output.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub c: f64,
    s: Vec<f64>,
    y: Vec<State>,
    dy: Vec<State>,
}

impl Trajectory {
    pub(crate) fn from_parts(c: f64, mut s: Vec<f64>, mut y: Vec<State>, mut dy: Vec<State>) -> Self {
        if s.len() > 1 && s[0] > s[s.len() - 1] {
            s.reverse();
            y.reverse();
            dy.reverse();
        }
        // drop duplicated abscissae produced by events landing on a step end
        let mut keep = vec![true; s.len()];
        for i in 1..s.len() {
            if s[i] <= s[i - 1] {
                keep[i] = false;
            }
        }
        let mut it = keep.iter();
        s.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        y.retain(|_| *it.next().unwrap());
        let mut it = keep.iter();
        dy.retain(|_| *it.next().unwrap());
        Self { c, s, y, dy }
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn abscissae(&self) -> &[f64] {
        &self.s
    }

    pub fn s_first(&self) -> f64 {
        self.s[0]
    }

    pub fn s_last(&self) -> f64 {
        self.s[self.s.len() - 1]
    }

    pub fn point(&self, i: usize) -> PhasePoint {
        self.y[i].into()
    }

    pub fn first(&self) -> PhasePoint {
        self.point(0)
    }

    pub fn last(&self) -> PhasePoint {
        self.point(self.len() - 1)
    }

    pub fn samples(&self) -> impl Iterator<Item = (f64, PhasePoint)> + '_ {
        self.s.iter().zip(&self.y).map(|(&s, &y)| (s, y.into()))
    }

    /// Dense output, clamped to the sampled range.
    pub fn eval(&self, s: f64) -> PhasePoint {
        self.eval_state(s).into()
    }

    pub(crate) fn eval_state(&self, s: f64) -> State {
        if self.s.len() == 1 {
            return self.y[0];
        }
        let i = segment_index(&self.s, s);
        hermite(
            self.s[i],
            &self.y[i],
            &self.dy[i],
            self.s[i + 1],
            &self.y[i + 1],
            &self.dy[i + 1],
            s,
        )
    }

    /// Derivative of the dense output (a quadratic on each segment).
    pub fn eval_derivative(&self, s: f64) -> State {
        let i = segment_index(&self.s, s);
        let (s0, s1) = (self.s[i], self.s[i + 1]);
        let h = s1 - s0;
        let t = ((s - s0) / h).clamp(0.0, 1.0);
        let d00 = (6.0 * t * t - 6.0 * t) / h;
        let d10 = 3.0 * t * t - 4.0 * t + 1.0;
        let d01 = (-6.0 * t * t + 6.0 * t) / h;
        let d11 = 3.0 * t * t - 2.0 * t;
        let mut out = [0.0; 2];
        for (k, o) in out.iter_mut().enumerate() {
            *o = d00 * self.y[i][k] + d10 * self.dy[i][k] + d01 * self.y[i + 1][k] + d11 * self.dy[i + 1][k];
        }
        out
    }

    /// Copy with every abscissa moved by `ds`.
    pub fn shifted(&self, ds: f64) -> Self {
        Self {
            c: self.c,
            s: self.s.iter().map(|s| s + ds).collect(),
            y: self.y.clone(),
            dy: self.dy.clone(),
        }
    }

    /// Restriction to `[lo, hi]`, with interpolated end samples.
    pub fn window(&self, lo: f64, hi: f64) -> Self {
        let lo = lo.max(self.s_first());
        let hi = hi.min(self.s_last());
        let mut s = vec![lo];
        let mut y = vec![self.eval_state(lo)];
        let mut dy = vec![self.eval_derivative(lo)];
        for i in 0..self.len() {
            if self.s[i] > lo && self.s[i] < hi {
                s.push(self.s[i]);
                y.push(self.y[i]);
                dy.push(self.dy[i]);
            }
        }
        if hi > lo {
            s.push(hi);
            y.push(self.eval_state(hi));
            dy.push(self.eval_derivative(hi));
        }
        Self { c: self.c, s, y, dy }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ManifoldOptions {
    /// Offset of the seed along the eigenvector.
    pub seed_offset: f64,
    /// Radius of the terminal ball around `(eta, 0)`.
    pub r_stop: f64,
    /// Integration aborts once `u` exceeds this ceiling.
    pub u_ceiling: f64,
    pub integrator: IntegratorOptions,
    /// Stop the unstable manifold after this many local maxima of the slope.
    pub slope_maxima_limit: Option<usize>,
    /// Stop the unstable manifold after this many local maxima of `u`.
    pub u_maxima_limit: Option<usize>,
}

impl Default for ManifoldOptions {
    fn default() -> Self {
        Self {
            seed_offset: 1e-7,
            r_stop: 1e-6,
            u_ceiling: 1.0 + 1e-3,
            integrator: IntegratorOptions::default(),
            slope_maxima_limit: None,
            u_maxima_limit: None,
        }
    }
}

/// Largest energy tolerated at the unstable seed.
const SEED_ENERGY_TOL: f64 = 1e-12;

// event order: ball, ceiling, return to origin, slope maximum, u maximum
const EV_CEILING: usize = 1;
const EV_SLOPE_MAX: usize = 3;
const EV_U_MAX: usize = 4;

/// Unstable manifold together with the refined extremum events found on the way.
#[derive(Debug, Clone)]
pub(crate) struct UnstableRun {
    pub trajectory: Trajectory,
    pub hits: Vec<EventHit>,
}

pub(crate) fn unstable_run(f: &Bistable, c: f64, opts: &ManifoldOptions) -> Result<UnstableRun> {
    if !(c >= 0.0) {
        return Err(Error::InvalidParameter(format!("wave speed must be >= 0 (got {c})")));
    }
    let eig = f.linearize(0.0, c)?;
    let eps = opts.seed_offset;
    let seed = [eps * eig.v_plus[0], eps * eig.v_plus[1]];
    let seed_energy = f.energy(seed.into());
    if seed_energy > SEED_ENERGY_TOL {
        return Err(Error::SeedTooLarge { energy: seed_energy });
    }
    let s_seed = eps.ln() / eig.lam_plus;
    let s_len = 2.0 * s_seed.abs() + 2000.0 + 100.0 * c + if c > 0.0 { 60.0 / c } else { 0.0 };

    let eta = f.eta();
    let r2 = opts.r_stop * opts.r_stop;
    let ceiling = opts.u_ceiling;
    let u_seed = seed[0];
    let left_seed = Cell::new(false);
    let mut slope_max = Event::new(move |_, y: &State| -f.f(y[0]) - c * y[1], Crossing::Falling);
    if let Some(n) = opts.slope_maxima_limit {
        slope_max = slope_max.terminal_after(n.max(1));
    }
    let mut u_max = Event::new(|_, y: &State| y[1], Crossing::Falling);
    if let Some(n) = opts.u_maxima_limit {
        u_max = u_max.terminal_after(n.max(1));
    }
    let events = [
        Event::new(
            move |_, y: &State| (y[0] - eta).powi(2) + y[1] * y[1] - r2,
            Crossing::Falling,
        )
        .terminal(),
        Event::new(move |_, y: &State| y[0] - ceiling, Crossing::Rising).terminal(),
        Event::new(
            |_, y: &State| {
                if y[0] > 2.0 * u_seed {
                    left_seed.set(true);
                }
                if left_seed.get() {
                    y[0] - u_seed
                } else {
                    1.0
                }
            },
            Crossing::Falling,
        )
        .terminal(),
        slope_max,
        u_max,
    ];
    let sol = integrate(
        f.wave_field(c),
        seed,
        (s_seed, s_seed + s_len),
        &events,
        &opts.integrator,
    )?;
    if let Some(hit) = sol.hits.last() {
        if hit.event == EV_CEILING {
            return Err(Error::OutOfRange {
                u: hit.state[0],
                s: hit.s,
            });
        }
    }
    let hits = sol.hits.clone();
    Ok(UnstableRun {
        trajectory: Trajectory::from_parts(c, sol.s, sol.y, sol.dy),
        hits,
    })
}

/// Unstable manifold of `(0, 0)` followed until it enters the ball around
/// `(eta, 0)` (or returns to the origin when `c = 0`).
pub fn unstable_manifold(f: &Bistable, c: f64, opts: &ManifoldOptions) -> Result<Trajectory> {
    unstable_run(f, c, opts).map(|run| run.trajectory)
}

/// Branch of the stable manifold of `(1, 0)` with `u < 1, p > 0`, integrated
/// backward until `u <= u_min`. Samples are returned in increasing abscissa.
pub fn stable_manifold(f: &Bistable, c: f64, u_min: f64, opts: &ManifoldOptions) -> Result<Trajectory> {
    if !(c >= 0.0) {
        return Err(Error::InvalidParameter(format!("wave speed must be >= 0 (got {c})")));
    }
    if !(u_min > 0.0 && u_min < f.eta()) {
        return Err(Error::InvalidParameter(format!(
            "u_min = {u_min} must lie in (0, eta)"
        )));
    }
    let eig = f.linearize(1.0, c)?;
    let eps = opts.seed_offset;
    let seed = [1.0 - eps * eig.v_minus[0], -eps * eig.v_minus[1]];
    if seed[1] <= 0.0 {
        return Err(Error::SeedBranchWrong(seed[1]));
    }
    let s_seed = eps.ln() / eig.lam_minus;
    let events = [
        Event::new(move |_, y: &State| y[0] - u_min, Crossing::Falling).terminal(),
        Event::new(|_, y: &State| y[1], Crossing::Falling).terminal(),
    ];
    let sol = integrate(
        f.wave_field(c),
        seed,
        (s_seed, s_seed - 1e4),
        &events,
        &opts.integrator,
    )?;
    if sol.terminated_by() == Some(1) {
        let (s, y) = sol.last();
        return Err(Error::OutOfRange { u: y[0], s });
    }
    Ok(Trajectory::from_parts(c, sol.s, sol.y, sol.dy))
}

/// Extremal data of the unstable manifold.
#[derive(Debug, Clone)]
pub struct Gamma0Extrema {
    /// `sup u` along the manifold.
    pub sup_u: f64,
    /// `max p` along the manifold.
    pub max_slope: f64,
    /// Abscissa of the global slope maximum.
    pub s_star: f64,
    /// Successive positive local maxima `(s_k, p(s_k))` of the slope; entry 0 is the global one.
    pub local_maxima: Vec<(f64, f64)>,
    pub trajectory: Trajectory,
}

pub fn gamma0_extrema(f: &Bistable, c: f64, opts: &ManifoldOptions) -> Result<Gamma0Extrema> {
    let run = unstable_run(f, c, opts)?;
    Ok(extrema_from_run(run))
}

pub(crate) fn extrema_from_run(run: UnstableRun) -> Gamma0Extrema {
    let traj = run.trajectory;
    let local_maxima: Vec<(f64, f64)> = run
        .hits
        .iter()
        .filter(|h| h.event == EV_SLOPE_MAX && h.state[1] > 0.0)
        .map(|h| (h.s, h.state[1]))
        .collect();
    let mut sup_u = traj.samples().map(|(_, pt)| pt.u).fold(f64::MIN, f64::max);
    for h in run.hits.iter().filter(|h| h.event == EV_U_MAX) {
        sup_u = sup_u.max(h.state[0]);
    }
    let (mut s_star, mut max_slope) = traj
        .samples()
        .map(|(s, pt)| (s, pt.p))
        .fold((traj.s_first(), f64::MIN), |acc, v| if v.1 > acc.1 { v } else { acc });
    for &(s, p) in &local_maxima {
        if p >= max_slope {
            max_slope = p;
            s_star = s;
        }
    }
    Gamma0Extrema {
        sup_u,
        max_slope,
        s_star,
        local_maxima,
        trajectory: traj,
    }
}
