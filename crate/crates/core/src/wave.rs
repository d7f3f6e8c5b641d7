//! Assembly of reversed travelling waves from the two manifolds.
//!
//! The profile follows the unstable manifold of `(0, 0)` up to the departure
//! point where the slope equals `lambda L'(c)`, continues on a straight bridge
//! carrying the harvesting density, and lands on the stable manifold of
//! `(1, 0)` at the same slope. The frame is normalised so the bridge is `[0, s1]`.

use rayon::prelude::*;
use serde::Serialize;

use crate::control::{CostModel, Lagrangian};
use crate::error::{Error, Result};
use crate::numerics::{find_root, integrate, IntegratorOptions, State};
use crate::phase_plane::{
    extrema_from_run, stable_manifold, unstable_run, Bistable, Gamma0Extrema, ManifoldOptions,
    Trajectory,
};
use crate::profile::Profile;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveOptions {
    pub manifold: ManifoldOptions,
    /// Lower stopping level of the stable manifold; `eta_under / 2` when unset.
    pub u_min: Option<f64>,
    pub density_points: usize,
    /// Most negative density value tolerated before clamping.
    pub density_tol: f64,
}

impl Default for WaveOptions {
    fn default() -> Self {
        Self {
            manifold: ManifoldOptions::default(),
            u_min: None,
            density_points: 2048,
            density_tol: 1e-10,
        }
    }
}

/// Harvesting density `M = (f(Theta) + c Theta') / Theta` on the bridge `[0, s1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FishermanDensity {
    f: Bistable,
    c: f64,
    theta0: f64,
    slope: f64,
    s1: f64,
    samples: Vec<f64>,
    mass: f64,
}

impl FishermanDensity {
    pub fn support(&self) -> (f64, f64) {
        (0.0, self.s1)
    }

    pub fn s1(&self) -> f64 {
        self.s1
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Grid values of `M` on the uniform grid over `[0, s1]`.
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn grid(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let n = self.samples.len();
        self.samples
            .iter()
            .enumerate()
            .map(move |(i, &m)| (self.s1 * i as f64 / (n - 1) as f64, m))
    }

    pub fn sup(&self) -> f64 {
        self.samples.iter().copied().fold(0.0, f64::max)
    }

    /// Exact density; zero outside `[0, s1]`.
    pub fn eval(&self, s: f64) -> f64 {
        if !(0.0..=self.s1).contains(&s) {
            return 0.0;
        }
        let theta = self.theta0 + self.slope * s;
        ((self.f.f(theta) + self.c * self.slope) / theta).max(0.0)
    }
}

/// Builds the density on the bridge `theta0 + slope * s`, `s in [0, s1]`.
pub fn linear_bridge(
    f: &Bistable,
    c: f64,
    theta0: f64,
    slope: f64,
    s1: f64,
    opts: &WaveOptions,
) -> Result<FishermanDensity> {
    if !(slope > 0.0) || !(s1 > 0.0) || !(theta0 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "bridge needs theta0 > 0, slope > 0, s1 > 0 (got {theta0}, {slope}, {s1})"
        )));
    }
    let n = opts.density_points.max(2);
    let raw: Vec<f64> = (0..n)
        .map(|i| {
            let theta = theta0 + slope * s1 * i as f64 / (n - 1) as f64;
            (f.f(theta) + c * slope) / theta
        })
        .collect();
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    if min < -opts.density_tol {
        return Err(Error::NegativeDensity(min));
    }
    let samples: Vec<f64> = raw.into_iter().map(|m| m.max(0.0)).collect();
    let h = s1 / (n - 1) as f64;
    let mass = h * (samples.iter().sum::<f64>() - 0.5 * (samples[0] + samples[n - 1]));
    Ok(FishermanDensity {
        f: *f,
        c,
        theta0,
        slope,
        s1,
        samples,
        mass,
    })
}

/// First abscissa `>= from` where component `k` of the trajectory falls through `level`.
pub(crate) fn falling_crossing(traj: &Trajectory, from: f64, level: f64, k: usize) -> Option<f64> {
    let comp = |s: f64| traj.eval_state(s)[k];
    if comp(from) < level {
        return None;
    }
    let xs = traj.abscissae();
    let start = xs.partition_point(|&v| v <= from);
    let mut a = from;
    for &b in &xs[start..] {
        if comp(b) < level {
            return Some(bisect(|s| comp(s) - level, a, b));
        }
        a = b;
    }
    None
}

/// Bisection for a sign change of `g` on `[a, b]` with `g(a) >= 0 > g(b)` (or the reverse).
fn bisect(g: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let ga_nonneg = g(a) >= 0.0;
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        if (g(m) >= 0.0) == ga_nonneg {
            a = m;
        } else {
            b = m;
        }
    }
    if g(a).abs() <= g(b).abs() {
        a
    } else {
        b
    }
}

/// Departure abscissa on the unstable manifold: the first point at or after the
/// `k`-th slope maximum where the slope has dropped to `slope`.
pub fn departure_point(extrema: &Gamma0Extrema, slope: f64, k: usize) -> Result<f64> {
    let Some(&(s_k, p_k)) = extrema.local_maxima.get(k) else {
        return Err(Error::SpeedTooLarge {
            target: slope,
            available: 0.0,
            k,
        });
    };
    if slope > p_k {
        return Err(Error::SpeedTooLarge {
            target: slope,
            available: p_k,
            k,
        });
    }
    if slope == p_k {
        return Ok(s_k);
    }
    falling_crossing(&extrema.trajectory, s_k, slope, 1).ok_or(Error::SpeedTooLarge {
        target: slope,
        available: p_k,
        k,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Landing {
    /// `u` at the landing point.
    pub value: f64,
    /// Abscissa of the landing point on the stable manifold.
    pub abscissa: f64,
}

/// First point met on the stable manifold, scanning down from `u = 1`, where the slope equals `slope`.
pub fn landing_point(gamma1: &Trajectory, slope: f64) -> Result<Landing> {
    let sup = gamma1.samples().map(|(_, pt)| pt.p).fold(f64::MIN, f64::max);
    let no_landing = Error::NoLanding { slope, sup };
    if !(slope > 0.0) || slope > sup {
        return Err(no_landing);
    }
    let xs = gamma1.abscissae();
    let n = xs.len();
    if gamma1.point(n - 1).p >= slope {
        return Err(no_landing);
    }
    for i in (0..n - 1).rev() {
        if gamma1.point(i).p >= slope {
            let s = bisect(|s| gamma1.eval(s).p - slope, xs[i], xs[i + 1]);
            return Ok(Landing {
                value: gamma1.eval(s).u,
                abscissa: s,
            });
        }
    }
    Err(no_landing)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bridge {
    pub theta0: f64,
    pub slope: f64,
    pub s1: f64,
}

/// Piecewise reversed travelling wave on the whole line.
#[derive(Debug, Clone)]
pub struct WaveProfile {
    f: Bistable,
    pub c: f64,
    pub lambda: f64,
    pub k: usize,
    left: Trajectory,
    pub bridge: Bridge,
    right: Trajectory,
    lam_left: f64,
    lam_right: f64,
    /// Abscissae of the departure point and of the chosen slope maximum on the unstable manifold.
    pub departure: (f64, f64),
    pub landing: Landing,
}

impl WaveProfile {
    pub fn nonlinearity(&self) -> &Bistable {
        &self.f
    }

    pub fn s1(&self) -> f64 {
        self.bridge.s1
    }

    pub fn left_piece(&self) -> &Trajectory {
        &self.left
    }

    pub fn right_piece(&self) -> &Trajectory {
        &self.right
    }

    fn state(&self, s: f64) -> State {
        let b = &self.bridge;
        if s < self.left.s_first() {
            let u0 = self.left.first().u;
            let u = u0 * (self.lam_left * (s - self.left.s_first())).exp();
            [u, self.lam_left * u]
        } else if s <= 0.0 {
            self.left.eval_state(s)
        } else if s <= b.s1 {
            [b.theta0 + b.slope * s, b.slope]
        } else if s <= self.right.s_last() {
            self.right.eval_state(s)
        } else {
            let gap = 1.0 - self.right.last().u;
            let w = gap * (self.lam_right * (s - self.right.s_last())).exp();
            [1.0 - w, -self.lam_right * w]
        }
    }

    /// `Theta''` from the wave equation on each smooth piece (zero on the bridge).
    pub fn theta_second(&self, s: f64) -> f64 {
        if (0.0..=self.bridge.s1).contains(&s) {
            return 0.0;
        }
        let [u, p] = self.state(s);
        -self.c * p - self.f.f(u)
    }

    /// Jumps of `Theta` and `Theta'` at `0` and `s1`, evaluated from the adjacent pieces.
    pub fn junction_defects(&self) -> [f64; 4] {
        let b = &self.bridge;
        let l = self.left.eval(0.0);
        let r = self.right.eval(b.s1);
        [
            (l.u - b.theta0).abs(),
            (l.p - b.slope).abs(),
            (r.u - (b.theta0 + b.slope * b.s1)).abs(),
            (r.p - b.slope).abs(),
        ]
    }

    /// Largest centred-difference residual of `-Theta'' - c Theta' - f(Theta) + M Theta`
    /// over the smooth pieces, sampled with spacing `h`.
    pub fn ode_residual(&self, density: &FishermanDensity, h: f64) -> f64 {
        let (lo, hi) = self.window();
        let pieces = [(lo, 0.0), (0.0, self.bridge.s1), (self.bridge.s1, hi)];
        let mut worst: f64 = 0.0;
        for (a, b) in pieces {
            let n = ((b - a) / h).floor() as usize;
            for i in 1..n {
                let s = a + i as f64 * h;
                if s + h > b {
                    break;
                }
                let d2 = (self.theta(s + h) - 2.0 * self.theta(s) + self.theta(s - h)) / (h * h);
                let u = self.theta(s);
                let r = -d2 - self.c * self.theta_prime(s) - self.f.f(u) + density.eval(s) * u;
                worst = worst.max(r.abs());
            }
        }
        worst
    }

    /// `sup |Theta''|` over the smooth pieces.
    pub fn curvature_bound(&self) -> f64 {
        let mut sup: f64 = 0.0;
        for piece in [&self.left, &self.right] {
            for (_, pt) in piece.samples() {
                sup = sup.max((-self.c * pt.p - self.f.f(pt.u)).abs());
            }
        }
        sup
    }

    /// Number of strict sign changes of `Theta'` on a uniform grid of the window.
    pub fn slope_sign_changes(&self, h: f64) -> usize {
        count_sign_changes(self, h)
    }
}

pub(crate) fn count_sign_changes(profile: &dyn Profile, h: f64) -> usize {
    let (lo, hi) = profile.window();
    let n = ((hi - lo) / h).ceil() as usize;
    let mut last = 0.0f64;
    let mut changes = 0;
    for i in 0..=n {
        let d = profile.theta_prime(lo + i as f64 * h);
        if d != 0.0 {
            if last != 0.0 && d.signum() != last.signum() {
                changes += 1;
            }
            last = d;
        }
    }
    changes
}

impl Profile for WaveProfile {
    fn theta(&self, s: f64) -> f64 {
        self.state(s)[0]
    }

    fn theta_prime(&self, s: f64) -> f64 {
        self.state(s)[1]
    }

    fn window(&self) -> (f64, f64) {
        (self.left.s_first(), self.right.s_last())
    }
}

/// Builds the `k`-bump wave (monotone for `k = 0`) at speed `cost.c` and discount `cost.lambda`.
pub fn construct_wave(
    f: &Bistable,
    cost: &CostModel,
    k: usize,
    opts: &WaveOptions,
) -> Result<(WaveProfile, FishermanDensity)> {
    let c = cost.c;
    let lambda = cost.lambda;
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!("wave speed must be > 0 (got {c})")));
    }
    f.ensure_invasive()?;
    let slope = cost.bridge_slope();
    if k >= 1 && c >= f.spiral_threshold() {
        return Err(Error::SpeedTooLarge {
            target: slope,
            available: 0.0,
            k,
        });
    }
    // the departure lies before the next slope maximum
    let mopts = ManifoldOptions {
        slope_maxima_limit: Some(k + 2),
        u_maxima_limit: None,
        ..opts.manifold
    };
    let extrema = extrema_from_run(unstable_run(f, c, &mopts)?);
    let s0 = departure_point(&extrema, slope, k)?;
    let theta0 = extrema.trajectory.eval(s0).u;

    let u_min = opts.u_min.unwrap_or(0.5 * f.eta_under());
    let gamma1 = stable_manifold(f, c, u_min, &opts.manifold)?;
    let landing = landing_point(&gamma1, slope)?;
    if landing.value <= theta0 {
        let sup = gamma1.samples().map(|(_, pt)| pt.p).fold(f64::MIN, f64::max);
        return Err(Error::NoLanding { slope, sup });
    }
    let s1 = (landing.value - theta0) / slope;
    let density = linear_bridge(f, c, theta0, slope, s1, opts)?;

    let left = extrema.trajectory.window(f64::NEG_INFINITY, s0).shifted(-s0);
    let right = gamma1
        .window(landing.abscissa, f64::INFINITY)
        .shifted(s1 - landing.abscissa);
    let wave = WaveProfile {
        f: *f,
        c,
        lambda,
        k,
        left,
        bridge: Bridge { theta0, slope, s1 },
        right,
        lam_left: f.linearize(0.0, c)?.lam_plus,
        lam_right: f.linearize(1.0, c)?.lam_minus,
        departure: (s0, extrema.local_maxima[k].0),
        landing,
    };
    Ok((wave, density))
}

/// Periodic wave: one bridge of length `bridge_len` followed by a free arc of the spiral.
#[derive(Debug, Clone)]
pub struct PeriodicWave {
    f: Bistable,
    pub c: f64,
    pub lambda: f64,
    pub slope: f64,
    /// `Theta` at the start and end of the bridge.
    pub u_low: f64,
    pub u_high: f64,
    pub bridge_len: f64,
    pub period: f64,
    arc: Trajectory,
}

impl PeriodicWave {
    fn state(&self, s: f64) -> State {
        let t = s.rem_euclid(self.period);
        if t <= self.bridge_len {
            [self.u_low + self.slope * t, self.slope]
        } else {
            self.arc.eval_state(t)
        }
    }

    /// Integrates the wave equation with the periodic density over `periods`
    /// periods from the bridge start and returns `sup |u(s + P) - u(s)|` over the run.
    pub fn periodicity_defect(&self, density: &FishermanDensity, periods: usize) -> Result<f64> {
        let c = self.c;
        let f = self.f;
        let field = |s: f64, y: &State| {
            let m = density.eval(s.rem_euclid(self.period).min(self.bridge_len));
            [y[1], -f.f(y[0]) - c * y[1] + m * y[0]]
        };
        let free = |_: f64, y: &State| [y[1], -f.f(y[0]) - c * y[1]];
        let opts = IntegratorOptions::with_step(1e-3);
        let mut y = [self.u_low, self.slope];
        let mut record: Vec<(f64, f64)> = Vec::new();
        for j in 0..periods + 1 {
            let base = j as f64 * self.period;
            let on_bridge = integrate(field, y, (base, base + self.bridge_len), &[], &opts)?;
            y = on_bridge.last().1;
            let on_arc = integrate(free, y, (base + self.bridge_len, base + self.period), &[], &opts)?;
            y = on_arc.last().1;
            record.extend(on_bridge.s.iter().zip(&on_bridge.y).map(|(s, v)| (*s, v[0])));
            record.extend(on_arc.s.iter().zip(&on_arc.y).map(|(s, v)| (*s, v[0])));
        }
        let lookup = |s: f64| -> f64 {
            let i = record.partition_point(|r| r.0 < s).min(record.len() - 1);
            if i == 0 {
                return record[0].1;
            }
            let (s0, u0) = record[i - 1];
            let (s1, u1) = record[i];
            if s1 == s0 {
                u1
            } else {
                u0 + (u1 - u0) * (s - s0) / (s1 - s0)
            }
        };
        let n = 2000 * periods;
        let span = periods as f64 * self.period;
        let mut defect: f64 = 0.0;
        for i in 0..=n {
            let s = span * i as f64 / n as f64;
            defect = defect
                .max((lookup(s + self.period) - lookup(s)).abs())
                .max((lookup(s) - self.theta(s)).abs());
        }
        Ok(defect)
    }
}

impl Profile for PeriodicWave {
    fn theta(&self, s: f64) -> f64 {
        self.state(s)[0]
    }

    fn theta_prime(&self, s: f64) -> f64 {
        self.state(s)[1]
    }

    fn window(&self) -> (f64, f64) {
        (0.0, self.period)
    }
}

/// Periodic wave built from two consecutive falling crossings of `p = lambda L'(c)`
/// on the spiral; the pair with the smallest period is kept.
pub fn construct_periodic(
    f: &Bistable,
    cost: &CostModel,
    opts: &WaveOptions,
) -> Result<(PeriodicWave, FishermanDensity)> {
    let c = cost.c;
    let lambda = cost.lambda;
    let none = Error::NoPeriodicOrbit { lambda, c };
    if !(c > 0.0) || c >= f.spiral_threshold() {
        return Err(none);
    }
    let slope = cost.bridge_slope();
    let extrema = extrema_from_run(unstable_run(f, c, &opts.manifold)?);
    let traj = &extrema.trajectory;
    let mut crossings = Vec::new();
    let mut from = extrema.s_star;
    while let Some(s) = falling_crossing(traj, from, slope, 1) {
        crossings.push(s);
        // next crossing needs the slope to climb back above the level first
        let xs = traj.abscissae();
        let mut next = None;
        for &b in &xs[xs.partition_point(|&v| v <= s)..] {
            if traj.eval(b).p > slope {
                next = Some(b);
                break;
            }
        }
        match next {
            Some(b) => from = b,
            None => break,
        }
    }
    let mut best: Option<(f64, f64, f64)> = None;
    for w in crossings.windows(2) {
        let (sa, sb) = (w[0], w[1]);
        let (ua, ub) = (traj.eval(sa).u, traj.eval(sb).u);
        if ub >= ua {
            continue;
        }
        let period = (sb - sa) + (ua - ub) / slope;
        if best.is_none_or(|b| period < b.2) {
            best = Some((sa, sb, period));
        }
    }
    let (sa, sb, period) = best.ok_or(none)?;
    let u_high = traj.eval(sa).u;
    let u_low = traj.eval(sb).u;
    let bridge_len = (u_high - u_low) / slope;
    let density = linear_bridge(f, c, u_low, slope, bridge_len, opts)?;
    let arc = traj.window(sa, sb).shifted(bridge_len - sa);
    Ok((
        PeriodicWave {
            f: *f,
            c,
            lambda,
            slope,
            u_low,
            u_high,
            bridge_len,
            period,
            arc,
        },
        density,
    ))
}

/// Value of a speed bound, with a flag when no sign change occurred on the scanned box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedBound {
    pub speed: f64,
    pub saturated: bool,
}

/// Largest speed probed by the speed maps.
pub const SPEED_SCAN_MAX: f64 = 50.0;

/// `k`-th positive local maximum of the slope along the unstable manifold at speed `c`.
pub fn slope_maximum(f: &Bistable, c: f64, k: usize, opts: &ManifoldOptions) -> Result<Option<f64>> {
    let mopts = ManifoldOptions {
        slope_maxima_limit: Some(k + 1),
        u_maxima_limit: None,
        ..*opts
    };
    let ex = extrema_from_run(unstable_run(f, c, &mopts)?);
    Ok(ex.local_maxima.get(k).map(|m| m.1))
}

/// `c_k(lambda)`: the speed at which the `k`-th slope maximum equals `lambda L'(c)`.
pub fn ck_of_lambda(
    f: &Bistable,
    lagrangian: &dyn Lagrangian,
    lambda: f64,
    k: usize,
    opts: &ManifoldOptions,
) -> Result<SpeedBound> {
    if !(lambda > 0.0) {
        return Err(Error::InvalidParameter(format!("discount must be > 0 (got {lambda})")));
    }
    let gap = |c: f64| -> Result<f64> {
        Ok(match slope_maximum(f, c, k, opts)? {
            Some(p) => p - lambda * lagrangian.derivative(c),
            None => f64::NEG_INFINITY,
        })
    };
    let top = if k == 0 {
        SPEED_SCAN_MAX
    } else {
        f.spiral_threshold() * (1.0 - 1e-9)
    };
    // geometric scan from small speeds up to the top of the box
    let n = 48;
    let lo = 1e-6 * top;
    let grid: Vec<f64> = (0..n)
        .map(|i| lo * (top / lo).powf(i as f64 / (n - 1) as f64))
        .collect();
    let values = grid.iter().map(|&c| gap(c)).collect::<Result<Vec<f64>>>()?;
    if values[0] <= 0.0 {
        return Ok(SpeedBound {
            speed: 0.0,
            saturated: false,
        });
    }
    let Some(i) = values.iter().position(|&g| g <= 0.0) else {
        return Ok(SpeedBound {
            speed: f64::INFINITY,
            saturated: true,
        });
    };
    let (a, b) = (grid[i - 1], grid[i]);
    let root = if values[i].is_finite() {
        let g = |c: f64| gap(c).unwrap_or(f64::NAN);
        find_root(g, a, b, 1e-13 * b)?
    } else {
        bisect(|c| gap(c).unwrap_or(f64::NEG_INFINITY), a, b)
    };
    Ok(SpeedBound {
        speed: root,
        saturated: false,
    })
}

pub fn c0_of_lambda(
    f: &Bistable,
    lagrangian: &dyn Lagrangian,
    lambda: f64,
    opts: &ManifoldOptions,
) -> Result<SpeedBound> {
    ck_of_lambda(f, lagrangian, lambda, 0, opts)
}

/// `sup u` along the unstable manifold at speed `c`.
pub fn gamma0_sup(f: &Bistable, c: f64, opts: &ManifoldOptions) -> Result<f64> {
    let mopts = ManifoldOptions {
        slope_maxima_limit: None,
        u_maxima_limit: Some(1),
        ..*opts
    };
    Ok(extrema_from_run(unstable_run(f, c, &mopts)?).sup_u)
}

/// `c_max(L)`: last speed at which `L(c)` still lies below `sup u` of the unstable manifold.
pub fn c_max_of_l(f: &Bistable, lagrangian: &dyn Lagrangian, opts: &ManifoldOptions) -> Result<f64> {
    // L(c) >= 1 > sup u closes the box
    let mut hi = 1.0;
    while lagrangian.value(hi) < 1.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::NoExtinctionSpeed);
        }
    }
    let lo = 1e-6 * hi;
    let n = 160;
    let grid: Vec<f64> = (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect();
    let h = |c: f64| gamma0_sup(f, c, opts).map(|u| u - lagrangian.value(c));
    let values = grid
        .par_iter()
        .map(|&c| h(c))
        .collect::<Result<Vec<f64>>>()?;
    let last = (1..n).rev().find(|&i| values[i - 1] > 0.0 && values[i] <= 0.0);
    let Some(i) = last else {
        return Err(Error::NoExtinctionSpeed);
    };
    find_root(|c| h(c).unwrap_or(f64::NAN), grid[i - 1], grid[i], 1e-12 * grid[i])
}

/// Speed maps over a grid of discounts.
#[derive(Debug, Clone, Serialize)]
pub struct SpeedMaps {
    pub lambdas: Vec<f64>,
    /// `curves[k][i]` is `c_k(lambdas[i])`.
    pub curves: Vec<Vec<SpeedBound>>,
    pub c_max: f64,
    pub spiral_threshold: f64,
}

pub fn speed_maps(
    f: &Bistable,
    lagrangian: &dyn Lagrangian,
    lambdas: &[f64],
    k_max: usize,
    opts: &ManifoldOptions,
) -> Result<SpeedMaps> {
    if lambdas.is_empty() {
        return Err(Error::InvalidParameter("empty discount grid".into()));
    }
    let curves = (0..=k_max)
        .map(|k| {
            lambdas
                .par_iter()
                .map(|&l| ck_of_lambda(f, lagrangian, l, k, opts))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SpeedMaps {
        lambdas: lambdas.to_vec(),
        curves,
        c_max: c_max_of_l(f, lagrangian, opts)?,
        spiral_threshold: f.spiral_threshold(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidityCheck {
    pub name: &'static str,
    pub passed: bool,
    /// Measured quantity behind the verdict.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidityReport {
    pub checks: Vec<ValidityCheck>,
}

impl ValidityReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&ValidityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Tolerance of the affine-bridge check.
pub const AFFINE_TOL: f64 = 1e-8;

/// Necessary conditions of a reversed wave: `L(c) <= Theta(0)`, affine profile with
/// slope `lambda L'(c)` on the support of the density, compact non-negative density,
/// and `2k` sign changes of `Theta'`.
pub fn validity_report(
    profile: &dyn Profile,
    density: &FishermanDensity,
    cost: &CostModel,
    k: usize,
) -> ValidityReport {
    let theta0 = profile.theta(0.0);
    let lc = cost.cost(cost.c);
    let slope = cost.bridge_slope();
    let (a, b) = density.support();
    let n = 512;
    let mut affine: f64 = 0.0;
    for i in 0..=n {
        let s = a + (b - a) * i as f64 / n as f64;
        affine = affine
            .max((profile.theta_prime(s) - slope).abs())
            .max((profile.theta(s) - theta0 - slope * s).abs());
    }
    let min_m = density.samples().iter().copied().fold(f64::INFINITY, f64::min);
    let changes = count_sign_changes(profile, 1e-2);
    let monotone = if k == 0 {
        let (lo, hi) = profile.window();
        let m = ((hi - lo) / 1e-2).ceil() as usize;
        (0..=m).all(|i| profile.theta_prime(lo + i as f64 * 1e-2) > 0.0)
    } else {
        changes == 2 * k
    };
    ValidityReport {
        checks: vec![
            ValidityCheck {
                name: "max_speed",
                passed: lc <= theta0,
                value: theta0 - lc,
            },
            ValidityCheck {
                name: "affine_on_support",
                passed: affine <= AFFINE_TOL,
                value: affine,
            },
            ValidityCheck {
                name: "compact_support",
                passed: b.is_finite() && b > a && density.eval(b + 1e-9) == 0.0 && density.eval(a - 1e-9) == 0.0,
                value: b - a,
            },
            ValidityCheck {
                name: "nonnegative_density",
                passed: min_m >= 0.0,
                value: min_m,
            },
            ValidityCheck {
                name: "bump_count",
                passed: monotone,
                value: changes as f64,
            },
        ],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::PowerLagrangian;
    use crate::phase_plane::gamma0_extrema;

    fn cubic() -> Bistable {
        Bistable::cubic(0.3).unwrap()
    }

    fn build(lambda: f64, c: f64, k: usize) -> Result<(WaveProfile, FishermanDensity)> {
        construct_wave(&cubic(), &CostModel::quadratic(lambda, c).unwrap(), k, &WaveOptions::default())
    }

    #[test]
    fn departure_at_exact_maximum_is_the_maximum() {
        let f = cubic();
        let ex = gamma0_extrema(&f, 0.1, &ManifoldOptions::default()).unwrap();
        assert_eq!(departure_point(&ex, ex.max_slope, 0).unwrap(), ex.s_star);
        assert!(matches!(
            departure_point(&ex, ex.max_slope * 1.001, 0),
            Err(Error::SpeedTooLarge { .. })
        ));
    }

    #[test]
    fn departure_point_lies_above_critical_level() {
        let f = cubic();
        let ex = gamma0_extrema(&f, 0.08, &ManifoldOptions::default()).unwrap();
        let s0 = departure_point(&ex, 0.79 * 0.08, 0).unwrap();
        assert!(ex.trajectory.eval(s0).u >= f.eta_under());
        assert!((ex.trajectory.eval(s0).p - 0.79 * 0.08).abs() < 1e-12);
        assert!(matches!(departure_point(&ex, 0.79 * 0.1, 0), Err(Error::SpeedTooLarge { .. })));
    }

    #[test]
    fn density_on_bridge_examples() {
        let f = cubic();
        let (c, slope, theta0) = (0.5, 0.05, 0.2);
        let d = linear_bridge(&f, c, theta0, slope, 4.0, &WaveOptions::default()).unwrap();
        // Theta = eta at s = 2
        assert!((d.eval(2.0) - c * slope / 0.3).abs() < 1e-15);
        for (s, m) in d.grid() {
            let th = theta0 + slope * s;
            if f.f(th) >= 0.0 {
                assert!(m >= c * slope / th - 1e-15);
            }
        }
        // independent quadrature of (f(Theta) + c Theta') / Theta
        let (q, _) = crate::numerics::integrate_adaptive(
            &|s| (f.f(theta0 + slope * s) + c * slope) / (theta0 + slope * s),
            0.0,
            4.0,
            1e-13,
            8,
        );
        assert!((d.mass() - q).abs() < 1e-6);
        assert!(matches!(
            linear_bridge(&f, 0.0, 0.05, 0.01, 1.0, &WaveOptions::default()),
            Err(Error::NegativeDensity(_))
        ));
    }

    #[test]
    fn landing_examples() {
        let f = cubic();
        let g1 = stable_manifold(&f, 0.1, f.eta_under() / 2.0, &ManifoldOptions::default()).unwrap();
        let tiny = landing_point(&g1, 1e-6).unwrap();
        assert!(tiny.value > 0.999);
        let mid = landing_point(&g1, 0.79 * 0.1).unwrap();
        assert!(mid.value > 0.3 && mid.value < 1.0);
        let sup = g1.samples().map(|(_, pt)| pt.p).fold(0.0, f64::max);
        assert!(matches!(landing_point(&g1, 2.0 * sup), Err(Error::NoLanding { .. })));
    }

    #[test]
    fn monotone_wave_is_valid() {
        let (w, d) = build(0.79, 0.05, 0).unwrap();
        let cost = CostModel::quadratic(0.79, 0.05).unwrap();
        assert!(w.junction_defects().iter().all(|&e| e <= 1e-8), "{:?}", w.junction_defects());
        let report = validity_report(&w, &d, &cost, 0);
        assert!(report.all_passed(), "{report:?}");
        let h = 0.02;
        assert!(w.ode_residual(&d, h) <= 10.0 * h * h);
        assert!(w.theta_second(-1e-9) < 0.0);
        assert_eq!(w.slope_sign_changes(1e-2), 0);
    }

    #[test]
    fn synthetic_violations_are_flagged() {
        struct Bent<'a>(&'a WaveProfile);
        impl Profile for Bent<'_> {
            fn theta(&self, s: f64) -> f64 {
                let b = self.0.bridge;
                if (0.0..=b.s1).contains(&s) {
                    self.0.theta(s) + 0.01 * s * (b.s1 - s)
                } else {
                    self.0.theta(s)
                }
            }
            fn theta_prime(&self, s: f64) -> f64 {
                let b = self.0.bridge;
                if (0.0..=b.s1).contains(&s) {
                    self.0.theta_prime(s) + 0.01 * (b.s1 - 2.0 * s)
                } else {
                    self.0.theta_prime(s)
                }
            }
            fn window(&self) -> (f64, f64) {
                self.0.window()
            }
        }
        let (w, d) = build(0.79, 0.05, 0).unwrap();
        let cost = CostModel::quadratic(0.79, 0.05).unwrap();
        let bent = validity_report(&Bent(&w), &d, &cost, 0);
        assert!(!bent.check("affine_on_support").unwrap().passed);
        let expensive = CostModel::new(std::sync::Arc::new(PowerLagrangian::new(1e3, 2.0).unwrap()), 0.79, 0.05).unwrap();
        let report = validity_report(&w, &d, &expensive, 0);
        assert!(!report.check("max_speed").unwrap().passed);
    }

    #[test]
    fn too_fast_monotone_wave_is_rejected() {
        let f = cubic();
        let c0 = c0_of_lambda(&f, &PowerLagrangian::quadratic(), 0.79, &ManifoldOptions::default()).unwrap();
        assert!(!c0.saturated);
        assert!(build(0.79, 0.99 * c0.speed, 0).is_ok());
        assert!(matches!(build(0.79, 1.01 * c0.speed, 0), Err(Error::SpeedTooLarge { .. })));
        // root identity
        let p = slope_maximum(&f, c0.speed, 0, &ManifoldOptions::default()).unwrap().unwrap();
        assert!((p - 0.79 * c0.speed).abs() < 1e-10);
    }

    #[test]
    fn root_agrees_with_dense_scan() {
        let f = cubic();
        let l = PowerLagrangian::quadratic();
        let c0 = c0_of_lambda(&f, &l, 0.79, &ManifoldOptions::default()).unwrap().speed;
        // dense scan oracle: last grid point with a positive gap
        let grid: Vec<f64> = (1..=400).map(|i| 0.2 * i as f64 / 400.0).collect();
        let mut last_pos = 0.0;
        for &c in &grid {
            let p = slope_maximum(&f, c, 0, &ManifoldOptions::default()).unwrap().unwrap();
            if p - 0.79 * c > 0.0 {
                last_pos = c;
            }
        }
        assert!(c0 >= last_pos && c0 <= last_pos + 0.2 / 400.0);
    }

    #[test]
    fn bump_waves_have_the_requested_maxima() {
        for k in 1..=2 {
            let (w, d) = build(0.39, 0.02, k).unwrap();
            assert_eq!(w.slope_sign_changes(1e-2), 2 * k);
            let cost = CostModel::quadratic(0.39, 0.02).unwrap();
            assert!(validity_report(&w, &d, &cost, k).all_passed());
        }
    }

    #[test]
    fn periodic_wave_closes() {
        let f = cubic();
        let cost = CostModel::quadratic(0.39, 0.02).unwrap();
        let (w, d) = construct_periodic(&f, &cost, &WaveOptions::default()).unwrap();
        let defect = w.periodicity_defect(&d, 2).unwrap();
        assert!(defect <= 1e-6, "defect {defect}");
        for i in 0..=100 {
            let s = w.bridge_len * i as f64 / 100.0;
            assert!((w.theta_prime(s) - cost.bridge_slope()).abs() < 1e-15);
        }
        assert_eq!(count_sign_changes(&w, 1e-3), 2);
    }

    #[test]
    fn c_max_examples() {
        let f = cubic();
        let l = PowerLagrangian::new(f.eta_under() / 2.0, 2.0).unwrap();
        let cm = c_max_of_l(&f, &l, &ManifoldOptions::default()).unwrap();
        assert!(cm > 1.0);
        let sup = gamma0_sup(&f, cm, &ManifoldOptions::default()).unwrap();
        assert!((sup - l.value(cm)).abs() < 1e-9);
        let stiff = PowerLagrangian::new(1e3, 2.0).unwrap();
        assert!(c_max_of_l(&f, &stiff, &ManifoldOptions::default()).unwrap() < 0.1);
    }
}
