//! Low-level kernels shared by the phase-plane, control and PDE code.
//!
//! * [`integrate`]: classical fixed-step RK4 on a planar field, cubic-Hermite
//!   dense output, event localization by bisection on the interpolant.
//! * [`find_root`]: Brent's method on a sign-changing bracket.
//! * [`discounted_integral`]: adaptive Gauss-Kronrod quadrature of
//!   `e^{-lambda t} g(t)` on a truncated horizon with an explicit tail bound.

use crate::error::{Error, Result};

/// A point of the planar phase space.
pub type State = [f64; 2];

/// Event abscissae are localized to this width unless the options ask for less.
pub const EVENT_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    /// Step in the independent variable (always positive; the sign follows the span).
    pub step: f64,
    /// Event localization tolerance in the abscissa.
    pub tol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            step: 1e-2,
            tol: EVENT_TOL,
            max_steps: 5_000_000,
        }
    }
}

impl IntegratorOptions {
    pub fn with_step(step: f64) -> Self {
        Self {
            step,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) || !(self.tol > 0.0) || self.max_steps == 0 {
            return Err(Error::InvalidParameter(format!(
                "integrator options need step > 0, tol > 0, max_steps >= 1 (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// Crossing direction of an event guard, measured along the integration direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Crossing {
    Rising,
    Falling,
    Any,
}

impl Crossing {
    fn fires(self, before: f64, after: f64) -> bool {
        let rising = before < 0.0 && after >= 0.0;
        let falling = before > 0.0 && after <= 0.0;
        match self {
            Crossing::Rising => rising,
            Crossing::Falling => falling,
            Crossing::Any => rising || falling,
        }
    }
}

type Guard<'a> = Box<dyn Fn(f64, &State) -> f64 + 'a>;

/// Scalar guard `g(s, y)` whose sign change marks an event.
pub struct Event<'a> {
    guard: Guard<'a>,
    direction: Crossing,
    terminal_after: Option<usize>,
}

impl<'a> Event<'a> {
    pub fn new(guard: impl Fn(f64, &State) -> f64 + 'a, direction: Crossing) -> Self {
        Self {
            guard: Box::new(guard),
            direction,
            terminal_after: None,
        }
    }

    /// Integration stops at the first hit of a terminal event.
    pub fn terminal(self) -> Self {
        self.terminal_after(1)
    }

    /// Integration stops at the `n`-th hit of this event.
    pub fn terminal_after(mut self, n: usize) -> Self {
        self.terminal_after = Some(n.max(1));
        self
    }

    pub fn is_terminal(&self) -> bool {
        self.terminal_after.is_some()
    }

    pub fn value(&self, s: f64, y: &State) -> f64 {
        (self.guard)(s, y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventHit {
    /// Index of the event in the list passed to [`integrate`].
    pub event: usize,
    pub s: f64,
    pub state: State,
}

/// Samples of an integrated trajectory, in integration order, with derivatives
/// kept for Hermite interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub s: Vec<f64>,
    pub y: Vec<State>,
    pub dy: Vec<State>,
    pub hits: Vec<EventHit>,
}

impl Solution {
    pub fn last(&self) -> (f64, State) {
        let n = self.s.len() - 1;
        (self.s[n], self.y[n])
    }

    pub fn terminated_by(&self) -> Option<usize> {
        self.hits.last().map(|h| h.event)
    }

    /// Dense output at `s`; values outside the sampled range are clamped to the ends.
    pub fn eval(&self, s: f64) -> State {
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
}

/// Index `i` of the segment `[xs[i], xs[i+1]]` containing `x` for a monotone
/// (increasing or decreasing) abscissa array of length at least two.
pub(crate) fn segment_index(xs: &[f64], x: f64) -> usize {
    let n = xs.len();
    debug_assert!(n >= 2);
    let increasing = xs[n - 1] >= xs[0];
    let pos = if increasing {
        xs.partition_point(|&v| v <= x)
    } else {
        xs.partition_point(|&v| v >= x)
    };
    pos.clamp(1, n - 1) - 1
}

/// Cubic Hermite interpolation between two samples with known derivatives.
pub fn hermite(s0: f64, y0: &State, d0: &State, s1: f64, y1: &State, d1: &State, s: f64) -> State {
    let h = s1 - s0;
    if h == 0.0 {
        return *y0;
    }
    let t = ((s - s0) / h).clamp(0.0, 1.0);
    let t2 = t * t;
    let t3 = t2 * t;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + t;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    let mut out = [0.0; 2];
    for k in 0..2 {
        out[k] = h00 * y0[k] + h10 * h * d0[k] + h01 * y1[k] + h11 * h * d1[k];
    }
    out
}

fn axpy(y: &State, a: f64, k: &State) -> State {
    [y[0] + a * k[0], y[1] + a * k[1]]
}

/// One classical RK4 step; `k1` is the slope already known at `(s, y)`.
pub fn rk4_step<F>(rhs: &F, s: f64, y: &State, k1: &State, h: f64) -> State
where
    F: Fn(f64, &State) -> State,
{
    let k2 = rhs(s + 0.5 * h, &axpy(y, 0.5 * h, k1));
    let k3 = rhs(s + 0.5 * h, &axpy(y, 0.5 * h, &k2));
    let k4 = rhs(s + h, &axpy(y, h, &k3));
    [
        y[0] + h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        y[1] + h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
    ]
}

/// Integrates `y' = rhs(s, y)` from `span.0` to `span.1` (either direction).
///
/// Events are checked after every step; a sign change in the requested
/// direction is refined by bisection on the Hermite interpolant until the
/// abscissa bracket is below `opts.tol`. The first terminal hit truncates the
/// solution at the hit. When at least one terminal event is supplied and none
/// fires before the end of the span, [`Error::EventNotBracketed`] is returned.
pub fn integrate<F>(
    rhs: F,
    y0: State,
    span: (f64, f64),
    events: &[Event<'_>],
    opts: &IntegratorOptions,
) -> Result<Solution>
where
    F: Fn(f64, &State) -> State,
{
    opts.validate()?;
    let (s_start, s_end) = span;
    if !(s_start.is_finite() && s_end.is_finite()) || s_start == s_end {
        return Err(Error::InvalidParameter(format!(
            "degenerate integration span [{s_start}, {s_end}]"
        )));
    }
    let dir = (s_end - s_start).signum();
    let h_nom = dir * opts.step;

    let mut sol = Solution {
        s: vec![s_start],
        y: vec![y0],
        dy: vec![rhs(s_start, &y0)],
        hits: Vec::new(),
    };
    let mut guards: Vec<f64> = events.iter().map(|e| e.value(s_start, &y0)).collect();
    let has_terminal = events.iter().any(Event::is_terminal);
    let mut counts = vec![0usize; events.len()];

    let mut steps = 0usize;
    loop {
        let n = sol.s.len() - 1;
        let s = sol.s[n];
        if (s_end - s) * dir <= 0.0 {
            break;
        }
        if steps >= opts.max_steps {
            return Err(Error::MaxStepsExceeded {
                max_steps: opts.max_steps,
                s_end,
            });
        }
        steps += 1;

        let remaining = s_end - s;
        let h = if remaining.abs() < h_nom.abs() * (1.0 + 1e-12) {
            remaining
        } else {
            h_nom
        };
        let y = sol.y[n];
        let dy = sol.dy[n];
        let y_new = rk4_step(&rhs, s, &y, &dy, h);
        let s_new = if h == remaining { s_end } else { s + h };
        let dy_new = rhs(s_new, &y_new);

        let mut step_hits: Vec<EventHit> = Vec::new();
        for (idx, event) in events.iter().enumerate() {
            let g_new = event.value(s_new, &y_new);
            let g_old = guards[idx];
            if event.direction.fires(g_old, g_new) {
                let (sh, yh) = localize(event, s, &y, &dy, s_new, &y_new, &dy_new, g_old, opts.tol);
                step_hits.push(EventHit {
                    event: idx,
                    s: sh,
                    state: yh,
                });
            }
            guards[idx] = g_new;
        }
        step_hits.sort_by(|a, b| ((a.s - s) * dir).total_cmp(&((b.s - s) * dir)));

        let mut stop = None;
        for hit in step_hits {
            sol.hits.push(hit);
            counts[hit.event] += 1;
            if events[hit.event].terminal_after == Some(counts[hit.event]) {
                stop = Some(hit);
                break;
            }
        }
        if let Some(hit) = stop {
            if hit.s != s {
                sol.s.push(hit.s);
                sol.y.push(hit.state);
                sol.dy.push(rhs(hit.s, &hit.state));
            }
            if sol.s.len() < 2 {
                // Hit exactly at the start: keep a degenerate two-sample solution.
                sol.s.push(hit.s);
                sol.y.push(hit.state);
                sol.dy.push(rhs(hit.s, &hit.state));
            }
            return Ok(sol);
        }

        sol.s.push(s_new);
        sol.y.push(y_new);
        sol.dy.push(dy_new);
    }

    if has_terminal {
        return Err(Error::EventNotBracketed { s_start, s_end });
    }
    Ok(sol)
}

#[allow(clippy::too_many_arguments)]
fn localize(
    event: &Event<'_>,
    s0: f64,
    y0: &State,
    d0: &State,
    s1: f64,
    y1: &State,
    d1: &State,
    g0: f64,
    tol: f64,
) -> (f64, State) {
    let (mut a, mut b) = (s0, s1);
    let mut ga = g0;
    let mut yb = *y1;
    while (b - a).abs() > tol {
        let m = 0.5 * (a + b);
        if m == a || m == b {
            break;
        }
        let ym = hermite(s0, y0, d0, s1, y1, d1, m);
        let gm = event.value(m, &ym);
        if event.direction.fires(ga, gm) || (gm == 0.0) {
            b = m;
            yb = ym;
        } else {
            a = m;
            ga = gm;
        }
    }
    (b, yb)
}

/// Brent's method on `[a, b]`. Requires `g(a) * g(b) <= 0`.
pub fn find_root<G>(g: G, a: f64, b: f64, tol: f64) -> Result<f64>
where
    G: Fn(f64) -> f64,
{
    let (mut a, mut b) = (a, b);
    let mut fa = g(a);
    let mut fb = g(b);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa * fb > 0.0 || fa.is_nan() || fb.is_nan() {
        return Err(Error::NoBracket { a, b, ga: fa, gb: fb });
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..200 {
        if fb * fc > 0.0 {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * tol;
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol1 { d } else { tol1.copysign(xm) };
        fb = g(b);
    }
    Ok(b)
}

/// Result of [`discounted_integral`]: the tail-corrected value and a bound on
/// the error committed by truncating the horizon.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscountedIntegral {
    pub value: f64,
    pub tail_bound: f64,
    pub horizon: f64,
}

/// Horizon at which `e^{-lambda T} / lambda` drops to `1e-8`.
pub fn default_truncation(lambda: f64) -> f64 {
    ((1.0 / (1e-8 * lambda)).ln() / lambda).max(1.0 / lambda)
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

struct Gk15 {
    kronrod: f64,
    gauss: f64,
    sup: f64,
}

fn gk15<G: Fn(f64) -> f64>(g: &G, a: f64, b: f64) -> Gk15 {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = g(center);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    let mut sup = fc.abs();
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = g(center - dx);
        let f2 = g(center + dx);
        sup = sup.max(f1.abs()).max(f2.abs());
        kronrod += WGK[j] * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    Gk15 {
        kronrod: kronrod * half,
        gauss: gauss * half,
        sup,
    }
}

/// Adaptive Gauss-Kronrod quadrature of `g` on `[a, b]` to absolute tolerance `tol`.
/// Returns the integral and the largest `|g|` seen at the nodes.
pub fn integrate_adaptive<G: Fn(f64) -> f64>(g: &G, a: f64, b: f64, tol: f64, panels: usize) -> (f64, f64) {
    let panels = panels.max(1);
    let width = (b - a) / panels as f64;
    let total = (b - a).abs().max(f64::MIN_POSITIVE);
    let mut stack: Vec<(f64, f64, u32)> = (0..panels)
        .rev()
        .map(|i| (a + i as f64 * width, a + (i + 1) as f64 * width, 0))
        .collect();
    let mut sum = 0.0;
    let mut sup: f64 = 0.0;
    while let Some((lo, hi, depth)) = stack.pop() {
        let est = gk15(g, lo, hi);
        sup = sup.max(est.sup);
        let local_tol = tol * (hi - lo).abs() / total;
        if (est.kronrod - est.gauss).abs() <= local_tol.max(1e-15 * est.kronrod.abs()) || depth >= 40 {
            sum += est.kronrod;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    (sum, sup)
}

/// Approximates `int_0^inf e^{-lambda t} g(t) dt`.
///
/// The finite part is integrated adaptively on `[0, t_trunc]`; the tail is
/// estimated by freezing `g` at `g(t_trunc)`. The reported `tail_bound` is
/// `2 sup|g| e^{-lambda t_trunc} / lambda`, which dominates the tail error for
/// any `g` bounded by the sampled supremum.
pub fn discounted_integral<G>(g: G, lambda: f64, t_trunc: f64, tol: f64) -> Result<DiscountedIntegral>
where
    G: Fn(f64) -> f64,
{
    if !(lambda > 0.0) || !(t_trunc > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "discounted integral needs lambda > 0, T > 0, tol > 0 (got {lambda}, {t_trunc}, {tol})"
        )));
    }
    let integrand = |t: f64| (-lambda * t).exp() * g(t);
    let panels = ((lambda * t_trunc).ceil() as usize * 2).clamp(16, 4096);
    let (head, _) = integrate_adaptive(&integrand, 0.0, t_trunc, tol, panels);
    let g_end = g(t_trunc);
    let weight = (-lambda * t_trunc).exp() / lambda;
    // sup of |g| sampled on a uniform grid (cheap, independent of the quadrature nodes)
    let sup = (0..=256)
        .map(|i| g(t_trunc * i as f64 / 256.0).abs())
        .fold(g_end.abs(), f64::max);
    let value = head + g_end * weight;
    if !value.is_finite() {
        return Err(Error::InvalidParameter("non-finite discounted integral".into()));
    }
    Ok(DiscountedIntegral {
        value,
        tail_bound: 2.0 * sup * weight,
        horizon: t_trunc,
    })
}

/// Thomas algorithm for a diagonally dominant tridiagonal system.
/// `lower[0]` and `upper[n-1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c_star = vec![0.0; n];
    let mut d_star = vec![0.0; n];
    c_star[0] = upper[0] / diag[0];
    d_star[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c_star[i - 1];
        c_star[i] = if i + 1 < n { upper[i] / m } else { 0.0 };
        d_star[i] = (rhs[i] - lower[i] * d_star[i - 1]) / m;
    }
    let mut x = d_star;
    for i in (0..n - 1).rev() {
        let next = x[i + 1];
        x[i] -= c_star[i] * next;
    }
    x
}
