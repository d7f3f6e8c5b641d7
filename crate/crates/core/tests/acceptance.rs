//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use wavegame::control::{
    certified_range, convex_regime, hjb_solve, verify_equilibrium, CostModel, EquilibriumReport, HjbGrid,
    PowerLagrangian, ValueGrid, VerifyOptions,
};
use wavegame::cooperation::{
    base_discount, compare_payoffs, family_invariance, lagrangian_family, spread_mass, CoopConfig, CoopOptions,
};
use wavegame::pde::{cubic_front_speed, simulate_baseline, simulate_reversed, SimulationOptions};
use wavegame::phase_plane::{gamma0_extrema, Bistable, ManifoldOptions};
use wavegame::profile::{AffineProfile, Profile};
use wavegame::wave::{
    c0_of_lambda, construct_periodic, construct_wave, validity_report, FishermanDensity, WaveOptions, WaveProfile,
    AFFINE_TOL,
};
use wavegame::{Error, Result};

type Outcome = Result<(bool, String)>;

/// Results shared between criteria.
#[derive(Default)]
struct Ledger {
    /// `(L(c), Theta(0))` of every certified equilibrium.
    certified: Vec<(f64, f64)>,
    /// `(lipschitz_est, sup |Theta'| / lambda)` of every solved value grid.
    lipschitz: Vec<(f64, f64)>,
}

fn cubic() -> Bistable {
    Bistable::cubic(0.3).expect("cubic")
}

fn sup_slope(profile: &dyn Profile) -> f64 {
    let (lo, hi) = profile.window();
    let n = ((hi - lo) / 1e-3).ceil() as usize;
    (0..=n)
        .map(|i| profile.theta_prime(lo + (hi - lo) * i as f64 / n as f64).abs())
        .fold(0.0, f64::max)
}

fn record(ledger: &mut Ledger, wave: &WaveProfile, cost: &CostModel, report: &EquilibriumReport) {
    record_grid(ledger, &report.value_grid, sup_slope(wave).max(wave.bridge.slope) / cost.lambda);
    if report.certified {
        ledger.certified.push((cost.cost(cost.c), wave.theta(0.0)));
    }
}

fn record_grid(ledger: &mut Ledger, grid: &ValueGrid, bound: f64) {
    ledger.lipschitz.push((grid.lipschitz_est, bound));
}

fn baseline_speed() -> Outcome {
    let opts = SimulationOptions::default();
    let mut ok = true;
    let mut detail = Vec::new();
    for eta in [0.2, 0.3, 0.4] {
        let f = Bistable::cubic(eta)?;
        let sim = simulate_baseline(&f, &opts)?;
        let exact = cubic_front_speed(eta);
        let rel = (sim.trace.fitted_speed - exact).abs() / exact.abs();
        ok &= rel <= 0.02;
        detail.push(format!("eta={eta}: rel err {rel:.2e}"));
    }
    let sim = simulate_baseline(&Bistable::cubic(0.5)?, &opts)?;
    ok &= sim.trace.fitted_speed.abs() <= 0.01;
    detail.push(format!("eta=0.5: speed {:.2e}", sim.trace.fitted_speed));
    Ok((ok, detail.join(", ")))
}

fn construction_validity() -> Outcome {
    let f = cubic();
    let opts = WaveOptions::default();
    let h = 0.02;
    let mut ok = true;
    let mut worst = [0.0f64; 4];
    for lambda in [0.39, 0.79, 2.0] {
        let base = CostModel::quadratic(lambda, 1.0)?;
        let c0 = c0_of_lambda(&f, base.lagrangian.as_ref(), lambda, &opts.manifold)?.speed;
        for q in [0.25, 0.5, 0.9] {
            let cost = base.with_speed(q * c0);
            let (w, d) = construct_wave(&f, &cost, 0, &opts)?;
            let report = validity_report(&w, &d, &cost, 0);
            let min_m = d.samples().iter().copied().fold(f64::INFINITY, f64::min);
            let affine = report.check("affine_on_support").map_or(f64::INFINITY, |c| c.value);
            let junction = w.junction_defects().into_iter().fold(0.0, f64::max);
            let scale = w.curvature_bound().max(1.0);
            let residual = w.ode_residual(&d, h) / scale;
            let increasing = report.check("bump_count").is_some_and(|c| c.passed);
            ok &= min_m >= 0.0 && increasing && affine <= AFFINE_TOL && junction <= 1e-8;
            ok &= residual <= 10.0 * h * h;
            worst = [
                worst[0].max(affine),
                worst[1].max(junction),
                worst[2].max(residual / (h * h)),
                worst[3].min(min_m),
            ];
        }
        let too_fast = base.with_speed(1.01 * c0);
        let refused = matches!(construct_wave(&f, &too_fast, 0, &opts), Err(Error::SpeedTooLarge { .. }));
        ok &= refused;
    }
    Ok((
        ok,
        format!(
            "slope dev {:.1e}, junction {:.1e}, residual {:.1e} h^2 scale, min M {:.1e}",
            worst[0], worst[1], worst[2], worst[3]
        ),
    ))
}

fn speed_map_monotonicity() -> Outcome {
    let f = cubic();
    let mo = ManifoldOptions::default();
    let quad = PowerLagrangian::quadratic();
    let lambdas: Vec<f64> = (0..10).map(|i| 0.1 + 4.9 * i as f64 / 9.0).collect();
    let c0: Vec<f64> = lambdas
        .iter()
        .map(|&l| c0_of_lambda(&f, &quad, l, &mo).map(|b| b.speed))
        .collect::<Result<_>>()?;
    let c0_ok = c0.windows(2).all(|w| w[1] < w[0]) && c0.iter().all(|c| c.is_finite());
    let speeds: Vec<f64> = (1..=20).map(|i| 0.25 * i as f64).collect();
    let slopes: Vec<f64> = speeds
        .iter()
        .map(|&c| gamma0_extrema(&f, c, &mo).map(|e| e.max_slope))
        .collect::<Result<_>>()?;
    let slope_ok = slopes.windows(2).all(|w| w[1] < w[0]);
    let at20 = gamma0_extrema(&f, 20.0, &mo)?.max_slope;
    let bound = f.sup_norm() / 20.0;
    Ok((
        c0_ok && slope_ok && at20 <= bound,
        format!(
            "c0 {:.4}..{:.4}, slope max {:.4}..{:.4}, at c=20 {at20:.3e} <= {bound:.3e}",
            c0[0], c0[9], slopes[0], slopes[19]
        ),
    ))
}

fn strongly_convex(ledger: &mut Ledger) -> Outcome {
    let f = cubic();
    let opts = WaveOptions::default();
    let base = CostModel::quadratic(1.0, 1.0)?;
    let regime = convex_regime(&f, &base, 1.1, 0.9, 0.5, &opts)?;
    let cost = CostModel::quadratic(regime.lambda, regime.c)?;
    let (w, d) = construct_wave(&f, &cost, 0, &opts)?;
    let vopts = VerifyOptions::default();
    let report = verify_equilibrium(&w, &d, &cost, &vopts)?;
    record(ledger, &w, &cost, &report);
    let cells = report.feedback_residual / report.value_grid.control_step;
    let tol = HjbGrid::new(0.0, 1.0, 1.0).tol;
    let ok = cells <= vopts.feedback_cells
        && report.value_identity_residual <= 5.0 * tol
        && report.min_gap() >= -vopts.gap_tol;
    Ok((
        ok,
        format!(
            "lambda {:.4} = 1.1 lambda0 ({:.4}), c {:.4}: feedback {cells:.2} cells, identity {:.1e}, min gap {:.1e}",
            regime.lambda,
            regime.lambda0,
            regime.c,
            report.value_identity_residual,
            report.min_gap()
        ),
    ))
}

fn small_speed_range(ledger: &mut Ledger) -> Outcome {
    let f = cubic();
    let opts = WaveOptions::default();
    let vopts = VerifyOptions::default();
    let cost = CostModel::quadratic(0.79, 1.0)?;
    let fractions: Vec<f64> = (1..=20).map(|i| 0.05 * i as f64).collect();
    let range = certified_range(&f, &cost, &fractions, 10, &opts, &vopts)?;
    let certified: Vec<_> = range.samples.iter().filter(|s| s.certified).collect();
    let negative = certified.iter().all(|s| s.s_minus.is_some_and(|x| x < 0.0));
    let ordered = certified.windows(2).all(|w| match (w[0].theta_at_s_minus, w[1].theta_at_s_minus) {
        (Some(a), Some(b)) => a < b,
        _ => false,
    });
    for s in &certified {
        let c_cost = cost.with_speed(s.c);
        let (w, d) = construct_wave(&f, &c_cost, 0, &opts)?;
        let report = verify_equilibrium(&w, &d, &c_cost, &vopts)?;
        record(ledger, &w, &c_cost, &report);
    }
    let ok = !certified.is_empty() && range.c_hi <= range.c0 && negative && ordered;
    let (lo, hi) = (
        certified.first().and_then(|s| s.theta_at_s_minus).unwrap_or(f64::NAN),
        certified.last().and_then(|s| s.theta_at_s_minus).unwrap_or(f64::NAN),
    );
    Ok((
        ok,
        format!(
            "certified c in [{:.4}, {:.4}] ({} speeds), c0 {:.4}, Theta(s-) {lo:.4}..{hi:.4}",
            range.c_lo,
            range.c_hi,
            certified.len(),
            range.c0
        ),
    ))
}

fn hjb_oracle(ledger: &mut Ledger) -> Outcome {
    let mut ok = true;
    let mut worst_err: f64 = 0.0;
    for (lambda, c, theta0) in [(0.79, 0.05, 0.4), (0.3, 0.5, 0.2), (2.0, 0.1, 0.6)] {
        let cost = CostModel::quadratic(lambda, c)?;
        let prof = AffineProfile {
            theta0,
            slope: cost.bridge_slope(),
        };
        let vg = hjb_solve(&prof, &cost, HjbGrid::new(-20.0, 20.0, 0.02))?;
        let bound = 5.0 * (vg.ds + vg.dt);
        for (i, &s) in vg.s.iter().enumerate() {
            if s.abs() < 10.0 {
                let err = (vg.v[i] - (prof.theta(s) - cost.cost(c)) / lambda).abs();
                worst_err = worst_err.max(err / bound);
                ok &= err <= bound && (vg.policy[i] - c).abs() <= vg.control_step;
            }
        }
        record_grid(ledger, &vg, prof.slope / lambda);
    }
    let lip_ok = ledger.lipschitz.iter().all(|&(est, bound)| est <= bound + 1e-8);
    let ratio = ledger
        .lipschitz
        .iter()
        .map(|&(est, bound)| est / bound)
        .fold(0.0, f64::max);
    Ok((
        ok && lip_ok,
        format!(
            "affine error {:.1e} of bound, Lipschitz est / bound <= {ratio:.4} over {} grids",
            worst_err,
            ledger.lipschitz.len()
        ),
    ))
}

fn reversed_wave() -> Outcome {
    let f = cubic();
    let c = 0.08;
    let cost = CostModel::quadratic(0.79, c)?;
    let (w, d) = construct_wave(&f, &cost, 0, &WaveOptions::default())?;
    let t_end = 20.0 / c;
    let opts = SimulationOptions {
        dx: 0.025,
        dt: 0.00125,
        t_end,
        half_width: 0.3 * t_end,
        ..SimulationOptions::default()
    };
    let harvested = match simulate_reversed(&f, &w, Some(&d), c, &opts) {
        Ok(sim) => {
            let speed_err = (sim.trace.fitted_speed - c).abs() / c;
            let shape = sim.shape_error.unwrap_or(f64::INFINITY);
            (
                speed_err <= 0.05 && shape <= 0.02,
                format!("speed {:.4} vs c {c} ({:.1}%), shape error {shape:.3}", sim.trace.fitted_speed, 100.0 * speed_err),
            )
        }
        Err(e) => (false, format!("harvested run: {e}")),
    };
    let contrast = simulate_reversed(&f, &w, None, c, &opts)?;
    let exact = cubic_front_speed(f.eta());
    let rel = (contrast.trace.fitted_speed - exact).abs() / exact.abs();
    let contrast_ok = contrast.trace.fitted_speed < 0.0 && rel <= 0.05;
    Ok((
        harvested.0 && contrast_ok,
        format!("{}; contrast speed {:.4} ({:.2}% off)", harvested.1, contrast.trace.fitted_speed, 100.0 * rel),
    ))
}

fn bumps_and_periodic() -> Outcome {
    let f = cubic();
    let opts = WaveOptions::default();
    let cost = CostModel::quadratic(0.39, 0.02)?;
    let mut ok = true;
    let mut detail = Vec::new();
    for k in 1..=2 {
        let (w, d) = construct_wave(&f, &cost, k, &opts)?;
        let changes = w.slope_sign_changes(1e-2);
        let valid = validity_report(&w, &d, &cost, k).all_passed();
        ok &= changes == 2 * k && valid;
        detail.push(format!("k={k}: {} maxima, checks {}", changes / 2, if valid { "ok" } else { "failed" }));
    }
    let (pw, pd) = construct_periodic(&f, &cost, &opts)?;
    let defect = pw.periodicity_defect(&pd, 2)?;
    ok &= defect <= 1e-6;
    detail.push(format!("periodic defect {defect:.1e}"));
    Ok((ok, detail.join(", ")))
}

fn cooperation() -> Outcome {
    let f = cubic();
    let opts = WaveOptions::default();
    let fractions: Vec<f64> = (1..=10).map(|i| 0.1 * i as f64).collect();
    let lambda0 = base_discount(&f, &fractions, &opts)?;
    let lambda = lambda0 / 8.0;
    let base_cost = lagrangian_family(lambda0, lambda0, f.eta_under())?;
    let (base, _) = construct_wave(&f, &base_cost, 0, &opts)?;
    let cost = lagrangian_family(lambda, lambda0, f.eta_under())?;
    let (w, d) = construct_wave(&f, &cost, 0, &opts)?;
    let config = CoopConfig::new(d.s1(), lambda0, lambda, f.eta_under())?;
    let report = compare_payoffs(&f, &w, &d, &config, &CoopOptions::default());
    let (fraction, invasion, mass_defect) = match &report {
        Ok(r) => (r.improved_fraction(), format!("T_detect {:.1}", r.invasion.t_detect), r.mass_defect),
        Err(e) => (0.0, format!("{e}"), spread_defect(&d)),
    };
    let mut invariance: f64 = 0.0;
    for q in [1.0, 2.0, 4.0, 8.0] {
        invariance = invariance.max(family_invariance(&f, &base, lambda0 / q, lambda0, &opts)?);
    }
    let ok = report.is_ok() && fraction >= 0.95 && mass_defect <= 1e-8 && invariance <= AFFINE_TOL;
    Ok((
        ok,
        format!(
            "lambda0 {lambda0:.4}, improved {:.0}% of 20, {invasion}, mass defect {mass_defect:.1e}, invariance {invariance:.1e}",
            100.0 * fraction
        ),
    ))
}

fn spread_defect(d: &FishermanDensity) -> f64 {
    (1..=20)
        .map(|i| (spread_mass(5.0 * i as f64, d) - d.mass()).abs() / d.mass())
        .fold(0.0, f64::max)
}

fn max_speed_condition(ledger: &Ledger) -> Outcome {
    let all = ledger.certified.iter().all(|&(lc, theta0)| lc <= theta0);
    let f = cubic();
    let cost = CostModel::quadratic(0.79, 0.05)?;
    let (w, d) = construct_wave(&f, &cost, 0, &WaveOptions::default())?;
    let expensive = CostModel::new(Arc::new(PowerLagrangian::new(1e3, 2.0)?), 0.79, 0.05)?;
    let flagged = validity_report(&w, &d, &expensive, 0)
        .check("max_speed")
        .is_some_and(|c| !c.passed);
    Ok((
        all && flagged && !ledger.certified.is_empty(),
        format!(
            "{} certified equilibria satisfy L(c) <= Theta(0), synthetic violation {}",
            ledger.certified.len(),
            if flagged { "flagged" } else { "missed" }
        ),
    ))
}

fn main() -> ExitCode {
    let mut ledger = Ledger::default();
    let mut failures = 0;
    let mut report = |n: usize, outcome: Outcome, started: Instant| {
        let secs = started.elapsed().as_secs_f64();
        let (ok, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        if !ok {
            failures += 1;
        }
        println!(
            "criterion {n}: {} ({detail}) [{secs:.1}s]",
            if ok { "PASS" } else { "FAIL" }
        );
    };
    let t = Instant::now();
    report(1, baseline_speed(), t);
    let t = Instant::now();
    report(2, construction_validity(), t);
    let t = Instant::now();
    report(3, speed_map_monotonicity(), t);
    let t = Instant::now();
    report(4, strongly_convex(&mut ledger), t);
    let t = Instant::now();
    report(5, small_speed_range(&mut ledger), t);
    let t = Instant::now();
    report(6, hjb_oracle(&mut ledger), t);
    let t = Instant::now();
    report(7, reversed_wave(), t);
    let t = Instant::now();
    report(8, bumps_and_periodic(), t);
    let t = Instant::now();
    report(9, cooperation(), t);
    let t = Instant::now();
    report(10, max_speed_condition(&ledger), t);
    println!("{failures} of 10 criteria failed");
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
