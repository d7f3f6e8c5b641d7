//! One function per subcommand. Each writes its artifacts into the output directory.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use wavegame::control::{legendre, verify_equilibrium, CostModel, EquilibriumReport, VerifyOptions};
use wavegame::cooperation::{base_discount, compare_payoffs, lagrangian_family, CoopConfig, CoopOptions, CooperationReport};
use wavegame::export;
use wavegame::pde::{cubic_front_speed, simulate_baseline, simulate_reversed, Scheme, SimulationOptions};
use wavegame::phase_plane::{stable_manifold, unstable_manifold, Bistable, EigenData, EtaClass, EtaKind, PhasePoint};
use wavegame::profile::Profile;
use wavegame::wave::{
    ck_of_lambda, construct_periodic, construct_wave, speed_maps as compute_speed_maps, validity_report,
    FishermanDensity, ValidityCheck, ValidityReport, WaveOptions, WaveProfile,
};

use crate::config::{ExperimentConfig, SimulationMode};
use crate::error::CliError;

pub type Action = fn(&ExperimentConfig, &Output) -> Result<(), CliError>;

/// Output directory plus the verbosity flag.
pub struct Output {
    dir: PathBuf,
    quiet: bool,
}

impl Output {
    pub fn create(dir: &Path, quiet: bool) -> Result<Self, CliError> {
        fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            quiet,
        })
    }

    fn file(&self, name: &str) -> Result<BufWriter<File>, CliError> {
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    pub fn json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut w = self.file(name)?;
        serde_json::to_writer_pretty(&mut w, value)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }

    fn csv(&self, name: &str, write: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<(), CliError> {
        let mut w = self.file(name)?;
        write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    fn say(&self, line: impl AsRef<str>) {
        if !self.quiet {
            println!("{}", line.as_ref());
        }
    }
}

/// Configured speed, or `c_fraction * c_k(lambda)`.
fn wave_speed(config: &ExperimentConfig, f: &Bistable, cost: &CostModel, k: usize) -> Result<f64, CliError> {
    if let Some(c) = config.c {
        return Ok(c);
    }
    let bound = ck_of_lambda(f, cost.lagrangian.as_ref(), cost.lambda, k, &WaveOptions::default().manifold)?;
    if bound.saturated {
        return Err(wavegame::Error::InvalidParameter(format!("c_{k}({}) is unbounded; set c explicitly", cost.lambda)).into());
    }
    Ok(config.c_fraction * bound.speed)
}

fn sample_window(config: &ExperimentConfig, lo: f64, hi: f64) -> (f64, f64, usize) {
    let lo = config.grid.x_lo.unwrap_or(lo);
    let hi = config.grid.x_hi.unwrap_or(hi);
    let n = ((hi - lo) / config.grid.dx).ceil().max(1.0) as usize;
    (lo, hi, n)
}

#[derive(Serialize)]
struct Equilibrium {
    u: f64,
    kind: String,
    eigen: Option<EigenData>,
}

#[derive(Serialize)]
struct Equilibria {
    c: f64,
    spiral_threshold: f64,
    equilibria: Vec<Equilibrium>,
    eta_class: Option<EtaClass>,
    gamma0_end: PhasePoint,
    gamma0_end_distance: f64,
}

pub fn phase_portrait(config: &ExperimentConfig, out: &Output) -> Result<(), CliError> {
    let f = config.nonlinearity()?;
    let c = config.c.unwrap_or(0.1);
    let opts = WaveOptions::default();
    let gamma0 = unstable_manifold(&f, c, &opts.manifold)?;
    let gamma1 = stable_manifold(&f, c, 0.5 * f.eta_under(), &opts.manifold)?;
    let energy = |pt: PhasePoint| f.energy(pt);
    out.csv("gamma0.csv", |w| export::trajectory_with_energy(w, &gamma0, energy))?;
    out.csv("gamma1.csv", |w| export::trajectory_with_energy(w, &gamma1, energy))?;
    out.csv("invariant_region.csv", |w| {
        export::phase_curve(w, &f.invariant_region_boundary(401))
    })?;
    let saddle = |u: f64| -> Result<Equilibrium, CliError> {
        Ok(Equilibrium {
            u,
            kind: "saddle".into(),
            eigen: Some(f.linearize(u, c)?),
        })
    };
    let eta_class = if c > 0.0 { Some(f.classify_eta(c)?) } else { None };
    let middle = Equilibrium {
        u: f.eta(),
        kind: match eta_class {
            None => "centre".into(),
            Some(EtaClass {
                kind: EtaKind::SpiralSink,
                ..
            }) => "spiral_sink".into(),
            Some(_) => "stable_node".into(),
        },
        eigen: f.linearize(f.eta(), c).ok(),
    };
    let end = gamma0.last();
    let report = Equilibria {
        c,
        spiral_threshold: f.spiral_threshold(),
        equilibria: vec![saddle(0.0)?, middle, saddle(1.0)?],
        eta_class,
        gamma0_end: end,
        gamma0_end_distance: (end.u - f.eta()).hypot(end.p),
    };
    out.json("equilibria.json", &report)?;
    out.say(format!(
        "c = {c}: gamma0 {} points, gamma1 {} points, gamma0 ends {:.3e} from (eta, 0)",
        gamma0.len(),
        gamma1.len(),
        report.gamma0_end_distance
    ));
    Ok(())
}

#[derive(Serialize)]
struct WaveSummary {
    lambda: f64,
    c: f64,
    k: usize,
    periodic: bool,
    s1: f64,
    mass: f64,
    all_passed: bool,
    #[serde(flatten)]
    report: ValidityReport,
}

pub fn build_wave(config: &ExperimentConfig, out: &Output) -> Result<(), CliError> {
    let f = config.nonlinearity()?;
    let base = config.cost()?;
    let c = wave_speed(config, &f, &base, config.k)?;
    let cost = base.with_speed(c);
    let opts = WaveOptions::default();
    let (density, report) = if config.periodic {
        let (wave, density) = construct_periodic(&f, &cost, &opts)?;
        let (lo, hi, n) = sample_window(config, 0.0, wave.period);
        out.csv("wave.csv", |w| export::wave(w, &wave, Some(&density), lo, hi, n))?;
        let defect = wave.periodicity_defect(&density, 2)?;
        let min_m = density.samples().iter().copied().fold(f64::INFINITY, f64::min);
        let report = ValidityReport {
            checks: vec![
                ValidityCheck {
                    name: "periodicity",
                    passed: defect <= 1e-6,
                    value: defect,
                },
                ValidityCheck {
                    name: "nonnegative_density",
                    passed: min_m >= 0.0,
                    value: min_m,
                },
            ],
        };
        out.say(format!("periodic wave: c = {c}, period {:.6}, defect {defect:.2e}", wave.period));
        (density, report)
    } else {
        let (wave, density) = construct_wave(&f, &cost, config.k, &opts)?;
        let (lo, hi) = wave.window();
        let (lo, hi, n) = sample_window(config, lo, hi);
        out.csv("wave.csv", |w| export::wave(w, &wave, Some(&density), lo, hi, n))?;
        let report = validity_report(&wave, &density, &cost, config.k);
        out.say(format!("k = {} wave: c = {c}, s1 = {:.6}", config.k, density.s1()));
        (density, report)
    };
    out.csv("density.csv", |w| export::density(w, &density))?;
    let summary = WaveSummary {
        lambda: config.lambda,
        c,
        k: config.k,
        periodic: config.periodic,
        s1: density.s1(),
        mass: density.mass(),
        all_passed: report.all_passed(),
        report,
    };
    out.json("validity_report.json", &summary)?;
    out.say(format!("validity checks {}", if summary.all_passed { "passed" } else { "FAILED" }));
    Ok(())
}

#[derive(Serialize)]
struct SpeedMapSummary {
    c_max: f64,
    spiral_threshold: f64,
    lambdas: Vec<f64>,
    /// `saturated[k][i]` flags `c_k(lambdas[i])` as unbounded on the scanned box.
    saturated: Vec<Vec<bool>>,
}

pub fn speed_maps(config: &ExperimentConfig, out: &Output) -> Result<(), CliError> {
    if config.speed_maps.lambdas.is_empty() {
        return Err(CliError::Config("speed_maps.lambdas is empty".into()));
    }
    let f = config.nonlinearity()?;
    let l = config.lagrangian()?;
    let maps = compute_speed_maps(
        &f,
        &l,
        &config.speed_maps.lambdas,
        config.speed_maps.k_max,
        &WaveOptions::default().manifold,
    )?;
    out.csv("speedmaps.csv", |w| export::speed_maps(w, &maps))?;
    out.json(
        "speedmaps.json",
        &SpeedMapSummary {
            c_max: maps.c_max,
            spiral_threshold: maps.spiral_threshold,
            lambdas: maps.lambdas.clone(),
            saturated: maps
                .curves
                .iter()
                .map(|curve| curve.iter().map(|b| b.saturated).collect())
                .collect(),
        },
    )?;
    out.say(format!(
        "{} discounts, k = 0..={}, c_max = {:.6}",
        maps.lambdas.len(),
        config.speed_maps.k_max,
        maps.c_max
    ));
    Ok(())
}

fn build(config: &ExperimentConfig, f: &Bistable) -> Result<(WaveProfile, FishermanDensity, CostModel), CliError> {
    let base = config.cost()?;
    let c = wave_speed(config, f, &base, config.k)?;
    let cost = base.with_speed(c);
    let (wave, density) = construct_wave(f, &cost, config.k, &WaveOptions::default())?;
    Ok((wave, density, cost))
}

pub fn verify(config: &ExperimentConfig, out: &Output) -> Result<(), CliError> {
    let f = config.nonlinearity()?;
    let (wave, density, cost) = build(config, &f)?;
    let report: EquilibriumReport = verify_equilibrium(&wave, &density, &cost, &VerifyOptions::default())?;
    out.json("equilibrium_report.json", &report)?;
    let ham = legendre(cost.lagrangian.clone())?;
    out.csv("value_function.csv", |w| export::value_grid(w, &report.value_grid, &ham))?;
    out.say(format!(
        "lambda = {}, c = {}: {:?}, min gap {:.3e}, feedback residual {:.3e}",
        cost.lambda,
        cost.c,
        report.verdict,
        report.min_gap(),
        report.feedback_residual
    ));
    Ok(())
}

#[derive(Serialize)]
struct SimulationSummary {
    mode: SimulationMode,
    c: Option<f64>,
    closed_form_speed: f64,
    fitted_speed: f64,
    fit_residual: f64,
    clip_mass: f64,
    shape_error: Option<f64>,
    x_lo: f64,
    x_hi: f64,
}

pub fn simulate(config: &ExperimentConfig, out: &Output) -> Result<(), CliError> {
    let f = config.nonlinearity()?;
    let s = &config.simulate;
    let opts = SimulationOptions {
        dx: config.grid.dx,
        dt: config.grid.dt,
        t_end: config.horizon,
        level: s.level,
        scheme: if s.explicit { Scheme::Explicit } else { Scheme::Imex },
        output_every: s.output_every,
        half_width: s.half_width,
        initial_shift: 0.0,
    };
    let (sim, c) = match s.mode {
        SimulationMode::Baseline => (simulate_baseline(&f, &opts)?, None),
        SimulationMode::Reversed | SimulationMode::Contrast => {
            let (wave, density, cost) = build(config, &f)?;
            let harvest = (s.mode == SimulationMode::Reversed).then_some(&density);
            (simulate_reversed(&f, &wave, harvest, cost.c, &opts)?, Some(cost.c))
        }
    };
    out.csv("snapshots.csv", |w| export::snapshots(w, &sim, s.stride))?;
    out.csv("front.csv", |w| export::front(w, &sim.trace))?;
    let summary = SimulationSummary {
        mode: s.mode,
        c,
        closed_form_speed: cubic_front_speed(f.eta()),
        fitted_speed: sim.trace.fitted_speed,
        fit_residual: sim.trace.fit_residual,
        clip_mass: sim.clip_mass,
        shape_error: sim.shape_error,
        x_lo: sim.grid.x_lo,
        x_hi: sim.grid.x_hi,
    };
    out.json("simulation.json", &summary)?;
    out.say(format!(
        "{:?} run to T = {}: fitted speed {:.6}",
        s.mode, config.horizon, summary.fitted_speed
    ));
    Ok(())
}

#[derive(Serialize)]
struct CooperationSummary<'a> {
    #[serde(flatten)]
    report: &'a CooperationReport,
    improved_fraction: f64,
    mass_defect: f64,
    horizon: f64,
}

pub fn cooperate(config: &ExperimentConfig, out: &Output) -> Result<(), CliError> {
    let f = config.nonlinearity()?;
    let opts = WaveOptions::default();
    let co = &config.cooperate;
    let lambda0 = match co.lambda0 {
        Some(l) => l,
        None => base_discount(&f, &(1..=10).map(|i| 0.1 * i as f64).collect::<Vec<_>>(), &opts)?,
    };
    let lambda = lambda0 / co.divisor;
    let cost = lagrangian_family(lambda, lambda0, f.eta_under())?;
    let (wave, density) = construct_wave(&f, &cost, 0, &opts)?;
    let coop = CoopConfig::new(density.s1(), lambda0, lambda, f.eta_under())?;
    let coop_opts = CoopOptions {
        dx: co.dx,
        dt: co.dt,
        delta: co.delta,
        samples: co.samples,
        output_every: co.output_every,
        ..CoopOptions::default()
    };
    let report = compare_payoffs(&f, &wave, &density, &coop, &coop_opts)?;
    out.csv("space_time.csv", |w| export::cooperation_space_time(w, &report, co.stride))?;
    let summary = CooperationSummary {
        report: &report,
        improved_fraction: report.improved_fraction(),
        mass_defect: report.mass_defect,
        horizon: report.horizon,
    };
    out.json("cooperation.json", &summary)?;
    out.say(format!(
        "lambda0 = {lambda0:.6}, lambda = {lambda:.6}: {:.0}% of harvesters gain, invasion at t = {:.2}",
        100.0 * summary.improved_fraction,
        report.invasion.t_detect
    ));
    Ok(())
}
