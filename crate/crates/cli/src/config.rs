//! Experiment configuration: one JSON document, every field defaulted.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use wavegame::control::{CostModel, PowerLagrangian};
use wavegame::phase_plane::Bistable;

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearityConfig {
    Cubic { eta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LagrangianConfig {
    /// `kappa |a|^exponent`.
    Power { kappa: f64, exponent: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub dx: f64,
    pub dt: f64,
    /// Output window of sampled profiles; the profile's own window when unset.
    pub x_lo: Option<f64>,
    pub x_hi: Option<f64>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            dx: 0.05,
            dt: 0.0025,
            x_lo: None,
            x_hi: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimulationMode {
    Baseline,
    Reversed,
    /// Reversed-wave initial data without harvesting.
    Contrast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub mode: SimulationMode,
    pub level: f64,
    pub output_every: f64,
    pub half_width: f64,
    pub explicit: bool,
    /// Every `stride`-th node is written to the snapshot file.
    pub stride: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            mode: SimulationMode::Baseline,
            level: 0.5,
            output_every: 1.0,
            half_width: 20.0,
            explicit: false,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpeedMapConfig {
    pub lambdas: Vec<f64>,
    pub k_max: usize,
}

impl Default for SpeedMapConfig {
    fn default() -> Self {
        Self {
            lambdas: (1..=10).map(|i| 0.5 * i as f64).collect(),
            k_max: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CooperateConfig {
    /// Base discount; searched on tenths of the largest admissible value when unset.
    pub lambda0: Option<f64>,
    /// The game is played at `lambda0 / divisor`.
    pub divisor: f64,
    pub samples: usize,
    pub delta: f64,
    pub dx: f64,
    pub dt: f64,
    pub output_every: f64,
    pub stride: usize,
}

impl Default for CooperateConfig {
    fn default() -> Self {
        Self {
            lambda0: None,
            divisor: 8.0,
            samples: 20,
            delta: 0.05,
            dx: 0.1,
            dt: 0.05,
            output_every: 5.0,
            stride: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub nonlinearity: NonlinearityConfig,
    pub lagrangian: LagrangianConfig,
    pub lambda: f64,
    /// Wave speed; `c_fraction * c_k(lambda)` when unset.
    pub c: Option<f64>,
    pub c_fraction: f64,
    pub k: usize,
    pub periodic: bool,
    pub grid: GridConfig,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub output: PathBuf,
    pub speed_maps: SpeedMapConfig,
    pub simulate: SimulateConfig,
    pub cooperate: CooperateConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            nonlinearity: NonlinearityConfig::Cubic { eta: 0.3 },
            lagrangian: LagrangianConfig::Power {
                kappa: 0.5,
                exponent: 2.0,
            },
            lambda: 0.79,
            c: None,
            c_fraction: 0.5,
            k: 0,
            periodic: false,
            grid: GridConfig::default(),
            horizon: 100.0,
            output: PathBuf::from("out"),
            speed_maps: SpeedMapConfig::default(),
            simulate: SimulateConfig::default(),
            cooperate: CooperateConfig::default(),
        }
    }
}

fn positive(name: &str, value: f64) -> Result<(), CliError> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive and finite (got {value})")))
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let config: Self = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let NonlinearityConfig::Cubic { eta } = self.nonlinearity;
        if !(eta > 0.0 && eta < 1.0) {
            return Err(CliError::Config(format!("eta must lie in (0, 1) (got {eta})")));
        }
        let LagrangianConfig::Power { kappa, exponent } = self.lagrangian;
        positive("lagrangian.kappa", kappa)?;
        if !(exponent > 1.0 && exponent.is_finite()) {
            return Err(CliError::Config(format!("lagrangian.exponent must exceed 1 (got {exponent})")));
        }
        positive("lambda", self.lambda)?;
        if let Some(c) = self.c {
            if !(c >= 0.0 && c.is_finite()) {
                return Err(CliError::Config(format!("c must be non-negative (got {c})")));
            }
        }
        positive("c_fraction", self.c_fraction)?;
        positive("grid.dx", self.grid.dx)?;
        positive("grid.dt", self.grid.dt)?;
        if let (Some(lo), Some(hi)) = (self.grid.x_lo, self.grid.x_hi) {
            if !(lo < hi) {
                return Err(CliError::Config(format!("grid.x_lo must be below grid.x_hi (got {lo}, {hi})")));
            }
        }
        positive("T", self.horizon)?;
        for &l in &self.speed_maps.lambdas {
            positive("speed_maps.lambdas", l)?;
        }
        positive("simulate.level", self.simulate.level)?;
        positive("simulate.output_every", self.simulate.output_every)?;
        positive("simulate.half_width", self.simulate.half_width)?;
        if let Some(l0) = self.cooperate.lambda0 {
            positive("cooperate.lambda0", l0)?;
        }
        if !(self.cooperate.divisor >= 1.0) {
            return Err(CliError::Config(format!(
                "cooperate.divisor must be at least 1 (got {})",
                self.cooperate.divisor
            )));
        }
        if self.cooperate.samples == 0 {
            return Err(CliError::Config("cooperate.samples must be positive".into()));
        }
        positive("cooperate.delta", self.cooperate.delta)?;
        positive("cooperate.dx", self.cooperate.dx)?;
        positive("cooperate.dt", self.cooperate.dt)?;
        positive("cooperate.output_every", self.cooperate.output_every)?;
        Ok(())
    }

    pub fn nonlinearity(&self) -> Result<Bistable, CliError> {
        let NonlinearityConfig::Cubic { eta } = self.nonlinearity;
        Bistable::cubic(eta).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn lagrangian(&self) -> Result<PowerLagrangian, CliError> {
        let LagrangianConfig::Power { kappa, exponent } = self.lagrangian;
        PowerLagrangian::new(kappa, exponent).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Cost model at the configured discount, with a placeholder speed of 1.
    pub fn cost(&self) -> Result<CostModel, CliError> {
        CostModel::new(Arc::new(self.lagrangian()?), self.lambda, 1.0).map_err(|e| CliError::Config(e.to_string()))
    }
}
