use thiserror::Error;

/// Failures raised by the numerical kernels and the model constructions built on them.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("integration exceeded {max_steps} steps before reaching s = {s_end}")]
    MaxStepsExceeded { max_steps: usize, s_end: f64 },
    #[error("no terminal event fired on [{s_start}, {s_end}]")]
    EventNotBracketed { s_start: f64, s_end: f64 },
    #[error("root not bracketed: g({a}) = {ga}, g({b}) = {gb}")]
    NoBracket { a: f64, b: f64, ga: f64, gb: f64 },
    #[error("eta = {0} must lie in (0, 1)")]
    InvalidEta(f64),
    #[error("nonlinearity is not invasive: F(1) = {0} <= 0")]
    NotInvasive(f64),
    #[error("eigenvalues at u* = {u_star} are complex for c = {c}")]
    ComplexEigenvalues { u_star: f64, c: f64 },
    #[error("manifold seed has energy {energy} > 0 (offset too large)")]
    SeedTooLarge { energy: f64 },
    #[error("stable-manifold seed has non-positive slope {0}")]
    SeedBranchWrong(f64),
    #[error("trajectory left the physical range: u = {u} at s = {s}")]
    OutOfRange { u: f64, s: f64 },
    #[error("speed too large: lambda L'(c) = {target} exceeds the slope maximum {available} (k = {k})")]
    SpeedTooLarge { target: f64, available: f64, k: usize },
    #[error("harvesting density is negative: min M = {0}")]
    NegativeDensity(f64),
    #[error("bridge slope {slope} does not meet the stable manifold (sup slope {sup})")]
    NoLanding { slope: f64, sup: f64 },
    #[error("no periodic orbit at lambda = {lambda}, c = {c}")]
    NoPeriodicOrbit { lambda: f64, c: f64 },
    #[error("L(c) exceeds sup Gamma_0 for every scanned speed")]
    NoExtinctionSpeed,
    #[error("Lagrangian derivative is not increasing near alpha = {0}")]
    NonConvexLagrangian(f64),
    #[error("controlled trajectory left the profile window at t = {t}")]
    BlowUp { t: f64 },
    #[error("value iteration did not converge after {iterations} iterations (last update {update})")]
    NoConvergence { iterations: usize, update: f64 },
    #[error("curvature estimate is not finite")]
    UnboundedCurvature,
    #[error("no crossing found in the window [{lo}, {hi}]")]
    NoCrossing { lo: f64, hi: f64 },
    #[error("explicit step violates dt <= dx^2/2 (dt = {dt}, dx = {dx})")]
    CflViolation { dt: f64, dx: f64 },
    #[error("front at x = {x} came within {margin} of the domain boundary at t = {t}")]
    FrontLeftDomain { x: f64, t: f64, margin: f64 },
    #[error("population did not recover to {level} on the harvesting support by t = {t}")]
    InvasionFailed { level: f64, t: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, Error>;
