mod cost;
mod hjb;
mod payoff;
mod verify;

pub use cost::{inverse_marginal, legendre, CostModel, Hamiltonian, Lagrangian, PowerLagrangian};
pub use hjb::{hjb_solve, HjbGrid, HjbSolver, ValueGrid};
pub use payoff::{payoff, PayoffValue, Strategy, PAYOFF_TOL};
pub use verify::{
    concavity_threshold, critical_point_check, lambda_threshold, s_minus, verify_equilibrium, EquilibriumReport,
    Probe, Verdict, VerifyOptions, certified_range, convex_regime, CertifiedRange, ConvexRegime, RangeSample,
};
