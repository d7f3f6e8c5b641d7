//! Fixtures shared by the benchmarks.

use wavegame::control::CostModel;
use wavegame::phase_plane::Bistable;
use wavegame::wave::{construct_wave, FishermanDensity, WaveOptions, WaveProfile};

pub fn cubic() -> Bistable {
    Bistable::cubic(0.3).expect("valid threshold")
}

/// Monotone wave at `lambda = 0.79`, `c = 0.05` under `a^2 / 2`.
pub fn reference_wave() -> (WaveProfile, FishermanDensity, CostModel) {
    let cost = CostModel::quadratic(0.79, 0.05).expect("valid cost");
    let (wave, density) = construct_wave(&cubic(), &cost, 0, &WaveOptions::default()).expect("wave exists");
    (wave, density, cost)
}
