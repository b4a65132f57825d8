//! Benchmark fixtures shared by the criterion targets.

use fluctuant_core::{ClassicalModel, ForceProtocol, QuantumModel};

/// Unit ramp `0 → 1` over `τ = 1`.
pub fn unit_ramp(grid_points: usize) -> ForceProtocol {
    ForceProtocol::linear_ramp(0.0, 1.0, 1.0, grid_points).expect("valid ramp")
}

pub fn harmonic() -> ClassicalModel {
    ClassicalModel::harmonic(1.0, 1.0).expect("valid model")
}

pub fn random_quantum(n: usize) -> QuantumModel {
    QuantumModel::random(n, fluctuant_core::Parity::Even, 7).expect("valid model")
}
