//! Cross-module checks through the public API.

use fluctuant_core::{
    classical::{jarzynski_estimate, work_ensemble},
    linear_response::response_and_correlation,
    quantum::{gibbs_state, quantum_crooks_check, quantum_jarzynski, tpm_distribution},
    spectral::DEFAULT_DEGENERACY_TOL,
    spectral_decompose, ClassicalModel, Direction, ForceProtocol, Parity, ProtocolShape, QuantumModel, C64,
};

#[test]
fn quartic_jarzynski_matches_quadrature_free_energy() {
    let model = ClassicalModel::quartic(1.0, 1.0, 0.5).unwrap();
    let protocol = ForceProtocol::linear_ramp(0.0, 1.0, 1.0, 400).unwrap();
    let beta = 1.0;
    let (ensemble, _) = work_ensemble(&model, &protocol, beta, 20_000, 31, Direction::Forward).unwrap();
    let est = jarzynski_estimate(&ensemble).unwrap();
    let target = (-beta * model.free_energy_difference(0.0, 1.0, beta).unwrap()).exp();
    assert!((est.value - target).abs() <= 3.0 * est.se, "{est:?} vs {target}");
}

#[test]
fn quantum_crooks_holds_for_any_slicing_of_a_piecewise_drive() {
    let model = QuantumModel::random(5, Parity::Odd, 9).unwrap();
    let protocol = ForceProtocol::new(
        ProtocolShape::PiecewiseLinear(vec![(0.0, 0.0), (0.4, 1.5), (1.0, -0.5)]),
        1.0,
        Parity::Odd,
        100,
    )
    .unwrap();
    for slices in [1, 7, 64] {
        let fwd = tpm_distribution(&model, &protocol, 2.0, slices, DEFAULT_DEGENERACY_TOL).unwrap();
        let bwd = tpm_distribution(&model, &protocol.backward(), 2.0, slices, DEFAULT_DEGENERACY_TOL).unwrap();
        assert!(quantum_crooks_check(&fwd, &bwd, fwd.delta_f()).unwrap() < 1e-10);
        assert!((quantum_jarzynski(&fwd) - fwd.partition_ratio()).abs() < 1e-10);
    }
}

/// `Φ(t) = tr(ρ [Q, B(t)]) / iħ` and `Ψ(t) = tr(ρ {Q, B(t)}) / 2` with
/// `B(t) = e^{iH₀t/ħ} B e^{−iH₀t/ħ}` built directly from matrix exponentials.
#[test]
fn response_lines_agree_with_direct_heisenberg_evolution() {
    let model = QuantumModel::random(4, Parity::Even, 21).unwrap().with_hbar(0.7).unwrap();
    let (beta, hbar) = (1.3, model.hbar());
    let q = model.coupling().clone();
    let b = (model.h0() * model.h0() + &q) * C64::from(0.5);
    let times = [0.0, 0.3, 1.1, 2.5];
    let data = response_and_correlation(&model, &b, beta, &times).unwrap();
    let rho = gibbs_state(model.h0(), beta).unwrap();
    let levels = spectral_decompose(model.h0(), 0.0).unwrap();
    for (k, t) in times.iter().enumerate() {
        let u = levels.apply(|e| C64::new(0.0, -e * t / hbar).exp());
        let bt = u.adjoint() * &b * &u;
        let phi = ((&rho * (&q * &bt - &bt * &q)).trace() / C64::new(0.0, hbar)).re;
        let psi = 0.5 * (&rho * (&q * &bt + &bt * &q)).trace().re;
        assert!((data.phi[k] - phi).abs() < 1e-12, "t = {t}: {} vs {phi}", data.phi[k]);
        assert!((data.psi[k] - psi).abs() < 1e-12, "t = {t}: {} vs {psi}", data.psi[k]);
    }
}
