//! Exact quantum work statistics from the two-point measurement scheme.

use crate::classical::Direction;
use crate::error::{domain, Error, Result};
use crate::model::{check_beta, time_reverse, CMatrix, ForceProtocol, QuantumModel, C64};
use crate::spectral::{self, spectral_decompose, SpectralDecomposition};

/// Work values closer than this are treated as one outcome.
pub const WORK_MERGE_TOL: f64 = 1e-9;
pub const NORMALIZATION_TOL: f64 = 1e-10;
/// Largest Hilbert-space dimension accepted for exhaustive `(n, m)` enumeration.
pub const MAX_DIMENSION: usize = 64;
/// Gap `|tr(ρ e^{−βW_op}) − e^{−βΔF}|` for `H₀ = σ_z`, `Q = σ_x`, the unit
/// ramp `0 → 1` over `τ = 1`, `β = 1` and 4096 slices.
pub const OPERATOR_WORK_WITNESS: f64 = 0.090141551992716;

/// `ln tr e^{−βH}`, evaluated with the ground energy factored out.
pub fn log_partition(h: &CMatrix, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let d = spectral_decompose(h, 0.0)?;
    Ok(log_partition_of(&d, beta))
}

fn log_partition_of(d: &SpectralDecomposition, beta: f64) -> f64 {
    let e0 = d.eigenvalues()[0];
    let sum: f64 = d.eigenvalues().iter().zip(d.ranks()).map(|(e, r)| r as f64 * (-beta * (e - e0)).exp()).sum();
    -beta * e0 + sum.ln()
}

pub fn partition_function(h: &CMatrix, beta: f64) -> Result<f64> {
    Ok(log_partition(h, beta)?.exp())
}

/// `e^{−βH} / Z`.
pub fn gibbs_state(h: &CMatrix, beta: f64) -> Result<CMatrix> {
    check_beta(beta)?;
    let d = spectral_decompose(h, 0.0)?;
    let log_z = log_partition_of(&d, beta);
    Ok(d.apply(|e| C64::from((-beta * e - log_z).exp())))
}

/// `ΔF = F(Λ_τ) − F(Λ₀)`.
pub fn free_energy_difference(model: &QuantumModel, protocol: &ForceProtocol, beta: f64) -> Result<f64> {
    let initial = log_partition(&model.hamiltonian(protocol.value_at(0.0)), beta)?;
    let last = log_partition(&model.hamiltonian(protocol.value_at(protocol.tau())), beta)?;
    Ok(-(last - initial) / beta)
}

/// `U_{τ,0}[Λ]` as an ordered product of midpoint slices.
pub fn propagator(model: &QuantumModel, protocol: &ForceProtocol, slices: usize) -> Result<CMatrix> {
    propagator_span(model, protocol, protocol.tau(), slices)
}

/// `U_{t,0}[Λ]` from `slices` equal slices over `[0, t_end]`, each
/// `exp(−i H(Λ_mid) Δt / ħ)` with the latest slice leftmost.
pub fn propagator_span(model: &QuantumModel, protocol: &ForceProtocol, t_end: f64, slices: usize) -> Result<CMatrix> {
    if !(0.0..=protocol.tau()).contains(&t_end) {
        return domain(format!("time {t_end} outside protocol interval [0, {}]", protocol.tau()));
    }
    let n = model.dimension();
    if t_end == 0.0 {
        return Ok(CMatrix::identity(n, n));
    }
    if slices == 0 {
        return domain("slices must be at least 1");
    }
    let dt = t_end / slices as f64;
    let mut u = CMatrix::identity(n, n);
    for k in 0..slices {
        let lambda = protocol.value_at((k as f64 + 0.5) * dt);
        u = spectral::unitary_step(&model.hamiltonian(lambda), dt / model.hbar()) * u;
    }
    Ok(u)
}

/// One outcome pair of the two energy measurements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TpmEntry {
    /// Index of the initial level.
    pub n: usize,
    /// Index of the final level.
    pub m: usize,
    pub e_initial: f64,
    pub e_final: f64,
    pub work: f64,
    pub probability: f64,
}

/// Joint distribution `p_{m,n}` of the two measurement outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct TPMDistribution {
    pub entries: Vec<TpmEntry>,
    pub beta: f64,
    pub direction: Direction,
    pub log_z_initial: f64,
    pub log_z_final: f64,
}

impl TPMDistribution {
    /// `Z(Λ_τ) / Z(Λ₀)`.
    pub fn partition_ratio(&self) -> f64 {
        (self.log_z_final - self.log_z_initial).exp()
    }

    pub fn delta_f(&self) -> f64 {
        -(self.log_z_final - self.log_z_initial) / self.beta
    }

    /// `P[w]` on the support merged at `tol`, ascending in `w`.
    pub fn work_distribution(&self, tol: f64) -> Vec<(f64, f64)> {
        let mut pairs: Vec<(f64, f64)> = self.entries.iter().map(|e| (e.work, e.probability)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut out: Vec<(f64, f64, usize)> = Vec::new();
        let mut last = f64::NEG_INFINITY;
        for (w, p) in pairs {
            match out.last_mut() {
                Some(group) if w - last <= tol => {
                    group.0 += w;
                    group.1 += p;
                    group.2 += 1;
                }
                _ => out.push((w, p, 1)),
            }
            last = w;
        }
        out.into_iter().map(|(sum, p, count)| (sum / count as f64, p)).collect()
    }
}

/// Two-point-measurement distribution for `protocol`.
pub fn tpm_distribution(
    model: &QuantumModel,
    protocol: &ForceProtocol,
    beta: f64,
    slices: usize,
    degeneracy_tol: f64,
) -> Result<TPMDistribution> {
    let u = propagator(model, protocol, slices)?;
    let direction = if protocol.is_reversed() { Direction::Backward } else { Direction::Forward };
    tpm_from_propagator(
        &model.hamiltonian(protocol.value_at(0.0)),
        &model.hamiltonian(protocol.value_at(protocol.tau())),
        &u,
        beta,
        degeneracy_tol,
        direction,
    )
}

/// Two-point-measurement distribution for given initial and final
/// Hamiltonians and evolution `u`.
pub fn tpm_from_propagator(
    h_initial: &CMatrix,
    h_final: &CMatrix,
    u: &CMatrix,
    beta: f64,
    degeneracy_tol: f64,
    direction: Direction,
) -> Result<TPMDistribution> {
    check_beta(beta)?;
    let dim = h_initial.nrows();
    if dim > MAX_DIMENSION {
        return domain(format!("dimension {dim} exceeds the enumeration cap {MAX_DIMENSION}"));
    }
    if h_final.nrows() != dim || u.nrows() != dim || u.ncols() != dim {
        return domain("Hamiltonians and propagator must share one dimension");
    }
    let initial = spectral_decompose(h_initial, degeneracy_tol)?;
    let last = spectral_decompose(h_final, degeneracy_tol)?;
    let log_z_initial = log_partition_of(&initial, beta);
    let log_z_final = log_partition_of(&last, beta);

    let mut entries = Vec::with_capacity(initial.len() * last.len());
    let mut total = 0.0;
    for (n, (e_n, basis_n)) in initial.eigenvalues().iter().zip(initial.bases()).enumerate() {
        let weight = (-beta * e_n - log_z_initial).exp();
        let evolved = u * basis_n;
        for (m, (e_m, basis_m)) in last.eigenvalues().iter().zip(last.bases()).enumerate() {
            // tr(U†Π_m U Π_n) = ‖V_m† U V_n‖²_F for orthonormal eigenspace bases.
            let overlap = (basis_m.adjoint() * &evolved).norm_squared();
            let probability = weight * overlap;
            total += probability;
            entries.push(TpmEntry { n, m, e_initial: *e_n, e_final: *e_m, work: e_m - e_n, probability });
        }
    }
    let defect = (total - 1.0).abs();
    if defect > NORMALIZATION_TOL {
        return Err(Error::Normalization { defect, tol: NORMALIZATION_TOL });
    }
    Ok(TPMDistribution { entries, beta, direction, log_z_initial, log_z_final })
}

/// `Σ_{m,n} e^{−βw} p_{m,n}`.
pub fn quantum_jarzynski(d: &TPMDistribution) -> f64 {
    d.entries.iter().map(|e| (-d.beta * e.work).exp() * e.probability).sum()
}

/// `max_w |P_F[w] − e^{β(w−ΔF)} P_B[−w]|` over the merged work supports.
pub fn quantum_crooks_check(forward: &TPMDistribution, backward: &TPMDistribution, delta_f: f64) -> Result<f64> {
    let beta = forward.beta;
    let pf = forward.work_distribution(WORK_MERGE_TOL);
    let pb = backward.work_distribution(WORK_MERGE_TOL);
    let find = |table: &[(f64, f64)], w: f64| -> Option<f64> {
        let i = table.partition_point(|(x, _)| *x < w - WORK_MERGE_TOL);
        table.get(i).filter(|(x, _)| (x - w).abs() <= WORK_MERGE_TOL).map(|(_, p)| *p)
    };
    let mut unmatched: Vec<f64> = pf.iter().filter(|(w, _)| find(&pb, -w).is_none()).map(|(w, _)| *w).collect();
    unmatched.extend(pb.iter().filter(|(w, _)| find(&pf, -w).is_none()).map(|(w, _)| -w));
    if !unmatched.is_empty() {
        return Err(Error::Alignment { unmatched });
    }
    Ok(pf.iter().map(|(w, p)| (p - (beta * (w - delta_f)).exp() * find(&pb, -w).unwrap()).abs()).fold(0.0, f64::max))
}

/// `‖U_{t,0}[Λ] − Θ U_{τ−t,0}[Λ̃] Θ U_{τ,0}[Λ]‖₂`.
///
/// `t` must be a node of the `slices` grid on `[0, τ]`. Each propagator is
/// sliced into `slices` pieces over its own duration.
pub fn check_quantum_microreversibility(
    model: &QuantumModel,
    protocol: &ForceProtocol,
    t: f64,
    slices: usize,
) -> Result<f64> {
    if slices == 0 {
        return domain("slices must be at least 1");
    }
    let tau = protocol.tau();
    let position = t / tau * slices as f64;
    let k = position.round();
    if !(0.0..=tau).contains(&t) || (position - k).abs() > 1e-9 * slices as f64 {
        return domain(format!("time {t} is not a node of the {slices}-slice grid on [0, {tau}]"));
    }
    let t = protocol.node(k as usize, slices);
    let lhs = propagator_span(model, protocol, t, slices)?;
    let full = propagator(model, protocol, slices)?;
    let backward = propagator_span(model, &protocol.backward(), tau - t, slices)?;
    let rhs = time_reverse(&backward) * full;
    Ok(spectral::spectral_norm(&(lhs - rhs)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorWorkReport {
    /// `tr(ρ_β e^{−β W_op})` with `W_op = U† H(Λ_τ) U − H(Λ₀)`.
    pub operator_average: f64,
    /// `e^{−βΔF}`.
    pub free_energy_factor: f64,
    pub gap: f64,
}

pub fn operator_work_counterexample(
    model: &QuantumModel,
    protocol: &ForceProtocol,
    beta: f64,
    slices: usize,
) -> Result<OperatorWorkReport> {
    check_beta(beta)?;
    let u = propagator(model, protocol, slices)?;
    let h0 = model.hamiltonian(protocol.value_at(0.0));
    let h1 = model.hamiltonian(protocol.value_at(protocol.tau()));
    let w_op = u.adjoint() * &h1 * &u - &h0;
    let w_op = (&w_op + w_op.adjoint()) * C64::from(0.5);
    let exp_w = spectral_decompose(&w_op, 0.0)?.apply(|w| C64::from((-beta * w).exp()));
    let rho = gibbs_state(&h0, beta)?;
    let operator_average = (rho * exp_w).trace().re;
    let free_energy_factor = (log_partition(&h1, beta)? - log_partition(&h0, beta)?).exp();
    Ok(OperatorWorkReport { operator_average, free_energy_factor, gap: (operator_average - free_energy_factor).abs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{complexify, Parity};
    use crate::spectral::{max_abs, unitarity_defect};
    use crate::ProtocolShape;
    use nalgebra::DMatrix;

    fn ramp(slices: usize) -> ForceProtocol {
        ForceProtocol::linear_ramp(0.0, 1.0, 1.0, slices).unwrap()
    }

    fn random_hermitian(n: usize, seed: u64) -> CMatrix {
        use rand::Rng;
        let mut r = crate::rng::stream(seed, 0);
        let a = CMatrix::from_fn(n, n, |_, _| C64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)));
        (&a + a.adjoint()) * C64::from(0.5)
    }

    /// Direct trace formula for `p_{m,n}`.
    fn trace_oracle(h0: &CMatrix, h1: &CMatrix, u: &CMatrix, beta: f64) -> Vec<f64> {
        let d0 = spectral_decompose(h0, 1e-9).unwrap();
        let d1 = spectral_decompose(h1, 1e-9).unwrap();
        let z: f64 = d0.eigenvalues().iter().zip(d0.ranks()).map(|(e, r)| r as f64 * (-beta * e).exp()).sum();
        let mut out = Vec::new();
        for (e_n, pi_n) in d0.eigenvalues().iter().zip(d0.projectors()) {
            for pi_m in d1.projectors() {
                let t = (u.adjoint() * pi_m * u * pi_n).trace();
                out.push((-beta * e_n).exp() / z * t.re);
            }
        }
        out
    }

    #[test]
    fn qubit_partition_function_and_gibbs_state() {
        let sz = QuantumModel::sigma_z_sigma_x().hamiltonian(0.0);
        assert!((partition_function(&sz, 1.0).unwrap() - 2.0 * 1f64.cosh()).abs() < 1e-14);
        let zero = CMatrix::zeros(3, 3);
        let rho = gibbs_state(&zero, 4.2).unwrap();
        assert!(max_abs(&(rho - CMatrix::identity(3, 3) / C64::from(3.0))) < 1e-15);
        assert!(gibbs_state(&sz, -1.0).is_err());
    }

    #[test]
    fn gibbs_states_are_normalized_and_positive() {
        for seed in 0..100 {
            let h = random_hermitian(2 + (seed as usize % 7), seed);
            let rho = gibbs_state(&h, 1.0 + seed as f64 / 10.0).unwrap();
            assert!((rho.trace() - C64::from(1.0)).norm() < 1e-12);
            let (values, _) = spectral::eigh(&rho);
            assert!(values[0] > -1e-14);
        }
    }

    #[test]
    fn constant_protocol_propagator_is_exact() {
        let model = QuantumModel::sigma_z_sigma_x();
        let reference = (model.hamiltonian(0.4) * C64::new(0.0, -1.3)).exp();
        for slices in [1, 7, 64] {
            let p = ForceProtocol::constant(0.4, 1.3, slices).unwrap();
            let u = propagator(&model, &p, slices).unwrap();
            assert!(max_abs(&(u.clone() - &reference)) < 1e-12);
            assert!(unitarity_defect(&u) < 1e-10);
        }
        let p = ForceProtocol::constant(0.4, 1.3, 10).unwrap();
        assert_eq!(propagator_span(&model, &p, 0.0, 10).unwrap(), CMatrix::identity(2, 2));
    }

    #[test]
    fn propagator_converges_at_second_order() {
        let model = QuantumModel::sigma_z_sigma_x();
        let p = ramp(64);
        let u = |s| propagator(&model, &p, s).unwrap();
        let (a, b, c) = (u(64), u(128), u(256));
        let ratio = spectral::spectral_norm(&(&a - &b)) / spectral::spectral_norm(&(&b - &c));
        assert!((3.5..4.5).contains(&ratio), "{ratio}");
        assert!(unitarity_defect(&c) < 1e-10);
    }

    #[test]
    fn constant_protocol_tpm_is_diagonal() {
        let model = QuantumModel::spin_one_sx();
        let p = ForceProtocol::constant(0.0, 1.0, 16).unwrap();
        let d = tpm_distribution(&model, &p, 1.0, 16, 1e-9).unwrap();
        let z = 2.0 * (-1f64).exp() + 1.0;
        for e in &d.entries {
            if e.n == e.m {
                let rank = if e.e_initial == 1.0 { 2.0 } else { 1.0 };
                assert!((e.probability - rank * (-e.e_initial).exp() / z).abs() < 1e-12);
            } else {
                assert!(e.probability.abs() < 1e-12);
            }
        }
        assert_eq!(d.work_distribution(WORK_MERGE_TOL).iter().filter(|(_, p)| *p > 1e-12).count(), 1);
    }

    #[test]
    fn sudden_quench_matches_hand_overlaps() {
        let model = QuantumModel::sigma_z_sigma_x();
        let h0 = model.hamiltonian(0.0);
        let h1 = model.hamiltonian(1.0);
        let d = tpm_from_propagator(&h0, &h1, &CMatrix::identity(2, 2), 1.0, 1e-9, Direction::Forward).unwrap();
        // Eigenvectors of [[1, −1], [−1, −1]] for E = ±√2 are (1, 1 ∓ √2) up to norm.
        let r2 = 2f64.sqrt();
        let up_weight_high = 1.0 / (1.0 + (1.0 - r2).powi(2));
        let up_weight_low = 1.0 - up_weight_high;
        let z = 2.0 * 1f64.cosh();
        let (p_up, p_down) = ((-1f64).exp() / z, 1f64.exp() / z);
        let expect = |e_n: f64, e_m: f64| {
            let (pop, up) = if e_n > 0.0 { (p_up, true) } else { (p_down, false) };
            let high = e_m > 0.0;
            pop * match (up, high) {
                (true, true) | (false, false) => up_weight_high,
                _ => up_weight_low,
            }
        };
        for e in &d.entries {
            assert!((e.probability - expect(e.e_initial, e.e_final)).abs() < 1e-14, "{e:?}");
        }
    }

    #[test]
    fn tpm_matches_trace_formula_and_marginals() {
        for seed in 0..10 {
            let parity = if seed % 2 == 0 { Parity::Even } else { Parity::Odd };
            let model = QuantumModel::random(4, parity, seed).unwrap();
            let p =
                ForceProtocol::new(ProtocolShape::Sinusoid { amplitude: 1.5, omega: 2.0, phase: 0.3 }, 2.0, parity, 40)
                    .unwrap();
            let beta = 0.7;
            let d = tpm_distribution(&model, &p, beta, 40, 1e-9).unwrap();
            let u = propagator(&model, &p, 40).unwrap();
            let oracle =
                trace_oracle(&model.hamiltonian(p.value_at(0.0)), &model.hamiltonian(p.value_at(2.0)), &u, beta);
            for (e, o) in d.entries.iter().zip(&oracle) {
                assert!((e.probability - o).abs() < 1e-12);
            }
            let total: f64 = d.entries.iter().map(|e| e.probability).sum();
            assert!((total - 1.0).abs() < 1e-10);
            let h0 = spectral_decompose(&model.hamiltonian(p.value_at(0.0)), 1e-9).unwrap();
            let z: f64 = h0.eigenvalues().iter().map(|e| (-beta * e).exp()).sum();
            for (n, e_n) in h0.eigenvalues().iter().enumerate() {
                let marginal: f64 = d.entries.iter().filter(|e| e.n == n).map(|e| e.probability).sum();
                assert!((marginal - (-beta * e_n).exp() / z).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn jarzynski_on_driven_qubit() {
        let model = QuantumModel::sigma_z_sigma_x();
        let expected = 2f64.sqrt().cosh() / 1f64.cosh();
        for slices in [1, 16, 4096] {
            let d = tpm_distribution(&model, &ramp(slices), 1.0, slices, 1e-9).unwrap();
            assert!((quantum_jarzynski(&d) - expected).abs() < 1e-10);
            assert!((d.partition_ratio() - expected).abs() < 1e-12);
        }
        let constant = ForceProtocol::constant(0.3, 1.0, 8).unwrap();
        let d = tpm_distribution(&model, &constant, 1.0, 8, 1e-9).unwrap();
        assert!((quantum_jarzynski(&d) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn crooks_holds_for_catalog_models() {
        for (name, model) in QuantumModel::catalog() {
            let p = ramp(512).with_parity(model.parity());
            let fwd = tpm_distribution(&model, &p, 1.0, 512, 1e-9).unwrap();
            let bwd = tpm_distribution(&model, &p.backward(), 1.0, 512, 1e-9).unwrap();
            assert_eq!(bwd.direction, Direction::Backward);
            let dev = quantum_crooks_check(&fwd, &bwd, fwd.delta_f()).unwrap();
            assert!(dev < 1e-8, "{name}: {dev}");
        }
    }

    #[test]
    fn crooks_reports_unmatched_work_values() {
        let model = QuantumModel::sigma_z_sigma_x();
        let fwd = tpm_distribution(&model, &ramp(8), 1.0, 8, 1e-9).unwrap();
        let other = ForceProtocol::linear_ramp(0.0, 2.0, 1.0, 8).unwrap();
        let bwd = tpm_distribution(&model, &other.backward(), 1.0, 8, 1e-9).unwrap();
        match quantum_crooks_check(&fwd, &bwd, fwd.delta_f()) {
            Err(Error::Alignment { unmatched }) => assert!(!unmatched.is_empty()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn microreversibility_endpoints_and_grid() {
        let model = QuantumModel::sigma_z_sigma_y();
        let p = ramp(4096).with_parity(Parity::Odd);
        assert!(check_quantum_microreversibility(&model, &p, 1.0, 4096).unwrap() < 1e-12);
        assert!(check_quantum_microreversibility(&model, &p, 0.0, 4096).unwrap() < 1e-8);
        assert!(check_quantum_microreversibility(&model, &p, 0.3, 8).is_err());
        assert!(check_quantum_microreversibility(&model, &p, 0.375, 8).is_ok());
    }

    #[test]
    fn microreversibility_converges_at_second_order() {
        let model = QuantumModel::sigma_z_sigma_x();
        let p = ramp(4096);
        for t in [0.125, 0.25, 0.5, 0.75, 0.875] {
            let coarse = check_quantum_microreversibility(&model, &p, t, 2048).unwrap();
            let fine = check_quantum_microreversibility(&model, &p, t, 4096).unwrap();
            assert!(fine < 1e-8, "t = {t}: {fine}");
            assert!((3.5..4.5).contains(&(coarse / fine)), "t = {t}: {}", coarse / fine);
        }
    }

    #[test]
    fn operator_work_fails_only_without_commutation() {
        let ramp = ramp(4096);
        let commuting = operator_work_counterexample(&QuantumModel::sigma_z_sigma_z(), &ramp, 1.0, 4096).unwrap();
        assert!(commuting.gap < 1e-10);
        let constant = ForceProtocol::constant(0.7, 1.0, 64).unwrap();
        let r = operator_work_counterexample(&QuantumModel::sigma_z_sigma_x(), &constant, 1.0, 64).unwrap();
        assert!(r.gap < 1e-10);
        let r = operator_work_counterexample(&QuantumModel::sigma_z_sigma_x(), &ramp, 1.0, 4096).unwrap();
        assert!(r.gap > 1e-3);
        // Regression witness from the first run.
        assert!((r.gap - OPERATOR_WORK_WITNESS).abs() < 1e-9, "{r:?}");
    }

    #[test]
    fn rejects_oversized_and_mismatched_inputs() {
        let big = complexify(&DMatrix::identity(65, 65));
        assert!(tpm_from_propagator(&big, &big, &big, 1.0, 1e-9, Direction::Forward).is_err());
        let small = complexify(&DMatrix::identity(2, 2));
        let three = complexify(&DMatrix::identity(3, 3));
        assert!(tpm_from_propagator(&small, &three, &small, 1.0, 1e-9, Direction::Forward).is_err());
    }
}
