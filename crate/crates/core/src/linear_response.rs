//! Kubo response and symmetrized correlation functions of finite systems,
//! the fluctuation-dissipation theorem line by line, and first-order
//! response against exact driven evolution.

use crate::error::{domain, Result};
use crate::model::{check_beta, ensure_hermitian, CMatrix, ForceProtocol, QuantumModel, C64};
use crate::quantum::gibbs_state;
use crate::spectral::{self, spectral_decompose, DEFAULT_DEGENERACY_TOL};

/// Bohr frequencies closer than this share one spectral line.
pub const FREQUENCY_MERGE_TOL: f64 = 1e-9;

/// One spectral line of `Φ_BQ` and `Ψ_BQ`.
///
/// With `Φ(t) = Σ φ_ω e^{iωt}` and `Ψ(t) = Σ ψ_ω e^{iωt}`, `phi_line` is
/// `φ_ω` and `phi_amplitude` is `φ_ω / (−iω)`, the line of `Φ` expressed
/// so that the theorem reads `ψ_ω = (ħω/2) coth(βħω/2) · phi_amplitude`.
/// At `ω = 0` the amplitude is reported as zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BohrTerm {
    pub omega: f64,
    pub phi_line: C64,
    pub phi_amplitude: C64,
    pub psi_amplitude: C64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseData {
    pub time_grid: Vec<f64>,
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    pub bohr_terms: Vec<BohrTerm>,
}

/// Bohr-line expansion of `Φ_BQ(t) = ⟨[Q, B(t)]⟩_β / iħ` and
/// `Ψ_BQ(t) = ⟨{Q, B(t)}⟩_β / 2` in the eigenbasis of `H₀`.
pub fn bohr_terms(model: &QuantumModel, b: &CMatrix, beta: f64) -> Result<Vec<BohrTerm>> {
    check_beta(beta)?;
    ensure_hermitian(b)?;
    if b.nrows() != model.dimension() || b.ncols() != model.dimension() {
        return domain("observable dimension does not match the model");
    }
    let hbar = model.hbar();
    let d = spectral_decompose(model.h0(), DEFAULT_DEGENERACY_TOL)?;
    let e0 = d.eigenvalues()[0];
    let weights: Vec<f64> = d.eigenvalues().iter().map(|e| (-beta * (e - e0)).exp()).collect();
    let z: f64 = weights.iter().zip(d.ranks()).map(|(w, r)| w * r as f64).sum();
    let pops: Vec<f64> = weights.iter().map(|w| w / z).collect();

    let q = model.coupling();
    let mut lines: Vec<(f64, C64, C64)> = Vec::new();
    for (a, va) in d.bases().iter().enumerate() {
        for (bi, vb) in d.bases().iter().enumerate() {
            // Σ over states of Q_ab B_ba = tr(Π_a Q Π_b B).
            let qab = va.adjoint() * q * vb;
            let bba = vb.adjoint() * b * va;
            let product = (qab * bba).trace();
            let omega = (d.eigenvalues()[bi] - d.eigenvalues()[a]) / hbar;
            let phi = product * (pops[a] - pops[bi]) / C64::new(0.0, hbar);
            let psi = product * (0.5 * (pops[a] + pops[bi]));
            lines.push((omega, phi, psi));
        }
    }
    lines.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut merged: Vec<(f64, C64, C64, usize)> = Vec::new();
    let mut last = f64::NEG_INFINITY;
    for (omega, phi, psi) in lines {
        match merged.last_mut() {
            Some(line) if omega - last <= FREQUENCY_MERGE_TOL => {
                line.0 += omega;
                line.1 += phi;
                line.2 += psi;
                line.3 += 1;
            }
            _ => merged.push((omega, phi, psi, 1)),
        }
        last = omega;
    }
    Ok(merged
        .into_iter()
        .map(|(sum, phi, psi, count)| {
            let omega = sum / count as f64;
            let phi_amplitude =
                if omega.abs() > FREQUENCY_MERGE_TOL { phi / C64::new(0.0, -omega) } else { C64::from(0.0) };
            BohrTerm { omega, phi_line: phi, phi_amplitude, psi_amplitude: psi }
        })
        .collect())
}

fn sum_lines(terms: &[BohrTerm], t: f64, pick: impl Fn(&BohrTerm) -> C64) -> f64 {
    terms.iter().map(|l| pick(l) * C64::from_polar(1.0, l.omega * t)).sum::<C64>().re
}

pub fn response_and_correlation(
    model: &QuantumModel,
    b: &CMatrix,
    beta: f64,
    time_grid: &[f64],
) -> Result<ResponseData> {
    let bohr_terms = bohr_terms(model, b, beta)?;
    let phi = time_grid.iter().map(|&t| sum_lines(&bohr_terms, t, |l| l.phi_line)).collect();
    let psi = time_grid.iter().map(|&t| sum_lines(&bohr_terms, t, |l| l.psi_amplitude)).collect();
    Ok(ResponseData { time_grid: time_grid.to_vec(), phi, psi, bohr_terms })
}

/// Comparison of one line against the theorem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdtLine {
    pub omega: f64,
    pub psi_amplitude: C64,
    pub predicted: C64,
    pub relative_deviation: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdtReport {
    pub lines: Vec<FdtLine>,
    pub max_relative_deviation: f64,
}

/// Check `ψ_ω = (ħω/2) coth(βħω/2) · phi_amplitude` on every nonzero Bohr
/// line. Lines whose amplitudes are both negligible against the largest
/// line are skipped.
pub fn fdt_check(data: &ResponseData, beta: f64, hbar: f64) -> FdtReport {
    let scale = data.bohr_terms.iter().map(|l| l.psi_amplitude.norm().max(l.phi_amplitude.norm())).fold(0.0, f64::max);
    let lines: Vec<FdtLine> = data
        .bohr_terms
        .iter()
        .filter(|l| l.omega.abs() > FREQUENCY_MERGE_TOL)
        .filter(|l| l.psi_amplitude.norm().max(l.phi_amplitude.norm()) > 1e-14 * scale)
        .map(|l| {
            let x = 0.5 * beta * hbar * l.omega;
            let factor = 0.5 * hbar * l.omega / x.tanh();
            let predicted = l.phi_amplitude * factor;
            let deviation = (l.psi_amplitude - predicted).norm() / l.psi_amplitude.norm().max(predicted.norm());
            FdtLine { omega: l.omega, psi_amplitude: l.psi_amplitude, predicted, relative_deviation: deviation }
        })
        .collect();
    let max_relative_deviation = lines.iter().map(|l| l.relative_deviation).fold(0.0, f64::max);
    FdtReport { lines, max_relative_deviation }
}

/// `β · ψ_ω / phi_amplitude` for every line with `ħ|ω|β` below `cutoff`;
/// tends to 1 in the classical limit.
pub fn classical_limit_ratios(data: &ResponseData, beta: f64, hbar: f64, cutoff: f64) -> Vec<(f64, f64)> {
    data.bohr_terms
        .iter()
        .filter(|l| l.omega.abs() > FREQUENCY_MERGE_TOL && hbar * l.omega.abs() * beta < cutoff)
        .filter(|l| l.phi_amplitude.norm() > 0.0)
        .map(|l| (l.omega, beta * (l.psi_amplitude / l.phi_amplitude).re))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponsePrediction {
    pub times: Vec<f64>,
    pub predicted: Vec<f64>,
    pub exact: Vec<f64>,
    pub max_gap: f64,
}

/// First-order prediction `ΔB(t) = ∫₀ᵗ Φ_BQ(t−s) Λ_s ds` against the exact
/// change `tr(B ρ_t) − tr(B ρ_β)` under the full driven evolution.
///
/// Both use the `slices`-interval grid on `[0, τ]`: trapezoid quadrature for
/// the convolution, midpoint slices for the propagator.
pub fn linear_response_prediction(
    model: &QuantumModel,
    b: &CMatrix,
    protocol: &ForceProtocol,
    beta: f64,
    slices: usize,
) -> Result<ResponsePrediction> {
    if slices == 0 {
        return domain("slices must be at least 1");
    }
    let terms = bohr_terms(model, b, beta)?;
    let times: Vec<f64> = (0..=slices).map(|k| protocol.node(k, slices)).collect();
    let dt = protocol.tau() / slices as f64;
    let drive: Vec<f64> = times.iter().map(|&t| protocol.value_at(t)).collect();
    // Φ depends on the lag only, and lags are grid times.
    let kernel: Vec<f64> = times.iter().map(|&t| sum_lines(&terms, t, |l| l.phi_line)).collect();
    let predicted: Vec<f64> = (0..=slices)
        .map(|k| {
            if k == 0 {
                return 0.0;
            }
            let inner: f64 = (1..k).map(|j| kernel[k - j] * drive[j]).sum();
            dt * (inner + 0.5 * (kernel[k] * drive[0] + kernel[0] * drive[k]))
        })
        .collect();

    let rho_beta = gibbs_state(model.h0(), beta)?;
    let baseline = (b * &rho_beta).trace().re;
    let mut u = CMatrix::identity(model.dimension(), model.dimension());
    let mut exact = Vec::with_capacity(slices + 1);
    exact.push(0.0);
    for k in 0..slices {
        let lambda = protocol.value_at((k as f64 + 0.5) * dt);
        u = spectral::unitary_step(&model.hamiltonian(lambda), dt / model.hbar()) * u;
        let rho = &u * &rho_beta * u.adjoint();
        exact.push((b * rho).trace().re - baseline);
    }
    let max_gap = predicted.iter().zip(&exact).map(|(p, e)| (p - e).abs()).fold(0.0, f64::max);
    Ok(ResponsePrediction { times, predicted, exact, max_gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{complexify, Parity};
    use crate::ProtocolShape;
    use nalgebra::DMatrix;

    fn pauli_x() -> CMatrix {
        complexify(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]))
    }

    fn pauli_z() -> CMatrix {
        complexify(&DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]))
    }

    /// `tr(ρ[Q,B(t)])/(iħ)` and `tr(ρ{Q,B(t)})/2` through matrix exponentials.
    fn direct(model: &QuantumModel, b: &CMatrix, beta: f64, t: f64) -> (f64, f64) {
        let h0 = model.h0();
        let rho = (h0 * C64::from(-beta)).exp();
        let rho = &rho / rho.trace();
        let forward = (h0 * C64::new(0.0, t / model.hbar())).exp();
        let bt = &forward * b * forward.adjoint();
        let q = model.coupling();
        let comm = q * &bt - &bt * q;
        let anti = q * &bt + &bt * q;
        let phi = (&rho * comm).trace() / C64::new(0.0, model.hbar());
        let psi = (&rho * anti).trace() * 0.5;
        assert!(phi.im.abs() < 1e-12 && psi.im.abs() < 1e-12);
        (phi.re, psi.re)
    }

    fn grid(n: usize, step: f64) -> Vec<f64> {
        (0..n).map(|i| i as f64 * step).collect()
    }

    #[test]
    fn qubit_functions_in_closed_form() {
        let model = QuantumModel::sigma_z_sigma_x();
        let times = grid(20, 0.37);
        let r = response_and_correlation(&model, &pauli_x(), 1.0, &times).unwrap();
        for (i, &t) in times.iter().enumerate() {
            assert!((r.phi[i] - 2.0 * 1f64.tanh() * (2.0 * t).sin()).abs() < 1e-14);
            assert!((r.psi[i] - (2.0 * t).cos()).abs() < 1e-14);
        }
        assert_eq!(r.phi[0], 0.0);
        assert!(fdt_check(&r, 1.0, 1.0).max_relative_deviation < 1e-10);
    }

    #[test]
    fn identity_observable_has_no_response() {
        let model = QuantumModel::sigma_z_sigma_x();
        let id = CMatrix::identity(2, 2);
        let r = response_and_correlation(&model, &id, 0.8, &grid(10, 0.5)).unwrap();
        assert!(r.phi.iter().all(|x| x.abs() < 1e-15));
        let mean_q = (gibbs_state(model.h0(), 0.8).unwrap() * model.coupling()).trace().re;
        assert!(r.psi.iter().all(|x| (x - mean_q).abs() < 1e-15));
    }

    #[test]
    fn non_hermitian_observable_is_rejected() {
        let model = QuantumModel::sigma_z_sigma_x();
        let mut b = pauli_x();
        b[(0, 1)] = C64::new(0.0, 1.0);
        assert!(response_and_correlation(&model, &b, 1.0, &[0.0]).is_err());
    }

    #[test]
    fn spectral_sum_matches_direct_trace() {
        let mut models: Vec<(QuantumModel, CMatrix)> = QuantumModel::catalog()
            .into_iter()
            .map(|(_, m)| {
                let q = m.coupling().clone();
                (m, q)
            })
            .collect();
        for seed in 0..6 {
            let parity = if seed % 2 == 0 { Parity::Even } else { Parity::Odd };
            let m = QuantumModel::random(5, parity, 100 + seed).unwrap();
            let b = QuantumModel::random(5, Parity::Odd, 200 + seed).unwrap().coupling().clone();
            models.push((m, b));
        }
        let times = grid(20, 0.29);
        for (model, b) in &models {
            for beta in [0.1, 1.0, 10.0] {
                let r = response_and_correlation(model, b, beta, &times).unwrap();
                for (i, &t) in times.iter().enumerate() {
                    let (phi, psi) = direct(model, b, beta, t);
                    assert!((r.phi[i] - phi).abs() < 1e-10 && (r.psi[i] - psi).abs() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn fdt_holds_on_catalog_and_random_models() {
        let mut cases: Vec<QuantumModel> = QuantumModel::catalog().into_iter().map(|(_, m)| m).collect();
        for seed in 0..20 {
            let parity = if seed % 2 == 0 { Parity::Even } else { Parity::Odd };
            cases.push(QuantumModel::random(6, parity, seed).unwrap());
        }
        for model in &cases {
            for beta in [0.1, 1.0, 10.0] {
                let r = response_and_correlation(model, model.coupling(), beta, &[0.0]).unwrap();
                let report = fdt_check(&r, beta, model.hbar());
                assert!(report.max_relative_deviation < 1e-9, "{report:?}");
            }
        }
    }

    #[test]
    fn high_temperature_ratio_is_inverse_beta() {
        let model = QuantumModel::random(6, Parity::Even, 3).unwrap();
        let beta = 0.01;
        let r = response_and_correlation(&model, model.coupling(), beta, &[0.0]).unwrap();
        let ratios = classical_limit_ratios(&r, beta, model.hbar(), 0.1);
        assert!(!ratios.is_empty());
        for (omega, ratio) in ratios {
            assert!((ratio - 1.0).abs() < 0.02, "ω = {omega}: {ratio}");
        }
    }

    #[test]
    fn zero_drive_gives_zero_response() {
        let model = QuantumModel::sigma_z_sigma_x();
        let p = ForceProtocol::constant(0.0, 2.0, 200).unwrap();
        let r = linear_response_prediction(&model, &pauli_x(), &p, 1.0, 200).unwrap();
        assert!(r.predicted.iter().chain(&r.exact).all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn causal_convolution_is_silent_before_the_drive() {
        let model = QuantumModel::sigma_z_sigma_x();
        let p = ForceProtocol::new(
            ProtocolShape::PiecewiseLinear(vec![(0.0, 0.0), (1.0, 0.0), (2.0, 1e-3)]),
            2.0,
            Parity::Even,
            400,
        )
        .unwrap();
        let r = linear_response_prediction(&model, &pauli_x(), &p, 1.0, 400).unwrap();
        for (t, x) in r.times.iter().zip(&r.predicted) {
            if *t <= 1.0 {
                assert_eq!(*x, 0.0);
            }
        }
    }

    #[test]
    fn first_order_gap_scales_quadratically() {
        let q = pauli_x() + pauli_z() * C64::from(0.5);
        let model = QuantumModel::new(pauli_z(), q.clone(), Parity::Even, 1.0).unwrap();
        let shape = ProtocolShape::Sinusoid { amplitude: 1.0, omega: 1.3, phase: 0.0 };
        let base = ForceProtocol::new(shape, 10.0, Parity::Even, 2000).unwrap();
        let gaps: Vec<f64> = [1e-2, 5e-3, 2.5e-3]
            .iter()
            .map(|&eps| linear_response_prediction(&model, &q, &base.clone().scaled(eps), 1.0, 2000).unwrap().max_gap)
            .collect();
        for w in gaps.windows(2) {
            let ratio = w[0] / w[1];
            assert!((3.5..4.5).contains(&ratio), "{gaps:?}");
        }
    }
}
