//! Catalog of driven systems and force protocols.
//!
//! A system is `H(λ) = H₀ − λ Q`, driven by a protocol `t ↦ Λ_t` on `[0, τ]`.
//! Classical entries live on a one-dimensional phase space `(q, p)` and couple
//! to `Q = q`; quantum entries are finite Hermitian matrices whose time
//! reversal is entrywise complex conjugation in the computational basis.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{domain, Error, Result};
use crate::quadrature::adaptive_simpson;
use crate::rng;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type RealMatrix = DMatrix<f64>;

/// Time-reversal parity of an observable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }

    pub fn from_sign(sign: i64) -> Result<Self> {
        match sign {
            1 => Ok(Parity::Even),
            -1 => Ok(Parity::Odd),
            other => domain(format!("parity must be +1 or -1, got {other}")),
        }
    }
}

/// Time dependence of the external force before reversal and scaling.
#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolShape {
    Constant(f64),
    LinearRamp {
        from: f64,
        to: f64,
    },
    /// `amplitude · sin(omega · t + phase)`
    Sinusoid {
        amplitude: f64,
        omega: f64,
        phase: f64,
    },
    /// `(time, value)` knots, strictly increasing in time, spanning `[0, τ]`.
    PiecewiseLinear(Vec<(f64, f64)>),
}

/// A force protocol `Λ_t` on `[0, τ]`.
///
/// The backward protocol `η_Q Λ_{τ−t}` is represented structurally (a
/// reversal flag and a sign folded into `gain`), so reversing twice gives
/// back an identical value, bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceProtocol {
    tau: f64,
    shape: ProtocolShape,
    parity: Parity,
    grid_points: usize,
    gain: f64,
    reversed: bool,
}

impl ForceProtocol {
    /// `grid_points` is the number of time steps of the evaluation grid;
    /// the grid has `grid_points + 1` nodes `k τ / grid_points`.
    pub fn new(shape: ProtocolShape, tau: f64, parity: Parity, grid_points: usize) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return domain(format!("tau must be positive and finite, got {tau}"));
        }
        if grid_points == 0 {
            return domain("grid_points must be at least 1");
        }
        let shape = match shape {
            ProtocolShape::Constant(v) if v.is_finite() => ProtocolShape::Constant(v),
            ProtocolShape::LinearRamp { from, to } if from.is_finite() && to.is_finite() => {
                ProtocolShape::LinearRamp { from, to }
            }
            ProtocolShape::Sinusoid { amplitude, omega, phase }
                if amplitude.is_finite() && omega.is_finite() && phase.is_finite() =>
            {
                ProtocolShape::Sinusoid { amplitude, omega, phase }
            }
            ProtocolShape::PiecewiseLinear(knots) => ProtocolShape::PiecewiseLinear(validate_knots(knots, tau)?),
            other => return domain(format!("protocol parameters must be finite: {other:?}")),
        };
        Ok(Self { tau, shape, parity, grid_points, gain: 1.0, reversed: false })
    }

    pub fn constant(value: f64, tau: f64, grid_points: usize) -> Result<Self> {
        Self::new(ProtocolShape::Constant(value), tau, Parity::Even, grid_points)
    }

    pub fn linear_ramp(from: f64, to: f64, tau: f64, grid_points: usize) -> Result<Self> {
        Self::new(ProtocolShape::LinearRamp { from, to }, tau, Parity::Even, grid_points)
    }

    pub fn with_parity(mut self, parity: Parity) -> Self {
        self.parity = parity;
        self
    }

    pub fn with_grid_points(mut self, grid_points: usize) -> Result<Self> {
        if grid_points == 0 {
            return domain("grid_points must be at least 1");
        }
        self.grid_points = grid_points;
        Ok(self)
    }

    /// The same protocol multiplied by `factor`.
    pub fn scaled(mut self, factor: f64) -> Self {
        self.gain *= factor;
        self
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn grid_points(&self) -> usize {
        self.grid_points
    }

    pub fn shape(&self) -> &ProtocolShape {
        &self.shape
    }

    pub fn is_reversed(&self) -> bool {
        self.reversed
    }

    /// `Λ_t`, checked against `[0, τ]`.
    pub fn evaluate(&self, t: f64) -> Result<f64> {
        if !(0.0..=self.tau).contains(&t) {
            return domain(format!("time {t} outside protocol interval [0, {}]", self.tau));
        }
        Ok(self.value_at(t))
    }

    /// `Λ_t` without the interval check; callers guarantee `t ∈ [0, τ]`.
    pub fn value_at(&self, t: f64) -> f64 {
        let s = if self.reversed { self.tau - t } else { t };
        self.gain * self.base_value(s)
    }

    /// `dΛ/dt`, one-sided (right) at piecewise-linear knots.
    pub fn rate_at(&self, t: f64) -> f64 {
        if self.reversed {
            -self.gain * self.base_rate(self.tau - t)
        } else {
            self.gain * self.base_rate(t)
        }
    }

    /// The backward protocol `t ↦ η_Q Λ_{τ−t}`; τ and the grid are kept.
    pub fn backward(&self) -> Self {
        Self { gain: self.gain * self.parity.sign(), reversed: !self.reversed, ..self.clone() }
    }

    pub fn step(&self) -> f64 {
        self.tau / self.grid_points as f64
    }

    /// Grid node `k` of a grid with `steps` intervals over `[0, τ]`.
    pub fn node(&self, k: usize, steps: usize) -> f64 {
        if k == steps {
            self.tau
        } else {
            k as f64 * (self.tau / steps as f64)
        }
    }

    pub fn grid_times(&self) -> Vec<f64> {
        (0..=self.grid_points).map(|k| self.node(k, self.grid_points)).collect()
    }

    fn base_value(&self, s: f64) -> f64 {
        match &self.shape {
            ProtocolShape::Constant(v) => *v,
            ProtocolShape::LinearRamp { from, to } => from + (to - from) * (s / self.tau),
            ProtocolShape::Sinusoid { amplitude, omega, phase } => amplitude * (omega * s + phase).sin(),
            ProtocolShape::PiecewiseLinear(knots) => {
                let i = segment_index(knots, s);
                let ((t0, v0), (t1, v1)) = (knots[i], knots[i + 1]);
                v0 + (v1 - v0) * ((s - t0) / (t1 - t0))
            }
        }
    }

    fn base_rate(&self, s: f64) -> f64 {
        match &self.shape {
            ProtocolShape::Constant(_) => 0.0,
            ProtocolShape::LinearRamp { from, to } => (to - from) / self.tau,
            ProtocolShape::Sinusoid { amplitude, omega, phase } => amplitude * omega * (omega * s + phase).cos(),
            ProtocolShape::PiecewiseLinear(knots) => {
                let i = segment_index(knots, s);
                let ((t0, v0), (t1, v1)) = (knots[i], knots[i + 1]);
                (v1 - v0) / (t1 - t0)
            }
        }
    }
}

fn validate_knots(mut knots: Vec<(f64, f64)>, tau: f64) -> Result<Vec<(f64, f64)>> {
    if knots.len() < 2 {
        return domain("piecewise_linear needs at least two knots");
    }
    if knots.iter().any(|(t, v)| !t.is_finite() || !v.is_finite()) {
        return domain("piecewise_linear knots must be finite");
    }
    if knots.windows(2).any(|w| w[1].0 <= w[0].0) {
        return domain("piecewise_linear knot times must be strictly increasing");
    }
    let slop = 1e-12 * tau;
    let last = knots.len() - 1;
    if knots[0].0.abs() > slop || (knots[last].0 - tau).abs() > slop {
        return domain(format!("piecewise_linear knots must span [0, {tau}]"));
    }
    knots[0].0 = 0.0;
    knots[last].0 = tau;
    Ok(knots)
}

/// Index `i` of the segment `[t_i, t_{i+1})` holding `s`; the last segment is closed.
fn segment_index(knots: &[(f64, f64)], s: f64) -> usize {
    let upper = knots.partition_point(|(t, _)| *t <= s);
    upper.clamp(1, knots.len() - 1) - 1
}

/// A phase-space point of a one-dimensional system.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhasePoint {
    pub q: f64,
    pub p: f64,
}

impl PhasePoint {
    pub fn new(q: f64, p: f64) -> Self {
        Self { q, p }
    }

    /// The time-reversal map `θ(q, p) = (q, −p)`.
    pub fn reversed(self) -> Self {
        Self { q: self.q, p: -self.p }
    }

    pub fn is_finite(self) -> bool {
        self.q.is_finite() && self.p.is_finite()
    }

    pub fn distance(self, other: Self) -> f64 {
        (self.q - other.q).hypot(self.p - other.p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClassicalKind {
    /// `p²/2m + k q²/2`
    Harmonic { m: f64, k: f64 },
    /// `p²/2m + k q²/2 + g q⁴/4`
    Quartic { m: f64, k: f64, g: f64 },
}

/// A classical catalog system coupled to the force through `Q(q, p) = q`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalModel {
    kind: ClassicalKind,
}

impl ClassicalModel {
    pub fn harmonic(m: f64, k: f64) -> Result<Self> {
        if !(m.is_finite() && m > 0.0 && k.is_finite() && k > 0.0) {
            return domain(format!("harmonic model needs m > 0 and k > 0, got m={m}, k={k}"));
        }
        Ok(Self { kind: ClassicalKind::Harmonic { m, k } })
    }

    /// Any finite `k` is allowed: with `g > 0` the quartic term confines.
    pub fn quartic(m: f64, k: f64, g: f64) -> Result<Self> {
        if !(m.is_finite() && m > 0.0 && k.is_finite() && g.is_finite() && g > 0.0) {
            return domain(format!("quartic model needs m > 0, finite k and g > 0, got m={m}, k={k}, g={g}"));
        }
        Ok(Self { kind: ClassicalKind::Quartic { m, k, g } })
    }

    pub fn kind(&self) -> ClassicalKind {
        self.kind
    }

    pub fn mass(&self) -> f64 {
        match self.kind {
            ClassicalKind::Harmonic { m, .. } | ClassicalKind::Quartic { m, .. } => m,
        }
    }

    /// Phase-space half-dimension.
    pub fn dimension(&self) -> usize {
        1
    }

    /// Parity of the coupled observable `Q = q`.
    pub fn parity(&self) -> Parity {
        Parity::Even
    }

    pub fn coupling(&self, z: PhasePoint) -> f64 {
        z.q
    }

    /// Potential part of `H₀`.
    pub fn potential(&self, q: f64) -> f64 {
        match self.kind {
            ClassicalKind::Harmonic { k, .. } => 0.5 * k * q * q,
            ClassicalKind::Quartic { k, g, .. } => {
                let q2 = q * q;
                0.5 * k * q2 + 0.25 * g * q2 * q2
            }
        }
    }

    /// `∂H/∂q` at force `lambda`.
    pub fn force_gradient(&self, q: f64, lambda: f64) -> f64 {
        match self.kind {
            ClassicalKind::Harmonic { k, .. } => k * q - lambda,
            ClassicalKind::Quartic { k, g, .. } => k * q + g * q * q * q - lambda,
        }
    }

    pub fn hamiltonian(&self, z: PhasePoint, lambda: f64) -> f64 {
        z.p * z.p / (2.0 * self.mass()) + self.potential(z.q) - lambda * self.coupling(z)
    }

    /// `(∂H/∂q, ∂H/∂p)`.
    pub fn gradient(&self, z: PhasePoint, lambda: f64) -> (f64, f64) {
        (self.force_gradient(z.q, lambda), z.p / self.mass())
    }

    /// Closed-form Helmholtz free energy; harmonic models only.
    pub fn analytic_free_energy(&self, lambda: f64, beta: f64) -> Result<f64> {
        check_beta(beta)?;
        match self.kind {
            ClassicalKind::Harmonic { m, k } => {
                let z0 = 2.0 * std::f64::consts::PI / beta * (m / k).sqrt();
                Ok(-z0.ln() / beta - lambda * lambda / (2.0 * k))
            }
            ClassicalKind::Quartic { .. } => Err(Error::Unsupported(
                "no closed-form free energy for the quartic model; use numerical_free_energy".into(),
            )),
        }
    }

    /// Free energy from quadrature of the configurational integral times the
    /// Gaussian momentum factor. Works for every kind.
    pub fn numerical_free_energy(&self, lambda: f64, beta: f64) -> Result<f64> {
        check_beta(beta)?;
        let u = |q: f64| self.potential(q) - lambda * q;
        let (q_min, u_min) = self.global_minimum(lambda);
        // Extend the window until the Boltzmann factor is below e^-60 on both sides.
        let mut half = 1.0;
        while beta * (u(q_min - half) - u_min) < 60.0 || beta * (u(q_min + half) - u_min) < 60.0 {
            half *= 1.5;
            if half > 1e8 {
                return domain("configurational integral does not converge");
            }
        }
        let integrand = |q: f64| (-beta * (u(q) - u_min)).exp();
        let config = adaptive_simpson(&integrand, q_min - half, q_min + half, 1e-10 * half.min(1.0));
        let momentum = (2.0 * std::f64::consts::PI * self.mass() / beta).sqrt();
        Ok(u_min - (config * momentum).ln() / beta)
    }

    /// `F(λ₁) − F(λ₀)`, analytic when available.
    pub fn free_energy_difference(&self, from: f64, to: f64, beta: f64) -> Result<f64> {
        match self.kind {
            ClassicalKind::Harmonic { .. } => {
                Ok(self.analytic_free_energy(to, beta)? - self.analytic_free_energy(from, beta)?)
            }
            ClassicalKind::Quartic { .. } => {
                Ok(self.numerical_free_energy(to, beta)? - self.numerical_free_energy(from, beta)?)
            }
        }
    }

    fn global_minimum(&self, lambda: f64) -> (f64, f64) {
        let u = |q: f64| self.potential(q) - lambda * q;
        // Coarse scan over a box containing every stationary point, then Newton.
        let reach = match self.kind {
            ClassicalKind::Harmonic { k, .. } => 2.0 * (lambda / k).abs() + 1.0,
            ClassicalKind::Quartic { k, g, .. } => 2.0 * ((k.abs() / g).sqrt() + (lambda.abs() / g).cbrt()) + 1.0,
        };
        let n = 4000;
        let mut best = (-reach, u(-reach));
        for i in 1..=n {
            let q = -reach + 2.0 * reach * i as f64 / n as f64;
            let v = u(q);
            if v < best.1 {
                best = (q, v);
            }
        }
        let mut q = best.0;
        for _ in 0..50 {
            let curvature = match self.kind {
                ClassicalKind::Harmonic { k, .. } => k,
                ClassicalKind::Quartic { k, g, .. } => k + 3.0 * g * q * q,
            };
            if curvature <= 0.0 {
                break;
            }
            let dq = self.force_gradient(q, lambda) / curvature;
            q -= dq;
            if dq.abs() < 1e-15 * (1.0 + q.abs()) {
                break;
            }
        }
        if u(q) < best.1 {
            (q, u(q))
        } else {
            best
        }
    }
}

pub(crate) fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta > 0.0 {
        Ok(())
    } else {
        domain(format!("beta must be positive and finite, got {beta}"))
    }
}

const HERMITIAN_TOL: f64 = 1e-12;

/// A finite-dimensional driven quantum system `H(λ) = H₀ − λ Q`.
///
/// `H₀` is real symmetric. `Q` is either real symmetric (even parity) or
/// `i` times a real antisymmetric matrix (odd parity), so that entrywise
/// conjugation `Θ` satisfies `Θ H(λ) Θ = H(η_Q λ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumModel {
    h0: CMatrix,
    q: CMatrix,
    parity: Parity,
    hbar: f64,
}

impl QuantumModel {
    pub fn new(h0: CMatrix, q: CMatrix, parity: Parity, hbar: f64) -> Result<Self> {
        let n = h0.nrows();
        if n < 2 || !h0.is_square() || q.shape() != (n, n) {
            return domain(format!(
                "H0 and Q must be square of equal dimension >= 2, got {:?} and {:?}",
                h0.shape(),
                q.shape()
            ));
        }
        if !(hbar.is_finite() && hbar > 0.0) {
            return domain(format!("hbar must be positive, got {hbar}"));
        }
        hermiticity_defect(&h0).and_then(check_defect)?;
        hermiticity_defect(&q).and_then(check_defect)?;
        let h0_imag = h0.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
        if h0_imag > HERMITIAN_TOL {
            return domain(format!("H0 must be real in the computational basis (max |Im| = {h0_imag:e})"));
        }
        let parity_defect = q.iter().map(|z| (z.conj() - z * parity.sign()).norm()).fold(0.0, f64::max);
        if parity_defect > HERMITIAN_TOL {
            return domain(format!("Q does not have the declared parity under conjugation (defect {parity_defect:e})"));
        }
        Ok(Self { h0, q, parity, hbar })
    }

    /// Real symmetric `H₀` and `Q`; even parity.
    pub fn real(h0: DMatrix<f64>, q: DMatrix<f64>) -> Result<Self> {
        Self::new(complexify(&h0), complexify(&q), Parity::Even, 1.0)
    }

    /// Real symmetric `H₀` and `Q = i A` with `A` real antisymmetric; odd parity.
    pub fn imaginary_coupling(h0: DMatrix<f64>, a: DMatrix<f64>) -> Result<Self> {
        let q = a.map(|x| C64::new(0.0, x));
        Self::new(complexify(&h0), q, Parity::Odd, 1.0)
    }

    pub fn with_hbar(mut self, hbar: f64) -> Result<Self> {
        if !(hbar.is_finite() && hbar > 0.0) {
            return domain(format!("hbar must be positive, got {hbar}"));
        }
        self.hbar = hbar;
        Ok(self)
    }

    /// `H₀ = σ_z`, `Q = σ_x`.
    pub fn sigma_z_sigma_x() -> Self {
        Self::real(pauli_z(), pauli_x_real()).expect("catalog model")
    }

    /// `H₀ = σ_z`, `Q = σ_y`; odd parity.
    pub fn sigma_z_sigma_y() -> Self {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        Self::imaginary_coupling(pauli_z(), a).expect("catalog model")
    }

    /// `H₀ = Q = σ_z`; all `H(λ)` commute.
    pub fn sigma_z_sigma_z() -> Self {
        Self::real(pauli_z(), pauli_z()).expect("catalog model")
    }

    /// Spin one with `H₀ = S_z²` (doubly degenerate level) and `Q = S_x`.
    pub fn spin_one_sx() -> Self {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let sx = DMatrix::from_row_slice(3, 3, &[0.0, r, 0.0, r, 0.0, r, 0.0, r, 0.0]);
        Self::real(spin_one_sz2(), sx).expect("catalog model")
    }

    /// Spin one with `H₀ = S_z²` and `Q = S_y`; odd parity.
    pub fn spin_one_sy() -> Self {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let a = DMatrix::from_row_slice(3, 3, &[0.0, -r, 0.0, r, 0.0, -r, 0.0, r, 0.0]);
        Self::imaginary_coupling(spin_one_sz2(), a).expect("catalog model")
    }

    /// Every catalog entry with its name.
    pub fn catalog() -> Vec<(&'static str, QuantumModel)> {
        vec![
            ("sigma_z_sigma_x", Self::sigma_z_sigma_x()),
            ("sigma_z_sigma_y", Self::sigma_z_sigma_y()),
            ("sigma_z_sigma_z", Self::sigma_z_sigma_z()),
            ("spin_one_sx", Self::spin_one_sx()),
            ("spin_one_sy", Self::spin_one_sy()),
        ]
    }

    pub fn by_name(name: &str) -> Option<Self> {
        Self::catalog().into_iter().find(|(n, _)| *n == name).map(|(_, m)| m)
    }

    /// A random model of dimension `n`: `H₀` and `A` drawn from a Gaussian
    /// orthogonal ensemble scaled to a spectrum of order one; `Q = A/2`
    /// (even) or `i` times the antisymmetric part of `A` (odd).
    pub fn random(n: usize, parity: Parity, seed: u64) -> Result<Self> {
        if n < 2 {
            return domain("random model needs n >= 2");
        }
        let mut rng = rng::stream(seed, n as u64);
        let scale = 1.0 / (2.0 * n as f64).sqrt();
        let draw = |rng: &mut rand_chacha::ChaCha8Rng| {
            let g = DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            g * scale
        };
        let g0 = draw(&mut rng);
        let g1 = draw(&mut rng);
        let h0 = (&g0 + g0.transpose()) * 0.5;
        match parity {
            Parity::Even => Self::real(h0, (&g1 + g1.transpose()) * 0.25),
            Parity::Odd => Self::imaginary_coupling(h0, (&g1 - g1.transpose()) * 0.25),
        }
    }

    pub fn dimension(&self) -> usize {
        self.h0.nrows()
    }

    pub fn h0(&self) -> &CMatrix {
        &self.h0
    }

    pub fn coupling(&self) -> &CMatrix {
        &self.q
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// `H(λ) = H₀ − λ Q`.
    pub fn hamiltonian(&self, lambda: f64) -> CMatrix {
        &self.h0 - &self.q * C64::from(lambda)
    }
}

/// The anti-unitary time reversal acting on an operator: `Θ A Θ = conj(A)`.
pub fn time_reverse(a: &CMatrix) -> CMatrix {
    a.map(|z| z.conj())
}

pub fn complexify(a: &DMatrix<f64>) -> CMatrix {
    a.map(C64::from)
}

pub(crate) fn hermiticity_defect(a: &CMatrix) -> Result<f64> {
    if !a.is_square() {
        return domain(format!("matrix must be square, got {:?}", a.shape()));
    }
    let n = a.nrows();
    let mut defect: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            defect = defect.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    Ok(defect)
}

fn check_defect(defect: f64) -> Result<()> {
    if defect > HERMITIAN_TOL {
        Err(Error::NotHermitian { defect, tol: HERMITIAN_TOL })
    } else {
        Ok(())
    }
}

pub(crate) fn ensure_hermitian(a: &CMatrix) -> Result<()> {
    check_defect(hermiticity_defect(a)?)
}

fn pauli_z() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0])
}

fn pauli_x_real() -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
}

fn spin_one_sz2() -> DMatrix<f64> {
    DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![1.0, 0.0, 1.0]))
}
