//! Driven Hamiltonian trajectories: Gibbs sampling, leapfrog integration,
//! work statistics and the classical fluctuation relations.

use rand::Rng;
use rand_distr::{Normal, StandardNormal};
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::model::{check_beta, ClassicalKind, ClassicalModel, ForceProtocol, Parity, PhasePoint};
use crate::rng;
use crate::stats;

const METROPOLIS_BURN_IN: usize = 10_000;
const METROPOLIS_THINNING: usize = 50;

// Salts separating the random streams used by one master seed.
const SALT_MOMENTA: u64 = 1;
const SALT_CHAIN: u64 = 2;
const SALT_BOOTSTRAP: u64 = 3;
const SALT_BACKWARD: u64 = 4;

/// One driven trajectory and the work done on it.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub z0: PhasePoint,
    pub z_tau: PhasePoint,
    /// `H(z(τ), Λ_τ) − H(z₀, Λ₀)`.
    pub work_energy: f64,
    /// Trapezoid rule for `−∫ Λ̇ Q dt` on the step grid.
    pub work_integral: f64,
    /// `Q(z(t))` on the step grid, when requested.
    pub q_path: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }
}

/// Work values of a Monte Carlo ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkEnsemble {
    pub works: Vec<f64>,
    pub beta: f64,
    pub direction: Direction,
    pub master_seed: u64,
}

impl WorkEnsemble {
    pub fn new(works: Vec<f64>, beta: f64, direction: Direction, master_seed: u64) -> Result<Self> {
        check_beta(beta)?;
        if let Some(i) = works.iter().position(|w| !w.is_finite()) {
            return domain(format!("work value {i} is not finite"));
        }
        Ok(Self { works, beta, direction, master_seed })
    }

    pub fn n_trajectories(&self) -> usize {
        self.works.len()
    }
}

/// Observables `B` available to the generalized relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    Position,
    Momentum,
}

impl Observable {
    pub fn parity(self) -> Parity {
        match self {
            Observable::Position => Parity::Even,
            Observable::Momentum => Parity::Odd,
        }
    }

    pub fn value(self, z: PhasePoint) -> f64 {
        match self {
            Observable::Position => z.q,
            Observable::Momentum => z.p,
        }
    }
}

/// `n` independent draws from `e^{−βH(z,λ)}/Z(λ)`.
///
/// Harmonic models are sampled exactly. Quartic positions come from one
/// random-walk Metropolis chain (10 000 burn-in steps with step-size
/// adaptation, then every 50th state); momenta are always exact Gaussians.
pub fn sample_gibbs(model: &ClassicalModel, lambda: f64, beta: f64, n: usize, seed: u64) -> Result<Vec<PhasePoint>> {
    check_beta(beta)?;
    if n == 0 {
        return domain("sample count must be positive");
    }
    let momentum = Normal::new(0.0, (model.mass() / beta).sqrt()).expect("positive scale");
    let momenta_seed = rng::derive_seed(seed, SALT_MOMENTA);
    let draw_p = |i: usize| rng::stream(momenta_seed, i as u64).sample(momentum);
    match model.kind() {
        ClassicalKind::Harmonic { k, .. } => {
            let sd = (1.0 / (beta * k)).sqrt();
            Ok((0..n)
                .into_par_iter()
                .map(|i| {
                    let mut r = rng::stream(seed, i as u64);
                    let q = lambda / k + sd * r.sample::<f64, _>(StandardNormal);
                    PhasePoint::new(q, r.sample(momentum))
                })
                .collect())
        }
        ClassicalKind::Quartic { .. } => {
            let qs = metropolis_positions(model, lambda, beta, n, rng::derive_seed(seed, SALT_CHAIN));
            Ok(qs.into_iter().enumerate().map(|(i, q)| PhasePoint::new(q, draw_p(i))).collect())
        }
    }
}

fn metropolis_positions(model: &ClassicalModel, lambda: f64, beta: f64, n: usize, seed: u64) -> Vec<f64> {
    let energy = |q: f64| beta * (model.potential(q) - lambda * q);
    let mut r = rng::stream(seed, 0);
    let mut q = 0.0;
    let mut e = energy(q);
    let mut step = 1.0 / beta.sqrt();
    let mut accepted = 0usize;
    let propose = |q: &mut f64, e: &mut f64, step: f64, r: &mut rand_chacha::ChaCha8Rng| -> bool {
        let candidate = *q + step * r.random_range(-1.0..1.0);
        let ec = energy(candidate);
        if ec <= *e || r.random::<f64>() < (*e - ec).exp() {
            *q = candidate;
            *e = ec;
            true
        } else {
            false
        }
    };
    for i in 1..=METROPOLIS_BURN_IN {
        accepted += propose(&mut q, &mut e, step, &mut r) as usize;
        if i % 100 == 0 {
            let rate = accepted as f64 / 100.0;
            step *= (rate - 0.44).exp();
            accepted = 0;
        }
    }
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        for _ in 0..METROPOLIS_THINNING {
            propose(&mut q, &mut e, step, &mut r);
        }
        out.push(q);
    }
    out
}

/// Leapfrog over `[0, t_end]` with `steps` equal steps. The force in each
/// step is `Λ` at the step midpoint. `observe(k, z)` sees every node.
fn leapfrog(
    model: &ClassicalModel,
    protocol: &ForceProtocol,
    z0: PhasePoint,
    t_end: f64,
    steps: usize,
    mut observe: impl FnMut(usize, f64, PhasePoint),
) -> Result<PhasePoint> {
    let m = model.mass();
    let dt = if steps == 0 { 0.0 } else { t_end / steps as f64 };
    let node = |k: usize| if k == steps { t_end } else { k as f64 * dt };
    let mut z = z0;
    observe(0, 0.0, z);
    for k in 0..steps {
        let lambda = protocol.value_at((k as f64 + 0.5) * dt);
        let p_half = z.p - 0.5 * dt * model.force_gradient(z.q, lambda);
        let q = z.q + dt * p_half / m;
        let p = p_half - 0.5 * dt * model.force_gradient(q, lambda);
        z = PhasePoint::new(q, p);
        if !z.is_finite() {
            return Err(Error::BlowUp { step: k + 1, time: node(k + 1) });
        }
        observe(k + 1, node(k + 1), z);
    }
    Ok(z)
}

/// Integrate from `z0` over the whole protocol with `steps` leapfrog steps.
pub fn integrate(
    model: &ClassicalModel,
    protocol: &ForceProtocol,
    z0: PhasePoint,
    steps: usize,
    record_path: bool,
) -> Result<TrajectoryRecord> {
    if steps == 0 {
        return domain("steps must be at least 1");
    }
    let tau = protocol.tau();
    let dt = tau / steps as f64;
    let mut path = record_path.then(|| Vec::with_capacity(steps + 1));
    let mut integral = 0.0;
    let mut previous = 0.0;
    let z_tau = leapfrog(model, protocol, z0, tau, steps, |k, t, z| {
        let integrand = -protocol.rate_at(t) * model.coupling(z);
        if k > 0 {
            integral += 0.5 * dt * (previous + integrand);
        }
        previous = integrand;
        if let Some(path) = path.as_mut() {
            path.push(model.coupling(z));
        }
    })?;
    let work_energy = model.hamiltonian(z_tau, protocol.value_at(tau)) - model.hamiltonian(z0, protocol.value_at(0.0));
    Ok(TrajectoryRecord { z0, z_tau, work_energy, work_integral: integral, q_path: path })
}

/// Phase point reached at `t_end ∈ [0, τ]` after `steps` leapfrog steps
/// spanning `[0, t_end]`. A zero-length span returns `z0`.
pub fn integrate_span(
    model: &ClassicalModel,
    protocol: &ForceProtocol,
    z0: PhasePoint,
    t_end: f64,
    steps: usize,
) -> Result<PhasePoint> {
    if !(0.0..=protocol.tau()).contains(&t_end) {
        return domain(format!("time {t_end} outside protocol interval [0, {}]", protocol.tau()));
    }
    if t_end == 0.0 {
        return Ok(z0);
    }
    if steps == 0 {
        return domain("steps must be at least 1");
    }
    leapfrog(model, protocol, z0, t_end, steps, |_, _, _| {})
}

/// `|φ_{t,0}[z₀;Λ] − θ(φ_{τ−t,0}[θ(z(τ));Λ̃])|`.
///
/// Each of the three legs (forward to `t`, forward to `τ`, backward for
/// `τ − t`) is integrated with `steps` steps over its own duration.
pub fn check_microreversibility(
    model: &ClassicalModel,
    protocol: &ForceProtocol,
    z0: PhasePoint,
    t: f64,
    steps: usize,
) -> Result<f64> {
    let tau = protocol.tau();
    if !(0.0..=tau).contains(&t) {
        return domain(format!("time {t} outside protocol interval [0, {tau}]"));
    }
    let forward_t = integrate_span(model, protocol, z0, t, steps)?;
    let z_tau = integrate_span(model, protocol, z0, tau, steps)?;
    let backward = protocol.backward();
    let z_back = integrate_span(model, &backward, z_tau.reversed(), tau - t, steps)?;
    Ok(forward_t.distance(z_back.reversed()))
}

/// Gibbs-initialized trajectories at `Λ₀`, run in parallel; trajectory `i`
/// always uses the same random stream.
pub fn run_ensemble(
    model: &ClassicalModel,
    protocol: &ForceProtocol,
    beta: f64,
    n: usize,
    seed: u64,
    record_path: bool,
) -> Result<Vec<TrajectoryRecord>> {
    let starts = sample_gibbs(model, protocol.value_at(0.0), beta, n, seed)?;
    let steps = protocol.grid_points();
    starts.into_par_iter().map(|z0| integrate(model, protocol, z0, steps, record_path)).collect()
}

/// Work ensemble of `n` trajectories under `protocol`.
pub fn work_ensemble(
    model: &ClassicalModel,
    protocol: &ForceProtocol,
    beta: f64,
    n: usize,
    seed: u64,
    direction: Direction,
) -> Result<(WorkEnsemble, Vec<TrajectoryRecord>)> {
    let records = run_ensemble(model, protocol, beta, n, seed, false)?;
    let works = records.iter().map(|r| r.work_energy).collect();
    Ok((WorkEnsemble::new(works, beta, direction, seed)?, records))
}

/// Estimate of `⟨e^{−βW}⟩` and its bootstrap standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JarzynskiEstimate {
    pub value: f64,
    pub se: f64,
}

pub fn jarzynski_estimate(ensemble: &WorkEnsemble) -> Result<JarzynskiEstimate> {
    if ensemble.n_trajectories() < 2 {
        return domain(format!("Jarzynski estimate needs at least 2 trajectories, got {}", ensemble.n_trajectories()));
    }
    let beta = ensemble.beta;
    let weights: Vec<f64> = ensemble.works.iter().map(|w| (-beta * w).exp()).collect();
    let value = stats::mean(&weights);
    let se = stats::bootstrap_se(
        &weights,
        stats::mean,
        stats::DEFAULT_BOOTSTRAP_RESAMPLES,
        rng::derive_seed(ensemble.master_seed, SALT_BOOTSTRAP),
    )?;
    Ok(JarzynskiEstimate { value, se })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JensenReport {
    pub mean_work: f64,
    pub mean_dissipated: f64,
    pub se: f64,
    pub pass: bool,
}

/// `⟨W⟩ ≥ ΔF`, allowing three standard errors of the mean.
pub fn jensen_check(ensemble: &WorkEnsemble, delta_f: f64) -> JensenReport {
    let mean_work = stats::mean(&ensemble.works);
    let se = if ensemble.n_trajectories() > 1 { stats::standard_error(&ensemble.works) } else { 0.0 };
    JensenReport { mean_work, mean_dissipated: mean_work - delta_f, se, pass: mean_work >= delta_f - 3.0 * se }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedReport {
    pub lhs: f64,
    pub lhs_se: f64,
    pub rhs: f64,
    pub rhs_se: f64,
    pub delta_f: f64,
    /// Works of the forward trajectories behind `lhs`.
    pub forward_works: Vec<f64>,
}

impl GeneralizedReport {
    pub fn combined_se(&self) -> f64 {
        self.lhs_se.hypot(self.rhs_se)
    }

    pub fn gap(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }
}

/// Both sides of `⟨e^{∫u B dt} e^{−βW}⟩_Λ = e^{−βΔF} ⟨e^{∫ũ B dt}⟩_Λ̃`, with
/// `ũ_k = η_B u_{N−k}` and `u` sampled on the protocol grid.
pub fn generalized_jarzynski_check(
    model: &ClassicalModel,
    protocol: &ForceProtocol,
    u: &[f64],
    observable: Observable,
    beta: f64,
    n: usize,
    seed: u64,
) -> Result<GeneralizedReport> {
    let steps = protocol.grid_points();
    if u.len() != steps + 1 {
        return Err(Error::GridMismatch { expected: steps + 1, got: u.len() });
    }
    if n < 2 {
        return domain(format!("need at least 2 trajectories per direction, got {n}"));
    }
    let eta_b = observable.parity().sign();
    let u_tilde: Vec<f64> = (0..=steps).map(|k| eta_b * u[steps - k]).collect();
    let backward = protocol.backward();
    let delta_f = model.free_energy_difference(protocol.value_at(0.0), protocol.value_at(protocol.tau()), beta)?;

    let forward = functional_samples(model, protocol, u, observable, beta, n, seed)?;
    let backward_samples =
        functional_samples(model, &backward, &u_tilde, observable, beta, n, rng::derive_seed(seed, SALT_BACKWARD))?;
    let forward_weights: Vec<f64> = forward.iter().map(|(f, w)| f * (-beta * w).exp()).collect();
    let backward_weights: Vec<f64> = backward_samples.iter().map(|(f, _)| *f).collect();

    let boot = |xs: &[f64], salt: u64| {
        stats::bootstrap_se(xs, stats::mean, stats::DEFAULT_BOOTSTRAP_RESAMPLES, rng::derive_seed(seed, salt))
    };
    let scale = (-beta * delta_f).exp();
    Ok(GeneralizedReport {
        lhs: stats::mean(&forward_weights),
        lhs_se: boot(&forward_weights, SALT_BOOTSTRAP)?,
        rhs: scale * stats::mean(&backward_weights),
        rhs_se: scale * boot(&backward_weights, SALT_BOOTSTRAP + 1)?,
        delta_f,
        forward_works: forward.iter().map(|(_, w)| *w).collect(),
    })
}

/// Per-trajectory `(exp(∫u B dt), W)`.
fn functional_samples(
    model: &ClassicalModel,
    protocol: &ForceProtocol,
    u: &[f64],
    observable: Observable,
    beta: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let steps = protocol.grid_points();
    let tau = protocol.tau();
    let dt = tau / steps as f64;
    let starts = sample_gibbs(model, protocol.value_at(0.0), beta, n, seed)?;
    starts
        .into_par_iter()
        .map(|z0| {
            let mut integral = 0.0;
            let mut previous = 0.0;
            let z_tau = leapfrog(model, protocol, z0, tau, steps, |k, _, z| {
                let integrand = u[k] * observable.value(z);
                if k > 0 {
                    integral += 0.5 * dt * (previous + integrand);
                }
                previous = integrand;
            })?;
            let w = model.hamiltonian(z_tau, protocol.value_at(tau)) - model.hamiltonian(z0, protocol.value_at(0.0));
            Ok((integral.exp(), w))
        })
        .collect()
}
