//! Overdamped Langevin particles and the Einstein relation `μ = D / k_BT`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{domain, Result};
use crate::rng;
use crate::stats;

#[derive(Debug, Clone, PartialEq)]
pub struct BrownianConfig {
    pub gamma: f64,
    pub kbt: f64,
    /// Constant applied force.
    pub force: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub n_particles: usize,
    pub seed: u64,
    /// Optional harmonic trap `U = k x²/2`.
    pub trap_stiffness: Option<f64>,
    /// Ensemble averages are recorded every `record_stride` steps.
    pub record_stride: usize,
    /// Each step's normal variate is the normalized sum of this many draws,
    /// so a run at `dt` with refinement 2 sees the same noise path as a run
    /// at `dt/2` with refinement 1.
    pub noise_refinement: usize,
}

impl BrownianConfig {
    pub fn new(gamma: f64, kbt: f64, force: f64, dt: f64, n_steps: usize, n_particles: usize, seed: u64) -> Self {
        Self {
            gamma,
            kbt,
            force,
            dt,
            n_steps,
            n_particles,
            seed,
            trap_stiffness: None,
            record_stride: 1.max(n_steps / 100),
            noise_refinement: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                domain(format!("{name} must be positive and finite, got {v}"))
            }
        };
        positive("gamma", self.gamma)?;
        positive("kbt", self.kbt)?;
        positive("dt", self.dt)?;
        if !self.force.is_finite() {
            return domain("force must be finite");
        }
        if let Some(k) = self.trap_stiffness {
            positive("trap_stiffness", k)?;
        }
        if self.n_steps == 0 || self.n_particles == 0 || self.record_stride == 0 || self.noise_refinement == 0 {
            return domain("n_steps, n_particles, record_stride and noise_refinement must be positive");
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }
}

/// Ensemble summary of a Brownian run.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianRun {
    /// Recording times, starting at 0.
    pub times: Vec<f64>,
    pub mean_displacement: Vec<f64>,
    pub msd: Vec<f64>,
    pub final_positions: Vec<f64>,
    /// Per-particle `(x(T) − x(0)) / T`.
    pub velocities: Vec<f64>,
    /// Per-particle least-squares slope of `(x(t) − x(0))²` against `2t`
    /// over the second half of the run.
    pub diffusion_slopes: Vec<f64>,
}

struct Particle {
    displacements: Vec<f64>,
    final_position: f64,
    slope: f64,
}

/// Euler–Maruyama for `dx = (F − k x)/γ dt + √(2 k_BT/γ) dW`, particles
/// starting at the origin.
pub fn simulate_overdamped(config: &BrownianConfig) -> Result<BrownianRun> {
    config.validate()?;
    let c = config;
    let n = c.n_steps;
    let records: Vec<usize> = (0..=n).step_by(c.record_stride).collect();
    let times: Vec<f64> = records.iter().map(|&k| k as f64 * c.dt).collect();

    // Regression abscissae X_k = 2 t_k over the second half.
    let first = n / 2;
    let count = (n - first + 1) as f64;
    let x_mean = (first..=n).map(|k| 2.0 * k as f64 * c.dt).sum::<f64>() / count;
    let sxx: f64 = (first..=n).map(|k| (2.0 * k as f64 * c.dt - x_mean).powi(2)).sum();

    let particles: Vec<Particle> =
        (0..c.n_particles).into_par_iter().map(|i| simulate_particle(c, i, &records, first, x_mean, sxx)).collect();

    let n_particles = c.n_particles as f64;
    let mut mean_displacement = vec![0.0; records.len()];
    let mut msd = vec![0.0; records.len()];
    for p in &particles {
        for (j, d) in p.displacements.iter().enumerate() {
            mean_displacement[j] += d;
            msd[j] += d * d;
        }
    }
    mean_displacement.iter_mut().for_each(|x| *x /= n_particles);
    msd.iter_mut().for_each(|x| *x /= n_particles);
    let duration = c.duration();
    Ok(BrownianRun {
        times,
        mean_displacement,
        msd,
        final_positions: particles.iter().map(|p| p.final_position).collect(),
        velocities: particles.iter().map(|p| p.final_position / duration).collect(),
        diffusion_slopes: particles.iter().map(|p| p.slope).collect(),
    })
}

fn simulate_particle(
    c: &BrownianConfig,
    index: usize,
    records: &[usize],
    first: usize,
    x_mean: f64,
    sxx: f64,
) -> Particle {
    let mut r = rng::stream(c.seed, index as u64);
    let drift = c.dt / c.gamma;
    let amplitude = (2.0 * c.kbt / c.gamma * c.dt).sqrt();
    let refinement_norm = (c.noise_refinement as f64).sqrt().recip();
    let stiffness = c.trap_stiffness.unwrap_or(0.0);
    let mut x = 0.0f64;
    let mut displacements = Vec::with_capacity(records.len());
    let mut next_record = 0;
    let mut sum_xy = 0.0;
    for k in 0..=c.n_steps {
        if k > 0 {
            let mut xi = 0.0;
            for _ in 0..c.noise_refinement {
                xi += r.sample::<f64, _>(StandardNormal);
            }
            if c.noise_refinement > 1 {
                xi *= refinement_norm;
            }
            x += (c.force - stiffness * x) * drift + amplitude * xi;
        }
        if next_record < records.len() && records[next_record] == k {
            displacements.push(x);
            next_record += 1;
        }
        if k >= first {
            sum_xy += (2.0 * k as f64 * c.dt - x_mean) * x * x;
        }
    }
    let slope = if sxx > 0.0 { sum_xy / sxx } else { 0.0 };
    Particle { displacements, final_position: x, slope }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

/// `μ = v_d / F` from the ensemble-mean terminal velocity.
pub fn estimate_mobility(run: &BrownianRun, force: f64) -> Result<Estimate> {
    if force == 0.0 || !force.is_finite() {
        return domain("mobility needs a nonzero applied force");
    }
    if run.velocities.len() < 2 {
        return domain("mobility needs at least 2 particles");
    }
    Ok(Estimate {
        value: stats::mean(&run.velocities) / force,
        se: stats::standard_error(&run.velocities) / force.abs(),
    })
}

/// `D` as the slope of the mean-squared displacement against `2t` over the
/// second half of an unforced run.
pub fn estimate_diffusion(run: &BrownianRun) -> Result<Estimate> {
    if run.diffusion_slopes.len() < 2 {
        return domain("diffusion needs at least 2 particles");
    }
    Ok(Estimate { value: stats::mean(&run.diffusion_slopes), se: stats::standard_error(&run.diffusion_slopes) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EinsteinReport {
    pub gap: f64,
    pub combined_se: f64,
    pub pass: bool,
}

/// `|μ − D/k_BT| ≤ 3 σ` with `σ` the combined standard error.
pub fn einstein_check(mobility: Estimate, diffusion: Estimate, kbt: f64) -> EinsteinReport {
    let gap = (mobility.value - diffusion.value / kbt).abs();
    let combined_se = mobility.se.hypot(diffusion.se / kbt);
    EinsteinReport { gap, combined_se, pass: gap <= 3.0 * combined_se }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{ks_p_value, ks_statistic, normal_cdf};

    fn config(gamma: f64, kbt: f64, force: f64) -> BrownianConfig {
        BrownianConfig::new(gamma, kbt, force, 1e-2, 2000, 2000, 17)
    }

    #[test]
    fn unforced_mean_displacement_vanishes() {
        let run = simulate_overdamped(&config(1.0, 1.0, 0.0)).unwrap();
        let se = stats::standard_error(&run.final_positions);
        assert!(stats::mean(&run.final_positions).abs() < 3.0 * se);
        assert_eq!(run.times.len(), run.msd.len());
    }

    #[test]
    fn forced_drift_is_exact() {
        let c = config(1.0, 1.0, 1.0);
        let run = simulate_overdamped(&c).unwrap();
        let se = stats::standard_error(&run.final_positions);
        assert!((stats::mean(&run.final_positions) - c.duration()).abs() < 3.0 * se);
    }

    #[test]
    fn runs_are_deterministic() {
        let c = BrownianConfig::new(1.0, 1.0, 0.3, 1e-2, 300, 200, 5);
        assert_eq!(simulate_overdamped(&c).unwrap(), simulate_overdamped(&c).unwrap());
    }

    #[test]
    fn estimators_recover_scheme_values() {
        let forced = simulate_overdamped(&config(1.0, 1.0, 0.5)).unwrap();
        let mu = estimate_mobility(&forced, 0.5).unwrap();
        assert!((mu.value - 1.0).abs() < 0.05);
        let free = simulate_overdamped(&config(1.0, 1.0, 0.0)).unwrap();
        let d = estimate_diffusion(&free).unwrap();
        assert!((d.value - 1.0).abs() < 0.05, "{d:?}");
        assert!(estimate_mobility(&free, 0.0).is_err());
    }

    #[test]
    fn einstein_rule_arithmetic() {
        let exact = Estimate { value: 1.0, se: 0.0 };
        let r = einstein_check(exact, exact, 1.0);
        assert_eq!(r.gap, 0.0);
        assert!(r.pass);
        let r = einstein_check(Estimate { value: 1.02, se: 0.01 }, Estimate { value: 1.0, se: 0.01 }, 1.0);
        assert!((r.gap - 0.02).abs() < 1e-15);
        // 3σ = 3·√2·0.01 ≈ 0.042 covers the gap.
        assert!(r.pass);
        let r = einstein_check(Estimate { value: 1.05, se: 0.01 }, Estimate { value: 1.0, se: 0.01 }, 1.0);
        assert!(!r.pass);
    }

    #[test]
    fn einstein_pipeline_at_other_parameters() {
        let (gamma, kbt) = (2.0, 0.5);
        let mut forced = config(gamma, kbt, 1.0);
        forced.seed = 1;
        let mut free = config(gamma, kbt, 0.0);
        free.seed = 2;
        let mu = estimate_mobility(&simulate_overdamped(&forced).unwrap(), 1.0).unwrap();
        let d = estimate_diffusion(&simulate_overdamped(&free).unwrap()).unwrap();
        assert!((mu.value - 0.5).abs() < 0.05 * 0.5);
        assert!((d.value - 0.25).abs() < 0.05 * 0.25);
        assert!(einstein_check(mu, d, kbt).pass);
    }

    #[test]
    fn trapped_particles_reach_boltzmann_distribution() {
        let (k, kbt, gamma) = (2.0, 0.7, 1.0);
        let relaxation = gamma / k;
        let dt = 1e-3;
        let mut c = BrownianConfig::new(gamma, kbt, 0.0, dt, (10.0 * relaxation / dt) as usize, 10_000, 8);
        c.trap_stiffness = Some(k);
        let run = simulate_overdamped(&c).unwrap();
        let sd = (kbt / k).sqrt();
        let d = ks_statistic(&run.final_positions, |x| normal_cdf(x, 0.0, sd));
        assert!(ks_p_value(d, run.final_positions.len()) > 0.01);
    }

    #[test]
    fn halving_dt_changes_estimates_by_less_than_one_se() {
        let coarse = BrownianConfig { noise_refinement: 2, ..BrownianConfig::new(1.0, 1.0, 0.5, 2e-2, 500, 2000, 4) };
        let fine = BrownianConfig::new(1.0, 1.0, 0.5, 1e-2, 1000, 2000, 4);
        let (a, b) = (simulate_overdamped(&coarse).unwrap(), simulate_overdamped(&fine).unwrap());
        let (ma, mb) = (estimate_mobility(&a, 0.5).unwrap(), estimate_mobility(&b, 0.5).unwrap());
        assert!((ma.value - mb.value).abs() < ma.se, "{ma:?} {mb:?}");
        let free = |c: &BrownianConfig| BrownianConfig { force: 0.0, ..c.clone() };
        let (da, db) = (
            estimate_diffusion(&simulate_overdamped(&free(&coarse)).unwrap()).unwrap(),
            estimate_diffusion(&simulate_overdamped(&free(&fine)).unwrap()).unwrap(),
        );
        assert!((da.value - db.value).abs() < da.se, "{da:?} {db:?}");
    }

    #[test]
    fn invalid_configs_are_rejected() {
        for bad in [config(0.0, 1.0, 0.0), config(1.0, -1.0, 0.0), BrownianConfig { dt: 0.0, ..config(1.0, 1.0, 0.0) }]
        {
            assert!(simulate_overdamped(&bad).is_err());
        }
    }
}
