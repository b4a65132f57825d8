//! Run configuration: strict JSON, validated per experiment.

use std::path::{Path, PathBuf};

use fluctuant_core::{
    model::complexify, BrownianConfig, CMatrix, ClassicalModel, ForceProtocol, Observable, Parity, ProtocolShape,
    QuantumModel,
};
use matrix::to_matrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config key `{key}`: {message}")]
    Invalid { key: String, message: String },
}

pub(crate) fn invalid<T>(key: &str, message: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError::Invalid { key: key.to_string(), message: message.into() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    ClassicalJarzynski,
    ClassicalCrooks,
    ClassicalMicrorev,
    GeneralizedJarzynski,
    QuantumTpm,
    QuantumCrooks,
    QuantumMicrorev,
    OperatorWorkGap,
    LinearResponseFdt,
    LinearResponseFirstorder,
    BrownianEinstein,
}

impl Experiment {
    pub const ALL: [Experiment; 11] = [
        Experiment::ClassicalJarzynski,
        Experiment::ClassicalCrooks,
        Experiment::ClassicalMicrorev,
        Experiment::GeneralizedJarzynski,
        Experiment::QuantumTpm,
        Experiment::QuantumCrooks,
        Experiment::QuantumMicrorev,
        Experiment::OperatorWorkGap,
        Experiment::LinearResponseFdt,
        Experiment::LinearResponseFirstorder,
        Experiment::BrownianEinstein,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::ClassicalJarzynski => "classical_jarzynski",
            Experiment::ClassicalCrooks => "classical_crooks",
            Experiment::ClassicalMicrorev => "classical_microrev",
            Experiment::GeneralizedJarzynski => "generalized_jarzynski",
            Experiment::QuantumTpm => "quantum_tpm",
            Experiment::QuantumCrooks => "quantum_crooks",
            Experiment::QuantumMicrorev => "quantum_microrev",
            Experiment::OperatorWorkGap => "operator_work_gap",
            Experiment::LinearResponseFdt => "linear_response_fdt",
            Experiment::LinearResponseFirstorder => "linear_response_firstorder",
            Experiment::BrownianEinstein => "brownian_einstein",
        }
    }

    /// Keys that must be present for this experiment.
    pub fn required_keys(self) -> &'static [&'static str] {
        match self {
            Experiment::ClassicalJarzynski | Experiment::ClassicalCrooks => {
                &["model", "protocol", "beta", "n_trajectories"]
            }
            Experiment::ClassicalMicrorev => &["model", "protocol"],
            Experiment::GeneralizedJarzynski => &["model", "protocol", "beta", "n_trajectories"],
            Experiment::QuantumTpm | Experiment::QuantumCrooks | Experiment::OperatorWorkGap => {
                &["model", "protocol", "beta", "slices"]
            }
            Experiment::QuantumMicrorev => &["model", "protocol", "slices"],
            Experiment::LinearResponseFdt => &["model", "beta"],
            Experiment::LinearResponseFirstorder => &["model", "protocol", "beta", "slices"],
            Experiment::BrownianEinstein => &["brownian"],
        }
    }

    /// The relation the experiment verifies.
    pub fn relation(self) -> &'static str {
        match self {
            Experiment::ClassicalJarzynski => {
                "Jarzynski equality <exp(-beta W)> = exp(-beta dF) and second law <W> >= dF"
            }
            Experiment::ClassicalCrooks => "Crooks fluctuation theorem p_F(w) = exp(beta (w - dF)) p_B(-w)",
            Experiment::ClassicalMicrorev => "Classical microreversibility of the driven flow",
            Experiment::GeneralizedJarzynski => "Generating-functional fluctuation relation",
            Experiment::QuantumTpm => "Quantum Jarzynski equality for two-point-measurement work",
            Experiment::QuantumCrooks => "Quantum Crooks theorem P[w] = exp(beta (w - dF)) P~[-w]",
            Experiment::QuantumMicrorev => "Quantum microreversibility of the driven propagator",
            Experiment::OperatorWorkGap => "Failure of operator work unless H(t) commutes at all times",
            Experiment::LinearResponseFdt => "Quantum fluctuation-dissipation theorem with the coth factor",
            Experiment::LinearResponseFirstorder => "First-order response dB(t) = int Phi(t - s) Lambda_s ds",
            Experiment::BrownianEinstein => "Einstein relation mu = D / (k_B T)",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Harmonic,
    Quartic,
    /// A named entry of the quantum catalog.
    Catalog,
    /// A random real model of dimension `n`.
    Random,
    /// Explicit `h0` and `q`; with `eta_q = -1`, `q` holds a real
    /// antisymmetric `A` and the coupling is `i A`.
    Matrices,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub g: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_q: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h0: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hbar: Option<f64>,
}

fn need<T: Copy>(value: Option<T>, key: &str) -> Result<T, ConfigError> {
    value.ok_or_else(|| ConfigError::Invalid { key: key.into(), message: "required for this model kind".into() })
}

fn core_err(key: &str) -> impl Fn(fluctuant_core::Error) -> ConfigError + '_ {
    move |e| ConfigError::Invalid { key: key.into(), message: e.to_string() }
}

impl ModelSpec {
    pub fn classical(&self) -> Result<ClassicalModel, ConfigError> {
        match self.kind {
            ModelKind::Harmonic => {
                ClassicalModel::harmonic(need(self.m, "model.m")?, need(self.k, "model.k")?).map_err(core_err("model"))
            }
            ModelKind::Quartic => {
                ClassicalModel::quartic(need(self.m, "model.m")?, need(self.k, "model.k")?, need(self.g, "model.g")?)
                    .map_err(core_err("model"))
            }
            _ => invalid("model.kind", "this experiment needs a classical model (harmonic or quartic)"),
        }
    }

    pub fn quantum(&self) -> Result<QuantumModel, ConfigError> {
        let model = match self.kind {
            ModelKind::Catalog => {
                let name = self.name.as_deref().ok_or_else(|| ConfigError::Invalid {
                    key: "model.name".into(),
                    message: "required for catalog models".into(),
                })?;
                QuantumModel::by_name(name).ok_or_else(|| ConfigError::Invalid {
                    key: "model.name".into(),
                    message: format!(
                        "unknown catalog model {name:?}; available: {}",
                        QuantumModel::catalog().iter().map(|(n, _)| *n).collect::<Vec<_>>().join(", ")
                    ),
                })?
            }
            ModelKind::Random => {
                let parity = parity(self.eta_q.unwrap_or(1), "model.eta_q")?;
                QuantumModel::random(need(self.n, "model.n")?, parity, self.seed.unwrap_or(0))
                    .map_err(core_err("model.n"))?
            }
            ModelKind::Matrices => {
                let h0 = to_matrix(self.h0.as_ref(), "model.h0")?;
                let q = to_matrix(self.q.as_ref(), "model.q")?;
                match parity(self.eta_q.unwrap_or(1), "model.eta_q")? {
                    Parity::Even => QuantumModel::real(h0, q).map_err(core_err("model"))?,
                    Parity::Odd => QuantumModel::imaginary_coupling(h0, q).map_err(core_err("model"))?,
                }
            }
            _ => return invalid("model.kind", "this experiment needs a quantum model (catalog, random or matrices)"),
        };
        match self.hbar {
            Some(h) => model.with_hbar(h).map_err(core_err("model.hbar")),
            None => Ok(model),
        }
    }
}

fn parity(sign: i64, key: &str) -> Result<Parity, ConfigError> {
    Parity::from_sign(sign).map_err(core_err(key))
}

mod matrix {
    use super::ConfigError;
    use fluctuant_core::model::RealMatrix;

    pub fn to_matrix(rows: Option<&Vec<Vec<f64>>>, key: &str) -> Result<RealMatrix, ConfigError> {
        let rows = rows.ok_or_else(|| ConfigError::Invalid { key: key.into(), message: "required".into() })?;
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != n) {
            return super::invalid(key, "must be a non-empty square matrix given as rows");
        }
        Ok(RealMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Constant,
    LinearRamp,
    Sinusoid,
    PiecewiseLinear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolSpec {
    pub shape: ShapeKind,
    pub tau: f64,
    #[serde(default = "default_eta")]
    pub eta_q: i64,
    pub grid_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub from: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub to: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knots: Option<Vec<(f64, f64)>>,
}

fn default_eta() -> i64 {
    1
}

impl ProtocolSpec {
    pub fn build(&self) -> Result<ForceProtocol, ConfigError> {
        let shape = match self.shape {
            ShapeKind::Constant => ProtocolShape::Constant(need(self.value, "protocol.value")?),
            ShapeKind::LinearRamp => {
                ProtocolShape::LinearRamp { from: need(self.from, "protocol.from")?, to: need(self.to, "protocol.to")? }
            }
            ShapeKind::Sinusoid => ProtocolShape::Sinusoid {
                amplitude: need(self.amplitude, "protocol.amplitude")?,
                omega: need(self.omega, "protocol.omega")?,
                phase: self.phase.unwrap_or(0.0),
            },
            ShapeKind::PiecewiseLinear => ProtocolShape::PiecewiseLinear(self.knots.clone().ok_or_else(|| {
                ConfigError::Invalid { key: "protocol.knots".into(), message: "required for piecewise_linear".into() }
            })?),
        };
        let parity = parity(self.eta_q, "protocol.eta_q")?;
        ForceProtocol::new(shape, self.tau, parity, self.grid_points).map_err(core_err("protocol"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrownianSpec {
    pub gamma: f64,
    pub kbt: f64,
    pub force: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub n_particles: usize,
    /// Enables the stationary-distribution check in a harmonic trap.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trap_stiffness: Option<f64>,
}

impl BrownianSpec {
    pub fn config(&self, force: f64, seed: u64) -> Result<BrownianConfig, ConfigError> {
        let c = BrownianConfig::new(self.gamma, self.kbt, force, self.dt, self.n_steps, self.n_particles, seed);
        c.validate().map_err(core_err("brownian"))?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableSpec {
    Position,
    Momentum,
}

impl From<ObservableSpec> for Observable {
    fn from(o: ObservableSpec) -> Self {
        match o {
            ObservableSpec::Position => Observable::Position,
            ObservableSpec::Momentum => Observable::Momentum,
        }
    }
}

/// Check thresholds; every field has a default and the effective values
/// are echoed in each summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub sigmas: f64,
    pub crooks_slope_rel: f64,
    pub crooks_delta_f_abs: f64,
    pub classical_microrev: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub quantum_jarzynski: f64,
    pub tpm_marginal: f64,
    pub unitarity: f64,
    pub quantum_crooks: f64,
    pub quantum_microrev: f64,
    pub operator_gap_commuting: f64,
    pub operator_gap_witness: f64,
    pub fdt_rel: f64,
    pub classical_limit_rel: f64,
    pub classical_limit_beta: f64,
    pub classical_limit_cutoff: f64,
    pub scheme_rel: f64,
    pub ks_level: f64,
    /// When set, `|<W> − ΔF| ≤ quasi_static_rel · |ΔF|` is checked too.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quasi_static_rel: Option<f64>,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            sigmas: 3.0,
            crooks_slope_rel: 0.05,
            crooks_delta_f_abs: 0.05,
            classical_microrev: 1e-6,
            ratio_min: 3.5,
            ratio_max: 4.5,
            quantum_jarzynski: 1e-9,
            tpm_marginal: 1e-10,
            unitarity: 1e-10,
            quantum_crooks: 1e-8,
            quantum_microrev: 1e-8,
            operator_gap_commuting: 1e-10,
            operator_gap_witness: 1e-3,
            fdt_rel: 1e-9,
            classical_limit_rel: 0.02,
            classical_limit_beta: 0.01,
            classical_limit_cutoff: 0.1,
            scheme_rel: 0.05,
            ks_level: 0.01,
            quasi_static_rel: None,
        }
    }
}

/// A single run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub protocol: Option<ProtocolSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// Additional inverse temperatures for the quantum identity checks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub betas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_trajectories: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slices: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Evaluation times for microreversibility checks; defaults to five
    /// interior grid times.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
    /// Initial phase points `[q, p]` for the classical microreversibility check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_points: Option<Vec<[f64; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observable: Option<ObservableSpec>,
    /// Amplitude `a` of the test function `u_t = a sin(π t / τ)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_amplitude: Option<f64>,
    /// Histogram bin count for the Crooks regression; Freedman–Diaconis when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bins: Option<usize>,
    /// Observable `B` for linear response, as real rows; defaults to `Q`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b_matrix: Option<Vec<Vec<f64>>>,
    /// Response sampling: `[t_max, points]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_grid: Option<(f64, usize)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub brownian: Option<BrownianSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for key in self.experiment.required_keys() {
            let present = match *key {
                "model" => self.model.is_some(),
                "protocol" => self.protocol.is_some(),
                "beta" => self.beta.is_some(),
                "n_trajectories" => self.n_trajectories.is_some(),
                "slices" => self.slices.is_some(),
                "brownian" => self.brownian.is_some(),
                _ => true,
            };
            if !present {
                return invalid(key, format!("required by experiment {}", self.experiment.name()));
            }
        }
        if let Some(beta) = self.beta {
            positive("beta", beta)?;
        }
        for (i, beta) in self.betas.iter().flatten().enumerate() {
            positive(&format!("betas[{i}]"), *beta)?;
        }
        if matches!(self.n_trajectories, Some(n) if n < 2) {
            return invalid("n_trajectories", "must be at least 2");
        }
        if self.slices == Some(0) {
            return invalid("slices", "must be at least 1");
        }
        if self.bins == Some(0) {
            return invalid("bins", "must be at least 1");
        }
        for (i, eps) in self.epsilons.iter().flatten().enumerate() {
            if !eps.is_finite() {
                return invalid(&format!("epsilons[{i}]"), "must be finite");
            }
        }
        if let Some((t_max, points)) = self.time_grid {
            if !(t_max.is_finite() && t_max >= 0.0) || points == 0 {
                return invalid("time_grid", "needs t_max >= 0 and at least one point");
            }
        }
        let protocol = self.protocol.as_ref().map(ProtocolSpec::build).transpose()?;
        if let Some(model) = &self.model {
            match self.experiment {
                Experiment::ClassicalJarzynski
                | Experiment::ClassicalCrooks
                | Experiment::ClassicalMicrorev
                | Experiment::GeneralizedJarzynski => {
                    model.classical()?;
                }
                Experiment::BrownianEinstein => {}
                _ => {
                    let m = model.quantum()?;
                    if let Some(rows) = &self.b_matrix {
                        let b = self.observable_matrix(rows)?;
                        if b.nrows() != m.dimension() {
                            return invalid("b_matrix", "dimension does not match the model");
                        }
                    }
                    if let Some(p) = &protocol {
                        if p.parity() != m.parity() && self.experiment != Experiment::LinearResponseFirstorder {
                            return invalid("protocol.eta_q", "must equal the parity of the model coupling");
                        }
                    }
                }
            }
        }
        if let Some(times) = &self.times {
            let tau = protocol.as_ref().map(|p| p.tau()).unwrap_or(f64::INFINITY);
            if let Some(i) = times.iter().position(|t| !(0.0..=tau).contains(t)) {
                return invalid(&format!("times[{i}]"), format!("must lie in [0, {tau}]"));
            }
        }
        if let Some(b) = &self.brownian {
            b.config(b.force, self.seed)?;
            if let Some(k) = b.trap_stiffness {
                positive("brownian.trap_stiffness", k)?;
                if k * b.dt / b.gamma >= 1.0 {
                    return invalid("brownian.dt", "trap relaxation needs dt < gamma / trap_stiffness");
                }
            }
            if self.experiment == Experiment::BrownianEinstein && b.force == 0.0 {
                return invalid("brownian.force", "the mobility estimate needs a nonzero force");
            }
        }
        Ok(())
    }

    pub fn observable_matrix(&self, rows: &[Vec<f64>]) -> Result<CMatrix, ConfigError> {
        let b = complexify(&to_matrix(Some(&rows.to_vec()), "b_matrix")?);
        if (0..b.nrows()).any(|i| (0..b.ncols()).any(|j| (b[(i, j)] - b[(j, i)]).norm() > 1e-12)) {
            return invalid("b_matrix", "must be symmetric");
        }
        Ok(b)
    }
}

fn positive(key: &str, value: f64) -> Result<(), ConfigError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        invalid(key, format!("must be positive and finite, got {value}"))
    }
}
