//! One driver per experiment. Each returns its checks, a JSON block of
//! results and the CSV tables to write.

use fluctuant_core::{
    brownian::{einstein_check, estimate_diffusion, estimate_mobility, simulate_overdamped},
    classical::{
        check_microreversibility, generalized_jarzynski_check, jarzynski_estimate, jensen_check, work_ensemble,
    },
    linear_response::{classical_limit_ratios, fdt_check, linear_response_prediction, response_and_correlation},
    quantum::{
        check_quantum_microreversibility, operator_work_counterexample, propagator, quantum_crooks_check,
        quantum_jarzynski, tpm_distribution, WORK_MERGE_TOL,
    },
    rng::derive_seed,
    spectral::{spectral_decompose, spectral_norm, unitarity_defect, DEFAULT_DEGENERACY_TOL},
    stats::{crooks_regression, crossing_point, ks_p_value, ks_statistic, mirrored_pair, normal_cdf},
    CMatrix, ClassicalModel, Direction, Error, ForceProtocol, Observable, PhasePoint, ProtocolShape, QuantumModel,
    WorkEnsemble,
};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{Experiment, RunConfig, Tolerances};

const SALT_BACKWARD: u64 = 0x6261636b;
const SALT_FORCED: u64 = 0x666f7263;
const SALT_FREE: u64 = 0x66726565;
const SALT_TRAP: u64 = 0x74726170;

/// One pass/fail verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    /// Either a number or a `[min, max]` range.
    pub threshold: Value,
    /// How `value` is compared with `threshold`: `<`, `<=`, `>`, `>=` or `in`.
    pub relation: &'static str,
    pub pass: bool,
}

impl Check {
    fn below(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold: json!(threshold), relation: "<", pass: value < threshold }
    }

    fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold: json!(threshold), relation: "<=", pass: value <= threshold }
    }

    fn above(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold: json!(threshold), relation: ">", pass: value > threshold }
    }

    fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold: json!(threshold), relation: ">=", pass: value >= threshold }
    }

    fn within(name: impl Into<String>, value: f64, min: f64, max: f64) -> Self {
        Self {
            name: name.into(),
            value,
            threshold: json!([min, max]),
            relation: "in",
            pass: (min..=max).contains(&value),
        }
    }

    fn failed(name: impl Into<String>, relation: &'static str) -> Self {
        Self { name: name.into(), value: f64::NAN, threshold: Value::Null, relation, pass: false }
    }
}

/// A CSV table; non-finite cells are written empty.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub file: String,
    pub headers: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    fn new(file: impl Into<String>, headers: &[&'static str]) -> Self {
        Self { file: file.into(), headers: headers.to_vec(), rows: Vec::new() }
    }

    fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }
}

#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub results: Map<String, Value>,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
}

impl Outcome {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    fn set(&mut self, key: &str, value: impl Serialize) {
        self.results.insert(key.to_string(), serde_json::to_value(value).expect("serializable result"));
    }
}

pub fn run(config: &RunConfig) -> Result<Outcome, Error> {
    match config.experiment {
        Experiment::ClassicalJarzynski => classical_jarzynski(config),
        Experiment::ClassicalCrooks => classical_crooks(config),
        Experiment::ClassicalMicrorev => classical_microrev(config),
        Experiment::GeneralizedJarzynski => generalized_jarzynski(config),
        Experiment::QuantumTpm => quantum_tpm(config),
        Experiment::QuantumCrooks => quantum_crooks(config),
        Experiment::QuantumMicrorev => quantum_microrev(config),
        Experiment::OperatorWorkGap => operator_work_gap(config),
        Experiment::LinearResponseFdt => linear_response_fdt(config),
        Experiment::LinearResponseFirstorder => linear_response_firstorder(config),
        Experiment::BrownianEinstein => brownian_einstein(config),
    }
}

// Accessors for keys that `RunConfig::validate` guarantees.

fn classical_model(c: &RunConfig) -> ClassicalModel {
    c.model.as_ref().expect("validated model").classical().expect("validated classical model")
}

fn quantum_model(c: &RunConfig) -> QuantumModel {
    c.model.as_ref().expect("validated model").quantum().expect("validated quantum model")
}

fn protocol(c: &RunConfig) -> ForceProtocol {
    c.protocol.as_ref().expect("validated protocol").build().expect("validated protocol")
}

fn beta(c: &RunConfig) -> f64 {
    c.beta.expect("validated beta")
}

/// `beta` followed by any extra `betas`, without repeats.
fn betas(c: &RunConfig) -> Vec<f64> {
    let mut out = vec![beta(c)];
    for b in c.betas.iter().flatten() {
        if !out.contains(b) {
            out.push(*b);
        }
    }
    out
}

fn slices(c: &RunConfig) -> usize {
    c.slices.expect("validated slices")
}

fn n_trajectories(c: &RunConfig) -> usize {
    c.n_trajectories.expect("validated n_trajectories")
}

fn observable_b(c: &RunConfig, model: &QuantumModel) -> CMatrix {
    match &c.b_matrix {
        Some(rows) => c.observable_matrix(rows).expect("validated b_matrix"),
        None => model.coupling().clone(),
    }
}

/// Interior evaluation times as fractions of `τ`.
const DEFAULT_TIME_FRACTIONS: [f64; 5] = [0.125, 0.25, 0.5, 0.75, 0.875];

fn eval_times(c: &RunConfig, tau: f64) -> Vec<f64> {
    c.times.clone().unwrap_or_else(|| DEFAULT_TIME_FRACTIONS.iter().map(|f| f * tau).collect())
}

fn endpoints(p: &ForceProtocol) -> (f64, f64) {
    (p.value_at(0.0), p.value_at(p.tau()))
}

fn jensen(out: &mut Outcome, label: &str, ensemble: &WorkEnsemble, delta_f: f64, tol: &Tolerances) {
    let report = jensen_check(ensemble, delta_f);
    out.set(
        &format!("jensen_{label}"),
        json!({"mean_work": report.mean_work, "mean_dissipated": report.mean_dissipated, "se": report.se}),
    );
    out.checks.push(Check::at_least(format!("jensen_{label}"), report.mean_work, delta_f - tol.sigmas * report.se));
}

fn classical_jarzynski(c: &RunConfig) -> Result<Outcome, Error> {
    let (model, protocol, beta, tol) = (classical_model(c), protocol(c), beta(c), &c.tolerances);
    let (from, to) = endpoints(&protocol);
    let delta_f = model.free_energy_difference(from, to, beta)?;
    let (ensemble, records) = work_ensemble(&model, &protocol, beta, n_trajectories(c), c.seed, Direction::Forward)?;
    let estimate = jarzynski_estimate(&ensemble)?;
    let target = (-beta * delta_f).exp();
    let form_gap = records.iter().map(|r| (r.work_energy - r.work_integral).abs()).fold(0.0, f64::max);

    let mut out = Outcome::default();
    out.set("delta_f", delta_f);
    out.set("exp_average", estimate.value);
    out.set("exp_average_se", estimate.se);
    out.set("target", target);
    out.set("n_trajectories", ensemble.n_trajectories());
    out.set("max_work_form_gap", form_gap);
    out.checks.push(Check::at_most("jarzynski", (estimate.value - target).abs(), tol.sigmas * estimate.se));
    jensen(&mut out, "forward", &ensemble, delta_f, tol);
    if let Some(rel) = tol.quasi_static_rel {
        let mean = fluctuant_core::stats::mean(&ensemble.works);
        out.checks.push(Check::at_most("quasi_static", (mean - delta_f).abs(), rel * delta_f.abs()));
    }

    let mut table =
        Table::new("trajectories.csv", &["index", "q0", "p0", "q_tau", "p_tau", "work_energy", "work_integral"]);
    for (i, r) in records.iter().enumerate() {
        table.push(vec![i as f64, r.z0.q, r.z0.p, r.z_tau.q, r.z_tau.p, r.work_energy, r.work_integral]);
    }
    out.tables.push(table);
    Ok(out)
}

fn classical_crooks(c: &RunConfig) -> Result<Outcome, Error> {
    let (model, protocol, beta, tol) = (classical_model(c), protocol(c), beta(c), &c.tolerances);
    let n = n_trajectories(c);
    let (from, to) = endpoints(&protocol);
    let delta_f = model.free_energy_difference(from, to, beta)?;
    let (fwd, _) = work_ensemble(&model, &protocol, beta, n, c.seed, Direction::Forward)?;
    let backward_seed = derive_seed(c.seed, SALT_BACKWARD);
    let (bwd, _) = work_ensemble(&model, &protocol.backward(), beta, n, backward_seed, Direction::Backward)?;

    let mut out = Outcome::default();
    out.set("delta_f", delta_f);
    jensen(&mut out, "forward", &fwd, delta_f, tol);
    jensen(&mut out, "backward", &bwd, -delta_f, tol);

    let (hf, hb) = mirrored_pair(&fwd.works, &bwd.works, c.bins)?;
    match crooks_regression(&hf, &hb) {
        Ok(fit) => {
            out.set(
                "fit",
                json!({
                    "slope": fit.slope, "slope_se": fit.slope_se,
                    "intercept": fit.intercept, "intercept_se": fit.intercept_se,
                    "delta_f": fit.delta_f, "delta_f_se": fit.delta_f_se,
                    "bins_used": fit.points.len(), "chi_square": fit.chi_square,
                }),
            );
            out.checks.push(Check::at_most("crooks_slope", (fit.slope - beta).abs(), tol.crooks_slope_rel * beta));
            out.checks.push(Check::at_most("crooks_delta_f", (fit.delta_f - delta_f).abs(), tol.crooks_delta_f_abs));
        }
        Err(e @ Error::InsufficientOverlap { .. }) => {
            out.set("fit_error", e.to_string());
            out.checks.push(Check::failed("crooks_overlap", "overlap"));
        }
        Err(e) => return Err(e),
    }
    out.set("crossing_point", crossing_point(&hf, &hb));

    let mut hist =
        Table::new("histogram.csv", &["bin_center", "density_forward", "density_backward_mirrored", "log_ratio"]);
    let last = hb.bin_count() - 1;
    for (i, w) in hf.centers().into_iter().enumerate() {
        let (pf, pb) = (hf.densities[i], hb.densities[last - i]);
        let ratio = if pf > 0.0 && pb > 0.0 { (pf / pb).ln() } else { f64::NAN };
        hist.push(vec![w, pf, pb, ratio]);
    }
    out.tables.push(hist);
    let mut works = Table::new("works.csv", &["index", "work_forward", "work_backward"]);
    for (i, (a, b)) in fwd.works.iter().zip(&bwd.works).enumerate() {
        works.push(vec![i as f64, *a, *b]);
    }
    out.tables.push(works);
    Ok(out)
}

const DEFAULT_INITIAL_POINTS: [[f64; 2]; 3] = [[1.0, 0.0], [0.0, 1.0], [-0.5, 0.7]];

/// Deviations at `steps` below this are treated as exact and excluded from
/// the convergence ratio.
const RATIO_FLOOR: f64 = 1e-13;

fn classical_microrev(c: &RunConfig) -> Result<Outcome, Error> {
    let (model, protocol, tol) = (classical_model(c), protocol(c), &c.tolerances);
    let steps = protocol.grid_points();
    let coarse = (steps / 2).max(1);
    let points = c.initial_points.clone().unwrap_or_else(|| DEFAULT_INITIAL_POINTS.to_vec());
    let times = eval_times(c, protocol.tau());

    let mut out = Outcome::default();
    let mut table = Table::new("microrev.csv", &["t", "q0", "p0", "deviation", "deviation_coarse", "ratio"]);
    let (mut worst, mut ratios) = (0.0f64, Vec::new());
    for &[q, p] in &points {
        let z0 = PhasePoint::new(q, p);
        for &t in &times {
            let fine = check_microreversibility(&model, &protocol, z0, t, steps)?;
            let rough = check_microreversibility(&model, &protocol, z0, t, coarse)?;
            let ratio = if fine > RATIO_FLOOR { rough / fine } else { f64::NAN };
            worst = worst.max(fine);
            if ratio.is_finite() {
                ratios.push(ratio);
            }
            table.push(vec![t, q, p, fine, rough, ratio]);
        }
    }
    out.set("steps", steps);
    out.set("coarse_steps", coarse);
    out.set("max_deviation", worst);
    out.checks.push(Check::below("microreversibility", worst, tol.classical_microrev));
    ratio_checks(&mut out, &ratios, tol);
    out.tables.push(table);
    Ok(out)
}

/// One check on the ratio farthest from the middle of the accepted band.
fn ratio_checks(out: &mut Outcome, ratios: &[f64], tol: &Tolerances) {
    let centre = 0.5 * (tol.ratio_min + tol.ratio_max);
    out.set("convergence_ratios", ratios);
    match ratios.iter().copied().max_by(|a, b| (a - centre).abs().total_cmp(&(b - centre).abs())) {
        Some(r) => out.checks.push(Check::within("convergence_ratio", r, tol.ratio_min, tol.ratio_max)),
        None => out.set("convergence_ratio_note", "all deviations at round-off; no ratio to check"),
    }
}

fn generalized_jarzynski(c: &RunConfig) -> Result<Outcome, Error> {
    let (model, protocol, beta, tol) = (classical_model(c), protocol(c), beta(c), &c.tolerances);
    let amplitude = c.u_amplitude.unwrap_or(0.0);
    let observable: Observable = c.observable.map(Into::into).unwrap_or(Observable::Position);
    let tau = protocol.tau();
    let grid = protocol.grid_times();
    let u: Vec<f64> = grid.iter().map(|t| amplitude * (std::f64::consts::PI * t / tau).sin()).collect();
    let report = generalized_jarzynski_check(&model, &protocol, &u, observable, beta, n_trajectories(c), c.seed)?;

    let mut out = Outcome::default();
    out.set("lhs", report.lhs);
    out.set("lhs_se", report.lhs_se);
    out.set("rhs", report.rhs);
    out.set("rhs_se", report.rhs_se);
    out.set("delta_f", report.delta_f);
    out.checks.push(Check::at_most("generalized_relation", report.gap(), tol.sigmas * report.combined_se()));
    let ensemble = WorkEnsemble::new(report.forward_works.clone(), beta, Direction::Forward, c.seed)?;
    jensen(&mut out, "forward", &ensemble, report.delta_f, tol);

    let eta = observable.parity().sign();
    let steps = grid.len() - 1;
    let mut table = Table::new("test_function.csv", &["t", "u", "u_backward"]);
    for (k, t) in grid.iter().enumerate() {
        table.push(vec![*t, u[k], eta * u[steps - k]]);
    }
    out.tables.push(table);
    Ok(out)
}

fn quantum_tpm(c: &RunConfig) -> Result<Outcome, Error> {
    let (model, protocol, slices, tol) = (quantum_model(c), protocol(c), slices(c), &c.tolerances);
    let u = propagator(&model, &protocol, slices)?;
    let defect = unitarity_defect(&u);
    let initial = spectral_decompose(&model.hamiltonian(protocol.value_at(0.0)), DEFAULT_DEGENERACY_TOL)?;
    let ranks: Vec<usize> = initial.ranks().collect();

    let mut out = Outcome::default();
    let mut table = Table::new("tpm.csv", &["beta", "n", "m", "E_n_initial", "E_m_final", "w", "p"]);
    let (mut worst_jarzynski, mut worst_marginal, mut per_beta) = (0.0f64, 0.0f64, Vec::new());
    for beta in betas(c) {
        let d = tpm_distribution(&model, &protocol, beta, slices, DEFAULT_DEGENERACY_TOL)?;
        let average = quantum_jarzynski(&d);
        let ratio = d.partition_ratio();
        let mut marginal = vec![0.0; ranks.len()];
        for e in &d.entries {
            marginal[e.n] += e.probability;
            table.push(vec![beta, e.n as f64, e.m as f64, e.e_initial, e.e_final, e.work, e.probability]);
        }
        let marginal_gap = initial
            .eigenvalues()
            .iter()
            .zip(&ranks)
            .zip(&marginal)
            .map(|((e, r), p)| (p - *r as f64 * (-beta * e - d.log_z_initial).exp()).abs())
            .fold(0.0, f64::max);
        worst_jarzynski = worst_jarzynski.max((average - ratio).abs());
        worst_marginal = worst_marginal.max(marginal_gap);
        per_beta.push(json!({
            "beta": beta, "exp_average": average, "partition_ratio": ratio,
            "delta_f": d.delta_f(), "marginal_gap": marginal_gap,
        }));
    }
    out.set("per_beta", per_beta);
    out.set("unitarity_defect", defect);
    out.checks.push(Check::below("quantum_jarzynski", worst_jarzynski, tol.quantum_jarzynski));
    out.checks.push(Check::below("tpm_marginal", worst_marginal, tol.tpm_marginal));
    out.checks.push(Check::below("unitarity", defect, tol.unitarity));
    out.tables.push(table);
    Ok(out)
}

fn quantum_crooks(c: &RunConfig) -> Result<Outcome, Error> {
    let (model, protocol, slices, tol) = (quantum_model(c), protocol(c), slices(c), &c.tolerances);
    let backward = protocol.backward();
    let mut out = Outcome::default();
    let mut table =
        Table::new("work_distribution.csv", &["beta", "w", "p_forward", "p_backward_mirrored", "crooks_rhs"]);
    let (mut worst, mut per_beta) = (0.0f64, Vec::new());
    for beta in betas(c) {
        let fwd = tpm_distribution(&model, &protocol, beta, slices, DEFAULT_DEGENERACY_TOL)?;
        let bwd = tpm_distribution(&model, &backward, beta, slices, DEFAULT_DEGENERACY_TOL)?;
        let delta_f = fwd.delta_f();
        let deviation = quantum_crooks_check(&fwd, &bwd, delta_f)?;
        let pb = bwd.work_distribution(WORK_MERGE_TOL);
        for (w, p) in fwd.work_distribution(WORK_MERGE_TOL) {
            let mirrored = pb.iter().find(|(x, _)| (x + w).abs() <= WORK_MERGE_TOL).map_or(f64::NAN, |(_, q)| *q);
            table.push(vec![beta, w, p, mirrored, (beta * (w - delta_f)).exp() * mirrored]);
        }
        worst = worst.max(deviation);
        per_beta.push(json!({"beta": beta, "delta_f": delta_f, "max_deviation": deviation}));
    }
    out.set("per_beta", per_beta);
    out.set("max_deviation", worst);
    out.checks.push(Check::below("quantum_crooks", worst, tol.quantum_crooks));
    out.tables.push(table);
    Ok(out)
}

fn quantum_microrev(c: &RunConfig) -> Result<Outcome, Error> {
    let (model, protocol, slices, tol) = (quantum_model(c), protocol(c), slices(c), &c.tolerances);
    let coarse = (slices / 2).max(1);
    let mut out = Outcome::default();
    let mut table = Table::new("microrev.csv", &["t", "deviation", "deviation_coarse", "ratio"]);
    let (mut worst, mut ratios) = (0.0f64, Vec::new());
    for t in eval_times(c, protocol.tau()) {
        let fine = check_quantum_microreversibility(&model, &protocol, t, slices)?;
        let rough = check_quantum_microreversibility(&model, &protocol, t, coarse)?;
        let ratio = if fine > RATIO_FLOOR { rough / fine } else { f64::NAN };
        worst = worst.max(fine);
        if ratio.is_finite() {
            ratios.push(ratio);
        }
        table.push(vec![t, fine, rough, ratio]);
    }
    out.set("slices", slices);
    out.set("coarse_slices", coarse);
    out.set("max_deviation", worst);
    out.checks.push(Check::below("microreversibility", worst, tol.quantum_microrev));
    ratio_checks(&mut out, &ratios, tol);
    out.tables.push(table);
    Ok(out)
}

fn operator_work_gap(c: &RunConfig) -> Result<Outcome, Error> {
    let (model, protocol, slices, tol) = (quantum_model(c), protocol(c), slices(c), &c.tolerances);
    let commutator = model.h0() * model.coupling() - model.coupling() * model.h0();
    let commuting = spectral_norm(&commutator) < 1e-12 || matches!(protocol.shape(), ProtocolShape::Constant(_));
    let mut out = Outcome::default();
    out.set("commuting", commuting);
    let mut per_beta = Vec::new();
    for beta in betas(c) {
        let report = operator_work_counterexample(&model, &protocol, beta, slices)?;
        per_beta.push(json!({
            "beta": beta, "operator_average": report.operator_average,
            "free_energy_factor": report.free_energy_factor, "gap": report.gap,
        }));
        out.checks.push(if commuting {
            Check::below(format!("operator_gap_beta_{beta}"), report.gap, tol.operator_gap_commuting)
        } else {
            Check::above(format!("operator_gap_beta_{beta}"), report.gap, tol.operator_gap_witness)
        });
    }
    out.set("per_beta", per_beta);
    Ok(out)
}

const DEFAULT_TIME_GRID: (f64, usize) = (10.0, 201);

fn linear_response_fdt(c: &RunConfig) -> Result<Outcome, Error> {
    let (model, tol) = (quantum_model(c), &c.tolerances);
    let b = observable_b(c, &model);
    let hbar = model.hbar();
    let (t_max, points) = c.time_grid.unwrap_or(DEFAULT_TIME_GRID);
    let grid: Vec<f64> =
        (0..points).map(|k| if points > 1 { t_max * k as f64 / (points - 1) as f64 } else { 0.0 }).collect();

    let mut out = Outcome::default();
    let mut response = Table::new("response.csv", &["beta", "t", "phi", "psi"]);
    let mut lines = Table::new(
        "bohr_lines.csv",
        &["beta", "omega", "psi_re", "psi_im", "predicted_re", "predicted_im", "relative_deviation"],
    );
    let (mut worst, mut per_beta) = (0.0f64, Vec::new());
    for beta in betas(c) {
        let data = response_and_correlation(&model, &b, beta, &grid)?;
        let report = fdt_check(&data, beta, hbar);
        for ((t, phi), psi) in data.time_grid.iter().zip(&data.phi).zip(&data.psi) {
            response.push(vec![beta, *t, *phi, *psi]);
        }
        for l in &report.lines {
            lines.push(vec![
                beta,
                l.omega,
                l.psi_amplitude.re,
                l.psi_amplitude.im,
                l.predicted.re,
                l.predicted.im,
                l.relative_deviation,
            ]);
        }
        worst = worst.max(report.max_relative_deviation);
        per_beta.push(
            json!({"beta": beta, "lines": report.lines.len(), "max_relative_deviation": report.max_relative_deviation}),
        );
    }
    out.set("per_beta", per_beta);
    out.checks.push(Check::below("fdt", worst, tol.fdt_rel));

    let beta_cl = tol.classical_limit_beta;
    let data = response_and_correlation(&model, &b, beta_cl, &[])?;
    let ratios = classical_limit_ratios(&data, beta_cl, hbar, tol.classical_limit_cutoff);
    let gap = ratios.iter().map(|(_, r)| (r - 1.0).abs()).fold(0.0, f64::max);
    out.set("classical_limit", json!({"beta": beta_cl, "lines": ratios.len(), "max_gap": gap}));
    out.checks.push(Check::at_most("classical_limit", gap, tol.classical_limit_rel));
    out.tables.push(response);
    out.tables.push(lines);
    Ok(out)
}

const DEFAULT_EPSILONS: [f64; 3] = [1e-2, 5e-3, 2.5e-3];

fn linear_response_firstorder(c: &RunConfig) -> Result<Outcome, Error> {
    let (model, protocol, beta, slices, tol) = (quantum_model(c), protocol(c), beta(c), slices(c), &c.tolerances);
    let b = observable_b(c, &model);
    let epsilons = c.epsilons.clone().unwrap_or_else(|| DEFAULT_EPSILONS.to_vec());

    let mut out = Outcome::default();
    let mut gaps = Vec::new();
    for (i, eps) in epsilons.iter().enumerate() {
        let prediction = linear_response_prediction(&model, &b, &protocol.clone().scaled(*eps), beta, slices)?;
        let mut table = Table::new(format!("response_eps_{i}.csv"), &["t", "predicted", "exact", "gap"]);
        for ((t, p), e) in prediction.times.iter().zip(&prediction.predicted).zip(&prediction.exact) {
            table.push(vec![*t, *p, *e, (p - e).abs()]);
        }
        out.tables.push(table);
        gaps.push(prediction.max_gap);
    }
    out.set("epsilons", &epsilons);
    out.set("max_gaps", &gaps);
    // A second-order remainder shrinks as ε²; rescale each ratio to what a
    // halving of ε would give.
    for i in 1..gaps.len() {
        let scale = 4.0 * (epsilons[i] / epsilons[i - 1]).powi(2);
        let ratio = gaps[i - 1] / gaps[i] * scale;
        out.checks.push(Check::within(format!("scaling_ratio_{i}"), ratio, tol.ratio_min, tol.ratio_max));
    }
    Ok(out)
}

fn brownian_einstein(c: &RunConfig) -> Result<Outcome, Error> {
    let spec = c.brownian.as_ref().expect("validated brownian");
    let tol = &c.tolerances;
    let (gamma, kbt) = (spec.gamma, spec.kbt);
    let forced = spec.config(spec.force, derive_seed(c.seed, SALT_FORCED)).expect("validated brownian");
    let free = spec.config(0.0, derive_seed(c.seed, SALT_FREE)).expect("validated brownian");
    let forced_run = simulate_overdamped(&forced)?;
    let free_run = simulate_overdamped(&free)?;
    let mu = estimate_mobility(&forced_run, spec.force)?;
    let d = estimate_diffusion(&free_run)?;
    let einstein = einstein_check(mu, d, kbt);

    let mut out = Outcome::default();
    let (mu_scheme, d_scheme) = (1.0 / gamma, kbt / gamma);
    out.set("mobility", json!({"value": mu.value, "se": mu.se, "scheme": mu_scheme}));
    out.set("diffusion", json!({"value": d.value, "se": d.se, "scheme": d_scheme}));
    out.set("einstein", json!({"gap": einstein.gap, "combined_se": einstein.combined_se}));
    out.checks.push(Check::at_most("einstein", einstein.gap, tol.sigmas * einstein.combined_se));
    out.checks.push(Check::at_most("mobility_scheme", (mu.value / mu_scheme - 1.0).abs(), tol.scheme_rel));
    out.checks.push(Check::at_most("diffusion_scheme", (d.value / d_scheme - 1.0).abs(), tol.scheme_rel));

    if let Some(k) = spec.trap_stiffness {
        let relaxation = gamma / k;
        let steps = (10.0 * relaxation / spec.dt).ceil() as usize;
        let mut trap = spec.config(0.0, derive_seed(c.seed, SALT_TRAP)).expect("validated brownian");
        trap.n_steps = steps;
        trap.record_stride = 1.max(steps / 100);
        trap.trap_stiffness = Some(k);
        let run = simulate_overdamped(&trap)?;
        // Stationary variance of the discrete update x ← a x + σ ξ.
        let a = 1.0 - k * spec.dt / gamma;
        let sd = (2.0 * kbt * spec.dt / gamma / (1.0 - a * a)).sqrt();
        let stat = ks_statistic(&run.final_positions, |x| normal_cdf(x, 0.0, sd));
        let p = ks_p_value(stat, run.final_positions.len());
        out.set(
            "trap",
            json!({"stiffness": k, "steps": steps, "stationary_sd": sd, "ks_statistic": stat, "p_value": p}),
        );
        out.checks.push(Check::above("boltzmann_ks", p, tol.ks_level));
    }

    let mut table = Table::new("brownian.csv", &["t", "mean_displacement", "msd"]);
    for ((t, m), s) in forced_run.times.iter().zip(&forced_run.mean_displacement).zip(&free_run.msd) {
        table.push(vec![*t, *m, *s]);
    }
    out.tables.push(table);
    Ok(out)
}
