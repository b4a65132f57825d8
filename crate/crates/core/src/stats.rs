//! Histogram densities, bootstrap errors, Kolmogorov–Smirnov tests and the
//! Crooks regression between forward and backward work ensembles.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{domain, Error, Result};
use crate::rng;

pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 1000;

/// Minimum count per side for a bin to enter the Crooks fit.
pub const CROOKS_MIN_COUNT: u64 = 10;
const CROOKS_MIN_BINS: usize = 3;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Standard error of the sample mean.
pub fn standard_error(xs: &[f64]) -> f64 {
    (variance(xs) / xs.len() as f64).sqrt()
}

/// Bootstrap standard error of `statistic`, deterministic in `seed`.
pub fn bootstrap_se<F>(samples: &[f64], statistic: F, resamples: usize, seed: u64) -> Result<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    if samples.len() < 2 {
        return domain(format!("bootstrap needs at least 2 samples, got {}", samples.len()));
    }
    if resamples < 2 {
        return domain("bootstrap needs at least 2 resamples");
    }
    let n = samples.len();
    let replicates: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map_init(
            || vec![0.0; n],
            |buf, r| {
                let mut rng = rng::stream(seed, r as u64);
                for slot in buf.iter_mut() {
                    *slot = samples[rng.random_range(0..n)];
                }
                statistic(buf)
            },
        )
        .collect();
    Ok(variance(&replicates).sqrt())
}

/// How to choose histogram bins.
#[derive(Debug, Clone, PartialEq)]
pub enum BinRule {
    FreedmanDiaconis,
    Count(usize),
    /// Explicit, uniformly spaced edges shared between histograms.
    Edges(Vec<f64>),
}

/// Binned probability density of work values.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkHistogram {
    pub edges: Vec<f64>,
    pub densities: Vec<f64>,
    pub counts: Vec<u64>,
    /// Number of samples, including any that fell outside explicit edges.
    pub total: usize,
}

impl WorkHistogram {
    pub fn bin_width(&self) -> f64 {
        self.edges[1] - self.edges[0]
    }

    pub fn bin_count(&self) -> usize {
        self.counts.len()
    }

    pub fn centers(&self) -> Vec<f64> {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect()
    }

    /// Cumulative distribution at each edge, linear within bins.
    pub fn cdf_at_edges(&self) -> Vec<f64> {
        let h = self.bin_width();
        let mut acc = 0.0;
        let mut out = vec![0.0];
        for d in &self.densities {
            acc += d * h;
            out.push(acc);
        }
        out
    }
}

pub fn histogram(works: &[f64], rule: &BinRule) -> Result<WorkHistogram> {
    if works.is_empty() {
        return domain("histogram of an empty sample");
    }
    if works.iter().any(|w| !w.is_finite()) {
        return domain("histogram input contains non-finite values");
    }
    let edges = match rule {
        BinRule::Edges(edges) => {
            check_uniform_edges(edges)?;
            edges.clone()
        }
        BinRule::Count(bins) => {
            if *bins == 0 {
                return domain("bin count must be positive");
            }
            let (lo, hi) = span(works);
            uniform_edges(lo, hi, *bins)
        }
        BinRule::FreedmanDiaconis => {
            let (lo, hi) = span(works);
            let width = freedman_diaconis_width(works);
            let bins = if width > 0.0 { ((hi - lo) / width).ceil().max(1.0) as usize } else { 1 };
            uniform_edges(lo, hi, bins)
        }
    };
    Ok(fill(works, edges))
}

/// Histograms of two samples on one set of edges, symmetric about zero, so
/// that bin `i` and bin `len − 1 − i` are mirror images. The width follows
/// Freedman–Diaconis on the pooled sample of `a` and `−b` unless `bins` is
/// given.
pub fn mirrored_pair(a: &[f64], b: &[f64], bins: Option<usize>) -> Result<(WorkHistogram, WorkHistogram)> {
    if a.len() < 2 || b.len() < 2 {
        return domain("mirrored histograms need at least 2 samples per side");
    }
    let reach = a.iter().chain(b).fold(0.0f64, |acc, x| acc.max(x.abs()));
    let bins = match bins {
        Some(0) => return domain("bin count must be positive"),
        Some(n) => n,
        None => {
            let pooled: Vec<f64> = a.iter().copied().chain(b.iter().map(|x| -x)).collect();
            let width = freedman_diaconis_width(&pooled);
            if width > 0.0 {
                (2.0 * reach / width).ceil().max(1.0) as usize
            } else {
                1
            }
        }
    };
    let reach = if reach > 0.0 { reach } else { 0.5 };
    // Pad by half a bin so that extreme samples sit strictly inside.
    let half = reach * (1.0 + 0.5 / bins as f64);
    let edges = uniform_edges(-half, half, bins);
    let fwd = histogram(a, &BinRule::Edges(edges.clone()))?;
    let bwd = histogram(b, &BinRule::Edges(edges))?;
    Ok((fwd, bwd))
}

fn span(works: &[f64]) -> (f64, f64) {
    let lo = works.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = works.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    }
}

fn uniform_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let h = (hi - lo) / bins as f64;
    (0..=bins).map(|i| if i == bins { hi } else { lo + i as f64 * h }).collect()
}

fn check_uniform_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 {
        return domain("need at least two bin edges");
    }
    let h = edges[1] - edges[0];
    if h.is_nan() || h <= 0.0 || edges.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h) {
        return domain("bin edges must be increasing and uniformly spaced");
    }
    Ok(())
}

fn freedman_diaconis_width(xs: &[f64]) -> f64 {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    2.0 * iqr / (xs.len() as f64).cbrt()
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

fn fill(works: &[f64], edges: Vec<f64>) -> WorkHistogram {
    let bins = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[bins]);
    let h = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &w in works {
        if w < lo || w > hi {
            continue;
        }
        let i = (((w - lo) / h) as usize).min(bins - 1);
        counts[i] += 1;
    }
    let norm = works.len() as f64 * h;
    let densities = counts.iter().map(|&c| c as f64 / norm).collect();
    WorkHistogram { edges, densities, counts, total: works.len() }
}

/// Weighted least-squares fit of `ln(p_F(w) / p_B(−w)) = intercept + slope · w`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrooksFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    /// `−intercept / slope`, which estimates ΔF.
    pub delta_f: f64,
    pub delta_f_se: f64,
    /// Bins entering the fit: `(w, ln ratio, weight)`.
    pub points: Vec<(f64, f64, f64)>,
    /// Weighted residual sum of squares.
    pub chi_square: f64,
}

/// Fit the Crooks relation on mirrored histograms from [`mirrored_pair`].
///
/// `forward` histograms forward works; `backward` histograms backward works,
/// and is read through the mirror so bin `i` of the fit pairs `p_F(w_i)` with
/// `p_B(−w_i)`. Bins need at least [`CROOKS_MIN_COUNT`] counts on both sides;
/// each log-ratio is weighted by its Poisson variance `1/n_F + 1/n_B`.
pub fn crooks_regression(forward: &WorkHistogram, backward: &WorkHistogram) -> Result<CrooksFit> {
    if forward.edges != backward.edges {
        return domain("forward and backward histograms must share bin edges");
    }
    let edges = &forward.edges;
    let bins = forward.bin_count();
    let h = forward.bin_width();
    let symmetric = edges.iter().zip(edges.iter().rev()).all(|(a, b)| (a + b).abs() <= 1e-9 * h);
    if !symmetric {
        return domain("shared edges must be symmetric about zero for mirror pairing");
    }

    let mut points = Vec::new();
    for (i, center) in forward.centers().into_iter().enumerate() {
        let (nf, nb) = (forward.counts[i], backward.counts[bins - 1 - i]);
        if nf < CROOKS_MIN_COUNT || nb < CROOKS_MIN_COUNT {
            continue;
        }
        let y = forward.densities[i].ln() - backward.densities[bins - 1 - i].ln();
        let var = 1.0 / nf as f64 + 1.0 / nb as f64;
        points.push((center, y, 1.0 / var));
    }
    if points.len() < CROOKS_MIN_BINS {
        return Err(Error::InsufficientOverlap { admissible: points.len(), required: CROOKS_MIN_BINS });
    }
    let fit = weighted_line_fit(&points);
    Ok(fit)
}

fn weighted_line_fit(points: &[(f64, f64, f64)]) -> CrooksFit {
    let sw: f64 = points.iter().map(|p| p.2).sum();
    let swx: f64 = points.iter().map(|p| p.2 * p.0).sum();
    let swy: f64 = points.iter().map(|p| p.2 * p.1).sum();
    let swxx: f64 = points.iter().map(|p| p.2 * p.0 * p.0).sum();
    let swxy: f64 = points.iter().map(|p| p.2 * p.0 * p.1).sum();
    let det = sw * swxx - swx * swx;
    let slope = (sw * swxy - swx * swy) / det;
    let intercept = (swxx * swy - swx * swxy) / det;
    // Inverse-variance weights: covariance of (intercept, slope) is (XᵀWX)⁻¹.
    let var_slope = sw / det;
    let var_intercept = swxx / det;
    let cov = -swx / det;
    let delta_f = -intercept / slope;
    // Delta method on −a/b.
    let (da, db) = (-1.0 / slope, intercept / (slope * slope));
    let var_df = da * da * var_intercept + db * db * var_slope + 2.0 * da * db * cov;
    let chi_square = points.iter().map(|&(x, y, w)| w * (y - intercept - slope * x).powi(2)).sum();
    CrooksFit {
        slope,
        intercept,
        slope_se: var_slope.sqrt(),
        intercept_se: var_intercept.sqrt(),
        delta_f,
        delta_f_se: var_df.max(0.0).sqrt(),
        points: points.to_vec(),
        chi_square,
    }
}

/// Bin centre where the forward density and the mirrored backward density
/// are closest in log scale, among bins populated on both sides.
pub fn crossing_point(forward: &WorkHistogram, backward: &WorkHistogram) -> Option<f64> {
    let bins = forward.bin_count();
    forward
        .centers()
        .into_iter()
        .enumerate()
        .filter(|(i, _)| forward.counts[*i] > 0 && backward.counts[bins - 1 - *i] > 0)
        .map(|(i, w)| {
            let gap = (forward.densities[i].ln() - backward.densities[bins - 1 - i].ln()).abs();
            (gap, w)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, w)| w)
}

/// One-sample Kolmogorov–Smirnov statistic against a continuous CDF.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of the KS statistic `d` for `n` samples, using the
/// Stephens small-sample correction of the argument.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

pub fn normal_cdf(x: f64, mean: f64, sd: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2))
}
