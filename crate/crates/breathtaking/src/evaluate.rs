//! Performance metrics and experiment designs: rate error vs observation
//! period, detector statistic summaries, node-subset ablation, and the
//! circular-statistics view of per-link phases.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;
use thiserror::Error;

use crate::detect::DetectError;
use crate::estimate::{estimate_window, EstimateError};
use crate::model::{
    hz_to_bpm, wrap_angle, BreathingEstimate, EstimatorConfig, Hypothesis, LinkId, LinkTrace,
    NetworkWindow,
};
use crate::preprocess::{segment, PreprocessError, SegmentConfig};
use crate::simulate::GroundTruth;

/// An estimate farther than this from truth counts as invalid.
pub const INVALID_THRESHOLD_BPM: f64 = 5.0;

#[derive(Debug, Error)]
pub enum EvaluateError {
    #[error("no data to evaluate")]
    Empty,
    #[error("dataset spans {available:.1} s, shorter than the requested {requested:.1} s window")]
    DatasetTooShort { requested: f64, available: f64 },
    #[error("node subsets need at least 2 nodes, got {0}")]
    SubsetTooSmall(usize),
    #[error("subset size {size} exceeds the {available} nodes present in the data")]
    SubsetTooLarge { size: usize, available: usize },
    #[error("only {got} links above the amplitude quantile, need at least {need}")]
    TooFewHighAmplitudeLinks { got: usize, need: usize },
    #[error("quantile must lie in [0, 1), got {0}")]
    BadQuantile(f64),
    #[error("ground truth carries no breathing rate")]
    MissingRate,
    #[error(transparent)]
    Estimate(#[from] EstimateError),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Detect(#[from] DetectError),
}

/// Rate-estimation error summary over one batch of realizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateMetrics {
    /// RMSE over valid estimates, absent when none are valid.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse_bpm: Option<f64>,
    /// Mean signed error over valid estimates.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias_bpm: Option<f64>,
    /// Fraction of estimates more than 5 bpm from truth.
    pub invalid_fraction: f64,
    pub realization_count: usize,
}

/// Score `(estimate_bpm, truth_bpm)` pairs.
pub fn rate_metrics(pairs: &[(f64, f64)]) -> Result<RateMetrics, EvaluateError> {
    if pairs.is_empty() {
        return Err(EvaluateError::Empty);
    }
    let errors: Vec<f64> = pairs.iter().map(|(est, truth)| est - truth).collect();
    let valid: Vec<f64> = errors
        .iter()
        .cloned()
        .filter(|e| e.abs() <= INVALID_THRESHOLD_BPM)
        .collect();
    let invalid_fraction = 1.0 - valid.len() as f64 / errors.len() as f64;
    if valid.is_empty() {
        return Ok(RateMetrics {
            rmse_bpm: None,
            bias_bpm: None,
            invalid_fraction: 1.0,
            realization_count: pairs.len(),
        });
    }
    let k = valid.len() as f64;
    let rmse = (valid.iter().map(|e| e * e).sum::<f64>() / k).sqrt();
    let bias = valid.iter().sum::<f64>() / k;
    Ok(RateMetrics {
        rmse_bpm: Some(rmse),
        bias_bpm: Some(bias),
        invalid_fraction,
        realization_count: pairs.len(),
    })
}

/// Empirical false-alarm and missed-detection rates from
/// `(decision, truth)` pairs. Either rate is absent when its truth class
/// never occurs.
pub fn detector_metrics(
    outcomes: &[(Hypothesis, Hypothesis)],
) -> Result<(Option<f64>, Option<f64>), EvaluateError> {
    if outcomes.is_empty() {
        return Err(EvaluateError::Empty);
    }
    let mut h0 = (0usize, 0usize); // (count, false alarms)
    let mut h1 = (0usize, 0usize); // (count, misses)
    for &(decision, truth) in outcomes {
        match truth {
            Hypothesis::H0 => {
                h0.0 += 1;
                if decision == Hypothesis::H1 {
                    h0.1 += 1;
                }
            }
            Hypothesis::H1 => {
                h1.0 += 1;
                if decision == Hypothesis::H0 {
                    h1.1 += 1;
                }
            }
        }
    }
    let p_fa = (h0.0 > 0).then(|| h0.1 as f64 / h0.0 as f64);
    let p_m = (h1.0 > 0).then(|| h1.1 as f64 / h1.0 as f64);
    Ok((p_fa, p_m))
}

/// Summary of the network statistic over a batch of windows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StatSummary {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub count: usize,
}

impl StatSummary {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        Some(Self {
            min: values.iter().cloned().fold(f64::INFINITY, f64::min),
            max: values.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            mean: values.iter().sum::<f64>() / values.len() as f64,
            count: values.len(),
        })
    }
}

/// Per-window outcome of a pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowOutcome {
    pub start_time_s: f64,
    pub f_hat_hz: f64,
    pub s_hat: f64,
    pub num_links: usize,
    pub num_samples: usize,
}

/// Segment, estimate, and summarize every window of a trace set.
pub fn run_pipeline(
    traces: &[LinkTrace],
    seg_cfg: &SegmentConfig,
    est_cfg: &EstimatorConfig,
) -> Result<Vec<WindowOutcome>, EvaluateError> {
    let windows = segment(traces, seg_cfg)?;
    let outcomes: Vec<Result<WindowOutcome, EstimateError>> =
        crate::par_map(&windows, |window| {
            let est = estimate_window(window, est_cfg)?;
            let n = window.num_samples() as f64;
            let s_hat = est
                .amplitudes
                .iter()
                .map(|a| n * a * a)
                .sum::<f64>()
                / est.amplitudes.len() as f64;
            Ok(WindowOutcome {
                start_time_s: window.start_time_s(),
                f_hat_hz: est.f_hat_hz,
                s_hat,
                num_links: window.num_links(),
                num_samples: window.num_samples(),
            })
        });
    let mut out = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        out.push(o?);
    }
    Ok(out)
}

/// One row of an observation-period sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub window_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rate: Option<RateMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s_hat: Option<StatSummary>,
}

fn trace_span_s(traces: &[LinkTrace]) -> f64 {
    let start = traces
        .iter()
        .filter_map(|t| t.start_time_s())
        .fold(f64::INFINITY, f64::min);
    let end = traces
        .iter()
        .filter_map(|t| t.end_time_s())
        .fold(f64::NEG_INFINITY, f64::max);
    (end - start).max(0.0)
}

/// Re-run the full pipeline for each observation period `T`.
pub fn sweep_observation_period(
    traces: &[LinkTrace],
    truth: &GroundTruth,
    t_values_s: &[f64],
    stride_s: f64,
    base_cfg: &SegmentConfig,
    est_cfg: &EstimatorConfig,
) -> Result<Vec<SweepEntry>, EvaluateError> {
    if traces.is_empty() || t_values_s.is_empty() {
        return Err(EvaluateError::Empty);
    }
    let available = trace_span_s(traces);
    for &t in t_values_s {
        if t > available {
            return Err(EvaluateError::DatasetTooShort {
                requested: t,
                available,
            });
        }
    }
    let mut entries = Vec::with_capacity(t_values_s.len());
    for &t in t_values_s {
        let cfg = SegmentConfig {
            window_s: t,
            stride_s,
            ..base_cfg.clone()
        };
        let outcomes = run_pipeline(traces, &cfg, est_cfg)?;
        let s_values: Vec<f64> = outcomes.iter().map(|o| o.s_hat).collect();
        let rate = match truth.rate_bpm {
            Some(rate_bpm) if !outcomes.is_empty() => {
                let pairs: Vec<(f64, f64)> = outcomes
                    .iter()
                    .map(|o| (hz_to_bpm(o.f_hat_hz), rate_bpm))
                    .collect();
                Some(rate_metrics(&pairs)?)
            }
            _ => None,
        };
        entries.push(SweepEntry {
            window_s: t,
            rate,
            s_hat: StatSummary::from_values(&s_values),
        });
    }
    Ok(entries)
}

/// Restrict a window to links whose endpoints both lie in `nodes`.
fn restrict_window(window: &NetworkWindow, nodes: &[u32]) -> Option<NetworkWindow> {
    let keep: Vec<usize> = window
        .link_ids()
        .iter()
        .enumerate()
        .filter(|(_, id)| nodes.contains(&id.tx) && nodes.contains(&id.rx))
        .map(|(i, _)| i)
        .collect();
    if keep.is_empty() {
        return None;
    }
    let ids: Vec<LinkId> = keep.iter().map(|&i| window.link_ids()[i]).collect();
    let rows: Vec<Vec<f64>> = keep.iter().map(|&i| window.row(i).to_vec()).collect();
    NetworkWindow::new(ids, rows, window.sample_period_s(), window.start_time_s()).ok()
}

/// Averaged metrics for one subset size.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationEntry {
    pub subset_size: usize,
    pub trials: usize,
    /// Invalid fraction averaged over trials.
    pub mean_invalid_fraction: f64,
    /// RMSE averaged over trials that produced any valid estimate.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_rmse_bpm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_bias_bpm: Option<f64>,
}

/// Re-run estimation on random node subsets of each requested size and
/// average the resulting rate metrics. Deterministic for a given seed.
pub fn node_subset_ablation(
    traces: &[LinkTrace],
    truth: &GroundTruth,
    sizes: &[usize],
    trials: usize,
    seg_cfg: &SegmentConfig,
    est_cfg: &EstimatorConfig,
    seed: u64,
) -> Result<Vec<AblationEntry>, EvaluateError> {
    if traces.is_empty() || sizes.is_empty() || trials == 0 {
        return Err(EvaluateError::Empty);
    }
    let rate_bpm = truth.rate_bpm.ok_or(EvaluateError::MissingRate)?;

    let mut nodes: Vec<u32> = Vec::new();
    for t in traces {
        for id in [t.link.tx, t.link.rx] {
            if !nodes.contains(&id) {
                nodes.push(id);
            }
        }
    }
    nodes.sort_unstable();
    for &size in sizes {
        if size < 2 {
            return Err(EvaluateError::SubsetTooSmall(size));
        }
        if size > nodes.len() {
            return Err(EvaluateError::SubsetTooLarge {
                size,
                available: nodes.len(),
            });
        }
    }

    // Links are conditioned independently, so segment once and restrict the
    // resulting windows per trial.
    let windows = segment(traces, seg_cfg)?;
    if windows.is_empty() {
        return Err(EvaluateError::Empty);
    }

    let mut entries = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let trial_metrics: Vec<Option<RateMetrics>> = crate::par_map_range(trials, |trial| {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            rng.set_stream(((size as u64) << 32) | trial as u64);
            let subset: Vec<u32> = rand::seq::index::sample(&mut rng, nodes.len(), size)
                .iter()
                .map(|i| nodes[i])
                .collect();
            let mut pairs = Vec::new();
            for window in &windows {
                if let Some(sub) = restrict_window(window, &subset) {
                    if let Ok(est) = estimate_window(&sub, est_cfg) {
                        pairs.push((hz_to_bpm(est.f_hat_hz), rate_bpm));
                    }
                }
            }
            rate_metrics(&pairs).ok()
        });

        let mut invalid_acc = 0.0;
        let mut invalid_n = 0usize;
        let mut rmse_acc = 0.0;
        let mut rmse_n = 0usize;
        let mut bias_acc = 0.0;
        for m in trial_metrics.into_iter().flatten() {
            invalid_acc += m.invalid_fraction;
            invalid_n += 1;
            if let (Some(rmse), Some(bias)) = (m.rmse_bpm, m.bias_bpm) {
                rmse_acc += rmse;
                bias_acc += bias;
                rmse_n += 1;
            }
        }
        if invalid_n == 0 {
            return Err(EvaluateError::Empty);
        }
        entries.push(AblationEntry {
            subset_size: size,
            trials,
            mean_invalid_fraction: invalid_acc / invalid_n as f64,
            mean_rmse_bpm: (rmse_n > 0).then(|| rmse_acc / rmse_n as f64),
            mean_bias_bpm: (rmse_n > 0).then(|| bias_acc / rmse_n as f64),
        });
    }
    Ok(entries)
}

/// A mode of the circular phase distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhaseMode {
    /// Mode direction in `(-pi, pi]`.
    pub angle_rad: f64,
    /// Fraction of the density mass in this mode's basin.
    pub weight: f64,
}

fn fisher_kappa(r: f64) -> f64 {
    let r = r.clamp(0.0, 1.0 - 1e-9);
    let kappa = if r < 0.53 {
        2.0 * r + r.powi(3) + 5.0 * r.powi(5) / 6.0
    } else if r < 0.85 {
        -0.4 + 1.39 * r + 0.43 / (1.0 - r)
    } else {
        1.0 / (r.powi(3) - 4.0 * r * r + 3.0 * r)
    };
    kappa.min(500.0)
}

/// Locate the modes of the phase distribution over high-amplitude links.
///
/// The top `ceil((1 - amplitude_quantile) * L)` links by amplitude (default
/// quantile 0.95 keeps the top 5%) enter a von Mises kernel density; the
/// kernel concentration follows the circular-variance rule of thumb, using
/// the doubled-angle resultant when the direct one degenerates (as it does
/// for antipodal data). Local maxima of the density are returned sorted by
/// basin weight; basins lighter than 5% are dropped.
pub fn phase_modes(
    estimate: &BreathingEstimate,
    amplitude_quantile: f64,
) -> Result<Vec<PhaseMode>, EvaluateError> {
    if !(0.0..1.0).contains(&amplitude_quantile) {
        return Err(EvaluateError::BadQuantile(amplitude_quantile));
    }
    let n_links = estimate.amplitudes.len();
    if n_links == 0 {
        return Err(EvaluateError::Empty);
    }
    let count = (((1.0 - amplitude_quantile) * n_links as f64).ceil() as usize).clamp(1, n_links);
    let mut by_amp: Vec<usize> = (0..n_links).collect();
    by_amp.sort_by(|&a, &b| {
        estimate.amplitudes[b]
            .partial_cmp(&estimate.amplitudes[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let phases: Vec<f64> = by_amp[..count].iter().map(|&i| estimate.phases[i]).collect();
    const MIN_LINKS: usize = 5;
    if phases.len() < MIN_LINKS {
        return Err(EvaluateError::TooFewHighAmplitudeLinks {
            got: phases.len(),
            need: MIN_LINKS,
        });
    }

    let n = phases.len() as f64;
    let resultant = |mult: f64| {
        let (mut c, mut s) = (0.0, 0.0);
        for &p in &phases {
            c += (mult * p).cos();
            s += (mult * p).sin();
        }
        (c * c + s * s).sqrt() / n
    };
    let r = resultant(1.0).max(resultant(2.0));
    let kappa = (fisher_kappa(r) * n.powf(0.4)).clamp(1.0, 2000.0);

    const GRID: usize = 720;
    let step = std::f64::consts::TAU / GRID as f64;
    let density: Vec<f64> = (0..GRID)
        .map(|g| {
            let theta = -std::f64::consts::PI + (g as f64 + 1.0) * step;
            phases
                .iter()
                .map(|&p| (kappa * ((theta - p).cos() - 1.0)).exp())
                .sum::<f64>()
        })
        .collect();
    let total: f64 = density.iter().sum();
    if total <= 0.0 {
        return Err(EvaluateError::Empty);
    }

    // Wrap-aware local maxima and the minima that bound their basins.
    let at = |i: isize| density[i.rem_euclid(GRID as isize) as usize];
    let mut maxima: Vec<usize> = (0..GRID)
        .filter(|&g| {
            let v = density[g];
            v > at(g as isize - 1) && v >= at(g as isize + 1)
        })
        .collect();
    if maxima.is_empty() {
        // Perfectly flat density: treat the whole circle as one mode.
        maxima.push(0);
    }
    let theta_of = |g: usize| -std::f64::consts::PI + (g as f64 + 1.0) * step;

    // Basin boundaries: the density minimum between consecutive maxima.
    // With k maxima the circle splits into k half-open arcs that partition
    // the total mass exactly; one maximum owns the whole circle.
    let bounds: Vec<usize> = (0..maxima.len())
        .map(|i| arc_min_index(&density, maxima[i], maxima[(i + 1) % maxima.len()]))
        .collect();
    let mut modes = Vec::with_capacity(maxima.len());
    for (mi, &g) in maxima.iter().enumerate() {
        let mass = if maxima.len() == 1 {
            total
        } else {
            let start = bounds[(mi + maxima.len() - 1) % maxima.len()];
            let end = bounds[mi];
            let mut acc = 0.0;
            let mut i = start;
            while i != end {
                acc += density[i];
                i = (i + 1) % GRID;
            }
            acc
        };
        // Parabolic refinement of the peak position.
        let (ym, y0, yp) = (at(g as isize - 1), density[g], at(g as isize + 1));
        let denom = ym - 2.0 * y0 + yp;
        let delta = if denom.abs() > 1e-30 {
            (0.5 * (ym - yp) / denom).clamp(-0.5, 0.5)
        } else {
            0.0
        };
        modes.push(PhaseMode {
            angle_rad: wrap_angle(theta_of(g) + delta * step),
            weight: mass / total,
        });
    }
    modes.retain(|m| m.weight >= 0.05);
    modes.sort_by(|a, b| b.weight.partial_cmp(&a.weight).unwrap());
    Ok(modes)
}

/// Index of the density minimum on the arc from `a` to `b` (walking forward,
/// wrap-aware).
fn arc_min_index(density: &[f64], a: usize, b: usize) -> usize {
    let n = density.len();
    let mut i = a;
    let mut best = a;
    loop {
        if density[i] < density[best] {
            best = i;
        }
        if i == b {
            break;
        }
        i = (i + 1) % n;
    }
    best
}
