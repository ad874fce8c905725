//! Breathing hypothesis tests.
//!
//! Two detectors: a per-link test thresholding `N * A_hat^2` from a
//! single-link frequency search, and the network-wide test thresholding
//! `S_hat = (N/L) * sum_l A_hat_l^2` at the jointly estimated frequency.
//! Thresholds are calibrated empirically from H0 statistic samples.

use std::f64::consts::TAU;

use thiserror::Error;

use crate::estimate::{self, EstimateError};
use crate::model::{BreathingEstimate, DetectionResult, DetectorConfig, EstimatorConfig, Hypothesis, NetworkWindow};

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("threshold calibration needs at least one H0 statistic")]
    EmptyCalibrationSet,
    #[error("calibration statistics contain a non-finite value")]
    NonFiniteStatistic,
    #[error(transparent)]
    Estimate(#[from] EstimateError),
}

/// Single-link detection outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkDetection {
    /// The statistic `N * A_hat^2` at this link's own frequency estimate.
    pub stat: f64,
    pub decision: Hypothesis,
    /// Frequency that maximized this link's periodogram, Hz.
    pub f_hat_hz: f64,
    pub amplitude: f64,
}

/// Periodogram of one row at one frequency.
fn link_psd(row: &[f64], sample_period_s: f64, freq_hz: f64) -> f64 {
    let omega = TAU * freq_hz * sample_period_s;
    let mut re = 0.0;
    let mut im = 0.0;
    for (k, &y) in row.iter().enumerate() {
        let (s, c) = (omega * k as f64).sin_cos();
        re += y * c;
        im -= y * s;
    }
    re * re + im * im
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

fn detect_one_row(
    row: &[f64],
    sample_period_s: f64,
    cfg: &EstimatorConfig,
    gamma_link: f64,
) -> LinkDetection {
    let freqs = estimate::grid_frequencies(cfg);
    let mut best = 0usize;
    let mut best_psd = f64::MIN;
    for (i, &f) in freqs.iter().enumerate() {
        let v = link_psd(row, sample_period_s, f);
        if v > best_psd {
            best_psd = v;
            best = i;
        }
    }
    let lo = (freqs[best] - cfg.grid_step_hz).max(cfg.f_min_hz);
    let hi = (freqs[best] + cfg.grid_step_hz).min(cfg.f_max_hz);
    let refined = golden_max(|f| link_psd(row, sample_period_s, f), lo, hi, 1e-7);
    let f_hat_hz = if link_psd(row, sample_period_s, refined) >= best_psd {
        refined
    } else {
        freqs[best]
    };
    let n = row.len() as f64;
    let amplitude = 2.0 * link_psd(row, sample_period_s, f_hat_hz).sqrt() / n;
    let stat = n * amplitude * amplitude;
    LinkDetection {
        stat,
        decision: if stat > gamma_link { Hypothesis::H1 } else { Hypothesis::H0 },
        f_hat_hz,
        amplitude,
    }
}

/// Run the single-link detector on one filtered signal.
pub fn single_link_detect(
    signal: &[f64],
    sample_period_s: f64,
    cfg: &EstimatorConfig,
    gamma_link: f64,
) -> Result<LinkDetection, DetectError> {
    cfg.validate_for(sample_period_s)
        .map_err(EstimateError::InvalidConfig)?;
    Ok(detect_one_row(signal, sample_period_s, cfg, gamma_link))
}

/// Run the single-link detector independently on every link of a window.
pub fn single_link_detect_all(
    window: &NetworkWindow,
    cfg: &EstimatorConfig,
    gamma_link: f64,
) -> Result<Vec<LinkDetection>, DetectError> {
    cfg.validate_for(window.sample_period_s())
        .map_err(EstimateError::InvalidConfig)?;
    let ts = window.sample_period_s();
    let rows: Vec<&[f64]> = window.rows().collect();
    Ok(crate::par_map(&rows, |row| {
        detect_one_row(row, ts, cfg, gamma_link)
    }))
}

/// Threshold the network-wide breathing statistic.
///
/// `S_hat` is computed as the exact mean of the per-link statistics
/// `N * A_hat_l^2`; per-link decisions use `gamma_link` on those same
/// statistics (all evaluated at the network-wide frequency estimate).
pub fn network_detect(
    estimate: &BreathingEstimate,
    n_samples: usize,
    cfg: &DetectorConfig,
) -> DetectionResult {
    let n = n_samples as f64;
    let per_link_stat: Vec<f64> = estimate.amplitudes.iter().map(|a| n * a * a).collect();
    let s_hat = per_link_stat.iter().sum::<f64>() / per_link_stat.len() as f64;
    let per_link_decision = per_link_stat
        .iter()
        .map(|&s| if s > cfg.gamma_link { Hypothesis::H1 } else { Hypothesis::H0 })
        .collect();
    DetectionResult {
        s_hat,
        per_link_stat,
        network_decision: if s_hat > cfg.gamma_net { Hypothesis::H1 } else { Hypothesis::H0 },
        per_link_decision,
    }
}

/// Pick a zero-false-alarm threshold from H0 statistics: the sample maximum
/// inflated by `margin` (e.g. 0.03 for +3%).
pub fn calibrate_threshold(h0_statistics: &[f64], margin: f64) -> Result<f64, DetectError> {
    if h0_statistics.is_empty() {
        return Err(DetectError::EmptyCalibrationSet);
    }
    if h0_statistics.iter().any(|s| !s.is_finite()) {
        return Err(DetectError::NonFiniteStatistic);
    }
    let max = h0_statistics.iter().cloned().fold(f64::MIN, f64::max);
    Ok(max * (1.0 + margin))
}

/// Default calibration margin.
pub const DEFAULT_CALIBRATION_MARGIN: f64 = 0.03;
