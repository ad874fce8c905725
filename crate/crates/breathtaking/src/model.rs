//! Shared domain types for the breathing-monitoring pipeline.
//!
//! Everything here is a plain value object: no algorithms, no I/O. Frequencies
//! are stored in Hz throughout the crate; breaths-per-minute appears only at
//! I/O boundaries via [`hz_to_bpm`] / [`bpm_to_hz`].

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Exact conversion factor between Hz and breaths per minute.
pub const BPM_PER_HZ: f64 = 60.0;

/// Convert a frequency in Hz to breaths per minute.
pub fn hz_to_bpm(hz: f64) -> f64 {
    hz * BPM_PER_HZ
}

/// Convert a rate in breaths per minute to Hz.
pub fn bpm_to_hz(bpm: f64) -> f64 {
    bpm / BPM_PER_HZ
}

/// Wrap an angle into the `(-pi, pi]` interval.
pub fn wrap_angle(theta: f64) -> f64 {
    let w = theta.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("link endpoints must differ (got {0} -> {0})")]
    SelfLink(u32),
    #[error("sample times must strictly increase (violated at index {0})")]
    NonMonotonicTime(usize),
    #[error("window must have at least one link")]
    EmptyWindow,
    #[error("window rows must all have length {expected}, row {row} has {got}")]
    RaggedWindow {
        row: usize,
        expected: usize,
        got: usize,
    },
    #[error("window needs at least 2 samples per link, got {0}")]
    WindowTooShort(usize),
    #[error("sample period must be positive, got {0}")]
    BadSamplePeriod(f64),
}

/// A directed radio link: the ordered pair (transmitter, receiver).
///
/// `(a, b)` and `(b, a)` are distinct links; a node never links to itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkId {
    pub tx: u32,
    pub rx: u32,
}

impl LinkId {
    pub fn new(tx: u32, rx: u32) -> Result<Self, ModelError> {
        if tx == rx {
            return Err(ModelError::SelfLink(tx));
        }
        Ok(Self { tx, rx })
    }
}

impl std::fmt::Display for LinkId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}->{}", self.tx, self.rx)
    }
}

/// One received-signal-strength measurement.
///
/// Raw traces carry integer dBm register values; filtered signals are real.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RssSample {
    /// Seconds since the trace epoch.
    pub time_s: f64,
    /// Received power in dBm.
    pub rss_dbm: f64,
}

/// A time-stamped RSS series for one directed link.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkTrace {
    pub link: LinkId,
    samples: Vec<RssSample>,
    mean_rss_dbm: f64,
}

impl LinkTrace {
    /// Build a trace from time-ordered samples.
    ///
    /// Sample times must strictly increase. The pre-filter mean RSS is
    /// recomputed here rather than trusted from any serialized form.
    pub fn new(link: LinkId, samples: Vec<RssSample>) -> Result<Self, ModelError> {
        for i in 1..samples.len() {
            if samples[i].time_s <= samples[i - 1].time_s {
                return Err(ModelError::NonMonotonicTime(i));
            }
        }
        let mean_rss_dbm = if samples.is_empty() {
            0.0
        } else {
            samples.iter().map(|s| s.rss_dbm).sum::<f64>() / samples.len() as f64
        };
        Ok(Self {
            link,
            samples,
            mean_rss_dbm,
        })
    }

    pub fn samples(&self) -> &[RssSample] {
        &self.samples
    }

    /// Arithmetic mean of the raw samples (0.0 for an empty trace).
    pub fn mean_rss_dbm(&self) -> f64 {
        self.mean_rss_dbm
    }

    /// A trace with no samples carries no usable signal.
    pub fn is_usable(&self) -> bool {
        !self.samples.is_empty()
    }

    pub fn start_time_s(&self) -> Option<f64> {
        self.samples.first().map(|s| s.time_s)
    }

    pub fn end_time_s(&self) -> Option<f64> {
        self.samples.last().map(|s| s.time_s)
    }
}

/// A matrix of filtered, zero-mean link signals on a common uniform grid.
///
/// Row `l` holds `N` samples of link `link_ids[l]`; sample `k` of any row was
/// measured at `start_time_s + k * sample_period_s`.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWindow {
    link_ids: Vec<LinkId>,
    data: Vec<f64>, // row-major, L x N
    n_samples: usize,
    sample_period_s: f64,
    start_time_s: f64,
}

impl NetworkWindow {
    pub fn new(
        link_ids: Vec<LinkId>,
        rows: Vec<Vec<f64>>,
        sample_period_s: f64,
        start_time_s: f64,
    ) -> Result<Self, ModelError> {
        if link_ids.is_empty() || rows.is_empty() {
            return Err(ModelError::EmptyWindow);
        }
        if !(sample_period_s > 0.0) {
            return Err(ModelError::BadSamplePeriod(sample_period_s));
        }
        let n_samples = rows[0].len();
        if n_samples < 2 {
            return Err(ModelError::WindowTooShort(n_samples));
        }
        if rows.len() != link_ids.len() {
            return Err(ModelError::RaggedWindow {
                row: rows.len(),
                expected: link_ids.len(),
                got: rows.len(),
            });
        }
        let mut data = Vec::with_capacity(rows.len() * n_samples);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_samples {
                return Err(ModelError::RaggedWindow {
                    row: i,
                    expected: n_samples,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            link_ids,
            data,
            n_samples,
            sample_period_s,
            start_time_s,
        })
    }

    pub fn num_links(&self) -> usize {
        self.link_ids.len()
    }

    pub fn num_samples(&self) -> usize {
        self.n_samples
    }

    pub fn sample_period_s(&self) -> f64 {
        self.sample_period_s
    }

    pub fn start_time_s(&self) -> f64 {
        self.start_time_s
    }

    /// Observation period `T = N * T_s`.
    pub fn duration_s(&self) -> f64 {
        self.n_samples as f64 * self.sample_period_s
    }

    pub fn link_ids(&self) -> &[LinkId] {
        &self.link_ids
    }

    pub fn row(&self, l: usize) -> &[f64] {
        &self.data[l * self.n_samples..(l + 1) * self.n_samples]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.n_samples)
    }

    /// Extract a single-link sub-window (shares grid and start time).
    pub fn single_link(&self, l: usize) -> NetworkWindow {
        NetworkWindow {
            link_ids: vec![self.link_ids[l]],
            data: self.row(l).to_vec(),
            n_samples: self.n_samples,
            sample_period_s: self.sample_period_s,
            start_time_s: self.start_time_s,
        }
    }

    /// Check the DC-removal consequence: each row's mean magnitude is small
    /// against its RMS. A finite window of in-band signal keeps a spectral
    /// leakage mean of up to a few percent of RMS, so the ratio here is a
    /// sanity bound that separates conditioned rows from raw dBm-level ones;
    /// the sub-1e-3 claim holds for the constant component specifically and
    /// is exercised in the preprocess tests.
    pub fn dc_removed(&self) -> bool {
        self.rows().all(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let rms = (row.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
            rms == 0.0 || mean.abs() < 0.1 * rms
        })
    }
}

/// Search band and grid resolution for the frequency estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    pub grid_step_hz: f64,
}

impl Default for EstimatorConfig {
    /// The 10-40 bpm human breathing band with a 0.06 bpm grid.
    fn default() -> Self {
        Self {
            f_min_hz: 0.167,
            f_max_hz: 0.667,
            grid_step_hz: 0.001,
        }
    }
}

impl EstimatorConfig {
    /// Validate the band against a window's sample period.
    pub fn validate_for(&self, sample_period_s: f64) -> Result<(), String> {
        if !(self.grid_step_hz > 0.0) {
            return Err(format!("grid step must be positive, got {}", self.grid_step_hz));
        }
        let nyquist = 0.5 / sample_period_s;
        if !(0.0 < self.f_min_hz && self.f_min_hz < self.f_max_hz && self.f_max_hz < nyquist) {
            return Err(format!(
                "need 0 < f_min ({}) < f_max ({}) < Nyquist ({:.4})",
                self.f_min_hz, self.f_max_hz, nyquist
            ));
        }
        Ok(())
    }
}

/// One point of the periodogram-sum objective curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObjectivePoint {
    pub freq_hz: f64,
    pub psd: f64,
}

/// Joint estimate of the breathing parameters for one window:
/// frequency, per-link amplitudes (dB) and phases in `(-pi, pi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BreathingEstimate {
    pub f_hat_hz: f64,
    pub amplitudes: Vec<f64>,
    pub phases: Vec<f64>,
    /// The grid objective curve, for PSD export and peak inspection.
    pub objective: Vec<ObjectivePoint>,
}

/// Detector thresholds. Defaults come from simulator calibration on the
/// `patch_quiet` preset, not from any particular hardware deployment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub gamma_link: f64,
    pub gamma_net: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            gamma_link: 11.0,
            gamma_net: 1.55,
        }
    }
}

/// Outcome of the two-hypothesis breathing test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hypothesis {
    /// No breathing person present.
    H0,
    /// Breathing person present.
    H1,
}

impl std::fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Hypothesis::H0 => write!(f, "H0"),
            Hypothesis::H1 => write!(f, "H1"),
        }
    }
}

/// Network detection outcome: the statistic, its per-link components
/// `N * A_l^2`, and the threshold decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// Network-wide breathing statistic, the mean of `per_link_stat`.
    pub s_hat: f64,
    pub per_link_stat: Vec<f64>,
    pub network_decision: Hypothesis,
    pub per_link_decision: Vec<Hypothesis>,
}

/// Aggregate performance metrics over `realization_count` experiment runs.
///
/// `rmse_bpm` and `bias_bpm` cover valid estimates only (within 5 bpm of
/// truth); they are absent when no estimate was valid. `p_fa` / `p_m` are
/// absent when the corresponding truth class never occurred.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rmse_bpm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias_bpm: Option<f64>,
    pub invalid_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_fa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_m: Option<f64>,
    pub realization_count: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn link_id_rejects_self_link() {
        assert!(LinkId::new(3, 3).is_err());
        assert!(LinkId::new(0, 1).is_ok());
    }

    #[test]
    fn ordered_pair_links_are_distinct() {
        let a = LinkId::new(1, 2).unwrap();
        let b = LinkId::new(2, 1).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn trace_recomputes_mean() {
        let link = LinkId::new(0, 1).unwrap();
        let samples = vec![
            RssSample { time_s: 0.0, rss_dbm: -40.0 },
            RssSample { time_s: 0.24, rss_dbm: -42.0 },
            RssSample { time_s: 0.48, rss_dbm: -44.0 },
        ];
        let trace = LinkTrace::new(link, samples).unwrap();
        assert_eq!(trace.mean_rss_dbm(), -42.0);
        assert!(trace.is_usable());
    }

    #[test]
    fn trace_rejects_non_monotonic_time() {
        let link = LinkId::new(0, 1).unwrap();
        let samples = vec![
            RssSample { time_s: 0.0, rss_dbm: -40.0 },
            RssSample { time_s: 0.0, rss_dbm: -41.0 },
        ];
        assert!(LinkTrace::new(link, samples).is_err());
    }

    #[test]
    fn window_rejects_ragged_rows() {
        let ids = vec![LinkId::new(0, 1).unwrap(), LinkId::new(1, 0).unwrap()];
        let rows = vec![vec![0.0; 10], vec![0.0; 9]];
        assert!(NetworkWindow::new(ids, rows, 0.24, 0.0).is_err());
    }

    #[test]
    fn window_duration_is_n_times_ts() {
        let ids = vec![LinkId::new(0, 1).unwrap()];
        let w = NetworkWindow::new(ids, vec![vec![0.0; 125]], 0.24, 0.0).unwrap();
        assert!((w.duration_s() - 30.0).abs() < 1e-12);
    }

    #[test]
    fn wrap_angle_lands_in_half_open_interval() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-12);
        for i in -20..20 {
            let theta = i as f64 * 0.773;
            let w = wrap_angle(theta);
            assert!(w > -PI && w <= PI, "wrap({theta}) = {w}");
            // Same direction on the circle.
            assert!(((w - theta).rem_euclid(TAU)).min(TAU - (w - theta).rem_euclid(TAU)) < 1e-9);
        }
    }

    #[test]
    fn bpm_conversion_is_exact_factor_60() {
        assert_eq!(hz_to_bpm(0.25), 15.0);
        assert_eq!(bpm_to_hz(15.0), 0.25);
    }

    #[test]
    fn dc_removed_spots_offset_rows() {
        let ids = vec![LinkId::new(0, 1).unwrap()];
        let centered: Vec<f64> = (0..100).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let w = NetworkWindow::new(ids.clone(), vec![centered.clone()], 0.24, 0.0).unwrap();
        assert!(w.dc_removed());
        let offset: Vec<f64> = centered.iter().map(|x| x + 0.5).collect();
        let w = NetworkWindow::new(ids, vec![offset], 0.24, 0.0).unwrap();
        assert!(!w.dc_removed());
    }
}
