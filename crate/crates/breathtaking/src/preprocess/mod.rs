//! Raw trace conditioning: resampling onto a uniform grid, DC-removal
//! filtering, and segmentation into [`NetworkWindow`]s.
//!
//! Raw link traces arrive jittered (token-passing schedules offset each link
//! within the rotation) and with missing packets. `regularize` interpolates
//! each trace onto the shared grid `t_k = k * T_s`; `segment` filters the
//! regularized signals and cuts time-aligned windows containing every link
//! that is usable over the full window span.

mod filter;

pub use filter::{apply_filter, design_highpass, FilterCoefficients, FilterSpec};

use thiserror::Error;

use crate::model::{LinkId, LinkTrace, NetworkWindow};

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("invalid filter spec: {0}")]
    InvalidFilterSpec(String),
    #[error("signal too short to filter: {len} samples, need at least {min}")]
    TraceTooShort { len: usize, min: usize },
    #[error("invalid segmentation config: {0}")]
    InvalidSegmentConfig(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

/// Default gap limit, in multiples of the sample period.
pub const DEFAULT_MAX_GAP_PERIODS: f64 = 5.0;

/// One link's trace resampled onto the shared uniform grid.
///
/// Grid index `k` corresponds to absolute time `k * sample_period_s`; the
/// trace covers indices `grid_offset .. grid_offset + values.len()`.
/// `valid[i]` is false where the value was bridged across a gap longer than
/// the configured maximum, so no window may rely on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Regularized {
    pub link: LinkId,
    pub sample_period_s: f64,
    pub grid_offset: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    pub usable: bool,
}

/// Linearly interpolate a trace onto the grid `t_k = k * sample_period_s`.
///
/// Grid points bridging a raw-sample gap longer than `max_gap_s` are marked
/// invalid; the values are still filled (no holes) so downstream filtering
/// can run, but segmentation will not emit windows that touch them.
pub fn regularize(trace: &LinkTrace, sample_period_s: f64, max_gap_s: f64) -> Regularized {
    let samples = trace.samples();
    if samples.is_empty() || !(sample_period_s > 0.0) {
        return Regularized {
            link: trace.link,
            sample_period_s,
            grid_offset: 0,
            values: Vec::new(),
            valid: Vec::new(),
            usable: false,
        };
    }
    let eps = sample_period_s * 1e-6;
    let t_first = samples[0].time_s;
    let t_last = samples[samples.len() - 1].time_s;
    let k_first = ((t_first - eps) / sample_period_s).ceil().max(0.0) as usize;
    let k_last = ((t_last + eps) / sample_period_s).floor() as usize;
    if k_last < k_first {
        return Regularized {
            link: trace.link,
            sample_period_s,
            grid_offset: k_first,
            values: Vec::new(),
            valid: Vec::new(),
            usable: false,
        };
    }

    let n = k_last - k_first + 1;
    let mut values = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    let mut right = 0usize; // first sample with time >= t_k - eps
    for k in k_first..=k_last {
        let t_k = k as f64 * sample_period_s;
        while right < samples.len() && samples[right].time_s < t_k - eps {
            right += 1;
        }
        if right < samples.len() && (samples[right].time_s - t_k).abs() <= eps {
            // Grid point coincides with a raw sample: take it verbatim.
            values.push(samples[right].rss_dbm);
            valid.push(true);
            continue;
        }
        // Bracketing samples; t_first <= t_k <= t_last guarantees both exist.
        let (lo, hi) = (&samples[right - 1], &samples[right]);
        let span = hi.time_s - lo.time_s;
        let frac = (t_k - lo.time_s) / span;
        values.push(lo.rss_dbm + frac * (hi.rss_dbm - lo.rss_dbm));
        valid.push(span <= max_gap_s + eps);
    }

    let usable = valid.iter().any(|&v| v);
    Regularized {
        link: trace.link,
        sample_period_s,
        grid_offset: k_first,
        values,
        valid,
        usable,
    }
}

/// Window segmentation parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentConfig {
    /// Observation period `T` in seconds.
    pub window_s: f64,
    /// Offset between successive window starts, seconds.
    pub stride_s: f64,
    /// Uniform grid period `T_s`, seconds.
    pub sample_period_s: f64,
    /// Longest raw-sample gap that interpolation may bridge, seconds.
    pub max_gap_s: f64,
    /// DC-removal filter. `None` takes the regularized samples as-is, for
    /// data that is already zero-mean.
    pub filter: Option<FilterSpec>,
}

impl SegmentConfig {
    /// Defaults matching the reference deployment cadence: `T_s = 0.24 s`,
    /// gap limit of five periods, 7th-order high-pass at 0.167 Hz.
    pub fn new(window_s: f64, stride_s: f64) -> Self {
        let sample_period_s = 0.24;
        Self {
            window_s,
            stride_s,
            sample_period_s,
            max_gap_s: DEFAULT_MAX_GAP_PERIODS * sample_period_s,
            filter: Some(FilterSpec::new(1.0 / sample_period_s)),
        }
    }

    fn validate(&self) -> Result<(), PreprocessError> {
        if !(self.window_s >= 10.0) {
            return Err(PreprocessError::InvalidSegmentConfig(format!(
                "window must be at least 10 s, got {}",
                self.window_s
            )));
        }
        if !(self.stride_s > 0.0) {
            return Err(PreprocessError::InvalidSegmentConfig(format!(
                "stride must be positive, got {}",
                self.stride_s
            )));
        }
        if !(self.sample_period_s > 0.0) {
            return Err(PreprocessError::InvalidSegmentConfig(format!(
                "sample period must be positive, got {}",
                self.sample_period_s
            )));
        }
        if let Some(spec) = &self.filter {
            spec.validate()?;
            let fs = 1.0 / self.sample_period_s;
            if (spec.sample_rate_hz - fs).abs() > 1e-9 * fs {
                return Err(PreprocessError::InvalidSegmentConfig(format!(
                    "filter sample rate {} does not match grid rate {}",
                    spec.sample_rate_hz, fs
                )));
            }
        }
        Ok(())
    }
}

struct ConditionedTrace {
    link: LinkId,
    grid_offset: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

/// Cut sliding, time-aligned windows out of a set of raw traces.
///
/// Window `w` starts at grid index `round(w * stride / T_s)` and spans
/// `N = round(T / T_s)` samples. A link enters a window only when all `N`
/// of its samples are valid there; windows with no such link are skipped
/// with a logged warning. With filtering enabled, samples inside the filter
/// transient (after startup or after any interpolation gap) are invalid.
pub fn segment(
    traces: &[LinkTrace],
    cfg: &SegmentConfig,
) -> Result<Vec<NetworkWindow>, PreprocessError> {
    cfg.validate()?;
    let ts = cfg.sample_period_s;
    let n = (cfg.window_s / ts).round() as usize;
    if n < 2 {
        return Err(PreprocessError::InvalidSegmentConfig(format!(
            "window of {} s holds fewer than 2 samples at T_s = {} s",
            cfg.window_s, ts
        )));
    }

    let coeffs = cfg.filter.as_ref().map(design_highpass).transpose()?;

    let mut conditioned: Vec<ConditionedTrace> = Vec::with_capacity(traces.len());
    for trace in traces {
        let reg = regularize(trace, ts, cfg.max_gap_s);
        if !reg.usable {
            continue;
        }
        let (values, valid) = match (&coeffs, &cfg.filter) {
            (Some(coeffs), Some(spec)) => {
                // Remove the per-link mean before filtering; the high-pass
                // then only has to absorb the residual, not a -40 dBm step.
                let mean = reg.values.iter().sum::<f64>() / reg.values.len() as f64;
                let centered: Vec<f64> = reg.values.iter().map(|v| v - mean).collect();
                let filtered = match apply_filter(coeffs, &centered) {
                    Ok(f) => f,
                    Err(PreprocessError::TraceTooShort { .. }) => {
                        log::warn!("link {}: trace too short to filter, skipped", trace.link);
                        continue;
                    }
                    Err(e) => return Err(e),
                };
                // A sample is trustworthy once the filter has seen a full
                // settling period of genuine (non-bridged) input.
                let settle = spec.transient_len();
                let mut run = 0usize;
                let valid = reg
                    .valid
                    .iter()
                    .map(|&ok| {
                        if ok {
                            run += 1;
                        } else {
                            run = 0;
                        }
                        run > settle
                    })
                    .collect();
                (filtered, valid)
            }
            _ => (reg.values, reg.valid),
        };
        conditioned.push(ConditionedTrace {
            link: trace.link,
            grid_offset: reg.grid_offset,
            values,
            valid,
        });
    }

    let grid_end = conditioned
        .iter()
        .map(|t| t.grid_offset + t.values.len())
        .max()
        .unwrap_or(0);

    let mut windows = Vec::new();
    let mut w = 0usize;
    loop {
        let start = (w as f64 * cfg.stride_s / ts).round() as usize;
        if start + n > grid_end {
            break;
        }
        let mut link_ids = Vec::new();
        let mut rows = Vec::new();
        for trace in &conditioned {
            if start < trace.grid_offset {
                continue;
            }
            let lo = start - trace.grid_offset;
            let hi = lo + n;
            if hi > trace.values.len() {
                continue;
            }
            if trace.valid[lo..hi].iter().all(|&v| v) {
                link_ids.push(trace.link);
                rows.push(trace.values[lo..hi].to_vec());
            }
        }
        if link_ids.is_empty() {
            log::warn!(
                "window starting at {:.2} s has no usable link, skipped",
                start as f64 * ts
            );
        } else {
            windows.push(NetworkWindow::new(
                link_ids,
                rows,
                ts,
                start as f64 * ts,
            )?);
        }
        w += 1;
    }
    Ok(windows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RssSample;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn link() -> LinkId {
        LinkId::new(0, 1).unwrap()
    }

    fn trace_on_grid(n: usize, ts: f64, f: impl Fn(f64) -> f64) -> LinkTrace {
        let samples = (0..n)
            .map(|k| {
                let t = k as f64 * ts;
                RssSample { time_s: t, rss_dbm: f(t) }
            })
            .collect();
        LinkTrace::new(link(), samples).unwrap()
    }

    #[test]
    fn resampling_is_identity_on_grid_aligned_input() {
        let trace = trace_on_grid(100, 0.24, |t| -40.0 - (t * 0.7).sin());
        let reg = regularize(&trace, 0.24, 1.2);
        assert!(reg.usable);
        assert_eq!(reg.grid_offset, 0);
        assert_eq!(reg.values.len(), 100);
        for (k, v) in reg.values.iter().enumerate() {
            assert_eq!(*v, trace.samples()[k].rss_dbm, "sample {k}");
        }
        assert!(reg.valid.iter().all(|&v| v));
    }

    #[test]
    fn midpoint_interpolation() {
        let samples = vec![
            RssSample { time_s: 0.0, rss_dbm: -40.0 },
            RssSample { time_s: 0.48, rss_dbm: -42.0 },
        ];
        let trace = LinkTrace::new(link(), samples).unwrap();
        let reg = regularize(&trace, 0.24, 1.2);
        assert_eq!(reg.values.len(), 3);
        assert_relative_eq!(reg.values[1], -41.0, epsilon = 1e-12);
        assert!(reg.valid[1]);
    }

    #[test]
    fn long_gap_marks_samples_invalid() {
        let mut samples: Vec<RssSample> = (0..40)
            .map(|k| RssSample { time_s: k as f64 * 0.24, rss_dbm: -40.0 })
            .collect();
        // 3-second silence between 9.36 s and 12.36 s.
        samples.extend((0..40).map(|k| RssSample {
            time_s: 12.36 + k as f64 * 0.24,
            rss_dbm: -40.0,
        }));
        let trace = LinkTrace::new(link(), samples).unwrap();
        let reg = regularize(&trace, 0.24, 1.2);
        assert!(reg.usable);
        let t = |k: usize| (reg.grid_offset + k) as f64 * 0.24;
        let invalid: Vec<f64> = reg
            .valid
            .iter()
            .enumerate()
            .filter(|(_, &v)| !v)
            .map(|(k, _)| t(k))
            .collect();
        assert!(!invalid.is_empty());
        assert!(invalid.iter().all(|&t| t > 9.3 && t < 12.4), "{invalid:?}");
    }

    #[test]
    fn empty_trace_is_unusable() {
        let trace = LinkTrace::new(link(), Vec::new()).unwrap();
        assert!(!regularize(&trace, 0.24, 1.2).usable);
    }

    fn unfiltered_cfg(window_s: f64, stride_s: f64) -> SegmentConfig {
        SegmentConfig {
            filter: None,
            ..SegmentConfig::new(window_s, stride_s)
        }
    }

    #[test]
    fn exact_tiling_yields_two_windows() {
        // 60 s of zero-mean data at 0.24 s: 250 grid samples.
        let trace = trace_on_grid(250, 0.24, |t| (2.0 * PI * 0.3 * t).cos());
        let windows = segment(&[trace], &unfiltered_cfg(30.0, 30.0)).unwrap();
        assert_eq!(windows.len(), 2);
        assert_eq!(windows[0].num_samples(), 125);
        assert_relative_eq!(windows[1].start_time_s(), 30.0, epsilon = 1e-9);
    }

    #[test]
    fn five_second_stride_yields_seven_windows() {
        let trace = trace_on_grid(250, 0.24, |t| (2.0 * PI * 0.3 * t).cos());
        let windows = segment(&[trace], &unfiltered_cfg(30.0, 5.0)).unwrap();
        assert_eq!(windows.len(), 7);
    }

    #[test]
    fn n_is_125_for_30s_window_at_testbed_cadence() {
        let trace = trace_on_grid(300, 0.24, |t| (2.0 * PI * 0.3 * t).cos());
        let windows = segment(&[trace], &unfiltered_cfg(30.0, 30.0)).unwrap();
        assert_eq!(windows[0].num_samples(), 125);
    }

    #[test]
    fn window_overlapping_gap_omits_link() {
        // Two links; one has a 3 s hole around t = 40 s.
        let clean = trace_on_grid(500, 0.24, |t| (2.0 * PI * 0.3 * t).cos());
        let gappy = {
            let samples: Vec<RssSample> = (0..500)
                .map(|k| k as f64 * 0.24)
                .filter(|&t| !(40.0..43.0).contains(&t))
                .map(|t| RssSample { time_s: t, rss_dbm: (2.0 * PI * 0.3 * t).cos() })
                .collect();
            LinkTrace::new(LinkId::new(1, 0).unwrap(), samples).unwrap()
        };
        let windows = segment(&[clean, gappy], &unfiltered_cfg(30.0, 30.0)).unwrap();
        assert_eq!(windows.len(), 4);
        // Window [30, 60) overlaps the hole: only the clean link remains.
        assert_eq!(windows[1].num_links(), 1);
        assert_eq!(windows[0].num_links(), 2);
        assert_eq!(windows[2].num_links(), 2);
    }

    #[test]
    fn filtering_excludes_transient_and_suppresses_dc() {
        // 400 s of raw dBm-level data so several windows survive the
        // ~30 s transient.
        let raw = trace_on_grid(1667, 0.24, |t| -40.0 + 0.8 * (2.0 * PI * 0.25 * t).cos());
        let cfg = SegmentConfig::new(30.0, 30.0);
        let windows = segment(&[raw], &cfg).unwrap();
        assert!(!windows.is_empty());
        // Transient covers 125 samples = 30 s, so window 0 must be gone.
        assert!(windows[0].start_time_s() >= 30.0);
        for w in &windows {
            assert!(w.dc_removed(), "window at {} s", w.start_time_s());
        }
        // Unfiltered raw windows keep the -40 dBm offset and fail the check.
        let raw = trace_on_grid(1667, 0.24, |t| -40.0 + 0.8 * (2.0 * PI * 0.25 * t).cos());
        let unfiltered = segment(&[raw], &unfiltered_cfg(30.0, 30.0)).unwrap();
        assert!(!unfiltered[0].dc_removed());
    }

    #[test]
    fn dc_component_contributes_under_1e3_of_rms() {
        // The constant component's residual in each window row: difference
        // between conditioning a raw trace and conditioning its exactly
        // centered twin. Window means themselves carry in-band leakage
        // (|sinc(f T)| of the tone), so the DC claim is tested against the
        // centered pipeline, not against zero.
        let f = |t: f64| 0.8 * (2.0 * PI * 0.25 * t).cos() + 0.3 * (2.0 * PI * 0.41 * t).sin();
        let raw = trace_on_grid(1667, 0.24, |t| -40.0 + f(t));
        let centered = trace_on_grid(1667, 0.24, f);
        let cfg = SegmentConfig::new(30.0, 30.0);
        let a = segment(&[raw], &cfg).unwrap();
        let b = segment(&[centered], &cfg).unwrap();
        assert_eq!(a.len(), b.len());
        for (wa, wb) in a.iter().zip(&b) {
            for (ra, rb) in wa.rows().zip(wb.rows()) {
                let rms = (rb.iter().map(|x| x * x).sum::<f64>() / rb.len() as f64).sqrt();
                let dc_residual = ra
                    .iter()
                    .zip(rb)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                assert!(
                    dc_residual < 1e-3 * rms,
                    "window {}: residual {dc_residual:.2e} vs rms {rms:.3}",
                    wa.start_time_s()
                );
            }
        }
    }

    #[test]
    fn short_window_rejected() {
        let trace = trace_on_grid(100, 0.24, |_| 0.0);
        let err = segment(&[trace], &unfiltered_cfg(5.0, 5.0));
        assert!(err.is_err());
    }
}
