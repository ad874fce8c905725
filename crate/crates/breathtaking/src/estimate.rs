//! Multi-link sinusoid maximum-likelihood estimation.
//!
//! The frequency estimate maximizes the periodogram sum over all links, on a
//! grid followed by golden-section refinement; per-link amplitude and phase
//! then come from the single-frequency Fourier sums. [`brute_force_mle`]
//! minimizes the underlying least-squares cost directly over dense parameter
//! grids and exists as an independent cross-check for small instances.

use std::f64::consts::{PI, TAU};

use thiserror::Error;

use crate::model::{BreathingEstimate, EstimatorConfig, NetworkWindow, ObjectivePoint};

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("frequency {freq_hz} Hz outside the open interval (0, {nyquist}) Hz")]
    FrequencyOutOfRange { freq_hz: f64, nyquist: f64 },
    #[error("estimator config invalid: {0}")]
    InvalidConfig(String),
    #[error("brute-force grid too large: {0} cost evaluations")]
    GridTooLarge(u128),
}

/// Per-sample phasor components `cos(omega k)`, `sin(omega k)` for `k < n`.
fn phasor_table(omega: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut cos_t = Vec::with_capacity(n);
    let mut sin_t = Vec::with_capacity(n);
    for k in 0..n {
        let (s, c) = (omega * k as f64).sin_cos();
        cos_t.push(c);
        sin_t.push(s);
    }
    (cos_t, sin_t)
}

/// `sum_k y[k] e^{-j omega k}` as `(re, im)`.
fn fourier_sum(y: &[f64], cos_t: &[f64], sin_t: &[f64]) -> (f64, f64) {
    let mut re = 0.0;
    let mut im = 0.0;
    for ((&v, &c), &s) in y.iter().zip(cos_t).zip(sin_t) {
        re += v * c;
        im -= v * s;
    }
    (re, im)
}

fn check_band(freq_hz: f64, sample_period_s: f64) -> Result<(), EstimateError> {
    let nyquist = 0.5 / sample_period_s;
    if !(freq_hz > 0.0 && freq_hz < nyquist) {
        return Err(EstimateError::FrequencyOutOfRange { freq_hz, nyquist });
    }
    Ok(())
}

fn psd_value(window: &NetworkWindow, freq_hz: f64) -> f64 {
    let omega = TAU * freq_hz * window.sample_period_s();
    let (cos_t, sin_t) = phasor_table(omega, window.num_samples());
    window
        .rows()
        .map(|row| {
            let (re, im) = fourier_sum(row, &cos_t, &sin_t);
            re * re + im * im
        })
        .sum()
}

/// The periodogram-sum objective: `sum_l |sum_k y_l(k) e^{-j 2 pi f T_s k}|^2`.
///
/// Empty windows cannot be constructed, so the only failure mode is a
/// frequency outside `(0, Nyquist)`.
pub fn psd_objective(window: &NetworkWindow, freq_hz: f64) -> Result<f64, EstimateError> {
    check_band(freq_hz, window.sample_period_s())?;
    Ok(psd_value(window, freq_hz))
}

/// Grid frequencies `{f_min, f_min + step, ...}` up to and including `f_max`
/// when the band is a whole number of steps.
pub(crate) fn grid_frequencies(cfg: &EstimatorConfig) -> Vec<f64> {
    let count = ((cfg.f_max_hz - cfg.f_min_hz) / cfg.grid_step_hz + 1e-9).floor() as usize + 1;
    (0..count)
        .map(|k| cfg.f_min_hz + k as f64 * cfg.grid_step_hz)
        .collect()
}

/// Maximize a unimodal function on `[a, b]` by golden-section search.
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

/// Frequency estimate plus the full grid curve it was selected from.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyEstimate {
    pub f_hat_hz: f64,
    pub objective: Vec<ObjectivePoint>,
}

/// Evaluate the objective over the whole grid, in grid order.
pub fn objective_curve(
    window: &NetworkWindow,
    cfg: &EstimatorConfig,
) -> Result<Vec<ObjectivePoint>, EstimateError> {
    cfg.validate_for(window.sample_period_s())
        .map_err(EstimateError::InvalidConfig)?;
    let freqs = grid_frequencies(cfg);
    Ok(crate::par_map(&freqs, |&freq_hz| ObjectivePoint {
        freq_hz,
        psd: psd_value(window, freq_hz),
    }))
}

/// Sequential twin of [`objective_curve`], kept callable under any feature
/// set so benchmarks can compare execution strategies.
#[doc(hidden)]
pub fn objective_curve_serial(
    window: &NetworkWindow,
    cfg: &EstimatorConfig,
) -> Result<Vec<ObjectivePoint>, EstimateError> {
    cfg.validate_for(window.sample_period_s())
        .map_err(EstimateError::InvalidConfig)?;
    Ok(grid_frequencies(cfg)
        .iter()
        .map(|&freq_hz| ObjectivePoint {
            freq_hz,
            psd: psd_value(window, freq_hz),
        })
        .collect())
}

/// Grid-search the breathing band for the frequency MLE, then refine the
/// best grid point by golden-section search within one grid step.
///
/// Ties on the grid break toward the lowest frequency.
pub fn estimate_frequency(
    window: &NetworkWindow,
    cfg: &EstimatorConfig,
) -> Result<FrequencyEstimate, EstimateError> {
    let objective = objective_curve(window, cfg)?;
    let mut best = 0usize;
    for (i, point) in objective.iter().enumerate() {
        if point.psd > objective[best].psd {
            best = i;
        }
    }
    let lo = (objective[best].freq_hz - cfg.grid_step_hz).max(cfg.f_min_hz);
    let hi = (objective[best].freq_hz + cfg.grid_step_hz).min(cfg.f_max_hz);
    let refined = golden_max(|f| psd_value(window, f), lo, hi, 1e-7);
    let f_hat_hz = if psd_value(window, refined) >= objective[best].psd {
        refined
    } else {
        objective[best].freq_hz
    };
    Ok(FrequencyEstimate { f_hat_hz, objective })
}

/// Per-link amplitude and phase at a fixed frequency.
///
/// Amplitudes are `(2/N) |sum_k y_l(k) e^{-j omega k}|`; phases come from the
/// two-argument arctangent of the same sum, in `(-pi, pi]`.
pub fn estimate_amp_phase(
    window: &NetworkWindow,
    f_hat_hz: f64,
) -> Result<(Vec<f64>, Vec<f64>), EstimateError> {
    check_band(f_hat_hz, window.sample_period_s())?;
    let n = window.num_samples();
    let omega = TAU * f_hat_hz * window.sample_period_s();
    let (cos_t, sin_t) = phasor_table(omega, n);
    let mut amplitudes = Vec::with_capacity(window.num_links());
    let mut phases = Vec::with_capacity(window.num_links());
    for row in window.rows() {
        let (re, im) = fourier_sum(row, &cos_t, &sin_t);
        amplitudes.push(2.0 * (re * re + im * im).sqrt() / n as f64);
        let phi = im.atan2(re);
        phases.push(if phi == -PI { PI } else { phi });
    }
    Ok((amplitudes, phases))
}

/// Full joint estimate for one window: frequency, then per-link amplitude
/// and phase at that frequency.
pub fn estimate_window(
    window: &NetworkWindow,
    cfg: &EstimatorConfig,
) -> Result<BreathingEstimate, EstimateError> {
    let freq = estimate_frequency(window, cfg)?;
    let (amplitudes, phases) = estimate_amp_phase(window, freq.f_hat_hz)?;
    Ok(BreathingEstimate {
        f_hat_hz: freq.f_hat_hz,
        amplitudes,
        phases,
        objective: freq.objective,
    })
}

/// Grid resolution for [`brute_force_mle`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BruteForceGrids {
    /// Number of frequency grid points across the configured band.
    pub freq_steps: usize,
    /// Amplitude grid spans `[0, amp_max]`.
    pub amp_max: f64,
    pub amp_steps: usize,
    /// Phase grid spans `(-pi, pi]` in `2 pi / phase_steps` increments.
    pub phase_steps: usize,
}

impl Default for BruteForceGrids {
    fn default() -> Self {
        Self {
            freq_steps: 101,
            amp_max: 3.0,
            amp_steps: 121,
            phase_steps: 72,
        }
    }
}

impl BruteForceGrids {
    pub fn freq_step_hz(&self, cfg: &EstimatorConfig) -> f64 {
        (cfg.f_max_hz - cfg.f_min_hz) / (self.freq_steps - 1) as f64
    }
}

/// The exhaustively gridded minimizer of the least-squares cost.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceTheta {
    pub f_hz: f64,
    pub amplitudes: Vec<f64>,
    pub phases: Vec<f64>,
    /// The minimized sum of squared residuals.
    pub j_value: f64,
}

/// Exhaustively minimize
/// `J = sum_l sum_k [y_l(k) - A_l cos(omega k + phi_l)]^2`
/// over dense grids in frequency, per-link amplitude, and per-link phase.
///
/// This evaluates the cost directly, term by term, sharing nothing with the
/// periodogram path; it is meant as a test oracle on small instances
/// (roughly `L <= 3`, `N <= 64`). Ties break toward the lowest frequency,
/// then the smallest amplitude, then the lowest phase grid point.
pub fn brute_force_mle(
    window: &NetworkWindow,
    cfg: &EstimatorConfig,
    grids: &BruteForceGrids,
) -> Result<BruteForceTheta, EstimateError> {
    cfg.validate_for(window.sample_period_s())
        .map_err(EstimateError::InvalidConfig)?;
    if grids.freq_steps < 2 || grids.amp_steps < 2 || grids.phase_steps < 2 {
        return Err(EstimateError::InvalidConfig(
            "brute-force grids need at least 2 steps per axis".into(),
        ));
    }
    let l = window.num_links();
    let n = window.num_samples();
    let cost = grids.freq_steps as u128
        * l as u128
        * grids.amp_steps as u128
        * grids.phase_steps as u128
        * n as u128;
    if cost > 20_000_000_000 {
        return Err(EstimateError::GridTooLarge(cost));
    }

    let ts = window.sample_period_s();
    let freq_step = grids.freq_step_hz(cfg);
    let amp_step = grids.amp_max / (grids.amp_steps - 1) as f64;
    let phase_step = TAU / grids.phase_steps as f64;

    struct PerFreq {
        j_value: f64,
        amplitudes: Vec<f64>,
        phases: Vec<f64>,
    }

    let per_freq: Vec<PerFreq> = crate::par_map_range(grids.freq_steps, |fi| {
        let f = cfg.f_min_hz + fi as f64 * freq_step;
        let omega = TAU * f * ts;
        // cos(omega k + phi_j) for every phase grid point.
        let cos_tables: Vec<Vec<f64>> = (0..grids.phase_steps)
            .map(|j| {
                let phi = -PI + (j + 1) as f64 * phase_step;
                (0..n).map(|k| (omega * k as f64 + phi).cos()).collect()
            })
            .collect();
        let mut amplitudes = Vec::with_capacity(l);
        let mut phases = Vec::with_capacity(l);
        let mut j_total = 0.0;
        for row in window.rows() {
            let mut best = f64::INFINITY;
            let (mut best_a, mut best_phi) = (0.0, 0.0);
            for (j, table) in cos_tables.iter().enumerate() {
                let phi = -PI + (j + 1) as f64 * phase_step;
                for ai in 0..grids.amp_steps {
                    let a = ai as f64 * amp_step;
                    let mut sse = 0.0;
                    for (&y, &c) in row.iter().zip(table) {
                        let r = y - a * c;
                        sse += r * r;
                    }
                    if sse < best {
                        best = sse;
                        best_a = a;
                        best_phi = phi;
                    }
                }
            }
            j_total += best;
            amplitudes.push(best_a);
            phases.push(best_phi);
        }
        PerFreq {
            j_value: j_total,
            amplitudes,
            phases,
        }
    });

    let mut best = 0usize;
    for (i, pf) in per_freq.iter().enumerate() {
        if pf.j_value < per_freq[best].j_value {
            best = i;
        }
    }
    let chosen = &per_freq[best];
    Ok(BruteForceTheta {
        f_hz: cfg.f_min_hz + best as f64 * freq_step,
        amplitudes: chosen.amplitudes.clone(),
        phases: chosen.phases.clone(),
        j_value: chosen.j_value,
    })
}
