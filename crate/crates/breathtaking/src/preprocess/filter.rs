//! Chebyshev Type-I high-pass filter design and causal IIR application.
//!
//! The design path is the classical analog-prototype route: place the
//! prototype poles on the left-half-plane ellipse, transform lowpass to
//! highpass at the pre-warped edge frequency, then map to the z-plane with
//! the bilinear transform. Coefficients come out in transfer-function form
//! `H(z) = B(z^-1) / A(z^-1)` with `a[0] = 1`.

use num_complex::Complex64;
use std::f64::consts::PI;

use super::PreprocessError;

/// Design parameters for the DC-removal high-pass filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    /// Filter order (number of poles).
    pub order: usize,
    /// Maximum passband ripple in dB.
    pub passband_ripple_db: f64,
    /// Passband edge frequency in Hz.
    pub passband_edge_hz: f64,
    /// Sample rate of the signal the filter will run at, in Hz.
    pub sample_rate_hz: f64,
}

impl FilterSpec {
    /// The pipeline default: 7th order, 0.1 dB ripple, edge at the low end
    /// of the breathing band.
    pub fn new(sample_rate_hz: f64) -> Self {
        Self {
            order: 7,
            passband_ripple_db: 0.1,
            passband_edge_hz: 0.167,
            sample_rate_hz,
        }
    }

    pub fn validate(&self) -> Result<(), PreprocessError> {
        if self.order < 1 {
            return Err(PreprocessError::InvalidFilterSpec(
                "order must be at least 1".into(),
            ));
        }
        if !(self.passband_ripple_db > 0.0) {
            return Err(PreprocessError::InvalidFilterSpec(format!(
                "passband ripple must be positive, got {}",
                self.passband_ripple_db
            )));
        }
        if !(self.sample_rate_hz > 0.0) {
            return Err(PreprocessError::InvalidFilterSpec(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        let nyquist = self.sample_rate_hz / 2.0;
        if !(self.passband_edge_hz > 0.0 && self.passband_edge_hz < nyquist) {
            return Err(PreprocessError::InvalidFilterSpec(format!(
                "passband edge {} Hz must lie in (0, {}) Hz",
                self.passband_edge_hz, nyquist
            )));
        }
        Ok(())
    }

    /// Number of leading output samples treated as filter transient:
    /// `ceil(5 / passband_edge / T_s)`.
    pub fn transient_len(&self) -> usize {
        (5.0 * self.sample_rate_hz / self.passband_edge_hz).ceil() as usize
    }
}

/// Digital IIR filter in transfer-function form; `denominator[0] == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCoefficients {
    numerator: Vec<f64>,
    denominator: Vec<f64>,
    sample_rate_hz: f64,
}

impl FilterCoefficients {
    pub fn numerator(&self) -> &[f64] {
        &self.numerator
    }

    pub fn denominator(&self) -> &[f64] {
        &self.denominator
    }

    pub fn order(&self) -> usize {
        self.denominator.len() - 1
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz
    }

    /// Complex frequency response `H(e^{j 2 pi f / fs})`.
    pub fn response_at(&self, freq_hz: f64) -> Complex64 {
        let omega = 2.0 * PI * freq_hz / self.sample_rate_hz;
        let z_inv = Complex64::from_polar(1.0, -omega);
        let eval = |coeffs: &[f64]| {
            // Horner in z^-1, highest delay first.
            coeffs
                .iter()
                .rev()
                .fold(Complex64::new(0.0, 0.0), |acc, &c| acc * z_inv + c)
        };
        eval(&self.numerator) / eval(&self.denominator)
    }

    /// Magnitude response in dB; floors at -600 dB so an exact null stays finite.
    pub fn gain_db_at(&self, freq_hz: f64) -> f64 {
        let mag = self.response_at(freq_hz).norm();
        20.0 * mag.max(1e-30).log10()
    }

    /// True when every denominator root lies strictly inside the unit circle.
    pub fn is_stable(&self) -> bool {
        polynomial_roots(&self.denominator)
            .iter()
            .all(|r| r.norm() < 1.0)
    }
}

/// Design a digital Chebyshev Type-I high-pass filter.
pub fn design_highpass(spec: &FilterSpec) -> Result<FilterCoefficients, PreprocessError> {
    spec.validate()?;

    // Analog lowpass prototype: poles on an ellipse, cutoff 1 rad/s.
    let n = spec.order;
    let eps = (10f64.powf(0.1 * spec.passband_ripple_db) - 1.0).sqrt();
    let mu = (1.0 / eps).asinh() / n as f64;
    let mut poles = Vec::with_capacity(n);
    let mut m = -(n as i64) + 1;
    while m < n as i64 {
        let theta = PI * m as f64 / (2.0 * n as f64);
        // -sinh(mu + j*theta)
        poles.push(Complex64::new(
            -mu.sinh() * theta.cos(),
            -mu.cosh() * theta.sin(),
        ));
        m += 2;
    }
    let mut gain = poles
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, p| acc * (-p))
        .re;
    if n % 2 == 0 {
        gain /= (1.0 + eps * eps).sqrt();
    }

    // Pre-warp the edge so the bilinear map lands it exactly.
    let wn = spec.passband_edge_hz / (spec.sample_rate_hz / 2.0);
    let fs2 = 2.0;
    let warped = 2.0 * fs2 * (PI * wn / fs2).tan();

    // Lowpass -> highpass: invert pole positions about the edge; the
    // prototype's zeros at infinity become `n` zeros at the origin.
    let hp_poles: Vec<Complex64> = poles.iter().map(|p| warped / p).collect();
    let hp_zeros = vec![Complex64::new(0.0, 0.0); n];
    let inv_prod = poles
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, p| acc * (-p));
    let hp_gain = gain * (Complex64::new(1.0, 0.0) / inv_prod).re;

    // Bilinear transform to the z-plane.
    let two_fs = Complex64::new(2.0 * fs2, 0.0);
    let z_digital: Vec<Complex64> = hp_zeros.iter().map(|z| (two_fs + z) / (two_fs - z)).collect();
    let p_digital: Vec<Complex64> = hp_poles.iter().map(|p| (two_fs + p) / (two_fs - p)).collect();
    let num_prod = hp_zeros
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, z| acc * (two_fs - z));
    let den_prod = hp_poles
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, p| acc * (two_fs - p));
    let k_digital = hp_gain * (num_prod / den_prod).re;

    // Expand zpk to polynomial coefficients.
    let numerator: Vec<f64> = poly_from_roots(&z_digital)
        .iter()
        .map(|c| c.re * k_digital)
        .collect();
    let denominator: Vec<f64> = poly_from_roots(&p_digital).iter().map(|c| c.re).collect();

    Ok(FilterCoefficients {
        numerator,
        denominator,
        sample_rate_hz: spec.sample_rate_hz,
    })
}

/// Run the filter causally (single forward pass, direct form II transposed).
///
/// Output has the same length as the input. The leading
/// [`FilterSpec::transient_len`] samples still carry startup transient and
/// are excluded later by window segmentation.
pub fn apply_filter(
    coeffs: &FilterCoefficients,
    signal: &[f64],
) -> Result<Vec<f64>, PreprocessError> {
    let order = coeffs.order();
    if signal.len() <= 3 * order {
        return Err(PreprocessError::TraceTooShort {
            len: signal.len(),
            min: 3 * order + 1,
        });
    }
    let b = &coeffs.numerator;
    let a = &coeffs.denominator;
    let mut state = vec![0.0f64; order];
    let mut out = Vec::with_capacity(signal.len());
    for &x in signal {
        let y = b[0] * x + state[0];
        for i in 0..order - 1 {
            state[i] = b[i + 1] * x + state[i + 1] - a[i + 1] * y;
        }
        state[order - 1] = b[order] * x - a[order] * y;
        out.push(y);
    }
    Ok(out)
}

/// Expand a monic polynomial from its roots; coefficients in descending
/// powers, leading coefficient 1.
fn poly_from_roots(roots: &[Complex64]) -> Vec<Complex64> {
    let mut coeffs = vec![Complex64::new(1.0, 0.0)];
    for &r in roots {
        coeffs.push(Complex64::new(0.0, 0.0));
        for i in (1..coeffs.len()).rev() {
            let prev = coeffs[i - 1];
            coeffs[i] = coeffs[i] - r * prev;
        }
    }
    coeffs
}

/// All complex roots of a real polynomial (descending-power coefficients)
/// via Durand-Kerner iteration. Adequate for the low orders used here.
fn polynomial_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let lead = coeffs[0];
    let monic: Vec<Complex64> = coeffs
        .iter()
        .map(|&c| Complex64::new(c / lead, 0.0))
        .collect();
    let degree = monic.len() - 1;
    if degree == 0 {
        return Vec::new();
    }
    let eval = |x: Complex64| monic.iter().fold(Complex64::new(0.0, 0.0), |acc, &c| acc * x + c);
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..degree).map(|k| seed.powu(k as u32 + 1)).collect();
    for _ in 0..200 {
        let mut max_step: f64 = 0.0;
        for k in 0..degree {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..degree {
                if j != k {
                    denom *= roots[k] - roots[j];
                }
            }
            let step = eval(roots[k]) / denom;
            roots[k] -= step;
            max_step = max_step.max(step.norm());
        }
        if max_step < 1e-13 {
            break;
        }
    }
    roots
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn default_spec() -> FilterSpec {
        FilterSpec::new(25.0 / 6.0)
    }

    /// Least-squares fit of `a*cos(2 pi f t) + b*sin(2 pi f t)` over a slice,
    /// returning the fitted amplitude. Exact for a clean sinusoid regardless
    /// of how many cycles the slice covers, so it serves as the steady-state
    /// amplitude oracle in the tests below.
    fn fitted_amplitude(signal: &[f64], freq_hz: f64, sample_period_s: f64, offset: usize) -> f64 {
        let (mut scc, mut sss, mut scs, mut syc, mut sys) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (k, &y) in signal.iter().enumerate() {
            let t = (offset + k) as f64 * sample_period_s;
            let (s, c) = (2.0 * PI * freq_hz * t).sin_cos();
            scc += c * c;
            sss += s * s;
            scs += c * s;
            syc += y * c;
            sys += y * s;
        }
        let det = scc * sss - scs * scs;
        let a = (syc * sss - sys * scs) / det;
        let b = (sys * scc - syc * scs) / det;
        (a * a + b * b).sqrt()
    }

    #[test]
    fn conformance_40db_attenuation_at_0_1_hz() {
        let coeffs = design_highpass(&default_spec()).unwrap();
        assert!(
            coeffs.gain_db_at(0.1) <= -40.0,
            "gain at 0.1 Hz = {:.2} dB",
            coeffs.gain_db_at(0.1)
        );
    }

    #[test]
    fn dc_gain_below_80_db_for_various_specs() {
        for (order, fs) in [(7, 25.0 / 6.0), (5, 10.0), (3, 4.0), (8, 25.0 / 6.0)] {
            let spec = FilterSpec {
                order,
                ..FilterSpec::new(fs)
            };
            let coeffs = design_highpass(&spec).unwrap();
            assert!(
                coeffs.gain_db_at(0.0) <= -80.0,
                "order {order} fs {fs}: DC gain {:.1} dB",
                coeffs.gain_db_at(0.0)
            );
        }
    }

    #[test]
    fn passband_deviation_within_ripple_on_dense_grid() {
        let coeffs = design_highpass(&default_spec()).unwrap();
        // 10^4-point grid over [0.167, 2.0] Hz.
        let (lo, hi, n) = (0.167, 2.0, 10_000);
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let f = lo + (hi - lo) * i as f64 / (n - 1) as f64;
            worst = worst.max(coeffs.gain_db_at(f).abs());
        }
        assert!(worst <= 0.1 + 1e-6, "max passband deviation {worst:.6} dB");
    }

    #[test]
    fn passband_flat_between_fmin_and_2fmin() {
        let coeffs = design_highpass(&default_spec()).unwrap();
        let gains: Vec<f64> = (0..200)
            .map(|i| coeffs.gain_db_at(0.167 + (0.334 - 0.167) * i as f64 / 199.0))
            .collect();
        let spread = gains.iter().cloned().fold(f64::MIN, f64::max)
            - gains.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread <= 0.1 + 1e-9, "gain spread {spread:.4} dB");
    }

    #[test]
    fn designed_filters_are_stable() {
        for order in 1..=8 {
            for fs in [25.0 / 6.0, 10.0, 50.0] {
                let spec = FilterSpec {
                    order,
                    ..FilterSpec::new(fs)
                };
                let coeffs = design_highpass(&spec).unwrap();
                assert!(coeffs.is_stable(), "order {order}, fs {fs}");
            }
        }
    }

    #[test]
    fn edge_at_or_above_nyquist_is_rejected() {
        let spec = FilterSpec {
            passband_edge_hz: 2.5,
            ..FilterSpec::new(4.0)
        };
        assert!(design_highpass(&spec).is_err());
    }

    #[test]
    fn constant_input_decays_to_zero() {
        let coeffs = design_highpass(&default_spec()).unwrap();
        let c = 37.0;
        let out = apply_filter(&coeffs, &vec![c; 1200]).unwrap();
        assert!(
            out.last().unwrap().abs() < 1e-3 * c,
            "residual {}",
            out.last().unwrap()
        );
    }

    #[test]
    fn passband_sinusoid_keeps_unit_amplitude() {
        let spec = default_spec();
        let coeffs = design_highpass(&spec).unwrap();
        let ts = 1.0 / spec.sample_rate_hz;
        let f = 0.25;
        let n = 2000;
        let x: Vec<f64> = (0..n).map(|k| (2.0 * PI * f * k as f64 * ts).cos()).collect();
        let y = apply_filter(&coeffs, &x).unwrap();
        let tail = spec.transient_len() * 3;
        let amp = fitted_amplitude(&y[tail..], f, ts, tail);
        let amp_db = 20.0 * amp.log10();
        assert!(amp_db.abs() <= 0.1 + 1e-3, "steady-state amplitude {amp_db:.4} dB");
    }

    #[test]
    fn stopband_sinusoid_matches_direct_response_evaluation() {
        let spec = default_spec();
        let coeffs = design_highpass(&spec).unwrap();
        let ts = 1.0 / spec.sample_rate_hz;
        let f = 0.05;
        let n = 4000;
        let x: Vec<f64> = (0..n).map(|k| (2.0 * PI * f * k as f64 * ts).cos()).collect();
        let y = apply_filter(&coeffs, &x).unwrap();
        let tail = 2000;
        let amp = fitted_amplitude(&y[tail..], f, ts, tail);
        assert!(amp <= 0.01, "stopband amplitude {amp}");
        let expected = coeffs.response_at(f).norm();
        assert_relative_eq!(amp, expected, max_relative = 0.05);
    }

    #[test]
    fn short_signal_is_rejected() {
        let coeffs = design_highpass(&default_spec()).unwrap();
        assert!(apply_filter(&coeffs, &[0.0; 21]).is_err());
        assert!(apply_filter(&coeffs, &[0.0; 22]).is_ok());
    }

    #[test]
    fn transient_length_matches_edge_and_rate() {
        // 5 / 0.167 Hz = 29.94 s of settling; 125 samples at 0.24 s.
        assert_eq!(default_spec().transient_len(), 125);
    }

    #[test]
    fn default_design_matches_reference_implementation() {
        // Coefficients and response values cross-checked against an
        // independent filter-design implementation for the default spec
        // (order 7, 0.1 dB ripple, 0.167 Hz edge, 25/6 Hz sample rate).
        let coeffs = design_highpass(&default_spec()).unwrap();
        let b_ref = [
            0.5026782969384879,
            -3.518748078569415,
            10.556244235708245,
            -17.593740392847074,
            17.593740392847074,
            -10.556244235708245,
            3.518748078569415,
            -0.5026782969384879,
        ];
        let a_ref = [
            1.0,
            -5.635837883559517,
            13.723489249443817,
            -18.689662798493444,
            15.354727313457454,
            -7.598986550180209,
            2.0933580971271897,
            -0.24676011586477176,
        ];
        for (got, want) in coeffs.numerator().iter().zip(&b_ref) {
            assert_relative_eq!(got, want, max_relative = 1e-9);
        }
        for (got, want) in coeffs.denominator().iter().zip(&a_ref) {
            assert_relative_eq!(got, want, max_relative = 1e-9);
        }
        assert_relative_eq!(coeffs.gain_db_at(0.1), -44.8589, epsilon = 1e-3);
        assert_relative_eq!(coeffs.gain_db_at(0.167), -0.1000, epsilon = 1e-3);
        assert_relative_eq!(coeffs.response_at(0.25).norm(), 0.9900031437, epsilon = 1e-8);
    }

    #[test]
    fn durand_kerner_finds_known_roots() {
        // (z - 0.5)(z + 0.25)(z - 0.9) expanded.
        let coeffs = [1.0, -1.15, 0.1, 0.1125];
        let mut roots: Vec<f64> = polynomial_roots(&coeffs).iter().map(|r| r.re).collect();
        roots.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_relative_eq!(roots[0], -0.25, epsilon = 1e-9);
        assert_relative_eq!(roots[1], 0.5, epsilon = 1e-9);
        assert_relative_eq!(roots[2], 0.9, epsilon = 1e-9);
    }
}
