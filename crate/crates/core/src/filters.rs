//! Baseline correction, sinusoidal line-noise removal and windowed-sinc FIR
//! filtering with group-delay compensation.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::recording::{mean, Recording};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Highpass,
    Lowpass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    Hann,
    Hamming,
}

impl Window {
    /// Symmetric window of `order + 1` points.
    pub fn coefficients(self, order: usize) -> Vec<f64> {
        let a = match self {
            Window::Hann => 0.5,
            Window::Hamming => 0.54,
        };
        if order == 0 {
            return vec![1.0];
        }
        (0..=order)
            .map(|k| a - (1.0 - a) * (2.0 * PI * k as f64 / order as f64).cos())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FirSpec {
    pub kind: FilterKind,
    pub cutoff: f64,
    pub order: usize,
    pub window: Window,
}

impl FirSpec {
    pub fn highpass(cutoff: f64, order: usize) -> Self {
        FirSpec {
            kind: FilterKind::Highpass,
            cutoff,
            order,
            window: Window::Hann,
        }
    }

    pub fn lowpass(cutoff: f64, order: usize) -> Self {
        FirSpec {
            kind: FilterKind::Lowpass,
            cutoff,
            order,
            window: Window::Hann,
        }
    }

    pub fn validate(&self, rate: f64) -> Result<()> {
        let nyquist = rate / 2.0;
        if !(self.cutoff > 0.0) {
            return Err(Error::Config(format!("cutoff must be positive, got {} Hz", self.cutoff)));
        }
        if self.cutoff >= nyquist {
            return Err(Error::Config(format!(
                "cutoff ≥ Nyquist: {} Hz at {rate} Hz sampling (Nyquist {nyquist} Hz)",
                self.cutoff
            )));
        }
        if self.order == 0 || self.order % 2 != 0 {
            return Err(Error::Config(format!("filter order must be even and positive, got {}", self.order)));
        }
        Ok(())
    }
}

/// Symmetric (linear-phase) FIR filter with an odd number of taps.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    pub taps: Vec<f64>,
    /// `order / 2` samples.
    pub group_delay: usize,
}

impl FirFilter {
    pub fn order(&self) -> usize {
        self.taps.len() - 1
    }

    pub fn dc_gain(&self) -> f64 {
        self.taps.iter().sum()
    }

    /// `|Σ h[k] e^{-iωk}|` at `freq` Hz.
    pub fn magnitude(&self, freq: f64, rate: f64) -> f64 {
        let w = 2.0 * PI * freq / rate;
        let (re, im) = self
            .taps
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(re, im), (k, h)| {
                (re + h * (w * k as f64).cos(), im - h * (w * k as f64).sin())
            });
        re.hypot(im)
    }

    /// Samples at each end of a filtered segment influenced by zero padding.
    pub fn edge_samples(&self) -> usize {
        self.group_delay
    }
}

fn sinc_lowpass(cutoff: f64, order: usize, window: Window, rate: f64) -> Vec<f64> {
    let fc = cutoff / rate;
    let m = order / 2;
    let w = window.coefficients(order);
    let mut taps = vec![0.0; order + 1];
    for k in 0..=m {
        let x = k as f64 - m as f64;
        let ideal = if k == m {
            2.0 * fc
        } else {
            (2.0 * PI * fc * x).sin() / (PI * x)
        };
        taps[k] = ideal * w[k];
        taps[order - k] = taps[k];
    }
    let sum: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= sum);
    taps
}

/// Windowed-sinc design; highpass by spectral inversion of the lowpass.
pub fn design_fir(spec: &FirSpec, rate: f64) -> Result<FirFilter> {
    spec.validate(rate)?;
    let mut taps = sinc_lowpass(spec.cutoff, spec.order, spec.window, rate);
    let m = spec.order / 2;
    if spec.kind == FilterKind::Highpass {
        taps.iter_mut().for_each(|t| *t = -*t);
        taps[m] += 1.0;
    }
    Ok(FirFilter { taps, group_delay: m })
}

/// Band-pass as the difference of two windowed-sinc lowpasses.
pub fn design_bandpass(lo: f64, hi: f64, order: usize, window: Window, rate: f64) -> Result<FirFilter> {
    if !(lo < hi) {
        return Err(Error::Config(format!("band-pass edges must satisfy lo < hi ({lo}, {hi})")));
    }
    FirSpec { kind: FilterKind::Lowpass, cutoff: lo, order, window }.validate(rate)?;
    FirSpec { kind: FilterKind::Lowpass, cutoff: hi, order, window }.validate(rate)?;
    let low = sinc_lowpass(lo, order, window, rate);
    let high = sinc_lowpass(hi, order, window, rate);
    let taps = high.iter().zip(&low).map(|(h, l)| h - l).collect();
    Ok(FirFilter { taps, group_delay: order / 2 })
}

/// Convolution shifted left by the group delay; zero padding at both ends.
pub fn filter_zero_phase(x: &[f64], filter: &FirFilter) -> Result<Vec<f64>> {
    let taps = filter.taps.len();
    if x.len() <= taps {
        return Err(Error::TooShort {
            actual: x.len(),
            minimum: taps + 1,
        });
    }
    let m = filter.group_delay;
    let n = x.len();
    let out = (0..n)
        .map(|i| {
            // y[i] = Σ_k h[k] x[i + m - k]
            let hi = (i + m).min(taps - 1);
            let lo = (i + m + 1).saturating_sub(n);
            (lo..=hi).map(|k| filter.taps[k] * x[i + m - k]).sum()
        })
        .collect();
    Ok(out)
}

pub fn apply_zero_phase(rec: &Recording, filter: &FirFilter) -> Result<Recording> {
    let data = rec
        .data
        .iter()
        .map(|row| filter_zero_phase(row, filter))
        .collect::<Result<_>>()?;
    Ok(rec.with_data(data))
}

/// Subtracts each channel's mean.
pub fn baseline_correct(rec: &Recording) -> Result<Recording> {
    if rec.n_samples() == 0 {
        return Err(Error::Data("baseline correction needs at least one sample".into()));
    }
    Ok(rec.map_channels(|row| {
        let mut out: Vec<f64> = row.iter().map(|v| v - mean(row)).collect();
        // second pass removes the rounding residue of the first
        let residue = mean(&out);
        out.iter_mut().for_each(|v| *v -= residue);
        out
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineNoiseParams {
    pub f0: f64,
    pub win_s: f64,
    pub step_s: f64,
    /// Number of multiples of `f0` fitted (those below Nyquist).
    pub harmonics: usize,
}

impl Default for LineNoiseParams {
    fn default() -> Self {
        LineNoiseParams {
            f0: 50.0,
            win_s: 4.0,
            step_s: 1.0,
            harmonics: 1,
        }
    }
}

fn window_starts(n: usize, win: usize, step: usize) -> Vec<usize> {
    if win >= n {
        return vec![0];
    }
    let mut starts: Vec<usize> = (0..).map(|k| k * step).take_while(|&s| s + win < n).collect();
    starts.push(n - win);
    starts.dedup();
    starts
}

/// Least-squares sinusoid fit of the line frequencies on `x[start..start+len]`.
fn fit_sinusoids(x: &[f64], start: usize, len: usize, freqs: &[f64], rate: f64) -> Vec<f64> {
    let cols = 2 * freqs.len();
    let basis = DMatrix::from_fn(len, cols, |i, j| {
        let phase = 2.0 * PI * freqs[j / 2] * (start + i) as f64 / rate;
        if j % 2 == 0 {
            phase.sin()
        } else {
            phase.cos()
        }
    });
    let y = DVector::from_column_slice(&x[start..start + len]);
    let gram = basis.transpose() * &basis;
    match gram.lu().solve(&(basis.transpose() * y)) {
        Some(coef) => (basis * coef).iter().copied().collect(),
        None => vec![0.0; len],
    }
}

fn line_noise_estimate(x: &[f64], rate: f64, freqs: &[f64], win: usize, step: usize) -> Vec<f64> {
    let n = x.len();
    if freqs.is_empty() || n == 0 {
        return vec![0.0; n];
    }
    let win = win.clamp(1, n);
    let taper: Vec<f64> = (0..win)
        .map(|k| (PI * (k as f64 + 0.5) / win as f64).sin().powi(2))
        .collect();
    let mut acc = vec![0.0; n];
    let mut weight = vec![0.0; n];
    for start in window_starts(n, win, step.max(1)) {
        let fit = fit_sinusoids(x, start, win, freqs, rate);
        for (k, f) in fit.iter().enumerate() {
            acc[start + k] += taper[k] * f;
            weight[start + k] += taper[k];
        }
    }
    acc.iter().zip(&weight).map(|(a, w)| a / w).collect()
}

/// Removes the line frequency (and optional harmonics) by sliding-window
/// sinusoid regression, cross-fading overlapping window fits.
pub fn remove_line_noise(rec: &Recording, params: &LineNoiseParams) -> Result<Recording> {
    let nyquist = rec.rate / 2.0;
    if !(params.f0 > 0.0 && params.f0 < nyquist) {
        return Err(Error::Config(format!(
            "line frequency {} Hz must lie in (0, {nyquist}) Hz",
            params.f0
        )));
    }
    if !(params.win_s > 0.0 && params.step_s > 0.0) {
        return Err(Error::Config("line-noise window and step must be positive".into()));
    }
    let freqs: Vec<f64> = (1..=params.harmonics.max(1))
        .map(|h| h as f64 * params.f0)
        .filter(|&f| f < nyquist)
        .collect();
    let win = (params.win_s * rec.rate).round() as usize;
    let step = (params.step_s * rec.rate).round() as usize;
    Ok(rec.map_channels(|row| {
        let est = line_noise_estimate(row, rec.rate, &freqs, win, step);
        row.iter().zip(&est).map(|(x, e)| x - e).collect()
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recording::rms;

    fn one(rate: f64, x: Vec<f64>) -> Recording {
        Recording::with_default_labels(rate, vec![x]).unwrap()
    }

    fn sine(f: f64, amp: f64, rate: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| amp * (2.0 * PI * f * i as f64 / rate).sin()).collect()
    }

    /// DFT-sum oracle kept separate from `FirFilter::magnitude`.
    fn dft_gain_db(taps: &[f64], f: f64, rate: f64) -> f64 {
        let mut re = 0.0;
        let mut im = 0.0;
        for (k, &h) in taps.iter().enumerate() {
            let ang = -2.0 * PI * f / rate * k as f64;
            re += h * ang.cos();
            im += h * ang.sin();
        }
        20.0 * (re * re + im * im).sqrt().log10()
    }

    #[test]
    fn constant_channel_goes_to_zero() {
        let out = baseline_correct(&one(125.0, vec![7.3; 100])).unwrap();
        assert!(out.data[0].iter().all(|v| v.abs() < 1e-12));
        assert!(baseline_correct(&one(125.0, vec![])).is_err());
    }

    #[test]
    fn offset_sine_loses_offset() {
        let s = sine(3.0, 2.0, 125.0, 1250);
        let shifted: Vec<f64> = s.iter().map(|v| v + 5.0).collect();
        let out = baseline_correct(&one(125.0, shifted)).unwrap();
        // 3 Hz over 10 s is a whole number of cycles: the sine itself has zero mean
        for (a, b) in out.data[0].iter().zip(&s) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn window_shapes() {
        let hann = Window::Hann.coefficients(4);
        assert_eq!(hann[0], 0.0);
        assert!((hann[2] - 1.0).abs() < 1e-15);
        let hamming = Window::Hamming.coefficients(4);
        assert!((hamming[0] - 0.08).abs() < 1e-15);
    }

    #[test]
    fn design_dc_gains_and_symmetry() {
        let lp = design_fir(&FirSpec::lowpass(45.0, 100), 125.0).unwrap();
        assert_eq!(lp.taps.len(), 101);
        assert_eq!(lp.group_delay, 50);
        assert!((lp.dc_gain() - 1.0).abs() < 1e-6);
        let hp = design_fir(&FirSpec::highpass(1.0, 500), 125.0).unwrap();
        assert!(hp.dc_gain().abs() < 1e-6);
        for f in [&lp, &hp] {
            let n = f.taps.len() - 1;
            for k in 0..=n {
                assert!((f.taps[k] - f.taps[n - k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn half_amplitude_at_cutoff() {
        for (spec, rate) in [
            (FirSpec::lowpass(45.0, 100), 125.0),
            (FirSpec::highpass(1.0, 500), 125.0),
            (FirSpec { window: Window::Hamming, ..FirSpec::lowpass(20.0, 64) }, 250.0),
        ] {
            let f = design_fir(&spec, rate).unwrap();
            let db = dft_gain_db(&f.taps, spec.cutoff, rate);
            assert!((db + 6.02).abs() < 0.5, "{spec:?}: {db} dB");
            let via_impl = 20.0 * f.magnitude(spec.cutoff, rate).log10();
            assert!((db - via_impl).abs() < 1e-9);
        }
    }

    #[test]
    fn design_rejects_bad_specs() {
        let err = design_fir(&FirSpec::highpass(100.0, 500), 125.0).unwrap_err();
        assert!(err.to_string().contains("cutoff ≥ Nyquist"));
        assert!(design_fir(&FirSpec::lowpass(10.0, 51), 125.0).is_err());
        assert!(design_fir(&FirSpec::lowpass(0.0, 50), 125.0).is_err());
    }

    #[test]
    fn impulse_returns_centered_taps() {
        let f = design_fir(&FirSpec::lowpass(20.0, 20), 125.0).unwrap();
        let mut x = vec![0.0; 100];
        x[40] = 1.0;
        let y = filter_zero_phase(&x, &f).unwrap();
        for (k, &t) in f.taps.iter().enumerate() {
            assert!((y[40 - 10 + k] - t).abs() < 1e-15);
        }
        assert!(y[..30].iter().chain(&y[51..]).all(|v| *v == 0.0));
    }

    #[test]
    fn too_short_names_minimum() {
        let f = design_fir(&FirSpec::lowpass(20.0, 20), 125.0).unwrap();
        match filter_zero_phase(&[0.0; 21], &f) {
            Err(Error::TooShort { minimum, .. }) => assert_eq!(minimum, 22),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lowpass_kills_60_hz() {
        let f = design_fir(&FirSpec::lowpass(45.0, 100), 125.0).unwrap();
        assert!(dft_gain_db(&f.taps, 60.0, 125.0) < -20.0);
        let x = sine(60.0, 1.0, 125.0, 2500);
        let y = filter_zero_phase(&x, &f).unwrap();
        let inner = 100..2400;
        let ratio = rms(&y[inner.clone()]) / rms(&x[inner]);
        assert!(20.0 * ratio.log10() <= -20.0);
    }

    #[test]
    fn highpass_passes_10_hz() {
        let f = design_fir(&FirSpec::highpass(1.0, 500), 125.0).unwrap();
        let x = sine(10.0, 1.0, 125.0, 5000);
        let y = filter_zero_phase(&x, &f).unwrap();
        let inner = 300..4700;
        let db = 20.0 * (rms(&y[inner.clone()]) / rms(&x[inner])).log10();
        assert!(db.abs() < 0.5, "{db}");
    }

    #[test]
    fn line_noise_removed() {
        let rate = 125.0;
        let x = sine(50.0, 10.0, rate, 2500);
        let rec = one(rate, x.clone());
        let out = remove_line_noise(&rec, &LineNoiseParams::default()).unwrap();
        // power at f0 via a direct DFT bin
        let power_at = |v: &[f64]| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, s) in v.iter().enumerate() {
                let a = 2.0 * PI * 50.0 * i as f64 / rate;
                re += s * a.cos();
                im += s * a.sin();
            }
            re * re + im * im
        };
        let drop_db = 10.0 * (power_at(&x) / power_at(&out.data[0])).log10();
        assert!(drop_db >= 30.0, "{drop_db}");
    }

    #[test]
    fn line_noise_keeps_other_content() {
        let zero = one(125.0, vec![0.0; 1000]);
        assert_eq!(remove_line_noise(&zero, &LineNoiseParams::default()).unwrap(), zero);

        let x = sine(10.0, 5.0, 125.0, 3000);
        let out = remove_line_noise(&one(125.0, x.clone()), &LineNoiseParams::default()).unwrap();
        let change = (rms(&out.data[0]) - rms(&x)).abs() / rms(&x);
        assert!(change < 0.01, "{change}");
    }

    #[test]
    fn short_segment_uses_single_fit() {
        let x = sine(50.0, 3.0, 125.0, 200);
        let out = remove_line_noise(&one(125.0, x), &LineNoiseParams::default()).unwrap();
        assert!(rms(&out.data[0]) < 1e-9);
    }

    #[test]
    fn harmonics_above_nyquist_are_skipped() {
        let params = LineNoiseParams { harmonics: 3, ..Default::default() };
        let x = sine(50.0, 1.0, 125.0, 1000);
        let out = remove_line_noise(&one(125.0, x), &params).unwrap();
        assert!(rms(&out.data[0]) < 1e-9);
        let bad = LineNoiseParams { f0: 70.0, ..Default::default() };
        assert!(remove_line_noise(&one(125.0, vec![0.0; 10]), &bad).is_err());
    }
}
