//! Seeded synthetic signals with known ground truth.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::cardiac::BeatSeries;
use crate::linalg::singular_values;
use crate::recording::{rms, Recording};
use crate::{Error, Event, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    pub freq: f64,
    /// Peak amplitude, µV.
    pub amplitude: f64,
}

impl Sinusoid {
    pub const fn new(freq: f64, amplitude: f64) -> Self {
        Sinusoid { freq, amplitude }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EegSynthSpec {
    pub rate: f64,
    pub duration: f64,
    pub seed: u64,
    pub channels: usize,
    pub pink_noise_rms: f64,
    pub band_components: Vec<Sinusoid>,
    pub line_noise: Option<Sinusoid>,
}

impl Default for EegSynthSpec {
    fn default() -> Self {
        EegSynthSpec {
            rate: 125.0,
            duration: 60.0,
            seed: 0,
            channels: 16,
            pink_noise_rms: 5.0,
            band_components: Vec::new(),
            line_noise: None,
        }
    }
}

impl EegSynthSpec {
    fn validate(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.duration > 0.0 && self.channels > 0) {
            return Err(Error::Config("rate, duration and channels must be positive".into()));
        }
        let nyquist = self.rate / 2.0;
        for s in self.band_components.iter().chain(&self.line_noise) {
            if s.amplitude < 0.0 || !(s.freq > 0.0 && s.freq < nyquist) {
                return Err(Error::Config(format!(
                    "component {} Hz / {} µV outside (0, {nyquist}) Hz or negative",
                    s.freq, s.amplitude
                )));
            }
        }
        if self.pink_noise_rms < 0.0 {
            return Err(Error::Config("pink noise RMS must be ≥ 0".into()));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        (self.duration * self.rate).round() as usize
    }

    /// Expected per-channel RMS: noise, sinusoids and line noise add in power.
    pub fn predicted_rms(&self) -> f64 {
        let sines: f64 = self
            .band_components
            .iter()
            .chain(&self.line_noise)
            .map(|s| s.amplitude * s.amplitude / 2.0)
            .sum();
        (self.pink_noise_rms.powi(2) + sines).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EegTruth {
    pub components: Vec<Sinusoid>,
    pub line_noise: Option<Sinusoid>,
    pub pink_noise_rms: f64,
    pub predicted_rms: f64,
}

/// Noise with a 1/f power spectrum from random-phase spectral synthesis,
/// scaled to exactly `target_rms`.
pub fn pink_noise<R: Rng>(n: usize, target_rms: f64, rng: &mut R) -> Vec<f64> {
    if n < 2 || target_rms == 0.0 {
        return vec![0.0; n];
    }
    let mut spec = vec![Complex::new(0.0, 0.0); n];
    for k in 1..=n / 2 {
        let amp = 1.0 / (k as f64).sqrt();
        let phase = rng.random::<f64>() * 2.0 * PI;
        spec[k] = Complex::from_polar(amp, phase);
        if k != n - k {
            spec[n - k] = spec[k].conj();
        } else {
            spec[k] = Complex::new(amp, 0.0);
        }
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut spec);
    let x: Vec<f64> = spec.iter().map(|c| c.re).collect();
    let scale = target_rms / rms(&x);
    x.iter().map(|v| v * scale).collect()
}

fn add_sinusoid(x: &mut [f64], s: &Sinusoid, phase: f64, rate: f64) {
    for (i, v) in x.iter_mut().enumerate() {
        *v += s.amplitude * (2.0 * PI * s.freq * i as f64 / rate + phase).sin();
    }
}

/// Pink noise plus sinusoidal components and optional line noise, one
/// independent noise draw and phase set per channel.
pub fn gen_eeg(spec: &EegSynthSpec) -> Result<(Recording, EegTruth)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let n = spec.n_samples();
    let data = (0..spec.channels)
        .map(|_| {
            let mut x = pink_noise(n, spec.pink_noise_rms, &mut rng);
            for s in spec.band_components.iter().chain(&spec.line_noise) {
                let phase = rng.random::<f64>() * 2.0 * PI;
                add_sinusoid(&mut x, s, phase, spec.rate);
            }
            x
        })
        .collect();
    let truth = EegTruth {
        components: spec.band_components.clone(),
        line_noise: spec.line_noise,
        pink_noise_rms: spec.pink_noise_rms,
        predicted_rms: spec.predicted_rms(),
    };
    Ok((Recording::with_default_labels(spec.rate, data)?, truth))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EcgSynthSpec {
    pub rate: f64,
    pub duration: f64,
    pub bpm: f64,
    pub r_amplitude: f64,
    /// Standard deviation of each beat's displacement from the regular grid.
    pub rr_jitter_ms: f64,
    /// Standard deviation of the Gaussian R wave.
    pub width_ms: f64,
    pub seed: u64,
}

impl Default for EcgSynthSpec {
    fn default() -> Self {
        EcgSynthSpec {
            rate: 1000.0,
            duration: 60.0,
            bpm: 60.0,
            r_amplitude: 1.0,
            rr_jitter_ms: 0.0,
            width_ms: 20.0,
            seed: 0,
        }
    }
}

/// Gaussian R waves at `60/bpm` spacing (first beat half a period in), each
/// displaced by independent N(0, jitter). Returns the planted beat times.
pub fn gen_ecg(spec: &EcgSynthSpec) -> Result<(Recording, BeatSeries)> {
    if !(30.0..=220.0).contains(&spec.bpm) {
        return Err(Error::Config(format!("bpm {} outside [30, 220]", spec.bpm)));
    }
    if spec.rr_jitter_ms < 0.0 || !(spec.width_ms > 0.0) || !(spec.rate > 0.0 && spec.duration > 0.0) {
        return Err(Error::Config("jitter must be ≥ 0; width, rate and duration > 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let jitter = Normal::new(0.0, spec.rr_jitter_ms / 1000.0).map_err(|e| Error::Config(e.to_string()))?;
    let period = 60.0 / spec.bpm;
    let mut beat_times = Vec::new();
    let mut k = 0;
    loop {
        let nominal = (k as f64 + 0.5) * period;
        if nominal >= spec.duration {
            break;
        }
        let t = nominal + jitter.sample(&mut rng);
        if (0.0..spec.duration).contains(&t) && beat_times.last().is_none_or(|&prev| t > prev) {
            beat_times.push(t);
        }
        k += 1;
    }

    let n = (spec.duration * spec.rate).round() as usize;
    let sigma = spec.width_ms / 1000.0;
    let reach = (5.0 * sigma * spec.rate).ceil() as i64;
    let mut x = vec![0.0; n];
    for &t in &beat_times {
        let center = (t * spec.rate).round() as i64;
        for i in (center - reach).max(0)..(center + reach + 1).min(n as i64) {
            let dt = i as f64 / spec.rate - t;
            x[i as usize] += spec.r_amplitude * (-0.5 * (dt / sigma).powi(2)).exp();
        }
    }
    let rec = Recording::new(spec.rate, vec!["ecg".into()], vec![x])?;
    Ok((rec, BeatSeries { beat_times, rate: spec.rate }))
}

#[derive(Debug, Clone)]
pub struct Mixture {
    pub recording: Recording,
    /// `channels × sources`, as applied.
    pub mixing: DMatrix<f64>,
}

/// `channels = mixing · sources + noise`. `mixing` must have full column rank.
pub fn mix_sources(
    sources: &[Vec<f64>],
    rate: f64,
    mixing: &DMatrix<f64>,
    noise_rms: f64,
    seed: u64,
) -> Result<Mixture> {
    if sources.is_empty() || mixing.ncols() != sources.len() {
        return Err(Error::Config(format!(
            "mixing has {} columns for {} sources",
            mixing.ncols(),
            sources.len()
        )));
    }
    let n = sources[0].len();
    if sources.iter().any(|s| s.len() != n) {
        return Err(Error::Data("sources differ in length".into()));
    }
    let sv = singular_values(mixing);
    if mixing.nrows() < mixing.ncols() || sv.last().copied().unwrap_or(0.0) <= 1e-10 * sv[0] {
        return Err(Error::Config("mixing matrix is singular".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, noise_rms.max(0.0)).map_err(|e| Error::Config(e.to_string()))?;
    let data = (0..mixing.nrows())
        .map(|r| {
            (0..n)
                .map(|i| {
                    let clean: f64 = (0..sources.len()).map(|c| mixing[(r, c)] * sources[c][i]).sum();
                    if noise_rms > 0.0 {
                        clean + noise.sample(&mut rng)
                    } else {
                        clean
                    }
                })
                .collect()
        })
        .collect();
    Ok(Mixture {
        recording: Recording::with_default_labels(rate, data)?,
        mixing: mixing.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BergerSpec {
    pub rate: f64,
    pub segment_s: f64,
    pub channels: usize,
    pub seed: u64,
    pub pink_noise_rms: f64,
    /// Peak amplitude of each alpha sinusoid with eyes open.
    pub alpha_open: f64,
    /// Closed/open amplitude ratio.
    pub closed_ratio: f64,
    pub alpha_freqs: Vec<f64>,
    pub line_noise: Option<Sinusoid>,
}

impl Default for BergerSpec {
    fn default() -> Self {
        BergerSpec {
            rate: 125.0,
            segment_s: 60.0,
            channels: 16,
            seed: 1,
            pink_noise_rms: 5.0,
            alpha_open: 1.5,
            closed_ratio: 3.0,
            alpha_freqs: vec![8.6, 9.6, 10.6, 11.4],
            line_noise: Some(Sinusoid::new(50.0, 2.0)),
        }
    }
}

/// An "open" segment followed by a "closed" one over the identical noise
/// background; only the alpha amplitude differs.
pub fn berger_session(spec: &BergerSpec) -> Result<(Recording, Vec<Event>)> {
    let base = EegSynthSpec {
        rate: spec.rate,
        duration: spec.segment_s,
        seed: spec.seed,
        channels: spec.channels,
        pink_noise_rms: spec.pink_noise_rms,
        band_components: Vec::new(),
        line_noise: spec.line_noise,
    };
    let (background, _) = gen_eeg(&base)?;
    let n = background.n_samples();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0xA1FA);
    let phases: Vec<Vec<f64>> = (0..spec.channels)
        .map(|_| spec.alpha_freqs.iter().map(|_| rng.random::<f64>() * 2.0 * PI).collect())
        .collect();

    let data = background
        .data
        .iter()
        .zip(&phases)
        .map(|(noise, ph)| {
            let mut open = noise.clone();
            let mut closed = noise.clone();
            for (&f, &p) in spec.alpha_freqs.iter().zip(ph) {
                add_sinusoid(&mut open, &Sinusoid::new(f, spec.alpha_open), p, spec.rate);
                add_sinusoid(
                    &mut closed,
                    &Sinusoid::new(f, spec.alpha_open * spec.closed_ratio),
                    p,
                    spec.rate,
                );
            }
            open.extend(closed);
            open
        })
        .collect();
    let rec = Recording::with_default_labels(spec.rate, data)?;
    let seg = n as f64 / spec.rate;
    let events = vec![Event::new("open", 0.0, seg), Event::new("closed", seg, 2.0 * seg)];
    Ok((rec, events))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EcgInEegSpec {
    pub eeg: EegSynthSpec,
    pub bpm: f64,
    pub rr_jitter_ms: f64,
    /// ECG RMS relative to the EEG RMS, in dB of amplitude.
    pub relative_db: f64,
}

impl Default for EcgInEegSpec {
    fn default() -> Self {
        EcgInEegSpec {
            eeg: EegSynthSpec { channels: 8, ..Default::default() },
            bpm: 70.0,
            rr_jitter_ms: 30.0,
            relative_db: -10.0,
        }
    }
}

/// EEG channels each carrying the same ECG trace with a random signed gain
/// in ±[0.5, 1.5]; returns the planted beats.
pub fn gen_ecg_in_eeg(spec: &EcgInEegSpec) -> Result<(Recording, BeatSeries)> {
    let (eeg, truth) = gen_eeg(&spec.eeg)?;
    let (ecg, beats) = gen_ecg(&EcgSynthSpec {
        rate: spec.eeg.rate,
        duration: spec.eeg.duration,
        bpm: spec.bpm,
        r_amplitude: 1.0,
        rr_jitter_ms: spec.rr_jitter_ms,
        seed: spec.eeg.seed.wrapping_add(1),
        ..Default::default()
    })?;
    let ecg_rms = rms(&ecg.data[0]);
    if ecg_rms == 0.0 {
        return Err(Error::Config("ECG trace is empty".into()));
    }
    let scale = 10f64.powf(spec.relative_db / 20.0) * truth.predicted_rms / ecg_rms;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.eeg.seed.wrapping_add(2));
    let data = eeg
        .data
        .iter()
        .map(|row| {
            let gain = rng.random_range(0.5..1.5) * if rng.random::<bool>() { 1.0 } else { -1.0 };
            row.iter().zip(&ecg.data[0]).map(|(e, c)| e + gain * scale * c).collect()
        })
        .collect();
    Ok((eeg.with_data(data), beats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{welch_psd, WelchParams};

    #[test]
    fn zero_amplitudes_give_zeros() {
        let spec = EegSynthSpec {
            pink_noise_rms: 0.0,
            band_components: vec![Sinusoid::new(10.0, 0.0)],
            duration: 2.0,
            ..Default::default()
        };
        let (rec, _) = gen_eeg(&spec).unwrap();
        assert!(rec.data.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_per_seed() {
        let spec = EegSynthSpec {
            seed: 42,
            duration: 5.0,
            band_components: vec![Sinusoid::new(10.0, 3.0)],
            ..Default::default()
        };
        assert_eq!(gen_eeg(&spec).unwrap(), gen_eeg(&spec).unwrap());
        let other = EegSynthSpec { seed: 43, ..spec.clone() };
        assert_ne!(gen_eeg(&spec).unwrap().0, gen_eeg(&other).unwrap().0);
    }

    #[test]
    fn sine_power_shows_in_psd() {
        let a = 4.0;
        let spec = EegSynthSpec {
            pink_noise_rms: 0.0,
            channels: 1,
            band_components: vec![Sinusoid::new(10.0, a)],
            ..Default::default()
        };
        let (rec, _) = gen_eeg(&spec).unwrap();
        let psd = welch_psd(&rec.data[0], 125.0, &WelchParams::default()).unwrap();
        let df = psd.bin_width();
        let around: f64 = psd
            .freqs
            .iter()
            .zip(&psd.power[0])
            .filter(|(&f, _)| (f - 10.0).abs() < 2.0)
            .map(|(_, p)| p * df)
            .sum();
        assert!((around / (a * a / 2.0) - 1.0).abs() < 0.02, "{around}");
    }

    #[test]
    fn energy_bookkeeping() {
        let spec = EegSynthSpec {
            seed: 7,
            channels: 4,
            pink_noise_rms: 6.0,
            band_components: vec![Sinusoid::new(6.0, 2.0), Sinusoid::new(10.0, 5.0)],
            line_noise: Some(Sinusoid::new(50.0, 3.0)),
            ..Default::default()
        };
        let (rec, truth) = gen_eeg(&spec).unwrap();
        for row in &rec.data {
            assert!((rms(row) / truth.predicted_rms - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn pink_spectrum_slope() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = pink_noise(125 * 120, 5.0, &mut rng);
        let psd = welch_psd(&x, 125.0, &WelchParams::default()).unwrap();
        // power ∝ 1/f: 4 Hz vs 32 Hz should be ~8x
        let at = |f: f64| psd.power[0][(f / psd.bin_width()).round() as usize];
        let ratio = at(4.0) / at(32.0);
        assert!((ratio / 8.0).ln().abs() < 0.5, "{ratio}");
    }

    #[test]
    fn ecg_beat_grid() {
        let spec = EcgSynthSpec { duration: 10.0, ..Default::default() };
        let (rec, beats) = gen_ecg(&spec).unwrap();
        assert!(beats.len() == 10 || beats.len() == 11);
        for w in beats.beat_times.windows(2) {
            assert!((w[1] - w[0] - 1.0).abs() < 1e-12);
        }
        let peak = (beats.beat_times[3] * 1000.0).round() as usize;
        assert!((rec.data[0][peak] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ecg_jitter_statistics() {
        let spec = EcgSynthSpec {
            duration: 3000.0,
            rate: 100.0,
            rr_jitter_ms: 20.0,
            seed: 5,
            ..Default::default()
        };
        let (_, beats) = gen_ecg(&spec).unwrap();
        let rr: Vec<f64> = beats.beat_times.windows(2).map(|w| (w[1] - w[0]) * 1000.0).collect();
        let m = rr.iter().sum::<f64>() / rr.len() as f64;
        let sd = (rr.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (rr.len() - 1) as f64).sqrt();
        let expected = 2f64.sqrt() * 20.0;
        assert!((sd / expected - 1.0).abs() < 0.05, "{sd}");
    }

    #[test]
    fn flat_ecg_keeps_truth() {
        let spec = EcgSynthSpec { r_amplitude: 0.0, duration: 5.0, ..Default::default() };
        let (rec, beats) = gen_ecg(&spec).unwrap();
        assert!(rec.data[0].iter().all(|&v| v == 0.0));
        assert_eq!(beats.len(), 5);
        assert!(gen_ecg(&EcgSynthSpec { bpm: 10.0, ..Default::default() }).is_err());
    }

    #[test]
    fn identity_and_rotation_mixing() {
        let rate = 125.0;
        let n = 1250;
        let s1: Vec<f64> = (0..n).map(|i| (2.0 * PI * 5.0 * i as f64 / rate).sin()).collect();
        let s2: Vec<f64> = (0..n).map(|i| (2.0 * PI * 20.0 * i as f64 / rate).sin()).collect();
        let id = mix_sources(&[s1.clone(), s2.clone()], rate, &DMatrix::identity(2, 2), 0.0, 0).unwrap();
        assert_eq!(id.recording.data, vec![s1.clone(), s2.clone()]);

        let c = std::f64::consts::FRAC_1_SQRT_2;
        let rot = DMatrix::from_row_slice(2, 2, &[c, -c, c, c]);
        let mixed = mix_sources(&[s1.clone(), s2.clone()], rate, &rot, 0.0, 0).unwrap();
        // amplitude of each frequency in channel 0 by projection
        let amp = |x: &[f64], s: &[f64]| {
            2.0 * x.iter().zip(s).map(|(a, b)| a * b).sum::<f64>() / n as f64
        };
        for ch in &mixed.recording.data {
            for s in [&s1, &s2] {
                let db = 20.0 * amp(ch, s).abs().log10();
                assert!((db + 3.01).abs() < 0.05, "{db}");
            }
        }

        let singular = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(mix_sources(&[s1, s2], rate, &singular, 0.0, 0).is_err());
    }

    #[test]
    fn berger_segments_share_noise() {
        let spec = BergerSpec { segment_s: 10.0, channels: 2, ..Default::default() };
        let (rec, events) = berger_session(&spec).unwrap();
        assert_eq!(rec.n_samples(), 2500);
        assert_eq!(events[1], Event::new("closed", 10.0, 20.0));
        // closed - open = 2 * open alpha, so closed - 3*open is -2 * noise
        let d: Vec<f64> = (0..1250).map(|i| rec.data[0][1250 + i] - rec.data[0][i]).collect();
        assert!(rms(&d) > 0.0);
    }
}
