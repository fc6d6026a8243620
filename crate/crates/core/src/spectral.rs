//! Welch power spectral density, band aggregation and quality metrics.

use std::path::Path;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::filters::Window;
use crate::recording::{rms, Recording};
use crate::{Error, Result};

/// Power floor applied before taking logs: 10^-15 µV²/Hz, i.e. -150 dB.
pub const POWER_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsdScale {
    Linear,
    Db,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdEstimate {
    pub freqs: Vec<f64>,
    /// `power[channel][bin]`, µV²/Hz or dB.
    pub power: Vec<Vec<f64>>,
    pub window_count: usize,
    pub scale: PsdScale,
}

impl PsdEstimate {
    pub fn bin_width(&self) -> f64 {
        if self.freqs.len() < 2 {
            return 0.0;
        }
        self.freqs[1] - self.freqs[0]
    }

    fn linear_power(&self) -> Vec<Vec<f64>> {
        match self.scale {
            PsdScale::Linear => self.power.clone(),
            PsdScale::Db => self
                .power
                .iter()
                .map(|row| row.iter().map(|d| 10f64.powf(d / 10.0)).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchParams {
    pub segment: usize,
    pub overlap: usize,
    pub window: Window,
}

impl Default for WelchParams {
    fn default() -> Self {
        WelchParams {
            segment: 256,
            overlap: 64,
            window: Window::Hamming,
        }
    }
}

impl WelchParams {
    pub fn validate(&self) -> Result<()> {
        if self.segment < 2 {
            return Err(Error::Config(format!("Welch segment must be ≥ 2, got {}", self.segment)));
        }
        if self.overlap >= self.segment {
            return Err(Error::Config(format!(
                "Welch overlap {} must be smaller than the segment {}",
                self.overlap, self.segment
            )));
        }
        Ok(())
    }

    pub fn hop(&self) -> usize {
        self.segment - self.overlap
    }

    /// Start offsets of the Welch windows for a signal of length `n`.
    pub fn starts(&self, n: usize) -> impl Iterator<Item = usize> {
        let (seg, hop) = (self.segment, self.hop());
        (0..).map(move |k| k * hop).take_while(move |s| s + seg <= n)
    }
}

/// One-sided frequency grid `k · rate / segment`, `k = 0..=segment/2`.
pub fn frequency_grid(rate: f64, segment: usize) -> Vec<f64> {
    (0..=segment / 2).map(|k| k as f64 * rate / segment as f64).collect()
}

struct Periodogram {
    window: Vec<f64>,
    norm: f64,
    fft: std::sync::Arc<dyn rustfft::Fft<f64>>,
}

impl Periodogram {
    fn new(params: &WelchParams, rate: f64) -> Self {
        let window = params.window.coefficients(params.segment - 1);
        let norm = rate * window.iter().map(|w| w * w).sum::<f64>();
        let fft = FftPlanner::new().plan_fft_forward(params.segment);
        Periodogram { window, norm, fft }
    }

    /// Mean-removed, windowed, one-sided periodogram of `x` (length = segment).
    fn compute(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        let mu = x.iter().sum::<f64>() / n as f64;
        let mut buf: Vec<Complex<f64>> = x
            .iter()
            .zip(&self.window)
            .map(|(v, w)| Complex::new((v - mu) * w, 0.0))
            .collect();
        self.fft.process(&mut buf);
        let half = n / 2;
        (0..=half)
            .map(|k| {
                let p = buf[k].norm_sqr() / self.norm;
                let edge = k == 0 || (n % 2 == 0 && k == half);
                if edge {
                    p
                } else {
                    2.0 * p
                }
            })
            .collect()
    }
}

/// Single modified periodogram of a segment-length signal.
pub fn modified_periodogram(x: &[f64], rate: f64, window: Window) -> Result<PsdEstimate> {
    let params = WelchParams {
        segment: x.len(),
        overlap: 0,
        window,
    };
    params.validate()?;
    Ok(PsdEstimate {
        freqs: frequency_grid(rate, x.len()),
        power: vec![Periodogram::new(&params, rate).compute(x)],
        window_count: 1,
        scale: PsdScale::Linear,
    })
}

/// Welch estimate of a single channel.
pub fn welch_psd(x: &[f64], rate: f64, params: &WelchParams) -> Result<PsdEstimate> {
    let rec = Recording::with_default_labels(rate, vec![x.to_vec()])?;
    welch_recording(&rec, params, None)
}

/// Welch estimate of every channel. Windows touching a sample where
/// `exclude[i]` is true are skipped.
pub fn welch_recording(rec: &Recording, params: &WelchParams, exclude: Option<&[bool]>) -> Result<PsdEstimate> {
    params.validate()?;
    let n = rec.n_samples();
    if n < params.segment {
        return Err(Error::TooShort {
            actual: n,
            minimum: params.segment,
        });
    }
    let starts: Vec<usize> = params
        .starts(n)
        .filter(|&s| exclude.is_none_or(|m| !m[s..s + params.segment].iter().any(|&b| b)))
        .collect();
    if starts.is_empty() {
        return Err(Error::Data("every Welch window overlaps an excluded span".into()));
    }

    let pg = Periodogram::new(params, rec.rate);
    let bins = params.segment / 2 + 1;
    let power = rec
        .data
        .iter()
        .map(|row| {
            let mut acc = vec![0.0; bins];
            for &s in &starts {
                for (a, p) in acc.iter_mut().zip(pg.compute(&row[s..s + params.segment])) {
                    *a += p;
                }
            }
            acc.iter().map(|a| a / starts.len() as f64).collect()
        })
        .collect();
    Ok(PsdEstimate {
        freqs: frequency_grid(rec.rate, params.segment),
        power,
        window_count: starts.len(),
        scale: PsdScale::Linear,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SegmentAveraging {
    /// Each segment's PSD counts once.
    PerSegmentMean,
    /// Segments weighted by their number of Welch windows.
    PooledWindows,
}

/// Combines linear-scale estimates sharing one frequency grid.
pub fn average_psds(psds: &[PsdEstimate], mode: SegmentAveraging) -> Result<PsdEstimate> {
    let first = psds.first().ok_or_else(|| Error::Data("no spectra to average".into()))?;
    if psds
        .iter()
        .any(|p| p.scale != PsdScale::Linear || p.freqs != first.freqs || p.power.len() != first.power.len())
    {
        return Err(Error::Data("spectra must be linear and share channels and frequency grid".into()));
    }
    let weights: Vec<f64> = psds
        .iter()
        .map(|p| match mode {
            SegmentAveraging::PerSegmentMean => 1.0,
            SegmentAveraging::PooledWindows => p.window_count as f64,
        })
        .collect();
    let total: f64 = weights.iter().sum();
    let mut power = vec![vec![0.0; first.freqs.len()]; first.power.len()];
    for (p, w) in psds.iter().zip(&weights) {
        for (acc_row, row) in power.iter_mut().zip(&p.power) {
            for (a, v) in acc_row.iter_mut().zip(row) {
                *a += w * v / total;
            }
        }
    }
    Ok(PsdEstimate {
        freqs: first.freqs.clone(),
        power,
        window_count: psds.iter().map(|p| p.window_count).sum(),
        scale: PsdScale::Linear,
    })
}

/// `10·log10(max(power, 10^-15))`.
pub fn to_db(psd: &PsdEstimate) -> Result<PsdEstimate> {
    if psd.scale != PsdScale::Linear {
        return Err(Error::Data("PSD is already in dB".into()));
    }
    Ok(PsdEstimate {
        power: psd
            .power
            .iter()
            .map(|row| row.iter().map(|p| 10.0 * p.max(POWER_FLOOR).log10()).collect())
            .collect(),
        scale: PsdScale::Db,
        ..psd.clone()
    })
}

/// Named frequency range, both ends inclusive on bin-center frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandDefinition {
    pub name: String,
    pub lo: f64,
    pub hi: f64,
}

impl BandDefinition {
    pub fn new(name: impl Into<String>, lo: f64, hi: f64) -> Self {
        BandDefinition {
            name: name.into(),
            lo,
            hi,
        }
    }
}

/// Theta 4-7, Alpha 8-12, Beta 13-30, Gamma 31-40 Hz. The 7-8 and 12-13 Hz
/// gaps are intentional.
pub fn default_bands() -> Vec<BandDefinition> {
    vec![
        BandDefinition::new("theta", 4.0, 7.0),
        BandDefinition::new("alpha", 8.0, 12.0),
        BandDefinition::new("beta", 13.0, 30.0),
        BandDefinition::new("gamma", 31.0, 40.0),
    ]
}

/// Indices of the bins with `lo <= f <= hi`.
pub fn band_bins(freqs: &[f64], band: &BandDefinition) -> Vec<usize> {
    freqs
        .iter()
        .enumerate()
        .filter(|(_, &f)| band.lo <= f && f <= band.hi)
        .map(|(i, _)| i)
        .collect()
}

pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        (values[n / 2 - 1] + values[n / 2]) / 2.0
    }
}

/// Median dB power per band; result is `[channel][band]`.
pub fn band_power(psd: &PsdEstimate, bands: &[BandDefinition]) -> Result<Vec<Vec<f64>>> {
    if psd.scale != PsdScale::Db {
        return Err(Error::Data("band power expects a dB-scale PSD".into()));
    }
    let nyquist = psd.freqs.last().copied().unwrap_or(0.0);
    let bins = bands
        .iter()
        .map(|b| {
            if !(b.lo < b.hi) {
                return Err(Error::Config(format!("band {} has lo ≥ hi", b.name)));
            }
            if b.hi > nyquist {
                return Err(Error::Config(format!(
                    "band {} ({}-{} Hz) extends beyond Nyquist {nyquist} Hz",
                    b.name, b.lo, b.hi
                )));
            }
            let idx = band_bins(&psd.freqs, b);
            if idx.is_empty() {
                return Err(Error::Config(format!("band {} contains no frequency bins", b.name)));
            }
            Ok(idx)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(psd
        .power
        .iter()
        .map(|row| {
            bins.iter()
                .map(|idx| median(&mut idx.iter().map(|&i| row[i]).collect::<Vec<_>>()))
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPowerRow {
    pub participant: String,
    pub condition: String,
    pub channel: String,
    pub band: String,
    pub power_db: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BandPowerTable {
    pub rows: Vec<BandPowerRow>,
}

impl BandPowerTable {
    /// Adds one row per channel and band; a repeated key replaces its row.
    pub fn insert(
        &mut self,
        participant: &str,
        condition: &str,
        channels: &[String],
        bands: &[BandDefinition],
        values: &[Vec<f64>],
    ) {
        for (channel, row) in channels.iter().zip(values) {
            for (band, &power_db) in bands.iter().zip(row) {
                let new = BandPowerRow {
                    participant: participant.into(),
                    condition: condition.into(),
                    channel: channel.clone(),
                    band: band.name.clone(),
                    power_db,
                };
                match self.rows.iter_mut().find(|r| {
                    r.participant == new.participant
                        && r.condition == new.condition
                        && r.channel == new.channel
                        && r.band == new.band
                }) {
                    Some(existing) => *existing = new,
                    None => self.rows.push(new),
                }
            }
        }
    }

    /// Mean power over channels for one participant/condition/band.
    pub fn channel_mean(&self, participant: &str, condition: &str, band: &str) -> Option<f64> {
        let vals: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.participant == participant && r.condition == condition && r.band == band)
            .map(|r| r.power_db)
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            writer.serialize(row)?;
        }
        let bytes = writer.into_inner().map_err(|e| Error::Data(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let rows = reader.deserialize().collect::<std::result::Result<_, _>>()?;
        Ok(BandPowerTable { rows })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelQc {
    pub channel: String,
    pub rms_uv: f64,
    /// RMS within the 1-20 µV band expected for good electrode contact.
    pub amplitude_typical: bool,
    /// Power in 31-62 Hz over total power.
    pub hf_ratio: f64,
    /// Power within ±1 Hz of the line frequency over total power.
    pub line_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcReport {
    pub channels: Vec<ChannelQc>,
}

pub const TYPICAL_RMS_UV: (f64, f64) = (1.0, 20.0);

pub fn qc_report(rec: &Recording, psd: &PsdEstimate, line_freq: f64) -> Result<QcReport> {
    if psd.power.len() != rec.n_channels() {
        return Err(Error::Data(format!(
            "PSD has {} channels, recording {}",
            psd.power.len(),
            rec.n_channels()
        )));
    }
    let linear = psd.linear_power();
    let ratio = |row: &[f64], lo: f64, hi: f64| {
        let total: f64 = row.iter().sum();
        if total <= 0.0 {
            return 0.0;
        }
        let part: f64 = psd
            .freqs
            .iter()
            .zip(row)
            .filter(|(&f, _)| lo <= f && f <= hi)
            .map(|(_, p)| p)
            .sum();
        (part / total).clamp(0.0, 1.0)
    };
    let channels = rec
        .labels
        .iter()
        .zip(&rec.data)
        .zip(&linear)
        .map(|((label, x), row)| {
            let rms_uv = rms(x);
            ChannelQc {
                channel: label.clone(),
                rms_uv,
                amplitude_typical: (TYPICAL_RMS_UV.0..=TYPICAL_RMS_UV.1).contains(&rms_uv),
                hf_ratio: ratio(row, 31.0, 62.0),
                line_ratio: ratio(row, line_freq - 1.0, line_freq + 1.0),
            }
        })
        .collect();
    Ok(QcReport { channels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};
    use std::f64::consts::PI;

    fn white(n: usize, sd: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = Normal::new(0.0, sd).unwrap();
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    fn sine(f: f64, amp: f64, rate: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| amp * (2.0 * PI * f * i as f64 / rate).sin()).collect()
    }

    /// Direct O(n²) DFT periodogram with the same scaling conventions.
    fn dft_periodogram(x: &[f64], rate: f64) -> Vec<f64> {
        let n = x.len();
        let w: Vec<f64> = (0..n)
            .map(|k| 0.54 - 0.46 * (2.0 * PI * k as f64 / (n - 1) as f64).cos())
            .collect();
        let mu = x.iter().sum::<f64>() / n as f64;
        let s2: f64 = w.iter().map(|v| v * v).sum();
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for i in 0..n {
                    let a = -2.0 * PI * (k * i) as f64 / n as f64;
                    re += (x[i] - mu) * w[i] * a.cos();
                    im += (x[i] - mu) * w[i] * a.sin();
                }
                let p = (re * re + im * im) / (rate * s2);
                if k == 0 || k == n / 2 {
                    p
                } else {
                    2.0 * p
                }
            })
            .collect()
    }

    #[test]
    fn parseval_on_white_noise() {
        let x = white(7500, 3.0, 11);
        let var = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        let psd = welch_psd(&x, 125.0, &WelchParams::default()).unwrap();
        let total: f64 = psd.power[0].iter().sum::<f64>() * psd.bin_width();
        assert!((total / var - 1.0).abs() < 0.05, "{total} vs {var}");
    }

    #[test]
    fn ten_hz_peak_bin() {
        let x = sine(10.0, 1.0, 125.0, 2000);
        let psd = welch_psd(&x, 125.0, &WelchParams::default()).unwrap();
        let argmax = (0..psd.freqs.len())
            .max_by(|&a, &b| psd.power[0][a].total_cmp(&psd.power[0][b]))
            .unwrap();
        assert!(argmax == 20 || argmax == 21, "{argmax}");
        let oracle = dft_periodogram(&x[..256], 125.0);
        let oracle_max = (0..oracle.len()).max_by(|&a, &b| oracle[a].total_cmp(&oracle[b])).unwrap();
        assert!(oracle_max == 20 || oracle_max == 21);
    }

    #[test]
    fn grid_spacing() {
        let psd = welch_psd(&vec![0.0; 512], 125.0, &WelchParams::default()).unwrap();
        assert_eq!(psd.freqs.len(), 129);
        assert!((psd.bin_width() - 125.0 / 256.0).abs() < 1e-15);
        assert_eq!(psd.window_count, 2);
    }

    #[test]
    fn zero_signal_hits_floor() {
        let psd = to_db(&welch_psd(&vec![0.0; 1000], 125.0, &WelchParams::default()).unwrap()).unwrap();
        assert!(psd.power[0].iter().all(|&p| p == -150.0));
    }

    #[test]
    fn single_window_is_the_periodogram() {
        let x = white(256, 1.0, 3);
        let params = WelchParams { overlap: 0, ..Default::default() };
        let welch = welch_psd(&x, 125.0, &params).unwrap();
        let single = modified_periodogram(&x, 125.0, Window::Hamming).unwrap();
        assert_eq!(welch.power, single.power);
        for (a, b) in welch.power[0].iter().zip(dft_periodogram(&x, 125.0)) {
            assert!((a - b).abs() <= 1e-9 * b.max(1e-12), "{a} {b}");
        }
    }

    #[test]
    fn too_short_input() {
        assert!(matches!(
            welch_psd(&[0.0; 100], 125.0, &WelchParams::default()),
            Err(Error::TooShort { minimum: 256, .. })
        ));
        let bad = WelchParams { overlap: 256, ..Default::default() };
        assert!(welch_psd(&[0.0; 1000], 125.0, &bad).is_err());
    }

    #[test]
    fn to_db_values() {
        let psd = PsdEstimate {
            freqs: vec![0.0, 1.0, 2.0],
            power: vec![vec![1.0, 100.0, 0.0]],
            window_count: 1,
            scale: PsdScale::Linear,
        };
        let db = to_db(&psd).unwrap();
        assert_eq!(db.power[0], vec![0.0, 20.0, -150.0]);
        assert!(to_db(&db).is_err());
    }

    #[test]
    fn doubling_amplitude_adds_six_db() {
        let x = white(3000, 2.0, 5);
        let x2: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        let p1 = welch_psd(&x, 125.0, &WelchParams::default()).unwrap();
        let p2 = welch_psd(&x2, 125.0, &WelchParams::default()).unwrap();
        for (a, b) in p1.power[0].iter().zip(&p2.power[0]) {
            assert!((b / a - 4.0).abs() < 1e-9);
        }
        let (d1, d2) = (to_db(&p1).unwrap(), to_db(&p2).unwrap());
        for (a, b) in d1.power[0].iter().zip(&d2.power[0]) {
            assert!((b - a - 6.0206).abs() < 0.01);
        }
    }

    #[test]
    fn alpha_bins_and_gap() {
        let freqs = frequency_grid(125.0, 256);
        let bands = default_bands();
        assert_eq!(band_bins(&freqs, &bands[1]), (17..=24).collect::<Vec<_>>());
        // 15 · 125/256 = 7.32 Hz falls in neither theta nor alpha
        assert!((freqs[15] - 7.32).abs() < 0.01);
        assert!(!band_bins(&freqs, &bands[0]).contains(&15));
        assert!(!band_bins(&freqs, &bands[1]).contains(&15));
    }

    #[test]
    fn flat_psd_band_power() {
        let psd = PsdEstimate {
            freqs: frequency_grid(125.0, 256),
            power: vec![vec![-10.0; 129]; 2],
            window_count: 1,
            scale: PsdScale::Db,
        };
        let bp = band_power(&psd, &default_bands()).unwrap();
        assert!(bp.iter().flatten().all(|&v| v == -10.0));
    }

    #[test]
    fn band_power_errors() {
        let psd = PsdEstimate {
            freqs: frequency_grid(125.0, 256),
            power: vec![vec![0.0; 129]],
            window_count: 1,
            scale: PsdScale::Db,
        };
        assert!(band_power(&psd, &[BandDefinition::new("x", 50.0, 70.0)]).is_err());
        assert!(band_power(&psd, &[BandDefinition::new("x", 7.0, 7.1)]).is_err());
        let lin = PsdEstimate { scale: PsdScale::Linear, ..psd };
        assert!(band_power(&lin, &default_bands()).is_err());
    }

    #[test]
    fn qc_flags() {
        let rate = 125.0;
        let x7 = sine(10.0, 7.0 * 2f64.sqrt(), rate, 2500);
        let x500 = sine(10.0, 500.0, rate, 2500);
        let line = sine(50.0, 5.0, rate, 2500);
        let rec = Recording::with_default_labels(rate, vec![x7, x500, line]).unwrap();
        let psd = welch_recording(&rec, &WelchParams::default(), None).unwrap();
        let qc = qc_report(&rec, &psd, 50.0).unwrap();
        assert!(qc.channels[0].amplitude_typical);
        assert!((qc.channels[0].rms_uv - 7.0).abs() < 0.05);
        assert!(!qc.channels[1].amplitude_typical);
        assert!(qc.channels[2].line_ratio > 0.9);
        assert!(qc.channels[2].hf_ratio > 0.9);
        assert!(qc.channels[0].line_ratio < 0.01);
        // identical answer from the dB representation
        let qc_db = qc_report(&rec, &to_db(&psd).unwrap(), 50.0).unwrap();
        assert!((qc_db.channels[2].line_ratio - qc.channels[2].line_ratio).abs() < 1e-9);
    }

    #[test]
    fn excluded_windows_are_skipped() {
        let mut x = white(1024, 1.0, 9);
        for v in &mut x[300..400] {
            *v = 1e6;
        }
        let rec = Recording::with_default_labels(125.0, vec![x]).unwrap();
        let mut mask = vec![false; 1024];
        mask[300..400].iter_mut().for_each(|m| *m = true);
        let params = WelchParams::default();
        let full = welch_recording(&rec, &params, None).unwrap();
        let clean = welch_recording(&rec, &params, Some(&mask)).unwrap();
        assert!(clean.window_count < full.window_count);
        assert!(clean.power[0].iter().sum::<f64>() * clean.bin_width() < 2.0);
        assert!(welch_recording(&rec, &params, Some(&vec![true; 1024])).is_err());
    }

    #[test]
    fn averaging_modes() {
        let mk = |v: f64, w: usize| PsdEstimate {
            freqs: vec![0.0, 1.0],
            power: vec![vec![v, v]],
            window_count: w,
            scale: PsdScale::Linear,
        };
        let psds = [mk(1.0, 1), mk(4.0, 3)];
        let seg = average_psds(&psds, SegmentAveraging::PerSegmentMean).unwrap();
        assert_eq!(seg.power[0][0], 2.5);
        let pooled = average_psds(&psds, SegmentAveraging::PooledWindows).unwrap();
        assert_eq!(pooled.power[0][0], 3.25);
        assert_eq!(pooled.window_count, 4);
    }

    #[test]
    fn band_table_csv() {
        let mut t = BandPowerTable::default();
        let bands = default_bands();
        t.insert("P1", "open", &["L1".into()], &bands[..2], &[vec![-1.5, 3.0]]);
        t.insert("P1", "open", &["L1".into()], &bands[..1], &[vec![-2.0]]);
        assert_eq!(t.rows.len(), 2);
        let csv = t.to_csv().unwrap();
        assert!(csv.starts_with("participant,condition,channel,band,power_db\n"));
        assert!(csv.contains("P1,open,L1,theta,-2.0\n"));
        assert_eq!(t.channel_mean("P1", "open", "alpha"), Some(3.0));
    }
}
