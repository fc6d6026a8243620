//! QRS detection, R-R intervals and beat matching.
//!
//! The detector follows Pan & Tompkins: band-pass, derivative, squaring,
//! moving-window integration and adaptive dual thresholds with search-back.
//! All durations are given in milliseconds and converted per sampling rate,
//! so the same code runs on 1000 Hz chest ECG and 125 Hz IC traces.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::filters::{design_bandpass, filter_zero_phase, Window};
use crate::spectral::median;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatSeries {
    /// Seconds, strictly increasing.
    pub beat_times: Vec<f64>,
    pub rate: f64,
}

impl BeatSeries {
    pub fn len(&self) -> usize {
        self.beat_times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beat_times.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RrSeries {
    pub intervals: Vec<f64>,
    /// Time of the first beat of each interval.
    pub anchored_at: Vec<f64>,
}

impl RrSeries {
    /// Beat times implied by the anchors plus the end of the last interval.
    pub fn beat_times(&self) -> Vec<f64> {
        let mut out = self.anchored_at.clone();
        if let (Some(&t), Some(&rr)) = (self.anchored_at.last(), self.intervals.last()) {
            out.push(t + rr / 1000.0);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PanTompkinsParams {
    pub band_hz: (f64, f64),
    /// Band-pass length in seconds (rounded to an even order).
    pub bandpass_s: f64,
    pub integration_ms: f64,
    pub refractory_ms: f64,
    /// Candidates this close to the previous beat need half its slope.
    pub t_wave_ms: f64,
    /// Fraction of the signal-noise gap added to the noise level.
    pub threshold_mix: f64,
    /// Search back when no beat arrived within this multiple of the mean R-R.
    pub searchback_factor: f64,
    pub refine_ms: f64,
}

impl Default for PanTompkinsParams {
    fn default() -> Self {
        PanTompkinsParams {
            band_hz: (5.0, 15.0),
            bandpass_s: 0.5,
            integration_ms: 150.0,
            refractory_ms: 200.0,
            t_wave_ms: 360.0,
            threshold_mix: 0.25,
            searchback_factor: 1.66,
            refine_ms: 75.0,
        }
    }
}

pub const MIN_RATE_HZ: f64 = 100.0;
pub const MIN_DURATION_S: f64 = 5.0;

fn samples(ms: f64, rate: f64) -> usize {
    (ms * rate / 1000.0).round().max(1.0) as usize
}

/// Five-point derivative centered on each sample.
fn derivative(x: &[f64], rate: f64) -> Vec<f64> {
    let n = x.len();
    (0..n)
        .map(|i| {
            if i < 2 || i + 2 >= n {
                0.0
            } else {
                rate / 8.0 * (2.0 * x[i + 1] + x[i + 2] - 2.0 * x[i - 1] - x[i - 2])
            }
        })
        .collect()
}

/// Centered moving average of width `w` samples.
fn integrate(x: &[f64], w: usize) -> Vec<f64> {
    let n = x.len();
    let mut prefix = vec![0.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] + x[i];
    }
    let half = w / 2;
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + w - half).min(n);
            (prefix[hi] - prefix[lo]) / w as f64
        })
        .collect()
}

struct Thresholds {
    signal: f64,
    noise: f64,
    mix: f64,
}

impl Thresholds {
    fn primary(&self) -> f64 {
        self.noise + self.mix * (self.signal - self.noise)
    }

    fn secondary(&self) -> f64 {
        0.5 * self.primary()
    }
}

/// Detects R peaks; returns beat times refined on the band-passed signal.
pub fn pan_tompkins(x: &[f64], rate: f64) -> Result<BeatSeries> {
    pan_tompkins_with(x, rate, &PanTompkinsParams::default())
}

pub fn pan_tompkins_with(x: &[f64], rate: f64, p: &PanTompkinsParams) -> Result<BeatSeries> {
    if rate < MIN_RATE_HZ {
        return Err(Error::Data(format!(
            "QRS detection needs at least {MIN_RATE_HZ} Hz sampling, got {rate} Hz"
        )));
    }
    if (x.len() as f64) < MIN_DURATION_S * rate {
        return Err(Error::TooShort {
            actual: x.len(),
            minimum: (MIN_DURATION_S * rate).ceil() as usize,
        });
    }

    let order = 2 * ((p.bandpass_s * rate / 2.0).round() as usize).max(1);
    let bp = design_bandpass(p.band_hz.0, p.band_hz.1, order, Window::Hamming, rate)?;
    let filtered = filter_zero_phase(x, &bp)?;
    let energy: Vec<f64> = derivative(&filtered, rate).iter().map(|d| d * d).collect();
    let mwi = integrate(&energy, samples(p.integration_ms, rate));

    let peak_max = mwi.iter().copied().fold(0.0, f64::max);
    if !(peak_max > 0.0) {
        return Ok(BeatSeries {
            beat_times: Vec::new(),
            rate,
        });
    }

    let candidates: Vec<usize> = (1..mwi.len() - 1)
        .filter(|&i| mwi[i] > mwi[i - 1] && mwi[i] >= mwi[i + 1])
        .collect();

    // band-passed peak magnitude under each integration window
    let half = samples(p.integration_ms, rate) / 2;
    let peak_of = |c: usize| {
        let hi = (c + half + 1).min(filtered.len());
        filtered[c.saturating_sub(half)..hi].iter().fold(0.0f64, |m, v| m.max(v.abs()))
    };
    let fpk: Vec<f64> = (0..mwi.len()).map(|c| if candidates.binary_search(&c).is_ok() { peak_of(c) } else { 0.0 }).collect();

    let learn = ((2.0 * rate) as usize).min(mwi.len());
    let learn_thresholds = |x: &mut dyn Iterator<Item = f64>| {
        let (max, sum) = x.fold((0.0f64, 0.0), |(m, s), v| (m.max(v), s + v));
        Thresholds { signal: max / 3.0, noise: sum / learn as f64 / 2.0, mix: p.threshold_mix }
    };
    let mut th = learn_thresholds(&mut mwi[..learn].iter().copied());
    // a beat must clear both the integrated and the band-passed threshold
    let mut thf = learn_thresholds(&mut filtered[..learn].iter().map(|v| v.abs()));

    let refractory = samples(p.refractory_ms, rate);
    let t_wave = samples(p.t_wave_ms, rate);
    let slope = derivative(&filtered, rate);
    let max_slope = |c: usize| {
        let hi = (c + half + 1).min(slope.len());
        slope[c.saturating_sub(half)..hi].iter().fold(0.0f64, |m, v| m.max(v.abs()))
    };
    let mut beats: Vec<usize> = Vec::new();
    let mut pending: Vec<usize> = Vec::new();

    let mean_rr = |beats: &[usize]| -> Option<f64> {
        if beats.len() < 2 {
            return None;
        }
        let tail = &beats[beats.len().saturating_sub(9)..];
        Some((tail[tail.len() - 1] - tail[0]) as f64 / (tail.len() - 1) as f64)
    };

    for &c in &candidates {
        if let (Some(&last), Some(rr)) = (beats.last(), mean_rr(&beats)) {
            if (c - last) as f64 > p.searchback_factor * rr {
                let missed = pending
                    .iter()
                    .copied()
                    .filter(|&q| q > last + refractory && q < c && mwi[q] > th.secondary() && fpk[q] > thf.secondary())
                    .max_by(|&a, &b| mwi[a].total_cmp(&mwi[b]));
                if let Some(q) = missed {
                    beats.push(q);
                    th.signal = 0.25 * mwi[q] + 0.75 * th.signal;
                    thf.signal = 0.25 * fpk[q] + 0.75 * thf.signal;
                    pending.retain(|&r| r > q);
                }
            }
        }

        if let Some(&last) = beats.last() {
            if c - last < refractory {
                if mwi[c] > mwi[last] {
                    *beats.last_mut().unwrap() = c;
                }
                continue;
            }
            // shallow slope soon after a beat: a T wave, not a QRS
            if c - last < t_wave && max_slope(c) < 0.5 * max_slope(last) {
                th.noise = 0.125 * mwi[c] + 0.875 * th.noise;
                thf.noise = 0.125 * fpk[c] + 0.875 * thf.noise;
                continue;
            }
        }

        if mwi[c] > th.primary() && fpk[c] > thf.primary() {
            beats.push(c);
            th.signal = 0.125 * mwi[c] + 0.875 * th.signal;
            thf.signal = 0.125 * fpk[c] + 0.875 * thf.signal;
            pending.clear();
        } else {
            th.noise = 0.125 * mwi[c] + 0.875 * th.noise;
            thf.noise = 0.125 * fpk[c] + 0.875 * thf.noise;
            pending.push(c);
        }
    }

    let reach = samples(p.refine_ms, rate);
    let mut beat_times: Vec<f64> = beats
        .iter()
        .map(|&b| refine_peak(&filtered, b, reach) / rate)
        .collect();
    beat_times.dedup_by(|a, b| (*a - *b) * 1000.0 < p.refractory_ms);
    Ok(BeatSeries { beat_times, rate })
}

/// Sub-sample position of the largest |x| within `reach` samples of `center`.
fn refine_peak(x: &[f64], center: usize, reach: usize) -> f64 {
    let lo = center.saturating_sub(reach);
    let hi = (center + reach).min(x.len() - 1);
    let i = (lo..=hi).max_by(|&a, &b| x[a].abs().total_cmp(&x[b].abs())).unwrap();
    if i == 0 || i + 1 >= x.len() {
        return i as f64;
    }
    let (a, b, c) = (x[i - 1].abs(), x[i].abs(), x[i + 1].abs());
    let denom = a - 2.0 * b + c;
    if denom >= 0.0 {
        return i as f64;
    }
    i as f64 + (0.5 * (a - c) / denom).clamp(-0.5, 0.5)
}

/// Differences of consecutive beat times in milliseconds.
pub fn rr_periods(beats: &BeatSeries) -> Result<RrSeries> {
    if beats.len() < 2 {
        return Err(Error::Data(format!("need at least 2 beats, got {}", beats.len())));
    }
    let t = &beats.beat_times;
    Ok(RrSeries {
        intervals: t.windows(2).map(|w| (w[1] - w[0]) * 1000.0).collect(),
        anchored_at: t[..t.len() - 1].to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutlierParams {
    pub range_ms: (f64, f64),
    pub window: usize,
    pub mad_k: f64,
    /// Lower bound on the scaled MAD, so perfectly regular series do not
    /// reject tiny deviations.
    pub mad_floor_ms: f64,
}

impl Default for OutlierParams {
    fn default() -> Self {
        OutlierParams {
            range_ms: (300.0, 2000.0),
            window: 11,
            mad_k: 3.0,
            mad_floor_ms: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredRr {
    pub kept: RrSeries,
    /// `true` where the interval of the input series was dropped.
    pub dropped_mask: Vec<bool>,
    pub dropped: usize,
}

/// Drops intervals outside the plausible range or more than `k` scaled MADs
/// from their rolling median.
pub fn rr_outlier_filter(rr: &RrSeries) -> FilteredRr {
    rr_outlier_filter_with(rr, &OutlierParams::default())
}

pub fn rr_outlier_filter_with(rr: &RrSeries, p: &OutlierParams) -> FilteredRr {
    let n = rr.intervals.len();
    let mut dropped_mask: Vec<bool> = rr
        .intervals
        .iter()
        .map(|&v| !(p.range_ms.0..=p.range_ms.1).contains(&v))
        .collect();

    let valid: Vec<usize> = (0..n).filter(|&i| !dropped_mask[i]).collect();
    let half = p.window / 2;
    let mut mad_drop = Vec::new();
    for (k, &i) in valid.iter().enumerate() {
        let lo = k.saturating_sub(half);
        let hi = (k + half + 1).min(valid.len());
        let mut win: Vec<f64> = valid[lo..hi].iter().map(|&j| rr.intervals[j]).collect();
        let med = median(&mut win);
        let mut dev: Vec<f64> = win.iter().map(|v| (v - med).abs()).collect();
        let mad = (1.4826 * median(&mut dev)).max(p.mad_floor_ms);
        if (rr.intervals[i] - med).abs() > p.mad_k * mad {
            mad_drop.push(i);
        }
    }
    for i in mad_drop {
        dropped_mask[i] = true;
    }

    let keep: Vec<usize> = (0..n).filter(|&i| !dropped_mask[i]).collect();
    FilteredRr {
        kept: RrSeries {
            intervals: keep.iter().map(|&i| rr.intervals[i]).collect(),
            anchored_at: keep.iter().map(|&i| rr.anchored_at[i]).collect(),
        },
        dropped: n - keep.len(),
        dropped_mask,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatPair {
    pub ref_index: usize,
    pub alt_index: usize,
    pub ref_t: f64,
    pub alt_t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeatMatch {
    /// Sorted by reference time.
    pub pairs: Vec<BeatPair>,
    pub unmatched_ref: usize,
    pub unmatched_alt: usize,
    pub tolerance: f64,
}

impl BeatMatch {
    /// R-R intervals (ms) for consecutive pairs whose beats are adjacent in
    /// both series: `(reference, alternative)`.
    pub fn paired_rr(&self) -> (Vec<f64>, Vec<f64>) {
        self.pairs
            .windows(2)
            .filter(|w| w[1].ref_index == w[0].ref_index + 1 && w[1].alt_index == w[0].alt_index + 1)
            .map(|w| ((w[1].ref_t - w[0].ref_t) * 1000.0, (w[1].alt_t - w[0].alt_t) * 1000.0))
            .unzip()
    }
}

pub const DEFAULT_MATCH_TOLERANCE_S: f64 = 0.15;

/// Greedy nearest-neighbour pairing: candidate pairs within `tol` are taken
/// in order of increasing distance (ties by time), each beat used once.
pub fn match_beats(reference: &BeatSeries, alt: &BeatSeries, tol: f64) -> Result<BeatMatch> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("match tolerance must be positive, got {tol}")));
    }
    let (r, a) = (&reference.beat_times, &alt.beat_times);
    let mut candidates = Vec::new();
    let mut start = 0;
    for (i, &t) in r.iter().enumerate() {
        while start < a.len() && a[start] < t - tol {
            start += 1;
        }
        for (j, &u) in a.iter().enumerate().skip(start) {
            if u > t + tol {
                break;
            }
            candidates.push(((t - u).abs(), t.min(u), t.max(u), i, j));
        }
    }
    candidates.sort_by(|x, y| {
        x.0.total_cmp(&y.0)
            .then(x.1.total_cmp(&y.1))
            .then(x.2.total_cmp(&y.2))
    });

    let mut ref_used = vec![false; r.len()];
    let mut alt_used = vec![false; a.len()];
    let mut pairs = Vec::new();
    for (_, _, _, i, j) in candidates {
        if !ref_used[i] && !alt_used[j] {
            ref_used[i] = true;
            alt_used[j] = true;
            pairs.push(BeatPair {
                ref_index: i,
                alt_index: j,
                ref_t: r[i],
                alt_t: a[j],
            });
        }
    }
    pairs.sort_by_key(|p| p.ref_index);
    Ok(BeatMatch {
        unmatched_ref: r.len() - pairs.len(),
        unmatched_alt: a.len() - pairs.len(),
        pairs,
        tolerance: tol,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct RrRow {
    beat_time_s: f64,
    rr_ms: f64,
    flag: String,
}

/// `beat_time_s,rr_ms,flag` with flag `ok` or `outlier`.
pub fn format_rr_csv(rr: &RrSeries, dropped_mask: Option<&[bool]>) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for (i, (&t, &v)) in rr.anchored_at.iter().zip(&rr.intervals).enumerate() {
        let outlier = dropped_mask.is_some_and(|m| m[i]);
        writer.serialize(RrRow {
            beat_time_s: t,
            rr_ms: v,
            flag: if outlier { "outlier" } else { "ok" }.into(),
        })?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Reads an R-R CSV; rows flagged `outlier` are skipped when `only_ok`.
pub fn read_rr_csv(path: impl AsRef<Path>, only_ok: bool) -> Result<RrSeries> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut rr = RrSeries {
        intervals: Vec::new(),
        anchored_at: Vec::new(),
    };
    for row in reader.deserialize::<RrRow>() {
        let row = row?;
        if only_ok && row.flag != "ok" {
            continue;
        }
        rr.anchored_at.push(row.beat_time_s);
        rr.intervals.push(row.rr_ms);
    }
    Ok(rr)
}
