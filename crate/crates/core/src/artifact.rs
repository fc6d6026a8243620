//! Independent component analysis, ECG component selection and artifact
//! subspace reconstruction (ASR).
//!
//! ICA is a fixed-point (FastICA-style) estimator: PCA whitening, log-cosh
//! contrast, symmetric decorrelation. ASR learns a principal basis from clean
//! calibration windows and, per processing window, projects out components
//! whose RMS exceeds `µ + burst_k·σ`.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cardiac::{pan_tompkins, rr_periods, BeatSeries};
use crate::linalg::{from_matrix, sorted_eigen, symmetric_decorrelation, to_matrix};
use crate::recording::{mean, rms};
use crate::spectral::median;
use crate::{Error, Recording, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcaConfig {
    /// `None` keeps as many components as channels.
    pub n_components: Option<usize>,
    pub max_iter: usize,
    pub tol: f64,
    pub seed: u64,
    /// Carried for configuration compatibility with adaptive (natural
    /// gradient) ICA; the fixed-point update has no learning rate.
    pub initial_learning_rate: f64,
}

impl Default for IcaConfig {
    fn default() -> Self {
        IcaConfig {
            n_components: None,
            max_iter: 2000,
            tol: 1e-6,
            seed: 0,
            initial_learning_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcaResult {
    /// `components × channels`; applies to mean-removed channels.
    pub unmixing: DMatrix<f64>,
    /// `channels × components`.
    pub mixing: DMatrix<f64>,
    /// `components × samples`, unit variance rows.
    pub sources: DMatrix<f64>,
    pub channel_means: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub warnings: Vec<String>,
}

impl IcaResult {
    pub fn n_components(&self) -> usize {
        self.sources.nrows()
    }

    pub fn source(&self, k: usize) -> Vec<f64> {
        self.sources.row(k).iter().copied().collect()
    }
}

/// Relative eigenvalue below which a whitening direction counts as empty.
const RANK_TOL: f64 = 1e-10;

pub fn ica_decompose(rec: &Recording, n_components: usize, seed: u64) -> Result<IcaResult> {
    let cfg = IcaConfig {
        n_components: Some(n_components),
        seed,
        ..IcaConfig::default()
    };
    ica_decompose_with(rec, &cfg)
}

pub fn ica_decompose_with(rec: &Recording, cfg: &IcaConfig) -> Result<IcaResult> {
    let ch = rec.n_channels();
    let n = rec.n_samples();
    let mut k = cfg.n_components.unwrap_or(ch);
    if ch == 0 || k == 0 || k > ch {
        return Err(Error::Config(format!("n_components {k} must be in 1..={ch}")));
    }
    if n < 20 * ch {
        return Err(Error::TooShort { actual: n, minimum: 20 * ch });
    }
    if !(cfg.tol > 0.0) || cfg.max_iter == 0 {
        return Err(Error::Config("ICA tol and max_iter must be positive".into()));
    }

    let channel_means: Vec<f64> = rec.data.iter().map(|c| mean(c)).collect();
    let centered: Vec<Vec<f64>> = rec
        .data
        .iter()
        .zip(&channel_means)
        .map(|(c, m)| c.iter().map(|v| v - m).collect())
        .collect();
    let x = to_matrix(&centered);
    let cov = &x * x.transpose() / n as f64;
    let (values, vectors) = sorted_eigen(&cov);

    let mut warnings = Vec::new();
    let top = values[0].max(0.0);
    let rank = values.iter().filter(|&&v| v > top * RANK_TOL && v > 0.0).count();
    if rank == 0 {
        return Err(Error::Data("ICA input has zero variance".into()));
    }
    if rank < k {
        warnings.push(format!("input rank {rank} < {k} requested components; reduced to {rank}"));
        k = rank;
    }

    let e = vectors.columns(0, k).into_owned();
    let d: Vec<f64> = values.iter().take(k).copied().collect();
    let whitening = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(k, d.iter().map(|v| 1.0 / v.sqrt())))
        * e.transpose();
    let dewhitening = &e * DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(k, d.iter().map(|v| v.sqrt())));
    let z = &whitening * &x;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = DMatrix::from_fn(k, k, |_, _| StandardNormal.sample(&mut rng));
    let mut w = symmetric_decorrelation(&init);
    let mut iterations = 0;
    let mut converged = false;
    let zt = z.transpose();
    while iterations < cfg.max_iter {
        iterations += 1;
        let mut g = &w * &z;
        let mut g_prime_mean = vec![0.0; k];
        // column-major storage: each chunk is one sample across components
        for col in g.as_mut_slice().chunks_exact_mut(k) {
            for (acc, v) in g_prime_mean.iter_mut().zip(col.iter_mut()) {
                let t = fast_tanh(*v);
                *acc += 1.0 - t * t;
                *v = t;
            }
        }
        g_prime_mean.iter_mut().for_each(|a| *a /= n as f64);
        let mut next = &g * &zt / n as f64;
        for r in 0..k {
            for c in 0..k {
                next[(r, c)] -= g_prime_mean[r] * w[(r, c)];
            }
        }
        let next = symmetric_decorrelation(&next);
        // rows are unit vectors; convergence when each keeps its direction
        let change = (0..k)
            .map(|r| (1.0 - next.row(r).dot(&w.row(r)).abs()).abs())
            .fold(0.0, f64::max);
        w = next;
        if change < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push(format!("ICA did not converge in {} iterations", cfg.max_iter));
    }

    let sources = &w * &z;
    Ok(IcaResult {
        unmixing: &w * &whitening,
        mixing: dewhitening * w.transpose(),
        sources,
        channel_means,
        iterations,
        converged,
        warnings,
    })
}

/// `tanh` through one `exp`; absolute error ~1e-16, about twice as fast as
/// `f64::tanh` in the fixed-point loop.
fn fast_tanh(v: f64) -> f64 {
    1.0 - 2.0 / ((2.0 * v).exp() + 1.0)
}

pub const ECG_RR_RANGE_MS: (f64, f64) = (300.0, 1500.0);
pub const ECG_SCORE_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcgCandidate {
    pub index: usize,
    pub score: f64,
    /// Detection ran on the negated source.
    pub inverted: bool,
    pub beats: BeatSeries,
}

/// Plausibility of a beat train as ECG: in-range R-R fraction times
/// `1 − CV` (floored at 0).
pub fn beat_train_score(beats: &BeatSeries) -> f64 {
    let Ok(rr) = rr_periods(beats) else {
        return 0.0;
    };
    if rr.intervals.len() < 2 {
        return 0.0;
    }
    let (lo, hi) = ECG_RR_RANGE_MS;
    let in_range = rr.intervals.iter().filter(|&&v| (lo..=hi).contains(&v)).count() as f64;
    let m = mean(&rr.intervals);
    let sd = (rr.intervals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (rr.intervals.len() - 1) as f64).sqrt();
    in_range / rr.intervals.len() as f64 * (1.0 - sd / m).max(0.0)
}

/// Scores one source in both polarities and keeps the better one.
pub fn score_ecg_source(x: &[f64], rate: f64) -> (f64, bool, BeatSeries) {
    let empty = BeatSeries { beat_times: Vec::new(), rate };
    let mut best = (0.0, false, empty);
    for inverted in [false, true] {
        let signal: Vec<f64> = if inverted { x.iter().map(|v| -v).collect() } else { x.to_vec() };
        if let Ok(beats) = pan_tompkins(&signal, rate) {
            let s = beat_train_score(&beats);
            if s > best.0 {
                best = (s, inverted, beats);
            }
        }
    }
    best
}

pub fn ecg_candidates(ica: &IcaResult, rate: f64) -> Vec<EcgCandidate> {
    (0..ica.n_components())
        .map(|index| {
            let (score, inverted, beats) = score_ecg_source(&ica.source(index), rate);
            EcgCandidate { index, score, inverted, beats }
        })
        .collect()
}

/// Best-scoring ECG-like component, or `None` when nothing reaches the floor.
pub fn select_ecg_ic(ica: &IcaResult, rate: f64) -> Option<usize> {
    best_candidate(ecg_candidates(ica, rate)).map(|c| c.index)
}

/// Highest score ≥ the floor; ties go to the lowest index.
pub fn best_candidate(candidates: Vec<EcgCandidate>) -> Option<EcgCandidate> {
    let mut best: Option<EcgCandidate> = None;
    for c in candidates {
        if c.score >= ECG_SCORE_FLOOR && best.as_ref().is_none_or(|b| c.score > b.score) {
            best = Some(c);
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AsrConfig {
    pub burst_k: f64,
    /// Fraction of channels allowed above threshold before a window is flagged.
    pub window_criterion: f64,
    pub calib_win_s: f64,
    pub proc_win_s: f64,
    /// Per-channel RMS z-score band accepted for calibration windows.
    pub calib_z: (f64, f64),
    /// Channel threshold for flagging, in robust SDs above the median RMS.
    pub window_z_max: f64,
    pub min_calib_windows: usize,
}

impl Default for AsrConfig {
    fn default() -> Self {
        AsrConfig {
            burst_k: 12.0,
            window_criterion: 0.15,
            calib_win_s: 1.0,
            proc_win_s: 0.5,
            calib_z: (-3.5, 5.0),
            window_z_max: 7.0,
            min_calib_windows: 10,
        }
    }
}

impl AsrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.burst_k > 0.0) {
            return Err(Error::Config("asr burst_k must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.window_criterion) {
            return Err(Error::Config("asr window_criterion must be in [0, 1]".into()));
        }
        if !(self.calib_win_s > 0.0 && self.proc_win_s > 0.0) {
            return Err(Error::Config("asr window lengths must be positive".into()));
        }
        if !(self.calib_z.0 < self.calib_z.1) || !(self.window_z_max > 0.0) {
            return Err(Error::Config("asr z bounds must be ordered and positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsrModel {
    /// Orthonormal columns, one per component, by descending variance.
    pub basis: Vec<Vec<f64>>,
    /// Component RMS thresholds, same order as `basis` columns.
    pub thresholds: Vec<f64>,
    /// Per-channel RMS above which a channel counts as bad after cleaning.
    pub channel_thresholds: Vec<f64>,
    pub calibration_windows: usize,
}

impl AsrModel {
    pub fn basis_matrix(&self) -> DMatrix<f64> {
        to_matrix(&self.basis)
    }
}

fn window_starts(n: usize, len: usize) -> Vec<usize> {
    if len == 0 || n < len {
        return Vec::new();
    }
    let hop = (len / 2).max(1);
    let mut starts: Vec<usize> = (0..=n - len).step_by(hop).collect();
    if *starts.last().unwrap() != n - len {
        starts.push(n - len);
    }
    starts
}

fn channel_rms(rec: &Recording, start: usize, len: usize) -> Vec<f64> {
    rec.data.iter().map(|c| rms(&c[start..start + len])).collect()
}

fn component_rms(basis: &DMatrix<f64>, rec: &Recording, start: usize, len: usize) -> Vec<f64> {
    let x = DMatrix::from_fn(rec.n_channels(), len, |r, c| rec.data[r][start + c]);
    let y = basis.transpose() * x;
    (0..y.nrows())
        .map(|r| (y.row(r).iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt())
        .collect()
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let m = mean(v);
    if v.len() < 2 {
        return (m, 0.0);
    }
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
}

fn samples(seconds: f64, rate: f64) -> usize {
    (seconds * rate).round().max(1.0) as usize
}

pub fn asr_calibrate(rec: &Recording, cfg: &AsrConfig) -> Result<AsrModel> {
    cfg.validate()?;
    let ch = rec.n_channels();
    let len = samples(cfg.calib_win_s, rec.rate);
    let starts = window_starts(rec.n_samples(), len);
    let rms_table: Vec<Vec<f64>> = starts.iter().map(|&s| channel_rms(rec, s, len)).collect();

    let per_channel: Vec<(f64, f64)> = (0..ch)
        .map(|c| mean_sd(&rms_table.iter().map(|w| w[c]).collect::<Vec<_>>()))
        .collect();
    let accepted: Vec<usize> = starts
        .iter()
        .enumerate()
        .filter(|(w, _)| {
            rms_table[*w].iter().zip(&per_channel).all(|(&r, &(m, sd))| {
                let z = if sd > 0.0 { (r - m) / sd } else { 0.0 };
                (cfg.calib_z.0..=cfg.calib_z.1).contains(&z)
            })
        })
        .map(|(_, &s)| s)
        .collect();
    if accepted.len() < cfg.min_calib_windows {
        return Err(Error::Calibration {
            found: accepted.len(),
            required: cfg.min_calib_windows,
        });
    }

    let mut cov = DMatrix::zeros(ch, ch);
    for &s in &accepted {
        let x = DMatrix::from_fn(ch, len, |r, c| rec.data[r][s + c]);
        cov += &x * x.transpose() / len as f64;
    }
    cov /= accepted.len() as f64;
    let (_, basis) = sorted_eigen(&cov);

    let comp: Vec<Vec<f64>> = accepted.iter().map(|&s| component_rms(&basis, rec, s, len)).collect();
    let thresholds = (0..ch)
        .map(|c| {
            let (m, sd) = mean_sd(&comp.iter().map(|w| w[c]).collect::<Vec<_>>());
            (m + cfg.burst_k * sd).max(f64::MIN_POSITIVE)
        })
        .collect();

    // channel statistics at processing-window length, robust to leftovers
    let plen = samples(cfg.proc_win_s, rec.rate);
    let pstarts: Vec<usize> = accepted
        .iter()
        .flat_map(|&s| window_starts(len, plen).into_iter().map(move |o| s + o))
        .collect();
    let prms: Vec<Vec<f64>> = pstarts.iter().map(|&s| channel_rms(rec, s, plen)).collect();
    let channel_thresholds = (0..ch)
        .map(|c| {
            let mut v: Vec<f64> = prms.iter().map(|w| w[c]).collect();
            let med = median(&mut v);
            let mut dev: Vec<f64> = v.iter().map(|x| (x - med).abs()).collect();
            let sigma = 1.4826 * median(&mut dev);
            (med + cfg.window_z_max * sigma).max(f64::MIN_POSITIVE)
        })
        .collect();

    Ok(AsrModel {
        basis: from_matrix(&basis),
        thresholds,
        channel_thresholds,
        calibration_windows: accepted.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsrWindow {
    pub start: usize,
    pub len: usize,
    /// Components projected out in this window.
    pub removed: Vec<usize>,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AsrOutput {
    pub recording: Recording,
    pub windows: Vec<AsrWindow>,
}

impl AsrOutput {
    pub fn flagged_windows(&self) -> Vec<(usize, usize)> {
        self.windows.iter().filter(|w| w.flagged).map(|w| (w.start, w.start + w.len)).collect()
    }

    /// Per-sample mask of flagged spans.
    pub fn flagged_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.recording.n_samples()];
        for (a, b) in self.flagged_windows() {
            mask[a..b].iter_mut().for_each(|m| *m = true);
        }
        mask
    }
}

/// Cleans `rec` window by window. Each window is either left alone or
/// projected onto the span of its sub-threshold components; overlapping
/// windows are blended with strictly positive sin² weights so samples
/// untouched by every covering window stay bit-identical.
pub fn asr_process(rec: &Recording, model: &AsrModel, cfg: &AsrConfig) -> Result<AsrOutput> {
    cfg.validate()?;
    let ch = rec.n_channels();
    if model.basis.len() != ch || model.thresholds.len() != ch || model.channel_thresholds.len() != ch {
        return Err(Error::Config(format!(
            "ASR model has {} channels, recording has {ch}",
            model.basis.len()
        )));
    }
    let n = rec.n_samples();
    let len = samples(cfg.proc_win_s, rec.rate).min(n);
    let basis = model.basis_matrix();
    let weight: Vec<f64> = (0..len)
        .map(|i| (std::f64::consts::PI * (i as f64 + 0.5) / len as f64).sin().powi(2))
        .collect();

    let mut correction = vec![vec![0.0; n]; ch];
    let mut weight_sum = vec![0.0; n];
    let mut windows = Vec::new();
    for start in window_starts(n, len) {
        let comp = component_rms(&basis, rec, start, len);
        let removed: Vec<usize> = (0..ch).filter(|&c| comp[c] > model.thresholds[c]).collect();
        for (i, w) in weight.iter().enumerate() {
            weight_sum[start + i] += w;
        }
        if !removed.is_empty() {
            let good: Vec<usize> = (0..ch).filter(|c| !removed.contains(c)).collect();
            let v = basis.select_columns(&good);
            let x = DMatrix::from_fn(ch, len, |r, c| rec.data[r][start + c]);
            let delta = &v * (v.transpose() * &x) - &x;
            for r in 0..ch {
                for (i, w) in weight.iter().enumerate() {
                    correction[r][start + i] += w * delta[(r, i)];
                }
            }
        }
        windows.push(AsrWindow { start, len, removed, flagged: false });
    }

    let data: Vec<Vec<f64>> = rec
        .data
        .iter()
        .zip(&correction)
        .map(|(x, corr)| {
            x.iter()
                .zip(corr)
                .zip(&weight_sum)
                .map(|((&v, &c), &ws)| if c == 0.0 { v } else { v + c / ws })
                .collect()
        })
        .collect();
    let recording = rec.with_data(data);

    for w in &mut windows {
        let bad = channel_rms(&recording, w.start, w.len)
            .iter()
            .zip(&model.channel_thresholds)
            .filter(|(r, t)| r > t)
            .count();
        w.flagged = bad as f64 / ch as f64 > cfg.window_criterion;
    }
    Ok(AsrOutput { recording, windows })
}
