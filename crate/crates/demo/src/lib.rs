//! Browser bindings for three earpipe operations: eyes-open/closed spectra of
//! a synthetic session, FIR magnitude responses, and QRS detection on a noisy
//! synthetic ECG.

use earpipe::cardiac::{match_beats, pan_tompkins};
use earpipe::filters::{design_fir, FirSpec};
use earpipe::ingest::cut_segments;
use earpipe::spectral::{welch_recording, WelchParams};
use earpipe::synth::{berger_session, gen_ecg, BergerSpec, EcgSynthSpec};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use wasm_bindgen::prelude::*;

fn js_err(e: earpipe::Error) -> JsError {
    JsError::new(&e.to_string())
}

/// Channel-mean spectra (dB) of the open and closed segments.
#[wasm_bindgen]
pub struct BergerPsd {
    freqs: Vec<f64>,
    open_db: Vec<f64>,
    closed_db: Vec<f64>,
    alpha_gain_db: f64,
}

#[wasm_bindgen]
impl BergerPsd {
    #[wasm_bindgen(getter)]
    pub fn freqs(&self) -> Vec<f64> {
        self.freqs.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn open_db(&self) -> Vec<f64> {
        self.open_db.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn closed_db(&self) -> Vec<f64> {
        self.closed_db.clone()
    }

    /// Closed minus open, median over the 8–12 Hz bins.
    #[wasm_bindgen(getter)]
    pub fn alpha_gain_db(&self) -> f64 {
        self.alpha_gain_db
    }
}

fn channel_mean_db(power: &[Vec<f64>]) -> Vec<f64> {
    let bins = power[0].len();
    (0..bins)
        .map(|k| {
            let mean = power.iter().map(|row| row[k]).sum::<f64>() / power.len() as f64;
            10.0 * mean.max(earpipe::spectral::POWER_FLOOR).log10()
        })
        .collect()
}

/// Synthesizes a four-channel session with the given closed/open alpha ratio
/// and returns Welch spectra per condition.
#[wasm_bindgen]
pub fn berger_psd(closed_ratio: f64, seed: u32) -> Result<BergerPsd, JsError> {
    let spec = BergerSpec {
        segment_s: 30.0,
        channels: 4,
        seed: u64::from(seed),
        closed_ratio,
        ..Default::default()
    };
    let (rec, events) = berger_session(&spec).map_err(js_err)?;
    let mut spectra = Vec::new();
    for seg in cut_segments(&rec, &events) {
        let psd = welch_recording(&seg.recording, &WelchParams::default(), None).map_err(js_err)?;
        spectra.push((psd.freqs.clone(), channel_mean_db(&psd.power)));
    }
    let [(freqs, open_db), (_, closed_db)] = <[_; 2]>::try_from(spectra)
        .map_err(|_| JsError::new("expected exactly two segments"))?;
    let mut gains: Vec<f64> = freqs
        .iter()
        .enumerate()
        .filter(|(_, f)| (8.0..=12.0).contains(*f))
        .map(|(k, _)| closed_db[k] - open_db[k])
        .collect();
    gains.sort_by(f64::total_cmp);
    let alpha_gain_db = gains.get(gains.len() / 2).copied().unwrap_or(0.0);
    Ok(BergerPsd { freqs, open_db, closed_db, alpha_gain_db })
}

/// Magnitude response in dB at `points` frequencies from 0 to Nyquist.
/// `kind` is `"highpass"` or `"lowpass"`.
#[wasm_bindgen]
pub fn fir_response(kind: &str, cutoff: f64, order: usize, rate: f64, points: usize) -> Result<Vec<f64>, JsError> {
    let spec = match kind {
        "highpass" => FirSpec::highpass(cutoff, order),
        "lowpass" => FirSpec::lowpass(cutoff, order),
        other => return Err(JsError::new(&format!("unknown filter kind `{other}`"))),
    };
    let filter = design_fir(&spec, rate).map_err(js_err)?;
    let points = points.max(2);
    Ok((0..points)
        .map(|i| {
            let f = rate / 2.0 * i as f64 / (points - 1) as f64;
            20.0 * filter.magnitude(f, rate).max(1e-12).log10()
        })
        .collect())
}

/// A noisy synthetic ECG, its planted beats and the detected beats.
#[wasm_bindgen]
pub struct BeatDemo {
    rate: f64,
    signal: Vec<f64>,
    truth: Vec<f64>,
    detected: Vec<f64>,
    matched: usize,
}

#[wasm_bindgen]
impl BeatDemo {
    #[wasm_bindgen(getter)]
    pub fn rate(&self) -> f64 {
        self.rate
    }

    #[wasm_bindgen(getter)]
    pub fn signal(&self) -> Vec<f64> {
        self.signal.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn truth(&self) -> Vec<f64> {
        self.truth.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn detected(&self) -> Vec<f64> {
        self.detected.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn sensitivity(&self) -> f64 {
        self.matched as f64 / self.truth.len().max(1) as f64
    }

    #[wasm_bindgen(getter)]
    pub fn precision(&self) -> f64 {
        self.matched as f64 / self.detected.len().max(1) as f64
    }
}

/// Twenty seconds of ECG at 250 Hz with white noise at `snr_db` relative to
/// the mean signal power, run through QRS detection.
#[wasm_bindgen]
pub fn detect_beats(bpm: f64, snr_db: f64, seed: u32) -> Result<BeatDemo, JsError> {
    let spec = EcgSynthSpec {
        rate: 250.0,
        duration: 20.0,
        bpm,
        rr_jitter_ms: 30.0,
        seed: u64::from(seed),
        ..Default::default()
    };
    let (rec, truth) = gen_ecg(&spec).map_err(js_err)?;
    let clean = &rec.data[0];
    let power = clean.iter().map(|v| v * v).sum::<f64>() / clean.len() as f64;
    let noise = Normal::new(0.0, (power / 10f64.powf(snr_db / 10.0)).sqrt()).map_err(|e| JsError::new(&e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(u64::from(seed) ^ 0x5eed);
    let signal: Vec<f64> = clean.iter().map(|v| v + noise.sample(&mut rng)).collect();
    let detected = pan_tompkins(&signal, rec.rate).map_err(js_err)?;
    let matched = match_beats(&truth, &detected, 0.15).map_err(js_err)?.pairs.len();
    Ok(BeatDemo {
        rate: rec.rate,
        signal,
        truth: truth.beat_times,
        detected: detected.beat_times,
        matched,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_eyes_raise_alpha() {
        let psd = berger_psd(3.0, 1).unwrap();
        assert_eq!(psd.freqs().len(), psd.open_db().len());
        assert!(psd.alpha_gain_db() > 6.0, "{}", psd.alpha_gain_db());
        assert!(berger_psd(1.0, 1).unwrap().alpha_gain_db().abs() < 1.0);
    }

    #[test]
    fn lowpass_response_shape() {
        let db = fir_response("lowpass", 45.0, 100, 125.0, 126).unwrap();
        assert!(db[0].abs() < 1e-6);
        assert!(db[120] < -20.0);
    }

    #[test]
    fn clean_beats_are_all_found() {
        let demo = detect_beats(75.0, 20.0, 2).unwrap();
        assert_eq!(demo.sensitivity(), 1.0);
        assert_eq!(demo.precision(), 1.0);
        assert_eq!(demo.signal().len(), 5000);
    }
}
