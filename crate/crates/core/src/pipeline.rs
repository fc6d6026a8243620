//! Declarative end-to-end run: configuration, validation, stage execution
//! and report files.
//!
//! The configuration is TOML. Every key has a default, so a minimal file
//! only names the inputs and a seed:
//!
//! ```toml
//! seed = 7
//! [input]
//! session = "session.csv"
//! events = "events.csv"
//! ```
//!
//! Relative paths resolve against the configuration file's directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::artifact::{
    asr_calibrate, asr_process, best_candidate, ecg_candidates, ica_decompose_with, AsrConfig, EcgCandidate,
    IcaConfig,
};
use crate::cardiac::{match_beats, read_rr_csv, rr_outlier_filter_with, rr_periods, BeatSeries, OutlierParams};
use crate::filters::{
    apply_zero_phase, baseline_correct, design_fir, remove_line_noise, FirSpec, LineNoiseParams,
};
use crate::ingest::{cut_segments, read_events, read_session, IntegrityReport};
use crate::montage::{below_ear_montage, default_montage, rereference_linked_mastoid, ElectrodeLabel, MontageMap};
use crate::spectral::{
    average_psds, band_power, default_bands, qc_report, to_db, welch_recording, BandDefinition, BandPowerTable,
    ChannelQc, SegmentAveraging, WelchParams,
};
use crate::stats::{analyze, bland_altman, AnalysisOptions, AnalysisReport, AnalysisRow, BlandAltmanReport};
use crate::{Error, Recording, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Baseline,
    Reref,
    LineNoise,
    Highpass,
    Lowpass,
    Ica,
    Asr,
    Psd,
}

impl Stage {
    /// Default order: mean removal, linked mastoids, line noise, high-pass,
    /// low-pass, ICA, ASR, Welch PSD.
    pub fn default_order() -> Vec<Stage> {
        use Stage::*;
        vec![Baseline, Reref, LineNoise, Highpass, Lowpass, Ica, Asr, Psd]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub session: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub participant: String,
    /// Sampling rate used when the session file carries neither a `#rate=`
    /// line nor timestamps.
    pub rate: Option<f64>,
    pub montage: Option<PathBuf>,
    /// `default` or `below-ear`, used when `montage` is unset.
    pub montage_preset: String,
    /// R-R CSV from a reference ECG; enables the agreement report.
    pub reference_rr: Option<PathBuf>,
    /// `participant,condition,tlx_total,flow_mean` joined into the analysis.
    pub survey: Option<PathBuf>,
}

impl Default for InputConfig {
    fn default() -> Self {
        InputConfig {
            session: None,
            events: None,
            participant: "P01".into(),
            rate: None,
            montage: None,
            montage_preset: "default".into(),
            reference_rr: None,
            survey: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: "out".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub hp_cutoff_hz: f64,
    pub hp_order: usize,
    pub lp_cutoff_hz: f64,
    pub lp_order: usize,
    pub line_freq_hz: f64,
    pub line_win_s: f64,
    pub line_step_s: f64,
    pub line_harmonics: usize,
    pub reref_left: String,
    pub reref_right: String,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            hp_cutoff_hz: 1.0,
            hp_order: 500,
            lp_cutoff_hz: 45.0,
            lp_order: 100,
            line_freq_hz: 50.0,
            line_win_s: 4.0,
            line_step_s: 1.0,
            line_harmonics: 1,
            reref_left: "L5".into(),
            reref_right: "R5".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArtifactConfig {
    pub asr_burst_k: f64,
    pub asr_window_criterion: f64,
    pub asr_calib_win_s: f64,
    pub asr_proc_win_s: f64,
    pub asr_calib_z: (f64, f64),
    pub asr_window_z_max: f64,
    pub ica_max_iter: usize,
    pub ica_tol: f64,
    /// Falls back to the top-level `seed`.
    pub ica_seed: Option<u64>,
    pub ica_n_components: Option<usize>,
    pub ica_initial_learning_rate: f64,
}

impl Default for ArtifactConfig {
    fn default() -> Self {
        let asr = AsrConfig::default();
        let ica = IcaConfig::default();
        ArtifactConfig {
            asr_burst_k: asr.burst_k,
            asr_window_criterion: asr.window_criterion,
            asr_calib_win_s: asr.calib_win_s,
            asr_proc_win_s: asr.proc_win_s,
            asr_calib_z: asr.calib_z,
            asr_window_z_max: asr.window_z_max,
            ica_max_iter: ica.max_iter,
            ica_tol: ica.tol,
            ica_seed: None,
            ica_n_components: None,
            ica_initial_learning_rate: ica.initial_learning_rate,
        }
    }
}

impl ArtifactConfig {
    pub fn asr(&self) -> AsrConfig {
        AsrConfig {
            burst_k: self.asr_burst_k,
            window_criterion: self.asr_window_criterion,
            calib_win_s: self.asr_calib_win_s,
            proc_win_s: self.asr_proc_win_s,
            calib_z: self.asr_calib_z,
            window_z_max: self.asr_window_z_max,
            ..AsrConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralConfig {
    pub segment: usize,
    pub overlap: usize,
    pub averaging: SegmentAveraging,
    pub bands: Vec<BandDefinition>,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        let w = WelchParams::default();
        SpectralConfig {
            segment: w.segment,
            overlap: w.overlap,
            averaging: SegmentAveraging::PerSegmentMean,
            bands: default_bands(),
        }
    }
}

impl SpectralConfig {
    pub fn welch(&self) -> WelchParams {
        WelchParams {
            segment: self.segment,
            overlap: self.overlap,
            ..WelchParams::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CardiacConfig {
    pub match_tolerance_s: f64,
    pub rr_range_ms: (f64, f64),
    pub rr_median_window: usize,
    pub rr_mad_k: f64,
}

impl Default for CardiacConfig {
    fn default() -> Self {
        let o = OutlierParams::default();
        CardiacConfig {
            match_tolerance_s: crate::cardiac::DEFAULT_MATCH_TOLERANCE_S,
            rr_range_ms: o.range_ms,
            rr_median_window: o.window,
            rr_mad_k: o.mad_k,
        }
    }
}

impl CardiacConfig {
    pub fn outliers(&self) -> OutlierParams {
        OutlierParams {
            range_ms: self.rr_range_ms,
            window: self.rr_median_window,
            mad_k: self.rr_mad_k,
            ..OutlierParams::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: Option<u64>,
    pub stages: Vec<Stage>,
    /// Permit PSD without both FIR stages ahead of it.
    pub allow_unfiltered_psd: bool,
    pub input: InputConfig,
    pub output: OutputConfig,
    pub filters: FilterConfig,
    pub artifact: ArtifactConfig,
    pub spectral: SpectralConfig,
    pub cardiac: CardiacConfig,
    pub analysis: AnalysisOptions,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: None,
            stages: Stage::default_order(),
            allow_unfiltered_psd: false,
            input: InputConfig::default(),
            output: OutputConfig::default(),
            filters: FilterConfig::default(),
            artifact: ArtifactConfig::default(),
            spectral: SpectralConfig::default(),
            cardiac: CardiacConfig::default(),
            analysis: AnalysisOptions::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    /// Reads the file and resolves relative paths against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let i = &mut self.input;
        for p in [&mut i.session, &mut i.events, &mut i.montage, &mut i.reference_rr, &mut i.survey]
            .into_iter()
            .flatten()
        {
            fix(p);
        }
        fix(&mut self.output.dir);
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn ica_seed(&self) -> Option<u64> {
        self.artifact.ica_seed.or(self.seed)
    }

    pub fn has(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    fn position(&self, stage: Stage) -> Option<usize> {
        self.stages.iter().position(|&s| s == stage)
    }

    /// Checks that do not need the data.
    pub fn validate(&self) -> Result<()> {
        let mut seen = Vec::new();
        for s in &self.stages {
            if seen.contains(s) {
                return Err(Error::Config(format!("stage {s:?} listed twice")));
            }
            seen.push(*s);
        }
        if let Some(psd) = self.position(Stage::Psd) {
            if psd + 1 != self.stages.len() {
                return Err(Error::Config("psd must be the last stage".into()));
            }
            if !self.allow_unfiltered_psd {
                for needed in [Stage::Highpass, Stage::Lowpass] {
                    if self.position(needed).is_none_or(|p| p > psd) {
                        return Err(Error::Config(format!(
                            "psd requires a {needed:?} stage before it (set allow_unfiltered_psd to override)"
                        )));
                    }
                }
            }
        }
        if self.has(Stage::Ica) && self.ica_seed().is_none() {
            return Err(Error::Config("ica stage requires an explicit seed (seed or artifact.ica_seed)".into()));
        }
        if self.has(Stage::Ica) && self.artifact.ica_max_iter == 0 {
            return Err(Error::Config("ica_max_iter must be positive".into()));
        }
        if self.has(Stage::Asr) {
            self.artifact.asr().validate()?;
        }
        if self.has(Stage::Psd) {
            self.spectral.welch().validate()?;
            for b in &self.spectral.bands {
                if !(b.lo < b.hi) {
                    return Err(Error::Config(format!("band {} has lo ≥ hi", b.name)));
                }
            }
        }
        if self.has(Stage::Reref) {
            self.reref_labels()?;
        }
        let f = &self.filters;
        if self.has(Stage::LineNoise) && !(f.line_freq_hz > 0.0 && f.line_win_s > 0.0 && f.line_step_s > 0.0) {
            return Err(Error::Config("line-noise frequency and windows must be positive".into()));
        }
        if let Some(rate) = self.input.rate {
            self.validate_for_rate(rate)?;
        }
        if !(self.cardiac.match_tolerance_s > 0.0) {
            return Err(Error::Config("match_tolerance_s must be positive".into()));
        }
        Ok(())
    }

    /// Checks that depend on the sampling rate.
    pub fn validate_for_rate(&self, rate: f64) -> Result<()> {
        if self.has(Stage::Highpass) {
            self.highpass().validate(rate)?;
        }
        if self.has(Stage::Lowpass) {
            self.lowpass().validate(rate)?;
        }
        if self.has(Stage::LineNoise) && self.filters.line_freq_hz >= rate / 2.0 {
            return Err(Error::Config(format!(
                "line frequency {} Hz ≥ Nyquist at {rate} Hz",
                self.filters.line_freq_hz
            )));
        }
        if self.has(Stage::Psd) {
            let nyquist = rate / 2.0;
            if let Some(b) = self.spectral.bands.iter().find(|b| b.hi > nyquist) {
                return Err(Error::Config(format!("band {} extends beyond Nyquist {nyquist} Hz", b.name)));
            }
        }
        Ok(())
    }

    pub fn highpass(&self) -> FirSpec {
        FirSpec::highpass(self.filters.hp_cutoff_hz, self.filters.hp_order)
    }

    pub fn lowpass(&self) -> FirSpec {
        FirSpec::lowpass(self.filters.lp_cutoff_hz, self.filters.lp_order)
    }

    pub fn line_noise(&self) -> LineNoiseParams {
        LineNoiseParams {
            f0: self.filters.line_freq_hz,
            win_s: self.filters.line_win_s,
            step_s: self.filters.line_step_s,
            harmonics: self.filters.line_harmonics,
        }
    }

    fn reref_labels(&self) -> Result<(ElectrodeLabel, ElectrodeLabel)> {
        let parse = |s: &str| {
            s.parse::<ElectrodeLabel>()
                .map_err(|_| Error::Config(format!("reref electrode `{s}` is not a cEEGrid label")))
        };
        Ok((parse(&self.filters.reref_left)?, parse(&self.filters.reref_right)?))
    }

    pub fn montage(&self) -> Result<MontageMap> {
        match (&self.input.montage, self.input.montage_preset.as_str()) {
            (Some(path), _) => MontageMap::load(path),
            (None, "default") => Ok(default_montage()),
            (None, "below-ear") => Ok(below_ear_montage()),
            (None, other) => Err(Error::Config(format!("unknown montage preset `{other}`"))),
        }
    }

    pub fn ica(&self) -> IcaConfig {
        IcaConfig {
            n_components: self.artifact.ica_n_components,
            max_iter: self.artifact.ica_max_iter,
            tol: self.artifact.ica_tol,
            seed: self.ica_seed().unwrap_or(0),
            initial_learning_rate: self.artifact.ica_initial_learning_rate,
        }
    }
}

/// 2 for configuration problems, 3 for everything about the data.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        _ => 3,
    }
}

pub fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::Config(_) => "config",
        Error::Data(_) => "data",
        Error::TooShort { .. } => "too-short",
        Error::Calibration { .. } => "calibration",
        Error::ZeroVariance(_) => "zero-variance",
        Error::Io { .. } => "io",
        Error::Csv(_) => "csv",
        Error::Json(_) => "json",
    }
}

/// Machine-readable error line for stderr.
pub fn diagnostic(e: &Error) -> String {
    serde_json::json!({
        "error": error_kind(e),
        "message": e.to_string(),
        "exit_code": exit_code(e),
    })
    .to_string()
}

// ---------------------------------------------------------------------------
// reports

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentIntegrity {
    pub condition: String,
    pub start_s: f64,
    pub end_s: f64,
    pub report: IntegrityReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionQc {
    pub condition: String,
    pub channels: Vec<ChannelQc>,
    pub welch_windows: usize,
    pub asr_flagged_windows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcFile {
    pub participant: String,
    pub rate: f64,
    pub stages: Vec<Stage>,
    pub conditions: Vec<ConditionQc>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ecg_component: Option<EcgSummary>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcgSummary {
    pub component: usize,
    pub score: f64,
    pub inverted: bool,
    pub beats: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementFile {
    pub tolerance_s: f64,
    pub matched: usize,
    pub unmatched_reference: usize,
    pub unmatched_alt: usize,
    pub bland_altman: Option<BlandAltmanReport>,
}

#[derive(Debug, Clone, Default)]
pub struct RunSummary {
    pub files: Vec<PathBuf>,
    pub band_table: Option<BandPowerTable>,
    pub beats: Option<BeatSeries>,
    pub warnings: Vec<String>,
}

pub const BANDS_FILE: &str = "bands.csv";
pub const QC_FILE: &str = "qc.json";
pub const INTEGRITY_FILE: &str = "integrity.json";
pub const RR_FILE: &str = "rr.csv";
pub const AGREEMENT_FILE: &str = "agreement.json";
pub const REGRESSION_FILE: &str = "regression.json";
pub const REGRESSION_TEXT_FILE: &str = "regression.txt";
pub const META_FILE: &str = "run_meta.json";

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// execution

struct Working {
    condition: String,
    start_s: f64,
    rec: Recording,
    /// Samples inside ASR-flagged windows.
    flagged: Vec<bool>,
    flagged_windows: usize,
}

fn concat<'a>(segments: impl IntoIterator<Item = &'a Working>) -> Result<Recording> {
    let segments: Vec<&Working> = segments.into_iter().collect();
    let first = &segments[0].rec;
    let mut data = vec![Vec::new(); first.n_channels()];
    for s in &segments {
        for (dst, src) in data.iter_mut().zip(&s.rec.data) {
            dst.extend_from_slice(src);
        }
    }
    Recording::new(first.rate, first.labels.clone(), data)
}

/// Session time of a sample index in the concatenation of `segments`.
fn session_time(segments: &[Working], mut index: usize, rate: f64) -> f64 {
    for s in segments {
        let n = s.rec.n_samples();
        if index < n {
            return s.start_s + index as f64 / rate;
        }
        index -= n;
    }
    f64::NAN
}

fn session_beats(segments: &[Working], cand: &EcgCandidate, rate: f64) -> BeatSeries {
    let mut times: Vec<f64> = cand
        .beats
        .beat_times
        .iter()
        .map(|&t| {
            let i = (t * rate).floor().max(0.0) as usize;
            session_time(segments, i, rate) + (t - i as f64 / rate)
        })
        .filter(|t| t.is_finite())
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    BeatSeries { beat_times: times, rate }
}

#[derive(Debug, Deserialize)]
struct SurveyRow {
    participant: String,
    condition: String,
    tlx_total: Option<f64>,
    flow_mean: Option<f64>,
}

fn read_survey(path: &Path) -> Result<BTreeMap<(String, String), (Option<f64>, Option<f64>)>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = BTreeMap::new();
    for row in reader.deserialize() {
        let r: SurveyRow = row?;
        out.insert((r.participant, r.condition), (r.tlx_total, r.flow_mean));
    }
    Ok(out)
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a PathBuf> {
    p.as_ref().ok_or_else(|| Error::Config(format!("input.{what} is not set")))
}

/// Runs every configured stage and writes the reports into `output.dir`.
pub fn run(cfg: &PipelineConfig) -> Result<RunSummary> {
    cfg.validate()?;
    let session_path = required(&cfg.input.session, "session")?;
    let events_path = required(&cfg.input.events, "events")?;
    let montage = cfg.montage()?;

    let session = read_session(session_path, cfg.input.rate)?;
    let events = read_events(events_path)?;
    cfg.validate_for_rate(session.rate)?;
    let rate = session.rate;
    let session = montage.relabel(&session);

    let out_dir = &cfg.output.dir;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut summary = RunSummary::default();
    let mut warnings = Vec::new();

    let segments = cut_segments(&session, &events);
    let integrity: Vec<SegmentIntegrity> = segments
        .iter()
        .map(|s| SegmentIntegrity {
            condition: s.condition.clone(),
            start_s: s.start_s,
            end_s: s.end_s,
            report: s.report.clone(),
        })
        .collect();
    let path = out_dir.join(INTEGRITY_FILE);
    write_json(&path, &integrity)?;
    summary.files.push(path);

    let mut work: Vec<Working> = Vec::new();
    for s in segments {
        if s.recording.n_samples() == 0 {
            warnings.push(format!("segment {} [{}, {}) s is empty; skipped", s.condition, s.start_s, s.end_s));
            continue;
        }
        if s.report.is_flagged() {
            warnings.push(format!("segment {} [{}, {}) s: {:?}", s.condition, s.start_s, s.end_s, s.report.issues));
        }
        let n = s.recording.n_samples();
        work.push(Working {
            condition: s.condition,
            start_s: s.start_s,
            rec: s.recording,
            flagged: vec![false; n],
            flagged_windows: 0,
        });
    }
    if work.is_empty() {
        return Err(Error::Data("no non-empty segments to process".into()));
    }

    let highpass = cfg.has(Stage::Highpass).then(|| design_fir(&cfg.highpass(), rate)).transpose()?;
    let lowpass = cfg.has(Stage::Lowpass).then(|| design_fir(&cfg.lowpass(), rate)).transpose()?;
    let mut ecg: Option<(EcgCandidate, BeatSeries)> = None;
    let mut psd_done = None;

    for &stage in &cfg.stages {
        match stage {
            Stage::Baseline => {
                for w in &mut work {
                    w.rec = baseline_correct(&w.rec)?;
                }
            }
            Stage::Reref => {
                let (l, r) = cfg.reref_labels()?;
                for w in &mut work {
                    w.rec = rereference_linked_mastoid(&w.rec, &montage, l, r)?;
                }
            }
            Stage::LineNoise => {
                let p = cfg.line_noise();
                for w in &mut work {
                    w.rec = remove_line_noise(&w.rec, &p)?;
                }
            }
            Stage::Highpass | Stage::Lowpass => {
                let f = if stage == Stage::Highpass { &highpass } else { &lowpass };
                let f = f.as_ref().expect("designed above");
                for w in &mut work {
                    w.rec = apply_zero_phase(&w.rec, f)?;
                }
            }
            Stage::Ica => {
                let all = concat(&work)?;
                let ica = ica_decompose_with(&all, &cfg.ica())?;
                warnings.extend(ica.warnings.iter().cloned());
                match best_candidate(ecg_candidates(&ica, rate)) {
                    Some(c) => {
                        let beats = session_beats(&work, &c, rate);
                        ecg = Some((c, beats));
                    }
                    None => warnings.push("no independent component passed the ECG score floor".into()),
                }
            }
            Stage::Asr => {
                let asr = cfg.artifact.asr();
                let model = asr_calibrate(&concat(&work)?, &asr)?;
                for w in &mut work {
                    let out = asr_process(&w.rec, &model, &asr)?;
                    w.flagged_windows = out.windows.iter().filter(|x| x.flagged).count();
                    for (m, f) in w.flagged.iter_mut().zip(out.flagged_mask()) {
                        *m |= f;
                    }
                    w.rec = out.recording;
                }
            }
            Stage::Psd => {
                psd_done = Some(spectral_reports(cfg, &work, &mut warnings)?);
            }
        }
    }

    if let Some((table, conditions)) = psd_done {
        let path = out_dir.join(BANDS_FILE);
        table.write_csv(&path)?;
        summary.files.push(path);

        let qc = QcFile {
            participant: cfg.input.participant.clone(),
            rate,
            stages: cfg.stages.clone(),
            conditions,
            ecg_component: ecg.as_ref().map(|(c, b)| EcgSummary {
                component: c.index,
                score: c.score,
                inverted: c.inverted,
                beats: b.len(),
            }),
            warnings: warnings.clone(),
        };
        let path = out_dir.join(QC_FILE);
        write_json(&path, &qc)?;
        summary.files.push(path);

        let survey = match &cfg.input.survey {
            Some(p) => read_survey(p)?,
            None => BTreeMap::new(),
        };
        let rows: Vec<AnalysisRow> = table
            .rows
            .iter()
            .map(|r| {
                let (tlx, flow) = survey
                    .get(&(r.participant.clone(), r.condition.clone()))
                    .copied()
                    .unwrap_or((None, None));
                AnalysisRow {
                    participant: r.participant.clone(),
                    condition: r.condition.clone(),
                    channel: r.channel.clone(),
                    band: r.band.clone(),
                    power_db: r.power_db,
                    tlx_total: tlx,
                    flow_mean: flow,
                }
            })
            .collect();
        let report = analyze(&rows, &cfg.analysis).unwrap_or_else(|e| AnalysisReport {
            bands: Vec::new(),
            workload_contrasts: None,
            notes: vec![format!("analysis skipped: {e}")],
        });
        let path = out_dir.join(REGRESSION_FILE);
        write_json(&path, &report)?;
        summary.files.push(path);
        let path = out_dir.join(REGRESSION_TEXT_FILE);
        write_text(&path, &crate::stats::format_report(&report))?;
        summary.files.push(path);
        summary.band_table = Some(table);
    }

    if cfg.has(Stage::Ica) {
        let path = out_dir.join(RR_FILE);
        let text = match &ecg {
            Some((_, beats)) if beats.len() >= 2 => {
                let rr = rr_periods(beats)?;
                let filtered = rr_outlier_filter_with(&rr, &cfg.cardiac.outliers());
                crate::cardiac::format_rr_csv(&rr, Some(&filtered.dropped_mask))?
            }
            _ => "beat_time_s,rr_ms,flag\n".to_string(),
        };
        write_text(&path, &text)?;
        summary.files.push(path);

        if let Some(ref_path) = &cfg.input.reference_rr {
            let reference = read_rr_csv(ref_path, false)?;
            let ref_beats = BeatSeries { beat_times: reference.beat_times(), rate };
            let alt = ecg.as_ref().map(|(_, b)| b.clone()).unwrap_or(BeatSeries { beat_times: Vec::new(), rate });
            let m = match_beats(&ref_beats, &alt, cfg.cardiac.match_tolerance_s)?;
            let (r, a) = m.paired_rr();
            let agreement = AgreementFile {
                tolerance_s: m.tolerance,
                matched: m.pairs.len(),
                unmatched_reference: m.unmatched_ref,
                unmatched_alt: m.unmatched_alt,
                bland_altman: bland_altman(&r, &a).ok(),
            };
            let path = out_dir.join(AGREEMENT_FILE);
            write_json(&path, &agreement)?;
            summary.files.push(path);
        }
        summary.beats = ecg.map(|(_, b)| b);
    }

    // the only non-deterministic output lives in its own file
    let started = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let meta = serde_json::json!({
        "earpipe_version": env!("CARGO_PKG_VERSION"),
        "finished_unix_s": started,
        "reports": summary.files.iter().filter_map(|p| p.file_name()).map(|f| f.to_string_lossy()).collect::<Vec<_>>(),
        "warnings": warnings.clone(),
    });
    let path = out_dir.join(META_FILE);
    write_json(&path, &meta)?;
    summary.warnings = warnings;
    Ok(summary)
}

fn spectral_reports(
    cfg: &PipelineConfig,
    work: &[Working],
    warnings: &mut Vec<String>,
) -> Result<(BandPowerTable, Vec<ConditionQc>)> {
    let welch = cfg.spectral.welch();
    let mut order: Vec<&str> = Vec::new();
    for w in work {
        if !order.contains(&w.condition.as_str()) {
            order.push(&w.condition);
        }
    }
    let mut table = BandPowerTable::default();
    let mut qc = Vec::new();
    for condition in order {
        let members: Vec<&Working> = work.iter().filter(|w| w.condition == condition).collect();
        let mut psds = Vec::new();
        for w in &members {
            let exclude = w.flagged.iter().any(|&f| f).then_some(w.flagged.as_slice());
            match welch_recording(&w.rec, &welch, exclude) {
                Ok(p) => psds.push(p),
                Err(Error::Data(msg)) => warnings.push(format!("{condition}: {msg}")),
                Err(e) => return Err(e),
            }
        }
        if psds.is_empty() {
            warnings.push(format!("{condition}: no usable Welch windows; condition omitted"));
            continue;
        }
        let linear = average_psds(&psds, cfg.spectral.averaging)?;
        let db = to_db(&linear)?;
        let values = band_power(&db, &cfg.spectral.bands)?;
        let labels = &members[0].rec.labels;
        table.insert(&cfg.input.participant, condition, labels, &cfg.spectral.bands, &values);
        let joined = concat(members.iter().copied())?;
        qc.push(ConditionQc {
            condition: condition.to_string(),
            channels: qc_report(&joined, &linear, cfg.filters.line_freq_hz)?.channels,
            welch_windows: linear.window_count,
            asr_flagged_windows: members.iter().map(|w| w.flagged_windows).sum(),
        });
    }
    Ok((table, qc))
}
