//! `earpipe` command-line front end.
//!
//! Exit status: 0 on success, 2 for configuration errors, 3 for data and I/O
//! errors. Failures print a one-line JSON diagnostic on stderr.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use earpipe::artifact::{best_candidate, ecg_candidates, ica_decompose_with};
use earpipe::cardiac::{
    format_rr_csv, match_beats, pan_tompkins, read_rr_csv, rr_outlier_filter_with, rr_periods, BeatSeries,
};
use earpipe::ingest::{frames_to_recording, parse_stream, read_session, write_events, write_session, ParseOptions};
use earpipe::pipeline::{self, AgreementFile, PipelineConfig, Stage};
use earpipe::spectral::BandPowerTable;
use earpipe::stats::{analyze, bland_altman, format_report, read_analysis_csv};
use earpipe::synth::{
    berger_session, gen_ecg, gen_ecg_in_eeg, gen_eeg, BergerSpec, EcgInEegSpec, EcgSynthSpec, EegSynthSpec,
};
use earpipe::{Error, Event, Recording};
use serde::Deserialize;
use serde_json::json;

#[derive(Parser)]
#[command(name = "earpipe", version, about = "Around-the-ear EEG/ECG processing")]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for randomized stages; overrides the config and synth specs.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Mains frequency removed by the line-noise stage.
    #[arg(long, global = true, value_parser = ["50", "60"])]
    line_freq: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode a raw Cyton(+Daisy) byte stream into a session CSV.
    Parse {
        raw: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 125.0)]
        rate: f64,
        /// Cyton board alone: 8 channels per frame.
        #[arg(long)]
        no_daisy: bool,
    },
    /// Generate a synthetic session from a spec file.
    Synth {
        spec: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Run the configured pipeline (requires --config).
    Run,
    /// Band power per condition, skipping the ICA stage.
    Bands {
        #[arg(long)]
        session: Option<PathBuf>,
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Detect heart beats and write an R-R CSV.
    Ecg {
        session: PathBuf,
        /// Detect on this channel instead of the best independent component.
        #[arg(long)]
        channel: Option<String>,
        #[arg(long, default_value = "rr.csv")]
        out: PathBuf,
    },
    /// Beat matching and Bland-Altman statistics between two R-R CSVs.
    Agree {
        reference: PathBuf,
        alternative: PathBuf,
        #[arg(long)]
        tolerance: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Condition contrasts and workload regressions over an analysis table.
    Analyze {
        table: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (line, code) = match err.downcast_ref::<Error>() {
                Some(e) => (pipeline::diagnostic(e), pipeline::exit_code(e)),
                None => {
                    let line = json!({ "error": "internal", "message": format!("{err:#}"), "exit_code": 3 });
                    (line.to_string(), 3)
                }
            };
            eprintln!("{line}");
            ExitCode::from(code as u8)
        }
    }
}

fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Parse { raw, out_dir, rate, no_daisy } => cmd_parse(raw, out_dir, *rate, !no_daisy),
        Command::Synth { spec, out_dir } => cmd_synth(spec, out_dir, cli.seed),
        Command::Run => cmd_run(cli),
        Command::Bands { session, events, out_dir } => cmd_bands(cli, session, events, out_dir),
        Command::Ecg { session, channel, out } => cmd_ecg(cli, session, channel.as_deref(), out),
        Command::Agree { reference, alternative, tolerance, out } => {
            cmd_agree(cli, reference, alternative, *tolerance, out.as_deref())
        }
        Command::Analyze { table, out_dir } => cmd_analyze(cli, table, out_dir.as_deref()),
    }
}

/// Config from `--config` (or defaults) with the global overrides applied.
fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    if let Some(f) = &cli.line_freq {
        cfg.filters.line_freq_hz = f.parse().expect("validated by clap");
    }
    Ok(cfg)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn cmd_parse(raw: &Path, out_dir: &Path, rate: f64, daisy: bool) -> Result<()> {
    let bytes = fs::read(raw).map_err(|e| Error::io(raw, e))?;
    let opts = ParseOptions { rate, daisy, ..ParseOptions::default() };
    let (frames, report) = parse_stream(&bytes, opts)?;
    let rec = frames_to_recording(&frames, rate)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_session(out_dir.join("session.csv"), &rec)?;
    write_json(&out_dir.join("integrity.json"), &report)?;
    println!(
        "{}",
        json!({ "frames": frames.len(), "resyncs": report.resyncs, "dropped_packets": report.dropped_packets, "orphan_packets": report.orphan_packets })
    );
    Ok(())
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
enum SynthFile {
    Eeg(EegSynthSpec),
    Ecg(EcgSynthSpec),
    Berger(BergerSpec),
    EcgInEeg(EcgInEegSpec),
}

fn whole_session(rec: &Recording) -> Vec<Event> {
    vec![Event::new("session", 0.0, rec.duration())]
}

fn cmd_synth(spec_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let text = fs::read_to_string(spec_path).map_err(|e| Error::io(spec_path, e))?;
    let spec: SynthFile = toml::from_str(&text).map_err(|e| Error::Config(format!("synth spec: {e}")))?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let (rec, events, truth, beats) = match spec {
        SynthFile::Eeg(mut s) => {
            s.seed = seed.unwrap_or(s.seed);
            let (rec, truth) = gen_eeg(&s)?;
            let events = whole_session(&rec);
            (rec, events, json!({ "kind": "eeg", "spec": s, "truth": truth }), None)
        }
        SynthFile::Ecg(mut s) => {
            s.seed = seed.unwrap_or(s.seed);
            let (rec, beats) = gen_ecg(&s)?;
            let events = whole_session(&rec);
            (rec, events, json!({ "kind": "ecg", "spec": s, "beat_times": beats.beat_times }), Some(beats))
        }
        SynthFile::Berger(mut s) => {
            s.seed = seed.unwrap_or(s.seed);
            let (rec, events) = berger_session(&s)?;
            (rec, events, json!({ "kind": "berger", "spec": s }), None)
        }
        SynthFile::EcgInEeg(mut s) => {
            s.eeg.seed = seed.unwrap_or(s.eeg.seed);
            let (rec, beats) = gen_ecg_in_eeg(&s)?;
            let events = whole_session(&rec);
            (rec, events, json!({ "kind": "ecg-in-eeg", "spec": s, "beat_times": beats.beat_times }), Some(beats))
        }
    };
    write_session(out_dir.join("session.csv"), &rec)?;
    write_events(out_dir.join("events.csv"), &events)?;
    write_json(&out_dir.join("truth.json"), &truth)?;
    if let Some(beats) = beats {
        write_text(&out_dir.join("reference_rr.csv"), &format_rr_csv(&rr_periods(&beats)?, None)?)?;
    }
    println!("{}", json!({ "channels": rec.n_channels(), "samples": rec.n_samples(), "rate": rec.rate }));
    Ok(())
}

fn cmd_run(cli: &Cli) -> Result<()> {
    if cli.config.is_none() {
        return Err(Error::Config("`run` needs --config".into()).into());
    }
    let cfg = load_config(cli)?;
    let summary = pipeline::run(&cfg)?;
    for w in &summary.warnings {
        eprintln!("warning: {w}");
    }
    let files: Vec<String> = summary.files.iter().map(|p| p.display().to_string()).collect();
    println!("{}", json!({ "reports": files, "beats": summary.beats.map(|b| b.len()) }));
    Ok(())
}

fn cmd_bands(cli: &Cli, session: &Option<PathBuf>, events: &Option<PathBuf>, out_dir: &Option<PathBuf>) -> Result<()> {
    let mut cfg = load_config(cli)?;
    cfg.stages.retain(|s| *s != Stage::Ica);
    if let Some(p) = session {
        cfg.input.session = Some(p.clone());
    }
    if let Some(p) = events {
        cfg.input.events = Some(p.clone());
    }
    if let Some(p) = out_dir {
        cfg.output.dir = p.clone();
    }
    let summary = pipeline::run(&cfg)?;
    let table = summary
        .band_table
        .ok_or_else(|| Error::Config("stage list has no psd stage".into()))?;
    print_band_means(&table, &cfg);
    Ok(())
}

fn print_band_means(table: &BandPowerTable, cfg: &PipelineConfig) {
    let bands = cfg.spectral.bands.clone();
    let mut conditions: Vec<&str> = Vec::new();
    for row in &table.rows {
        if !conditions.contains(&row.condition.as_str()) {
            conditions.push(&row.condition);
        }
    }
    print!("{:<12}", "condition");
    for b in &bands {
        print!("{:>10}", b.name);
    }
    println!();
    for c in conditions {
        print!("{c:<12}");
        for b in &bands {
            match table.channel_mean(&cfg.input.participant, c, &b.name) {
                Some(v) => print!("{v:>10.2}"),
                None => print!("{:>10}", "-"),
            }
        }
        println!();
    }
}

fn cmd_ecg(cli: &Cli, session: &Path, channel: Option<&str>, out: &Path) -> Result<()> {
    let cfg = load_config(cli)?;
    let rec = read_session(session, cfg.input.rate)?;
    let (beats, source) = match channel {
        Some(label) => {
            let row = rec
                .channel_index(label)
                .ok_or_else(|| Error::Config(format!("session has no channel `{label}`")))?;
            (pan_tompkins(&rec.data[row], rec.rate)?, json!({ "channel": label }))
        }
        None => {
            if cfg.ica_seed().is_none() {
                return Err(Error::Config("ICA needs a seed (--seed or config)".into()).into());
            }
            let ica = ica_decompose_with(&rec, &cfg.ica())?;
            let best = best_candidate(ecg_candidates(&ica, rec.rate))
                .ok_or_else(|| Error::Data("no independent component passed the ECG score floor".into()))?;
            let source = json!({ "component": best.index, "score": best.score, "inverted": best.inverted });
            (best.beats, source)
        }
    };
    let rr = rr_periods(&beats)?;
    let filtered = rr_outlier_filter_with(&rr, &cfg.cardiac.outliers());
    write_text(out, &format_rr_csv(&rr, Some(&filtered.dropped_mask))?)?;
    println!("{}", json!({ "source": source, "beats": beats.len(), "dropped_intervals": filtered.dropped }));
    Ok(())
}

fn cmd_agree(cli: &Cli, reference: &Path, alternative: &Path, tolerance: Option<f64>, out: Option<&Path>) -> Result<()> {
    let cfg = load_config(cli)?;
    let tol = tolerance.unwrap_or(cfg.cardiac.match_tolerance_s);
    let beats = |path: &Path| -> Result<BeatSeries> {
        let rr = read_rr_csv(path, false)?;
        Ok(BeatSeries { beat_times: rr.beat_times(), rate: 0.0 })
    };
    let m = match_beats(&beats(reference)?, &beats(alternative)?, tol)?;
    let (r, a) = m.paired_rr();
    let report = AgreementFile {
        tolerance_s: m.tolerance,
        matched: m.pairs.len(),
        unmatched_reference: m.unmatched_ref,
        unmatched_alt: m.unmatched_alt,
        bland_altman: bland_altman(&r, &a).ok(),
    };
    if let Some(path) = out {
        write_json(path, &report)?;
    }
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn cmd_analyze(cli: &Cli, table: &Path, out_dir: Option<&Path>) -> Result<()> {
    let cfg = load_config(cli)?;
    let rows = read_analysis_csv(table)?;
    let report = analyze(&rows, &cfg.analysis)?;
    let text = format_report(&report);
    if let Some(dir) = out_dir {
        write_json(&dir.join(pipeline::REGRESSION_FILE), &report)?;
        write_text(&dir.join(pipeline::REGRESSION_TEXT_FILE), &text)?;
    }
    print!("{text}");
    Ok(())
}
