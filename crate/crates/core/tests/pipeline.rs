//! End-to-end runs of the configurable pipeline on synthetic sessions.

use std::path::{Path, PathBuf};

use earpipe::cardiac::{format_rr_csv, rr_periods};
use earpipe::ingest::{write_events, write_session};
use earpipe::pipeline::{exit_code, run, PipelineConfig, Stage};
use earpipe::synth::{berger_session, gen_ecg_in_eeg, BergerSpec, EcgInEegSpec};
use earpipe::{Error, Event};
use serde_json::Value;

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("earpipe-pipeline-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn short_berger(dir: &Path) -> PipelineConfig {
    let spec = BergerSpec { segment_s: 30.0, ..Default::default() };
    let (rec, events) = berger_session(&spec).unwrap();
    write_session(dir.join("session.csv"), &rec).unwrap();
    write_events(dir.join("events.csv"), &events).unwrap();
    let mut cfg = PipelineConfig { seed: Some(3), ..Default::default() };
    cfg.input.session = Some(dir.join("session.csv"));
    cfg.input.events = Some(dir.join("events.csv"));
    cfg.output.dir = dir.join("out");
    cfg
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn identity_asr_equals_omitting_the_stage() {
    let dir = scratch("toggle");
    let mut with = short_berger(&dir);
    with.stages = vec![Stage::Baseline, Stage::Reref, Stage::Highpass, Stage::Lowpass, Stage::Asr, Stage::Psd];
    with.artifact.asr_burst_k = 1e9;
    with.artifact.asr_window_criterion = 1.0;
    with.output.dir = dir.join("with");
    let mut without = with.clone();
    without.stages.retain(|s| *s != Stage::Asr);
    without.output.dir = dir.join("without");
    run(&with).unwrap();
    run(&without).unwrap();
    let a = std::fs::read(dir.join("with/bands.csv")).unwrap();
    let b = std::fs::read(dir.join("without/bands.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn default_run_writes_every_report() {
    let dir = scratch("reports");
    let cfg = short_berger(&dir);
    let summary = run(&cfg).unwrap();
    for name in ["bands.csv", "qc.json", "integrity.json", "regression.json", "regression.txt", "rr.csv", "run_meta.json"] {
        assert!(cfg.output.dir.join(name).is_file(), "{name} missing");
    }
    assert!(summary.files.iter().all(|f| f.is_file()));
    let qc = read_json(cfg.output.dir.join("qc.json"));
    let conditions: Vec<&str> = qc["conditions"].as_array().unwrap().iter().map(|c| c["condition"].as_str().unwrap()).collect();
    assert_eq!(conditions, ["open", "closed"]);
    let bands = std::fs::read_to_string(cfg.output.dir.join("bands.csv")).unwrap();
    // two conditions × 16 channels × 4 bands, plus the header
    assert_eq!(bands.lines().count(), 1 + 2 * 16 * 4);
}

#[test]
fn ecg_stage_agrees_with_reference_beats() {
    let dir = scratch("ecg");
    let spec = EcgInEegSpec::default();
    let (rec, planted) = gen_ecg_in_eeg(&spec).unwrap();
    write_session(dir.join("session.csv"), &rec).unwrap();
    write_events(dir.join("events.csv"), &[Event::new("rest", 0.0, rec.duration())]).unwrap();
    std::fs::write(dir.join("reference_rr.csv"), format_rr_csv(&rr_periods(&planted).unwrap(), None).unwrap()).unwrap();

    let mut cfg = PipelineConfig { seed: Some(9), ..Default::default() };
    // eight right-ear channels only, so no mastoid pair to re-reference
    cfg.stages = vec![Stage::Baseline, Stage::Highpass, Stage::Lowpass, Stage::Ica, Stage::Psd];
    cfg.input.session = Some(dir.join("session.csv"));
    cfg.input.events = Some(dir.join("events.csv"));
    cfg.input.reference_rr = Some(dir.join("reference_rr.csv"));
    cfg.output.dir = dir.join("out");
    run(&cfg).unwrap();

    let agreement = read_json(dir.join("out/agreement.json"));
    let matched = agreement["matched"].as_u64().unwrap() as f64;
    assert!(matched >= 0.95 * planted.len() as f64, "matched {matched} of {}", planted.len());
    assert!(agreement["bland_altman"]["gaussian_loa"].as_f64().unwrap() <= 20.0);
    let qc = read_json(dir.join("out/qc.json"));
    assert!(qc["ecg_component"]["score"].as_f64().unwrap() >= 0.5);
    let rr = std::fs::read_to_string(dir.join("out/rr.csv")).unwrap();
    assert!(rr.starts_with("beat_time_s,rr_ms,flag\n"));
    assert!(rr.lines().count() > 50);
}

#[test]
fn missing_events_file_is_a_data_failure() {
    let dir = scratch("missing");
    let mut cfg = short_berger(&dir);
    cfg.input.events = Some(dir.join("nope.csv"));
    let err = run(&cfg).unwrap_err();
    assert!(matches!(err, Error::Io { .. }), "{err:?}");
    assert_eq!(exit_code(&err), 3);
}

#[test]
fn cutoff_above_nyquist_is_a_config_failure() {
    let dir = scratch("nyquist");
    let mut cfg = short_berger(&dir);
    cfg.filters.hp_cutoff_hz = 100.0;
    let err = run(&cfg).unwrap_err();
    assert!(matches!(err, Error::Config(_)), "{err:?}");
    assert_eq!(exit_code(&err), 2);
    assert!(!dir.join("out/bands.csv").exists());
}

#[test]
fn unfiltered_psd_needs_the_override() {
    let dir = scratch("override");
    let mut cfg = short_berger(&dir);
    cfg.stages = vec![Stage::Baseline, Stage::Psd];
    assert!(matches!(run(&cfg), Err(Error::Config(_))));
    cfg.allow_unfiltered_psd = true;
    run(&cfg).unwrap();
    assert!(dir.join("out/bands.csv").is_file());
}

#[test]
fn config_file_round_trips_through_disk() {
    let dir = scratch("toml");
    let cfg = short_berger(&dir);
    std::fs::write(dir.join("earpipe.toml"), cfg.to_toml()).unwrap();
    let loaded = PipelineConfig::load(dir.join("earpipe.toml")).unwrap();
    assert_eq!(loaded, cfg);
}
