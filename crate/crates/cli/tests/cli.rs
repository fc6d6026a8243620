//! Drives the `earpipe` binary end to end.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use earpipe::ingest::encode_frames;
use earpipe::spectral::BandPowerTable;
use serde_json::Value;

fn earpipe(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_earpipe")).current_dir(dir).args(args).output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("earpipe-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn diagnostic(out: &Output) -> Value {
    let text = stderr(out);
    let line = text.lines().last().unwrap_or_default();
    serde_json::from_str(line).unwrap_or_else(|_| panic!("not a JSON diagnostic: {text}"))
}

/// Writes a Berger fixture plus a run config into `dir`.
fn berger_fixture(dir: &Path, segment_s: f64, extra: &str) {
    std::fs::write(dir.join("berger.toml"), format!("kind = \"berger\"\nsegment_s = {segment_s}\n")).unwrap();
    let out = earpipe(dir, &["synth", "berger.toml", "--out-dir", "data"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let config = format!(
        "seed = 7\n\n[input]\nsession = \"data/session.csv\"\nevents = \"data/events.csv\"\n\n[output]\ndir = \"out\"\n{extra}"
    );
    std::fs::write(dir.join("earpipe.toml"), config).unwrap();
}

#[test]
fn berger_run_succeeds_with_alpha_increase() {
    let dir = scratch("berger");
    berger_fixture(&dir, 60.0, "");
    let out = earpipe(&dir, &["run", "--config", "earpipe.toml"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let table = BandPowerTable::read_csv(dir.join("out/bands.csv")).unwrap();
    let open = table.channel_mean("P01", "open", "alpha").unwrap();
    let closed = table.channel_mean("P01", "closed", "alpha").unwrap();
    assert!(closed > open, "closed {closed} open {open}");
    for name in ["qc.json", "integrity.json", "regression.json", "rr.csv", "run_meta.json"] {
        assert!(dir.join("out").join(name).is_file(), "{name}");
    }
}

#[test]
fn cutoff_above_nyquist_exits_2() {
    let dir = scratch("nyquist");
    berger_fixture(&dir, 20.0, "\n[filters]\nhp_cutoff_hz = 100.0\n");
    let out = earpipe(&dir, &["run", "--config", "earpipe.toml"]);
    assert_eq!(out.status.code(), Some(2));
    let diag = diagnostic(&out);
    assert_eq!(diag["error"], "config");
    assert_eq!(diag["exit_code"], 2);
    assert!(diag["message"].as_str().unwrap().contains("cutoff ≥ Nyquist"), "{diag}");
}

#[test]
fn missing_events_file_exits_3() {
    let dir = scratch("missing");
    berger_fixture(&dir, 20.0, "");
    std::fs::remove_file(dir.join("data/events.csv")).unwrap();
    let out = earpipe(&dir, &["run", "--config", "earpipe.toml"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(diagnostic(&out)["exit_code"], 3);
}

#[test]
fn config_problems_exit_2() {
    let dir = scratch("config");
    berger_fixture(&dir, 20.0, "\n[filters]\nno_such_key = 1\n");
    assert_eq!(earpipe(&dir, &["run", "--config", "earpipe.toml"]).status.code(), Some(2));
    assert_eq!(earpipe(&dir, &["run"]).status.code(), Some(2));
    assert_eq!(earpipe(&dir, &["run", "--config", "earpipe.toml", "--line-freq", "55"]).status.code(), Some(2));
    std::fs::write(dir.join("odd.toml"), "kind = \"emg\"\n").unwrap();
    assert_eq!(earpipe(&dir, &["synth", "odd.toml"]).status.code(), Some(2));
}

#[test]
fn ica_without_seed_exits_2() {
    let dir = scratch("seedless");
    berger_fixture(&dir, 20.0, "");
    let text = std::fs::read_to_string(dir.join("earpipe.toml")).unwrap().replace("seed = 7\n", "");
    std::fs::write(dir.join("earpipe.toml"), text).unwrap();
    assert_eq!(earpipe(&dir, &["run", "--config", "earpipe.toml"]).status.code(), Some(2));
    // a seed on the command line is enough
    let out = earpipe(&dir, &["run", "--config", "earpipe.toml", "--seed", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let dir = scratch("repro");
    berger_fixture(&dir, 30.0, "");
    assert!(earpipe(&dir, &["run", "--config", "earpipe.toml"]).status.success());
    std::fs::rename(dir.join("out"), dir.join("first")).unwrap();
    assert!(earpipe(&dir, &["run", "--config", "earpipe.toml"]).status.success());
    let mut compared = 0;
    for entry in std::fs::read_dir(dir.join("first")).unwrap() {
        let name = entry.unwrap().file_name();
        if name == "run_meta.json" {
            continue;
        }
        let a = std::fs::read(dir.join("first").join(&name)).unwrap();
        let b = std::fs::read(dir.join("out").join(&name)).unwrap();
        assert_eq!(a, b, "{name:?} differs");
        compared += 1;
    }
    assert!(compared >= 5);
}

#[test]
fn line_frequency_flag_reaches_the_pipeline() {
    let dir = scratch("linefreq");
    berger_fixture(&dir, 20.0, "");
    let out = earpipe(&dir, &["bands", "--config", "earpipe.toml", "--line-freq", "60"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(table.starts_with("condition"));
    assert!(table.contains("open") && table.contains("closed"));
    // bands skips ICA, so no R-R report
    assert!(!dir.join("out/rr.csv").exists());
}

#[test]
fn parse_reports_integrity() {
    let dir = scratch("parse");
    std::fs::write(dir.join("empty.bin"), b"").unwrap();
    let out = earpipe(&dir, &["parse", "empty.bin", "--out-dir", "empty"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let session = std::fs::read_to_string(dir.join("empty/session.csv")).unwrap();
    assert_eq!(session.lines().count(), 2, "{session}");

    let frames: Vec<Vec<i32>> = (0..50).map(|i| (0..16).map(|c| (i * 16 + c) % 90).collect()).collect();
    let clean = encode_frames(&frames, true);
    std::fs::write(dir.join("clean.bin"), &clean).unwrap();
    assert!(earpipe(&dir, &["parse", "clean.bin", "--out-dir", "clean"]).status.success());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("clean/integrity.json")).unwrap()).unwrap();
    assert_eq!(report["resyncs"], 0);
    let session = std::fs::read_to_string(dir.join("clean/session.csv")).unwrap();
    assert_eq!(session.lines().count(), 2 + 50);

    // two junk runs between packets
    let mut corrupt = clean[..33 * 10].to_vec();
    corrupt.extend_from_slice(&[0x55; 7]);
    corrupt.extend_from_slice(&clean[33 * 10..33 * 40]);
    corrupt.extend_from_slice(&[0x01, 0x02]);
    corrupt.extend_from_slice(&clean[33 * 40..]);
    std::fs::write(dir.join("corrupt.bin"), &corrupt).unwrap();
    assert!(earpipe(&dir, &["parse", "corrupt.bin", "--out-dir", "corrupt"]).status.success());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("corrupt/integrity.json")).unwrap()).unwrap();
    assert_eq!(report["resyncs"], 2);
}

#[test]
fn ecg_and_agree_round_trip() {
    let dir = scratch("ecg");
    std::fs::write(dir.join("ecg.toml"), "kind = \"ecg\"\nrate = 250.0\nduration = 30.0\nbpm = 72.0\nrr_jitter_ms = 20.0\n").unwrap();
    assert!(earpipe(&dir, &["synth", "ecg.toml", "--out-dir", "data"]).status.success());
    let out = earpipe(&dir, &["ecg", "data/session.csv", "--channel", "ecg", "--out", "detected.csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = earpipe(&dir, &["agree", "data/reference_rr.csv", "detected.csv", "--out", "agreement.json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["unmatched_reference"], 0);
    assert_eq!(report["unmatched_alt"], 0);
    assert!(report["bland_altman"]["gaussian_loa"].as_f64().unwrap() < 5.0);
    assert!(dir.join("agreement.json").is_file());
}

#[test]
fn ecg_from_components_needs_a_seed() {
    let dir = scratch("ecg-ica");
    std::fs::write(dir.join("mix.toml"), "kind = \"ecg-in-eeg\"\n").unwrap();
    assert!(earpipe(&dir, &["synth", "mix.toml", "--out-dir", "data"]).status.success());
    assert_eq!(earpipe(&dir, &["ecg", "data/session.csv"]).status.code(), Some(2));
    let out = earpipe(&dir, &["ecg", "data/session.csv", "--seed", "4", "--out", "rr.csv"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let out = earpipe(&dir, &["agree", "data/reference_rr.csv", "rr.csv"]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let reference_beats = std::fs::read_to_string(dir.join("data/reference_rr.csv")).unwrap().lines().count();
    assert!(report["matched"].as_u64().unwrap() as f64 >= 0.95 * reference_beats as f64, "{report}");
}

#[test]
fn analyze_prints_contrasts() {
    let dir = scratch("analyze");
    let mut csv = String::from("participant,condition,channel,band,power_db,tlx_total,flow_mean\n");
    for p in 0..5 {
        for (k, cond) in ["low", "medium", "high"].iter().enumerate() {
            let power = 2.0 * k as f64 + 0.3 * ((p * 7 + k * 3) % 5) as f64;
            let tlx = 20.0 + 15.0 * k as f64 + p as f64;
            let flow = 4.0 + k as f64 - 0.5 * (k * k) as f64 + 0.1 * p as f64;
            writeln!(csv, "P{p},{cond},L1,alpha,{power},{tlx},{flow}").unwrap();
        }
    }
    std::fs::write(dir.join("table.csv"), csv).unwrap();
    let out = earpipe(&dir, &["analyze", "table.csv", "--out-dir", "stats"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("alpha"), "{text}");
    assert!(dir.join("stats/regression.json").is_file());
}
