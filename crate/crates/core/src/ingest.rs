//! Cyton+Daisy byte streams, session files and condition segments.
//!
//! Wire format: 33-byte packets, header `0xA0`, one sample-number byte,
//! eight 24-bit big-endian two's-complement channel words, six aux bytes and
//! a footer in `0xC0..=0xCF`. With the Daisy shield attached, an even sample
//! number carries channels 1-8 and the following odd one channels 9-16.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::recording::Recording;
use crate::{Error, Event, Result};

pub const PACKET_LEN: usize = 33;
pub const HEADER: u8 = 0xA0;
pub const FOOTER_BASE: u8 = 0xC0;
pub const CHANNELS_PER_PACKET: usize = 8;

const MAX_COUNT: i32 = (1 << 23) - 1;
const MIN_COUNT: i32 = -(1 << 23);

/// Interprets a 3-byte big-endian word as a 24-bit two's-complement value.
pub fn decode_word(bytes: [u8; 3]) -> i32 {
    let raw = (i32::from(bytes[0]) << 16) | (i32::from(bytes[1]) << 8) | i32::from(bytes[2]);
    // sign-extend from bit 23
    (raw << 8) >> 8
}

/// Inverse of [`decode_word`]; values are clamped to the 24-bit range.
pub fn encode_word(counts: i32) -> [u8; 3] {
    let c = counts.clamp(MIN_COUNT, MAX_COUNT);
    [(c >> 16) as u8, (c >> 8) as u8, c as u8]
}

/// ADS1299 scaling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub vref: f64,
    pub gain: f64,
}

impl Default for Scale {
    fn default() -> Self {
        Scale { vref: 4.5, gain: 24.0 }
    }
}

impl Scale {
    pub fn microvolts_per_count(&self) -> Result<f64> {
        if !(self.gain > 0.0) {
            return Err(Error::Config(format!("gain must be positive, got {}", self.gain)));
        }
        Ok(self.vref / (self.gain * f64::from(MAX_COUNT)) * 1e6)
    }
}

/// `c · vref / (gain · (2^23 − 1)) · 10^6`
pub fn counts_to_microvolts(counts: i32, vref: f64, gain: f64) -> Result<f64> {
    Ok(f64::from(counts) * Scale { vref, gain }.microvolts_per_count()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RawPacket {
    pub sample_number: u8,
    pub channel_words: [i32; CHANNELS_PER_PACKET],
    pub aux: [u8; 6],
    pub footer_tag: u8,
}

impl RawPacket {
    /// Parses one packet; `None` unless the header and footer bytes are valid.
    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.len() < PACKET_LEN || bytes[0] != HEADER || bytes[32] & 0xF0 != FOOTER_BASE {
            return None;
        }
        let mut channel_words = [0; CHANNELS_PER_PACKET];
        for (k, word) in channel_words.iter_mut().enumerate() {
            let o = 2 + 3 * k;
            *word = decode_word([bytes[o], bytes[o + 1], bytes[o + 2]]);
        }
        let mut aux = [0; 6];
        aux.copy_from_slice(&bytes[26..32]);
        Some(RawPacket {
            sample_number: bytes[1],
            channel_words,
            aux,
            footer_tag: bytes[32] & 0x0F,
        })
    }

    pub fn to_bytes(&self) -> [u8; PACKET_LEN] {
        let mut out = [0u8; PACKET_LEN];
        out[0] = HEADER;
        out[1] = self.sample_number;
        for (k, &word) in self.channel_words.iter().enumerate() {
            out[2 + 3 * k..5 + 3 * k].copy_from_slice(&encode_word(word));
        }
        out[26..32].copy_from_slice(&self.aux);
        out[32] = FOOTER_BASE | (self.footer_tag & 0x0F);
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParseOptions {
    pub rate: f64,
    /// Merge packet pairs into 16-channel frames.
    pub daisy: bool,
    pub scale: Scale,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions {
            rate: 125.0,
            daisy: true,
            scale: Scale::default(),
        }
    }
}

/// One merged frame in raw counts.
#[derive(Debug, Clone, PartialEq)]
pub struct CountFrame {
    pub t: f64,
    pub counts: Vec<i32>,
}

/// One merged frame in microvolts.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleFrame {
    pub t: f64,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IntegrityIssue {
    Empty,
    OutOfRange,
    SampleCountMismatch,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrityReport {
    pub expected_samples: usize,
    pub actual_samples: usize,
    pub first_t: Option<f64>,
    pub last_t: Option<f64>,
    /// Packets missing according to sample-number gaps.
    pub dropped_packets: usize,
    /// Runs of bytes skipped while searching for the next header.
    pub resyncs: usize,
    /// Packets received without a matching Daisy partner.
    pub orphan_packets: usize,
    pub issues: Vec<IntegrityIssue>,
}

impl IntegrityReport {
    /// Actual and expected sample counts differ by at most `tolerance`.
    pub fn within_tolerance(&self, tolerance: usize) -> bool {
        self.actual_samples.abs_diff(self.expected_samples) <= tolerance
    }

    pub fn is_flagged(&self) -> bool {
        !self.issues.is_empty()
    }
}

struct Pending {
    packet: RawPacket,
    index: u64,
}

/// Scanner state: the sample-number tracker and at most one pending packet.
struct Deinterleaver {
    opts: ParseOptions,
    last_sample: Option<u8>,
    index: u64,
    pending: Option<Pending>,
    frames: Vec<CountFrame>,
    report: IntegrityReport,
    received: usize,
}

impl Deinterleaver {
    fn new(opts: ParseOptions) -> Self {
        Deinterleaver {
            opts,
            last_sample: None,
            index: 0,
            pending: None,
            frames: Vec::new(),
            report: IntegrityReport::default(),
            received: 0,
        }
    }

    fn push(&mut self, packet: RawPacket) {
        if let Some(last) = self.last_sample {
            let step = match packet.sample_number.wrapping_sub(last) {
                0 => 256,
                d => u64::from(d),
            };
            self.report.dropped_packets += (step - 1) as usize;
            self.index += step;
        }
        self.last_sample = Some(packet.sample_number);
        self.received += 1;

        if !self.opts.daisy {
            let t = self.index as f64 / self.opts.rate;
            self.frames.push(CountFrame {
                t,
                counts: packet.channel_words.to_vec(),
            });
            return;
        }

        let lower_half = packet.sample_number % 2 == 0;
        match self.pending.take() {
            Some(lower) if !lower_half && self.index == lower.index + 1 => {
                let mut counts = lower.packet.channel_words.to_vec();
                counts.extend_from_slice(&packet.channel_words);
                let t = (lower.index / 2) as f64 / self.opts.rate;
                self.frames.push(CountFrame { t, counts });
            }
            stale => {
                if stale.is_some() {
                    self.report.orphan_packets += 1;
                }
                if lower_half {
                    self.pending = Some(Pending {
                        packet,
                        index: self.index,
                    });
                } else {
                    self.report.orphan_packets += 1;
                }
            }
        }
    }

    fn finish(mut self) -> (Vec<CountFrame>, IntegrityReport) {
        if self.pending.take().is_some() {
            self.report.orphan_packets += 1;
        }
        let slots = self.received + self.report.dropped_packets;
        self.report.expected_samples = if self.opts.daisy { slots / 2 } else { slots };
        self.report.actual_samples = self.frames.len();
        self.report.first_t = self.frames.first().map(|f| f.t);
        self.report.last_t = self.frames.last().map(|f| f.t);
        (self.frames, self.report)
    }
}

/// Scans `bytes` for packets and merges them into frames of raw counts.
///
/// Never fails: corrupt input shows up as resyncs, drops and orphans in the
/// report.
pub fn parse_counts(bytes: &[u8], opts: ParseOptions) -> (Vec<CountFrame>, IntegrityReport) {
    let mut state = Deinterleaver::new(opts);
    let mut i = 0;
    let mut skipping = false;
    while i < bytes.len() {
        if let Some(packet) = RawPacket::from_bytes(&bytes[i..]) {
            state.push(packet);
            i += PACKET_LEN;
            skipping = false;
            continue;
        }
        if !skipping {
            state.report.resyncs += 1;
            skipping = true;
        }
        i += 1;
        while i < bytes.len() && bytes[i] != HEADER {
            i += 1;
        }
    }
    state.finish()
}

/// [`parse_counts`] followed by microvolt scaling.
pub fn parse_stream(bytes: &[u8], opts: ParseOptions) -> Result<(Vec<SampleFrame>, IntegrityReport)> {
    let uv = opts.scale.microvolts_per_count()?;
    let (frames, report) = parse_counts(bytes, opts);
    let frames = frames
        .into_iter()
        .map(|f| SampleFrame {
            t: f.t,
            values: f.counts.iter().map(|&c| f64::from(c) * uv).collect(),
        })
        .collect();
    Ok((frames, report))
}

/// Serializes frames of counts as a packet stream with consecutive sample
/// numbers starting at 0. Frames must hold 16 (Daisy) or 8 values.
pub fn encode_frames(frames: &[Vec<i32>], daisy: bool) -> Vec<u8> {
    let per_frame = if daisy { 2 } else { 1 };
    let mut out = Vec::with_capacity(frames.len() * per_frame * PACKET_LEN);
    let mut sample_number: u8 = 0;
    for frame in frames {
        for half in frame.chunks(CHANNELS_PER_PACKET).take(per_frame) {
            let mut channel_words = [0; CHANNELS_PER_PACKET];
            channel_words[..half.len()].copy_from_slice(half);
            let packet = RawPacket {
                sample_number,
                channel_words,
                aux: [0; 6],
                footer_tag: 0,
            };
            out.extend_from_slice(&packet.to_bytes());
            sample_number = sample_number.wrapping_add(1);
        }
    }
    out
}

/// Stacks frames into a channel-major recording labelled `ch1..chN`.
pub fn frames_to_recording(frames: &[SampleFrame], rate: f64) -> Result<Recording> {
    let n_channels = frames.first().map_or(2 * CHANNELS_PER_PACKET, |f| f.values.len());
    let mut data = vec![Vec::with_capacity(frames.len()); n_channels];
    for frame in frames {
        for (row, &v) in data.iter_mut().zip(&frame.values) {
            row.push(v);
        }
    }
    Recording::with_default_labels(rate, data)
}

// ---------------------------------------------------------------------------
// Session and events files

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses a session CSV: optional `#rate=<hz>` comment, header row with an
/// optional leading `t_s` column, one row per sample in microvolts.
///
/// The rate comes from the comment, else from the timestamps, else from
/// `default_rate`.
pub fn parse_session(text: &str, default_rate: Option<f64>) -> Result<Recording> {
    let mut rate = None;
    for line in text.lines().filter(|l| l.trim_start().starts_with('#')) {
        if let Some(v) = line.trim_start_matches('#').trim().strip_prefix("rate=") {
            let r: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("bad rate comment `{line}`")))?;
            rate = Some(r);
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let has_time = headers.first().is_some_and(|h| h == "t_s");
    let labels: Vec<String> = headers[usize::from(has_time)..].to_vec();
    if labels.is_empty() {
        return Err(Error::Data("session file has no channel columns".into()));
    }

    let mut data = vec![Vec::new(); labels.len()];
    let mut times = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Data(format!(
                "row {}: {} fields, expected {}",
                line + 1,
                record.len(),
                headers.len()
            )));
        }
        let mut fields = record.iter().map(|f| {
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Data(format!("row {}: bad value `{f}`", line + 1)))
        });
        if has_time {
            times.push(fields.next().unwrap()?);
        }
        for (row, v) in data.iter_mut().zip(fields) {
            row.push(v?);
        }
    }

    let rate = match rate {
        Some(r) => r,
        None if times.len() >= 2 => {
            let span = times[times.len() - 1] - times[0];
            (times.len() - 1) as f64 / span
        }
        None => default_rate
            .ok_or_else(|| Error::Data("sampling rate unknown: add a `#rate=` line".into()))?,
    };
    Recording::new(rate, labels, data)
}

pub fn read_session(path: impl AsRef<Path>, default_rate: Option<f64>) -> Result<Recording> {
    parse_session(&read_text(path.as_ref())?, default_rate)
}

/// Renders a recording in the session CSV format; timestamps are `i / rate`.
pub fn format_session(rec: &Recording) -> String {
    use std::fmt::Write as _;
    let mut out = format!("#rate={}\nt_s", rec.rate);
    for label in &rec.labels {
        out.push(',');
        out.push_str(label);
    }
    out.push('\n');
    for i in 0..rec.n_samples() {
        write!(out, "{}", i as f64 / rec.rate).unwrap();
        for row in &rec.data {
            write!(out, ",{}", row[i]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn write_session(path: impl AsRef<Path>, rec: &Recording) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_session(rec)).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Serialize, Deserialize)]
struct EventRow {
    condition: String,
    start_s: f64,
    end_s: f64,
}

pub fn parse_events(text: &str) -> Result<Vec<Event>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    reader
        .deserialize::<EventRow>()
        .map(|row| {
            let row = row?;
            Ok(Event::new(row.condition, row.start_s, row.end_s))
        })
        .collect()
}

pub fn read_events(path: impl AsRef<Path>) -> Result<Vec<Event>> {
    parse_events(&read_text(path.as_ref())?)
}

pub fn write_events(path: impl AsRef<Path>, events: &[Event]) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path)?;
    for e in events {
        writer.serialize(EventRow {
            condition: e.label.clone(),
            start_s: e.start_s,
            end_s: e.end_s,
        })?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Segments

#[derive(Debug, Clone)]
pub struct Segment {
    pub condition: String,
    pub start_s: f64,
    pub end_s: f64,
    pub recording: Recording,
    pub report: IntegrityReport,
}

/// First sample index with `i / rate >= t`.
fn sample_at_or_after(t: f64, rate: f64) -> i64 {
    (t * rate - 1e-9).ceil() as i64
}

/// Cuts one segment per event holding exactly the samples with
/// `start <= t < end`. Events reaching outside the recording are flagged in
/// their report rather than dropped.
pub fn cut_segments(rec: &Recording, events: &[Event]) -> Vec<Segment> {
    let n = rec.n_samples() as i64;
    let duration = rec.duration();
    events
        .iter()
        .map(|ev| {
            let first = sample_at_or_after(ev.start_s, rec.rate).clamp(0, n) as usize;
            let last = sample_at_or_after(ev.end_s, rec.rate).clamp(0, n) as usize;
            let last = last.max(first);
            let expected = ((ev.end_s - ev.start_s) * rec.rate).round().max(0.0) as usize;

            let mut report = IntegrityReport {
                expected_samples: expected,
                actual_samples: last - first,
                ..Default::default()
            };
            if last > first {
                report.first_t = Some(first as f64 / rec.rate);
                report.last_t = Some((last - 1) as f64 / rec.rate);
            } else {
                report.issues.push(IntegrityIssue::Empty);
            }
            let eps = 0.5 / rec.rate;
            if ev.start_s < -eps || ev.end_s > duration + eps || ev.end_s < ev.start_s {
                report.issues.push(IntegrityIssue::OutOfRange);
            }
            if report.actual_samples != report.expected_samples {
                report.issues.push(IntegrityIssue::SampleCountMismatch);
            }

            let mut recording = rec.slice(first, last);
            recording.events = vec![ev.clone()];
            Segment {
                condition: ev.label.clone(),
                start_s: ev.start_s,
                end_s: ev.end_s,
                recording,
                report,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn packet(sample_number: u8, base: i32) -> RawPacket {
        let mut channel_words = [0; 8];
        for (k, w) in channel_words.iter_mut().enumerate() {
            *w = base + k as i32;
        }
        RawPacket {
            sample_number,
            channel_words,
            aux: [1, 2, 3, 4, 5, 6],
            footer_tag: 0,
        }
    }

    #[test]
    fn decode_word_examples() {
        assert_eq!(decode_word([0x00, 0x00, 0x01]), 1);
        assert_eq!(decode_word([0xFF, 0xFF, 0xFF]), -1);
        assert_eq!(decode_word([0x7F, 0xFF, 0xFF]), 8_388_607);
        assert_eq!(decode_word([0x80, 0x00, 0x00]), -8_388_608);
    }

    #[test]
    fn microvolt_scaling() {
        assert_eq!(counts_to_microvolts(0, 4.5, 24.0).unwrap(), 0.0);
        // 4.5 / (24 * 8388607) * 1e6
        let one = 4.5 / (24.0 * 8_388_607.0) * 1e6;
        let got = counts_to_microvolts(1, 4.5, 24.0).unwrap();
        assert!((got - one).abs() < 1e-15);
        assert!((got - 0.022352).abs() < 1e-6);
        let max = counts_to_microvolts(8_388_607, 4.5, 24.0).unwrap();
        assert!((max - 187_500.0).abs() < 1e-6);
        assert!(counts_to_microvolts(5, 4.5, 0.0).is_err());
    }

    #[test]
    fn packet_bytes_round_trip() {
        let p = packet(7, -300);
        let bytes = p.to_bytes();
        assert_eq!(bytes[0], 0xA0);
        assert_eq!(bytes[32], 0xC0);
        assert_eq!(RawPacket::from_bytes(&bytes), Some(p));
    }

    #[test]
    fn two_packets_make_one_frame() {
        let mut bytes = packet(0, 10).to_bytes().to_vec();
        bytes.extend_from_slice(&packet(1, 100).to_bytes());
        let (frames, report) = parse_counts(&bytes, ParseOptions::default());
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].counts.len(), 16);
        assert_eq!(frames[0].counts[0], 10);
        assert_eq!(frames[0].counts[8], 100);
        assert_eq!(report.resyncs, 0);
        assert_eq!(report.expected_samples, 1);
        assert_eq!(report.actual_samples, 1);
    }

    #[test]
    fn garbage_between_packets_is_one_resync() {
        let mut clean = Vec::new();
        for s in 0..4u8 {
            clean.extend_from_slice(&packet(s, i32::from(s) * 1000).to_bytes());
        }
        let mut dirty = clean[..2 * PACKET_LEN].to_vec();
        dirty.extend_from_slice(&[0x01, 0x02, 0x03, 0x04, 0x05]);
        dirty.extend_from_slice(&clean[2 * PACKET_LEN..]);

        let (want, _) = parse_counts(&clean, ParseOptions::default());
        let (got, report) = parse_counts(&dirty, ParseOptions::default());
        assert_eq!(got, want);
        assert_eq!(report.resyncs, 1);
        assert_eq!(report.dropped_packets, 0);
    }

    #[test]
    fn empty_input() {
        let (frames, report) = parse_counts(&[], ParseOptions::default());
        assert!(frames.is_empty());
        assert_eq!(report, IntegrityReport::default());
    }

    #[test]
    fn dropped_packet_orphans_its_partner() {
        // 0,1 | 2,(3 missing) | 4,5
        let mut bytes = Vec::new();
        for s in [0u8, 1, 2, 4, 5] {
            bytes.extend_from_slice(&packet(s, 0).to_bytes());
        }
        let (frames, report) = parse_counts(&bytes, ParseOptions::default());
        assert_eq!(frames.len(), 2);
        assert_eq!(report.dropped_packets, 1);
        assert_eq!(report.orphan_packets, 1);
        assert_eq!(report.expected_samples, 3);
        assert_eq!(frames[1].t, 2.0 / 125.0);
    }

    #[test]
    fn odd_tail_is_dropped_and_counted() {
        let mut bytes = Vec::new();
        for s in 0..3u8 {
            bytes.extend_from_slice(&packet(s, 0).to_bytes());
        }
        let (frames, report) = parse_counts(&bytes, ParseOptions::default());
        assert_eq!(frames.len(), 1);
        assert_eq!(report.orphan_packets, 1);
    }

    #[test]
    fn sample_numbers_wrap() {
        let frames: Vec<Vec<i32>> = (0..200).map(|i| vec![i; 16]).collect();
        let bytes = encode_frames(&frames, true);
        let (got, report) = parse_counts(&bytes, ParseOptions::default());
        assert_eq!(got.len(), 200);
        assert_eq!(report.dropped_packets, 0);
        assert_eq!(got[199].t, 199.0 / 125.0);
    }

    #[test]
    fn single_board_mode() {
        let frames: Vec<Vec<i32>> = (0..5).map(|i| vec![i; 8]).collect();
        let bytes = encode_frames(&frames, false);
        let opts = ParseOptions {
            daisy: false,
            ..Default::default()
        };
        let (got, report) = parse_counts(&bytes, opts);
        assert_eq!(got.len(), 5);
        assert_eq!(report.expected_samples, 5);
        assert_eq!(got[3].counts, vec![3; 8]);
    }

    #[test]
    fn session_csv_round_trip() {
        let rec = Recording::with_default_labels(125.0, vec![vec![1.5, -2.25, 3.0], vec![0.0, 0.1, 7.0]])
            .unwrap();
        let text = format_session(&rec);
        assert!(text.starts_with("#rate=125\nt_s,ch1,ch2\n"));
        assert_eq!(parse_session(&text, None).unwrap(), rec);
    }

    #[test]
    fn session_rate_from_timestamps_or_default() {
        let text = "t_s,a\n0,1\n0.004,2\n0.008,3\n";
        let rec = parse_session(text, None).unwrap();
        assert!((rec.rate - 250.0).abs() < 1e-9);

        let text = "a,b\n1,2\n3,4\n";
        assert!(parse_session(text, None).is_err());
        let rec = parse_session(text, Some(125.0)).unwrap();
        assert_eq!(rec.data, vec![vec![1.0, 3.0], vec![2.0, 4.0]]);
    }

    #[test]
    fn session_rejects_ragged_rows() {
        assert!(parse_session("#rate=125\nt_s,a,b\n0,1\n", None).is_err());
        assert!(parse_session("#rate=125\nt_s,a\n0,nan\n", None).is_err());
    }

    #[test]
    fn events_csv() {
        let ev = parse_events("condition,start_s,end_s\nopen,0,60\nclosed, 60 ,120\n").unwrap();
        assert_eq!(ev, vec![Event::new("open", 0.0, 60.0), Event::new("closed", 60.0, 120.0)]);
    }

    fn ramp(rate: f64, seconds: f64) -> Recording {
        let n = (rate * seconds) as usize;
        Recording::with_default_labels(rate, vec![(0..n).map(|i| i as f64).collect()]).unwrap()
    }

    #[test]
    fn sixty_second_segment() {
        let rec = ramp(125.0, 130.0);
        let seg = &cut_segments(&rec, &[Event::new("rest", 10.0, 70.0)])[0];
        assert_eq!(seg.report.expected_samples, 7500);
        assert_eq!(seg.report.actual_samples, 7500);
        assert_eq!(seg.recording.data[0][0], 1250.0);
        assert!(!seg.report.is_flagged());
    }

    #[test]
    fn degenerate_and_out_of_range_segments_are_flagged() {
        let rec = ramp(125.0, 20.0);
        let segs = cut_segments(
            &rec,
            &[Event::new("empty", 10.0, 10.0), Event::new("late", 15.0, 25.0)],
        );
        assert_eq!(segs[0].report.actual_samples, 0);
        assert!(segs[0].report.issues.contains(&IntegrityIssue::Empty));
        assert!(segs[1].report.issues.contains(&IntegrityIssue::OutOfRange));
        assert_eq!(segs[1].report.actual_samples, 625);
        assert_eq!(segs[1].report.expected_samples, 1250);
    }

    #[test]
    fn repeated_condition_keeps_labels() {
        let rec = ramp(125.0, 150.0);
        let events = parse_events("condition,start_s,end_s\nhard,0,60\nhard,70,130\n").unwrap();
        let segs = cut_segments(&rec, &events);
        assert_eq!(segs.len(), 2);
        assert!(segs.iter().all(|s| s.condition == "hard" && s.report.actual_samples == 7500));
        assert_eq!(segs[1].recording.data[0][0], 70.0 * 125.0);
    }
}
