//! Around-the-ear EEG/ECG processing chain.
//!
//! The crate covers the whole path from raw OpenBCI Cyton+Daisy bytes to
//! band-power tables and agreement statistics:
//!
//! - [`ingest`]: packet parsing, microvolt scaling, session/event files, segment cutting
//! - [`montage`]: cEEGrid electrode roles, channel mapping, linked-mastoid reference
//! - [`filters`]: baseline correction, line-noise removal, windowed-sinc FIR
//! - [`artifact`]: fixed-point ICA, ECG component selection, artifact subspace reconstruction
//! - [`spectral`]: Welch PSD, band aggregation, quality-control metrics
//! - [`cardiac`]: Pan-Tompkins QRS detection, R-R series, beat matching
//! - [`stats`]: survey aggregation, regressions, contrasts, Bland-Altman
//! - [`synth`]: seeded synthetic EEG/ECG used as ground truth
//! - [`pipeline`]: declarative configuration and the end-to-end run

pub mod artifact;
pub mod cardiac;
mod error;
pub mod filters;
pub mod ingest;
pub mod linalg;
pub mod montage;
pub mod pipeline;
pub mod recording;
pub mod spectral;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use recording::{Event, Recording};
