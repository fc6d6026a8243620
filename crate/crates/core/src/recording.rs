use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A labelled time span inside a recording, in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub label: String,
    pub start_s: f64,
    pub end_s: f64,
}

impl Event {
    pub fn new(label: impl Into<String>, start_s: f64, end_s: f64) -> Self {
        Event {
            label: label.into(),
            start_s,
            end_s,
        }
    }
}

/// Multichannel samples in microvolts, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub rate: f64,
    pub labels: Vec<String>,
    /// `data[channel][sample]`
    pub data: Vec<Vec<f64>>,
    pub events: Vec<Event>,
}

impl Recording {
    /// Builds a recording and checks the shape invariants.
    pub fn new(rate: f64, labels: Vec<String>, data: Vec<Vec<f64>>) -> Result<Self> {
        let rec = Recording {
            rate,
            labels,
            data,
            events: Vec::new(),
        };
        rec.check()?;
        Ok(rec)
    }

    /// Channels labelled `ch1`, `ch2`, ...
    pub fn with_default_labels(rate: f64, data: Vec<Vec<f64>>) -> Result<Self> {
        let labels = (1..=data.len()).map(|i| format!("ch{i}")).collect();
        Self::new(rate, labels, data)
    }

    pub fn check(&self) -> Result<()> {
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::Data(format!("sampling rate must be positive, got {}", self.rate)));
        }
        if self.labels.len() != self.data.len() {
            return Err(Error::Data(format!(
                "{} labels for {} channels",
                self.labels.len(),
                self.data.len()
            )));
        }
        let n = self.n_samples();
        if let Some(i) = self.data.iter().position(|row| row.len() != n) {
            return Err(Error::Data(format!(
                "channel {} has {} samples, expected {n}",
                self.labels[i],
                self.data[i].len()
            )));
        }
        Ok(())
    }

    pub fn n_channels(&self) -> usize {
        self.data.len()
    }

    pub fn n_samples(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn duration(&self) -> f64 {
        self.n_samples() as f64 / self.rate
    }

    pub fn channel_index(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Same shape and metadata, new sample matrix.
    pub fn with_data(&self, data: Vec<Vec<f64>>) -> Recording {
        Recording {
            rate: self.rate,
            labels: self.labels.clone(),
            data,
            events: self.events.clone(),
        }
    }

    /// Applies `f` to every channel independently.
    pub fn map_channels<F>(&self, f: F) -> Recording
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        self.with_data(self.data.iter().map(|row| f(row)).collect())
    }

    /// Samples `[start, end)` of every channel.
    pub fn slice(&self, start: usize, end: usize) -> Recording {
        Recording {
            rate: self.rate,
            labels: self.labels.clone(),
            data: self.data.iter().map(|row| row[start..end].to_vec()).collect(),
            events: Vec::new(),
        }
    }
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().sum::<f64>() / x.len() as f64
}

pub(crate) fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}
