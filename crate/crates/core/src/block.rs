use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A run of multichannel samples (μV) in montage order starting at `t0` seconds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleBlock {
    pub t0: f64,
    pub fs: f64,
    pub channels: Vec<Vec<f64>>,
}

impl SampleBlock {
    pub fn new(t0: f64, fs: f64, channels: Vec<Vec<f64>>) -> Result<Self> {
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::Config(format!("sampling rate must be positive, got {fs}")));
        }
        if let Some(first) = channels.first() {
            if let Some(bad) = channels.iter().position(|c| c.len() != first.len()) {
                return Err(Error::Contract(format!(
                    "channel {bad} has {} samples, channel 0 has {}",
                    channels[bad].len(),
                    first.len()
                )));
            }
        }
        Ok(SampleBlock { t0, fs, channels })
    }

    pub fn zeros(t0: f64, fs: f64, channel_count: usize, len: usize) -> Self {
        SampleBlock {
            t0,
            fs,
            channels: vec![vec![0.0; len]; channel_count],
        }
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn time_of(&self, i: usize) -> f64 {
        self.t0 + i as f64 / self.fs
    }

    /// Duration covered by the block, `len / fs`.
    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.fs
    }

    /// Samples `[start, end)` as a new block with the matching start time.
    pub fn slice(&self, start: usize, end: usize) -> SampleBlock {
        SampleBlock {
            t0: self.time_of(start),
            fs: self.fs,
            channels: self.channels.iter().map(|c| c[start..end].to_vec()).collect(),
        }
    }

    /// Splits into consecutive blocks of at most `len` samples.
    pub fn chunks(&self, len: usize) -> impl Iterator<Item = SampleBlock> + '_ {
        let total = self.len();
        (0..total)
            .step_by(len.max(1))
            .map(move |start| self.slice(start, (start + len).min(total)))
    }

    pub fn sample(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.channels.iter().map(move |c| c[i])
    }
}
