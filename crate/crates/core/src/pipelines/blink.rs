use crate::block::SampleBlock;
use crate::dsp::{BandpassSpec, StreamingFilter};
use crate::error::{Error, Result};
use crate::montage::Montage;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlinkConfig {
    pub low_hz: f64,
    pub high_hz: f64,
    /// Onset threshold in rolling standard deviations.
    pub threshold_sigma: f64,
    pub std_window_sec: f64,
    pub refractory_sec: f64,
    /// No detections until this much signal has been seen.
    pub warmup_sec: f64,
    /// Prototype order of the detection band-pass. Kept low so that the
    /// filter's ringing after a large blink stays under threshold.
    pub filter_order: usize,
    /// After a blink the onset threshold is raised to this fraction of its
    /// peak, decaying with time constant `rearm_decay_sec`, so the filter's
    /// rebound is not taken for a second blink.
    pub rearm_fraction: f64,
    pub rearm_decay_sec: f64,
}

impl Default for BlinkConfig {
    fn default() -> Self {
        BlinkConfig {
            low_hz: 1.0,
            high_hz: 10.0,
            threshold_sigma: 4.0,
            std_window_sec: 10.0,
            refractory_sec: 0.2,
            warmup_sec: 2.0,
            filter_order: 2,
            rearm_fraction: 0.6,
            rearm_decay_sec: 2.0,
        }
    }
}

/// Positive-going threshold detector on the 1–10 Hz mean of Fp1/Fp2.
///
/// The rolling deviation is estimated from samples outside blinks only, so
/// frequent blinking does not raise its own threshold.
#[derive(Clone, Debug)]
pub struct BlinkDetector {
    cfg: BlinkConfig,
    fs: f64,
    channels: [usize; 2],
    filter: StreamingFilter,
    ring: Vec<f64>,
    ring_pos: usize,
    ring_len: usize,
    sum: f64,
    sum_sq: f64,
    seen: u64,
    refractory: u64,
    last_onset: Option<u64>,
    last_end: Option<u64>,
    peak: f64,
    peak_at: u64,
    active: bool,
}

impl BlinkDetector {
    pub fn new(montage: &Montage, fs: f64, cfg: BlinkConfig) -> Result<Self> {
        let idx = |l: &str| {
            montage
                .index_of(l)
                .ok_or_else(|| Error::Contract(format!("blink detection needs electrode {l}")))
        };
        let channels = [idx("Fp1")?, idx("Fp2")?];
        let filter = StreamingFilter::from_spec(BandpassSpec::new(cfg.low_hz, cfg.high_hz, cfg.filter_order, fs)?, 1)?;
        let window = (cfg.std_window_sec * fs).round().max(2.0) as usize;
        Ok(BlinkDetector {
            cfg,
            fs,
            channels,
            filter,
            ring: vec![0.0; window],
            ring_pos: 0,
            ring_len: 0,
            sum: 0.0,
            sum_sq: 0.0,
            seen: 0,
            refractory: (cfg.refractory_sec * fs).round() as u64,
            last_onset: None,
            last_end: None,
            peak: 0.0,
            peak_at: 0,
            active: false,
        })
    }

    pub fn config(&self) -> &BlinkConfig {
        &self.cfg
    }

    fn rolling_std(&self) -> f64 {
        if self.ring_len < 2 {
            return f64::INFINITY;
        }
        let n = self.ring_len as f64;
        let mean = self.sum / n;
        (self.sum_sq / n - mean * mean).max(0.0).sqrt()
    }

    fn record(&mut self, y: f64) {
        if self.ring_len == self.ring.len() {
            let old = self.ring[self.ring_pos];
            self.sum -= old;
            self.sum_sq -= old * old;
        } else {
            self.ring_len += 1;
        }
        self.ring[self.ring_pos] = y;
        self.sum += y;
        self.sum_sq += y * y;
        self.ring_pos = (self.ring_pos + 1) % self.ring.len();
        if self.ring_pos == 0 {
            self.sum = self.ring[..self.ring_len].iter().sum();
            self.sum_sq = self.ring[..self.ring_len].iter().map(|v| v * v).sum();
        }
    }

    // Measured both from the onset and from the end of the last blink.
    fn in_refractory(&self) -> bool {
        let within = |t: Option<u64>| t.is_some_and(|t| self.seen.saturating_sub(t) < self.refractory);
        within(self.last_onset) || within(self.last_end)
    }

    /// True while a blink is above threshold or inside its refractory span.
    pub fn in_progress(&self) -> bool {
        self.active || self.in_refractory()
    }

    /// Feeds one multichannel sample; returns `true` on a blink onset.
    pub fn push(&mut self, sample: &[f64]) -> bool {
        let x = 0.5 * (sample[self.channels[0]] + sample[self.channels[1]]);
        let y = self.filter.process_sample(0, x);
        self.seen += 1;
        let warm = self.seen as f64 >= self.cfg.warmup_sec * self.fs;
        let threshold = self.cfg.threshold_sigma * self.rolling_std();
        let since_peak = (self.seen - self.peak_at) as f64 / self.fs;
        let rearm = self.cfg.rearm_fraction * self.peak * (-since_peak / self.cfg.rearm_decay_sec).exp();
        let mut onset = false;
        if self.active {
            if y > self.peak {
                self.peak = y;
                self.peak_at = self.seen;
            }
            if y < 0.5 * threshold {
                self.active = false;
                self.last_end = Some(self.seen);
            }
        } else if warm && y > threshold.max(rearm) && !self.in_refractory() {
            self.active = true;
            self.peak = y;
            self.peak_at = self.seen;
            self.last_onset = Some(self.seen);
            onset = true;
        }
        if !self.in_progress() {
            self.record(y);
        }
        onset
    }

    /// Samples consumed so far.
    pub fn samples_seen(&self) -> u64 {
        self.seen
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BlinkReport {
    /// Whether a blink was in progress at any sample of the block.
    pub blink: bool,
    /// Onset timestamps (s) of blinks starting in the block.
    pub onsets: Vec<f64>,
}

pub fn detect_blink(block: &SampleBlock, state: &mut BlinkDetector) -> BlinkReport {
    let mut report = BlinkReport::default();
    let mut sample = vec![0.0; block.channel_count()];
    for i in 0..block.len() {
        for (s, ch) in sample.iter_mut().zip(&block.channels) {
            *s = ch[i];
        }
        if state.push(&sample) {
            report.onsets.push(block.time_of(i));
        }
        report.blink |= state.in_progress();
    }
    report
}
