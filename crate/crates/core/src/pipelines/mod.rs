//! The four display pipelines (Raw, Motor, Vision, Meditation), calibration
//! baselines and blink detection.
//!
//! An [`Engine`] runs every pipeline's feature extraction on each sample so
//! that switching the displayed pipeline never restarts a filter. At each
//! frame boundary it emits a [`FeatureFrame`]; [`render`] turns a frame into
//! the per-electrode display values of one pipeline against a [`Baseline`].

mod baseline;
mod blink;
mod engine;

pub use baseline::{calibrate, Baseline, Calibrator, QuantityStats};
pub use blink::{detect_blink, BlinkConfig, BlinkDetector, BlinkReport};
pub use engine::{Engine, EngineConfig, EngineOutput, FeatureFrame, Features};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::block::SampleBlock;
use crate::dsp::BandpassSpec;
use crate::error::{Error, Result};
use crate::montage::{Montage, Region};

pub const DEFAULT_FRAME_RATE: f64 = 10.0;
pub const FILTER_ORDER: usize = 4;
pub const POWER_WINDOW_SEC: f64 = 1.0;
pub const PLV_WINDOW_SEC: f64 = 1.0;
pub const VISION_DELAY_SEC: f64 = 0.5;
pub const MIN_CALIBRATION_SEC: f64 = 3.0;
/// z-scores are clamped to ±this many deviations before scaling to [−1, 1].
pub const Z_CLAMP: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PipelineKind {
    Raw,
    Motor,
    Vision,
    Meditation,
}

impl PipelineKind {
    pub const ALL: [PipelineKind; 4] = [
        PipelineKind::Raw,
        PipelineKind::Motor,
        PipelineKind::Vision,
        PipelineKind::Meditation,
    ];

    /// Band edges (Hz) of the pipeline's quantity of interest.
    pub fn band(self) -> (f64, f64) {
        match self {
            PipelineKind::Raw => (3.0, 26.0),
            PipelineKind::Motor => (16.0, 24.0),
            PipelineKind::Vision => (8.0, 12.0),
            PipelineKind::Meditation => (7.0, 28.0),
        }
    }

    pub fn display_delay_sec(self) -> f64 {
        if self == PipelineKind::Vision {
            VISION_DELAY_SEC
        } else {
            0.0
        }
    }

    /// Labels rendered in color; everything else is gray.
    pub fn highlight_labels(self, montage: &Montage) -> Vec<String> {
        match self.region() {
            None => montage.labels().map(str::to_string).collect(),
            Some(r) => r.labels().iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn region(self) -> Option<Region> {
        match self {
            PipelineKind::Raw => None,
            PipelineKind::Motor => Some(Region::MotorCenters),
            PipelineKind::Vision => Some(Region::Vision),
            PipelineKind::Meditation => Some(Region::MeditationPair),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PipelineKind::Raw => "raw",
            PipelineKind::Motor => "motor",
            PipelineKind::Vision => "vision",
            PipelineKind::Meditation => "meditation",
        }
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PipelineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PipelineKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown pipeline {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineConfig {
    pub kind: PipelineKind,
    pub band: BandpassSpec,
    pub display_delay_sec: f64,
    pub frame_rate_hz: f64,
}

impl PipelineConfig {
    pub fn new(kind: PipelineKind, fs: f64, frame_rate_hz: f64) -> Result<Self> {
        let (lo, hi) = kind.band();
        if !(frame_rate_hz > 0.0 && frame_rate_hz <= fs) {
            return Err(Error::Config(format!("frame rate {frame_rate_hz} Hz out of range")));
        }
        Ok(PipelineConfig {
            kind,
            band: BandpassSpec::new(lo, hi, FILTER_ORDER, fs)?,
            display_delay_sec: kind.display_delay_sec(),
            frame_rate_hz,
        })
    }
}

/// One displayed frame of one pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    /// Emission time (s).
    pub t: f64,
    /// Time of the pipeline state shown; `t − 0.5` for Vision.
    pub state_t: f64,
    pub kind: PipelineKind,
    /// One value per electrode in montage order.
    pub values: Vec<f64>,
    pub highlight: Vec<String>,
    pub blink: bool,
    /// False for neutral frames emitted while a window or delay line fills.
    pub ready: bool,
}

fn normalize(stats: &QuantityStats, i: usize, x: f64) -> f64 {
    let z = (x - stats.mean[i]) / stats.std[i];
    z.clamp(-Z_CLAMP, Z_CLAMP) / Z_CLAMP
}

/// Display values of `kind` for one feature frame.
pub fn render(
    kind: PipelineKind,
    frame: &FeatureFrame,
    baseline: &Baseline,
    montage: &Montage,
) -> Result<PipelineOutput> {
    let highlight = kind.highlight_labels(montage);
    let neutral = |state_t: f64| PipelineOutput {
        t: frame.t,
        state_t,
        kind,
        values: vec![0.0; montage.len()],
        highlight: highlight.clone(),
        blink: frame.blink,
        ready: false,
    };
    let (state_t, features) = match kind {
        PipelineKind::Vision => match &frame.delayed {
            Some((t, f)) => (*t, f),
            None => return Ok(neutral(frame.t - VISION_DELAY_SEC)),
        },
        _ => (frame.t, &frame.features),
    };
    if features.wide.len() != montage.len() {
        return Err(Error::Contract("feature frame does not match the montage".into()));
    }
    let mut values: Vec<f64> = features
        .wide
        .iter()
        .enumerate()
        .map(|(i, &p)| normalize(&baseline.wide, i, p))
        .collect();
    match kind {
        PipelineKind::Raw => {}
        PipelineKind::Motor => {
            for (i, idx) in montage.region_indices(Region::MotorCenters).into_iter().enumerate() {
                values[idx] = normalize(&baseline.motor, i, features.motor[i]);
            }
        }
        PipelineKind::Vision => {
            for (i, idx) in montage.region_indices(Region::Vision).into_iter().enumerate() {
                values[idx] = normalize(&baseline.alpha, i, features.alpha[i]);
            }
        }
        PipelineKind::Meditation => {
            let Some(plv) = features.plv else {
                return Ok(neutral(frame.t));
            };
            let plv = plv.clamp(0.0, 1.0);
            for idx in montage.region_indices(Region::MeditationPair) {
                values[idx] = plv;
            }
        }
    }
    Ok(PipelineOutput {
        t: frame.t,
        state_t,
        kind,
        values,
        highlight,
        blink: frame.blink,
        ready: true,
    })
}

/// A single pipeline bound to its own engine.
pub struct Pipeline {
    kind: PipelineKind,
    engine: Engine,
    montage: Montage,
}

impl Pipeline {
    pub fn new(kind: PipelineKind, montage: &Montage, fs: f64, cfg: EngineConfig) -> Result<Self> {
        PipelineConfig::new(kind, fs, cfg.frame_rate_hz)?;
        Ok(Pipeline {
            kind,
            engine: Engine::new(montage, fs, cfg)?,
            montage: montage.clone(),
        })
    }

    pub fn kind(&self) -> PipelineKind {
        self.kind
    }

    pub fn engine(&self) -> &Engine {
        &self.engine
    }

    /// Advances state without rendering; use to collect calibration frames.
    pub fn feed(&mut self, block: &SampleBlock) -> Result<Vec<FeatureFrame>> {
        Ok(self.engine.push_block(block)?.frames)
    }

    /// Processes a block and renders every frame it completes.
    ///
    /// Fails with [`Error::NotCalibrated`] before consuming anything when no
    /// baseline is supplied.
    pub fn step(&mut self, block: &SampleBlock, baseline: Option<&Baseline>) -> Result<Vec<PipelineOutput>> {
        let baseline = baseline.ok_or(Error::NotCalibrated)?;
        self.engine
            .push_block(block)?
            .frames
            .iter()
            .map(|f| render(self.kind, f, baseline, &self.montage))
            .collect()
    }
}
