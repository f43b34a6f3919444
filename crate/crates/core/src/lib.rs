//! Real-time EEG display engine: streaming band-pass pipelines, scalp
//! topography, blink detection, calibration baselines, sLORETA source power
//! and a seeded synthetic-EEG generator with ground-truth markers.

pub mod block;
pub mod dsp;
pub mod error;
pub mod inverse;
pub mod montage;
pub mod pipelines;
pub mod recording;
pub mod replay;
pub mod synth;
pub mod topomap;

pub use block::SampleBlock;
pub use error::{Error, Result};
pub use montage::{Electrode, Montage, Region};
