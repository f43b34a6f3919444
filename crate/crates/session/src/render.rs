//! Headless snapshots of one pipeline at one instant of a recording.

use std::path::Path;

use serde::{Deserialize, Serialize};

use scalpview_core::pipelines::{calibrate, render, EngineConfig, PipelineKind, PipelineOutput};
use scalpview_core::replay::{frames_in, run_frames};
use scalpview_core::synth::Span;
use scalpview_core::topomap::{ColorPolicy, Interpolator, RgbaImage, ScalpField};
use scalpview_core::{Error, Montage, Result, SampleBlock};

use crate::protocol::Grid;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Snapshot {
    pub t: f64,
    pub state_t: f64,
    pub pipeline: PipelineKind,
    pub electrode_values: Vec<f64>,
    pub highlight: Vec<String>,
    pub blink: bool,
    pub ready: bool,
    pub calibration: Span,
    pub grid: Grid,
}

pub struct Rendered {
    pub output: PipelineOutput,
    pub field: ScalpField,
    pub calibration: Span,
}

/// Display state of `kind` at the last frame emitted at or before `at`,
/// normalized by a baseline collected over `calibration`.
pub fn render_at(
    samples: &SampleBlock,
    montage: &Montage,
    kind: PipelineKind,
    at: f64,
    calibration: Span,
    grid: usize,
) -> Result<Rendered> {
    let end_time = samples.time_of(samples.len());
    if at > end_time {
        return Err(Error::Config(format!("--at {at} is past the end of the recording ({end_time} s)")));
    }
    if at < samples.t0 {
        return Err(Error::Config(format!("--at {at} precedes the recording start ({} s)", samples.t0)));
    }
    let cfg = EngineConfig::default();
    // Offline, so the baseline may come from a span that ends after `at`.
    let until = at.max(calibration.t_end);
    let upto = (((until - samples.t0) * samples.fs).floor() as usize + 1).min(samples.len());
    let frames = run_frames(&samples.slice(0, upto), montage, cfg, 256)?;
    let baseline = calibrate(frames_in(&frames, calibration), cfg.frame_rate_hz)?;
    let frame = frames
        .iter()
        .rev()
        .find(|f| f.t <= at + 1e-9)
        .ok_or_else(|| Error::Config(format!("no frame emitted by {at} s")))?;
    let output = render(kind, frame, &baseline, montage)?;
    let field = Interpolator::new(montage, grid, grid)?.interpolate(&output.values)?;
    Ok(Rendered {
        output,
        field,
        calibration,
    })
}

impl Rendered {
    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            t: self.output.t,
            state_t: self.output.state_t,
            pipeline: self.output.kind,
            electrode_values: self.output.values.clone(),
            highlight: self.output.highlight.clone(),
            blink: self.output.blink,
            ready: self.output.ready,
            calibration: self.calibration,
            grid: Grid::from_field(&self.field),
        }
    }

    pub fn image(&self, montage: &Montage, gain: f64) -> Result<RgbaImage> {
        let policy = match self.output.kind {
            PipelineKind::Meditation => ColorPolicy::synchrony(gain)?,
            _ => ColorPolicy::signed(gain)?,
        };
        let lit: Vec<&str> = self.output.highlight.iter().map(String::as_str).collect();
        scalpview_core::topomap::colorize(&self.field, &lit, montage, &policy)
    }

    /// Writes a PNG when the path ends in `.png`, a JSON snapshot otherwise.
    pub fn write(&self, path: &Path, montage: &Montage, gain: f64) -> Result<()> {
        let is_png = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png {
            let img = self.image(montage, gain)?;
            image::save_buffer(
                path,
                &img.pixels,
                img.width as u32,
                img.height as u32,
                image::ExtendedColorType::Rgba8,
            )
            .map_err(|e| Error::io(path, std::io::Error::other(e)))
        } else {
            let json = serde_json::to_string_pretty(&self.snapshot()).expect("snapshot serializes");
            std::fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
        }
    }
}
