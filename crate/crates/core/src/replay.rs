//! Offline replay: run a whole recording through the engine, calibrate over
//! a span and render every frame of every pipeline.

use std::collections::BTreeMap;

use crate::block::SampleBlock;
use crate::error::Result;
use crate::montage::Montage;
use crate::pipelines::{calibrate, render, Baseline, Engine, EngineConfig, FeatureFrame, PipelineKind, PipelineOutput};
use crate::synth::Span;

pub struct Replay {
    pub frames: Vec<FeatureFrame>,
    pub baseline: Baseline,
    pub outputs: BTreeMap<PipelineKind, Vec<PipelineOutput>>,
}

impl Replay {
    pub fn outputs(&self, kind: PipelineKind) -> &[PipelineOutput] {
        &self.outputs[&kind]
    }
}

/// Frames whose emission time falls inside the span.
pub fn frames_in<'a>(frames: &'a [FeatureFrame], span: Span) -> impl Iterator<Item = &'a FeatureFrame> {
    frames.iter().filter(move |f| f.t > span.t_start && f.t <= span.t_end)
}

/// Feeds `samples` in blocks of `block_len` and collects every frame.
pub fn run_frames(samples: &SampleBlock, montage: &Montage, cfg: EngineConfig, block_len: usize) -> Result<Vec<FeatureFrame>> {
    let mut engine = Engine::new(montage, samples.fs, cfg)?;
    let mut frames = Vec::new();
    for block in samples.chunks(block_len) {
        frames.extend(engine.push_block(&block)?.frames);
    }
    Ok(frames)
}

pub fn replay(samples: &SampleBlock, montage: &Montage, cfg: EngineConfig, calibration: Span) -> Result<Replay> {
    let block_len = (samples.fs / cfg.frame_rate_hz).round().max(1.0) as usize;
    let frames = run_frames(samples, montage, cfg, block_len)?;
    let baseline = calibrate(frames_in(&frames, calibration), cfg.frame_rate_hz)?;
    let mut outputs = BTreeMap::new();
    for kind in PipelineKind::ALL {
        let rendered = frames
            .iter()
            .map(|f| render(kind, f, &baseline, montage))
            .collect::<Result<Vec<_>>>()?;
        outputs.insert(kind, rendered);
    }
    Ok(Replay {
        frames,
        baseline,
        outputs,
    })
}
