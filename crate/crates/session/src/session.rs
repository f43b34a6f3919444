//! The processing side of a live session: one owner of all pipeline state,
//! fed blocks and control messages in order, producing outbound messages.

use std::sync::Arc;

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;

use scalpview_core::inverse::{normalize_sources, SloretaKernel};
use scalpview_core::pipelines::{
    render, Baseline, Calibrator, Engine, EngineConfig, FeatureFrame, PipelineKind, DEFAULT_FRAME_RATE,
};
use scalpview_core::synth::Span;
use scalpview_core::topomap::{validate_gain, Interpolator, DEFAULT_GRID, MAX_GAIN};
use scalpview_core::{Error, Montage, Result, SampleBlock};

use crate::protocol::{
    CalibrationPhase, ControlMessage, ElectrodeInfo, End, Frame, Grid, GridInfo, Hello, LeadFieldInfo,
    ServerMessage, Trace, PROTOCOL_VERSION,
};

pub const TRACE_RATE_HZ: f64 = 20.0;
/// Trace samples are box-averaged over this many input samples.
pub const TRACE_DECIMATION: usize = 2;

#[derive(Clone, Debug)]
pub struct SessionConfig {
    pub frame_rate_hz: f64,
    pub grid: usize,
    pub gain: f64,
    pub pipeline: PipelineKind,
    /// Calibrate over this span without waiting for control messages.
    pub auto_calibration: Option<Span>,
    pub traces: bool,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            frame_rate_hz: DEFAULT_FRAME_RATE,
            grid: DEFAULT_GRID,
            gain: 1.0,
            pipeline: PipelineKind::Raw,
            auto_calibration: None,
            traces: true,
        }
    }
}

// Trace k closes once round(k·fs/TRACE_RATE_HZ) samples have been seen, so
// traces keep an exact 20 Hz cadence whatever fs is. Decimation groups carry
// over trace boundaries, which keeps the decimated rate uniform.
struct TraceBuffer {
    fs: f64,
    seen: u64,
    emitted: u64,
    t0: Option<f64>,
    group_t: f64,
    acc: Vec<f64>,
    acc_n: usize,
    out: Vec<Vec<f32>>,
}

impl TraceBuffer {
    fn new(fs: f64, channels: usize) -> Self {
        TraceBuffer {
            fs,
            seen: 0,
            emitted: 0,
            t0: None,
            group_t: 0.0,
            acc: vec![0.0; channels],
            acc_n: 0,
            out: vec![Vec::new(); channels],
        }
    }

    /// Drops buffered samples but keeps the cadence.
    fn clear(&mut self) {
        self.t0 = None;
        self.acc.iter_mut().for_each(|a| *a = 0.0);
        self.acc_n = 0;
        self.out.iter_mut().for_each(Vec::clear);
    }

    fn push(&mut self, t: f64, sample: impl Iterator<Item = f64>, filter: Option<PipelineKind>) -> Option<Trace> {
        if self.acc_n == 0 {
            self.group_t = t;
        }
        for (a, x) in self.acc.iter_mut().zip(sample) {
            *a += x;
        }
        self.acc_n += 1;
        self.seen += 1;
        if self.acc_n == TRACE_DECIMATION {
            self.t0.get_or_insert(self.group_t);
            for (o, a) in self.out.iter_mut().zip(&mut self.acc) {
                o.push((*a / TRACE_DECIMATION as f64) as f32);
                *a = 0.0;
            }
            self.acc_n = 0;
        }
        let boundary = ((self.emitted + 1) as f64 * self.fs / TRACE_RATE_HZ).round() as u64;
        if self.seen < boundary {
            return None;
        }
        self.emitted += 1;
        let t0 = self.t0.take()?;
        Some(Trace {
            t: t0,
            fs: self.fs / TRACE_DECIMATION as f64,
            filter,
            channels: self.out.iter_mut().map(std::mem::take).collect(),
        })
    }
}

pub struct Session {
    montage: Montage,
    fs: f64,
    cfg: SessionConfig,
    engine: Engine,
    interp: Interpolator,
    phase: CalibrationPhase,
    calibrator: Option<Calibrator>,
    baseline: Option<Baseline>,
    active: PipelineKind,
    gain: f64,
    sources_on: bool,
    traces_on: bool,
    kernel: Option<Arc<SloretaKernel>>,
    voxel_positions: Vec<[f32; 3]>,
    traces: TraceBuffer,
    last_t: f64,
    frames_emitted: u64,
}

impl Session {
    pub fn new(montage: &Montage, fs: f64, cfg: SessionConfig) -> Result<Self> {
        validate_gain(cfg.gain)?;
        let engine = Engine::new(
            montage,
            fs,
            EngineConfig {
                frame_rate_hz: cfg.frame_rate_hz,
                ..EngineConfig::default()
            },
        )?;
        let interp = Interpolator::new(montage, cfg.grid, cfg.grid)?;
        let mut s = Session {
            montage: montage.clone(),
            fs,
            engine,
            interp,
            phase: CalibrationPhase::Idle,
            calibrator: None,
            baseline: None,
            active: cfg.pipeline,
            gain: cfg.gain,
            sources_on: false,
            traces_on: cfg.traces,
            kernel: None,
            voxel_positions: Vec::new(),
            traces: TraceBuffer::new(fs, montage.len()),
            last_t: 0.0,
            frames_emitted: 0,
            cfg,
        };
        s.sync_tap();
        Ok(s)
    }

    /// Makes source imaging available; it stays off until toggled on.
    pub fn with_kernel(mut self, kernel: SloretaKernel, voxel_positions: &[[f64; 3]]) -> Result<Self> {
        if kernel.electrode_count() != self.montage.len() {
            return Err(Error::Contract(format!(
                "kernel expects {} electrodes, montage has {}",
                kernel.electrode_count(),
                self.montage.len()
            )));
        }
        if voxel_positions.len() != kernel.voxel_count() {
            return Err(Error::Contract("voxel positions do not match the kernel".into()));
        }
        self.voxel_positions = voxel_positions.iter().map(|p| p.map(|c| c as f32)).collect();
        self.kernel = Some(Arc::new(kernel));
        Ok(self)
    }

    pub fn montage(&self) -> &Montage {
        &self.montage
    }

    pub fn active_pipeline(&self) -> PipelineKind {
        self.active
    }

    pub fn calibration(&self) -> CalibrationPhase {
        self.phase
    }

    pub fn baseline(&self) -> Option<&Baseline> {
        self.baseline.as_ref()
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }

    pub fn frames_emitted(&self) -> u64 {
        self.frames_emitted
    }

    pub fn hello(&self) -> ServerMessage {
        ServerMessage::Hello(Hello {
            version: PROTOCOL_VERSION,
            montage: self
                .montage
                .electrodes()
                .iter()
                .map(|e| ElectrodeInfo {
                    label: e.name.clone(),
                    uv: e.uv,
                    position: e.pos,
                })
                .collect(),
            fs: self.fs,
            frame_rate_hz: self.cfg.frame_rate_hz,
            trace_rate_hz: TRACE_RATE_HZ,
            decimation: TRACE_DECIMATION,
            pipelines: PipelineKind::ALL.to_vec(),
            active_pipeline: self.active,
            gain: self.gain,
            max_gain: MAX_GAIN,
            calibration: self.phase,
            grid: GridInfo {
                width: self.interp.width(),
                height: self.interp.height(),
                mask: STANDARD.encode(scalpview_core::topomap::mask_to_bitset(self.interp.mask())),
            },
            lead_field: LeadFieldInfo {
                available: self.kernel.is_some(),
                voxels: self.kernel.as_ref().map_or(0, |k| k.voxel_count()),
                positions: self.voxel_positions.clone(),
            },
        })
    }

    fn sync_tap(&mut self) {
        let tap = match self.active {
            PipelineKind::Raw => None,
            kind if self.traces_on => Some(kind),
            _ => None,
        };
        self.engine.set_tap(tap);
    }

    /// Applies one control message. Errors leave the session unchanged.
    pub fn apply(&mut self, msg: &ControlMessage) -> Result<()> {
        match *msg {
            ControlMessage::SelectPipeline { pipeline } => {
                if pipeline != self.active {
                    self.active = pipeline;
                    self.traces.clear();
                    self.sync_tap();
                }
            }
            ControlMessage::SetGain { gain } => {
                validate_gain(gain)?;
                self.gain = gain;
            }
            ControlMessage::StartCalibration => {
                self.calibrator = Some(Calibrator::new(self.cfg.frame_rate_hz));
                self.phase = CalibrationPhase::Calibrating;
            }
            ControlMessage::EndCalibration => {
                let cal = self
                    .calibrator
                    .as_ref()
                    .ok_or_else(|| Error::Contract("end_calibration without start_calibration".into()))?;
                self.baseline = Some(cal.finish()?);
                self.calibrator = None;
                self.phase = CalibrationPhase::Ready;
            }
            ControlMessage::ToggleSources { enabled } => {
                if enabled && self.kernel.is_none() {
                    return Err(Error::Config("no lead field loaded; start the server with --leadfield".into()));
                }
                self.sources_on = enabled;
                self.engine.set_kernel(if enabled { self.kernel.clone() } else { None })?;
            }
            ControlMessage::ToggleTraces { enabled } => {
                self.traces_on = enabled;
                self.traces.clear();
                self.sync_tap();
            }
        }
        Ok(())
    }

    fn auto_calibrate(&mut self, t: f64) -> Result<()> {
        let Some(span) = self.cfg.auto_calibration else {
            return Ok(());
        };
        if self.phase == CalibrationPhase::Idle && self.baseline.is_none() && t >= span.t_start && t < span.t_end {
            self.apply(&ControlMessage::StartCalibration)?;
        }
        if self.phase == CalibrationPhase::Calibrating && t >= span.t_end {
            self.cfg.auto_calibration = None;
            self.apply(&ControlMessage::EndCalibration)?;
        }
        Ok(())
    }

    pub fn process_block(&mut self, block: &SampleBlock) -> Result<Vec<ServerMessage>> {
        let out = self.engine.push_block(block)?;
        let mut messages = Vec::with_capacity(out.frames.len() + 2);
        if self.traces_on {
            let filter = out.tap.as_ref().map(|_| self.active);
            let src = out.tap.as_ref().unwrap_or(block);
            for i in 0..src.len() {
                if let Some(tr) = self.traces.push(src.time_of(i), src.sample(i), filter) {
                    messages.push(ServerMessage::Trace(tr));
                }
            }
        }
        for f in &out.frames {
            messages.push(ServerMessage::Frame(self.frame(f)?));
            if let Err(e) = self.auto_calibrate(f.t) {
                messages.push(ServerMessage::error(e.to_string()));
            }
        }
        self.last_t = block.time_of(block.len());
        Ok(messages)
    }

    fn frame(&mut self, f: &FeatureFrame) -> Result<Frame> {
        if let Some(cal) = self.calibrator.as_mut() {
            cal.push(&f.features);
        }
        self.frames_emitted += 1;
        let highlight = self.active.highlight_labels(&self.montage);
        let (values, ready) = match (&self.baseline, self.phase) {
            (Some(b), CalibrationPhase::Ready) => {
                let o = render(self.active, f, b, &self.montage)?;
                (o.values, o.ready)
            }
            _ => (vec![0.0; self.montage.len()], false),
        };
        let sources = match (&f.features.sources, self.sources_on) {
            (Some(raw), true) => Some(self.display_sources(raw)?),
            _ => None,
        };
        Ok(Frame {
            t: f.t,
            pipeline: self.active,
            grid: Some(Grid::from_field(&self.interp.interpolate(&values)?)),
            electrode_values: values,
            highlight,
            blink: f.blink,
            gain: self.gain,
            calibration: self.phase,
            ready,
            sources,
        })
    }

    // Baseline-normalized when the baseline saw sources, else scaled to the frame maximum.
    fn display_sources(&self, raw: &[f64]) -> Result<Vec<f32>> {
        let stats = self
            .baseline
            .as_ref()
            .and_then(|b| b.sources.as_ref())
            .filter(|s| s.mean.len() == raw.len() && self.phase == CalibrationPhase::Ready);
        let vals = match stats {
            Some(s) => normalize_sources(raw, s)?,
            None => {
                let max = raw.iter().cloned().fold(0.0, f64::max);
                raw.iter().map(|v| if max > 0.0 { v / max } else { 0.0 }).collect()
            }
        };
        Ok(vals.into_iter().map(|v| v as f32).collect())
    }

    pub fn end(&self, reason: &str) -> ServerMessage {
        ServerMessage::End(End {
            t: self.last_t,
            reason: reason.to_string(),
        })
    }
}

/// Splits a recording into blocks that each end on a frame boundary.
pub fn frame_blocks(samples: &SampleBlock, frame_rate_hz: f64) -> Vec<SampleBlock> {
    let step = samples.fs / frame_rate_hz;
    let mut blocks = Vec::new();
    let mut k = 0u64;
    loop {
        let a = (k as f64 * step).round() as usize;
        if a >= samples.len() {
            break;
        }
        let b = (((k + 1) as f64 * step).round() as usize).min(samples.len());
        blocks.push(samples.slice(a, b));
        k += 1;
    }
    blocks
}
