use std::collections::VecDeque;
use std::sync::Arc;

use super::blink::{BlinkConfig, BlinkDetector};
use super::{
    PipelineKind, DEFAULT_FRAME_RATE, FILTER_ORDER, PLV_WINDOW_SEC, POWER_WINDOW_SEC,
    VISION_DELAY_SEC,
};
use crate::block::SampleBlock;
use crate::dsp::{laplacian_indices, plv, BandpassSpec, PhaseWindow, PowerEnvelope, StreamingFilter};
use crate::error::{Error, Result};
use crate::inverse::SloretaKernel;
use crate::montage::{Montage, Region};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EngineConfig {
    pub frame_rate_hz: f64,
    pub power_window_sec: f64,
    pub plv_window_sec: f64,
    pub vision_delay_sec: f64,
    pub blink: BlinkConfig,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            frame_rate_hz: DEFAULT_FRAME_RATE,
            power_window_sec: POWER_WINDOW_SEC,
            plv_window_sec: PLV_WINDOW_SEC,
            vision_delay_sec: VISION_DELAY_SEC,
            blink: BlinkConfig::default(),
        }
    }
}

/// Raw (un-normalized) quantities measured at one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct Features {
    /// 3–26 Hz power per electrode, montage order.
    pub wide: Vec<f64>,
    /// 16–24 Hz power of the Laplacian at C3, Cz, C4.
    pub motor: Vec<f64>,
    /// 8–12 Hz power over P3, Pz, P4, PO3, PO4, O1, Oz, O2.
    pub alpha: Vec<f64>,
    /// 7–28 Hz AFz/Pz phase-locking value, once the phase window is full.
    pub plv: Option<f64>,
    /// Mean sLORETA power per voxel over the frame, when a kernel is attached.
    pub sources: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureFrame {
    pub t: f64,
    /// Samples consumed when the frame was emitted.
    pub sample_index: u64,
    pub features: Features,
    /// Frame from one display delay earlier, with its timestamp.
    pub delayed: Option<(f64, Features)>,
    /// A blink was in progress at some sample since the previous frame.
    pub blink: bool,
    pub blink_onsets: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct EngineOutput {
    pub frames: Vec<FeatureFrame>,
    /// The input block band-passed with the tap pipeline's band, if set.
    pub tap: Option<SampleBlock>,
}

struct Bank {
    filter: StreamingFilter,
    out: Vec<f64>,
}

impl Bank {
    fn new(kind: PipelineKind, fs: f64, channels: usize) -> Result<Self> {
        let (lo, hi) = kind.band();
        Ok(Bank {
            filter: StreamingFilter::from_spec(BandpassSpec::new(lo, hi, FILTER_ORDER, fs)?, channels)?,
            out: vec![0.0; channels],
        })
    }

    fn run(&mut self, sample: &[f64]) {
        for (c, (&x, y)) in sample.iter().zip(&mut self.out).enumerate() {
            *y = self.filter.process_sample(c, x);
        }
    }
}

/// Shared feature extraction for all four pipelines.
pub struct Engine {
    fs: f64,
    cfg: EngineConfig,
    channels: usize,
    wide: Bank,
    beta: Bank,
    alpha: Bank,
    sync: Bank,
    wide_env: PowerEnvelope,
    motor_env: PowerEnvelope,
    alpha_env: PowerEnvelope,
    phase: PhaseWindow,
    blink: BlinkDetector,
    motor_idx: Vec<(usize, Vec<usize>)>,
    vision_idx: Vec<usize>,
    sync_idx: [usize; 2],
    t0: Option<f64>,
    seen: u64,
    frames_emitted: u64,
    history: VecDeque<(f64, Features)>,
    delay_frames: usize,
    blink_since_frame: bool,
    onsets_since_frame: Vec<f64>,
    kernel: Option<Arc<SloretaKernel>>,
    cov: Vec<f64>,
    cov_n: usize,
    tap: Option<PipelineKind>,
    scratch: Vec<f64>,
}

impl Engine {
    pub fn new(montage: &Montage, fs: f64, cfg: EngineConfig) -> Result<Self> {
        if !(cfg.frame_rate_hz > 0.0 && cfg.frame_rate_hz <= fs) {
            return Err(Error::Config(format!(
                "frame rate {} Hz out of range for fs {fs}",
                cfg.frame_rate_hz
            )));
        }
        let n = montage.len();
        let motor_idx = Region::MotorCenters
            .labels()
            .iter()
            .map(|c| laplacian_indices(c, montage))
            .collect::<Result<Vec<_>>>()?;
        let vision_idx = montage.region_indices(Region::Vision);
        let pair = montage.region_indices(Region::MeditationPair);
        let delay_frames = (cfg.vision_delay_sec * cfg.frame_rate_hz).round() as usize;
        Ok(Engine {
            fs,
            cfg,
            channels: n,
            wide: Bank::new(PipelineKind::Raw, fs, n)?,
            beta: Bank::new(PipelineKind::Motor, fs, n)?,
            alpha: Bank::new(PipelineKind::Vision, fs, n)?,
            sync: Bank::new(PipelineKind::Meditation, fs, n)?,
            wide_env: PowerEnvelope::for_duration(cfg.power_window_sec, fs, n)?,
            motor_env: PowerEnvelope::for_duration(cfg.power_window_sec, fs, motor_idx.len())?,
            alpha_env: PowerEnvelope::for_duration(cfg.power_window_sec, fs, vision_idx.len())?,
            phase: PhaseWindow::for_duration(cfg.plv_window_sec, fs, 2)?,
            blink: BlinkDetector::new(montage, fs, cfg.blink)?,
            motor_idx,
            vision_idx,
            sync_idx: [pair[0], pair[1]],
            t0: None,
            seen: 0,
            frames_emitted: 0,
            history: VecDeque::with_capacity(delay_frames + 1),
            delay_frames,
            blink_since_frame: false,
            onsets_since_frame: Vec::new(),
            kernel: None,
            cov: vec![0.0; n * n],
            cov_n: 0,
            tap: None,
            scratch: vec![0.0; n],
        })
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn samples_seen(&self) -> u64 {
        self.seen
    }

    /// Length of the phase window in samples.
    pub fn phase_window_len(&self) -> usize {
        self.phase.len()
    }

    /// Attaches a source kernel; frames then carry per-voxel power.
    pub fn set_kernel(&mut self, kernel: Option<Arc<SloretaKernel>>) -> Result<()> {
        if let Some(k) = &kernel {
            if k.electrode_count() != self.channels {
                return Err(Error::Contract(format!(
                    "kernel expects {} electrodes, engine has {}",
                    k.electrode_count(),
                    self.channels
                )));
            }
        }
        self.kernel = kernel;
        self.cov.iter_mut().for_each(|c| *c = 0.0);
        self.cov_n = 0;
        Ok(())
    }

    pub fn kernel(&self) -> Option<&Arc<SloretaKernel>> {
        self.kernel.as_ref()
    }

    /// Selects which band-passed copy of each block is returned as `tap`.
    pub fn set_tap(&mut self, tap: Option<PipelineKind>) {
        self.tap = tap;
    }

    fn frame_boundary(&self, k: u64) -> u64 {
        (k as f64 * self.fs / self.cfg.frame_rate_hz).round() as u64
    }

    pub fn push_block(&mut self, block: &SampleBlock) -> Result<EngineOutput> {
        if block.channel_count() != self.channels {
            return Err(Error::Contract(format!(
                "block has {} channels, engine expects {}",
                block.channel_count(),
                self.channels
            )));
        }
        if (block.fs - self.fs).abs() > 1e-9 {
            return Err(Error::Contract(format!(
                "block sampled at {} Hz, engine runs at {} Hz",
                block.fs, self.fs
            )));
        }
        if self.t0.is_none() {
            self.t0 = Some(block.t0);
        }
        let mut out = EngineOutput::default();
        let mut tap = self
            .tap
            .map(|_| vec![Vec::with_capacity(block.len()); self.channels]);
        for i in 0..block.len() {
            for (s, ch) in self.scratch.iter_mut().zip(&block.channels) {
                *s = ch[i];
            }
            self.push_sample(block.time_of(i));
            if let (Some(kind), Some(tap)) = (self.tap, tap.as_mut()) {
                let src = match kind {
                    PipelineKind::Raw => &self.wide.out,
                    PipelineKind::Motor => &self.beta.out,
                    PipelineKind::Vision => &self.alpha.out,
                    PipelineKind::Meditation => &self.sync.out,
                };
                for (t, &v) in tap.iter_mut().zip(src) {
                    t.push(v);
                }
            }
            if self.seen == self.frame_boundary(self.frames_emitted + 1) {
                self.frames_emitted += 1;
                out.frames.push(self.emit_frame());
            }
        }
        out.tap = tap.map(|channels| SampleBlock {
            t0: block.t0,
            fs: block.fs,
            channels,
        });
        Ok(out)
    }

    fn push_sample(&mut self, t: f64) {
        let x = &self.scratch;
        self.wide.run(x);
        self.beta.run(x);
        self.alpha.run(x);
        self.sync.run(x);

        self.wide_env.push(&self.wide.out);
        let beta = &self.beta.out;
        let lap: Vec<f64> = self
            .motor_idx
            .iter()
            .map(|(c, nb)| beta[*c] - nb.iter().map(|&j| beta[j]).sum::<f64>() / nb.len() as f64)
            .collect();
        self.motor_env.push(&lap);
        let alpha: Vec<f64> = self.vision_idx.iter().map(|&i| self.alpha.out[i]).collect();
        self.alpha_env.push(&alpha);
        self.phase
            .push(&[self.sync.out[self.sync_idx[0]], self.sync.out[self.sync_idx[1]]]);

        if self.blink.push(x) {
            self.onsets_since_frame.push(t);
        }
        self.blink_since_frame |= self.blink.in_progress();

        if self.kernel.is_some() {
            let w = &self.wide.out;
            let n = self.channels;
            for r in 0..n {
                let wr = w[r];
                let row = &mut self.cov[r * n..(r + 1) * n];
                for (c, v) in row.iter_mut().enumerate() {
                    *v += wr * w[c];
                }
            }
            self.cov_n += 1;
        }
        self.seen += 1;
    }

    fn emit_frame(&mut self) -> FeatureFrame {
        let t = self.t0.unwrap_or(0.0) + self.seen as f64 / self.fs;
        let plv = self
            .phase
            .central_phases()
            .ok()
            .map(|ph| plv(&ph[0], &ph[1]).expect("equal non-empty windows"));
        let sources = self.kernel.as_ref().map(|k| {
            let s = k.power_from_covariance(&self.cov, self.cov_n.max(1));
            self.cov.iter_mut().for_each(|c| *c = 0.0);
            self.cov_n = 0;
            s
        });
        let features = Features {
            wide: self.wide_env.powers(),
            motor: self.motor_env.powers(),
            alpha: self.alpha_env.powers(),
            plv,
            sources,
        };
        self.history.push_back((t, features.clone()));
        let delayed = if self.history.len() > self.delay_frames {
            self.history.pop_front()
        } else {
            None
        };
        let frame = FeatureFrame {
            t,
            sample_index: self.seen,
            features,
            delayed,
            blink: self.blink_since_frame,
            blink_onsets: std::mem::take(&mut self.onsets_since_frame),
        };
        self.blink_since_frame = self.blink.in_progress();
        frame
    }
}
