//! Seeded synthetic EEG with scripted events and sample-exact markers.
//!
//! Every channel carries independent pink noise. Three β generators at 20 Hz
//! sit under C3, Cz and C4 (full weight at the centre, 0.3 on its Laplacian
//! neighbours) and follow the movement events: halved during the movement,
//! ×1.3 for one second after it. Eyes-closed events add a 10 Hz rhythm over
//! the vision region weighted by the cosine of the distance to Oz. Blinks
//! add a biphasic template on Fp1/Fp2. Meditation events drive AFz and Pz
//! with either one shared 10 Hz oscillation or two unrelated ones.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::Path;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::block::SampleBlock;
use crate::error::{Error, Result};
use crate::montage::{geodesic_distance, Montage, Region};

pub const MIN_FS: f64 = 128.0;
pub const DEFAULT_NOISE_RMS_UV: f64 = 10.0;
pub const DEFAULT_BETA_UV: f64 = 10.0;
pub const DEFAULT_ALPHA_UV: f64 = 15.0;
pub const DEFAULT_BLINK_UV: f64 = 80.0;
pub const DEFAULT_MEDITATION_UV: f64 = 20.0;
pub const BETA_HZ: f64 = 20.0;
pub const ALPHA_HZ: f64 = 10.0;
pub const ERD_GAIN: f64 = 0.5;
pub const ERS_GAIN: f64 = 1.3;
pub const ERS_SEC: f64 = 1.0;
pub const NEIGHBOR_WEIGHT: f64 = 0.3;
/// Below this frequency the pink spectrum is held flat.
const PINK_FLOOR_HZ: f64 = 0.5;
/// Negative blink lobe relative to the positive one.
const BLINK_UNDERSHOOT: f64 = 0.3;
/// Phase diffusion (rad/√s) of the meditation oscillators.
const LOCKED_DIFFUSION: f64 = 0.5;
const UNLOCKED_DIFFUSION: f64 = 1.0;
/// Unlocked AFz and Pz run this far either side of 10 Hz.
const UNLOCKED_DETUNE_HZ: f64 = 2.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    EyesClosed,
    MoveLeftHand,
    MoveRightHand,
    MoveFeet,
    Blink,
    MeditationLock,
    MeditationUnlock,
}

impl EventKind {
    /// The electrode whose β generator a movement modulates.
    pub fn motor_center(self) -> Option<&'static str> {
        match self {
            EventKind::MoveRightHand => Some("C3"),
            EventKind::MoveLeftHand => Some("C4"),
            EventKind::MoveFeet => Some("Cz"),
            _ => None,
        }
    }

    fn default_amplitude(self) -> f64 {
        match self {
            EventKind::EyesClosed => DEFAULT_ALPHA_UV,
            EventKind::Blink => DEFAULT_BLINK_UV,
            EventKind::MeditationLock | EventKind::MeditationUnlock => DEFAULT_MEDITATION_UV,
            _ => 0.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct EventParams {
    /// Oscillation or template amplitude (μV); movement events ignore it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude_uv: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Event {
    pub t_start: f64,
    pub t_end: f64,
    pub kind: EventKind,
    #[serde(default)]
    pub params: EventParams,
}

impl Event {
    pub fn new(kind: EventKind, t_start: f64, t_end: f64) -> Self {
        Event {
            t_start,
            t_end,
            kind,
            params: EventParams::default(),
        }
    }

    pub fn amplitude(&self) -> f64 {
        self.params.amplitude_uv.unwrap_or(self.kind.default_amplitude())
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_start && t < self.t_end
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Span {
    pub t_start: f64,
    pub t_end: f64,
}

fn default_noise() -> f64 {
    DEFAULT_NOISE_RMS_UV
}

fn default_beta() -> f64 {
    DEFAULT_BETA_UV
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", deny_unknown_fields)]
pub struct Scenario {
    pub duration_sec: f64,
    pub fs: f64,
    pub seed: u64,
    pub events: Vec<Event>,
    #[serde(default = "default_noise")]
    pub noise_rms_uv: f64,
    #[serde(default = "default_beta")]
    pub beta_amplitude_uv: f64,
    /// The instructed baseline span, when the script includes one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Span>,
}

impl Scenario {
    pub fn new(duration_sec: f64, fs: f64, seed: u64) -> Self {
        Scenario {
            duration_sec,
            fs,
            seed,
            events: Vec::new(),
            noise_rms_uv: DEFAULT_NOISE_RMS_UV,
            beta_amplitude_uv: DEFAULT_BETA_UV,
            calibration: None,
        }
    }

    pub fn with_event(mut self, kind: EventKind, t_start: f64, t_end: f64) -> Self {
        self.events.push(Event::new(kind, t_start, t_end));
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.fs >= MIN_FS && self.fs.is_finite()) {
            return bad(format!("fs must be at least {MIN_FS} Hz, got {}", self.fs));
        }
        if !(self.duration_sec > 0.0 && self.duration_sec.is_finite()) {
            return bad(format!("duration must be positive, got {}", self.duration_sec));
        }
        if !(self.noise_rms_uv >= 0.0 && self.beta_amplitude_uv >= 0.0) {
            return bad("noise and β amplitudes must be non-negative".into());
        }
        let spans = self
            .events
            .iter()
            .map(|e| (format!("{:?} event", e.kind), e.t_start, e.t_end))
            .chain(self.calibration.map(|c| ("calibration span".to_string(), c.t_start, c.t_end)));
        for (what, a, b) in spans {
            if !(a >= 0.0 && b <= self.duration_sec) {
                return bad(format!("{what} [{a}, {b}] leaves [0, {}]", self.duration_sec));
            }
            if !(a < b) {
                return bad(format!("{what} must start before it ends, got [{a}, {b}]"));
            }
        }
        if let Some(e) = self.events.iter().find(|e| !(e.amplitude() >= 0.0 && e.amplitude().is_finite())) {
            return bad(format!("{:?} event amplitude must be a non-negative number", e.kind));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)
            .map_err(|e| Error::parse(format!("line {}, column {}", e.line(), e.column()), e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Scenario::from_json(&text)
    }

    pub fn sample_count(&self) -> usize {
        (self.duration_sec * self.fs).round() as usize
    }

    pub fn sample_index(&self, t: f64) -> usize {
        ((t * self.fs).round() as usize).min(self.sample_count())
    }

    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(move |e| e.kind == kind)
    }

    /// The bundled 120 s demonstration session: a 22 s instructed baseline
    /// with eyes closed and movements, then free exploration of every
    /// phenomenon, with blinks throughout.
    pub fn demo() -> Self {
        use EventKind::*;
        let mut s = Scenario::new(120.0, 256.0, 7);
        s.calibration = Some(Span {
            t_start: 2.0,
            t_end: 24.0,
        });
        let script = [
            (EyesClosed, 3.0, 9.0),
            (MoveRightHand, 11.0, 15.0),
            (MoveLeftHand, 16.0, 19.0),
            (MoveFeet, 20.0, 22.0),
            (EyesClosed, 30.0, 38.0),
            (MoveRightHand, 45.0, 50.0),
            (MeditationLock, 55.0, 65.0),
            (EyesClosed, 70.0, 78.0),
            (MoveRightHand, 90.0, 95.0),
            (MeditationUnlock, 100.0, 110.0),
        ];
        for (kind, a, b) in script {
            s.events.push(Event::new(kind, a, b));
        }
        for t in [26.0, 41.5, 53.0, 67.0, 81.0, 86.5, 97.0, 113.0, 116.5, 118.0] {
            s.events.push(Event::new(Blink, t, t + 0.3));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MarkedEvent {
    #[serde(flatten)]
    pub event: Event,
    pub start_sample: usize,
    /// Exclusive.
    pub end_sample: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GroundTruth {
    pub fs: f64,
    pub sample_count: usize,
    pub events: Vec<MarkedEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<Span>,
}

impl GroundTruth {
    pub fn of_kind(&self, kind: EventKind) -> impl Iterator<Item = &MarkedEvent> {
        self.events.iter().filter(move |e| e.event.kind == kind)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("markers serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::parse(format!("line {}, column {}", e.line(), e.column()), e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Synthesized {
    pub samples: SampleBlock,
    pub truth: GroundTruth,
}

fn channel_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Pink (1/f power) noise of exact RMS `rms`, shaped in the frequency domain.
pub fn pink_noise(n: usize, fs: f64, rms: f64, rng: &mut impl Rng) -> Vec<f64> {
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex64> = (0..n)
        .map(|_| Complex64::new(StandardNormal.sample(rng), 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    buf[0] = Complex64::new(0.0, 0.0);
    for (k, c) in buf.iter_mut().enumerate().skip(1) {
        let f = k.min(n - k) as f64 * fs / n as f64;
        *c /= f.max(PINK_FLOOR_HZ).sqrt();
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let mut out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let mean = out.iter().sum::<f64>() / n as f64;
    let cur = (out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    let scale = if cur > 0.0 { rms / cur } else { 0.0 };
    for v in &mut out {
        *v = (*v - mean) * scale;
    }
    out
}

/// Blink waveform at `k` of `len` samples: a half-sine up for two thirds of
/// the span, then a shallower half-sine down.
pub fn blink_template(k: usize, len: usize, amplitude: f64) -> f64 {
    let up = (2 * len).div_ceil(3);
    if k < up {
        amplitude * (PI * k as f64 / up as f64).sin()
    } else if k < len {
        let down = len - up;
        -BLINK_UNDERSHOOT * amplitude * (PI * (k - up) as f64 / down as f64).sin()
    } else {
        0.0
    }
}

/// β gain of one motor generator at sample `i` given its movement events.
fn beta_gain(moves: &[(usize, usize)], ers_len: usize, i: usize) -> f64 {
    if moves.iter().any(|&(a, b)| i >= a && i < b) {
        ERD_GAIN
    } else if moves.iter().any(|&(_, b)| i >= b && i < b + ers_len) {
        ERS_GAIN
    } else {
        1.0
    }
}

/// Oscillation with a randomly diffusing phase.
fn wandering_sine(
    n: usize,
    fs: f64,
    freq: f64,
    diffusion: f64,
    rng: &mut impl Rng,
) -> impl Iterator<Item = f64> + '_ {
    let mut phase = rng.random::<f64>() * TAU;
    let step = TAU * freq / fs;
    let kick = diffusion / fs.sqrt();
    let noise: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    (0..n).map(move |i| {
        let v = phase.sin();
        phase += step + kick * noise[i];
        v
    })
}

pub fn generate(scenario: &Scenario, montage: &Montage) -> Result<Synthesized> {
    scenario.validate()?;
    let fs = scenario.fs;
    let n = scenario.sample_count();
    let m = montage.len();
    let idx = |l: &str| {
        montage
            .index_of(l)
            .ok_or_else(|| Error::Contract(format!("synthesis needs electrode {l}")))
    };

    let mut channels: Vec<Vec<f64>> = (0..m)
        .map(|c| pink_noise(n, fs, scenario.noise_rms_uv, &mut channel_rng(scenario.seed, c as u64)))
        .collect();
    let mut rng = channel_rng(scenario.seed, m as u64 + 1);

    let marked: Vec<MarkedEvent> = scenario
        .events
        .iter()
        .map(|e| MarkedEvent {
            event: e.clone(),
            start_sample: scenario.sample_index(e.t_start),
            end_sample: scenario.sample_index(e.t_end),
        })
        .collect();
    let spans_of = |pred: &dyn Fn(EventKind) -> bool| -> Vec<(usize, usize, f64)> {
        marked
            .iter()
            .filter(|e| pred(e.event.kind))
            .map(|e| (e.start_sample, e.end_sample, e.event.amplitude()))
            .collect()
    };

    // β generators under the motor centres
    let ers_len = (ERS_SEC * fs).round() as usize;
    for center in Region::MotorCenters.labels() {
        let moves: Vec<(usize, usize)> = spans_of(&|k| k.motor_center() == Some(*center))
            .into_iter()
            .map(|(a, b, _)| (a, b))
            .collect();
        let c = idx(center)?;
        let neighbors = montage
            .laplacian_neighbors(center)
            .ok_or_else(|| Error::Contract(format!("{center} has no Laplacian neighbours")))?
            .iter()
            .map(|l| idx(l))
            .collect::<Result<Vec<_>>>()?;
        let phase0 = rng.random::<f64>() * TAU;
        for i in 0..n {
            let s = scenario.beta_amplitude_uv
                * beta_gain(&moves, ers_len, i)
                * (TAU * BETA_HZ * i as f64 / fs + phase0).sin();
            channels[c][i] += s;
            for &j in &neighbors {
                channels[j][i] += NEIGHBOR_WEIGHT * s;
            }
        }
    }

    // occipital α
    let oz = montage
        .electrode("Oz")
        .ok_or_else(|| Error::Contract("synthesis needs electrode Oz".into()))?
        .pos;
    let vision: Vec<(usize, f64)> = montage
        .region_indices(Region::Vision)
        .into_iter()
        .map(|i| (i, geodesic_distance(montage.electrodes()[i].pos, oz).cos().max(0.0)))
        .collect();
    for (a, b, amp) in spans_of(&|k| k == EventKind::EyesClosed) {
        let phase0 = rng.random::<f64>() * TAU;
        for i in a..b {
            let s = amp * (TAU * ALPHA_HZ * i as f64 / fs + phase0).sin();
            for &(c, w) in &vision {
                channels[c][i] += w * s;
            }
        }
    }

    let (fp1, fp2) = (idx("Fp1")?, idx("Fp2")?);
    for (a, b, amp) in spans_of(&|k| k == EventKind::Blink) {
        for i in a..b {
            let v = blink_template(i - a, b - a, amp);
            channels[fp1][i] += v;
            channels[fp2][i] += v;
        }
    }

    let (afz, pz) = (idx("AFz")?, idx("Pz")?);
    for e in &marked {
        let len = e.end_sample - e.start_sample;
        let amp = e.event.amplitude();
        match e.event.kind {
            EventKind::MeditationLock => {
                let wave: Vec<f64> = wandering_sine(len, fs, ALPHA_HZ, LOCKED_DIFFUSION, &mut rng).collect();
                for (k, v) in wave.into_iter().enumerate() {
                    channels[afz][e.start_sample + k] += amp * v;
                    channels[pz][e.start_sample + k] += amp * v;
                }
            }
            EventKind::MeditationUnlock => {
                for (c, f) in [(afz, ALPHA_HZ - UNLOCKED_DETUNE_HZ), (pz, ALPHA_HZ + UNLOCKED_DETUNE_HZ)] {
                    let wave: Vec<f64> = wandering_sine(len, fs, f, UNLOCKED_DIFFUSION, &mut rng).collect();
                    for (k, v) in wave.into_iter().enumerate() {
                        channels[c][e.start_sample + k] += amp * v;
                    }
                }
            }
            _ => {}
        }
    }

    Ok(Synthesized {
        samples: SampleBlock::new(0.0, fs, channels)?,
        truth: GroundTruth {
            fs,
            sample_count: n,
            events: marked,
            calibration: scenario.calibration,
        },
    })
}
