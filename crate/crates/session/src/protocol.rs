//! Wire messages. Every message is one JSON text with a `type` tag; see
//! docs/PROTOCOL.md for the frozen field list.

use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use serde::{Deserialize, Serialize};

use scalpview_core::pipelines::PipelineKind;
use scalpview_core::topomap::{validate_gain, ScalpField, MAX_GAIN};
use scalpview_core::{Error, Result};

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ElectrodeInfo {
    pub label: String,
    pub uv: [f64; 2],
    pub position: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct GridInfo {
    pub width: usize,
    pub height: usize,
    /// Base64 of the row-major head-outline bitset, least significant bit first.
    pub mask: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LeadFieldInfo {
    pub available: bool,
    pub voxels: usize,
    /// Voxel positions in head coordinates, present when available.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub positions: Vec<[f32; 3]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Hello {
    pub version: u32,
    pub montage: Vec<ElectrodeInfo>,
    pub fs: f64,
    pub frame_rate_hz: f64,
    pub trace_rate_hz: f64,
    /// Raw samples per trace sample.
    pub decimation: usize,
    pub pipelines: Vec<PipelineKind>,
    pub active_pipeline: PipelineKind,
    pub gain: f64,
    pub max_gain: f64,
    pub calibration: CalibrationPhase,
    pub grid: GridInfo,
    pub lead_field: LeadFieldInfo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationPhase {
    Idle,
    Calibrating,
    Ready,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    /// Base64 of row-major little-endian f32 field values.
    pub data: String,
}

impl Grid {
    pub fn from_field(field: &ScalpField) -> Self {
        Grid {
            width: field.width,
            height: field.height,
            data: STANDARD.encode(field.values_le_bytes()),
        }
    }

    pub fn values(&self) -> Result<Vec<f32>> {
        let bytes = STANDARD
            .decode(&self.data)
            .map_err(|e| Error::parse("grid.data", e.to_string()))?;
        if bytes.len() != 4 * self.width * self.height {
            return Err(Error::parse(
                "grid.data",
                format!("{} bytes for a {}x{} grid", bytes.len(), self.width, self.height),
            ));
        }
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Frame {
    pub t: f64,
    pub pipeline: PipelineKind,
    pub electrode_values: Vec<f64>,
    pub highlight: Vec<String>,
    pub blink: bool,
    pub gain: f64,
    pub calibration: CalibrationPhase,
    /// False while calibrating, uncalibrated, or while a window fills.
    pub ready: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sources: Option<Vec<f32>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Trace {
    /// Time of the first sample.
    pub t: f64,
    /// Rate of the decimated samples.
    pub fs: f64,
    /// `None` for raw samples, else the pipeline whose band filtered them.
    pub filter: Option<PipelineKind>,
    /// Per electrode, montage order.
    pub channels: Vec<Vec<f32>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct End {
    pub t: f64,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ErrorMessage {
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    Hello(Hello),
    Frame(Frame),
    Trace(Trace),
    End(End),
    Error(ErrorMessage),
}

impl ServerMessage {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }

    pub fn error(message: impl Into<String>) -> Self {
        ServerMessage::Error(ErrorMessage {
            message: message.into(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ControlMessage {
    SelectPipeline { pipeline: PipelineKind },
    SetGain { gain: f64 },
    StartCalibration,
    EndCalibration,
    ToggleSources { enabled: bool },
    ToggleTraces { enabled: bool },
}

impl ControlMessage {
    /// Parses and validates one client message.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: String| Error::parse("control message", m);
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        let msg: ControlMessage = serde_json::from_value(value.clone()).map_err(|e| bad(e.to_string()))?;
        // serde lets extra fields through on unit variants of a tagged enum
        let known = serde_json::to_value(&msg).expect("control messages serialize");
        if let Some(extra) = value
            .as_object()
            .and_then(|o| o.keys().find(|k| known.get(k.as_str()).is_none()))
        {
            return Err(bad(format!("unknown field `{extra}`")));
        }
        if let ControlMessage::SetGain { gain } = msg {
            validate_gain(gain)?;
        }
        Ok(msg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("control messages serialize")
    }
}

pub fn gain_bounds() -> (f64, f64) {
    (0.0, MAX_GAIN)
}
