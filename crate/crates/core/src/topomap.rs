//! Scalp field interpolation and colorization.
//!
//! Pixels map to the head surface through the inverse of the montage's uv
//! projection. Values come from Shepard weights `1 / (d² + ε)` on the
//! great-circle distance `d`, and the pixel holding an electrode carries that
//! electrode's value exactly.

use std::collections::HashSet;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::montage::{dot, geodesic_distance, uv_to_pixel, uv_to_sphere, Montage};

pub const DEFAULT_GRID: usize = 128;
pub const MIN_GRID: usize = 32;
const SHEPARD_EPS: f64 = 1e-12;
const SNAP_DISTANCE: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct ScalpField {
    pub width: usize,
    pub height: usize,
    /// Row-major; zero outside the mask.
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl ScalpField {
    pub fn value(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Row-major little-endian `f32` values.
    pub fn values_le_bytes(&self) -> Vec<u8> {
        self.values
            .iter()
            .flat_map(|&v| (v as f32).to_le_bytes())
            .collect()
    }

    pub fn from_le_bytes(width: usize, height: usize, bytes: &[u8], mask: Vec<bool>) -> Result<Self> {
        if bytes.len() != 4 * width * height || mask.len() != width * height {
            return Err(Error::Contract(format!(
                "grid of {width}x{height} needs {} bytes, got {}",
                4 * width * height,
                bytes.len()
            )));
        }
        let values = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        Ok(ScalpField {
            width,
            height,
            values,
            mask,
        })
    }

    /// Row-major bitset of the mask, least significant bit first.
    pub fn mask_bitset(&self) -> Vec<u8> {
        mask_to_bitset(&self.mask)
    }
}

pub fn mask_to_bitset(mask: &[bool]) -> Vec<u8> {
    let mut bits = vec![0u8; mask.len().div_ceil(8)];
    for (i, _) in mask.iter().enumerate().filter(|(_, m)| **m) {
        bits[i / 8] |= 1 << (i % 8);
    }
    bits
}

pub fn bitset_to_mask(bits: &[u8], len: usize) -> Vec<bool> {
    (0..len).map(|i| bits[i / 8] >> (i % 8) & 1 == 1).collect()
}

/// Unit direction of a pixel centre, or `None` outside the head outline.
pub fn pixel_direction(col: usize, row: usize, width: usize, height: usize) -> Option<[f64; 3]> {
    let u = (col as f64 + 0.5) / width as f64;
    let v = (row as f64 + 0.5) / height as f64;
    uv_to_sphere([u, v])
}

fn check_grid(width: usize, height: usize) -> Result<()> {
    if width < MIN_GRID || height < MIN_GRID {
        return Err(Error::Config(format!(
            "grid must be at least {MIN_GRID}x{MIN_GRID}, got {width}x{height}"
        )));
    }
    Ok(())
}

/// Precomputed interpolation weights and nearest-electrode partition for one grid.
#[derive(Clone, Debug)]
pub struct Interpolator {
    width: usize,
    height: usize,
    channels: usize,
    mask: Vec<bool>,
    // (pixel, normalized weights) for masked pixels
    pixels: Vec<usize>,
    weights: Vec<f64>,
    snaps: Vec<(usize, usize)>,
    nearest: Vec<Option<usize>>,
}

impl Interpolator {
    pub fn new(montage: &Montage, width: usize, height: usize) -> Result<Self> {
        check_grid(width, height)?;
        let n = montage.len();
        let positions: Vec<[f64; 3]> = montage.electrodes().iter().map(|e| e.pos).collect();
        let mut mask = vec![false; width * height];
        let mut pixels = Vec::new();
        let mut weights = Vec::new();
        let mut nearest = vec![None; width * height];
        for row in 0..height {
            for col in 0..width {
                let p = row * width + col;
                let Some(dir) = pixel_direction(col, row, width, height) else {
                    continue;
                };
                mask[p] = true;
                pixels.push(p);
                nearest[p] = Some(nearest_index(dir, &positions));
                let dists: Vec<f64> = positions.iter().map(|&e| geodesic_distance(dir, e)).collect();
                if let Some(hit) = dists.iter().position(|&d| d < SNAP_DISTANCE) {
                    weights.extend((0..n).map(|i| if i == hit { 1.0 } else { 0.0 }));
                    continue;
                }
                let raw: Vec<f64> = dists.iter().map(|d| 1.0 / (d * d + SHEPARD_EPS)).collect();
                let total: f64 = raw.iter().sum();
                weights.extend(raw.iter().map(|w| w / total));
            }
        }
        let snaps = montage
            .electrodes()
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let (c, r) = uv_to_pixel(e.uv, width, height);
                (r * width + c, i)
            })
            .filter(|(p, _)| mask[*p])
            .collect();
        Ok(Interpolator {
            width,
            height,
            channels: n,
            mask,
            pixels,
            weights,
            snaps,
            nearest,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// Index of the geodesically nearest electrode to a masked pixel.
    pub fn nearest_electrode(&self, pixel: usize) -> Option<usize> {
        self.nearest[pixel]
    }

    pub fn interpolate(&self, values: &[f64]) -> Result<ScalpField> {
        if values.len() != self.channels {
            return Err(Error::Contract(format!(
                "expected {} electrode values, got {}",
                self.channels,
                values.len()
            )));
        }
        let mut out = vec![0.0; self.width * self.height];
        for (&p, w) in self.pixels.iter().zip(self.weights.chunks_exact(self.channels)) {
            out[p] = w.iter().zip(values).map(|(a, b)| a * b).sum();
        }
        for &(p, i) in &self.snaps {
            out[p] = values[i];
        }
        Ok(ScalpField {
            width: self.width,
            height: self.height,
            values: out,
            mask: self.mask.clone(),
        })
    }

    pub fn colorize(
        &self,
        field: &ScalpField,
        highlight: &[usize],
        policy: &ColorPolicy,
    ) -> Result<RgbaImage> {
        if field.width != self.width || field.height != self.height {
            return Err(Error::Contract("field does not match the interpolator grid".into()));
        }
        Ok(paint(field, &self.nearest, highlight, policy))
    }
}

fn nearest_index(dir: [f64; 3], positions: &[[f64; 3]]) -> usize {
    let mut best = 0;
    let mut best_dot = f64::NEG_INFINITY;
    for (i, &e) in positions.iter().enumerate() {
        let d = dot(dir, e);
        if d > best_dot {
            best_dot = d;
            best = i;
        }
    }
    best
}

/// One-shot interpolation; builds the weights on every call.
pub fn interpolate(values: &[f64], montage: &Montage, width: usize, height: usize) -> Result<ScalpField> {
    Interpolator::new(montage, width, height)?.interpolate(values)
}

/// Colors pixels nearer to a highlighted electrode with the highlight map,
/// all other masked pixels with the gray ramp.
pub fn colorize(
    field: &ScalpField,
    highlight: &[&str],
    montage: &Montage,
    policy: &ColorPolicy,
) -> Result<RgbaImage> {
    let idx = highlight
        .iter()
        .map(|l| {
            montage
                .index_of(l)
                .ok_or_else(|| Error::Contract(format!("unknown electrode {l}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let positions: Vec<[f64; 3]> = montage.electrodes().iter().map(|e| e.pos).collect();
    let nearest: Vec<Option<usize>> = (0..field.height)
        .flat_map(|row| (0..field.width).map(move |col| (col, row)))
        .map(|(col, row)| {
            pixel_direction(col, row, field.width, field.height)
                .filter(|_| field.mask[row * field.width + col])
                .map(|d| nearest_index(d, &positions))
        })
        .collect();
    Ok(paint(field, &nearest, &idx, policy))
}

fn paint(
    field: &ScalpField,
    nearest: &[Option<usize>],
    highlight: &[usize],
    policy: &ColorPolicy,
) -> RgbaImage {
    let lit: HashSet<usize> = highlight.iter().copied().collect();
    let mut pixels = vec![0u8; 4 * field.width * field.height];
    for (p, near) in nearest.iter().enumerate() {
        let Some(e) = near else { continue };
        if !field.mask[p] {
            continue;
        }
        let x = policy.gain * field.values[p];
        let rgb = if lit.contains(e) {
            policy.highlight_map.lookup(x)
        } else {
            policy.gray_map.lookup(x)
        };
        pixels[4 * p..4 * p + 4].copy_from_slice(&[rgb[0], rgb[1], rgb[2], 255]);
    }
    RgbaImage {
        width: field.width,
        height: field.height,
        pixels,
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbaImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl RgbaImage {
    pub fn pixel(&self, col: usize, row: usize) -> [u8; 4] {
        let i = 4 * (row * self.width + col);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2], self.pixels[i + 3]]
    }

    pub fn is_gray(&self, col: usize, row: usize) -> bool {
        let [r, g, b, a] = self.pixel(col, row);
        a == 255 && r == g && g == b
    }
}

/// Piecewise-linear RGB ramp; lookups clamp to the end stops.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Colormap {
    stops: Vec<(f64, [u8; 3])>,
}

impl Colormap {
    pub fn new(stops: Vec<(f64, [u8; 3])>) -> Result<Self> {
        if stops.len() < 2 || stops.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::Config("colormap needs >= 2 increasing stops".into()));
        }
        Ok(Colormap { stops })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.stops[0].0, self.stops[self.stops.len() - 1].0)
    }

    pub fn lookup(&self, x: f64) -> [u8; 3] {
        let (lo, hi) = self.domain();
        let x = if x.is_nan() { lo } else { x.clamp(lo, hi) };
        let k = self
            .stops
            .windows(2)
            .position(|w| x <= w[1].0)
            .unwrap_or(self.stops.len() - 2);
        let ((x0, c0), (x1, c1)) = (self.stops[k], self.stops[k + 1]);
        let t = (x - x0) / (x1 - x0);
        std::array::from_fn(|i| (c0[i] as f64 + t * (c1[i] as f64 - c0[i] as f64)).round() as u8)
    }
}

#[derive(Deserialize)]
struct ColormapTable {
    diverging: Vec<(f64, [u8; 3])>,
    sequential: Vec<(f64, [u8; 3])>,
    gray: Vec<(f64, [u8; 3])>,
}

fn table() -> &'static ColormapTable {
    static TABLE: OnceLock<ColormapTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        serde_json::from_str(include_str!("../data/colormaps.json")).expect("embedded colormaps")
    })
}

/// Cold–neutral–warm map over [−1, 1].
pub fn diverging() -> Colormap {
    Colormap::new(table().diverging.clone()).unwrap()
}

/// Sequential map over [0, 1], used for synchronization.
pub fn sequential() -> Colormap {
    Colormap::new(table().sequential.clone()).unwrap()
}

/// Luminance ramp over [−1, 1] for non-highlighted regions.
pub fn gray() -> Colormap {
    Colormap::new(table().gray.clone()).unwrap()
}

pub const MAX_GAIN: f64 = 8.0;

#[derive(Clone, Debug, PartialEq)]
pub struct ColorPolicy {
    pub gain: f64,
    pub highlight_map: Colormap,
    pub gray_map: Colormap,
}

impl ColorPolicy {
    pub fn new(gain: f64, highlight_map: Colormap, gray_map: Colormap) -> Result<Self> {
        validate_gain(gain)?;
        Ok(ColorPolicy {
            gain,
            highlight_map,
            gray_map,
        })
    }

    /// Diverging highlight map for signed, baseline-relative power.
    pub fn signed(gain: f64) -> Result<Self> {
        Self::new(gain, diverging(), gray())
    }

    /// Sequential highlight map for synchronization in [0, 1].
    pub fn synchrony(gain: f64) -> Result<Self> {
        Self::new(gain, sequential(), gray())
    }
}

pub fn validate_gain(gain: f64) -> Result<()> {
    if !(gain > 0.0 && gain <= MAX_GAIN) {
        return Err(Error::Config(format!("gain must lie in (0, {MAX_GAIN}], got {gain}")));
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EyeState {
    Open,
    Closed,
}

pub fn eye_state(blink: bool) -> EyeState {
    if blink {
        EyeState::Closed
    } else {
        EyeState::Open
    }
}
