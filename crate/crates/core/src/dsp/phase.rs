//! Analytic-signal phase over sliding windows and the phase-locking value.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// FFT-based analytic signal of a real sequence.
pub struct Hilbert {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    len: usize,
}

impl Hilbert {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Hilbert {
            forward: planner.plan_fft_forward(len),
            inverse: planner.plan_fft_inverse(len),
            len,
        }
    }

    pub fn analytic(&self, x: &[f64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.len, "analytic signal length");
        let n = self.len;
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.forward.process(&mut buf);
        // keep DC (and Nyquist for even n), double positive bins, drop negative bins
        let half = n / 2;
        for (k, c) in buf.iter_mut().enumerate() {
            let w = if k == 0 || (n % 2 == 0 && k == half) {
                1.0
            } else if k < n.div_ceil(2) {
                2.0
            } else {
                0.0
            };
            *c *= w / n as f64;
        }
        self.inverse.process(&mut buf);
        buf
    }

    pub fn phase(&self, x: &[f64]) -> Vec<f64> {
        self.analytic(x).iter().map(|c| c.arg()).collect()
    }
}

/// Instantaneous phase (radians, (−π, π]) of a whole window.
pub fn instantaneous_phase(window: &[f64]) -> Vec<f64> {
    Hilbert::new(window.len()).phase(window)
}

/// Sliding per-channel sample window; yields phases from its central half.
pub struct PhaseWindow {
    len: usize,
    rings: Vec<Vec<f64>>,
    pos: usize,
    seen: usize,
    hilbert: Hilbert,
}

impl PhaseWindow {
    pub fn new(len: usize, channel_count: usize) -> Result<Self> {
        if len < 64 || !len.is_power_of_two() {
            return Err(Error::Config(format!(
                "phase window must be a power of two >= 64 samples, got {len}"
            )));
        }
        Ok(PhaseWindow {
            len,
            rings: vec![vec![0.0; len]; channel_count],
            pos: 0,
            seen: 0,
            hilbert: Hilbert::new(len),
        })
    }

    /// Window covering `seconds`, rounded up to a power of two (at least 64).
    pub fn for_duration(seconds: f64, fs: f64, channel_count: usize) -> Result<Self> {
        let n = ((seconds * fs).ceil() as usize).max(64).next_power_of_two();
        Self::new(n, channel_count)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.seen == 0
    }

    pub fn is_full(&self) -> bool {
        self.seen >= self.len
    }

    pub fn push(&mut self, sample: &[f64]) {
        for (ring, &x) in self.rings.iter_mut().zip(sample) {
            ring[self.pos] = x;
        }
        self.pos = (self.pos + 1) % self.len;
        self.seen += 1;
    }

    /// Samples of one channel, oldest first.
    pub fn contents(&self, channel: usize) -> Vec<f64> {
        let ring = &self.rings[channel];
        ring[self.pos..].iter().chain(&ring[..self.pos]).copied().collect()
    }

    /// Phases of each channel over the central half of the window.
    pub fn central_phases(&self) -> Result<Vec<Vec<f64>>> {
        if !self.is_full() {
            return Err(Error::NotReady);
        }
        let (a, b) = (self.len / 4, self.len / 4 + self.len / 2);
        Ok((0..self.rings.len())
            .map(|c| self.hilbert.phase(&self.contents(c))[a..b].to_vec())
            .collect())
    }
}

/// |mean(exp(i(φa − φb)))|
pub fn plv(phase_a: &[f64], phase_b: &[f64]) -> Result<f64> {
    if phase_a.len() != phase_b.len() {
        return Err(Error::Contract(format!(
            "phase series lengths differ: {} vs {}",
            phase_a.len(),
            phase_b.len()
        )));
    }
    if phase_a.is_empty() {
        return Err(Error::Contract("phase-locking value of an empty series".into()));
    }
    let (mut re, mut im) = (0.0, 0.0);
    for (a, b) in phase_a.iter().zip(phase_b) {
        let (s, c) = (a - b).sin_cos();
        re += c;
        im += s;
    }
    let n = phase_a.len() as f64;
    Ok((re.hypot(im) / n).min(1.0))
}
