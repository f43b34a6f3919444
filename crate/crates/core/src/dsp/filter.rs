//! Causal Butterworth band-pass filters as cascaded second-order sections.
//!
//! The design follows the usual analog route: Butterworth low-pass prototype,
//! low-pass to band-pass transform around the prewarped edges, then the
//! bilinear transform. An order-`n` prototype gives `n` biquads (2n poles).

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::block::SampleBlock;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandpassSpec {
    pub low_hz: f64,
    pub high_hz: f64,
    /// Butterworth prototype order; the band-pass has this many sections.
    pub order: usize,
    pub fs: f64,
}

impl BandpassSpec {
    pub fn new(low_hz: f64, high_hz: f64, order: usize, fs: f64) -> Result<Self> {
        let spec = BandpassSpec {
            low_hz,
            high_hz,
            order,
            fs,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let nyquist = self.fs / 2.0;
        if !(self.low_hz > 0.0 && self.low_hz < self.high_hz && self.high_hz < nyquist) {
            return Err(Error::Config(format!(
                "band edges must satisfy 0 < {} < {} < fs/2 = {nyquist}",
                self.low_hz, self.high_hz
            )));
        }
        if self.order < 2 || self.order % 2 != 0 {
            return Err(Error::Config(format!(
                "filter order must be even and >= 2, got {}",
                self.order
            )));
        }
        Ok(())
    }

    /// Geometric centre of the digital pass band (Hz).
    pub fn center_hz(&self) -> f64 {
        let (wl, wh) = self.prewarped();
        let w0 = (wl * wh).sqrt();
        self.fs / PI * (w0 / (2.0 * self.fs)).atan()
    }

    fn prewarped(&self) -> (f64, f64) {
        let warp = |f: f64| 2.0 * self.fs * (PI * f / self.fs).tan();
        (warp(self.low_hz), warp(self.high_hz))
    }
}

/// `g · (1 + b1 z⁻¹ + b2 z⁻²) / (1 + a1 z⁻¹ + a2 z⁻²)`
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    pub fn response(&self, z_inv: Complex64) -> Complex64 {
        let z2 = z_inv * z_inv;
        (self.b[0] + self.b[1] * z_inv + self.b[2] * z2) / (1.0 + self.a[0] * z_inv + self.a[1] * z2)
    }
}

#[derive(Clone, Debug)]
pub struct BandpassDesign {
    pub spec: BandpassSpec,
    pub sections: Vec<Biquad>,
}

impl BandpassDesign {
    /// Complex frequency response at `freq_hz`.
    pub fn response(&self, freq_hz: f64) -> Complex64 {
        let w = 2.0 * PI * freq_hz / self.spec.fs;
        let z_inv = Complex64::from_polar(1.0, -w);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
    }

    pub fn gain(&self, freq_hz: f64) -> f64 {
        self.response(freq_hz).norm()
    }
}

pub fn design_bandpass(spec: BandpassSpec) -> Result<BandpassDesign> {
    spec.validate()?;
    let n = spec.order;
    let fs2 = 2.0 * spec.fs;
    let (wl, wh) = spec.prewarped();
    let bw = wh - wl;
    let w0_sq = wl * wh;

    let mut poles = Vec::with_capacity(2 * n);
    for k in 0..n {
        let theta = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
        let q = Complex64::from_polar(1.0, theta) * (bw / 2.0);
        let d = (q * q - w0_sq).sqrt();
        poles.push(q + d);
        poles.push(q - d);
    }

    // k_d = bw^n · fs2^n / Π(fs2 − p); the product is real for conjugate pairs.
    let denom = poles
        .iter()
        .fold(Complex64::new(1.0, 0.0), |acc, p| acc * (fs2 - p));
    let total_gain = (bw * fs2).powi(n as i32) / denom.re;
    let per_section = total_gain.abs().powf(1.0 / n as f64);

    let mut upper: Vec<Complex64> = poles
        .iter()
        .map(|p| (fs2 + p) / (fs2 - p))
        .filter(|z| z.im > 0.0)
        .collect();
    if upper.len() != n {
        return Err(Error::Config(format!(
            "band {}–{} Hz produced real poles; widen the band",
            spec.low_hz, spec.high_hz
        )));
    }
    upper.sort_by(|a, b| a.norm().total_cmp(&b.norm()));

    let mut sections: Vec<Biquad> = upper
        .into_iter()
        .map(|z| Biquad {
            b: [per_section, 0.0, -per_section],
            a: [-2.0 * z.re, z.norm_sqr()],
        })
        .collect();
    if total_gain < 0.0 {
        sections[0].b = sections[0].b.map(|c| -c);
    }
    Ok(BandpassDesign { spec, sections })
}

/// A band-pass with independent recursion state per channel.
#[derive(Clone, Debug)]
pub struct StreamingFilter {
    design: BandpassDesign,
    // [channel][section] transposed direct form II memory
    state: Vec<Vec<[f64; 2]>>,
}

impl StreamingFilter {
    pub fn new(design: BandpassDesign, channel_count: usize) -> Self {
        let sections = design.sections.len();
        StreamingFilter {
            design,
            state: vec![vec![[0.0; 2]; sections]; channel_count],
        }
    }

    pub fn from_spec(spec: BandpassSpec, channel_count: usize) -> Result<Self> {
        Ok(Self::new(design_bandpass(spec)?, channel_count))
    }

    pub fn design(&self) -> &BandpassDesign {
        &self.design
    }

    pub fn channel_count(&self) -> usize {
        self.state.len()
    }

    pub fn reset(&mut self) {
        for ch in &mut self.state {
            ch.iter_mut().for_each(|s| *s = [0.0; 2]);
        }
    }

    #[inline]
    pub fn process_sample(&mut self, channel: usize, x: f64) -> f64 {
        let mut v = x;
        for (sec, st) in self.design.sections.iter().zip(self.state[channel].iter_mut()) {
            let y = sec.b[0] * v + st[0];
            st[0] = sec.b[1] * v - sec.a[0] * y + st[1];
            st[1] = sec.b[2] * v - sec.a[1] * y;
            v = y;
        }
        v
    }

    pub fn process_block(&mut self, block: &SampleBlock) -> Result<SampleBlock> {
        if block.channel_count() != self.channel_count() {
            return Err(Error::Contract(format!(
                "block has {} channels, filter expects {}",
                block.channel_count(),
                self.channel_count()
            )));
        }
        let channels = block
            .channels
            .iter()
            .enumerate()
            .map(|(ch, xs)| xs.iter().map(|&x| self.process_sample(ch, x)).collect())
            .collect();
        Ok(SampleBlock {
            t0: block.t0,
            fs: block.fs,
            channels,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Squared magnitude of the analog Butterworth band-pass at the prewarped
    /// frequency; the bilinear transform maps it exactly onto the digital one.
    fn analog_oracle(spec: &BandpassSpec, f: f64) -> f64 {
        let warp = |f: f64| 2.0 * spec.fs * (PI * f / spec.fs).tan();
        let (wl, wh) = (warp(spec.low_hz), warp(spec.high_hz));
        let w = warp(f);
        let x = (w * w - wl * wh) / (w * (wh - wl));
        1.0 / (1.0 + x.powi(2 * spec.order as i32))
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(BandpassSpec::new(0.0, 10.0, 4, 256.0).is_err());
        assert!(BandpassSpec::new(12.0, 8.0, 4, 256.0).is_err());
        assert!(BandpassSpec::new(8.0, 130.0, 4, 256.0).is_err());
        assert!(BandpassSpec::new(8.0, 12.0, 3, 256.0).is_err());
        assert!(BandpassSpec::new(8.0, 12.0, 0, 256.0).is_err());
    }

    #[test]
    fn digital_response_matches_analog_prototype() {
        for (lo, hi) in [(3.0, 26.0), (16.0, 24.0), (8.0, 12.0), (7.0, 28.0), (1.0, 10.0)] {
            let spec = BandpassSpec::new(lo, hi, 4, 256.0).unwrap();
            let d = design_bandpass(spec).unwrap();
            assert_eq!(d.sections.len(), 4);
            for f in [0.5, 2.0, lo, (lo + hi) / 2.0, hi, 40.0, 50.0, 100.0] {
                let got = d.gain(f).powi(2);
                let want = analog_oracle(&spec, f);
                assert!((got - want).abs() < 1e-9, "{lo}-{hi} at {f}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn gain_examples() {
        let wide = design_bandpass(BandpassSpec::new(3.0, 26.0, 4, 256.0).unwrap()).unwrap();
        assert!(wide.gain(0.0) < 1e-3);
        assert!(20.0 * wide.gain(50.0).log10() <= -20.0);
        let alpha = design_bandpass(BandpassSpec::new(8.0, 12.0, 4, 256.0).unwrap()).unwrap();
        let g = alpha.gain(10.0);
        assert!((0.7..=1.0 + 1e-12).contains(&g), "{g}");
        assert!((alpha.gain(alpha.spec.center_hz()) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn attenuation_is_monotone_outside_the_band() {
        let d = design_bandpass(BandpassSpec::new(3.0, 26.0, 4, 256.0).unwrap()).unwrap();
        let mut last = d.gain(26.0);
        let mut f = 26.0;
        while f < 127.0 {
            f += 0.5;
            let g = d.gain(f);
            assert!(g <= last + 1e-12);
            last = g;
        }
        let mut last = d.gain(3.0);
        let mut f = 3.0;
        while f > 0.1 {
            f -= 0.05;
            let g = d.gain(f);
            assert!(g <= last + 1e-12);
            last = g;
        }
    }

    #[test]
    fn zero_in_zero_out_and_channel_mismatch() {
        let mut filt =
            StreamingFilter::from_spec(BandpassSpec::new(8.0, 12.0, 4, 256.0).unwrap(), 2)
                .unwrap();
        let block = SampleBlock::zeros(1.5, 256.0, 2, 100);
        let out = filt.process_block(&block).unwrap();
        assert_eq!(out, block);
        let wrong = SampleBlock::zeros(0.0, 256.0, 3, 10);
        assert!(matches!(filt.process_block(&wrong), Err(Error::Contract(_))));
    }

    #[test]
    fn steady_state_sinusoid_matches_transfer_function() {
        let spec = BandpassSpec::new(8.0, 12.0, 4, 256.0).unwrap();
        let mut filt = StreamingFilter::from_spec(spec, 1).unwrap();
        let fs = 256.0;
        let n = (6.0 * fs) as usize;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * PI * 10.0 * i as f64 / fs).sin())
            .collect();
        let y: Vec<f64> = x.iter().map(|&v| filt.process_sample(0, v)).collect();
        let tail = &y[(2.0 * fs) as usize..];
        let measured = (2.0 * tail.iter().map(|v| v * v).sum::<f64>() / tail.len() as f64).sqrt();
        let expected = filt.design().gain(10.0);
        assert!((measured / expected - 1.0).abs() < 0.02, "{measured} vs {expected}");
    }

    #[test]
    fn impulse_response_decays() {
        for (lo, hi) in [(3.0, 26.0), (16.0, 24.0), (8.0, 12.0), (7.0, 28.0)] {
            let mut filt =
                StreamingFilter::from_spec(BandpassSpec::new(lo, hi, 4, 256.0).unwrap(), 1)
                    .unwrap();
            let n = 30 * 256;
            let mut tail_max: f64 = 0.0;
            for i in 0..n {
                let y = filt.process_sample(0, if i == 0 { 1.0 } else { 0.0 });
                if i >= n - 256 {
                    tail_max = tail_max.max(y.abs());
                }
            }
            assert!(tail_max < 1e-9, "{lo}-{hi}: {tail_max}");
        }
    }
}
