use crate::error::{Error, Result};

/// Causal sliding mean of squared samples, one ring per channel.
///
/// Until the window fills, the mean runs over the samples seen so far.
#[derive(Clone, Debug)]
pub struct PowerEnvelope {
    window: usize,
    rings: Vec<Vec<f64>>,
    sums: Vec<f64>,
    pos: usize,
    seen: usize,
}

impl PowerEnvelope {
    pub fn new(window: usize, channel_count: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::Config("power window must hold at least one sample".into()));
        }
        Ok(PowerEnvelope {
            window,
            rings: vec![vec![0.0; window]; channel_count],
            sums: vec![0.0; channel_count],
            pos: 0,
            seen: 0,
        })
    }

    pub fn for_duration(window_sec: f64, fs: f64, channel_count: usize) -> Result<Self> {
        let window = (window_sec * fs).round();
        if !(window >= 1.0) {
            return Err(Error::Config(format!(
                "window of {window_sec} s at {fs} Hz holds no samples"
            )));
        }
        Self::new(window as usize, channel_count)
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn channel_count(&self) -> usize {
        self.rings.len()
    }

    /// Pushes one multichannel sample.
    pub fn push(&mut self, sample: &[f64]) {
        debug_assert_eq!(sample.len(), self.rings.len());
        for ((ring, sum), &x) in self.rings.iter_mut().zip(&mut self.sums).zip(sample) {
            let sq = x * x;
            *sum += sq - ring[self.pos];
            ring[self.pos] = sq;
        }
        self.pos += 1;
        self.seen += 1;
        if self.pos == self.window {
            self.pos = 0;
            // re-sum once per wrap so rounding drift cannot accumulate
            for (ring, sum) in self.rings.iter().zip(&mut self.sums) {
                *sum = ring.iter().sum();
            }
        }
    }

    pub fn power(&self, channel: usize) -> f64 {
        let n = self.seen.min(self.window).max(1);
        (self.sums[channel] / n as f64).max(0.0)
    }

    pub fn powers(&self) -> Vec<f64> {
        (0..self.rings.len()).map(|c| self.power(c)).collect()
    }
}

/// Power series for whole channels: element `i` is the mean square over the
/// window ending at sample `i`.
pub fn power_envelope(channels: &[Vec<f64>], window_sec: f64, fs: f64) -> Result<Vec<Vec<f64>>> {
    let len = channels.first().map_or(0, Vec::len);
    let mut env = PowerEnvelope::for_duration(window_sec, fs, channels.len())?;
    let mut out = vec![Vec::with_capacity(len); channels.len()];
    let mut sample = vec![0.0; channels.len()];
    for i in 0..len {
        for (s, ch) in sample.iter_mut().zip(channels) {
            *s = ch[i];
        }
        env.push(&sample);
        for (c, o) in out.iter_mut().enumerate() {
            o.push(env.power(c));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine(amp: f64, f: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| amp * (2.0 * PI * f * i as f64 / fs).sin()).collect()
    }

    #[test]
    fn zero_is_zero() {
        let p = power_envelope(&[vec![0.0; 300]], 1.0, 256.0).unwrap();
        assert!(p[0].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_sine_over_whole_periods_is_half() {
        // 10 Hz at 256 Hz, 1 s window = 10 periods
        let p = power_envelope(&[sine(1.0, 10.0, 256.0, 1024)], 1.0, 256.0).unwrap();
        for v in &p[0][256..] {
            assert!((v - 0.5).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn quadratic_scaling() {
        let x1 = sine(1.0, 7.3, 256.0, 2000);
        let x2 = sine(2.0, 7.3, 256.0, 2000);
        let p = power_envelope(&[x1, x2], 1.0, 256.0).unwrap();
        for i in 300..2000 {
            assert!((p[1][i] / p[0][i] - 4.0).abs() < 0.04);
        }
    }

    #[test]
    fn rejects_empty_window() {
        assert!(power_envelope(&[vec![1.0]], 0.001, 256.0).is_err());
    }

    #[test]
    fn running_sum_stays_exact_over_long_runs() {
        let x: Vec<f64> = (0..100_000).map(|i| ((i * 7919) % 1000) as f64 * 0.37).collect();
        let p = power_envelope(&[x.clone()], 1.0, 256.0).unwrap();
        let i = x.len() - 1;
        let direct: f64 = x[i + 1 - 256..=i].iter().map(|v| v * v).sum::<f64>() / 256.0;
        assert!((p[0][i] - direct).abs() <= 1e-9 * direct);
    }
}
