use serde::{Deserialize, Serialize};

use super::{FeatureFrame, Features, MIN_CALIBRATION_SEC};
use crate::error::{Error, Result};

/// Mean and (population) standard deviation per quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantityStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Per-pipeline statistics collected over an instructed calibration span.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    /// 3–26 Hz power per electrode (μV²).
    pub wide: QuantityStats,
    /// β Laplacian power at C3, Cz, C4 (μV²).
    pub motor: QuantityStats,
    /// α power over the vision region (μV²).
    pub alpha: QuantityStats,
    /// Synchronization; collected for reference, never used to normalize.
    pub plv: Option<QuantityStats>,
    /// Per-voxel source power when a kernel was attached.
    pub sources: Option<QuantityStats>,
    pub sample_count: usize,
}

#[derive(Clone, Debug, Default)]
struct Welford {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Welford {
    fn push(&mut self, xs: &[f64]) {
        if self.mean.is_empty() {
            self.mean = vec![0.0; xs.len()];
            self.m2 = vec![0.0; xs.len()];
        }
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &x) in self.mean.iter_mut().zip(&mut self.m2).zip(xs) {
            let delta = x - *m;
            *m += delta / n;
            *s += delta * (x - *m);
        }
    }

    fn finish(&self) -> Option<QuantityStats> {
        if self.n == 0 {
            return None;
        }
        let std = self
            .m2
            .iter()
            .zip(&self.mean)
            .map(|(&m2, &mu)| (m2 / self.n as f64).max(0.0).sqrt().max(std_floor(mu)))
            .collect();
        Some(QuantityStats {
            mean: self.mean.clone(),
            std,
        })
    }
}

/// Smallest deviation used for normalization, `1e-9 · max(μ, 1)`.
pub fn std_floor(mean: f64) -> f64 {
    1e-9 * mean.max(1.0)
}

/// Incremental baseline estimator fed with feature frames.
#[derive(Clone, Debug)]
pub struct Calibrator {
    frame_rate_hz: f64,
    wide: Welford,
    motor: Welford,
    alpha: Welford,
    plv: Welford,
    sources: Welford,
}

impl Calibrator {
    pub fn new(frame_rate_hz: f64) -> Self {
        Calibrator {
            frame_rate_hz,
            wide: Welford::default(),
            motor: Welford::default(),
            alpha: Welford::default(),
            plv: Welford::default(),
            sources: Welford::default(),
        }
    }

    pub fn push(&mut self, features: &Features) {
        self.wide.push(&features.wide);
        self.motor.push(&features.motor);
        self.alpha.push(&features.alpha);
        if let Some(p) = features.plv {
            self.plv.push(&[p]);
        }
        if let Some(s) = &features.sources {
            self.sources.push(s);
        }
    }

    pub fn frames(&self) -> usize {
        self.wide.n
    }

    /// Frames needed for a valid baseline (3 s of frames).
    pub fn required_frames(&self) -> usize {
        (self.frame_rate_hz * MIN_CALIBRATION_SEC).ceil() as usize
    }

    pub fn finish(&self) -> Result<Baseline> {
        let need = self.required_frames();
        if self.frames() < need {
            return Err(Error::CalibrationIncomplete {
                have: self.frames(),
                need,
            });
        }
        Ok(Baseline {
            wide: self.wide.finish().expect("frames present"),
            motor: self.motor.finish().expect("frames present"),
            alpha: self.alpha.finish().expect("frames present"),
            plv: self.plv.finish(),
            sources: self.sources.finish(),
            sample_count: self.frames(),
        })
    }
}

/// Baseline over the frames of a calibration span.
pub fn calibrate<'a>(frames: impl IntoIterator<Item = &'a FeatureFrame>, frame_rate_hz: f64) -> Result<Baseline> {
    let mut cal = Calibrator::new(frame_rate_hz);
    for f in frames {
        cal.push(&f.features);
    }
    cal.finish()
}
