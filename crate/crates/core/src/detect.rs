//! Bucket and pixel-array detection.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::mask::ObjectMask;

/// Bucket detector readings, one per frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BucketSeries {
    s: Vec<f64>,
}

impl BucketSeries {
    pub fn new(s: Vec<f64>) -> Result<Self> {
        if let Some(bad) = s.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::RangeError {
                key: "bucket signal",
                value: bad.to_string(),
                reason: "must be finite and nonnegative",
            });
        }
        Ok(BucketSeries { s })
    }

    pub fn values(&self) -> &[f64] {
        &self.s
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

/// Total transmitted power `sum I |T|^2 pitch^2`.
pub fn bucket_signal(frame: &Array2<f64>, mask: &ObjectMask, pitch: f64) -> Result<f64> {
    if frame.dim() != mask.shape() {
        return Err(Error::DimensionMismatch {
            expected: mask.shape(),
            found: frame.dim(),
        });
    }
    let sum: f64 = frame
        .iter()
        .zip(mask.amplitude().iter())
        .map(|(i, t)| i * t * t)
        .sum();
    Ok(sum * pitch * pitch)
}

/// Camera response. The default is an ideal noiseless unit-gain detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorModel {
    pub shot_noise: bool,
    pub read_noise_sigma: f64,
    /// 0 disables quantization; otherwise 8 or 16.
    pub quant_bits: u8,
    pub exposure_gain: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel {
            shot_noise: false,
            read_noise_sigma: 0.0,
            quant_bits: 0,
            exposure_gain: 1.0,
        }
    }
}

impl DetectorModel {
    pub fn validate(self) -> Result<Self> {
        if !(self.exposure_gain > 0.0 && self.exposure_gain.is_finite()) {
            return Err(Error::NonPositiveParameter {
                name: "exposure_gain",
                value: self.exposure_gain,
            });
        }
        if !(self.read_noise_sigma >= 0.0 && self.read_noise_sigma.is_finite()) {
            return Err(Error::RangeError {
                key: "read_noise_sigma",
                value: self.read_noise_sigma.to_string(),
                reason: "must be finite and nonnegative",
            });
        }
        if !matches!(self.quant_bits, 0 | 8 | 16) {
            return Err(Error::RangeError {
                key: "quant_bits",
                value: self.quant_bits.to_string(),
                reason: "must be 0, 8 or 16",
            });
        }
        Ok(self)
    }

    pub fn is_ideal(&self) -> bool {
        !self.shot_noise
            && self.read_noise_sigma == 0.0
            && self.quant_bits == 0
            && self.exposure_gain == 1.0
    }

    fn full_scale(&self) -> Option<f64> {
        match self.quant_bits {
            0 => None,
            bits => Some(((1u32 << bits) - 1) as f64),
        }
    }

    /// Detects one value; returns the reading and whether it was clipped.
    pub fn apply_scalar<R: Rng + ?Sized>(&self, value: f64, rng: &mut R) -> (f64, bool) {
        if self.is_ideal() {
            return (value, false);
        }
        let mut v = value * self.exposure_gain;
        if self.shot_noise && v > 0.0 {
            v = Poisson::new(v)
                .map(|p| p.sample(rng))
                .unwrap_or(v);
        }
        if self.read_noise_sigma > 0.0 {
            let noise = Normal::new(0.0, self.read_noise_sigma).expect("validated sigma");
            v += noise.sample(rng);
        }
        match self.full_scale() {
            None => (v, false),
            Some(full) => {
                let clipped = !(0.0..=full).contains(&v);
                (v.round().clamp(0.0, full), clipped)
            }
        }
    }

    /// Detects a frame in place; returns the number of clipped pixels.
    pub fn apply_frame<R: Rng + ?Sized>(&self, frame: &mut Array2<f64>, rng: &mut R) -> usize {
        if self.is_ideal() {
            return 0;
        }
        let mut saturated = 0;
        for v in frame.iter_mut() {
            let (out, clipped) = self.apply_scalar(*v, rng);
            *v = out;
            saturated += clipped as usize;
        }
        saturated
    }
}
