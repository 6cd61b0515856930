//! Pseudothermal speckle synthesis.
//!
//! Each frame is the squared modulus of a circular complex Gaussian field
//! whose spectrum is shaped by a Gaussian transfer function. The field
//! correlation is `exp(-2 r^2 / lc^2)` with `lc = λ z1 / D`, so the intensity
//! autocovariance `exp(-4 r^2 / lc^2)` has a full 1/e width of `lc`.
//!
//! White noise is drawn directly in the frequency domain (the DFT of i.i.d.
//! circular Gaussian noise is again i.i.d. circular Gaussian), which saves
//! one transform per frame. The field is synthesised on a grid padded by
//! four coherence lengths per side and cropped, so the periodic wrap of the
//! discrete filter never reaches the returned window.

use std::borrow::Cow;
use std::f64::consts::PI;

use ndarray::{s, Array2};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::config::{validate_config, OpticalConfig};
use crate::error::{Error, Result};
use crate::fft::{frequencies, next_smooth, Fft2};
use crate::rng::{derive_seed, stream_rng, Stream};

/// Padding on each side of a non-singleton axis, in coherence lengths.
const PAD_COHERENCE_LENGTHS: f64 = 4.0;

/// One instantaneous intensity distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeckleFrame {
    pub intensity: Array2<f64>,
    pub frame_index: u64,
    pub seed_used: u64,
}

/// Anything that can hand out reference frames by index.
pub trait FrameSource: Sync {
    fn frame_count(&self) -> usize;
    fn shape(&self) -> (usize, usize);
    fn intensity(&self, t: usize) -> Result<Cow<'_, Array2<f64>>>;
}

/// Ordered in-memory frame collection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameEnsemble {
    frames: Vec<SpeckleFrame>,
}

impl FrameEnsemble {
    pub fn new(frames: Vec<SpeckleFrame>) -> Result<Self> {
        if let Some(first) = frames.first() {
            let shape = first.intensity.dim();
            for f in &frames[1..] {
                if f.intensity.dim() != shape {
                    return Err(Error::DimensionMismatch {
                        expected: shape,
                        found: f.intensity.dim(),
                    });
                }
            }
            if frames.windows(2).any(|w| w[1].frame_index <= w[0].frame_index) {
                return Err(Error::RangeError {
                    key: "frame_index",
                    value: "non-increasing".into(),
                    reason: "frame indices must be strictly increasing",
                });
            }
        }
        Ok(FrameEnsemble { frames })
    }

    /// Wraps bare intensity grids, numbering them from zero.
    pub fn from_intensities(grids: Vec<Array2<f64>>) -> Result<Self> {
        Self::new(
            grids
                .into_iter()
                .enumerate()
                .map(|(i, intensity)| SpeckleFrame {
                    intensity,
                    frame_index: i as u64,
                    seed_used: 0,
                })
                .collect(),
        )
    }

    pub fn frames(&self) -> &[SpeckleFrame] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Pixel values on a lattice of `stride` pixels along each populated
    /// axis, from every frame.
    pub fn pixel_samples(&self, stride: usize) -> Vec<f64> {
        let stride = stride.max(1);
        let mut out = Vec::new();
        for f in &self.frames {
            let (ny, nx) = f.intensity.dim();
            let row_step = if ny > 1 { stride } else { 1 };
            for r in (0..ny).step_by(row_step) {
                for c in (0..nx).step_by(stride) {
                    out.push(f.intensity[[r, c]]);
                }
            }
        }
        out
    }
}

impl FrameSource for FrameEnsemble {
    fn frame_count(&self) -> usize {
        self.frames.len()
    }

    fn shape(&self) -> (usize, usize) {
        self.frames.first().map_or((0, 0), |f| f.intensity.dim())
    }

    fn intensity(&self, t: usize) -> Result<Cow<'_, Array2<f64>>> {
        Ok(Cow::Borrowed(&self.frames[t].intensity))
    }
}

/// Deterministic speckle generator for one configuration.
#[derive(Clone)]
pub struct SpeckleGenerator {
    cfg: OpticalConfig,
    padded: (usize, usize),
    offset: (usize, usize),
    /// Spectral amplitude per frequency bin, normalized so that `<I> = I0`.
    spectrum: Array2<f64>,
    fft: Fft2,
}

impl SpeckleGenerator {
    pub fn new(cfg: &OpticalConfig) -> Result<Self> {
        let cfg = validate_config(cfg.clone())?;
        let pad = (PAD_COHERENCE_LENGTHS * cfg.coherence_pixels()).ceil() as usize;
        let padded_len = |n: usize| if n > 1 { next_smooth(n + 2 * pad) } else { 1 };
        let padded = (padded_len(cfg.ny), padded_len(cfg.nx));
        let offset = ((padded.0 - cfg.ny) / 2, (padded.1 - cfg.nx) / 2);

        let lc = cfg.coherence_length();
        let fy = frequencies(padded.0, cfg.pitch);
        let fx = frequencies(padded.1, cfg.pitch);
        let mut spectrum = Array2::from_shape_fn(padded, |(r, c)| {
            let f2 = fx[c] * fx[c] + fy[r] * fy[r];
            (-PI * PI * f2 * lc * lc / 4.0).exp()
        });
        let power: f64 = spectrum.iter().map(|h| h * h).sum();
        let norm = (cfg.mean_intensity / (2.0 * power)).sqrt();
        spectrum.mapv_inplace(|h| h * norm);

        Ok(SpeckleGenerator {
            fft: Fft2::new(padded.0, padded.1),
            cfg,
            padded,
            offset,
            spectrum,
        })
    }

    pub fn config(&self) -> &OpticalConfig {
        &self.cfg
    }

    pub fn seed_for(&self, frame_index: u64) -> u64 {
        derive_seed(self.cfg.seed, Stream::Speckle, frame_index)
    }

    /// Complex speckle field of frame `frame_index` on the configuration grid.
    pub fn field(&self, frame_index: u64) -> Array2<Complex64> {
        let mut rng = stream_rng(self.cfg.seed, Stream::Speckle, frame_index);
        let mut buf = self.spectrum.mapv(|amp| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(amp * re, amp * im)
        });
        self.fft.inverse(&mut buf);
        let (r0, c0) = self.offset;
        buf.slice(s![r0..r0 + self.cfg.ny, c0..c0 + self.cfg.nx])
            .to_owned()
    }

    /// Intensity frame, rounded to single precision like camera data.
    pub fn frame(&self, frame_index: u64) -> SpeckleFrame {
        let intensity = self.field(frame_index).mapv(|e| e.norm_sqr() as f32 as f64);
        SpeckleFrame {
            intensity,
            frame_index,
            seed_used: self.seed_for(frame_index),
        }
    }

    /// Object-plane and reference-plane frames. With z1 = z2 both arms see
    /// the same realization.
    pub fn arm_pair(&self, frame_index: u64) -> Result<(SpeckleFrame, SpeckleFrame)> {
        if self.cfg.z1 != self.cfg.z2 {
            return Err(Error::UnequalArms {
                z1: self.cfg.z1,
                z2: self.cfg.z2,
            });
        }
        let frame = self.frame(frame_index);
        Ok((frame.clone(), frame))
    }

    /// Frames `start..start + count`, generated in parallel, in index order.
    pub fn ensemble(&self, start: u64, count: usize) -> FrameEnsemble {
        let frames = (0..count as u64)
            .into_par_iter()
            .map(|i| self.frame(start + i))
            .collect();
        FrameEnsemble { frames }
    }

    /// Grid dimensions of the padded synthesis buffer.
    pub fn padded_shape(&self) -> (usize, usize) {
        self.padded
    }
}

/// The first `count` frames of a generator, produced on demand.
#[derive(Clone)]
pub struct GeneratedFrames<'a> {
    pub generator: &'a SpeckleGenerator,
    pub count: usize,
}

impl FrameSource for GeneratedFrames<'_> {
    fn frame_count(&self) -> usize {
        self.count
    }

    fn shape(&self) -> (usize, usize) {
        self.generator.cfg.shape()
    }

    fn intensity(&self, t: usize) -> Result<Cow<'_, Array2<f64>>> {
        Ok(Cow::Owned(self.generator.frame(t as u64).intensity))
    }
}

pub fn generate_frame(cfg: &OpticalConfig, frame_index: u64) -> Result<SpeckleFrame> {
    Ok(SpeckleGenerator::new(cfg)?.frame(frame_index))
}

pub fn generate_arm_pair(
    cfg: &OpticalConfig,
    frame_index: u64,
) -> Result<(SpeckleFrame, SpeckleFrame)> {
    SpeckleGenerator::new(cfg)?.arm_pair(frame_index)
}

/// Minimum sample count accepted by [`exponential_fit_test`].
pub const MIN_KS_SAMPLES: usize = 10_000;

/// Kolmogorov-Smirnov distance between the empirical distribution of
/// `samples` and a negative exponential with the same mean.
pub fn exponential_fit_test(samples: &[f64]) -> Result<f64> {
    if samples.len() < MIN_KS_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_KS_SAMPLES,
            got: samples.len(),
        });
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    if mean <= 0.0 {
        return Err(Error::ZeroMean("samples"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = 1.0 - (-x / mean).exp();
        d = d.max((i + 1) as f64 / n - cdf).max(cdf - i as f64 / n);
    }
    Ok(d)
}

/// Full 1/e width (metres) of the normalized intensity autocovariance,
/// averaged over rows (and columns, for 2D grids) of every frame.
pub fn autocovariance_width(ensemble: &FrameEnsemble, pitch: f64) -> Result<f64> {
    let (ny, nx) = ensemble.shape();
    let max_lag = (nx.max(ny) / 4).max(2);
    let mut acc = vec![0.0; max_lag + 1];
    let mut weight = vec![0.0; max_lag + 1];
    let mut add_line = |line: &[f64]| {
        let n = line.len();
        if n < 2 {
            return;
        }
        let mean = line.iter().sum::<f64>() / n as f64;
        for lag in 0..=max_lag.min(n - 1) {
            let mut sum = 0.0;
            for i in 0..n - lag {
                sum += (line[i] - mean) * (line[i + lag] - mean);
            }
            acc[lag] += sum;
            weight[lag] += (n - lag) as f64;
        }
    };
    for f in ensemble.frames() {
        for row in f.intensity.rows() {
            add_line(&row.to_vec());
        }
        if ny > 1 {
            for col in f.intensity.columns() {
                add_line(&col.to_vec());
            }
        }
    }
    if weight[0] == 0.0 {
        return Err(Error::InsufficientSamples { needed: 2, got: 0 });
    }
    let cov: Vec<f64> = acc.iter().zip(&weight).map(|(a, w)| a / w).collect();
    if cov[0] <= 0.0 {
        return Err(Error::ZeroVariance("intensity"));
    }
    let target = (-1.0f64).exp();
    for lag in 1..cov.len() {
        let (hi, lo) = (cov[lag - 1] / cov[0], cov[lag] / cov[0]);
        if lo <= target {
            let frac = (hi - target) / (hi - lo);
            return Ok(2.0 * (lag as f64 - 1.0 + frac) * pitch);
        }
    }
    Err(Error::GeometryTooLargeForGrid(
        "autocovariance never drops below 1/e within a quarter of the grid".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::Exp1;

    fn small_cfg(nx: usize, ny: usize, seed: u64) -> OpticalConfig {
        OpticalConfig::character_experiment()
            .with_grid(nx, ny)
            .with_seed(seed)
    }

    #[test]
    fn frames_are_reproducible() {
        let cfg = small_cfg(32, 32, 9);
        let a = generate_frame(&cfg, 17).unwrap();
        let b = generate_frame(&cfg, 17).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.intensity, generate_frame(&cfg, 18).unwrap().intensity);
    }

    #[test]
    fn intensities_are_nonnegative_and_finite() {
        let generator = SpeckleGenerator::new(&small_cfg(48, 40, 1)).unwrap();
        for t in 0..5 {
            let f = generator.frame(t);
            assert!(f.intensity.iter().all(|&v| v >= 0.0 && v.is_finite()));
        }
    }

    #[test]
    fn arms_coincide_for_equal_distances() {
        let cfg = small_cfg(32, 32, 2);
        let (obj, reference) = generate_arm_pair(&cfg, 3).unwrap();
        assert_eq!(obj.intensity, reference.intensity);
    }

    #[test]
    fn unequal_arms_rejected() {
        let mut cfg = small_cfg(32, 32, 2);
        cfg.z2 *= 1.1;
        assert!(matches!(
            generate_arm_pair(&cfg, 0),
            Err(Error::UnequalArms { .. })
        ));
    }

    #[test]
    fn padding_covers_four_coherence_lengths() {
        let generator = SpeckleGenerator::new(&small_cfg(64, 64, 0)).unwrap();
        let (pr, pc) = generator.padded_shape();
        assert!(pr >= 64 + 32 && pc >= 64 + 32);
        let line = SpeckleGenerator::new(&small_cfg(128, 1, 0)).unwrap();
        assert_eq!(line.padded_shape().0, 1);
    }

    #[test]
    fn ensemble_preserves_order() {
        let generator = SpeckleGenerator::new(&small_cfg(16, 16, 4)).unwrap();
        let ens = generator.ensemble(10, 6);
        let idx: Vec<u64> = ens.frames().iter().map(|f| f.frame_index).collect();
        assert_eq!(idx, (10..16).collect::<Vec<_>>());
        assert_eq!(ens.frames()[2], generator.frame(12));
    }

    #[test]
    fn ensemble_rejects_mixed_shapes_and_unordered_indices() {
        let a = Array2::zeros((2, 2));
        let b = Array2::zeros((3, 2));
        assert!(FrameEnsemble::from_intensities(vec![a.clone(), b]).is_err());
        let f = |i| SpeckleFrame {
            intensity: a.clone(),
            frame_index: i,
            seed_used: 0,
        };
        assert!(FrameEnsemble::new(vec![f(3), f(3)]).is_err());
    }

    #[test]
    fn ks_accepts_exact_exponential_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let samples: Vec<f64> = (0..100_000)
            .map(|_| 3.0 * Distribution::<f64>::sample(&Exp1, &mut rng))
            .collect();
        let d = exponential_fit_test(&samples).unwrap();
        assert!(d < 0.01, "{d}");
    }

    #[test]
    fn ks_rejects_constant_samples() {
        let d = exponential_fit_test(&vec![2.0; 20_000]).unwrap();
        let expect = 1.0 - (-1.0f64).exp();
        assert!((d - expect).abs() < 1e-12, "{d}");
        assert!(d > 0.5);
    }

    #[test]
    fn ks_needs_enough_samples() {
        assert!(matches!(
            exponential_fit_test(&[1.0; 100]),
            Err(Error::InsufficientSamples { .. })
        ));
    }
}
