//! Figures of merit for reconstructed images.
//!
//! Visibility is the in/out contrast `(γ_in - γ_out) / (γ_in + γ_out)`, where
//! `γ_in` averages the object support (`|T|^2 > 0.5`) and `γ_out` averages
//! everything farther than one coherence length from it. For a point-like
//! object and second order this is bounded by 1/3.

use std::borrow::Cow;

use ndarray::Array2;

use crate::config::{coherence_area, CorrelationOrder, OpticalConfig};
use crate::correlate::{gamma_sweep, normalize_image, run_sweep, GhostImage, SweepPlan};
use crate::detect::{bucket_signal, BucketSeries};
use crate::error::{Error, Result};
use crate::mask::{pinhole, ObjectMask};
use crate::speckle::{FrameSource, SpeckleGenerator};

#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityReport {
    pub v: f64,
    pub gamma_in: f64,
    pub gamma_out: f64,
    pub order: CorrelationOrder,
    pub frames_used: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResolutionReport {
    /// Full width at half maximum, metres.
    pub fwhm: f64,
    pub order: CorrelationOrder,
}

/// Pixels farther than `radius` (pixel units) from every support pixel.
pub fn outside_region(mask: &ObjectMask, radius: f64) -> Array2<bool> {
    let support = mask.support();
    let (ny, nx) = support.dim();
    let reach = radius.floor() as isize;
    let row_reach = if ny > 1 { reach } else { 0 };
    let offsets: Vec<(isize, isize)> = (-row_reach..=row_reach)
        .flat_map(|dy| (-reach..=reach).map(move |dx| (dy, dx)))
        .filter(|&(dy, dx)| ((dy * dy + dx * dx) as f64) <= radius * radius)
        .collect();
    let mut outside = Array2::from_elem((ny, nx), true);
    for ((r, c), &inside) in support.indexed_iter() {
        if !inside {
            continue;
        }
        for &(dy, dx) in &offsets {
            let (rr, cc) = (r as isize + dy, c as isize + dx);
            if rr >= 0 && cc >= 0 && (rr as usize) < ny && (cc as usize) < nx {
                outside[[rr as usize, cc as usize]] = false;
            }
        }
    }
    outside
}

pub fn visibility(img: &GhostImage, mask: &ObjectMask, cfg: &OpticalConfig) -> Result<VisibilityReport> {
    if img.gamma.dim() != mask.shape() {
        return Err(Error::DimensionMismatch {
            expected: mask.shape(),
            found: img.gamma.dim(),
        });
    }
    let support = mask.support();
    let outside = outside_region(mask, cfg.coherence_pixels());
    let region_mean = |region: &Array2<bool>, name| {
        let (sum, count) = img
            .gamma
            .iter()
            .zip(region.iter())
            .filter(|(_, &keep)| keep)
            .fold((0.0, 0usize), |(s, n), (g, _)| (s + g, n + 1));
        if count == 0 {
            Err(Error::EmptyRegion(name))
        } else {
            Ok(sum / count as f64)
        }
    };
    let gamma_in = region_mean(&support, "in-object")?;
    let gamma_out = region_mean(&outside, "out-of-object")?;
    Ok(VisibilityReport {
        v: (gamma_in - gamma_out) / (gamma_in + gamma_out),
        gamma_in,
        gamma_out,
        order: img.order,
        frames_used: img.frames_used,
    })
}

/// Number of coherence areas covered by the object support.
pub fn m_obj(mask: &ObjectMask, cfg: &OpticalConfig) -> f64 {
    mask.support_pixels() as f64 * cfg.pitch * cfg.pitch / coherence_area(cfg)
}

/// Full width at half maximum of a peak at `peak` above `baseline`, in
/// samples, with linear interpolation at both half-maximum crossings.
pub fn fwhm_of_profile(profile: &[f64], peak: usize, baseline: f64) -> Option<f64> {
    let top = profile[peak];
    if !(top > baseline) {
        return None;
    }
    let half = baseline + 0.5 * (top - baseline);
    let crossing = |next: &dyn Fn(usize) -> Option<usize>| {
        let mut k = peak;
        while let Some(j) = next(k) {
            if profile[j] < half {
                let frac = (profile[k] - half) / (profile[k] - profile[j]);
                return Some(k.abs_diff(peak) as f64 + frac);
            }
            k = j;
        }
        None
    };
    let right = crossing(&|k| (k + 1 < profile.len()).then(|| k + 1))?;
    let left = crossing(&|k| k.checked_sub(1))?;
    Some(left + right)
}

/// Reconstructs a single-pixel object and measures the width of the
/// correlation peak along the row through it. The plateau is the mean of
/// row pixels more than three coherence lengths from the peak.
pub fn psf_fwhm(cfg: &OpticalConfig, order: CorrelationOrder, frames: usize) -> Result<ResolutionReport> {
    let mut reports = psf_fwhm_orders(cfg, &[order], frames)?;
    Ok(reports.remove(0))
}

/// [`psf_fwhm`] for several orders sharing one set of frames.
pub fn psf_fwhm_orders(
    cfg: &OpticalConfig,
    orders: &[CorrelationOrder],
    frames: usize,
) -> Result<Vec<ResolutionReport>> {
    let generator = SpeckleGenerator::new(cfg)?;
    let mask = pinhole(cfg)?;
    let (r0, c0) = mask
        .support_bounds()
        .map(|(r, _, c, _)| (r, c))
        .expect("pinhole has one pixel");
    let plan = SweepPlan {
        orders: orders.to_vec(),
        ..SweepPlan::single(*orders.first().ok_or(Error::EmptyRegion("order list"))?)
    };
    let outcome = run_sweep(frames, cfg.shape(), &plan, |t| {
        let frame = generator.frame(t as u64).intensity;
        let s = bucket_signal(&frame, &mask, cfg.pitch)?;
        Ok((s, Cow::Owned(frame)))
    })?;
    let far = 3.0 * cfg.coherence_pixels();
    outcome
        .images
        .iter()
        .map(|img| {
            let row: Vec<f64> = img.gamma.row(r0).to_vec();
            let plateau: Vec<f64> = row
                .iter()
                .enumerate()
                .filter(|(c, _)| (*c as f64 - c0 as f64).abs() > far)
                .map(|(_, &g)| g)
                .collect();
            if plateau.len() < 2 {
                return Err(Error::EmptyRegion("plateau"));
            }
            let (mean, std) = mean_std(&plateau);
            let height = row[c0] - mean;
            let not_found = Error::PeakNotFound {
                height,
                threshold: 3.0 * std,
            };
            if !(height > 3.0 * std) {
                return Err(not_found);
            }
            let width = fwhm_of_profile(&row, c0, mean).ok_or(not_found)?;
            Ok(ResolutionReport {
                fwhm: width * cfg.pitch,
                order: img.order,
            })
        })
        .collect()
}

/// Mean over pixels of the across-block sample standard deviation.
pub fn fluctuation_from_blocks(blocks: &[GhostImage]) -> Result<f64> {
    if blocks.len() < 2 {
        return Err(Error::TooFewFrames {
            frames: blocks.iter().map(|b| b.frames_used).sum(),
            blocks: blocks.len(),
        });
    }
    let shape = blocks[0].gamma.dim();
    let k = blocks.len() as f64;
    let mut total = 0.0;
    for idx in ndarray::indices(shape) {
        let values: Vec<f64> = blocks.iter().map(|b| b.gamma[idx]).collect();
        let mean = values.iter().sum::<f64>() / k;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (k - 1.0);
        total += var.sqrt();
    }
    Ok(total / (shape.0 * shape.1) as f64)
}

/// Splits the frames into `block_count` contiguous blocks (dropping any
/// remainder), reconstructs each block on its own and reports the mean
/// per-pixel spread across blocks.
pub fn estimator_fluctuation<S: FrameSource + ?Sized>(
    buckets: &BucketSeries,
    ref_frames: &S,
    order: CorrelationOrder,
    block_count: usize,
) -> Result<f64> {
    if block_count < 2 || buckets.len() / block_count.max(1) < 2 {
        return Err(Error::TooFewFrames {
            frames: buckets.len(),
            blocks: block_count,
        });
    }
    let plan = SweepPlan {
        blocks: block_count,
        ..SweepPlan::single(order)
    };
    let outcome = gamma_sweep(buckets, ref_frames, &plan)?;
    fluctuation_from_blocks(&outcome.block_images[0])
}

pub fn pearson(a: &Array2<f64>, b: &Array2<f64>) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let n = a.len() as f64;
    let ma = a.sum() / n;
    let mb = b.sum() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 {
        return Err(Error::ZeroVariance("image"));
    }
    if sbb == 0.0 {
        return Err(Error::ZeroVariance("mask"));
    }
    Ok(sab / (saa * sbb).sqrt())
}

/// Pearson correlation between the max-normalized image and `|T|^2`.
pub fn fidelity(img: &GhostImage, mask: &ObjectMask) -> Result<f64> {
    let normalized = normalize_image(img).map_err(|_| Error::ZeroVariance("image"))?;
    pearson(&normalized.gamma, &mask.intensity_transmission())
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
