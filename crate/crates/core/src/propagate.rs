//! Scalar free-space propagation by the angular-spectrum (transfer function)
//! method, and the direct-exposure images it produces behind a mask.

use std::f64::consts::PI;

use ndarray::Array2;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fft::{frequencies, Fft2};
use crate::mask::ObjectMask;
use crate::speckle::SpeckleGenerator;

/// Frames summed per work unit in ensemble averages; fixed so the reduction
/// order does not depend on the thread count.
const FRAME_CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    pub data: Array2<Complex64>,
    pub pitch: f64,
    pub wavelength: f64,
}

impl ComplexField {
    pub fn intensity(&self) -> Array2<f64> {
        self.data.mapv(|e| e.norm_sqr())
    }

    /// `sum |E|^2 * pitch^2`.
    pub fn power(&self) -> f64 {
        self.data.iter().map(|e| e.norm_sqr()).sum::<f64>() * self.pitch * self.pitch
    }
}

/// Precomputed transfer function for one grid, wavelength and distance.
#[derive(Clone)]
pub struct AngularSpectrum {
    shape: (usize, usize),
    transfer: Array2<Complex64>,
    fft: Fft2,
}

impl AngularSpectrum {
    pub fn new(shape: (usize, usize), pitch: f64, wavelength: f64, z: f64) -> Result<Self> {
        if !(z >= 0.0) {
            return Err(Error::NonPositiveParameter {
                name: "propagation distance",
                value: z,
            });
        }
        let (ny, nx) = shape;
        for n in [nx, ny] {
            if n > 1 {
                let ratio = wavelength * z / (n as f64 * pitch * pitch);
                if ratio > 1.0 {
                    return Err(Error::AliasedPropagation { z, ratio });
                }
            }
        }
        let fx = frequencies(nx, pitch);
        let fy = frequencies(ny, pitch);
        let inv_l2 = 1.0 / (wavelength * wavelength);
        let norm = 1.0 / (nx * ny) as f64;
        let transfer = Array2::from_shape_fn(shape, |(r, c)| {
            let kz2 = inv_l2 - fx[c] * fx[c] - fy[r] * fy[r];
            if kz2 < 0.0 {
                Complex64::new(0.0, 0.0)
            } else {
                Complex64::from_polar(norm, 2.0 * PI * z * kz2.sqrt())
            }
        });
        Ok(AngularSpectrum {
            shape,
            transfer,
            fft: Fft2::new(ny, nx),
        })
    }

    pub fn apply(&self, field: &mut Array2<Complex64>) -> Result<()> {
        if field.dim() != self.shape {
            return Err(Error::DimensionMismatch {
                expected: self.shape,
                found: field.dim(),
            });
        }
        self.fft.forward(field);
        *field *= &self.transfer;
        self.fft.inverse(field);
        Ok(())
    }
}

pub fn angular_spectrum_propagate(field: &ComplexField, z: f64) -> Result<ComplexField> {
    let prop = AngularSpectrum::new(field.data.dim(), field.pitch, field.wavelength, z)?;
    let mut out = field.clone();
    prop.apply(&mut out.data)?;
    Ok(out)
}

/// Average intensity recorded a distance `z3` behind the mask by a camera
/// exposed directly to the transmitted speckle, over frames `0..frames`.
pub fn direct_image(
    generator: &SpeckleGenerator,
    frames: usize,
    mask: &ObjectMask,
    z3: f64,
) -> Result<Array2<f64>> {
    Ok(direct_images(generator, frames, mask, &[z3])?.remove(0))
}

/// [`direct_image`] at several distances, sharing the speckle realizations.
pub fn direct_images(
    generator: &SpeckleGenerator,
    frames: usize,
    mask: &ObjectMask,
    distances: &[f64],
) -> Result<Vec<Array2<f64>>> {
    let cfg = generator.config();
    if mask.shape() != cfg.shape() {
        return Err(Error::DimensionMismatch {
            expected: cfg.shape(),
            found: mask.shape(),
        });
    }
    if frames == 0 {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    let props = distances
        .iter()
        .map(|&z| AngularSpectrum::new(cfg.shape(), cfg.pitch, cfg.wavelength, z))
        .collect::<Result<Vec<_>>>()?;
    let transmission = mask.amplitude().mapv(|a| Complex64::new(a, 0.0));

    let chunk_sums: Vec<Vec<Array2<f64>>> = (0..frames.div_ceil(FRAME_CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let mut sums = vec![Array2::<f64>::zeros(cfg.shape()); props.len()];
            let end = ((chunk + 1) * FRAME_CHUNK).min(frames);
            for t in chunk * FRAME_CHUNK..end {
                let transmitted = generator.field(t as u64) * &transmission;
                for (prop, sum) in props.iter().zip(sums.iter_mut()) {
                    let mut field = transmitted.clone();
                    prop.apply(&mut field)?;
                    sum.zip_mut_with(&field, |s, e| *s += e.norm_sqr());
                }
            }
            Ok(sums)
        })
        .collect::<Result<_>>()?;

    let mut totals = vec![Array2::<f64>::zeros(cfg.shape()); props.len()];
    for sums in chunk_sums {
        for (total, sum) in totals.iter_mut().zip(sums) {
            *total += &sum;
        }
    }
    let inv = 1.0 / frames as f64;
    for total in &mut totals {
        total.mapv_inplace(|v| v * inv);
    }
    Ok(totals)
}
