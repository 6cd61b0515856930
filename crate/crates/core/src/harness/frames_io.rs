//! Binary frame files.
//!
//! Layout, all little-endian: the magic `GIFR`, a `u16` version, `nx`, `ny`
//! and the frame count as `u32`, then every frame as `nx * ny` `f32` values in
//! row-major order, then the run seed as a `u64` footer. Generated speckle is
//! already rounded to `f32`, so storing it is lossless.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::rng::{derive_seed, Stream};
use crate::speckle::{FrameEnsemble, SpeckleFrame};

pub const MAGIC: &[u8; 4] = b"GIFR";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 * 3;
const FOOTER_LEN: usize = 8;

/// A frame file's contents.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFile {
    pub seed: u64,
    pub ensemble: FrameEnsemble,
}

/// Streams frames to disk one at a time.
pub struct FrameWriter {
    path: PathBuf,
    out: BufWriter<File>,
    shape: (usize, usize),
    expected: usize,
    written: usize,
}

impl FrameWriter {
    pub fn create(path: impl AsRef<Path>, shape: (usize, usize), count: usize) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let (ny, nx) = shape;
        let as_u32 = |v: usize, key| {
            u32::try_from(v).map_err(|_| Error::RangeError {
                key,
                value: v.to_string(),
                reason: "does not fit the 32-bit header field",
            })
        };
        let header = [
            &MAGIC[..],
            &VERSION.to_le_bytes(),
            &as_u32(nx, "nx")?.to_le_bytes(),
            &as_u32(ny, "ny")?.to_le_bytes(),
            &as_u32(count, "frame count")?.to_le_bytes(),
        ]
        .concat();
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut out = BufWriter::new(file);
        out.write_all(&header).map_err(|e| Error::io(&path, e))?;
        Ok(FrameWriter {
            path,
            out,
            shape,
            expected: count,
            written: 0,
        })
    }

    pub fn push(&mut self, frame: &Array2<f64>) -> Result<()> {
        if frame.dim() != self.shape {
            return Err(Error::DimensionMismatch {
                expected: self.shape,
                found: frame.dim(),
            });
        }
        if self.written == self.expected {
            return Err(Error::LengthMismatch {
                what: "frame file",
                left: self.written + 1,
                right: self.expected,
            });
        }
        for &v in frame.iter() {
            self.out
                .write_all(&(v as f32).to_le_bytes())
                .map_err(|e| Error::io(&self.path, e))?;
        }
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self, seed: u64) -> Result<()> {
        if self.written != self.expected {
            return Err(Error::LengthMismatch {
                what: "frame file",
                left: self.written,
                right: self.expected,
            });
        }
        self.out
            .write_all(&seed.to_le_bytes())
            .and_then(|_| self.out.flush())
            .map_err(|e| Error::io(&self.path, e))
    }
}

pub fn write_frames(ensemble: &FrameEnsemble, seed: u64, path: impl AsRef<Path>) -> Result<()> {
    let shape = ensemble.frames().first().map_or((0, 0), |f| f.intensity.dim());
    let mut writer = FrameWriter::create(path, shape, ensemble.len())?;
    for f in ensemble.frames() {
        writer.push(&f.intensity)?;
    }
    writer.finish(seed)
}

pub fn read_frames(path: impl AsRef<Path>) -> Result<FrameFile> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_frames(&bytes)
}

/// Frames are numbered from zero; per-frame seeds are re-derived from the
/// footer seed.
pub fn decode_frames(bytes: &[u8]) -> Result<FrameFile> {
    let malformed = |offset: usize, reason: String| Error::MalformedFile {
        offset: offset as u64,
        reason,
    };
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(malformed(0, "missing GIFR magic".into()));
    }
    if bytes.len() < HEADER_LEN {
        return Err(malformed(bytes.len(), format!("header needs {HEADER_LEN} bytes")));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: VERSION,
        });
    }
    let field = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes")) as usize;
    let (nx, ny, count) = (field(6), field(10), field(14));
    let pixels = nx.checked_mul(ny);
    let expected_len = pixels
        .and_then(|p| p.checked_mul(count))
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(HEADER_LEN + FOOTER_LEN))
        .ok_or_else(|| malformed(6, "frame dimensions overflow".into()))?;
    if bytes.len() < expected_len {
        return Err(malformed(
            bytes.len(),
            format!("truncated: {count} frames of {nx}x{ny} need {expected_len} bytes"),
        ));
    }
    if bytes.len() > expected_len {
        return Err(malformed(expected_len, "trailing bytes after seed footer".into()));
    }
    let pixels = pixels.expect("checked above");
    let footer = expected_len - FOOTER_LEN;
    let seed = u64::from_le_bytes(bytes[footer..].try_into().expect("8 bytes"));
    let frames = bytes[HEADER_LEN..footer]
        .chunks_exact(4 * pixels.max(1))
        .take(count)
        .enumerate()
        .map(|(t, chunk)| {
            let values = chunk
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
                .collect();
            SpeckleFrame {
                intensity: Array2::from_shape_vec((ny, nx), values).expect("sized chunk"),
                frame_index: t as u64,
                seed_used: derive_seed(seed, Stream::Speckle, t as u64),
            }
        })
        .collect();
    Ok(FrameFile {
        seed,
        ensemble: FrameEnsemble::new(frames)?,
    })
}
