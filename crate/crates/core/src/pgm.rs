//! Minimal binary PGM (P5) reader and writer.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Decoded gray levels plus the declared maximum value.
#[derive(Debug, Clone, PartialEq)]
pub struct Graymap {
    pub levels: Array2<u16>,
    pub maxval: u16,
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<Graymap> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<Graymap> {
    let mut cursor = Header { bytes, pos: 0 };
    let magic = cursor.token()?;
    if magic != b"P5" {
        return Err(Error::MalformedFile {
            offset: 0,
            reason: "not a binary PGM (missing P5 magic)".into(),
        });
    }
    let width = cursor.number()?;
    let height = cursor.number()?;
    let maxval = cursor.number()?;
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(Error::MalformedFile {
            offset: cursor.pos as u64,
            reason: format!("bad header values {width}x{height} maxval {maxval}"),
        });
    }
    // Exactly one whitespace byte separates the header from the raster.
    match bytes.get(cursor.pos) {
        Some(b) if b.is_ascii_whitespace() => cursor.pos += 1,
        _ => {
            return Err(Error::MalformedFile {
                offset: cursor.pos as u64,
                reason: "missing whitespace after maxval".into(),
            })
        }
    }
    let bytes_per_sample = if maxval < 256 { 1 } else { 2 };
    let expected = width * height * bytes_per_sample;
    let raster = &bytes[cursor.pos..];
    if raster.len() < expected {
        return Err(Error::MalformedFile {
            offset: bytes.len() as u64,
            reason: format!("raster truncated: need {expected} bytes, have {}", raster.len()),
        });
    }
    let samples: Vec<u16> = if bytes_per_sample == 1 {
        raster[..expected].iter().map(|&b| b as u16).collect()
    } else {
        raster[..expected]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    };
    let levels = Array2::from_shape_vec((height, width), samples)
        .expect("sample count matches header dimensions");
    Ok(Graymap {
        levels,
        maxval: maxval as u16,
    })
}

/// Encodes values in `[0, 1]` as a 16-bit P5 image with maxval 65535.
pub fn encode_pgm16(image: &Array2<f64>) -> Vec<u8> {
    let (h, w) = image.dim();
    let mut out = format!("P5\n{w} {h}\n65535\n").into_bytes();
    out.reserve(w * h * 2);
    for &v in image.iter() {
        let level = (v.clamp(0.0, 1.0) * 65535.0).round() as u16;
        out.extend_from_slice(&level.to_be_bytes());
    }
    out
}

pub fn write_pgm16(path: impl AsRef<Path>, image: &Array2<f64>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm16(image)).map_err(|e| Error::io(path, e))
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Header<'a> {
    fn skip_space_and_comments(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while let Some(&c) = self.bytes.get(self.pos) {
                    self.pos += 1;
                    if c == b'\n' {
                        break;
                    }
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a [u8]> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|b| !b.is_ascii_whitespace() && *b != b'#')
        {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Error::MalformedFile {
                offset: start as u64,
                reason: "unexpected end of header".into(),
            });
        }
        Ok(&self.bytes[start..self.pos])
    }

    fn number(&mut self) -> Result<usize> {
        let start = self.pos;
        let tok = self.token()?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::MalformedFile {
                offset: start as u64,
                reason: format!("expected an integer, found {:?}", String::from_utf8_lossy(tok)),
            })
    }
}
