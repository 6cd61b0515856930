//! Object transmission masks.

use std::path::Path;

use ndarray::Array2;

use crate::config::OpticalConfig;
use crate::error::{Error, Result};
use crate::pgm;

/// Intensity transmission above which a pixel counts as inside the object.
pub const SUPPORT_THRESHOLD: f64 = 0.5;

/// Field amplitude transmission `T(y)` sampled on the configuration grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectMask {
    t: Array2<f64>,
}

impl ObjectMask {
    pub fn new(t: Array2<f64>) -> Result<Self> {
        if let Some(bad) = t.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::RangeError {
                key: "mask amplitude",
                value: bad.to_string(),
                reason: "must lie in [0, 1]",
            });
        }
        Ok(ObjectMask { t })
    }

    pub fn uniform(cfg: &OpticalConfig, amplitude: f64) -> Result<Self> {
        Self::new(Array2::from_elem(cfg.shape(), amplitude))
    }

    pub fn amplitude(&self) -> &Array2<f64> {
        &self.t
    }

    /// `|T|^2` per pixel.
    pub fn intensity_transmission(&self) -> Array2<f64> {
        self.t.mapv(|a| a * a)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.t.dim()
    }

    /// Pixels with `|T|^2 > 0.5`.
    pub fn support(&self) -> Array2<bool> {
        self.t.mapv(|a| a * a > SUPPORT_THRESHOLD)
    }

    pub fn support_pixels(&self) -> usize {
        self.t.iter().filter(|&&a| a * a > SUPPORT_THRESHOLD).count()
    }

    /// Smallest row/column box containing the support, as
    /// `(row_min, row_max, col_min, col_max)` inclusive.
    pub fn support_bounds(&self) -> Option<(usize, usize, usize, usize)> {
        let mut bounds: Option<(usize, usize, usize, usize)> = None;
        for ((r, c), &a) in self.t.indexed_iter() {
            if a * a > SUPPORT_THRESHOLD {
                bounds = Some(match bounds {
                    None => (r, r, c, c),
                    Some((r0, r1, c0, c1)) => (r0.min(r), r1.max(r), c0.min(c), c1.max(c)),
                });
            }
        }
        bounds
    }
}

/// Two opaque-surround slits of width `slit_width`, centre spacing
/// `separation` and height `slit_height`, centred on the grid.
pub fn make_double_slit(
    cfg: &OpticalConfig,
    slit_width: f64,
    separation: f64,
    slit_height: f64,
) -> Result<ObjectMask> {
    if separation <= slit_width {
        return Err(Error::GeometryTooLargeForGrid(format!(
            "slit separation {separation:e} m must exceed the slit width {slit_width:e} m"
        )));
    }
    let width_px = (slit_width / cfg.pitch).round() as usize;
    let sep_px = (separation / cfg.pitch).round() as usize;
    let height_px = ((slit_height / cfg.pitch).round() as usize).max(1);
    if width_px == 0 || sep_px <= width_px {
        return Err(Error::GeometryTooLargeForGrid(
            "slits are not resolved by the grid pitch".into(),
        ));
    }
    if sep_px + width_px > cfg.nx || height_px > cfg.ny {
        return Err(Error::GeometryTooLargeForGrid(format!(
            "double slit spans {}x{} pixels on a {}x{} grid",
            sep_px + width_px,
            height_px,
            cfg.nx,
            cfg.ny
        )));
    }
    let span = sep_px + width_px;
    let left = (cfg.nx - span) / 2;
    let top = (cfg.ny - height_px) / 2;
    let mut t = Array2::zeros(cfg.shape());
    for start in [left, left + sep_px] {
        t.slice_mut(ndarray::s![top..top + height_px, start..start + width_px])
            .fill(1.0);
    }
    ObjectMask::new(t)
}

/// Fully transmitting rectangle of `width_px` x `height_px` centred on the grid.
pub fn centered_rect(cfg: &OpticalConfig, width_px: usize, height_px: usize) -> Result<ObjectMask> {
    if width_px == 0 || height_px == 0 || width_px > cfg.nx || height_px > cfg.ny {
        return Err(Error::GeometryTooLargeForGrid(format!(
            "{width_px}x{height_px} rectangle on a {}x{} grid",
            cfg.nx, cfg.ny
        )));
    }
    let top = (cfg.ny - height_px) / 2;
    let left = (cfg.nx - width_px) / 2;
    let mut t = Array2::zeros(cfg.shape());
    t.slice_mut(ndarray::s![top..top + height_px, left..left + width_px])
        .fill(1.0);
    ObjectMask::new(t)
}

/// Near-square centred aperture whose area is as close as the grid allows to
/// `cells` coherence areas.
pub fn coherence_cell_aperture(cfg: &OpticalConfig, cells: f64) -> Result<ObjectMask> {
    let area_px = cells * cfg.coherence_pixels().powi(2);
    if cfg.ny == 1 {
        return centered_rect(cfg, area_px.round().max(1.0) as usize, 1);
    }
    let width = area_px.sqrt().round().max(1.0) as usize;
    let height = (area_px / width as f64).round().max(1.0) as usize;
    centered_rect(cfg, width, height)
}

/// Single transmitting pixel at the grid centre.
pub fn pinhole(cfg: &OpticalConfig) -> Result<ObjectMask> {
    centered_rect(cfg, 1, 1)
}

// Stroke skeleton of the stand-in glyph in unit-box coordinates (x, y), y down.
const GLYPH_STROKES: &[((f64, f64), (f64, f64))] = &[
    ((0.50, 0.05), (0.50, 0.42)),
    ((0.22, 0.14), (0.30, 0.34)),
    ((0.78, 0.14), (0.70, 0.34)),
    ((0.06, 0.46), (0.94, 0.46)),
    ((0.38, 0.46), (0.36, 0.70)),
    ((0.36, 0.70), (0.10, 0.93)),
    ((0.62, 0.46), (0.62, 0.88)),
    ((0.62, 0.88), (0.92, 0.88)),
    ((0.92, 0.88), (0.92, 0.74)),
];
const GLYPH_STROKE_WIDTH: f64 = 0.10;

/// Built-in stand-in for the character-shaped mask: a binary glyph resembling
/// the character for "light", drawn with strokes of a tenth of the glyph box.
/// The box covers the central three quarters of the shorter grid side.
pub fn glyph_mask(cfg: &OpticalConfig) -> Result<ObjectMask> {
    let side = (cfg.nx.min(cfg.ny) as f64 * 0.75).floor() as usize;
    glyph_mask_sized(cfg, side)
}

/// The same glyph in a centred box of `side` pixels, leaving the rest of the
/// grid opaque. Useful when light must spread well beyond the object.
pub fn glyph_mask_sized(cfg: &OpticalConfig, side: usize) -> Result<ObjectMask> {
    if side < 16 || side > cfg.nx.min(cfg.ny) {
        return Err(Error::GeometryTooLargeForGrid(format!(
            "glyph box of {side} px needs 16 px and must fit a {}x{} grid",
            cfg.nx, cfg.ny
        )));
    }
    let side = side as f64;
    let x0 = (cfg.nx as f64 - side) / 2.0;
    let y0 = (cfg.ny as f64 - side) / 2.0;
    let half_width = 0.5 * GLYPH_STROKE_WIDTH;
    let t = Array2::from_shape_fn(cfg.shape(), |(r, c)| {
        let u = (c as f64 + 0.5 - x0) / side;
        let v = (r as f64 + 0.5 - y0) / side;
        let inside = GLYPH_STROKES
            .iter()
            .any(|&(a, b)| segment_distance((u, v), a, b) <= half_width);
        if inside {
            1.0
        } else {
            0.0
        }
    });
    ObjectMask::new(t)
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let s = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + s * dx - p.0, a.1 + s * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

/// Loads a P5 graymap; gray levels map linearly onto amplitudes in `[0, 1]`.
pub fn load_mask_pgm(path: impl AsRef<Path>, cfg: &OpticalConfig) -> Result<ObjectMask> {
    let gray = pgm::read_pgm(path)?;
    if gray.levels.dim() != cfg.shape() {
        return Err(Error::DimensionMismatch {
            expected: cfg.shape(),
            found: gray.levels.dim(),
        });
    }
    let scale = gray.maxval as f64;
    ObjectMask::new(gray.levels.mapv(|v| v as f64 / scale))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn grid(nx: usize, ny: usize) -> OpticalConfig {
        OpticalConfig {
            pitch: 10e-6,
            ..OpticalConfig::character_experiment()
        }
        .with_grid(nx, ny)
    }

    #[test]
    fn double_slit_pixel_geometry() {
        let cfg = grid(256, 32);
        let mask = make_double_slit(&cfg, 150e-6, 570e-6, 200e-6).unwrap();
        let row = mask.amplitude().row(16);
        let lit: Vec<usize> = (0..256).filter(|&c| row[c] == 1.0).collect();
        assert_eq!(lit.len(), 30);
        let (a, b) = lit.split_at(15);
        assert!(a.windows(2).all(|w| w[1] == w[0] + 1));
        assert!(b.windows(2).all(|w| w[1] == w[0] + 1));
        assert_eq!(b[0] - a[0], 57);
    }

    #[test]
    fn double_slit_area_matches_nominal() {
        let cfg = grid(256, 64);
        let (a, h) = (150e-6, 203e-6);
        let mask = make_double_slit(&cfg, a, 570e-6, h).unwrap();
        let area = mask.support_pixels() as f64 * cfg.pitch * cfg.pitch;
        let quantum = 2.0 * (a + h) * cfg.pitch;
        assert!((area - 2.0 * a * h).abs() <= quantum, "{area}");
    }

    #[test]
    fn overlapping_slits_rejected() {
        let cfg = grid(256, 8);
        assert!(make_double_slit(&cfg, 150e-6, 150e-6, 10e-6).is_err());
        assert!(make_double_slit(&cfg, 150e-6, 3000e-6, 10e-6).is_err());
    }

    #[test]
    fn one_dimensional_slit_uses_single_row() {
        let cfg = OpticalConfig::double_slit_experiment();
        let mask = make_double_slit(&cfg, 150e-6, 570e-6, cfg.pitch).unwrap();
        assert_eq!(mask.shape(), (1, 4096));
        assert_eq!(mask.support_pixels(), 30);
    }

    #[test]
    fn glyph_is_binary_and_reasonably_dense() {
        let cfg = grid(64, 64);
        let mask = glyph_mask(&cfg).unwrap();
        assert!(mask.amplitude().iter().all(|&a| a == 0.0 || a == 1.0));
        let frac = mask.support_pixels() as f64 / (64.0 * 64.0);
        assert!(frac > 0.1 && frac < 0.4, "{frac}");
    }

    #[test]
    fn aperture_cell_counts() {
        let cfg = OpticalConfig::character_experiment().with_grid(64, 64);
        let one = coherence_cell_aperture(&cfg, 1.0).unwrap();
        assert_eq!(one.support_pixels(), 16);
        let hundred = coherence_cell_aperture(&cfg, 100.0).unwrap();
        assert_eq!(hundred.support_pixels(), 1600);
    }

    fn write_tmp(bytes: &[u8]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(bytes).unwrap();
        f
    }

    fn pgm8(w: usize, h: usize, value: u8) -> Vec<u8> {
        let mut v = format!("P5\n{w} {h}\n255\n").into_bytes();
        v.extend(std::iter::repeat(value).take(w * h));
        v
    }

    #[test]
    fn pgm_white_black_and_mid_gray() {
        let cfg = grid(8, 4);
        let white = load_mask_pgm(write_tmp(&pgm8(8, 4, 255)).path(), &cfg).unwrap();
        assert!(white.amplitude().iter().all(|&a| a == 1.0));
        let black = load_mask_pgm(write_tmp(&pgm8(8, 4, 0)).path(), &cfg).unwrap();
        assert!(black.amplitude().iter().all(|&a| a == 0.0));
        let mid = load_mask_pgm(write_tmp(&pgm8(8, 4, 128)).path(), &cfg).unwrap();
        assert!(mid.amplitude().iter().all(|&a| a == 128.0 / 255.0));
    }

    #[test]
    fn pgm_dimension_mismatch() {
        let cfg = grid(8, 4);
        let err = load_mask_pgm(write_tmp(&pgm8(4, 4, 255)).path(), &cfg).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn amplitude_out_of_range_rejected() {
        assert!(ObjectMask::new(Array2::from_elem((2, 2), 1.5)).is_err());
        assert!(ObjectMask::new(Array2::from_elem((2, 2), -0.1)).is_err());
    }
}
