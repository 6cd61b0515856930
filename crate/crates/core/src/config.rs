//! Optical geometry, grid sampling and correlation-order types shared by the
//! rest of the crate.
//!
//! Lengths are in metres throughout. Grids are stored row-major with shape
//! `(ny, nx)`; a one-dimensional scenario is simply a grid with `ny == 1`.

use crate::error::{Error, Result};

/// Minimum number of grid pixels per transverse coherence length.
pub const MIN_PIXELS_PER_COHERENCE_LENGTH: f64 = 3.0;

/// Source and arm geometry plus the sampling grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OpticalConfig {
    pub wavelength: f64,
    pub source_diameter: f64,
    /// Source to object plane.
    pub z1: f64,
    /// Source to reference detector.
    pub z2: f64,
    /// Object to bucket detector.
    pub z3: f64,
    pub pitch: f64,
    pub nx: usize,
    pub ny: usize,
    pub mean_intensity: f64,
    pub seed: u64,
}

impl OpticalConfig {
    /// Geometry of the character-mask experiment: 532 nm, 3 mm spot,
    /// z1 = z2 = 240 mm, sampled at a quarter coherence length on a 256 x 256 grid.
    pub fn character_experiment() -> Self {
        let mut cfg = OpticalConfig {
            wavelength: 532e-9,
            source_diameter: 3e-3,
            z1: 0.240,
            z2: 0.240,
            z3: 0.070,
            pitch: 0.0,
            nx: 256,
            ny: 256,
            mean_intensity: 1.0,
            seed: 0,
        };
        cfg.pitch = cfg.coherence_length() / 4.0;
        cfg
    }

    /// Geometry of the double-slit experiment: 441.6 nm, 1 mm source,
    /// z1 = z2 = 354 mm, a 1 x 4096 line of 10 um pixels.
    pub fn double_slit_experiment() -> Self {
        OpticalConfig {
            wavelength: 441.6e-9,
            source_diameter: 1e-3,
            z1: 0.354,
            z2: 0.354,
            z3: 0.0,
            pitch: 10e-6,
            nx: 4096,
            ny: 1,
            mean_intensity: 1.0,
            seed: 0,
        }
    }

    /// Transverse coherence length `λ z1 / D` at the object plane.
    pub fn coherence_length(&self) -> f64 {
        self.wavelength * self.z1 / self.source_diameter
    }

    /// Coherence length expressed in grid pixels.
    pub fn coherence_pixels(&self) -> f64 {
        self.coherence_length() / self.pitch
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.ny, self.nx)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_grid(mut self, nx: usize, ny: usize) -> Self {
        self.nx = nx;
        self.ny = ny;
        self
    }
}

/// Returns `cfg` unchanged if every invariant holds.
pub fn validate_config(cfg: OpticalConfig) -> Result<OpticalConfig> {
    let positive = [
        ("wavelength", cfg.wavelength),
        ("source_diameter", cfg.source_diameter),
        ("z1", cfg.z1),
        ("z2", cfg.z2),
        ("pitch", cfg.pitch),
        ("mean_intensity", cfg.mean_intensity),
        ("nx", cfg.nx as f64),
        ("ny", cfg.ny as f64),
    ];
    for (name, value) in positive {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::NonPositiveParameter { name, value });
        }
    }
    if !(cfg.z3 >= 0.0 && cfg.z3.is_finite()) {
        return Err(Error::NonPositiveParameter {
            name: "z3",
            value: cfg.z3,
        });
    }
    let coherence_length = cfg.coherence_length();
    if cfg.pitch * MIN_PIXELS_PER_COHERENCE_LENGTH > coherence_length {
        return Err(Error::UndersampledGrid {
            pitch: cfg.pitch,
            coherence_length,
        });
    }
    Ok(cfg)
}

/// Speckle coherence area `(λ z1 / D)^2` in square metres.
pub fn coherence_area(cfg: &OpticalConfig) -> f64 {
    let l = cfg.coherence_length();
    l * l
}

/// Total order `N` and the number `n` of factors taken from the bucket arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CorrelationOrder {
    order: u32,
    split: u32,
}

impl CorrelationOrder {
    pub fn new(order: u32, split: u32) -> Result<Self> {
        if order < 2 || split < 1 || split >= order {
            return Err(Error::InvalidOrder { order, split });
        }
        Ok(CorrelationOrder { order, split })
    }

    /// `n = N - 1`, the split used for the character-mask images.
    pub fn bucket_heavy(order: u32) -> Result<Self> {
        Self::new(order, order.saturating_sub(1))
    }

    /// `n = N / 2`, the split used for the double-slit sweep.
    pub fn balanced(order: u32) -> Result<Self> {
        Self::new(order, order / 2)
    }

    /// Total order `N`.
    pub fn order(&self) -> u32 {
        self.order
    }

    /// Power `n` applied to the bucket signal.
    pub fn bucket_power(&self) -> u32 {
        self.split
    }

    /// Power `N - n` applied to the reference pixel.
    pub fn reference_power(&self) -> u32 {
        self.order - self.split
    }
}

impl std::fmt::Display for CorrelationOrder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "N={} n={}", self.order, self.split)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preset_cfg() -> OpticalConfig {
        OpticalConfig {
            pitch: 10e-6,
            ..OpticalConfig::character_experiment()
        }
    }

    #[test]
    fn character_geometry_validates() {
        let cfg = validate_config(preset_cfg()).unwrap();
        assert!((cfg.coherence_length() - 42.56e-6).abs() < 0.01e-6);
        assert!(cfg.coherence_length() >= 3.0 * cfg.pitch);
    }

    #[test]
    fn zero_source_diameter_rejected() {
        let cfg = OpticalConfig {
            source_diameter: 0.0,
            ..preset_cfg()
        };
        assert!(matches!(
            validate_config(cfg),
            Err(Error::NonPositiveParameter {
                name: "source_diameter",
                ..
            })
        ));
    }

    #[test]
    fn coarse_pitch_rejected() {
        let cfg = OpticalConfig {
            pitch: 20e-6,
            ..preset_cfg()
        };
        assert!(matches!(
            validate_config(cfg),
            Err(Error::UndersampledGrid { .. })
        ));
    }

    #[test]
    fn negative_z3_rejected_zero_accepted() {
        let mut cfg = preset_cfg();
        cfg.z3 = 0.0;
        assert!(validate_config(cfg.clone()).is_ok());
        cfg.z3 = -1e-3;
        assert!(validate_config(cfg).is_err());
    }

    #[test]
    fn validate_is_idempotent() {
        let once = validate_config(preset_cfg()).unwrap();
        let twice = validate_config(once.clone()).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn coherence_area_values() {
        let area = coherence_area(&preset_cfg());
        assert!((area - 1.811e-9).abs() / 1.811e-9 < 1e-3, "{area}");

        let slit = OpticalConfig::double_slit_experiment();
        let area = coherence_area(&slit);
        assert!((area - 2.443e-8).abs() / 2.443e-8 < 1e-3, "{area}");
        assert!((slit.coherence_length() - 156.3e-6).abs() < 0.1e-6);
    }

    #[test]
    fn coherence_area_quadruples_with_wavelength() {
        let cfg = preset_cfg();
        let doubled = OpticalConfig {
            wavelength: 2.0 * cfg.wavelength,
            ..cfg.clone()
        };
        let ratio = coherence_area(&doubled) / coherence_area(&cfg);
        assert!((ratio - 4.0).abs() < 1e-12);
    }

    #[test]
    fn coherence_area_is_homogeneous_of_degree_four() {
        let cfg = preset_cfg();
        for alpha in [0.3, 1.7, 2.5, 10.0] {
            let scaled = OpticalConfig {
                wavelength: alpha * cfg.wavelength,
                z1: alpha * cfg.z1,
                ..cfg.clone()
            };
            let expect = alpha.powi(4) * coherence_area(&cfg);
            let got = coherence_area(&scaled);
            assert!((got - expect).abs() / expect < 1e-12);
        }
    }

    #[test]
    fn order_bounds() {
        assert!(CorrelationOrder::new(1, 1).is_err());
        assert!(CorrelationOrder::new(4, 0).is_err());
        assert!(CorrelationOrder::new(4, 4).is_err());
        let o = CorrelationOrder::new(4, 3).unwrap();
        assert_eq!((o.order(), o.bucket_power(), o.reference_power()), (4, 3, 1));
        assert_eq!(CorrelationOrder::balanced(10).unwrap().bucket_power(), 5);
        assert_eq!(CorrelationOrder::bucket_heavy(20).unwrap().bucket_power(), 19);
    }
}
