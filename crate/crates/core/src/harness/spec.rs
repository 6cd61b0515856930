use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::config::{validate_config, CorrelationOrder, OpticalConfig};
use crate::correlate::ReductionMode;
use crate::detect::DetectorModel;
use crate::error::{Error, Result};
use crate::mask::{
    coherence_cell_aperture, glyph_mask, glyph_mask_sized, load_mask_pgm, make_double_slit,
    pinhole, ObjectMask,
};

/// Smallest frame budget a scenario accepts.
pub const MIN_FRAMES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScenarioId {
    Character2d,
    OrderSweep2d,
    FourthOrderNSweep,
    DoubleSlit1d,
    DirectImage,
    NFactorialCheck,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 6] = [
        ScenarioId::Character2d,
        ScenarioId::OrderSweep2d,
        ScenarioId::FourthOrderNSweep,
        ScenarioId::DoubleSlit1d,
        ScenarioId::DirectImage,
        ScenarioId::NFactorialCheck,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::Character2d => "character2d",
            ScenarioId::OrderSweep2d => "order_sweep_2d",
            ScenarioId::FourthOrderNSweep => "fourth_order_n_sweep",
            ScenarioId::DoubleSlit1d => "double_slit_1d",
            ScenarioId::DirectImage => "direct_image",
            ScenarioId::NFactorialCheck => "nfactorial_check",
        }
    }

    pub fn is_one_dimensional(self) -> bool {
        self == ScenarioId::DoubleSlit1d
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioId {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        ScenarioId::ALL.into_iter().find(|id| id.name() == s).ok_or(())
    }
}

/// Where the object transmission comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskSource {
    /// Stand-in character glyph filling three quarters of the grid.
    Glyph,
    /// The glyph in a centred box of the given side in pixels.
    GlyphSized(usize),
    /// Two slits built from the scenario's slit geometry.
    DoubleSlit,
    Pinhole,
    /// Near-square aperture covering this many coherence areas.
    Aperture(f64),
    File(PathBuf),
}

impl MaskSource {
    pub fn build(&self, cfg: &OpticalConfig, slits: &SlitGeometry) -> Result<ObjectMask> {
        match self {
            MaskSource::Glyph => glyph_mask(cfg),
            MaskSource::GlyphSized(side) => glyph_mask_sized(cfg, *side),
            MaskSource::DoubleSlit => {
                let height = slits.height.unwrap_or(if cfg.ny == 1 {
                    cfg.pitch
                } else {
                    cfg.ny as f64 * cfg.pitch / 2.0
                });
                make_double_slit(cfg, slits.width, slits.separation, height)
            }
            MaskSource::Pinhole => pinhole(cfg),
            MaskSource::Aperture(cells) => coherence_cell_aperture(cfg, *cells),
            MaskSource::File(path) => load_mask_pgm(path, cfg),
        }
    }
}

impl fmt::Display for MaskSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MaskSource::Glyph => f.write_str("glyph"),
            MaskSource::GlyphSized(side) => write!(f, "glyph:{side}"),
            MaskSource::DoubleSlit => f.write_str("double_slit"),
            MaskSource::Pinhole => f.write_str("pinhole"),
            MaskSource::Aperture(cells) => write!(f, "aperture:{cells}"),
            MaskSource::File(path) => write!(f, "{}", path.display()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlitGeometry {
    pub width: f64,
    pub separation: f64,
    /// `None` means one pixel on a line grid, half the grid height otherwise.
    pub height: Option<f64>,
}

impl Default for SlitGeometry {
    fn default() -> Self {
        SlitGeometry {
            width: 150e-6,
            separation: 570e-6,
            height: None,
        }
    }
}

/// A fully specified, validated scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub scenario: ScenarioId,
    pub frames: usize,
    pub orders: Vec<CorrelationOrder>,
    pub config: OpticalConfig,
    pub mask: MaskSource,
    pub output_dir: PathBuf,
    pub slits: SlitGeometry,
    /// Object-to-camera distances for `direct_image`.
    pub direct_distances: Vec<f64>,
    /// Contiguous frame blocks used for the fluctuation estimate.
    pub blocks: usize,
    pub detector: DetectorModel,
    pub reduction: ReductionMode,
    /// Highest same-point moment checked by `nfactorial_check`.
    pub max_order: u32,
    /// Also persist the reference frames to `frames.gifr`.
    pub save_frames: bool,
}

impl ScenarioSpec {
    /// The desk-scale defaults for a scenario.
    pub fn defaults(scenario: ScenarioId) -> Self {
        let n_minus_one = |ns: &[u32]| {
            ns.iter()
                .map(|&n| CorrelationOrder::bucket_heavy(n).expect("valid order"))
                .collect::<Vec<_>>()
        };
        let character = OpticalConfig::character_experiment();
        let (frames, orders, config, mask) = match scenario {
            ScenarioId::Character2d => (50_000, n_minus_one(&[2, 10, 20]), character, MaskSource::Glyph),
            ScenarioId::OrderSweep2d => (
                50_000,
                n_minus_one(&[2, 4, 6, 8, 10]),
                character.with_grid(64, 64),
                MaskSource::Glyph,
            ),
            ScenarioId::FourthOrderNSweep => (
                50_000,
                (1..=3)
                    .map(|n| CorrelationOrder::new(4, n).expect("valid order"))
                    .collect(),
                character.with_grid(64, 64),
                MaskSource::Glyph,
            ),
            ScenarioId::DoubleSlit1d => (
                20_000,
                [2, 4, 6, 8, 10]
                    .iter()
                    .map(|&n| CorrelationOrder::balanced(n).expect("valid order"))
                    .collect(),
                OpticalConfig::double_slit_experiment(),
                MaskSource::DoubleSlit,
            ),
            ScenarioId::DirectImage => (
                20_000,
                n_minus_one(&[2]),
                character.with_grid(128, 128),
                MaskSource::GlyphSized(20),
            ),
            ScenarioId::NFactorialCheck => (100, n_minus_one(&[2]), character, MaskSource::Glyph),
        };
        let direct_distances = if scenario == ScenarioId::DirectImage {
            vec![0.5e-3, 26e-3]
        } else {
            Vec::new()
        };
        let config = OpticalConfig {
            z3: direct_distances.first().copied().unwrap_or(config.z3),
            ..config
        };
        ScenarioSpec {
            scenario,
            frames,
            orders,
            config,
            mask,
            output_dir: PathBuf::from("out").join(scenario.name()),
            slits: SlitGeometry::default(),
            direct_distances,
            blocks: 10,
            detector: DetectorModel::default(),
            reduction: ReductionMode::Fixed,
            max_order: 4,
            save_frames: false,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.config.seed = seed;
        self
    }

    pub fn with_frames(mut self, frames: usize) -> Self {
        self.frames = frames;
        self
    }

    pub fn with_output_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.output_dir = dir.into();
        self
    }

    /// Checks every invariant; returns the spec unchanged on success.
    pub fn validate(self) -> Result<Self> {
        if self.frames < MIN_FRAMES {
            return Err(Error::RangeError {
                key: "frames",
                value: self.frames.to_string(),
                reason: "at least 100 frames are required",
            });
        }
        if self.orders.is_empty() {
            return Err(Error::RangeError {
                key: "orders",
                value: String::new(),
                reason: "at least one order is required",
            });
        }
        if self.blocks == 1 || (self.blocks > 0 && self.frames / self.blocks < 2) {
            return Err(Error::TooFewFrames {
                frames: self.frames,
                blocks: self.blocks,
            });
        }
        if self.scenario == ScenarioId::DirectImage && self.direct_distances.is_empty() {
            return Err(Error::MissingRequired("z3"));
        }
        if let Some(z) = self.direct_distances.iter().find(|z| !(**z >= 0.0 && z.is_finite())) {
            return Err(Error::NonPositiveParameter { name: "z3", value: *z });
        }
        if self.max_order < 2 {
            return Err(Error::RangeError {
                key: "max_order",
                value: self.max_order.to_string(),
                reason: "must be at least 2",
            });
        }
        let detector = self.detector.validate()?;
        let config = validate_config(self.config)?;
        Ok(ScenarioSpec {
            config,
            detector,
            ..self
        })
    }

    /// Renders the spec in the configuration-file format; parsing the result
    /// gives back an identical spec.
    pub fn to_config_text(&self) -> String {
        let c = &self.config;
        let orders = self
            .orders
            .iter()
            .map(|o| format!("{}:{}", o.order(), o.bucket_power()))
            .collect::<Vec<_>>()
            .join(", ");
        let mut lines = vec![
            format!("scenario_id = {}", self.scenario),
            format!("frames = {}", self.frames),
            format!("seed = {}", c.seed),
            format!("orders = {orders}"),
            format!("wavelength = {}m", c.wavelength),
            format!("source_diameter = {}m", c.source_diameter),
            format!("z1 = {}m", c.z1),
            format!("z2 = {}m", c.z2),
            format!("pitch = {}m", c.pitch),
            format!("nx = {}", c.nx),
            format!("ny = {}", c.ny),
            format!("mean_intensity = {}", c.mean_intensity),
            format!("mask = {}", self.mask),
            format!("slit_width = {}m", self.slits.width),
            format!("slit_sep = {}m", self.slits.separation),
        ];
        if let Some(h) = self.slits.height {
            lines.push(format!("slit_height = {h}m"));
        }
        if self.direct_distances.is_empty() {
            lines.push(format!("z3 = {}m", c.z3));
        } else {
            let zs: Vec<String> = self.direct_distances.iter().map(|z| format!("{z}m")).collect();
            lines.push(format!("z3 = {}", zs.join(", ")));
        }
        lines.extend([
            format!("blocks = {}", self.blocks),
            format!(
                "reduction = {}",
                match self.reduction {
                    ReductionMode::Fixed => "fixed",
                    ReductionMode::Dynamic => "dynamic",
                }
            ),
            format!("shot_noise = {}", self.detector.shot_noise),
            format!("read_noise = {}", self.detector.read_noise_sigma),
            format!("quant_bits = {}", self.detector.quant_bits),
            format!("exposure_gain = {}", self.detector.exposure_gain),
            format!("max_order = {}", self.max_order),
            format!("save_frames = {}", self.save_frames),
            format!("output_dir = {}", self.output_dir.display()),
        ]);
        lines.join("\n") + "\n"
    }
}
