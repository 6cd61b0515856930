//! Two-arm lensless ghost imaging with pseudothermal light, reconstructed by
//! arbitrary-order normalized intensity correlations.
//!
//! The pipeline is: [`speckle`] synthesises independent thermal speckle
//! frames, [`detect`] turns the object-arm frame into a bucket reading and
//! models the cameras, [`correlate`] evaluates the N-th order correlation
//! image per reference pixel, and [`metrics`] scores the result. The
//! [`harness`] module ties these together into reproducible scenarios.

pub mod config;
pub mod correlate;
pub mod detect;
pub mod error;
mod fft;
pub mod harness;
pub mod mask;
pub mod metrics;
pub mod pgm;
pub mod propagate;
pub mod rng;
pub mod speckle;

pub use config::{coherence_area, validate_config, CorrelationOrder, OpticalConfig};
pub use correlate::{
    g_same_point, gamma_image, normalize_image, CorrAccumulator, GhostImage, ReductionMode,
    SweepPlan,
};
pub use detect::{bucket_signal, BucketSeries, DetectorModel};
pub use error::{Error, Result};
pub use mask::ObjectMask;
pub use speckle::{FrameEnsemble, FrameSource, SpeckleFrame, SpeckleGenerator};
