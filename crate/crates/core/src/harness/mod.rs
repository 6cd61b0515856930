//! Scenario files, frame persistence and end-to-end runs that write ghost
//! images, cross-sections and summary tables to disk.

mod config_file;
mod frames_io;
mod scenario;
mod spec;

pub use config_file::{parse_config, parse_length};
pub use frames_io::{decode_frames, read_frames, write_frames, FrameFile, FrameWriter, MAGIC, VERSION};
pub use scenario::{
    nfactorial_check, order_label, run_scenario, DirectSummary, NFactorialRow, OrderSummary,
    OutputGroup, RunManifest, VERSION_TAG,
};
pub use spec::{MaskSource, ScenarioId, ScenarioSpec, SlitGeometry, MIN_FRAMES};
