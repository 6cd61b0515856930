use std::borrow::Cow;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use ndarray::Array2;

use super::frames_io::FrameWriter;
use super::spec::{ScenarioId, ScenarioSpec};
use crate::config::{CorrelationOrder, OpticalConfig};
use crate::correlate::{g_same_point, normalize_image, run_sweep, GhostImage, SweepPlan};
use crate::detect::bucket_signal;
use crate::error::{Error, Result, StageContext};
use crate::mask::ObjectMask;
use crate::metrics::{fidelity, fluctuation_from_blocks, m_obj, pearson, visibility, VisibilityReport};
use crate::pgm::write_pgm16;
use crate::propagate::direct_images;
use crate::rng::{stream_rng, Stream};
use crate::speckle::SpeckleGenerator;

pub const VERSION_TAG: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

/// Files written for one order (or one direct-imaging distance).
#[derive(Debug, Clone, PartialEq)]
pub struct OutputGroup {
    pub label: String,
    pub files: Vec<PathBuf>,
}

/// Per-order figures of merit.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderSummary {
    pub order: CorrelationOrder,
    pub visibility: VisibilityReport,
    pub fluctuation: Option<f64>,
    pub fidelity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectSummary {
    pub z3: f64,
    pub fidelity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NFactorialRow {
    pub order: u32,
    pub measured: f64,
    pub expected: f64,
}

impl NFactorialRow {
    pub fn relative_error(&self) -> f64 {
        (self.measured - self.expected).abs() / self.expected
    }
}

/// Record of one completed run.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub spec: ScenarioSpec,
    pub seed: u64,
    pub outputs: Vec<OutputGroup>,
    /// Summary tables and other run-level files.
    pub shared_files: Vec<PathBuf>,
    pub m_obj: Option<f64>,
    pub orders: Vec<OrderSummary>,
    pub direct: Vec<DirectSummary>,
    pub nfactorial: Vec<NFactorialRow>,
    pub wall_time: Duration,
    pub version: &'static str,
}

impl RunManifest {
    pub fn files(&self) -> impl Iterator<Item = &PathBuf> {
        self.outputs
            .iter()
            .flat_map(|g| g.files.iter())
            .chain(self.shared_files.iter())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "version: {}", self.version);
        let _ = writeln!(out, "seed: {}", self.seed);
        let _ = writeln!(out, "wall_time_s: {:.3}", self.wall_time.as_secs_f64());
        out.push_str("\n[spec]\n");
        out.push_str(&self.spec.to_config_text());
        out.push_str("\n[outputs]\n");
        for group in &self.outputs {
            for f in &group.files {
                let _ = writeln!(out, "{}: {}", group.label, f.display());
            }
        }
        for f in &self.shared_files {
            let _ = writeln!(out, "run: {}", f.display());
        }
        out
    }
}

/// Runs a scenario end to end and writes its artifacts into
/// `spec.output_dir`. Errors carry the name of the failing stage.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<RunManifest> {
    let started = Instant::now();
    let spec = spec.clone().validate().stage("configuration")?;
    let dir = spec.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e)).stage("output")?;
    let generator = SpeckleGenerator::new(&spec.config).stage("speckle")?;

    let mut manifest = RunManifest {
        seed: spec.config.seed,
        outputs: Vec::new(),
        shared_files: Vec::new(),
        m_obj: None,
        orders: Vec::new(),
        direct: Vec::new(),
        nfactorial: Vec::new(),
        wall_time: Duration::ZERO,
        version: VERSION_TAG,
        spec: spec.clone(),
    };

    match spec.scenario {
        ScenarioId::NFactorialCheck => {
            let per_frame = lattice_samples_per_frame(&spec.config);
            let rows = nfactorial_check(&spec.config, spec.frames * per_frame, spec.max_order)
                .stage("correlation")?;
            let path = dir.join("nfactorial.csv");
            write_text(&path, &nfactorial_csv(&rows)).stage("output")?;
            manifest.shared_files.push(path);
            manifest.nfactorial = rows;
        }
        ScenarioId::DirectImage => {
            let mask = spec.mask.build(&spec.config, &spec.slits).stage("mask")?;
            run_ghost_orders(&spec, &generator, &mask, &mut manifest)?;
            run_direct(&spec, &generator, &mask, &mut manifest)?;
        }
        _ => {
            let mask = spec.mask.build(&spec.config, &spec.slits).stage("mask")?;
            run_ghost_orders(&spec, &generator, &mask, &mut manifest)?;
        }
    }

    if spec.save_frames {
        let path = dir.join("frames.gifr");
        save_reference_frames(&spec, &generator, &path).stage("output")?;
        manifest.shared_files.push(path);
    }

    manifest.wall_time = started.elapsed();
    let path = dir.join("manifest.txt");
    write_text(&path, &manifest.to_text()).stage("output")?;
    manifest.shared_files.push(path);
    Ok(manifest)
}

/// Bucket reading and reference frame for frame `t`, after detection.
fn observe<'a>(
    spec: &ScenarioSpec,
    generator: &SpeckleGenerator,
    mask: &ObjectMask,
    t: usize,
) -> Result<(f64, Cow<'a, Array2<f64>>)> {
    let pitch2 = spec.config.pitch * spec.config.pitch;
    let (object, reference) = generator.arm_pair(t as u64)?;
    let mut frame = reference.intensity;
    let mut s = bucket_signal(&object.intensity, mask, spec.config.pitch)?;
    if !spec.detector.is_ideal() {
        // The bucket detector counts in the same units as one camera pixel.
        let seed = spec.config.seed;
        let mut rng = stream_rng(seed, Stream::ObjectDetector, t as u64);
        let (reading, _) = spec.detector.apply_scalar(s / pitch2, &mut rng);
        s = reading.max(0.0) * pitch2;
        let mut rng = stream_rng(seed, Stream::ReferenceDetector, t as u64);
        spec.detector.apply_frame(&mut frame, &mut rng);
    }
    Ok((s, Cow::Owned(frame)))
}

fn run_ghost_orders(
    spec: &ScenarioSpec,
    generator: &SpeckleGenerator,
    mask: &ObjectMask,
    manifest: &mut RunManifest,
) -> Result<()> {
    let cfg = &spec.config;
    let plan = SweepPlan {
        orders: spec.orders.clone(),
        blocks: spec.blocks,
        mode: spec.reduction,
    };
    let outcome = run_sweep(spec.frames, cfg.shape(), &plan, |t| observe(spec, generator, mask, t))
        .stage("correlation")?;

    let row = cross_section_row(mask);
    let mut summaries = Vec::with_capacity(spec.orders.len());
    for (k, img) in outcome.images.iter().enumerate() {
        let vis = visibility(img, mask, cfg).stage("metrics")?;
        let fluctuation = match outcome.block_images.get(k) {
            Some(blocks) if !blocks.is_empty() => Some(fluctuation_from_blocks(blocks).stage("metrics")?),
            _ => None,
        };
        let fid = fidelity(img, mask).stage("metrics")?;
        let normalized = normalize_image(img).stage("metrics")?;
        let label = order_label(img.order);
        let pgm = spec.output_dir.join(format!("ghost_{label}.pgm"));
        write_pgm16(&pgm, &normalized.gamma).stage("output")?;
        let csv = spec.output_dir.join(format!("cross_{label}.csv"));
        write_text(&csv, &cross_section_csv(img, &normalized, row, cfg.pitch)).stage("output")?;
        manifest.outputs.push(OutputGroup {
            label,
            files: vec![pgm, csv],
        });
        summaries.push(OrderSummary {
            order: img.order,
            visibility: vis,
            fluctuation,
            fidelity: fid,
        });
    }

    let cells = m_obj(mask, cfg);
    let path = spec.output_dir.join("summary.csv");
    write_text(&path, &summary_csv(&summaries, spec.frames, cells)).stage("output")?;
    manifest.shared_files.push(path);
    manifest.m_obj = Some(cells);
    manifest.orders = summaries;
    Ok(())
}

fn run_direct(
    spec: &ScenarioSpec,
    generator: &SpeckleGenerator,
    mask: &ObjectMask,
    manifest: &mut RunManifest,
) -> Result<()> {
    let images = direct_images(generator, spec.frames, mask, &spec.direct_distances).stage("propagation")?;
    let target = mask.intensity_transmission();
    let row = cross_section_row(mask);
    let mut table = String::from("z3_m,fidelity\n");
    for (i, (img, &z3)) in images.iter().zip(&spec.direct_distances).enumerate() {
        let r = pearson(img, &target).stage("metrics")?;
        let peak = img.iter().cloned().fold(0.0, f64::max);
        if !(peak > 0.0) {
            return Err(Error::AllZeroImage).stage("metrics");
        }
        let normalized = img.mapv(|v| v / peak);
        let label = format!("direct_{i}");
        let pgm = spec.output_dir.join(format!("{label}.pgm"));
        write_pgm16(&pgm, &normalized).stage("output")?;
        let mut csv = String::from("x_m,intensity,normalized\n");
        for (c, (v, n)) in img.row(row).iter().zip(normalized.row(row)).enumerate() {
            let _ = writeln!(csv, "{},{},{}", c as f64 * spec.config.pitch, v, n);
        }
        let csv_path = spec.output_dir.join(format!("cross_{label}.csv"));
        write_text(&csv_path, &csv).stage("output")?;
        manifest.outputs.push(OutputGroup {
            label,
            files: vec![pgm, csv_path],
        });
        let _ = writeln!(table, "{z3},{r}");
        manifest.direct.push(DirectSummary { z3, fidelity: r });
    }
    let path = spec.output_dir.join("direct_summary.csv");
    write_text(&path, &table).stage("output")?;
    manifest.shared_files.push(path);
    Ok(())
}

fn save_reference_frames(spec: &ScenarioSpec, generator: &SpeckleGenerator, path: &Path) -> Result<()> {
    let mut writer = FrameWriter::create(path, spec.config.shape(), spec.frames)?;
    // Only the reference frames are stored, so the bucket mask is irrelevant.
    let open = ObjectMask::uniform(&spec.config, 1.0)?;
    for t in 0..spec.frames {
        let (_, frame) = observe(spec, generator, &open, t)?;
        writer.push(&frame)?;
    }
    writer.finish(spec.config.seed)
}

/// Pixels one coherence length apart on every populated axis.
fn lattice_samples_per_frame(cfg: &OpticalConfig) -> usize {
    let stride = cfg.coherence_pixels().ceil().max(1.0) as usize;
    let rows = if cfg.ny > 1 { cfg.ny.div_ceil(stride) } else { 1 };
    rows * cfg.nx.div_ceil(stride)
}

/// Measures `<I^N>/<I>^N` for `N = 2..=max_order` from `samples` speckle
/// pixels taken one coherence length apart, against the thermal-light value
/// `N!`.
pub fn nfactorial_check(cfg: &OpticalConfig, samples: usize, max_order: u32) -> Result<Vec<NFactorialRow>> {
    if max_order < 2 {
        return Err(Error::RangeError {
            key: "max_order",
            value: max_order.to_string(),
            reason: "must be at least 2",
        });
    }
    let generator = SpeckleGenerator::new(cfg)?;
    let per_frame = lattice_samples_per_frame(cfg);
    let frames = samples.div_ceil(per_frame).max(1);
    let stride = cfg.coherence_pixels().ceil().max(1.0) as usize;
    let mut values = generator.ensemble(0, frames).pixel_samples(stride);
    values.truncate(samples);
    (2..=max_order)
        .map(|n| {
            Ok(NFactorialRow {
                order: n,
                measured: g_same_point(&values, n)?,
                expected: (1..=n).map(f64::from).product(),
            })
        })
        .collect()
}

pub fn order_label(order: CorrelationOrder) -> String {
    format!("N{}_n{}", order.order(), order.bucket_power())
}

/// Row through the middle of the object support (row 0 for line grids).
fn cross_section_row(mask: &ObjectMask) -> usize {
    mask.support_bounds()
        .map(|(r0, r1, _, _)| (r0 + r1) / 2)
        .unwrap_or(mask.shape().0 / 2)
}

fn cross_section_csv(img: &GhostImage, normalized: &GhostImage, row: usize, pitch: f64) -> String {
    let mut out = String::from("x_m,gamma,normalized\n");
    for (c, (g, n)) in img.gamma.row(row).iter().zip(normalized.gamma.row(row)).enumerate() {
        let _ = writeln!(out, "{},{},{}", c as f64 * pitch, g, n);
    }
    out
}

fn summary_csv(rows: &[OrderSummary], frames: usize, cells: f64) -> String {
    let mut out =
        String::from("N,n,frames,m_obj,visibility,gamma_in,gamma_out,fluctuation,fidelity\n");
    for r in rows {
        let fluct = r.fluctuation.map_or(String::new(), |f| f.to_string());
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.order.order(),
            r.order.bucket_power(),
            frames,
            cells,
            r.visibility.v,
            r.visibility.gamma_in,
            r.visibility.gamma_out,
            fluct,
            r.fidelity
        );
    }
    out
}

fn nfactorial_csv(rows: &[NFactorialRow]) -> String {
    let mut out = String::from("N,measured,expected,relative_error\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.order, r.measured, r.expected, r.relative_error());
    }
    out
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}
