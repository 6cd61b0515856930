//! Normalized N-th order intensity correlation between a bucket signal `s`
//! and reference pixels `i(y)`:
//!
//! ```text
//! γ(y) = < (s/n)^n (i(y)/(N-n))^(N-n) > / ( <s/n>^n <i(y)/(N-n)>^(N-n) )
//!      = < (s/ŝ)^n (i(y)/î(y))^(N-n) >,      ŝ = <s>, î(y) = <i(y)>
//! ```
//!
//! The divisors cancel, and dividing by the means before raising to the
//! powers keeps every term O(1); raw moments of order 20 would overflow.
//! Evaluation therefore takes two passes over the frames: one to fix the
//! means, one to average the normalized products. Both passes use
//! compensated summation and mergeable accumulators, so frames can be
//! sharded across workers.

use std::borrow::Cow;

use ndarray::Array2;
use rayon::prelude::*;

use crate::config::CorrelationOrder;
use crate::detect::BucketSeries;
use crate::error::{Error, Result};
use crate::speckle::FrameSource;

/// Frames per shard. Fixed so that the merge tree, and hence every rounding
/// step, is independent of the number of worker threads.
pub const SHARD_FRAMES: usize = 64;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.comp += other.comp;
    }

    fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

fn merge_grids(a: &mut Array2<CompensatedSum>, b: &Array2<CompensatedSum>) {
    a.zip_mut_with(b, |x, y| x.merge(y));
}

/// Which of the two passes an accumulator is collecting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pass {
    Mean,
    Cross,
}

/// Running sums of `s` and `i(y)` for the first pass.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanAccumulator {
    count: usize,
    s: CompensatedSum,
    i: Array2<CompensatedSum>,
}

impl MeanAccumulator {
    pub fn new(shape: (usize, usize)) -> Self {
        MeanAccumulator {
            count: 0,
            s: CompensatedSum::default(),
            i: Array2::default(shape),
        }
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn accumulate(&mut self, s: f64, frame: &Array2<f64>) -> Result<()> {
        check_shape(self.i.dim(), frame.dim())?;
        self.count += 1;
        self.s.add(s);
        self.i.zip_mut_with(frame, |acc, &v| acc.add(v));
        Ok(())
    }

    pub fn merge(&mut self, other: &MeanAccumulator) -> Result<()> {
        if self.i.dim() != other.i.dim() {
            return Err(Error::IncompatibleAccumulators("grid shapes differ"));
        }
        self.count += other.count;
        self.s.merge(&other.s);
        merge_grids(&mut self.i, &other.i);
        Ok(())
    }

    /// Freezes the means, rejecting zero-mean buckets or pixels.
    pub fn means(&self) -> Result<Means> {
        if self.count == 0 {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        let n = self.count as f64;
        let s_mean = self.s.value() / n;
        if !(s_mean > 0.0) {
            return Err(Error::ZeroMean("bucket signal"));
        }
        let i_mean = self.i.mapv(|acc| acc.value() / n);
        if let Some(((row, col), _)) = i_mean.indexed_iter().find(|(_, &v)| !(v > 0.0)) {
            return Err(Error::ZeroMeanPixel { row, col });
        }
        Ok(Means { s_mean, i_mean })
    }
}

/// Frozen first-pass means `ŝ` and `î(y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Means {
    pub s_mean: f64,
    pub i_mean: Array2<f64>,
}

impl Means {
    fn normalize(&self, frame: &Array2<f64>) -> Array2<f64> {
        let mut out = frame.clone();
        out.zip_mut_with(&self.i_mean, |v, &m| *v /= m);
        out
    }
}

/// Streaming estimator for one correlation order.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrAccumulator {
    order: CorrelationOrder,
    means: MeanAccumulator,
    frozen: Option<Means>,
    cross_count: usize,
    cross: Array2<CompensatedSum>,
}

impl CorrAccumulator {
    /// Empty accumulator in the mean pass.
    pub fn new(order: CorrelationOrder, shape: (usize, usize)) -> Self {
        CorrAccumulator {
            order,
            means: MeanAccumulator::new(shape),
            frozen: None,
            cross_count: 0,
            cross: Array2::default(shape),
        }
    }

    /// Empty accumulator already in the cross pass.
    pub fn with_means(order: CorrelationOrder, means: Means) -> Self {
        let shape = means.i_mean.dim();
        CorrAccumulator {
            order,
            means: MeanAccumulator::new(shape),
            frozen: Some(means),
            cross_count: 0,
            cross: Array2::default(shape),
        }
    }

    pub fn order(&self) -> CorrelationOrder {
        self.order
    }

    pub fn pass(&self) -> Pass {
        if self.frozen.is_some() {
            Pass::Cross
        } else {
            Pass::Mean
        }
    }

    /// Frames seen in the current pass.
    pub fn count(&self) -> usize {
        match self.pass() {
            Pass::Mean => self.means.count,
            Pass::Cross => self.cross_count,
        }
    }

    pub fn accumulate(&mut self, s: f64, frame: &Array2<f64>) -> Result<()> {
        match &self.frozen {
            None => self.means.accumulate(s, frame),
            Some(means) => {
                check_shape(means.i_mean.dim(), frame.dim())?;
                let ratios = means.normalize(frame);
                let s_ratio = s / means.s_mean;
                self.accumulate_ratios(s_ratio, &ratios);
                Ok(())
            }
        }
    }

    fn accumulate_ratios(&mut self, s_ratio: f64, ratios: &Array2<f64>) {
        let weight = s_ratio.powi(self.order.bucket_power() as i32);
        let power = self.order.reference_power() as i32;
        self.cross_count += 1;
        self.cross
            .zip_mut_with(ratios, |acc, &r| acc.add(weight * r.powi(power)));
    }

    /// Ends the mean pass.
    pub fn freeze_means(&mut self) -> Result<()> {
        if self.frozen.is_some() {
            return Err(Error::PassOrderViolation("means are already frozen"));
        }
        self.frozen = Some(self.means.means()?);
        Ok(())
    }

    pub fn means(&self) -> Option<&Means> {
        self.frozen.as_ref()
    }

    pub fn merge(mut self, other: &CorrAccumulator) -> Result<Self> {
        if self.order != other.order {
            return Err(Error::IncompatibleAccumulators("orders differ"));
        }
        if self.pass() != other.pass() {
            return Err(Error::IncompatibleAccumulators("passes differ"));
        }
        if self.cross.dim() != other.cross.dim() {
            return Err(Error::IncompatibleAccumulators("grid shapes differ"));
        }
        if self.frozen != other.frozen {
            return Err(Error::IncompatibleAccumulators("frozen means differ"));
        }
        self.means.merge(&other.means)?;
        self.cross_count += other.cross_count;
        merge_grids(&mut self.cross, &other.cross);
        Ok(self)
    }

    pub fn finalize(&self) -> Result<GhostImage> {
        if self.frozen.is_none() {
            return Err(Error::PassOrderViolation(
                "finalize called before the cross pass",
            ));
        }
        if self.cross_count < 2 {
            return Err(Error::InsufficientSamples {
                needed: 2,
                got: self.cross_count,
            });
        }
        let n = self.cross_count as f64;
        let gamma = self.cross.mapv(|acc| acc.value() / n);
        if gamma.iter().any(|v| !v.is_finite()) {
            return Err(Error::RangeError {
                key: "gamma",
                value: "non-finite".into(),
                reason: "correlation overflowed",
            });
        }
        Ok(GhostImage {
            gamma,
            order: self.order,
            frames_used: self.cross_count,
        })
    }
}

/// Per-pixel normalized correlation `γ(y)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GhostImage {
    pub gamma: Array2<f64>,
    pub order: CorrelationOrder,
    pub frames_used: usize,
}

impl GhostImage {
    pub fn max(&self) -> f64 {
        self.gamma.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Divides by the maximum so the brightest pixels read exactly 1.
pub fn normalize_image(img: &GhostImage) -> Result<GhostImage> {
    let max = img.max();
    if !(max > 0.0) {
        return Err(Error::AllZeroImage);
    }
    Ok(GhostImage {
        gamma: img.gamma.mapv(|v| if v == max { 1.0 } else { v / max }),
        ..img.clone()
    })
}

/// Same-point normalized moment `<I^N> / <I>^N`.
pub fn g_same_point(samples: &[f64], order: u32) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: samples.len(),
        });
    }
    let mut mean = CompensatedSum::default();
    samples.iter().for_each(|&x| mean.add(x));
    let mean = mean.value() / samples.len() as f64;
    if !(mean > 0.0) {
        return Err(Error::ZeroMean("samples"));
    }
    let mut moment = CompensatedSum::default();
    samples
        .iter()
        .for_each(|&x| moment.add((x / mean).powi(order as i32)));
    Ok(moment.value() / samples.len() as f64)
}

/// How shard results are combined.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum ReductionMode {
    /// Shards merged in frame order: output bits independent of threading.
    #[default]
    Fixed,
    /// Work-stealing reduction tree; may differ in the last bits run to run.
    Dynamic,
}

/// What a two-pass sweep should compute.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub orders: Vec<CorrelationOrder>,
    /// Number of contiguous frame blocks that also get their own estimate
    /// (for fluctuation measurements); 0 for none. Frames beyond the last
    /// full block only enter the whole-ensemble estimate.
    pub blocks: usize,
    pub mode: ReductionMode,
}

impl SweepPlan {
    pub fn single(order: CorrelationOrder) -> Self {
        SweepPlan {
            orders: vec![order],
            blocks: 0,
            mode: ReductionMode::Fixed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub buckets: BucketSeries,
    /// One whole-ensemble image per planned order.
    pub images: Vec<GhostImage>,
    /// `block_images[k][b]`: order `k`, block `b`.
    pub block_images: Vec<Vec<GhostImage>>,
}

/// Per-shard first-pass state.
#[derive(Clone)]
struct MeanShard {
    first_frame: usize,
    buckets: Vec<f64>,
    global: MeanAccumulator,
    blocks: Vec<Option<MeanAccumulator>>,
}

impl MeanShard {
    fn merge(mut self, other: MeanShard) -> Result<MeanShard> {
        self.global.merge(&other.global)?;
        for (a, b) in self.blocks.iter_mut().zip(other.blocks) {
            match (a.as_mut(), b) {
                (Some(a), Some(b)) => a.merge(&b)?,
                (None, Some(b)) => *a = Some(b),
                _ => {}
            }
        }
        // Keep bucket values in frame order whatever the merge order.
        if other.first_frame < self.first_frame {
            let mut buckets = other.buckets;
            buckets.extend(self.buckets);
            self.buckets = buckets;
            self.first_frame = other.first_frame;
        } else {
            self.buckets.extend(other.buckets);
        }
        Ok(self)
    }
}

/// Per-shard second-pass state.
#[derive(Clone)]
struct CrossShard {
    global: Vec<CorrAccumulator>,
    blocks: Vec<Vec<Option<CorrAccumulator>>>,
}

impl CrossShard {
    fn merge(mut self, other: CrossShard) -> Result<CrossShard> {
        for (a, b) in self.global.iter_mut().zip(&other.global) {
            *a = a.clone().merge(b)?;
        }
        for (row_a, row_b) in self.blocks.iter_mut().zip(other.blocks) {
            for (a, b) in row_a.iter_mut().zip(row_b) {
                match (a.take(), b) {
                    (Some(x), Some(y)) => *a = Some(x.merge(&y)?),
                    (x, y) => *a = x.or(y),
                }
            }
        }
        Ok(self)
    }
}

fn reduce_shards<T, F, M>(
    frames: usize,
    mode: ReductionMode,
    make: F,
    merge: M,
) -> Result<T>
where
    T: Send,
    F: Fn(std::ops::Range<usize>) -> Result<T> + Sync,
    M: Fn(T, T) -> Result<T> + Sync,
{
    let shards = frames.div_ceil(SHARD_FRAMES);
    let range = |k: usize| k * SHARD_FRAMES..((k + 1) * SHARD_FRAMES).min(frames);
    match mode {
        ReductionMode::Fixed => {
            // Bounded waves keep memory flat; merging is strictly sequential.
            let wave = rayon::current_num_threads().max(1) * 2;
            let mut total: Option<T> = None;
            for start in (0..shards).step_by(wave) {
                let results: Vec<T> = (start..(start + wave).min(shards))
                    .into_par_iter()
                    .map(|k| make(range(k)))
                    .collect::<Result<_>>()?;
                for r in results {
                    total = Some(match total {
                        None => r,
                        Some(t) => merge(t, r)?,
                    });
                }
            }
            total.ok_or(Error::InsufficientSamples { needed: 1, got: 0 })
        }
        ReductionMode::Dynamic => (0..shards)
            .into_par_iter()
            .map(|k| make(range(k)).map(Some))
            .try_reduce(|| None, |a, b| match (a, b) {
                (Some(a), Some(b)) => merge(a, b).map(Some),
                (a, b) => Ok(a.or(b)),
            })?
            .ok_or(Error::InsufficientSamples { needed: 1, got: 0 }),
    }
}

/// Two-pass evaluation of every planned order over frames `0..frames`.
///
/// `observe(t)` returns the bucket reading and the reference frame for frame
/// `t`; it is called twice per frame and must be deterministic. The second
/// pass reuses the bucket values recorded in the first.
pub fn run_sweep<'a, F>(
    frames: usize,
    shape: (usize, usize),
    plan: &SweepPlan,
    observe: F,
) -> Result<SweepOutcome>
where
    F: Fn(usize) -> Result<(f64, Cow<'a, Array2<f64>>)> + Sync,
{
    if plan.orders.is_empty() {
        return Err(Error::RangeError {
            key: "orders",
            value: "[]".into(),
            reason: "at least one order is required",
        });
    }
    if frames < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: frames,
        });
    }
    let block_len = if plan.blocks > 0 { frames / plan.blocks } else { 0 };
    if plan.blocks > 0 && block_len < 2 {
        return Err(Error::TooFewFrames {
            frames,
            blocks: plan.blocks,
        });
    }
    let block_of = |t: usize| {
        (plan.blocks > 0 && t < block_len * plan.blocks).then(|| t / block_len)
    };

    let pass1 = reduce_shards(
        frames,
        plan.mode,
        |range| {
            let mut shard = MeanShard {
                first_frame: range.start,
                buckets: Vec::with_capacity(range.len()),
                global: MeanAccumulator::new(shape),
                blocks: vec![None; plan.blocks],
            };
            for t in range {
                let (s, frame) = observe(t)?;
                shard.global.accumulate(s, &frame)?;
                if let Some(b) = block_of(t) {
                    shard.blocks[b]
                        .get_or_insert_with(|| MeanAccumulator::new(shape))
                        .accumulate(s, &frame)?;
                }
                shard.buckets.push(s);
            }
            Ok(shard)
        },
        MeanShard::merge,
    )?;

    let global_means = pass1.global.means()?;
    let block_means = pass1
        .blocks
        .iter()
        .map(|b| b.as_ref().expect("every block holds frames").means())
        .collect::<Result<Vec<_>>>()?;
    let buckets = BucketSeries::new(pass1.buckets)?;
    let s_values = buckets.values();

    let pass2 = reduce_shards(
        frames,
        plan.mode,
        |range| {
            let mut shard = CrossShard {
                global: plan
                    .orders
                    .iter()
                    .map(|&o| CorrAccumulator::with_means(o, global_means.clone()))
                    .collect(),
                blocks: vec![vec![None; plan.blocks]; plan.orders.len()],
            };
            for t in range {
                let (_, frame) = observe(t)?;
                check_shape(shape, frame.dim())?;
                let s = s_values[t];
                let ratios = global_means.normalize(&frame);
                let s_ratio = s / global_means.s_mean;
                for acc in &mut shard.global {
                    acc.accumulate_ratios(s_ratio, &ratios);
                }
                if let Some(b) = block_of(t) {
                    let means = &block_means[b];
                    let ratios = means.normalize(&frame);
                    let s_ratio = s / means.s_mean;
                    for (k, &order) in plan.orders.iter().enumerate() {
                        shard.blocks[k][b]
                            .get_or_insert_with(|| CorrAccumulator::with_means(order, means.clone()))
                            .accumulate_ratios(s_ratio, &ratios);
                    }
                }
            }
            Ok(shard)
        },
        CrossShard::merge,
    )?;

    let images = pass2
        .global
        .iter()
        .map(CorrAccumulator::finalize)
        .collect::<Result<Vec<_>>>()?;
    let block_images = pass2
        .blocks
        .iter()
        .map(|row| {
            row.iter()
                .map(|acc| acc.as_ref().expect("every block holds frames").finalize())
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepOutcome {
        buckets,
        images,
        block_images,
    })
}

/// Batch evaluation of one order from recorded bucket and reference data.
pub fn gamma_image<S: FrameSource + ?Sized>(
    buckets: &BucketSeries,
    ref_frames: &S,
    order: CorrelationOrder,
) -> Result<GhostImage> {
    let out = gamma_sweep(buckets, ref_frames, &SweepPlan::single(order))?;
    Ok(out.images.into_iter().next().expect("one order planned"))
}

/// [`run_sweep`] over recorded data.
pub fn gamma_sweep<S: FrameSource + ?Sized>(
    buckets: &BucketSeries,
    ref_frames: &S,
    plan: &SweepPlan,
) -> Result<SweepOutcome> {
    if buckets.len() != ref_frames.frame_count() {
        return Err(Error::LengthMismatch {
            what: "bucket series",
            left: buckets.len(),
            right: ref_frames.frame_count(),
        });
    }
    let s = buckets.values();
    run_sweep(buckets.len(), ref_frames.shape(), plan, |t| {
        Ok((s[t], ref_frames.intensity(t)?))
    })
}

fn check_shape(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}
