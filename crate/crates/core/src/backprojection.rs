//! Filtered backprojection over a Fibonacci set of plane normals.
//!
//! For every direction the volume is sliced into a stack, each slice is
//! measured, and the resulting profile (optionally second-differenced along
//! the stack) is accumulated into every output voxel whose plane offset
//! falls inside `[-1, 1]`:
//!
//! ```text
//! G(x) = c * 4pi / L * sum_l  profile_l(x . n_l [, x . u_l, x . v_l])
//! ```
//!
//! Accumulation is a gather: each output voxel adds its directions in index
//! order, so results do not depend on the thread count.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluators::{evaluate_builtin, EvaluationResult, Evaluator, EvaluatorKind, ExternalEvaluator};
use crate::filtering::{second_difference_grid, unfiltered_profile, CellAlignment, DerivativeMode, Profile};
use crate::geometry::{fibonacci_lattice, make_frame, normalized, BasisPolicy, DirectionFrame};
use crate::slicing::{extract_stack, Slice2, DEFAULT_SLICE_SIZE};
use crate::volume::Volume3;

/// A reconstructed signed heatmap on the output grid.
pub type Heatmap3 = Volume3;

/// Profile memory allowed per accumulation batch.
const BATCH_BYTES: usize = 512 << 20;

/// Normalization of the odd-dimension inversion formula, `-1/(8 pi^2)`.
pub fn default_c_norm() -> f64 {
    -1.0 / (8.0 * PI * PI)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconMode {
    /// Second-differenced scalar profiles.
    Tonno,
    /// Unfiltered grid profiles, averaged over directions.
    AveragedCam,
    /// Per-cell second-differenced grid profiles.
    TomographicCam,
}

impl ReconMode {
    pub fn default_directions(self) -> usize {
        match self {
            ReconMode::Tonno => 2000,
            ReconMode::AveragedCam | ReconMode::TomographicCam => 1000,
        }
    }
}

impl fmt::Display for ReconMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReconMode::Tonno => "tonno",
            ReconMode::AveragedCam => "avgcam",
            ReconMode::TomographicCam => "tomocam",
        })
    }
}

impl FromStr for ReconMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tonno" => Ok(ReconMode::Tonno),
            "avgcam" => Ok(ReconMode::AveragedCam),
            "tomocam" => Ok(ReconMode::TomographicCam),
            other => Err(Error::InvalidParameter(format!(
                "unknown mode {other:?}; expected tonno, avgcam or tomocam"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconConfig {
    /// Slices per direction inside `[-1, 1]` (`M`); two padding slices are added.
    pub samples: usize,
    /// Number of directions (`L`).
    pub directions: usize,
    /// Output grid; `None` reuses the input shape.
    pub output_shape: Option<[usize; 3]>,
    pub slice_shape: [usize; 2],
    pub derivative: DerivativeMode,
    /// Placement of evaluator grid cells in the slice plane.
    #[serde(default)]
    pub cell_alignment: CellAlignment,
    pub c_norm: f64,
    pub basis: BasisPolicy,
    /// Worker threads; 0 uses every available core.
    pub threads: usize,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            samples: 100,
            directions: 2000,
            output_shape: None,
            slice_shape: [DEFAULT_SLICE_SIZE, DEFAULT_SLICE_SIZE],
            derivative: DerivativeMode::PaperScale,
            cell_alignment: CellAlignment::Corners,
            c_norm: default_c_norm(),
            basis: BasisPolicy::Deterministic,
            threads: 0,
        }
    }
}

impl ReconConfig {
    pub fn for_mode(mode: ReconMode) -> Self {
        Self {
            directions: mode.default_directions(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples < 3 {
            return Err(Error::InvalidParameter(format!(
                "M must be >= 3, got {}",
                self.samples
            )));
        }
        if self.directions < 2 {
            return Err(Error::InvalidParameter(format!(
                "L must be >= 2, got {}",
                self.directions
            )));
        }
        if let Some(shape) = self.output_shape {
            if shape.iter().any(|&n| n < 2) {
                return Err(Error::InvalidParameter(format!(
                    "output axes must be >= 2, got {shape:?}"
                )));
            }
        }
        if self.slice_shape.iter().any(|&n| n < 2) {
            return Err(Error::InvalidParameter(format!(
                "slice axes must be >= 2, got {:?}",
                self.slice_shape
            )));
        }
        if !self.c_norm.is_finite() {
            return Err(Error::InvalidParameter("c_norm must be finite".into()));
        }
        Ok(())
    }

    /// Frames for every direction of a run.
    pub fn frames(&self) -> Result<Vec<DirectionFrame>> {
        Ok(fibonacci_lattice(self.directions)?
            .into_iter()
            .enumerate()
            .map(|(l, n)| make_frame(n, self.basis, l as u64))
            .collect())
    }

    /// `c * |S^2| / L`.
    pub fn weight(&self) -> f64 {
        self.c_norm * 4.0 * PI / self.directions as f64
    }
}

fn build_profile(mode: ReconMode, measured: &EvaluationResult, cfg: &ReconConfig) -> Result<Profile> {
    let profile = match mode {
        ReconMode::AveragedCam => unfiltered_profile(&measured.values, measured.cells)?,
        ReconMode::Tonno | ReconMode::TomographicCam => {
            second_difference_grid(&measured.values, measured.cells, cfg.derivative)?
        }
    };
    profile.with_alignment(cfg.cell_alignment, cfg.slice_shape)
}

fn check_channels(volumes: &[Volume3]) -> Result<[usize; 3]> {
    let first = volumes
        .first()
        .ok_or_else(|| Error::InvalidParameter("need at least one input volume".into()))?;
    if let Some(v) = volumes.iter().find(|v| v.shape() != first.shape()) {
        return Err(Error::ShapeMismatch(format!(
            "channel shapes differ: {:?} vs {:?}",
            first.shape(),
            v.shape()
        )));
    }
    Ok(first.shape())
}

fn stacks_for(volumes: &[Volume3], frame: &DirectionFrame, cfg: &ReconConfig) -> Result<Vec<Vec<Slice2>>> {
    let [h, w] = cfg.slice_shape;
    volumes
        .iter()
        .map(|v| extract_stack(v, frame, cfg.samples, h, w).map(|s| s.slices))
        .collect()
}

/// Pending state for an external session: the direction already submitted.
struct ExternalFeed<'a> {
    session: &'a mut ExternalEvaluator,
    submitted: Option<usize>,
}

impl ExternalFeed<'_> {
    fn submit(&mut self, volumes: &[Volume3], frames: &[DirectionFrame], l: usize, cfg: &ReconConfig) -> Result<()> {
        let stacks = stacks_for(volumes, &frames[l], cfg)?;
        let refs: Vec<&[Slice2]> = stacks.iter().map(Vec::as_slice).collect();
        self.session.submit(&refs)?;
        self.submitted = Some(l);
        Ok(())
    }

    /// Measures directions in `range` in order, keeping one request in
    /// flight while the next stack is extracted.
    fn measure(
        &mut self,
        volumes: &[Volume3],
        frames: &[DirectionFrame],
        range: std::ops::Range<usize>,
        cfg: &ReconConfig,
    ) -> Result<Vec<EvaluationResult>> {
        let mut out = Vec::with_capacity(range.len());
        for l in range {
            if self.submitted != Some(l) {
                self.submit(volumes, frames, l, cfg)?;
            }
            let next = if l + 1 < frames.len() {
                Some(stacks_for(volumes, &frames[l + 1], cfg)?)
            } else {
                None
            };
            out.push(self.session.collect()?);
            self.submitted = None;
            if let Some(stacks) = next {
                let refs: Vec<&[Slice2]> = stacks.iter().map(Vec::as_slice).collect();
                self.session.submit(&refs)?;
                self.submitted = Some(l + 1);
            }
        }
        Ok(out)
    }
}

enum Source<'a> {
    Builtin(&'a EvaluatorKind),
    External(ExternalFeed<'a>),
}

impl Source<'_> {
    fn measure(
        &mut self,
        volumes: &[Volume3],
        frames: &[DirectionFrame],
        range: std::ops::Range<usize>,
        cfg: &ReconConfig,
    ) -> Result<Vec<EvaluationResult>> {
        match self {
            Source::Builtin(kind) => frames[range]
                .par_iter()
                .map(|frame| {
                    let stacks = stacks_for(volumes, frame, cfg)?;
                    evaluate_builtin(kind, &stacks[0])
                })
                .collect(),
            Source::External(feed) => feed.measure(volumes, frames, range, cfg),
        }
    }
}

/// Runs a reconstruction with an already opened evaluator. `volumes` holds
/// one volume per channel (exactly one for built-in evaluators).
pub fn reconstruct_with(
    mode: ReconMode,
    volumes: &[Volume3],
    evaluator: &mut Evaluator,
    cfg: &ReconConfig,
) -> Result<Heatmap3> {
    cfg.validate()?;
    let in_shape = check_channels(volumes)?;
    let cells = evaluator.output().cells();
    if mode == ReconMode::Tonno && cells != [1, 1] {
        return Err(Error::InvalidParameter(format!(
            "scalar reconstruction needs a scalar evaluator, got a {}x{} grid",
            cells[0], cells[1]
        )));
    }
    let [h, w] = cfg.slice_shape;
    let mut source = match evaluator {
        Evaluator::Builtin(kind) => {
            kind.validate(h, w)?;
            if volumes.len() != 1 {
                return Err(Error::InvalidParameter(format!(
                    "built-in evaluator {kind} is single-channel, got {} channels",
                    volumes.len()
                )));
            }
            Source::Builtin(kind)
        }
        Evaluator::External(session) => {
            let hs = session.handshake();
            if [hs.h, hs.w] != cfg.slice_shape || hs.c != volumes.len() {
                return Err(Error::ShapeMismatch(format!(
                    "session negotiated {}x{}x{} slices, run needs {}x{}x{}",
                    hs.c,
                    hs.h,
                    hs.w,
                    volumes.len(),
                    h,
                    w
                )));
            }
            Source::External(ExternalFeed {
                session,
                submitted: None,
            })
        }
    };
    let out_shape = cfg.output_shape.unwrap_or(in_shape);
    let frames = cfg.frames()?;

    let mut builder = rayon::ThreadPoolBuilder::new();
    if cfg.threads > 0 {
        builder = builder.num_threads(cfg.threads);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;

    pool.install(|| {
        let per_direction = cfg.samples * cells[0] * cells[1] * std::mem::size_of::<f64>();
        let batch = (BATCH_BYTES / per_direction.max(1)).clamp(1, frames.len());
        let mut acc = vec![0f64; out_shape.iter().product()];
        let mut start = 0;
        while start < frames.len() {
            let end = (start + batch).min(frames.len());
            let profiles = source
                .measure(volumes, &frames, start..end, cfg)?
                .iter()
                .map(|m| build_profile(mode, m, cfg))
                .collect::<Result<Vec<_>>>()?;
            accumulate(&mut acc, out_shape, &frames[start..end], &profiles, mode);
            start = end;
        }
        let weight = cfg.weight();
        let data = acc.into_iter().map(|v| (v * weight) as f32).collect();
        Volume3::new(out_shape, data)
    })
}

/// Backprojects precomputed profiles onto a grid of `shape`, scaled by
/// `c_norm * 4pi / frames.len()`. Accepts any number of directions, including
/// one.
pub fn backproject(
    shape: [usize; 3],
    frames: &[DirectionFrame],
    profiles: &[Profile],
    mode: ReconMode,
    c_norm: f64,
) -> Result<Heatmap3> {
    if frames.is_empty() || frames.len() != profiles.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} frames vs {} profiles",
            frames.len(),
            profiles.len()
        )));
    }
    if mode == ReconMode::Tonno {
        if let Some(p) = profiles.iter().find(|p| p.cells() != [1, 1]) {
            return Err(Error::InvalidParameter(format!(
                "scalar backprojection got a {:?} grid profile",
                p.cells()
            )));
        }
    }
    let mut acc = vec![0f64; shape.iter().product()];
    accumulate(&mut acc, shape, frames, profiles, mode);
    let weight = c_norm * 4.0 * PI / frames.len() as f64;
    Volume3::new(shape, acc.into_iter().map(|v| (v * weight) as f32).collect())
}

/// Adds every profile into its voxels, one output row per task. Within a
/// voxel, directions are added in index order.
fn accumulate(acc: &mut [f64], shape: [usize; 3], frames: &[DirectionFrame], profiles: &[Profile], mode: ReconMode) {
    let [d, h, w] = shape;
    let grid = mode != ReconMode::Tonno;
    acc.par_chunks_mut(w).enumerate().for_each(|(row, out)| {
        let (i, j) = (row / h, row % h);
        let xi = normalized(i, d);
        let xj = normalized(j, h);
        for (frame, profile) in frames.iter().zip(profiles) {
            let n = frame.n.vec();
            let base_s = xi * n.x + xj * n.y;
            if grid {
                let base_u = xi * frame.u.x + xj * frame.u.y;
                let base_v = xi * frame.v.x + xj * frame.v.y;
                for (k, slot) in out.iter_mut().enumerate() {
                    let xk = normalized(k, w);
                    *slot += profile.at_grid(base_s + xk * n.z, base_u + xk * frame.u.z, base_v + xk * frame.v.z);
                }
            } else {
                for (k, slot) in out.iter_mut().enumerate() {
                    *slot += profile.at(base_s + normalized(k, w) * n.z);
                }
            }
        }
    });
}

/// Opens `kind`, reconstructs a single-channel volume and closes the session.
pub fn reconstruct(mode: ReconMode, volume: &Volume3, kind: &EvaluatorKind, cfg: &ReconConfig) -> Result<Heatmap3> {
    let [h, w] = cfg.slice_shape;
    let mut evaluator = Evaluator::open(kind, h, w, 1)?;
    let out = reconstruct_with(mode, std::slice::from_ref(volume), &mut evaluator, cfg);
    let closed = evaluator.close();
    let out = out?;
    closed?;
    Ok(out)
}

/// Second-differenced scalar profiles, backprojected.
pub fn reconstruct_scalar(volume: &Volume3, kind: &EvaluatorKind, cfg: &ReconConfig) -> Result<Heatmap3> {
    reconstruct(ReconMode::Tonno, volume, kind, cfg)
}

/// Grid profiles averaged over directions without filtering.
pub fn reconstruct_averaged_cam(volume: &Volume3, kind: &EvaluatorKind, cfg: &ReconConfig) -> Result<Heatmap3> {
    reconstruct(ReconMode::AveragedCam, volume, kind, cfg)
}

/// Grid profiles second-differenced per cell, then backprojected.
pub fn reconstruct_tomographic_cam(volume: &Volume3, kind: &EvaluatorKind, cfg: &ReconConfig) -> Result<Heatmap3> {
    reconstruct(ReconMode::TomographicCam, volume, kind, cfg)
}
