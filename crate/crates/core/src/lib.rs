//! Tomographic reconstruction of 3D heatmaps from 2D slice evaluators.
//!
//! A volume is cut into stacks of parallel slices along a Fibonacci lattice
//! of directions, each slice is scored by an evaluator, and the profiles are
//! filtered and backprojected into a heatmap on the volume grid.

pub mod backprojection;
pub mod error;
pub mod evaluators;
pub mod filtering;
pub mod geometry;
pub mod phantom;
pub mod postprocess;
pub mod quality;
pub mod slicing;
pub mod volume;

pub use backprojection::{backproject, reconstruct, reconstruct_with, Heatmap3, ReconConfig, ReconMode};
pub use error::{Error, Result};
pub use evaluators::{Evaluator, EvaluatorKind, ExternalSpec, OutputShape};
pub use filtering::{CellAlignment, DerivativeMode};
pub use geometry::{fibonacci_lattice, make_frame, BasisPolicy, DirectionFrame, UnitDirection, Vec3};
pub use slicing::{extract_slice, extract_stack, Slice2, SliceStack};
pub use volume::{load_volume, save_volume, Volume3};
