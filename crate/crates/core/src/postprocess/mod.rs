//! Heatmap binarization, component matching and threshold selection.

pub mod components;
pub mod crossval;
pub mod metrics;
pub mod thresholds;

pub use components::{connected_components, BoundingBox, Component, ComponentSet, Connectivity, Mask};
pub use crossval::{monte_carlo_eval, CrossValConfig, CrossValReport, LabeledSample, SegmentationReport};
pub use metrics::{dice, match_and_score, GroundTruth, SampleScore};
pub use thresholds::{binarize, predicted_label, select_tau, select_tau_prime, BinarizationThresholds};
