//! DAPNet: RGB-thermal object tracking with dense feature aggregation and
//! train-time channel pruning.
//!
//! The network runs one shared convolutional backbone over the RGB and the
//! thermal patch, fuses all three stages of both modalities with a chain of
//! 1x1-convolution aggregation blocks, prunes the fused channels during
//! training by weighted random selection, and classifies target versus
//! background with per-domain fc6 branches. Tracking is by detection:
//! Gaussian candidates around the previous state are scored and the best
//! one wins.

pub mod aggregation;
pub mod backbone;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod head;
pub mod image;
pub mod layers;
pub mod model;
pub mod pruning;
pub mod real;
pub mod sampling;
pub mod synth;
pub mod training;

pub use error::{DapError, Result};
pub use geometry::{center_distance, iou, state_to_box, BBox, FeatureMap, TargetState};
pub use real::Real;
pub mod tracking;
