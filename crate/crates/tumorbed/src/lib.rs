//! Tumor bed estimation from tiled slide classification.
//!
//! The pipeline mirrors a clinical slide-analysis workflow: a slide raster is
//! thresholded in HSV space to find tissue, tiled with a sliding window, each
//! tile is scored by a pluggable patch classifier, overlapping scores are
//! averaged into a heatmap, the heatmap is binarized, and the convex hull of
//! the positive cells yields the tumor bed. The bed's extent is summarized as
//! `d_prim = sqrt(d1 * d2)` where `d1` is the longest internal diagonal of the
//! hull and `d2` the longest chord perpendicular to it.
//!
//! Modules:
//! - [`geometry`]: convex hulls, diameters, perpendicular chords, extents.
//! - [`imaging`]: HSV thresholding, tile grids, masks, rasterization.
//! - [`inference`]: tile scoring, stride-vote heatmaps, bed prediction.
//! - [`metrics`]: Dice, confusion matrices, cohort evaluation.
//! - [`mining`]: mini-batch k-means negative sampling and class balancing.
//! - [`synth`]: seeded synthetic slides and a ground-truth oracle classifier.
//! - [`formats`]: on-disk formats shared by the CLI and external scorers.

pub mod error;
pub mod formats;
pub mod geometry;
pub mod imaging;
pub mod inference;
pub mod metrics;
pub mod mining;
pub mod synth;

#[cfg(not(target_arch = "wasm32"))]
pub mod proto;

pub use error::{Error, Result};
