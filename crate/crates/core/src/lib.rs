//! Threshold-free sky/cloud segmentation for nighttime whole-sky imagery.
//!
//! The pipeline extracts one discriminative color channel, over-segments it
//! into superpixels on a `[value, x, y]` feature, replaces each superpixel by
//! its mean value, and splits the superpixel means into two clusters with a
//! weighted 1-D k-means. The lower cluster is sky, the upper one is cloud.
//!
//! Alongside the pipeline the crate ships two thresholding baselines, the
//! confusion/ROC evaluation harness used for channel ranking and benchmark
//! tables, fisheye rectification by ray tracing, and dataset ingestion.

pub mod cli;
pub mod colorspace;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod imaging;
pub mod segmentation;
pub mod superpixel;
pub mod undistort;

pub use colorspace::{extract_channel, ChannelId};
pub use error::{Error, Result};
pub use imaging::{load_image, load_mask, save_mask, ChannelMap, CloudMask, RgbImage};
pub use segmentation::{segment, segment_fixed_gray, segment_otsu_rb, segment_weighted, Weighting};
pub use superpixel::{slic_oversegment, SlicParams, SuperpixelLabeling};
