//! Weakly labelled video datasets and leakage-aware classifier benchmarking.
//!
//! The pipeline turns per-frame detector output plus a video manifest into
//! image classification datasets ([`datasetgen`]), separates them either
//! frame-wise (k-fold) or video-wise ([`splitting`]), and evaluates both
//! handcrafted-feature classifiers ([`features`], [`classic`]) and a small
//! convolutional network ([`neural`]). [`synth`] generates corpora whose
//! consecutive frames are near-duplicates, which is enough to make frame-level
//! cross-validation look far better than a video-level held-out test.

// `!(x > 0.0)` is used on purpose to reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// Numeric kernels read more clearly with explicit indices.
#![allow(clippy::needless_range_loop)]

pub mod classic;
pub mod cli;
pub mod datasetgen;
pub mod error;
pub mod eval;
pub mod features;
pub mod image;
pub mod ingest;
pub mod neural;
pub mod splitting;
pub mod synth;

pub use error::{Error, Result};
