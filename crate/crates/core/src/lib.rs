//! Log-polar pre-processing for image classifiers.
//!
//! The crate resamples Cartesian images onto a grid that is uniform in angle
//! and in log-radius about a fixed centre, so that rotation about the centre
//! becomes a circular column shift and scaling becomes a row shift. Around
//! that transform it provides an MNIST IDX reader, Euclidean warps, a small
//! convolutional network trained from scratch, and the experiment harness
//! that measures how a classifier trained on unrotated, unscaled digits copes
//! with rotated and shrunken ones.

pub mod exec;
pub mod experiments;
pub mod imageops;
pub mod logpolar;
pub mod mnist;
pub mod nn;
pub mod pgm;

pub use exec::Exec;
pub use imageops::{Image, InterpMode};
pub use logpolar::{LogPolarConfig, SampleGrid};
pub use mnist::{Dataset, Split};
