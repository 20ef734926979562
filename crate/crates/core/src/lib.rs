//! Core library for building synthetic worker-detection datasets.
//!
//! * [`prompt`]: axis vocabularies expanded into generation prompts.
//! * [`dataset`]: the image manifest, annotation import/export, exclusions
//!   and deterministic splits.
//! * [`eval`]: IoU matching and AP@0.5 / AP@[0.5:0.95].
//!
//! Geometry and evaluation are generic over [`Scalar`]; the aliases below
//! fix the scalar for the common cases.

pub mod dataset;
pub mod eval;
pub mod geometry;
pub mod prompt;
pub mod scalar;

pub use geometry::{iou, BBox, BoxError};
pub use scalar::{Rational, Scalar};

/// Pixel-space box in `f64`, the type stored in manifests.
pub type BoundingBox = geometry::BBox<f64>;
pub type BoundingBox32 = geometry::BBox<f32>;
pub type ExactBoundingBox = geometry::BBox<Rational>;

pub type Detection = eval::Detection<f64>;
pub type Detection32 = eval::Detection<f32>;
pub type ExactDetection = eval::Detection<Rational>;

pub type GroundTruth = eval::GroundTruth<f64>;
pub type ExactGroundTruth = eval::GroundTruth<Rational>;

pub type EvalReport = eval::EvalReport<f64>;
pub type ExactEvalReport = eval::EvalReport<Rational>;
