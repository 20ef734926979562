//! Detection evaluation: IoU matching, precision/recall sweep and AP.
//!
//! The protocol is the COCO one restricted to a single class:
//!
//! * detections are visited in descending confidence, ties broken by
//!   `(image_id, input order)`;
//! * each detection claims the unmatched ground truth of its image with the
//!   highest IoU (lowest index on ties) if that IoU is at least the threshold,
//!   otherwise it is a false positive;
//! * precision is interpolated as the running maximum from the right and
//!   sampled at the 101 recall points `0.00, 0.01, ..., 1.00`;
//! * AP is the mean of those samples, and AP@[.5:.95] is the mean over the
//!   ten thresholds `0.50, 0.55, ..., 0.95`.

mod ap;
mod matching;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::BBox;
use crate::scalar::Scalar;

pub use ap::{ap_range, average_precision, pr_curve, pr_curves, write_pr_csv, PrCurve};
pub use matching::{match_greedy, MatchOutcome};

/// Number of recall grid points used for interpolation.
pub const RECALL_POINTS: u32 = 101;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("no ground-truth boxes: AP is undefined")]
    NoGroundTruth,
    #[error("detection references unknown image `{0}`")]
    UnknownImage(String),
    #[error("confidence {0} is outside [0, 1]")]
    InvalidConfidence(f64),
}

/// The ten IoU thresholds `0.50, 0.55, ..., 0.95`, each built as an exact
/// quotient `(50 + 5i) / 100`.
pub fn iou_thresholds<T: Scalar>() -> [T; 10] {
    std::array::from_fn(|i| T::ratio(50 + 5 * i as u32, 100))
}

/// Recall grid point `index / 100`.
pub fn recall_grid_point<T: Scalar>(index: u32) -> T {
    T::ratio(index, RECALL_POINTS - 1)
}

/// A scored prediction for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct Detection<T> {
    pub image_id: String,
    pub bbox: BBox<T>,
    pub score: f64,
}

impl<T: Scalar> Detection<T> {
    pub fn new(image_id: impl Into<String>, bbox: BBox<T>, score: f64) -> Result<Self, EvalError> {
        if !(0.0..=1.0).contains(&score) {
            return Err(EvalError::InvalidConfidence(score));
        }
        Ok(Self {
            image_id: image_id.into(),
            bbox,
            score,
        })
    }
}

/// Ground-truth boxes keyed by image id. Images without objects should still
/// be present (with no boxes) so detections on them count as false positives
/// rather than unknown-image errors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GroundTruth<T> {
    images: BTreeMap<String, Vec<BBox<T>>>,
}

impl<T: Scalar> GroundTruth<T> {
    pub fn new() -> Self {
        Self {
            images: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, image_id: impl Into<String>, boxes: Vec<BBox<T>>) {
        self.images.insert(image_id.into(), boxes);
    }

    pub fn get(&self, image_id: &str) -> Option<&[BBox<T>]> {
        self.images.get(image_id).map(Vec::as_slice)
    }

    pub fn contains(&self, image_id: &str) -> bool {
        self.images.contains_key(image_id)
    }

    pub fn num_images(&self) -> usize {
        self.images.len()
    }

    pub fn num_boxes(&self) -> usize {
        self.images.values().map(Vec::len).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[BBox<T>])> {
        self.images.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }
}

impl<T: Scalar> FromIterator<(String, Vec<BBox<T>>)> for GroundTruth<T> {
    fn from_iter<I: IntoIterator<Item = (String, Vec<BBox<T>>)>>(iter: I) -> Self {
        Self {
            images: iter.into_iter().collect(),
        }
    }
}

/// Match counts and AP at one IoU threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct ThresholdResult<T> {
    pub threshold: T,
    pub ap: T,
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct EvalReport<T> {
    pub ap_at_50: T,
    pub ap_50_95: T,
    pub per_threshold: Vec<ThresholdResult<T>>,
    pub num_ground_truth: usize,
    pub num_detections: usize,
    pub num_images: usize,
}

impl<T: Scalar> EvalReport<T> {
    pub fn to_f64(&self) -> EvalReport<f64> {
        EvalReport {
            ap_at_50: self.ap_at_50.as_f64(),
            ap_50_95: self.ap_50_95.as_f64(),
            per_threshold: self
                .per_threshold
                .iter()
                .map(|t| ThresholdResult {
                    threshold: t.threshold.as_f64(),
                    ap: t.ap.as_f64(),
                    true_positives: t.true_positives,
                    false_positives: t.false_positives,
                    false_negatives: t.false_negatives,
                })
                .collect(),
            num_ground_truth: self.num_ground_truth,
            num_detections: self.num_detections,
            num_images: self.num_images,
        }
    }
}
