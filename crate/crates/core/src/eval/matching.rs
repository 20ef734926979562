use crate::geometry::BBox;
use crate::scalar::Scalar;

/// Result of greedy matching on one image at one threshold.
///
/// Both vectors are indexed in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome<T> {
    pub threshold: T,
    /// Ground-truth index claimed by each detection, `None` for a false positive.
    pub detections: Vec<Option<usize>>,
    /// Detection index that claimed each ground truth, `None` if missed.
    pub ground_truths: Vec<Option<usize>>,
}

impl<T> MatchOutcome<T> {
    pub fn true_positives(&self) -> usize {
        self.detections.iter().filter(|m| m.is_some()).count()
    }

    pub fn false_positives(&self) -> usize {
        self.detections.len() - self.true_positives()
    }

    pub fn false_negatives(&self) -> usize {
        self.ground_truths.iter().filter(|m| m.is_none()).count()
    }
}

/// Detection order for matching: descending score, input order on ties.
pub(crate) fn confidence_order(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order
}

/// Greedy matching against a precomputed `ious[det][gt]` table, visiting
/// detections in `order`.
pub(crate) fn match_with_ious<T: Scalar>(
    order: &[usize],
    ious: &[Vec<T>],
    num_gt: usize,
    threshold: T,
) -> MatchOutcome<T> {
    let mut detections = vec![None; ious.len()];
    let mut ground_truths = vec![None; num_gt];
    for &d in order {
        let mut best: Option<(usize, T)> = None;
        for (g, &overlap) in ious[d].iter().enumerate() {
            if ground_truths[g].is_some() || overlap < threshold {
                continue;
            }
            // strict improvement keeps the lowest index on ties
            if best.is_none_or(|(_, b)| overlap > b) {
                best = Some((g, overlap));
            }
        }
        if let Some((g, _)) = best {
            detections[d] = Some(g);
            ground_truths[g] = Some(d);
        }
    }
    MatchOutcome {
        threshold,
        detections,
        ground_truths,
    }
}

pub(crate) fn iou_table<T: Scalar>(detections: &[BBox<T>], ground_truths: &[BBox<T>]) -> Vec<Vec<T>> {
    detections
        .iter()
        .map(|d| ground_truths.iter().map(|g| d.iou(g)).collect())
        .collect()
}

/// Greedy one-to-one matching of `(box, score)` detections on a single image.
pub fn match_greedy<T: Scalar>(
    detections: &[(BBox<T>, f64)],
    ground_truths: &[BBox<T>],
    threshold: T,
) -> MatchOutcome<T> {
    let boxes: Vec<BBox<T>> = detections.iter().map(|(b, _)| *b).collect();
    let scores: Vec<f64> = detections.iter().map(|(_, s)| *s).collect();
    let ious = iou_table(&boxes, ground_truths);
    match_with_ious(&confidence_order(&scores), &ious, ground_truths.len(), threshold)
}
