use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use super::matching::{confidence_order, iou_table, match_with_ious};
use super::{
    iou_thresholds, recall_grid_point, Detection, EvalError, EvalReport, GroundTruth,
    ThresholdResult, RECALL_POINTS,
};
use crate::scalar::Scalar;

/// Cumulative sweep points and the interpolated 101-point precision grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar + Serialize"))]
pub struct PrCurve<T> {
    pub threshold: T,
    /// `(recall, precision)` after each detection in sweep order.
    pub points: Vec<(T, T)>,
    /// Interpolated precision at recall `i / 100` for `i = 0..=100`.
    pub grid: Vec<T>,
}

impl<T: Scalar> PrCurve<T> {
    pub fn average_precision(&self) -> T {
        let sum = self.grid.iter().fold(T::zero(), |acc, &p| acc + p);
        sum / T::from_count(self.grid.len())
    }
}

struct ImageBlock<T> {
    /// Global detection indices belonging to this image, input order.
    members: Vec<usize>,
    /// Local visiting order (indices into `members`).
    order: Vec<usize>,
    ious: Vec<Vec<T>>,
    num_gt: usize,
}

/// IoU tables and sweep order computed once and shared by every threshold.
struct Prepared<T> {
    blocks: Vec<ImageBlock<T>>,
    /// Global detection indices in sweep order.
    sweep: Vec<usize>,
    num_gt: usize,
    num_detections: usize,
    num_images: usize,
}

impl<T: Scalar> Prepared<T> {
    fn new(detections: &[Detection<T>], ground_truth: &GroundTruth<T>) -> Result<Self, EvalError> {
        let num_gt = ground_truth.num_boxes();
        if num_gt == 0 {
            return Err(EvalError::NoGroundTruth);
        }
        let mut by_image: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, d) in detections.iter().enumerate() {
            if !(0.0..=1.0).contains(&d.score) {
                return Err(EvalError::InvalidConfidence(d.score));
            }
            if !ground_truth.contains(&d.image_id) {
                return Err(EvalError::UnknownImage(d.image_id.clone()));
            }
            by_image.entry(d.image_id.as_str()).or_default().push(i);
        }

        let blocks = by_image
            .iter()
            .map(|(image_id, members)| {
                let gts = ground_truth.get(image_id).unwrap_or(&[]);
                let boxes: Vec<_> = members.iter().map(|&i| detections[i].bbox).collect();
                let scores: Vec<f64> = members.iter().map(|&i| detections[i].score).collect();
                ImageBlock {
                    members: members.clone(),
                    order: confidence_order(&scores),
                    ious: iou_table(&boxes, gts),
                    num_gt: gts.len(),
                }
            })
            .collect();

        let mut sweep: Vec<usize> = (0..detections.len()).collect();
        sweep.sort_by(|&a, &b| {
            let (da, db) = (&detections[a], &detections[b]);
            db.score
                .total_cmp(&da.score)
                .then_with(|| da.image_id.cmp(&db.image_id))
                .then(a.cmp(&b))
        });

        Ok(Self {
            blocks,
            sweep,
            num_gt,
            num_detections: detections.len(),
            num_images: ground_truth.num_images(),
        })
    }

    fn at_threshold(&self, threshold: T) -> (ThresholdResult<T>, PrCurve<T>) {
        let mut is_tp = vec![false; self.num_detections];
        let mut matched_gt = 0usize;
        for block in &self.blocks {
            let outcome = match_with_ious(&block.order, &block.ious, block.num_gt, threshold);
            for (local, m) in outcome.detections.iter().enumerate() {
                if m.is_some() {
                    is_tp[block.members[local]] = true;
                    matched_gt += 1;
                }
            }
        }

        let total_gt = T::from_count(self.num_gt);
        let mut points = Vec::with_capacity(self.sweep.len());
        let (mut tp, mut fp) = (0usize, 0usize);
        for &d in &self.sweep {
            if is_tp[d] {
                tp += 1;
            } else {
                fp += 1;
            }
            let recall = T::from_count(tp) / total_gt;
            let precision = T::from_count(tp) / T::from_count(tp + fp);
            points.push((recall, precision));
        }

        // running maximum from the right
        let mut envelope: Vec<T> = points.iter().map(|&(_, p)| p).collect();
        for i in (0..envelope.len().saturating_sub(1)).rev() {
            envelope[i] = envelope[i].max_of(envelope[i + 1]);
        }

        let grid: Vec<T> = (0..RECALL_POINTS)
            .map(|i| {
                let r = recall_grid_point::<T>(i);
                let first = points.partition_point(|&(recall, _)| recall < r);
                envelope.get(first).copied().unwrap_or_else(T::zero)
            })
            .collect();

        let curve = PrCurve {
            threshold,
            points,
            grid,
        };
        let result = ThresholdResult {
            threshold,
            ap: curve.average_precision(),
            true_positives: matched_gt,
            false_positives: self.num_detections - matched_gt,
            false_negatives: self.num_gt - matched_gt,
        };
        (result, curve)
    }
}

/// Precision/recall curve at a single IoU threshold.
pub fn pr_curve<T: Scalar>(
    detections: &[Detection<T>],
    ground_truth: &GroundTruth<T>,
    threshold: T,
) -> Result<PrCurve<T>, EvalError> {
    Ok(Prepared::new(detections, ground_truth)?.at_threshold(threshold).1)
}

/// AP at a single IoU threshold.
pub fn average_precision<T: Scalar>(
    detections: &[Detection<T>],
    ground_truth: &GroundTruth<T>,
    threshold: T,
) -> Result<T, EvalError> {
    Ok(Prepared::new(detections, ground_truth)?.at_threshold(threshold).0.ap)
}

/// Curves at the ten standard thresholds.
pub fn pr_curves<T: Scalar>(
    detections: &[Detection<T>],
    ground_truth: &GroundTruth<T>,
) -> Result<Vec<PrCurve<T>>, EvalError> {
    let prepared = Prepared::new(detections, ground_truth)?;
    Ok(iou_thresholds::<T>()
        .into_iter()
        .map(|t| prepared.at_threshold(t).1)
        .collect())
}

/// AP@0.5, AP@[0.5:0.95] and per-threshold diagnostics.
pub fn ap_range<T: Scalar>(
    detections: &[Detection<T>],
    ground_truth: &GroundTruth<T>,
) -> Result<EvalReport<T>, EvalError> {
    let prepared = Prepared::new(detections, ground_truth)?;
    let per_threshold: Vec<ThresholdResult<T>> = iou_thresholds::<T>()
        .into_iter()
        .map(|t| prepared.at_threshold(t).0)
        .collect();
    let sum = per_threshold.iter().fold(T::zero(), |acc, r| acc + r.ap);
    Ok(EvalReport {
        ap_at_50: per_threshold[0].ap,
        ap_50_95: sum / T::from_count(per_threshold.len()),
        per_threshold,
        num_ground_truth: prepared.num_gt,
        num_detections: prepared.num_detections,
        num_images: prepared.num_images,
    })
}

/// `threshold,recall,precision` rows for each curve's interpolation grid.
pub fn write_pr_csv<T: Scalar, W: Write>(mut out: W, curves: &[PrCurve<T>]) -> std::io::Result<()> {
    writeln!(out, "threshold,recall,precision")?;
    for curve in curves {
        for (i, p) in curve.grid.iter().enumerate() {
            writeln!(
                out,
                "{:.2},{:.2},{}",
                curve.threshold.as_f64(),
                recall_grid_point::<f64>(i as u32),
                p.as_f64()
            )?;
        }
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;
    use crate::scalar::Rational;

    fn b(x: f64, y: f64, w: f64, h: f64) -> BBox<f64> {
        BBox::new(x, y, w, h).unwrap()
    }

    fn det(image: &str, bbox: BBox<f64>, score: f64) -> Detection<f64> {
        Detection::new(image, bbox, score).unwrap()
    }

    fn single_gt() -> GroundTruth<f64> {
        let mut gt = GroundTruth::new();
        gt.insert("a", vec![b(0.0, 0.0, 10.0, 10.0)]);
        gt
    }

    #[test]
    fn perfect_single_detection() {
        let dets = [det("a", b(0.0, 0.0, 10.0, 10.0), 0.7)];
        assert_eq!(average_precision(&dets, &single_gt(), 0.5).unwrap(), 1.0);
    }

    #[test]
    fn leading_false_positive_halves_ap() {
        let dets = [
            det("a", b(50.0, 50.0, 10.0, 10.0), 0.95),
            det("a", b(0.0, 0.0, 10.0, 10.0), 0.9),
        ];
        let curve = pr_curve(&dets, &single_gt(), 0.5).unwrap();
        assert!(curve.grid.iter().all(|&p| p == 0.5));
        assert_eq!(curve.average_precision(), 0.5);
    }

    #[test]
    fn no_detections_is_zero() {
        assert_eq!(average_precision::<f64>(&[], &single_gt(), 0.5).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        let mut empty = GroundTruth::new();
        empty.insert("a", vec![]);
        let dets = [det("a", b(0.0, 0.0, 1.0, 1.0), 0.5)];
        assert_eq!(average_precision(&dets, &empty, 0.5), Err(EvalError::NoGroundTruth));
        let dets = [det("zzz", b(0.0, 0.0, 1.0, 1.0), 0.5)];
        assert_eq!(
            average_precision(&dets, &single_gt(), 0.5),
            Err(EvalError::UnknownImage("zzz".into()))
        );
        assert!(Detection::new("a", b(0.0, 0.0, 1.0, 1.0), 1.5).is_err());
    }

    #[test]
    fn perfect_detector_report() {
        let mut gt = GroundTruth::new();
        gt.insert("a", vec![b(0.0, 0.0, 10.0, 10.0), b(20.0, 20.0, 5.0, 8.0)]);
        gt.insert("b", vec![b(1.0, 1.0, 3.0, 3.0)]);
        let dets: Vec<_> = gt
            .iter()
            .flat_map(|(id, boxes)| boxes.iter().map(move |bx| det(id, *bx, 1.0)))
            .collect();
        let report = ap_range(&dets, &gt).unwrap();
        assert_eq!(report.ap_50_95, 1.0);
        assert!(report.per_threshold.iter().all(|t| t.ap == 1.0 && t.false_positives == 0));
        assert_eq!(report.per_threshold.len(), 10);
    }

    #[test]
    fn iou_052_only_counts_at_050() {
        let mut gt = GroundTruth::new();
        gt.insert("a", vec![b(0.0, 0.0, 100.0, 100.0)]);
        gt.insert("b", vec![b(0.0, 0.0, 100.0, 100.0)]);
        let dets = [
            det("a", b(0.0, 0.0, 100.0, 52.0), 0.9),
            det("b", b(0.0, 48.0, 100.0, 52.0), 0.8),
        ];
        let report = ap_range(&dets, &gt).unwrap();
        assert_eq!(report.ap_at_50, 1.0);
        assert!(report.per_threshold[1..].iter().all(|t| t.ap == 0.0));
        assert_eq!(report.ap_50_95, report.ap_at_50 / 10.0);
    }

    #[test]
    fn exact_and_float_paths_agree() {
        let mut gt = GroundTruth::<Rational>::new();
        let r = |v: i128| Rational::from_integer(v);
        let rb = |x, y, w, h| BBox::new(r(x), r(y), r(w), r(h)).unwrap();
        gt.insert("a", vec![rb(0, 0, 10, 10), rb(30, 30, 10, 10)]);
        let dets = vec![
            Detection::new("a", rb(1, 1, 10, 10), 0.9).unwrap(),
            Detection::new("a", rb(60, 60, 5, 5), 0.8).unwrap(),
            Detection::new("a", rb(31, 30, 10, 9), 0.3).unwrap(),
        ];
        let exact = ap_range(&dets, &gt).unwrap();
        let fgt: GroundTruth<f64> = gt
            .iter()
            .map(|(k, v)| {
                let boxes = v
                    .iter()
                    .map(|b| BBox::new(b.x().as_f64(), b.y().as_f64(), b.w().as_f64(), b.h().as_f64()).unwrap())
                    .collect();
                (k.to_string(), boxes)
            })
            .collect();
        let fdets: Vec<Detection<f64>> = dets
            .iter()
            .map(|d| {
                let b = d.bbox;
                Detection::new(
                    d.image_id.clone(),
                    BBox::new(b.x().as_f64(), b.y().as_f64(), b.w().as_f64(), b.h().as_f64()).unwrap(),
                    d.score,
                )
                .unwrap()
            })
            .collect();
        let float = ap_range(&fdets, &fgt).unwrap();
        assert!((exact.ap_50_95.as_f64() - float.ap_50_95).abs() < 1e-12);
        // sweep TP, FP, TP: envelope 1 up to recall 0.5, then 2/3
        assert_eq!(exact.per_threshold[0].ap, Rational::new(253, 303));
    }

    #[test]
    fn csv_has_101_rows_per_threshold() {
        let dets = [det("a", b(0.0, 0.0, 10.0, 10.0), 0.7)];
        let curves = pr_curves(&dets, &single_gt()).unwrap();
        let mut buf = Vec::new();
        write_pr_csv(&mut buf, &curves).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 10 * 101);
        assert!(text.lines().nth(1).unwrap().starts_with("0.50,0.00,1"));
    }
}
