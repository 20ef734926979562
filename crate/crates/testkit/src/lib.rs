//! Slow, literal reference computations for tests.
//!
//! Nothing here shares code with `synthpipe-core`: boxes are plain
//! `[x, y, w, h]` arrays, overlaps are recomputed from corners, and the AP
//! envelope is found by scanning every sweep prefix for every recall point.

use std::cmp::Ordering;

/// IoU of two integer boxes by counting unit pixels on the grid.
pub fn pixel_iou(a: [i64; 4], b: [i64; 4]) -> f64 {
    let inside = |r: [i64; 4], px: i64, py: i64| px >= r[0] && px < r[0] + r[2] && py >= r[1] && py < r[1] + r[3];
    let x0 = a[0].min(b[0]);
    let y0 = a[1].min(b[1]);
    let x1 = (a[0] + a[2]).max(b[0] + b[2]);
    let y1 = (a[1] + a[3]).max(b[1] + b[3]);
    let (mut inter, mut union) = (0u64, 0u64);
    for py in y0..y1 {
        for px in x0..x1 {
            let (ia, ib) = (inside(a, px, py), inside(b, px, py));
            if ia && ib {
                inter += 1;
            }
            if ia || ib {
                union += 1;
            }
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Corner-form IoU for real-valued boxes.
pub fn corner_iou(a: [f64; 4], b: [f64; 4]) -> f64 {
    let (ax1, ay1, ax2, ay2) = (a[0], a[1], a[0] + a[2], a[1] + a[3]);
    let (bx1, by1, bx2, by2) = (b[0], b[1], b[0] + b[2], b[1] + b[3]);
    let iw = ax2.min(bx2) - ax1.max(bx1);
    let ih = ay2.min(by2) - ay1.max(by1);
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    inter / (a[2] * a[3] + b[2] * b[3] - inter)
}

#[derive(Debug, Clone)]
pub struct RefImage {
    pub id: String,
    pub boxes: Vec<[f64; 4]>,
}

#[derive(Debug, Clone)]
pub struct RefDetection {
    pub image: String,
    pub bbox: [f64; 4],
    pub score: f64,
}

/// Positions of `dets` in evaluation order: score descending, then image id,
/// then input position.
fn visiting_order(dets: &[RefDetection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    // insertion sort, written out so the comparison is explicit
    for i in 1..order.len() {
        let mut j = i;
        while j > 0 && before(dets, order[j], order[j - 1]) {
            order.swap(j, j - 1);
            j -= 1;
        }
    }
    order
}

fn before(dets: &[RefDetection], a: usize, b: usize) -> bool {
    let (da, db) = (&dets[a], &dets[b]);
    if da.score != db.score {
        return da.score > db.score;
    }
    match da.image.cmp(&db.image) {
        Ordering::Less => true,
        Ordering::Greater => false,
        Ordering::Equal => a < b,
    }
}

/// True-positive flag per detection at `threshold`.
fn flags(images: &[RefImage], dets: &[RefDetection], order: &[usize], threshold: f64) -> Vec<bool> {
    let mut taken: Vec<Vec<bool>> = images.iter().map(|im| vec![false; im.boxes.len()]).collect();
    let mut tp = vec![false; dets.len()];
    for &d in order {
        let img = images
            .iter()
            .position(|im| im.id == dets[d].image)
            .expect("detection image exists");
        let mut best_gt = None;
        let mut best_iou = -1.0;
        for (g, gt) in images[img].boxes.iter().enumerate() {
            if taken[img][g] {
                continue;
            }
            let v = corner_iou(dets[d].bbox, *gt);
            if v >= threshold && v > best_iou {
                best_iou = v;
                best_gt = Some(g);
            }
        }
        if let Some(g) = best_gt {
            taken[img][g] = true;
            tp[d] = true;
        }
    }
    tp
}

/// Reference AP at one IoU threshold; `None` when there is no ground truth.
pub fn reference_ap(images: &[RefImage], dets: &[RefDetection], threshold: f64) -> Option<f64> {
    let total_gt: usize = images.iter().map(|im| im.boxes.len()).sum();
    if total_gt == 0 {
        return None;
    }
    let order = visiting_order(dets);
    let tp = flags(images, dets, &order, threshold);
    let mut prefix = Vec::new();
    let (mut t, mut f) = (0usize, 0usize);
    for &d in &order {
        if tp[d] {
            t += 1;
        } else {
            f += 1;
        }
        prefix.push((t as f64 / total_gt as f64, t as f64 / (t + f) as f64));
    }
    let mut sum = 0.0;
    for j in 0..=100u32 {
        let r = j as f64 / 100.0;
        let best = prefix
            .iter()
            .filter(|(rec, _)| *rec >= r)
            .map(|(_, p)| *p)
            .fold(0.0, f64::max);
        sum += best;
    }
    Some(sum / 101.0)
}

/// Reference APs at `0.50, 0.55, ..., 0.95` and their mean.
pub fn reference_ap_range(images: &[RefImage], dets: &[RefDetection]) -> Option<(Vec<f64>, f64)> {
    let aps: Option<Vec<f64>> = (0..10)
        .map(|i| reference_ap(images, dets, (50 + 5 * i) as f64 / 100.0))
        .collect();
    let aps = aps?;
    let mean = aps.iter().sum::<f64>() / 10.0;
    Some((aps, mean))
}

/// Rank-ordered sort key of an assignment, and the assignment itself.
type Best = Option<(Vec<(i32, f64, i64)>, Vec<Option<usize>>)>;

/// Exhaustive search over every one-to-one partial assignment of detections
/// to ground truths with IoU at or above `threshold`. Detections are ranked
/// by score (descending, input order on ties); the chosen assignment is the
/// lexicographic best when each detection in rank order prefers being
/// matched, then a higher IoU, then a lower ground-truth index.
///
/// Returns the ground-truth index per detection, in input order.
pub fn exhaustive_match(dets: &[([f64; 4], f64)], gts: &[[f64; 4]], threshold: f64) -> Vec<Option<usize>> {
    let mut rank: Vec<usize> = (0..dets.len()).collect();
    rank.sort_by(|&a, &b| dets[b].1.partial_cmp(&dets[a].1).unwrap().then(a.cmp(&b)));

    let mut best: Best = None;
    let mut current = vec![None; dets.len()];
    let mut used = vec![false; gts.len()];
    enumerate(dets, gts, threshold, &rank, 0, &mut current, &mut used, &mut best);
    best.map(|(_, a)| a).unwrap_or_else(|| vec![None; dets.len()])
}

#[allow(clippy::too_many_arguments)]
fn enumerate(
    dets: &[([f64; 4], f64)],
    gts: &[[f64; 4]],
    threshold: f64,
    rank: &[usize],
    depth: usize,
    current: &mut Vec<Option<usize>>,
    used: &mut Vec<bool>,
    best: &mut Best,
) {
    if depth == rank.len() {
        let key: Vec<(i32, f64, i64)> = rank
            .iter()
            .map(|&d| match current[d] {
                Some(g) => (1, corner_iou(dets[d].0, gts[g]), -(g as i64)),
                None => (0, 0.0, 0),
            })
            .collect();
        let better = match best {
            None => true,
            Some((k, _)) => key.partial_cmp(k) == Some(Ordering::Greater),
        };
        if better {
            *best = Some((key, current.clone()));
        }
        return;
    }
    let d = rank[depth];
    enumerate(dets, gts, threshold, rank, depth + 1, current, used, best);
    for g in 0..gts.len() {
        if used[g] || corner_iou(dets[d].0, gts[g]) < threshold {
            continue;
        }
        used[g] = true;
        current[d] = Some(g);
        enumerate(dets, gts, threshold, rank, depth + 1, current, used, best);
        current[d] = None;
        used[g] = false;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_counting() {
        assert_eq!(pixel_iou([0, 0, 10, 10], [5, 0, 10, 10]), 50.0 / 150.0);
        assert_eq!(pixel_iou([0, 0, 2, 2], [5, 5, 1, 1]), 0.0);
    }

    #[test]
    fn fp_then_tp() {
        let images = vec![RefImage {
            id: "a".into(),
            boxes: vec![[0.0, 0.0, 10.0, 10.0]],
        }];
        let dets = vec![
            RefDetection {
                image: "a".into(),
                bbox: [50.0, 50.0, 5.0, 5.0],
                score: 0.95,
            },
            RefDetection {
                image: "a".into(),
                bbox: [0.0, 0.0, 10.0, 10.0],
                score: 0.9,
            },
        ];
        assert!((reference_ap(&images, &dets, 0.5).unwrap() - 0.5).abs() < 1e-15);
    }
}
