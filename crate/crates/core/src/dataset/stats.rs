use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{DatasetManifest, Split};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitTally {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub unassigned: usize,
}

/// Counts over active images only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub images: usize,
    pub instances: usize,
    pub mean_instances_per_image: f64,
    /// instances-per-image -> number of images
    pub histogram: BTreeMap<usize, usize>,
    pub splits: SplitTally,
    pub split_instances: SplitTally,
    pub excluded: usize,
    /// Active images with zero boxes, flagged for review.
    pub unannotated: usize,
}

impl DatasetManifest {
    pub fn stats(&self) -> DatasetStats {
        let mut histogram = BTreeMap::new();
        let mut splits = SplitTally::default();
        let mut split_instances = SplitTally::default();
        let (mut images, mut instances) = (0usize, 0usize);
        for r in self.active_records() {
            let n = self.boxes(&r.image_id).len();
            images += 1;
            instances += n;
            *histogram.entry(n).or_insert(0) += 1;
            let (slot, inst) = match self.split_of(&r.image_id) {
                Some(Split::Train) => (&mut splits.train, &mut split_instances.train),
                Some(Split::Val) => (&mut splits.val, &mut split_instances.val),
                Some(Split::Test) => (&mut splits.test, &mut split_instances.test),
                None => (&mut splits.unassigned, &mut split_instances.unassigned),
            };
            *slot += 1;
            *inst += n;
        }
        DatasetStats {
            images,
            instances,
            mean_instances_per_image: if images == 0 {
                0.0
            } else {
                instances as f64 / images as f64
            },
            unannotated: histogram.get(&0).copied().unwrap_or(0),
            histogram,
            splits,
            split_instances,
            excluded: self.records().len() - images,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{AnnotationSet, ImageRecord};
    use super::*;
    use crate::geometry::BBox;

    #[test]
    fn counts_boxes_per_image() {
        let mut m = DatasetManifest::new();
        m.add_records(vec![
            ImageRecord::new("a", "a.png", 100, 100),
            ImageRecord::new("b", "b.png", 100, 100),
        ])
        .unwrap();
        let mut ann = AnnotationSet::new();
        for i in 0..3 {
            ann.push("a", BBox::new(i as f64 * 10.0, 0.0, 5.0, 5.0).unwrap());
        }
        m.set_annotations(ann).unwrap();
        let s = m.stats();
        assert_eq!((s.images, s.instances), (2, 3));
        assert_eq!(s.histogram, BTreeMap::from([(0, 1), (3, 1)]));
        assert_eq!(s.unannotated, 1);
        assert_eq!(s.splits.unassigned, 2);
    }

    #[test]
    fn empty_manifest() {
        let s = DatasetManifest::new().stats();
        assert_eq!((s.images, s.instances, s.excluded), (0, 0, 0));
        assert_eq!(s.mean_instances_per_image, 0.0);
        assert!(s.histogram.is_empty());
    }

    #[test]
    fn reference_dataset_mean() {
        // 11,992 images carrying 36,444 boxes
        let mut m = DatasetManifest::new();
        m.add_records((0..11992).map(|i| ImageRecord::new(format!("i{i}"), format!("i{i}.png"), 64, 64)).collect())
            .unwrap();
        let mut ann = AnnotationSet::new();
        let mut left = 36444usize;
        for i in 0..11992usize {
            let n = if i < 36444 - 3 * 11992 { 4 } else { 3 };
            for k in 0..n {
                ann.push(format!("i{i}"), BBox::new(k as f64 * 10.0, 0.0, 8.0, 8.0).unwrap());
            }
            left -= n;
        }
        assert_eq!(left, 0);
        m.set_annotations(ann).unwrap();
        let s = m.stats();
        assert_eq!((s.images, s.instances), (11992, 36444));
        assert!((s.mean_instances_per_image - 3.039).abs() < 5e-4);
    }
}
