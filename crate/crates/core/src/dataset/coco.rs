//! COCO object-detection JSON (`images` / `annotations` / `categories`,
//! boxes as `[x, y, w, h]` in pixels).

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    box_issue, AnnotationIssue, AnnotationSet, DatasetError, DatasetManifest, ImageRecord, Split,
    WORKER_CLASS,
};
use crate::geometry::BBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub bbox: [f64; 4],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub area: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iscrowd: Option<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoCategory {
    pub id: u64,
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supercategory: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocoDocument {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
    pub categories: Vec<CocoCategory>,
}

impl CocoDocument {
    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        serde_json::from_str(text).map_err(|e| DatasetError::Json {
            context: "parsing COCO document".into(),
            source: e,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("COCO document serializes")
    }
}

fn image_id_for(file_name: &str) -> String {
    Path::new(file_name)
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or(file_name)
        .to_string()
}

/// Converts a COCO document into records (keyed by file stem) and worker
/// boxes. Annotations of other categories are ignored; every invalid worker
/// annotation is reported at once.
pub fn import_coco(doc: &CocoDocument) -> Result<(Vec<ImageRecord>, AnnotationSet), DatasetError> {
    let worker_ids: Vec<u64> = doc
        .categories
        .iter()
        .filter(|c| c.name.eq_ignore_ascii_case(WORKER_CLASS))
        .map(|c| c.id)
        .collect();
    if worker_ids.is_empty() {
        tracing::warn!("COCO document has no `{WORKER_CLASS}` category; no boxes imported");
    }

    let mut records = Vec::with_capacity(doc.images.len());
    let mut by_coco_id: HashMap<u64, usize> = HashMap::new();
    for img in &doc.images {
        if by_coco_id.insert(img.id, records.len()).is_some() {
            return Err(DatasetError::DuplicateImage(img.id.to_string()));
        }
        records.push(ImageRecord::new(
            image_id_for(&img.file_name),
            img.file_name.clone(),
            img.width,
            img.height,
        ));
    }

    let mut annotations = AnnotationSet::new();
    for r in &records {
        annotations.insert(r.image_id.clone(), Vec::new());
    }
    let mut issues: Vec<AnnotationIssue> = Vec::new();
    for ann in &doc.annotations {
        if !worker_ids.contains(&ann.category_id) {
            continue;
        }
        let Some(&idx) = by_coco_id.get(&ann.image_id) else {
            issues.push(AnnotationIssue {
                annotation_id: ann.id.to_string(),
                reason: format!("references missing image id {}", ann.image_id),
            });
            continue;
        };
        let r = &records[idx];
        let [x, y, w, h] = ann.bbox;
        match BBox::within(x, y, w, h, r.width, r.height) {
            Ok(b) => annotations.push(r.image_id.clone(), b),
            Err(e) => issues.push(box_issue(ann.id, e)),
        }
    }
    if !issues.is_empty() {
        return Err(DatasetError::InvalidAnnotations(issues));
    }
    Ok((records, annotations))
}

/// Active images (optionally one split) as a single-category COCO document.
/// Ids are assigned densely from 1 in manifest order.
pub fn export_coco(manifest: &DatasetManifest, split: Option<Split>) -> CocoDocument {
    let mut images = Vec::new();
    let mut annotations = Vec::new();
    for (i, r) in manifest.records_in(split).enumerate() {
        let image_id = i as u64 + 1;
        images.push(CocoImage {
            id: image_id,
            file_name: r.file.clone(),
            width: r.width,
            height: r.height,
        });
        for b in manifest.boxes(&r.image_id) {
            annotations.push(CocoAnnotation {
                id: annotations.len() as u64 + 1,
                image_id,
                category_id: 1,
                bbox: b.to_array(),
                area: Some(b.area()),
                iscrowd: Some(0),
            });
        }
    }
    CocoDocument {
        images,
        annotations,
        categories: vec![CocoCategory {
            id: 1,
            name: WORKER_CLASS.to_string(),
            supercategory: Some("person".to_string()),
        }],
    }
}
