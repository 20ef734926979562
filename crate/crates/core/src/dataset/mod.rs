//! Dataset manifest: image records, worker annotations, exclusions and
//! split assignment.
//!
//! The manifest is the single authoritative index. Mutations take `&mut self`
//! and validate before applying, so a failed call leaves the manifest as it
//! was. Excluded images stay in the manifest (with their reason) but are
//! invisible to splits, statistics, exports and evaluation.

mod coco;
mod split;
mod stats;
mod yolo;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::GroundTruth;
use crate::geometry::{BBox, BoxError};

pub use coco::{export_coco, import_coco, CocoAnnotation, CocoCategory, CocoDocument, CocoImage};
pub use split::SplitCounts;
pub use stats::{DatasetStats, SplitTally};
pub use yolo::{export_yolo, import_yolo, parse_label_line, YoloLabel, CLASSES_FILE, LABELS_DIR};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const WORKER_CLASS: &str = "worker";

pub type PixelBox = BBox<f64>;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("duplicate image id `{0}`")]
    DuplicateImage(String),
    #[error("prompt {prompt_id} quadrant {quadrant} is already recorded as `{existing}`")]
    DuplicateProvenance {
        prompt_id: u64,
        quadrant: u8,
        existing: String,
    },
    #[error("unknown image id `{0}`")]
    UnknownImage(String),
    #[error("image `{image_id}` is {existing:?} in the manifest but {incoming:?} in the import")]
    DimensionMismatch {
        image_id: String,
        existing: (u32, u32),
        incoming: (u32, u32),
    },
    #[error("invalid annotations: {}", format_issues(.0))]
    InvalidAnnotations(Vec<AnnotationIssue>),
    #[error("{}:{line}: {message}", .file.display())]
    Yolo {
        file: PathBuf,
        line: usize,
        message: String,
    },
    #[error("split counts sum to {requested} but there are {active} active images")]
    SplitCountMismatch { requested: usize, active: usize },
    #[error("prompt groups cannot be packed into exactly {0:?}")]
    GroupedSplitInfeasible(SplitCounts),
    #[error("exclusion reason must not be empty")]
    EmptyReason,
    #[error("unsupported manifest schema version {0}")]
    SchemaVersion(u32),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl DatasetError {
    pub(crate) fn io(context: impl Into<String>, source: io::Error) -> Self {
        Self::Io {
            context: context.into(),
            source,
        }
    }
}

/// One rejected annotation, identified by its source id.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationIssue {
    pub annotation_id: String,
    pub reason: String,
}

fn format_issues(issues: &[AnnotationIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("annotation {}: {}", i.annotation_id, i.reason))
        .collect::<Vec<_>>()
        .join("; ")
}

pub(crate) fn box_issue(id: impl ToString, err: BoxError) -> AnnotationIssue {
    AnnotationIssue {
        annotation_id: id.to_string(),
        reason: err.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Generated { prompt_id: u64, quadrant: u8 },
    External,
}

impl Provenance {
    /// Recognises the generated filename scheme `img_<prompt:06>_<quadrant>`.
    pub fn from_file_stem(stem: &str) -> Self {
        let parsed = stem.strip_prefix("img_").and_then(|rest| {
            let (prompt, quadrant) = rest.rsplit_once('_')?;
            if prompt.len() < 6 || !prompt.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            let quadrant: u8 = quadrant.parse().ok().filter(|q| *q < 4)?;
            Some(Provenance::Generated {
                prompt_id: prompt.parse().ok()?,
                quadrant,
            })
        });
        parsed.unwrap_or(Provenance::External)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum ImageStatus {
    Active,
    Excluded { reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub file: String,
    pub width: u32,
    pub height: u32,
    pub provenance: Provenance,
    pub status: ImageStatus,
}

impl ImageRecord {
    pub fn new(image_id: impl Into<String>, file: impl Into<String>, width: u32, height: u32) -> Self {
        let file = file.into();
        let provenance = Path::new(&file)
            .file_stem()
            .and_then(|s| s.to_str())
            .map(Provenance::from_file_stem)
            .unwrap_or(Provenance::External);
        Self {
            image_id: image_id.into(),
            file,
            width,
            height,
            provenance,
            status: ImageStatus::Active,
        }
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = provenance;
        self
    }

    pub fn is_active(&self) -> bool {
        self.status == ImageStatus::Active
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split `{other}` (expected train, val or test)")),
        }
    }
}

/// Worker boxes per image id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnnotationSet {
    boxes: BTreeMap<String, Vec<PixelBox>>,
}

impl AnnotationSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, image_id: impl Into<String>, boxes: Vec<PixelBox>) {
        self.boxes.insert(image_id.into(), boxes);
    }

    pub fn push(&mut self, image_id: impl Into<String>, bbox: PixelBox) {
        self.boxes.entry(image_id.into()).or_default().push(bbox);
    }

    pub fn get(&self, image_id: &str) -> &[PixelBox] {
        self.boxes.get(image_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[PixelBox])> {
        self.boxes.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn num_images(&self) -> usize {
        self.boxes.len()
    }

    pub fn num_boxes(&self) -> usize {
        self.boxes.values().map(Vec::len).sum()
    }
}

/// Image dimensions by id, used to denormalise YOLO labels.
pub trait DimensionSource {
    fn dimensions(&self, image_id: &str) -> Option<(u32, u32)>;
}

impl DimensionSource for BTreeMap<String, (u32, u32)> {
    fn dimensions(&self, image_id: &str) -> Option<(u32, u32)> {
        self.get(image_id).copied()
    }
}

impl DimensionSource for std::collections::HashMap<String, (u32, u32)> {
    fn dimensions(&self, image_id: &str) -> Option<(u32, u32)> {
        self.get(image_id).copied()
    }
}

impl DimensionSource for DatasetManifest {
    fn dimensions(&self, image_id: &str) -> Option<(u32, u32)> {
        self.record(image_id).map(|r| (r.width, r.height))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema_version: u32,
    records: Vec<ImageRecord>,
    annotations: AnnotationSet,
    splits: BTreeMap<String, Split>,
    split_seed: Option<u64>,
    #[serde(default)]
    group_by_prompt: bool,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl Default for DatasetManifest {
    fn default() -> Self {
        Self::new()
    }
}

impl DatasetManifest {
    pub fn new() -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            records: Vec::new(),
            annotations: AnnotationSet::new(),
            splits: BTreeMap::new(),
            split_seed: None,
            group_by_prompt: false,
            index: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path)
            .map_err(|e| DatasetError::io(format!("reading {}", path.display()), e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, DatasetError> {
        let mut m: Self = serde_json::from_str(text).map_err(|e| DatasetError::Json {
            context: "parsing manifest".into(),
            source: e,
        })?;
        if m.schema_version != MANIFEST_SCHEMA_VERSION {
            return Err(DatasetError::SchemaVersion(m.schema_version));
        }
        let records = std::mem::take(&mut m.records);
        let annotations = std::mem::take(&mut m.annotations);
        let splits = std::mem::take(&mut m.splits);
        m.add_records(records)?;
        m.set_annotations(annotations)?;
        for (id, split) in splits {
            match m.record(&id) {
                Some(r) if r.is_active() => {
                    m.splits.insert(id, split);
                }
                _ => return Err(DatasetError::UnknownImage(id)),
            }
        }
        Ok(m)
    }

    /// Writes the manifest atomically (temp file then rename).
    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| DatasetError::Json {
            context: "serializing manifest".into(),
            source: e,
        })?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, text + "\n")
            .and_then(|_| fs::rename(&tmp, path))
            .map_err(|e| DatasetError::io(format!("writing {}", path.display()), e))
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn record(&self, image_id: &str) -> Option<&ImageRecord> {
        self.index.get(image_id).map(|&i| &self.records[i])
    }

    pub fn active_records(&self) -> impl Iterator<Item = &ImageRecord> {
        self.records.iter().filter(|r| r.is_active())
    }

    pub fn active_count(&self) -> usize {
        self.active_records().count()
    }

    pub fn annotations(&self) -> &AnnotationSet {
        &self.annotations
    }

    pub fn boxes(&self, image_id: &str) -> &[PixelBox] {
        self.annotations.get(image_id)
    }

    pub fn split_of(&self, image_id: &str) -> Option<Split> {
        self.splits.get(image_id).copied()
    }

    pub fn split_seed(&self) -> Option<u64> {
        self.split_seed
    }

    /// Active records in `split`, or all active records for `None`.
    pub fn records_in(&self, split: Option<Split>) -> impl Iterator<Item = &ImageRecord> {
        self.active_records()
            .filter(move |r| split.is_none() || self.split_of(&r.image_id) == split)
    }

    /// Appends records; all-or-nothing on duplicate ids or provenance pairs.
    pub fn add_records(&mut self, records: Vec<ImageRecord>) -> Result<(), DatasetError> {
        let mut ids: HashSet<&str> = self.index.keys().map(String::as_str).collect();
        let mut origins: BTreeMap<(u64, u8), &str> = self
            .records
            .iter()
            .filter_map(|r| match r.provenance {
                Provenance::Generated { prompt_id, quadrant } => {
                    Some(((prompt_id, quadrant), r.image_id.as_str()))
                }
                Provenance::External => None,
            })
            .collect();
        for r in &records {
            if !ids.insert(&r.image_id) {
                return Err(DatasetError::DuplicateImage(r.image_id.clone()));
            }
            if let Provenance::Generated { prompt_id, quadrant } = r.provenance {
                if let Some(existing) = origins.insert((prompt_id, quadrant), &r.image_id) {
                    return Err(DatasetError::DuplicateProvenance {
                        prompt_id,
                        quadrant,
                        existing: existing.to_string(),
                    });
                }
            }
            if let ImageStatus::Excluded { reason } = &r.status {
                if reason.trim().is_empty() {
                    return Err(DatasetError::EmptyReason);
                }
            }
        }
        for r in records {
            self.index.insert(r.image_id.clone(), self.records.len());
            self.records.push(r);
        }
        Ok(())
    }

    /// Replaces the boxes of every image named in `annotations`, after
    /// checking each image exists and each box fits inside it.
    pub fn set_annotations(&mut self, annotations: AnnotationSet) -> Result<(), DatasetError> {
        let mut issues = Vec::new();
        for (image_id, boxes) in annotations.iter() {
            let Some(record) = self.record(image_id) else {
                issues.push(AnnotationIssue {
                    annotation_id: format!("{image_id}/*"),
                    reason: format!("image `{image_id}` is not in the manifest"),
                });
                continue;
            };
            for (i, b) in boxes.iter().enumerate() {
                if let Err(e) = b.check_bounds(record.width, record.height) {
                    issues.push(box_issue(format!("{image_id}/{i}"), e));
                }
            }
        }
        if !issues.is_empty() {
            return Err(DatasetError::InvalidAnnotations(issues));
        }
        for (image_id, boxes) in annotations.boxes {
            self.annotations.insert(image_id, boxes);
        }
        Ok(())
    }

    /// Adds new records and checks already-known ones agree on dimensions,
    /// then applies the annotations.
    pub fn ingest(
        &mut self,
        records: Vec<ImageRecord>,
        annotations: AnnotationSet,
    ) -> Result<(), DatasetError> {
        let mut fresh = Vec::new();
        for r in records {
            match self.record(&r.image_id) {
                Some(existing) => {
                    if (existing.width, existing.height) != (r.width, r.height) {
                        return Err(DatasetError::DimensionMismatch {
                            image_id: r.image_id,
                            existing: (existing.width, existing.height),
                            incoming: (r.width, r.height),
                        });
                    }
                }
                None => fresh.push(r),
            }
        }
        let snapshot = self.clone();
        self.add_records(fresh)?;
        if let Err(e) = self.set_annotations(annotations) {
            *self = snapshot;
            return Err(e);
        }
        Ok(())
    }

    /// Marks active images excluded. Unknown ids fail the whole call; ids
    /// that are already excluded are skipped and returned as warnings.
    pub fn exclude<S: AsRef<str>>(
        &mut self,
        image_ids: &[S],
        reason: &str,
    ) -> Result<Vec<String>, DatasetError> {
        if image_ids.is_empty() {
            return Ok(Vec::new());
        }
        if reason.trim().is_empty() {
            return Err(DatasetError::EmptyReason);
        }
        let mut targets = Vec::new();
        let mut warnings = Vec::new();
        for id in image_ids {
            let id = id.as_ref();
            let &i = self
                .index
                .get(id)
                .ok_or_else(|| DatasetError::UnknownImage(id.to_string()))?;
            if self.records[i].is_active() {
                targets.push(i);
            } else {
                let msg = format!("image `{id}` is already excluded");
                tracing::warn!("{msg}");
                warnings.push(msg);
            }
        }
        for i in targets {
            let record = &mut self.records[i];
            record.status = ImageStatus::Excluded {
                reason: reason.trim().to_string(),
            };
            self.splits.remove(&record.image_id);
        }
        Ok(warnings)
    }

    /// Active images with no boxes; candidates for review, never excluded
    /// automatically.
    pub fn unannotated(&self) -> Vec<&str> {
        self.active_records()
            .filter(|r| self.boxes(&r.image_id).is_empty())
            .map(|r| r.image_id.as_str())
            .collect()
    }

    /// Ground truth over the active images of `split` (all active images for
    /// `None`); images without boxes are included.
    pub fn ground_truth(&self, split: Option<Split>) -> GroundTruth<f64> {
        self.records_in(split)
            .map(|r| (r.image_id.clone(), self.boxes(&r.image_id).to_vec()))
            .collect()
    }
}
