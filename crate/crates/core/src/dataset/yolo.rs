//! YOLO label files: one `<image_id>.txt` per image, each line
//! `class cx cy w h` normalised to `[0, 1]` and centre-based. Class 0 is the
//! only class (`worker`), declared in a `classes.txt` names file.

use std::fs;
use std::path::{Path, PathBuf};

use super::{AnnotationSet, DatasetError, DatasetManifest, DimensionSource, PixelBox, Split, WORKER_CLASS};
use crate::geometry::BBox;

pub const LABELS_DIR: &str = "labels";
pub const CLASSES_FILE: &str = "classes.txt";

/// Slack, in pixels, absorbed when a denormalised edge lands a rounding
/// error outside the image.
const EDGE_SLACK_PX: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct YoloLabel {
    pub class: u32,
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl YoloLabel {
    pub fn from_box(b: &PixelBox, width: u32, height: u32) -> Self {
        let (fw, fh) = (f64::from(width), f64::from(height));
        Self {
            class: 0,
            cx: (b.x() + b.w() / 2.0) / fw,
            cy: (b.y() + b.h() / 2.0) / fh,
            w: b.w() / fw,
            h: b.h() / fh,
        }
    }

    /// Pixel-space box for a `width` x `height` image.
    pub fn to_box(&self, width: u32, height: u32) -> Result<PixelBox, String> {
        let (fw, fh) = (f64::from(width), f64::from(height));
        let mut x = (self.cx - self.w / 2.0) * fw;
        let mut y = (self.cy - self.h / 2.0) * fh;
        let mut w = self.w * fw;
        let mut h = self.h * fh;
        if (-EDGE_SLACK_PX..0.0).contains(&x) {
            w += x;
            x = 0.0;
        }
        if (-EDGE_SLACK_PX..0.0).contains(&y) {
            h += y;
            y = 0.0;
        }
        if x + w > fw && x + w <= fw + EDGE_SLACK_PX {
            w = fw - x;
        }
        if y + h > fh && y + h <= fh + EDGE_SLACK_PX {
            h = fh - y;
        }
        BBox::within(x, y, w, h, width, height).map_err(|e| e.to_string())
    }

    pub fn to_line(&self) -> String {
        format!("{} {} {} {} {}", self.class, self.cx, self.cy, self.w, self.h)
    }
}

/// Parses one label line; `Ok(None)` for blank lines.
pub fn parse_label_line(line: &str) -> Result<Option<YoloLabel>, String> {
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.is_empty() {
        return Ok(None);
    }
    if fields.len() != 5 {
        return Err(format!("expected 5 fields, found {}", fields.len()));
    }
    let class: u32 = fields[0]
        .parse()
        .map_err(|_| format!("invalid class id {:?}", fields[0]))?;
    if class != 0 {
        return Err(format!("class {class} is not declared (only 0 = {WORKER_CLASS})"));
    }
    let mut coords = [0.0f64; 4];
    for (slot, (name, raw)) in coords
        .iter_mut()
        .zip(["cx", "cy", "w", "h"].into_iter().zip(&fields[1..]))
    {
        let v: f64 = raw.parse().map_err(|_| format!("invalid {name} {raw:?}"))?;
        if !(0.0..=1.0).contains(&v) {
            return Err(format!("{name} = {v} is outside [0, 1]"));
        }
        *slot = v;
    }
    let [cx, cy, w, h] = coords;
    Ok(Some(YoloLabel { class, cx, cy, w, h }))
}

fn check_names_file(labels_dir: &Path) -> Result<(), DatasetError> {
    let candidates = [
        Some(labels_dir.join(CLASSES_FILE)),
        labels_dir.parent().map(|p| p.join(CLASSES_FILE)),
    ];
    let Some(path) = candidates.into_iter().flatten().find(|p| p.is_file()) else {
        return Ok(());
    };
    let text = fs::read_to_string(&path)
        .map_err(|e| DatasetError::io(format!("reading {}", path.display()), e))?;
    let first = text.lines().next().unwrap_or("").trim();
    if first != WORKER_CLASS {
        return Err(DatasetError::Yolo {
            file: path,
            line: 1,
            message: format!("class 0 must be `{WORKER_CLASS}`, found {first:?}"),
        });
    }
    Ok(())
}

/// Reads every `*.txt` label file in `labels_dir` (the names file excepted).
/// File stems are image ids; dimensions come from `dims`.
pub fn import_yolo(labels_dir: &Path, dims: &impl DimensionSource) -> Result<AnnotationSet, DatasetError> {
    check_names_file(labels_dir)?;
    let entries = fs::read_dir(labels_dir)
        .map_err(|e| DatasetError::io(format!("listing {}", labels_dir.display()), e))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "txt"))
        .filter(|p| p.file_name().is_some_and(|n| n != CLASSES_FILE))
        .collect();
    files.sort();

    let mut set = AnnotationSet::new();
    for file in files {
        let image_id = file
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        let (width, height) = dims.dimensions(&image_id).ok_or_else(|| DatasetError::Yolo {
            file: file.clone(),
            line: 0,
            message: format!("no image `{image_id}` to take dimensions from"),
        })?;
        let text = fs::read_to_string(&file)
            .map_err(|e| DatasetError::io(format!("reading {}", file.display()), e))?;
        let mut boxes = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let err = |message| DatasetError::Yolo {
                file: file.clone(),
                line: i + 1,
                message,
            };
            if let Some(label) = parse_label_line(line).map_err(err)? {
                boxes.push(label.to_box(width, height).map_err(err)?);
            }
        }
        set.insert(image_id, boxes);
    }
    Ok(set)
}

/// Writes `labels/<image_id>.txt` for every active image in `split` (empty
/// files for images without boxes), `classes.txt`, and `<split>.txt` image
/// lists for assigned splits.
pub fn export_yolo(manifest: &DatasetManifest, dest: &Path, split: Option<Split>) -> Result<usize, DatasetError> {
    let labels = dest.join(LABELS_DIR);
    let io = |p: &Path, e| DatasetError::io(format!("writing {}", p.display()), e);
    fs::create_dir_all(&labels).map_err(|e| io(&labels, e))?;
    let names = dest.join(CLASSES_FILE);
    fs::write(&names, format!("{WORKER_CLASS}\n")).map_err(|e| io(&names, e))?;

    let mut lists: [Vec<&str>; 3] = Default::default();
    let mut written = 0;
    for r in manifest.records_in(split) {
        let body: String = manifest
            .boxes(&r.image_id)
            .iter()
            .map(|b| YoloLabel::from_box(b, r.width, r.height).to_line() + "\n")
            .collect();
        let path = labels.join(format!("{}.txt", r.image_id));
        fs::write(&path, body).map_err(|e| io(&path, e))?;
        written += 1;
        if let Some(s) = manifest.split_of(&r.image_id) {
            lists[s as usize].push(&r.file);
        }
    }
    for (s, files) in Split::ALL.iter().zip(&lists) {
        if files.is_empty() {
            continue;
        }
        let path = dest.join(format!("{}.txt", s.as_str()));
        let body: String = files.iter().map(|f| format!("{f}\n")).collect();
        fs::write(&path, body).map_err(|e| io(&path, e))?;
    }
    Ok(written)
}
