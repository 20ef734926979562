use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use serde_json::json;
use synthpipe_core::dataset::{
    export_coco, export_yolo, import_coco, import_yolo, CocoDocument, DatasetManifest, ImageRecord, Provenance,
    Split, SplitCounts, LABELS_DIR,
};
use synthpipe_gen::persisted_images;

use crate::config::PipelineConfig;
use crate::output::{read_input, Invalid, Output};

#[derive(Debug, Subcommand)]
pub enum DatasetCmd {
    /// Add images and annotations to the manifest (created if missing).
    Import(ImportArgs),
    /// Mark images as excluded, with a reason.
    Exclude {
        /// Image ids to exclude.
        ids: Vec<String>,
        /// File with one image id per line.
        #[arg(long)]
        ids_file: Option<PathBuf>,
        #[arg(long)]
        reason: String,
    },
    /// Assign train/val/test over the active images.
    Split {
        #[arg(long)]
        train: Option<usize>,
        #[arg(long)]
        val: Option<usize>,
        #[arg(long)]
        test: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Keep the four tiles of a prompt in one split.
        #[arg(long)]
        group_by_prompt: bool,
    },
    /// Counts over the active images.
    Stats,
    /// Write annotations in COCO or YOLO layout.
    Export(ExportArgs),
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false, args = ["coco", "yolo", "generated"])]
pub struct ImportArgs {
    /// COCO detection JSON.
    #[arg(long)]
    coco: Option<PathBuf>,
    /// YOLO label directory; images must already be in the manifest.
    #[arg(long)]
    yolo: Option<PathBuf>,
    /// Tiles persisted by a generation campaign.
    #[arg(long)]
    generated: bool,
    /// Campaign store for `--generated` (defaults to `paths.store`).
    #[arg(long, requires = "generated")]
    store: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    target: ExportTarget,
    /// Only this split.
    #[arg(long)]
    split: Option<Split>,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct ExportTarget {
    /// COCO JSON file to write.
    #[arg(long)]
    coco: Option<PathBuf>,
    /// Directory for `labels/`, `classes.txt` and split lists.
    #[arg(long)]
    yolo: Option<PathBuf>,
}

pub fn dispatch(config: &PipelineConfig, out: &Output, cmd: DatasetCmd) -> Result<()> {
    let path = &config.paths.manifest;
    match cmd {
        DatasetCmd::Import(args) => import(config, out, args),
        DatasetCmd::Exclude { ids, ids_file, reason } => {
            let mut manifest = open(path)?;
            let mut ids = ids;
            if let Some(file) = ids_file {
                let text = read_input(&file)?;
                ids.extend(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from));
            }
            if ids.is_empty() {
                return Err(Invalid("no image ids given".into()).into());
            }
            let before = manifest.active_count();
            let warnings = manifest.exclude(&ids, &reason)?;
            manifest.save(path)?;
            out.emit(&json!({
                "excluded": before - manifest.active_count(),
                "already_excluded": warnings.len(),
                "active": manifest.active_count(),
                "warnings": warnings,
            }))
        }
        DatasetCmd::Split {
            train,
            val,
            test,
            seed,
            group_by_prompt,
        } => {
            let mut manifest = open(path)?;
            let s = &config.split;
            let need = |flag: Option<usize>, conf: Option<usize>, name: &str| {
                flag.or(conf)
                    .ok_or_else(|| Invalid(format!("split size `{name}` missing (flag or [split] config)")))
            };
            let counts = SplitCounts::new(
                need(train, s.train, "train")?,
                need(val, s.val, "val")?,
                need(test, s.test, "test")?,
            );
            let seed = seed.or(s.seed).unwrap_or(0);
            manifest.assign_splits(counts, seed, group_by_prompt || s.group_by_prompt)?;
            manifest.save(path)?;
            let tally = manifest.stats().splits;
            out.emit(&json!({
                "seed": seed,
                "train": tally.train,
                "val": tally.val,
                "test": tally.test,
            }))
        }
        DatasetCmd::Stats => out.emit(&open(path)?.stats()),
        DatasetCmd::Export(args) => {
            let manifest = open(path)?;
            if let Some(file) = args.target.coco {
                let doc = export_coco(&manifest, args.split);
                std::fs::write(&file, doc.to_json()).with_context(|| format!("writing {}", file.display()))?;
                out.summary(&json!({
                    "format": "coco",
                    "path": file,
                    "images": doc.images.len(),
                    "annotations": doc.annotations.len(),
                }));
            } else if let Some(dir) = args.target.yolo {
                let files = export_yolo(&manifest, &dir, args.split)?;
                out.summary(&json!({ "format": "yolo", "path": dir, "label_files": files }));
            }
            Ok(())
        }
    }
}

fn open(path: &Path) -> Result<DatasetManifest> {
    if !path.is_file() {
        return Err(Invalid(format!("no manifest at {} (run `dataset import` first)", path.display())).into());
    }
    Ok(DatasetManifest::load(path)?)
}

fn open_or_new(path: &Path) -> Result<DatasetManifest> {
    if path.exists() {
        open(path)
    } else {
        Ok(DatasetManifest::new())
    }
}

fn import(config: &PipelineConfig, out: &Output, args: ImportArgs) -> Result<()> {
    let path = &config.paths.manifest;
    let mut manifest = open_or_new(path)?;
    let (source, records, boxes) = if let Some(file) = args.coco {
        let text = read_input(&file)?;
        let (records, annotations) = import_coco(&CocoDocument::from_json(&text)?)?;
        let (n, b) = (records.len(), annotations.num_boxes());
        manifest.ingest(records, annotations)?;
        ("coco", n, b)
    } else if let Some(dir) = args.yolo {
        let labels = if dir.join(LABELS_DIR).is_dir() { dir.join(LABELS_DIR) } else { dir };
        let annotations = import_yolo(&labels, &manifest)?;
        let (n, b) = (annotations.num_images(), annotations.num_boxes());
        manifest.set_annotations(annotations)?;
        ("yolo", n, b)
    } else {
        let store = args.store.unwrap_or_else(|| config.paths.store.clone());
        let records: Vec<ImageRecord> = persisted_images(&store)?
            .into_iter()
            .map(|(prompt_id, img)| {
                let file = store.join(&img.file);
                let stem = Path::new(&img.file).file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                ImageRecord::new(stem, file.to_string_lossy(), img.width, img.height).with_provenance(
                    Provenance::Generated {
                        prompt_id,
                        quadrant: img.quadrant,
                    },
                )
            })
            .collect();
        let n = records.len();
        manifest.ingest(records, Default::default())?;
        ("generated", n, 0)
    };
    manifest.save(path)?;
    out.emit(&json!({
        "source": source,
        "images": records,
        "boxes": boxes,
        "total_images": manifest.records().len(),
        "active": manifest.active_count(),
    }))
}
