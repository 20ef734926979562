use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use synthpipe_core::dataset::{import_coco, CocoDocument, DatasetManifest, Split};
use synthpipe_core::eval::{ap_range, pr_curves, write_pr_csv};
use synthpipe_core::{Detection, GroundTruth};

use crate::config::PipelineConfig;
use crate::output::{read_input, Invalid, Output};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// One `{"image_id", "bbox": [x, y, w, h], "score"}` object per line, or
    /// a JSON array of them (defaults to `paths.detections`).
    #[arg(long)]
    detections: Option<PathBuf>,
    /// COCO ground truth (defaults to `paths.annotations`, then to the
    /// manifest).
    #[arg(long)]
    ground_truth: Option<PathBuf>,
    /// Restrict to one manifest split.
    #[arg(long)]
    split: Option<Split>,
    /// Also write the interpolated precision grids as CSV.
    #[arg(long)]
    pr_csv: Option<PathBuf>,
}

pub fn run(config: &PipelineConfig, out: &Output, args: EvalArgs) -> Result<()> {
    let det_path = args
        .detections
        .or_else(|| config.paths.detections.clone())
        .ok_or_else(|| Invalid("no detections file (--detections or paths.detections)".into()))?;
    let text = read_input(&det_path)?;
    let mut detections = parse_detections(&text).map_err(|e| Invalid(format!("detections {}: {e}", det_path.display())))?;

    let gt_file = args.ground_truth.or_else(|| config.paths.annotations.clone());
    let manifest = match gt_file {
        Some(file) => {
            if args.split.is_some() {
                return Err(Invalid("--split needs the manifest as ground truth".into()).into());
            }
            let text = read_input(&file)?;
            let (records, annotations) = import_coco(&CocoDocument::from_json(&text)?)?;
            let mut m = DatasetManifest::new();
            m.ingest(records, annotations)?;
            m
        }
        None => {
            let path = &config.paths.manifest;
            if !path.is_file() {
                return Err(Invalid(format!("no ground truth: {} does not exist", path.display())).into());
            }
            DatasetManifest::load(path)?
        }
    };

    for d in &detections {
        let record = manifest
            .record(&d.image_id)
            .ok_or_else(|| Invalid(format!("detection references unknown image_id `{}`", d.image_id)))?;
        d.bbox
            .check_bounds(record.width, record.height)
            .map_err(|e| Invalid(format!("detection on `{}`: {e}", d.image_id)))?;
    }
    let ground_truth: GroundTruth = manifest.ground_truth(args.split);
    let before = detections.len();
    detections.retain(|d| ground_truth.contains(&d.image_id));
    if detections.len() < before {
        tracing::warn!(
            "ignored {} detections on images outside the evaluated set",
            before - detections.len()
        );
    }

    let report = ap_range(&detections, &ground_truth)?;
    if let Some(csv) = &args.pr_csv {
        let curves = pr_curves(&detections, &ground_truth)?;
        let file = File::create(csv).with_context(|| format!("writing {}", csv.display()))?;
        write_pr_csv(BufWriter::new(file), &curves).with_context(|| format!("writing {}", csv.display()))?;
    }
    out.emit(&report)
}

/// NDJSON, or a single JSON array.
fn parse_detections(text: &str) -> Result<Vec<Detection>, String> {
    if text.trim_start().starts_with('[') {
        return serde_json::from_str(text).map_err(|e| e.to_string());
    }
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}
