use std::fs::File;
use std::io::BufWriter;

use anyhow::{Context, Result};
use serde_json::json;
use synthpipe_core::prompt::{write_ndjson, PromptSpec};

use crate::config::PipelineConfig;
use crate::output::Output;

pub fn expand(config: &PipelineConfig, out: &Output) -> Result<()> {
    let matrix = config.matrix()?;
    write(config, out, &matrix.expand_full())
}

pub fn sample(config: &PipelineConfig, out: &Output, n: usize, seed: u64) -> Result<()> {
    let matrix = config.matrix()?;
    write(config, out, &matrix.sample(n, seed)?)
}

fn write(config: &PipelineConfig, out: &Output, specs: &[PromptSpec]) -> Result<()> {
    let path = out.path.clone().unwrap_or_else(|| config.paths.prompts.clone());
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(&path).with_context(|| format!("writing {}", path.display()))?;
    write_ndjson(BufWriter::new(file), specs).with_context(|| format!("writing {}", path.display()))?;
    out.summary(&json!({ "prompts": specs.len(), "path": path }));
    Ok(())
}
