use std::io::BufReader;
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use synthpipe_core::prompt::read_ndjson;
use synthpipe_gen::{resume_campaign_with, run_campaign, Backend, CampaignReport, HttpBackend, MockBackend, RunOptions};

use crate::config::{BackendConfig, PipelineConfig};
use crate::output::{Invalid, Output};

fn backend(config: &PipelineConfig) -> Result<Arc<dyn Backend>> {
    Ok(match &config.backend {
        BackendConfig::Mock { .. } => Arc::new(MockBackend::new(config.mock_config().expect("mock selected"))),
        BackendConfig::Http { endpoint, .. } => Arc::new(HttpBackend::new(endpoint.clone(), config.backend_token()?)?),
    })
}

fn runtime() -> Result<tokio::runtime::Runtime> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .context("starting async runtime")
}

pub fn run(config: &PipelineConfig, out: &Output, prompts: Option<&Path>, allow_failures: bool) -> Result<()> {
    let path = prompts.unwrap_or(&config.paths.prompts);
    let file = std::fs::File::open(path)
        .map_err(|e| Invalid(format!("prompt file {}: {e}", path.display())))?;
    let specs = read_ndjson(BufReader::new(file))?;
    let backend = backend(config)?;
    let report = runtime()?.block_on(run_campaign(&specs, &config.policy, backend, &config.paths.store))?;
    finish(out, &report, allow_failures)
}

pub fn resume(config: &PipelineConfig, out: &Output, repair_journal: bool, allow_failures: bool) -> Result<()> {
    let backend = backend(config)?;
    let options = RunOptions {
        repair_journal,
        ..RunOptions::default()
    };
    let report =
        runtime()?.block_on(resume_campaign_with(&config.paths.store, &config.policy, backend, options))?;
    finish(out, &report, allow_failures)
}

fn finish(out: &Output, report: &CampaignReport, allow_failures: bool) -> Result<()> {
    out.emit(report)?;
    if report.failed > 0 && !allow_failures {
        bail!(
            "{} of {} jobs failed (see the journal for reasons; --allow-failures accepts this)",
            report.failed,
            report.prompts_total
        );
    }
    Ok(())
}
