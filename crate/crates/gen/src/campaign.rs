//! Campaign driver: prompts in, four persisted tiles per prompt out.
//!
//! Store layout:
//!
//! ```text
//! <store>/prompts.jsonl   prompt set the campaign was started with
//! <store>/journal.jsonl   append-only state log
//! <store>/images/img_<prompt:06>_<quadrant>.png
//! <store>/report.json     totals of the last run or resume
//! ```
//!
//! Tiles are written to a temporary name and renamed, so a tile under its
//! final name is always complete. A job whose four tiles exist when it is
//! re-driven is marked completed without contacting the backend again.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use synthpipe_core::prompt::{read_ndjson, write_ndjson, PromptSpec};
use thiserror::Error;
use tokio::sync::Semaphore;
use tokio::task::JoinSet;
use tokio::time::sleep;

use crate::backend::{Backend, BackendError, PollStatus};
use crate::journal::{
    repair_tail, replay, spawn_writer, GenerationJob, JobState, JournalError, JournalHandle, PersistedImage, WriteError,
};
use crate::policy::{BackendPolicy, PolicyError};
use crate::quad::{encode_png, split_quad, QuadImage};

pub const PROMPTS_FILE: &str = "prompts.jsonl";
pub const JOURNAL_FILE: &str = "journal.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const IMAGES_DIR: &str = "images";

#[derive(Debug, Error)]
pub enum CampaignError {
    #[error("journal exists at {} (use resume)", .0.display())]
    JournalExists(PathBuf),
    #[error("no journal at {}", .0.display())]
    NoJournal(PathBuf),
    #[error("invalid prompt set: {0}")]
    InvalidPrompts(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Journal(#[from] JournalError),
    #[error("store write failed ({context}): {message}")]
    Store { context: String, message: String },
    #[error("campaign interrupted")]
    Interrupted,
}

impl CampaignError {
    fn store(context: impl Into<String>, e: impl ToString) -> Self {
        Self::Store {
            context: context.into(),
            message: e.to_string(),
        }
    }
}

impl From<WriteError> for CampaignError {
    fn from(e: WriteError) -> Self {
        match e {
            WriteError::Closed => CampaignError::Interrupted,
            WriteError::Io(msg) => CampaignError::store("journal append", msg),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignReport {
    pub prompts_total: usize,
    pub completed: usize,
    pub failed: usize,
    pub images_persisted: usize,
    /// Submissions over the whole campaign, including retries.
    pub attempts: u64,
    /// Seconds spent in this invocation.
    pub wall_time: f64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Test hook: stop the journal writer after this many records, which
    /// aborts the campaign the way a crash would.
    pub interrupt_after: Option<usize>,
    /// On resume, cut an unterminated final journal line (a write torn by a
    /// crash) instead of failing on it.
    pub repair_journal: bool,
}

pub fn tile_name(prompt_id: u64, quadrant: u8) -> String {
    format!("img_{prompt_id:06}_{quadrant}.png")
}

struct Ctx {
    backend: Arc<dyn Backend>,
    policy: BackendPolicy,
    journal: JournalHandle,
    store: PathBuf,
    permits: Semaphore,
}

impl Ctx {
    fn tile_path(&self, prompt_id: u64, quadrant: u8) -> PathBuf {
        self.store.join(IMAGES_DIR).join(tile_name(prompt_id, quadrant))
    }

    async fn transition(&self, job: &mut GenerationJob, state: JobState, reason: Option<String>) -> Result<(), CampaignError> {
        let mut rec = job.record(state);
        rec.reason = reason;
        self.journal.append(rec.clone()).await?;
        job.apply(&rec);
        Ok(())
    }

    async fn complete(&self, job: &mut GenerationJob, images: Vec<PersistedImage>) -> Result<(), CampaignError> {
        let mut rec = job.record(JobState::Completed);
        rec.images = images;
        self.journal.append(rec.clone()).await?;
        job.apply(&rec);
        Ok(())
    }

    /// The four tiles if they are all already on disk.
    fn existing_tiles(&self, prompt_id: u64) -> Option<Vec<PersistedImage>> {
        (0..4u8)
            .map(|q| {
                let path = self.tile_path(prompt_id, q);
                let (width, height) = image::image_dimensions(&path).ok()?;
                Some(PersistedImage {
                    quadrant: q,
                    file: format!("{IMAGES_DIR}/{}", tile_name(prompt_id, q)),
                    width,
                    height,
                })
            })
            .collect()
    }

    fn remove_tiles(&self, prompt_id: u64) {
        for q in 0..4 {
            let _ = fs::remove_file(self.tile_path(prompt_id, q));
        }
    }

    /// Splits and writes the composite. The outer error aborts the campaign
    /// (store failure); the inner one fails only this attempt (bad image).
    async fn persist(self: &Arc<Self>, prompt_id: u64, png: Vec<u8>) -> Result<Result<Vec<PersistedImage>, String>, CampaignError> {
        let ctx = Arc::clone(self);
        tokio::task::spawn_blocking(move || {
            let quad = match QuadImage::from_png(&png) {
                Ok(q) => q,
                Err(e) => return Ok(Err(e.to_string())),
            };
            let mut out = Vec::with_capacity(4);
            for (q, tile) in split_quad(&quad).iter().enumerate() {
                let q = q as u8;
                let bytes = encode_png(tile).map_err(|e| CampaignError::store("encoding tile", e))?;
                let path = ctx.tile_path(prompt_id, q);
                let tmp = path.with_extension("png.tmp");
                fs::write(&tmp, bytes)
                    .and_then(|_| fs::rename(&tmp, &path))
                    .map_err(|e| CampaignError::store(path.display().to_string(), e))?;
                out.push(PersistedImage {
                    quadrant: q,
                    file: format!("{IMAGES_DIR}/{}", tile_name(prompt_id, q)),
                    width: tile.width(),
                    height: tile.height(),
                });
            }
            Ok(Ok(out))
        })
        .await
        .map_err(|e| CampaignError::store("tile writer", e))?
    }

    /// Polls the current handle until a terminal answer or the timeout.
    async fn await_result(self: &Arc<Self>, job: &mut GenerationJob) -> Result<(), CampaignError> {
        if let Some(images) = self.existing_tiles(job.prompt_id) {
            return self.complete(job, images).await;
        }
        let handle = crate::backend::JobHandle(job.backend_handle.clone().unwrap_or_default());
        let deadline = Instant::now() + self.policy.timeout();
        loop {
            let failure = match self.backend.poll(&handle).await {
                Ok(PollStatus::Pending) => None,
                Ok(PollStatus::Ready(png)) => match self.persist(job.prompt_id, png).await? {
                    Ok(images) => return self.complete(job, images).await,
                    Err(reason) => Some(reason),
                },
                Ok(PollStatus::Error(msg)) => Some(format!("backend reported: {msg}")),
                Err(e) if e.is_retryable() => {
                    tracing::debug!(prompt_id = job.prompt_id, "poll: {e}");
                    None
                }
                Err(e) => Some(e.to_string()),
            };
            if let Some(reason) = failure {
                return self.transition(job, JobState::Failed, Some(reason)).await;
            }
            if Instant::now() + self.policy.poll_every() > deadline {
                let reason = format!("timed out after {}s", self.policy.per_job_timeout);
                return self.transition(job, JobState::Failed, Some(reason)).await;
            }
            sleep(self.policy.poll_every()).await;
        }
    }

    async fn drive(self: Arc<Self>, prompt: PromptSpec, mut job: GenerationJob) -> Result<(), CampaignError> {
        let _permit = self.permits.acquire().await.expect("semaphore open");
        loop {
            match job.state {
                JobState::Completed => return Ok(()),
                JobState::Failed => {
                    if !self.policy.may_retry(job.attempts) {
                        self.remove_tiles(job.prompt_id);
                        return Ok(());
                    }
                    sleep(self.policy.poll_every()).await;
                    self.transition(&mut job, JobState::Pending, None).await?;
                }
                JobState::Pending => match self.backend.submit(prompt.id, &prompt.rendered).await {
                    Ok(handle) => {
                        job.attempts += 1;
                        job.backend_handle = Some(handle.0);
                        self.transition(&mut job, JobState::Submitted, None).await?;
                    }
                    Err(e) => {
                        job.attempts += 1;
                        let reason = match e {
                            BackendError::Transport(_) => format!("submit failed: {e}"),
                            _ => e.to_string(),
                        };
                        self.transition(&mut job, JobState::Failed, Some(reason)).await?;
                    }
                },
                JobState::Submitted => self.transition(&mut job, JobState::Awaiting, None).await?,
                JobState::Awaiting => self.await_result(&mut job).await?,
            }
        }
    }
}

fn check_prompts(prompts: &[PromptSpec]) -> Result<(), CampaignError> {
    if prompts.is_empty() {
        return Err(CampaignError::InvalidPrompts("no prompts".into()));
    }
    let ids: BTreeSet<u64> = prompts.iter().map(|p| p.id).collect();
    if ids.len() != prompts.len() {
        return Err(CampaignError::InvalidPrompts("duplicate prompt ids".into()));
    }
    if ids.last().copied() != Some(prompts.len() as u64 - 1) {
        return Err(CampaignError::InvalidPrompts(format!(
            "prompt ids must be dense 0..{}",
            prompts.len() - 1
        )));
    }
    Ok(())
}

/// Starts a new campaign in `store_dir`. Refuses if a journal already exists.
pub async fn run_campaign(
    prompts: &[PromptSpec],
    policy: &BackendPolicy,
    backend: Arc<dyn Backend>,
    store_dir: &Path,
) -> Result<CampaignReport, CampaignError> {
    run_campaign_with(prompts, policy, backend, store_dir, RunOptions::default()).await
}

pub async fn run_campaign_with(
    prompts: &[PromptSpec],
    policy: &BackendPolicy,
    backend: Arc<dyn Backend>,
    store_dir: &Path,
    options: RunOptions,
) -> Result<CampaignReport, CampaignError> {
    policy.validate()?;
    check_prompts(prompts)?;
    let journal = store_dir.join(JOURNAL_FILE);
    if journal.exists() {
        return Err(CampaignError::JournalExists(journal));
    }
    let images = store_dir.join(IMAGES_DIR);
    fs::create_dir_all(&images).map_err(|e| CampaignError::store(images.display().to_string(), e))?;
    let prompts_path = store_dir.join(PROMPTS_FILE);
    let tmp = prompts_path.with_extension("jsonl.tmp");
    fs::File::create(&tmp)
        .and_then(|f| write_ndjson(std::io::BufWriter::new(f), prompts))
        .and_then(|_| fs::rename(&tmp, &prompts_path))
        .map_err(|e| CampaignError::store(prompts_path.display().to_string(), e))?;
    fs::File::create_new(&journal).map_err(|e| CampaignError::store(journal.display().to_string(), e))?;
    drive_all(prompts.to_vec(), BTreeMap::new(), policy, backend, store_dir, options).await
}

/// Continues the campaign recorded in `store_dir`, re-driving only jobs
/// that are not terminal under `policy`.
pub async fn resume_campaign(
    store_dir: &Path,
    policy: &BackendPolicy,
    backend: Arc<dyn Backend>,
) -> Result<CampaignReport, CampaignError> {
    resume_campaign_with(store_dir, policy, backend, RunOptions::default()).await
}

pub async fn resume_campaign_with(
    store_dir: &Path,
    policy: &BackendPolicy,
    backend: Arc<dyn Backend>,
    options: RunOptions,
) -> Result<CampaignReport, CampaignError> {
    policy.validate()?;
    let journal = store_dir.join(JOURNAL_FILE);
    if !journal.is_file() {
        return Err(CampaignError::NoJournal(journal));
    }
    let prompts = load_prompts(store_dir)?;
    if options.repair_journal {
        let cut = repair_tail(&journal).map_err(|e| CampaignError::store(journal.display().to_string(), e))?;
        if cut > 0 {
            tracing::warn!("dropped {cut} bytes of a torn record at the end of the journal");
        }
    }
    let jobs = replay(&journal, |id| id < prompts.len() as u64)?;
    let images = store_dir.join(IMAGES_DIR);
    fs::create_dir_all(&images).map_err(|e| CampaignError::store(images.display().to_string(), e))?;
    if let Ok(entries) = fs::read_dir(&images) {
        for e in entries.flatten() {
            if e.path().extension().is_some_and(|x| x == "tmp") {
                let _ = fs::remove_file(e.path());
            }
        }
    }
    drive_all(prompts, jobs, policy, backend, store_dir, options).await
}

fn load_prompts(store_dir: &Path) -> Result<Vec<PromptSpec>, CampaignError> {
    let path = store_dir.join(PROMPTS_FILE);
    let file = fs::File::open(&path).map_err(|e| CampaignError::InvalidPrompts(format!("{}: {e}", path.display())))?;
    let prompts = read_ndjson(BufReader::new(file)).map_err(|e| CampaignError::InvalidPrompts(e.to_string()))?;
    check_prompts(&prompts)?;
    let mut prompts = prompts;
    prompts.sort_by_key(|p| p.id);
    Ok(prompts)
}

async fn drive_all(
    prompts: Vec<PromptSpec>,
    mut jobs: BTreeMap<u64, GenerationJob>,
    policy: &BackendPolicy,
    backend: Arc<dyn Backend>,
    store_dir: &Path,
    options: RunOptions,
) -> Result<CampaignReport, CampaignError> {
    let started = Instant::now();
    let journal_path = store_dir.join(JOURNAL_FILE);
    let (journal, writer) = spawn_writer(&journal_path, options.interrupt_after)
        .map_err(|e| CampaignError::store(journal_path.display().to_string(), e))?;
    let ctx = Arc::new(Ctx {
        backend,
        policy: *policy,
        journal,
        store: store_dir.to_path_buf(),
        permits: Semaphore::new(policy.max_in_flight),
    });

    let mut tasks = JoinSet::new();
    for prompt in prompts.iter() {
        let job = jobs.remove(&prompt.id).unwrap_or_else(|| GenerationJob::new(prompt.id));
        let terminal = match job.state {
            JobState::Completed => true,
            JobState::Failed => !policy.may_retry(job.attempts),
            _ => false,
        };
        if terminal {
            continue;
        }
        tasks.spawn(Arc::clone(&ctx).drive(prompt.clone(), job));
    }

    let mut first_error = None;
    while let Some(res) = tasks.join_next().await {
        let res = res.unwrap_or_else(|e| Err(CampaignError::store("worker", e)));
        if let Err(e) = res {
            if first_error.is_none() {
                tasks.abort_all();
                first_error = Some(e);
            }
        }
    }
    drop(ctx);
    let _ = writer.await;
    if let Some(e) = first_error {
        return Err(e);
    }

    let report = summarize(store_dir, prompts.len(), started.elapsed().as_secs_f64())?;
    let path = store_dir.join(REPORT_FILE);
    fs::write(&path, serde_json::to_string_pretty(&report).expect("report serializes") + "\n")
        .map_err(|e| CampaignError::store(path.display().to_string(), e))?;
    Ok(report)
}

fn summarize(store_dir: &Path, total: usize, wall_time: f64) -> Result<CampaignReport, CampaignError> {
    let jobs = replay(&store_dir.join(JOURNAL_FILE), |id| id < total as u64)?;
    let completed: Vec<_> = jobs.values().filter(|j| j.state == JobState::Completed).collect();
    Ok(CampaignReport {
        prompts_total: total,
        completed: completed.len(),
        failed: jobs.values().filter(|j| j.state == JobState::Failed).count(),
        images_persisted: completed.iter().map(|j| j.images.len()).sum(),
        attempts: jobs.values().map(|j| u64::from(j.attempts)).sum(),
        wall_time,
    })
}

/// Replays the journal in `store_dir` without driving anything.
pub fn campaign_jobs(store_dir: &Path) -> Result<(Vec<PromptSpec>, BTreeMap<u64, GenerationJob>), CampaignError> {
    let prompts = load_prompts(store_dir)?;
    let jobs = replay(&store_dir.join(JOURNAL_FILE), |id| id < prompts.len() as u64)?;
    Ok((prompts, jobs))
}

/// Tiles of every completed job, as `(prompt_id, tile)` in prompt order.
pub fn persisted_images(store_dir: &Path) -> Result<Vec<(u64, PersistedImage)>, CampaignError> {
    let (_, jobs) = campaign_jobs(store_dir)?;
    Ok(jobs
        .into_values()
        .filter(|j| j.state == JobState::Completed)
        .flat_map(|j| {
            let id = j.prompt_id;
            let mut images = j.images;
            images.sort_by_key(|i| i.quadrant);
            images.into_iter().map(move |i| (id, i))
        })
        .collect())
}
