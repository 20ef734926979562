//! Append-only campaign journal (`journal.jsonl`), one JSON record per
//! state transition, replayed to recover job state.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::{mpsc, oneshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Pending,
    Submitted,
    Awaiting,
    Completed,
    Failed,
}

impl JobState {
    /// Legal successor states. A job with no record yet is `Pending`.
    pub fn can_become(self, next: JobState) -> bool {
        use JobState::*;
        matches!(
            (self, next),
            (Pending, Submitted)
                | (Pending, Failed)
                | (Submitted, Awaiting)
                | (Submitted, Failed)
                | (Awaiting, Completed)
                | (Awaiting, Failed)
                | (Failed, Pending)
        )
    }
}

/// One persisted quadrant tile, path relative to the store.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersistedImage {
    pub quadrant: u8,
    pub file: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JournalRecord {
    pub prompt_id: u64,
    pub state: JobState,
    pub attempts: u32,
    pub timestamp: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub handle: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<PersistedImage>,
}

/// Lifecycle of one prompt, as reconstructed from the journal.
#[derive(Debug, Clone, PartialEq)]
pub struct GenerationJob {
    pub prompt_id: u64,
    pub state: JobState,
    pub attempts: u32,
    pub backend_handle: Option<String>,
    pub submitted_at: Option<DateTime<Utc>>,
    pub completed_at: Option<DateTime<Utc>>,
    pub failure_reason: Option<String>,
    pub images: Vec<PersistedImage>,
}

impl GenerationJob {
    pub fn new(prompt_id: u64) -> Self {
        Self {
            prompt_id,
            state: JobState::Pending,
            attempts: 0,
            backend_handle: None,
            submitted_at: None,
            completed_at: None,
            failure_reason: None,
            images: Vec::new(),
        }
    }

    pub fn apply(&mut self, rec: &JournalRecord) {
        self.state = rec.state;
        self.attempts = rec.attempts;
        match rec.state {
            JobState::Pending => {
                self.backend_handle = None;
                self.failure_reason = None;
            }
            JobState::Submitted => {
                self.backend_handle = rec.handle.clone();
                self.submitted_at = Some(rec.timestamp);
            }
            JobState::Awaiting => {}
            JobState::Completed => {
                self.completed_at = Some(rec.timestamp);
                self.images = rec.images.clone();
            }
            JobState::Failed => self.failure_reason = rec.reason.clone(),
        }
    }

    /// A record moving this job to `state`, carrying its current handle.
    pub fn record(&self, state: JobState) -> JournalRecord {
        JournalRecord {
            prompt_id: self.prompt_id,
            state,
            attempts: self.attempts,
            timestamp: Utc::now(),
            handle: self.backend_handle.clone(),
            reason: None,
            images: Vec::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("{}: line {line}: malformed record: {message}", .path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: line {line}: prompt {prompt_id} cannot go from {from:?} to {to:?}", .path.display())]
    IllegalTransition {
        path: PathBuf,
        line: usize,
        prompt_id: u64,
        from: JobState,
        to: JobState,
    },
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Replays `path` into per-prompt job state. `known` restricts which prompt
/// ids may appear. The first malformed or inconsistent record aborts the
/// replay with its line number.
pub fn replay(path: &Path, known: impl Fn(u64) -> bool) -> Result<BTreeMap<u64, GenerationJob>, JournalError> {
    let io = |source| JournalError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = File::open(path).map_err(io)?;
    let mut reader = BufReader::new(file);
    let mut jobs: BTreeMap<u64, GenerationJob> = BTreeMap::new();
    let mut buf = String::new();
    let mut line = 0;
    loop {
        buf.clear();
        if reader.read_line(&mut buf).map_err(io)? == 0 {
            break;
        }
        line += 1;
        let malformed = |message: String| JournalError::Malformed {
            path: path.to_path_buf(),
            line,
            message,
        };
        if !buf.ends_with('\n') {
            return Err(malformed("truncated record (no line terminator)".into()));
        }
        let rec: JournalRecord = serde_json::from_str(buf.trim_end()).map_err(|e| malformed(e.to_string()))?;
        if !known(rec.prompt_id) {
            return Err(malformed(format!("unknown prompt id {}", rec.prompt_id)));
        }
        let job = jobs.entry(rec.prompt_id).or_insert_with(|| GenerationJob::new(rec.prompt_id));
        if !job.state.can_become(rec.state) {
            return Err(JournalError::IllegalTransition {
                path: path.to_path_buf(),
                line,
                prompt_id: rec.prompt_id,
                from: job.state,
                to: rec.state,
            });
        }
        if rec.state == JobState::Completed {
            let mut quadrants: Vec<u8> = rec.images.iter().map(|i| i.quadrant).collect();
            quadrants.sort_unstable();
            if quadrants != [0, 1, 2, 3] {
                return Err(malformed("completed record must list quadrants 0-3".into()));
            }
        }
        job.apply(&rec);
    }
    Ok(jobs)
}

/// Cuts an unterminated final line (a write torn by a crash) off the journal.
/// Returns the number of bytes removed.
pub fn repair_tail(path: &Path) -> std::io::Result<u64> {
    let bytes = std::fs::read(path)?;
    let keep = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let cut = (bytes.len() - keep) as u64;
    if cut > 0 {
        OpenOptions::new().write(true).open(path)?.set_len(keep as u64)?;
    }
    Ok(cut)
}

pub(crate) type Ack = oneshot::Sender<Result<(), String>>;

/// Single writer: every record goes through one channel to one thread that
/// owns the file, so lines never interleave.
#[derive(Clone)]
pub(crate) struct JournalHandle {
    tx: mpsc::Sender<(JournalRecord, Ack)>,
}

pub(crate) enum WriteError {
    /// The writer stopped taking records (limit reached).
    Closed,
    Io(String),
}

impl JournalHandle {
    pub(crate) async fn append(&self, rec: JournalRecord) -> Result<(), WriteError> {
        let (ack, done) = oneshot::channel();
        self.tx.send((rec, ack)).await.map_err(|_| WriteError::Closed)?;
        match done.await {
            Ok(Ok(())) => Ok(()),
            Ok(Err(e)) => Err(WriteError::Io(e)),
            Err(_) => Err(WriteError::Closed),
        }
    }
}

/// Opens `path` for appending and starts the writer thread. After `limit`
/// records the writer stops, simulating an abrupt crash.
pub(crate) fn spawn_writer(
    path: &Path,
    limit: Option<usize>,
) -> std::io::Result<(JournalHandle, tokio::task::JoinHandle<()>)> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    let (tx, mut rx) = mpsc::channel::<(JournalRecord, Ack)>(64);
    let task = tokio::task::spawn_blocking(move || {
        let mut written = 0usize;
        while let Some((rec, ack)) = rx.blocking_recv() {
            if limit.is_some_and(|l| written >= l) {
                break;
            }
            let mut line = serde_json::to_vec(&rec).expect("journal record serializes");
            line.push(b'\n');
            let res = file.write_all(&line).and_then(|_| file.flush());
            written += 1;
            let failed = res.is_err();
            let _ = ack.send(res.map_err(|e| e.to_string()));
            if failed {
                break;
            }
        }
        let _ = file.sync_all();
    });
    Ok((JournalHandle { tx }, task))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(prompt_id: u64, state: JobState, attempts: u32) -> JournalRecord {
        JournalRecord {
            prompt_id,
            state,
            attempts,
            timestamp: Utc::now(),
            handle: Some("h".into()),
            reason: None,
            images: Vec::new(),
        }
    }

    fn write(path: &Path, recs: &[JournalRecord]) {
        let body: String = recs.iter().map(|r| serde_json::to_string(r).unwrap() + "\n").collect();
        std::fs::write(path, body).unwrap();
    }

    #[test]
    fn replays_latest_state() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("journal.jsonl");
        write(
            &p,
            &[
                rec(0, JobState::Submitted, 1),
                rec(1, JobState::Submitted, 1),
                rec(0, JobState::Awaiting, 1),
                rec(0, JobState::Failed, 1),
                rec(0, JobState::Pending, 1),
            ],
        );
        let jobs = replay(&p, |_| true).unwrap();
        assert_eq!(jobs[&0].state, JobState::Pending);
        assert_eq!(jobs[&0].attempts, 1);
        assert_eq!(jobs[&1].state, JobState::Submitted);
        assert_eq!(jobs[&1].backend_handle.as_deref(), Some("h"));
    }

    #[test]
    fn truncated_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("journal.jsonl");
        write(&p, &[rec(0, JobState::Submitted, 1)]);
        let mut text = std::fs::read_to_string(&p).unwrap();
        text.push_str(r#"{"prompt_id":0,"state":"awa"#);
        std::fs::write(&p, text).unwrap();
        match replay(&p, |_| true) {
            Err(JournalError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn torn_tail_is_repaired() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("journal.jsonl");
        write(&p, &[rec(0, JobState::Submitted, 1)]);
        let intact = std::fs::read(&p).unwrap();
        let mut text = intact.clone();
        text.extend_from_slice(br#"{"prompt_id":0,"st"#);
        std::fs::write(&p, &text).unwrap();
        assert_eq!(repair_tail(&p).unwrap(), 18);
        assert_eq!(std::fs::read(&p).unwrap(), intact);
        assert_eq!(repair_tail(&p).unwrap(), 0);
        assert_eq!(replay(&p, |_| true).unwrap()[&0].state, JobState::Submitted);
    }

    #[test]
    fn illegal_transition_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("journal.jsonl");
        write(&p, &[rec(0, JobState::Submitted, 1), rec(0, JobState::Completed, 1)]);
        assert!(matches!(
            replay(&p, |_| true),
            Err(JournalError::IllegalTransition { line: 2, .. })
        ));
        write(&p, &[rec(5, JobState::Submitted, 1)]);
        assert!(matches!(replay(&p, |id| id < 5), Err(JournalError::Malformed { .. })));
    }

    #[test]
    fn transitions() {
        use JobState::*;
        assert!(Pending.can_become(Submitted));
        assert!(Failed.can_become(Pending));
        assert!(!Completed.can_become(Pending));
        assert!(!Pending.can_become(Completed));
        assert!(!Failed.can_become(Submitted));
    }
}
