use std::collections::HashMap;
use std::sync::Mutex;

use async_trait::async_trait;
use image::{Rgba, RgbaImage};

use super::{Backend, BackendError, JobHandle, PollStatus};
use crate::quad::encode_png;

/// Behaviour knobs for [`MockBackend`].
#[derive(Debug, Clone, PartialEq)]
pub struct MockConfig {
    /// Polls answered `Pending` before the result is delivered.
    pub polls_until_ready: u32,
    pub width: u32,
    pub height: u32,
    /// The first `failing_attempts` submissions of every prompt end in a
    /// generation error.
    pub failing_attempts: u32,
    /// Every submission ends in a generation error.
    pub always_error: bool,
    /// The first `transport_failures` polls of every job fail as transport
    /// errors before the normal sequence starts.
    pub transport_failures: u32,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            polls_until_ready: 2,
            width: 64,
            height: 64,
            failing_attempts: 0,
            always_error: false,
            transport_failures: 0,
        }
    }
}

#[derive(Debug)]
struct MockJob {
    prompt_id: u64,
    attempt: u32,
    polls: u32,
    delivered: bool,
}

#[derive(Debug, Default)]
struct MockState {
    jobs: HashMap<String, MockJob>,
    attempts: HashMap<u64, u32>,
    submits: usize,
    polls: usize,
    in_flight: usize,
    peak_in_flight: usize,
}

/// Deterministic in-process backend.
///
/// Images are drawn procedurally from the prompt id (see
/// [`mock_composite`]), so two runs over the same prompts persist identical
/// files. A job counts as in flight from `submit` until its result (image or
/// error) is first delivered; the peak is exposed for concurrency checks.
#[derive(Debug, Default)]
pub struct MockBackend {
    config: MockConfig,
    state: Mutex<MockState>,
}

impl MockBackend {
    pub fn new(config: MockConfig) -> Self {
        Self {
            config,
            state: Mutex::new(MockState::default()),
        }
    }

    pub fn submits(&self) -> usize {
        self.state.lock().unwrap().submits
    }

    pub fn polls(&self) -> usize {
        self.state.lock().unwrap().polls
    }

    pub fn peak_in_flight(&self) -> usize {
        self.state.lock().unwrap().peak_in_flight
    }

    pub fn in_flight(&self) -> usize {
        self.state.lock().unwrap().in_flight
    }
}

/// The composite the mock delivers for `prompt_id`: each quadrant a distinct
/// gradient seeded by the prompt id and quadrant index.
pub fn mock_composite(prompt_id: u64, width: u32, height: u32) -> RgbaImage {
    let (hw, hh) = ((width / 2).max(1), (height / 2).max(1));
    RgbaImage::from_fn(width, height, |x, y| {
        let quadrant = u64::from((x / hw).min(1) + 2 * (y / hh).min(1));
        let seed = prompt_id.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (quadrant << 56);
        let base = seed.to_le_bytes();
        Rgba([
            base[0].wrapping_add((x % 256) as u8),
            base[1].wrapping_add((y % 256) as u8),
            base[2] ^ base[7],
            255,
        ])
    })
}

fn parse_handle(handle: &str) -> Option<(u64, u32)> {
    let (prompt_id, attempt) = handle.strip_prefix("mock-")?.split_once('-')?;
    Some((prompt_id.parse().ok()?, attempt.parse().ok()?))
}

#[async_trait]
impl Backend for MockBackend {
    async fn submit(&self, prompt_id: u64, _prompt: &str) -> Result<JobHandle, BackendError> {
        let mut st = self.state.lock().unwrap();
        st.submits += 1;
        let attempt = {
            let a = st.attempts.entry(prompt_id).or_insert(0);
            *a += 1;
            *a
        };
        let handle = format!("mock-{prompt_id}-{attempt}");
        st.jobs.insert(
            handle.clone(),
            MockJob {
                prompt_id,
                attempt,
                polls: 0,
                delivered: false,
            },
        );
        st.in_flight += 1;
        st.peak_in_flight = st.peak_in_flight.max(st.in_flight);
        Ok(JobHandle(handle))
    }

    async fn poll(&self, handle: &JobHandle) -> Result<PollStatus, BackendError> {
        let cfg = &self.config;
        let mut guard = self.state.lock().unwrap();
        let st = &mut *guard;
        st.polls += 1;
        if !st.jobs.contains_key(handle.as_str()) {
            // A handle issued by an earlier process: the simulated service
            // outlives its clients, so the job is picked up where the handle
            // says and starts its poll count afresh.
            let (prompt_id, attempt) =
                parse_handle(handle.as_str()).ok_or_else(|| BackendError::UnknownHandle(handle.0.clone()))?;
            st.jobs.insert(
                handle.0.clone(),
                MockJob {
                    prompt_id,
                    attempt,
                    polls: 0,
                    delivered: false,
                },
            );
            st.in_flight += 1;
            st.peak_in_flight = st.peak_in_flight.max(st.in_flight);
        }
        let job = st.jobs.get_mut(handle.as_str()).expect("registered above");
        job.polls += 1;
        if job.polls <= cfg.transport_failures {
            return Err(BackendError::Transport("mock connection reset".into()));
        }
        if job.polls - cfg.transport_failures <= cfg.polls_until_ready {
            return Ok(PollStatus::Pending);
        }
        let failed = cfg.always_error || job.attempt <= cfg.failing_attempts;
        let prompt_id = job.prompt_id;
        if !job.delivered {
            job.delivered = true;
            st.in_flight -= 1;
        }
        drop(guard);
        if failed {
            return Ok(PollStatus::Error("mock generation failed".into()));
        }
        let png = encode_png(&mock_composite(prompt_id, cfg.width, cfg.height))
            .map_err(|e| BackendError::Protocol(e.to_string()))?;
        Ok(PollStatus::Ready(png))
    }
}
