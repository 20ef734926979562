use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid backend policy: {0}")]
pub struct PolicyError(pub String);

/// Pacing and retry limits for a campaign.
///
/// `max_retries` counts retries after the first attempt, so a job is tried
/// at most `max_retries + 1` times and `0` disables retrying.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendPolicy {
    pub max_in_flight: usize,
    /// Seconds between polls of one job, and between a failure and its retry.
    pub poll_interval: f64,
    /// Seconds an attempt may wait for its result.
    pub per_job_timeout: f64,
    pub max_retries: u32,
}

impl Default for BackendPolicy {
    fn default() -> Self {
        Self {
            max_in_flight: 3,
            poll_interval: 5.0,
            per_job_timeout: 120.0,
            max_retries: 3,
        }
    }
}

impl BackendPolicy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.max_in_flight == 0 {
            return Err(PolicyError("max_in_flight must be positive".into()));
        }
        if !(self.poll_interval.is_finite() && self.poll_interval > 0.0) {
            return Err(PolicyError("poll_interval must be positive".into()));
        }
        if !(self.per_job_timeout.is_finite() && self.per_job_timeout > self.poll_interval) {
            return Err(PolicyError("per_job_timeout must exceed poll_interval".into()));
        }
        Ok(())
    }

    pub fn poll_every(&self) -> Duration {
        Duration::from_secs_f64(self.poll_interval)
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.per_job_timeout)
    }

    /// Whether a job that has used `attempts` attempts may try again.
    pub fn may_retry(&self, attempts: u32) -> bool {
        attempts <= self.max_retries
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let p = BackendPolicy::default();
        assert!(p.validate().is_ok());
        assert_eq!((p.max_in_flight, p.max_retries), (3, 3));
        assert!(p.may_retry(3) && !p.may_retry(4));
    }

    #[test]
    fn rejects_bad_values() {
        let bad = [
            BackendPolicy { max_in_flight: 0, ..Default::default() },
            BackendPolicy { poll_interval: 0.0, ..Default::default() },
            BackendPolicy { per_job_timeout: 5.0, ..Default::default() },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
        let no_retry = BackendPolicy { max_retries: 0, ..Default::default() };
        assert!(no_retry.validate().is_ok());
        assert!(!no_retry.may_retry(1));
    }
}
