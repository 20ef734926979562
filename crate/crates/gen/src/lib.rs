//! Generation campaigns against a pluggable text-to-image backend.
//!
//! A campaign submits each prompt, polls until the composite image comes
//! back, splits it into its four tiles and persists them, journaling every
//! state change so an interrupted run can be resumed without duplicating or
//! re-downloading anything.

pub mod backend;
pub mod campaign;
pub mod journal;
pub mod policy;
pub mod quad;

pub use backend::{Backend, BackendError, HttpBackend, JobHandle, MockBackend, MockConfig, PollStatus};
pub use campaign::{
    persisted_images, resume_campaign, resume_campaign_with, run_campaign, run_campaign_with, tile_name,
    CampaignError, CampaignReport, RunOptions,
};
pub use journal::{GenerationJob, JobState, JournalRecord, PersistedImage};
pub use policy::BackendPolicy;
pub use quad::{split_quad, QuadImage};
