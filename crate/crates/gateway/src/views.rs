//! JSON bodies exchanged with API clients.

use chrono::{DateTime, Utc};
use lgrid_jobs::{DisplayColor, HistoryEntry, JobRecord, JobState};
use serde::{Deserialize, Serialize};

pub const TOKEN_HEADER: &str = "x-lgrid-token";
pub const VO_HEADER: &str = "x-lgrid-vo";
pub const FRAME_CONTENT_TYPE: &str = "application/x-lgrid-frame";
pub const GZIP_CONTENT_TYPE: &str = "application/gzip";
/// Comma-separated outputs listed by the job but not produced.
pub const MISSING_HEADER: &str = "x-lgrid-missing";

/// One row of a job listing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobView {
    pub id: String,
    pub short_id: String,
    pub state: JobState,
    pub color: DisplayColor,
    pub submitted_at: DateTime<Utc>,
    pub last_update: DateTime<Utc>,
    pub batch: String,
}

impl From<&JobRecord> for JobView {
    fn from(r: &JobRecord) -> Self {
        JobView {
            id: r.id.to_string(),
            short_id: r.id.short(),
            state: r.state,
            color: r.state.color(),
            submitted_at: r.submitted_at,
            last_update: r.last_update(),
            batch: r.batch.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryView {
    pub state: JobState,
    pub color: DisplayColor,
    pub at: DateTime<Utc>,
    pub reason: String,
}

impl From<&HistoryEntry> for HistoryView {
    fn from(h: &HistoryEntry) -> Self {
        HistoryView {
            state: h.state,
            color: h.state.color(),
            at: h.at,
            reason: h.reason.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobStatus {
    #[serde(flatten)]
    pub view: JobView,
    pub owner_dn: String,
    pub exit_code: Option<i32>,
    pub history: Vec<HistoryView>,
    /// The concrete descriptor, in JDL.
    pub jdl: String,
}

impl From<&JobRecord> for JobStatus {
    fn from(r: &JobRecord) -> Self {
        JobStatus {
            view: JobView::from(r),
            owner_dn: r.owner_dn.to_string(),
            exit_code: r.exit_code,
            history: r.history.iter().map(HistoryView::from).collect(),
            jdl: r.descriptor.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobList {
    pub jobs: Vec<JobView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submitted {
    pub jobs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub detail: String,
}

/// Asks the gateway to fetch a proxy from the configured external
/// repository.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogonRequest {
    pub username: String,
    pub passphrase: String,
    #[serde(default)]
    pub lifetime_secs: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogonResponse {
    pub token: String,
    pub user_dn: String,
    pub proxy_fingerprint: String,
    pub not_after: DateTime<Utc>,
}

/// Repository login used for automatic renewal of the caller's proxy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenewalRegistration {
    pub username: String,
    pub passphrase: String,
}
