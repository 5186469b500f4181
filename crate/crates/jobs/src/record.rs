//! Job identity, history and the in-memory record.

use std::fmt;
use std::path::PathBuf;

use chrono::{DateTime, Utc};
use lgrid_pki::{DistinguishedName, UserId};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::jdl::JobDescriptor;
use crate::state::JobState;

/// `lgrid://<gateway-host>/<uuid>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JobId(String);

impl JobId {
    pub const SCHEME: &'static str = "lgrid://";

    pub fn new(host: &str, uuid: Uuid) -> Self {
        JobId(format!("{}{host}/{uuid}", Self::SCHEME))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn uuid(&self) -> Uuid {
        self.0
            .rsplit('/')
            .next()
            .and_then(|u| u.parse().ok())
            .expect("JobId built from a uuid")
    }

    pub fn host(&self) -> &str {
        let rest = &self.0[Self::SCHEME.len()..];
        &rest[..rest.rfind('/').expect("JobId has a uuid segment")]
    }

    pub fn parse(text: &str) -> Option<JobId> {
        let rest = text.strip_prefix(Self::SCHEME)?;
        let (host, uuid) = rest.rsplit_once('/')?;
        if host.is_empty() {
            return None;
        }
        Some(JobId::new(host, uuid.parse().ok()?))
    }

    /// The first eight characters of the uuid, for compact listings.
    pub fn short(&self) -> String {
        self.uuid().simple().to_string()[..8].to_owned()
    }
}

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub state: JobState,
    pub at: DateTime<Utc>,
    pub reason: String,
}

/// Credential the job was submitted under.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProxyGrant {
    pub fingerprint: String,
    pub not_after: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: JobId,
    pub owner: UserId,
    pub owner_dn: DistinguishedName,
    /// Jobs expanded from one submission share a batch tag.
    pub batch: String,
    pub submitted_at: DateTime<Utc>,
    pub descriptor: JobDescriptor,
    pub state: JobState,
    /// Append-only; consecutive entries are edges of the transition relation.
    pub history: Vec<HistoryEntry>,
    pub home: PathBuf,
    pub proxy_fingerprint: Option<String>,
    pub exit_code: Option<i32>,
}

impl JobRecord {
    pub fn last_update(&self) -> DateTime<Utc> {
        self.history.last().map_or(self.submitted_at, |h| h.at)
    }
}

/// Checks a history replays along legal edges from SUBMITTED. On failure
/// returns the index of the first offending entry.
pub fn check_history(history: &[HistoryEntry]) -> Result<(), usize> {
    match history.first() {
        Some(first) if first.state == JobState::Submitted => {}
        _ => return Err(0),
    }
    for (i, pair) in history.windows(2).enumerate() {
        if !pair[0].state.may_transition(pair[1].state) {
            return Err(i + 1);
        }
    }
    Ok(())
}
