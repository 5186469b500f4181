//! On-disk layout below the state root:
//!
//! ```text
//! homes/<UserId>/jobs/<uuid>/descriptor.jdl
//!                            job.json
//!                            status.log   RFC 3339 <TAB> STATE <TAB> reason
//!                            input/ work/ output/
//! ```

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use lgrid_pki::{DistinguishedName, UserId};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

use crate::record::{check_history, HistoryEntry, JobId};

pub const DESCRIPTOR_FILE: &str = "descriptor.jdl";
pub const META_FILE: &str = "job.json";
pub const STATUS_LOG: &str = "status.log";
pub const INPUT_DIR: &str = "input";
pub const WORK_DIR: &str = "work";
pub const OUTPUT_DIR: &str = "output";

pub fn homes_dir(root: &Path) -> PathBuf {
    root.join("homes")
}

pub fn home_dir(root: &Path, user: &UserId) -> PathBuf {
    homes_dir(root).join(user.as_str())
}

pub fn job_dir(root: &Path, user: &UserId, uuid: Uuid) -> PathBuf {
    home_dir(root, user).join("jobs").join(uuid.to_string())
}

/// Immutable per-job metadata written at submission.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobMeta {
    pub id: JobId,
    pub owner_dn: DistinguishedName,
    pub batch: String,
    pub submitted_at: DateTime<Utc>,
    pub proxy_fingerprint: Option<String>,
}

pub fn format_status_line(entry: &HistoryEntry) -> String {
    let reason: String = entry
        .reason
        .chars()
        .map(|c| {
            if c == '\t' || c == '\n' || c == '\r' {
                ' '
            } else {
                c
            }
        })
        .collect();
    format!(
        "{}\t{}\t{}\n",
        entry
            .at
            .to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true),
        entry.state,
        reason
    )
}

/// Appends one line and syncs it to disk.
pub fn append_status(path: &Path, entry: &HistoryEntry) -> std::io::Result<()> {
    let mut file = OpenOptions::new().create(true).append(true).open(path)?;
    file.write_all(format_status_line(entry).as_bytes())?;
    file.sync_data()
}

/// Parses a status log. A final line without its newline is an
/// interrupted append and is dropped, as is anything after a line that
/// does not parse.
pub fn parse_status_log(text: &str) -> Vec<HistoryEntry> {
    let complete = match text.rfind('\n') {
        Some(end) => &text[..end],
        None => return Vec::new(),
    };
    let mut out = Vec::new();
    for line in complete.split('\n') {
        let mut parts = line.splitn(3, '\t');
        let (Some(at), Some(state), Some(reason)) = (parts.next(), parts.next(), parts.next())
        else {
            break;
        };
        let (Ok(at), Ok(state)) = (DateTime::parse_from_rfc3339(at), state.parse()) else {
            break;
        };
        out.push(HistoryEntry {
            state,
            at: at.with_timezone(&Utc),
            reason: reason.to_owned(),
        });
    }
    out
}

pub fn read_status_log(path: &Path) -> std::io::Result<Vec<HistoryEntry>> {
    Ok(parse_status_log(&String::from_utf8_lossy(&fs::read(path)?)))
}

/// A `status.log` path, its entries, and the index of the first illegal
/// transition if any.
pub type ScannedHistory = (PathBuf, Vec<HistoryEntry>, Result<(), usize>);

/// Every `status.log` under the state root with the result of replaying it
/// against the transition relation. Reads the disk directly.
pub fn scan_histories(root: &Path) -> std::io::Result<Vec<ScannedHistory>> {
    let mut out = Vec::new();
    let homes = homes_dir(root);
    if !homes.exists() {
        return Ok(out);
    }
    for home in fs::read_dir(&homes)? {
        let jobs = home?.path().join("jobs");
        if !jobs.is_dir() {
            continue;
        }
        for job in fs::read_dir(&jobs)? {
            let log = job?.path().join(STATUS_LOG);
            if log.is_file() {
                let history = read_status_log(&log)?;
                let verdict = check_history(&history);
                out.push((log, history, verdict));
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}
