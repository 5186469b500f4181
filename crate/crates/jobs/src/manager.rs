//! The job manager: submission into per-user homes, stage advancement,
//! cancellation, output retrieval and recovery from disk.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Child;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use chrono::{DateTime, TimeDelta, Utc};
use lgrid_pki::{DistinguishedName, UserId};
use uuid::Uuid;

use crate::executor::{self, ExecutorConfig, ExecutorKind};
use crate::expand::{expand, ExpandError};
use crate::jdl::{parse_jdl, JobDescriptor};
use crate::layout::{self, JobMeta};
use crate::observe::{FsObserver, FsOp, NoObserver};
use crate::record::{check_history, HistoryEntry, JobId, JobRecord, ProxyGrant};
use crate::sandbox::{self, SandboxEntry, SandboxError};
use crate::state::JobState;

/// Name of the archive entry listing outputs that were not produced.
pub const MANIFEST_ENTRY: &str = "lgrid-manifest.txt";

#[derive(Debug, thiserror::Error)]
pub enum JobError {
    #[error("not-authorized: {0}")]
    NotAuthorized(String),
    #[error("expansion failed: {0}")]
    Expand(#[from] ExpandError),
    #[error("sandbox: {0}")]
    Sandbox(#[from] SandboxError),
    #[error("job {0} not found")]
    NotFound(String),
    #[error("not-owner")]
    NotOwner,
    #[error("already-terminal: job is {0}")]
    AlreadyTerminal(JobState),
    #[error("wrong-state: job is {0}")]
    WrongState(JobState),
    #[error("illegal transition {from} -> {to}")]
    IllegalTransition { from: JobState, to: JobState },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl JobError {
    pub fn code(&self) -> &'static str {
        match self {
            JobError::NotAuthorized(_) => "not-authorized",
            JobError::Expand(_) => "expansion-failed",
            JobError::Sandbox(SandboxError::PathEscape(_)) => "path-escape",
            JobError::Sandbox(_) => "bad-sandbox",
            JobError::NotFound(_) => "not-found",
            JobError::NotOwner => "not-owner",
            JobError::AlreadyTerminal(_) => "already-terminal",
            JobError::WrongState(_) => "wrong-state",
            JobError::IllegalTransition { .. } => "illegal-transition",
            JobError::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, JobError>;

/// Result of a single-shot output retrieval.
#[derive(Debug, Clone)]
pub struct FetchedOutput {
    /// gzip-compressed tar stream.
    pub archive: Vec<u8>,
    pub files: Vec<String>,
    pub missing: Vec<String>,
    pub record: JobRecord,
}

struct JobEntry {
    record: JobRecord,
    child: Option<Child>,
}

pub struct JobManager {
    root: PathBuf,
    host: String,
    executor: ExecutorConfig,
    observer: Arc<dyn FsObserver>,
    jobs: RwLock<HashMap<Uuid, Arc<Mutex<JobEntry>>>>,
}

impl std::fmt::Debug for JobManager {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("JobManager")
            .field("root", &self.root)
            .field("host", &self.host)
            .field("executor", &self.executor)
            .finish_non_exhaustive()
    }
}

fn lock(entry: &Mutex<JobEntry>) -> MutexGuard<'_, JobEntry> {
    entry
        .lock()
        .unwrap_or_else(|poisoned| poisoned.into_inner())
}

fn exit_code_from_reason(reason: &str) -> Option<i32> {
    reason
        .strip_prefix("exit code ")?
        .split_whitespace()
        .next()?
        .parse()
        .ok()
}

impl JobManager {
    /// Opens the state root, reloading every job with a non-empty history.
    pub fn open(
        root: impl Into<PathBuf>,
        host: impl Into<String>,
        executor: ExecutorConfig,
    ) -> Result<Self> {
        Self::open_observed(root, host, executor, Arc::new(NoObserver))
    }

    pub fn open_observed(
        root: impl Into<PathBuf>,
        host: impl Into<String>,
        executor: ExecutorConfig,
        observer: Arc<dyn FsObserver>,
    ) -> Result<Self> {
        let manager = JobManager {
            root: root.into(),
            host: host.into(),
            executor,
            observer,
            jobs: RwLock::new(HashMap::new()),
        };
        fs::create_dir_all(layout::homes_dir(&manager.root))?;
        manager.recover()?;
        Ok(manager)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn host(&self) -> &str {
        &self.host
    }

    pub fn executor(&self) -> ExecutorConfig {
        self.executor
    }

    fn observe(&self, actor: &UserId, op: FsOp, path: &Path) {
        self.observer.record(actor, op, path);
    }

    fn recover(&self) -> Result<()> {
        let homes = layout::homes_dir(&self.root);
        let mut recovered = HashMap::new();
        for home in fs::read_dir(&homes)? {
            let home = home?;
            let Some(owner) = home.file_name().to_str().and_then(UserId::from_hex) else {
                continue;
            };
            let jobs_dir = home.path().join("jobs");
            self.observe(&owner, FsOp::List, &jobs_dir);
            let Ok(dirs) = fs::read_dir(&jobs_dir) else {
                continue;
            };
            for dir in dirs {
                let dir = dir?.path();
                match self.load_job(&owner, &dir) {
                    Ok(Some(entry)) => {
                        recovered.insert(entry.record.id.uuid(), Arc::new(Mutex::new(entry)));
                    }
                    Ok(None) => {
                        tracing::warn!(dir = %dir.display(), "skipping incomplete job directory")
                    }
                    Err(e) => {
                        tracing::warn!(dir = %dir.display(), error = %e, "skipping unreadable job directory")
                    }
                }
            }
        }
        let now = Utc::now();
        for entry in recovered.values() {
            let mut entry = lock(entry);
            if self.executor.kind == ExecutorKind::Local && entry.record.state == JobState::Running
            {
                self.transition(
                    &mut entry,
                    JobState::Aborted,
                    "executor lost on restart",
                    now,
                )?;
            }
        }
        self.jobs
            .write()
            .expect("job table poisoned")
            .extend(recovered);
        Ok(())
    }

    fn load_job(&self, owner: &UserId, dir: &Path) -> Result<Option<JobEntry>> {
        let log = dir.join(layout::STATUS_LOG);
        let meta_path = dir.join(layout::META_FILE);
        let jdl_path = dir.join(layout::DESCRIPTOR_FILE);
        if !log.is_file() || !meta_path.is_file() || !jdl_path.is_file() {
            return Ok(None);
        }
        self.observe(owner, FsOp::Read, &log);
        let mut history = layout::read_status_log(&log)?;
        if history.is_empty() {
            return Ok(None);
        }
        if let Err(bad) = check_history(&history) {
            tracing::warn!(log = %log.display(), entry = bad, "history breaks the transition relation; truncating");
            history.truncate(bad);
            if history.is_empty() {
                return Ok(None);
            }
        }
        self.observe(owner, FsOp::Read, &meta_path);
        let meta: JobMeta =
            serde_json::from_slice(&fs::read(&meta_path)?).map_err(std::io::Error::other)?;
        if &meta.owner_dn.user_id() != owner {
            return Ok(None);
        }
        self.observe(owner, FsOp::Read, &jdl_path);
        let descriptor =
            parse_jdl(&fs::read_to_string(&jdl_path)?).map_err(std::io::Error::other)?;
        let last = history.last().expect("non-empty");
        let state = last.state;
        let exit_code = match state {
            JobState::DoneOk | JobState::DoneFailed | JobState::Cleared => history
                .iter()
                .rev()
                .find(|h| matches!(h.state, JobState::DoneOk | JobState::DoneFailed))
                .and_then(|h| exit_code_from_reason(&h.reason)),
            _ => None,
        };
        Ok(Some(JobEntry {
            record: JobRecord {
                id: meta.id,
                owner: owner.clone(),
                owner_dn: meta.owner_dn,
                batch: meta.batch,
                submitted_at: meta.submitted_at,
                descriptor,
                state,
                history,
                home: dir.to_path_buf(),
                proxy_fingerprint: meta.proxy_fingerprint,
                exit_code,
            },
            child: None,
        }))
    }

    /// Expands `descriptor` and creates one SUBMITTED job per concrete
    /// descriptor, each with its own copy of the input sandbox. Every record
    /// is on disk before this returns.
    pub fn submit(
        &self,
        descriptor: &JobDescriptor,
        owner_dn: &DistinguishedName,
        input: Option<&[u8]>,
        proxy: Option<&ProxyGrant>,
        now: DateTime<Utc>,
    ) -> Result<Vec<JobId>> {
        let grant = proxy.ok_or_else(|| JobError::NotAuthorized("no delegated proxy".into()))?;
        if grant.not_after <= now {
            return Err(JobError::NotAuthorized(format!(
                "proxy expired at {}",
                grant.not_after.to_rfc3339()
            )));
        }
        let concrete = expand(descriptor)?;
        for job in &concrete {
            check_declared_paths(job)?;
        }
        let entries = match input {
            Some(bytes) if !bytes.is_empty() => sandbox::unpack(bytes)?,
            _ => Vec::new(),
        };
        let owner = owner_dn.user_id();
        let batch = Uuid::new_v4().to_string();
        let mut created: Vec<JobEntry> = Vec::new();
        for job in concrete {
            match self.create_job(&owner, owner_dn, &batch, job, &entries, grant, now) {
                Ok(entry) => created.push(entry),
                Err(e) => {
                    for entry in &created {
                        self.observe(&owner, FsOp::Remove, &entry.record.home);
                        let _ = fs::remove_dir_all(&entry.record.home);
                    }
                    return Err(e);
                }
            }
        }
        let ids: Vec<JobId> = created.iter().map(|e| e.record.id.clone()).collect();
        let mut table = self.jobs.write().expect("job table poisoned");
        for entry in created {
            table.insert(entry.record.id.uuid(), Arc::new(Mutex::new(entry)));
        }
        Ok(ids)
    }

    #[allow(clippy::too_many_arguments)]
    fn create_job(
        &self,
        owner: &UserId,
        owner_dn: &DistinguishedName,
        batch: &str,
        descriptor: JobDescriptor,
        input: &[SandboxEntry],
        grant: &ProxyGrant,
        now: DateTime<Utc>,
    ) -> Result<JobEntry> {
        let uuid = Uuid::new_v4();
        let id = JobId::new(&self.host, uuid);
        let home = layout::job_dir(&self.root, owner, uuid);
        let result = (|| -> Result<JobEntry> {
            for sub in [layout::INPUT_DIR, layout::WORK_DIR, layout::OUTPUT_DIR] {
                self.observe(owner, FsOp::CreateDir, &home.join(sub));
                fs::create_dir_all(home.join(sub))?;
            }
            let jdl = home.join(layout::DESCRIPTOR_FILE);
            self.observe(owner, FsOp::Write, &jdl);
            fs::write(&jdl, descriptor.to_string())?;
            let input_dir = home.join(layout::INPUT_DIR);
            for entry in input {
                self.observe(owner, FsOp::Write, &input_dir.join(&entry.path));
            }
            sandbox::write_entries(&input_dir, input)?;
            let meta = JobMeta {
                id: id.clone(),
                owner_dn: owner_dn.clone(),
                batch: batch.to_owned(),
                submitted_at: now,
                proxy_fingerprint: Some(grant.fingerprint.clone()),
            };
            let meta_path = home.join(layout::META_FILE);
            self.observe(owner, FsOp::Write, &meta_path);
            fs::write(
                &meta_path,
                serde_json::to_vec_pretty(&meta).map_err(std::io::Error::other)?,
            )?;
            let first = HistoryEntry {
                state: JobState::Submitted,
                at: now,
                reason: "submitted".into(),
            };
            let log = home.join(layout::STATUS_LOG);
            self.observe(owner, FsOp::Write, &log);
            layout::append_status(&log, &first)?;
            Ok(JobEntry {
                record: JobRecord {
                    id: id.clone(),
                    owner: owner.clone(),
                    owner_dn: owner_dn.clone(),
                    batch: batch.to_owned(),
                    submitted_at: now,
                    descriptor,
                    state: JobState::Submitted,
                    history: vec![first],
                    home: home.clone(),
                    proxy_fingerprint: Some(grant.fingerprint.clone()),
                    exit_code: None,
                },
                child: None,
            })
        })();
        if result.is_err() {
            self.observe(owner, FsOp::Remove, &home);
            let _ = fs::remove_dir_all(&home);
        }
        result
    }

    /// Appends to the status log first, then updates memory.
    fn transition(
        &self,
        entry: &mut JobEntry,
        to: JobState,
        reason: &str,
        now: DateTime<Utc>,
    ) -> Result<()> {
        let from = entry.record.state;
        if !from.may_transition(to) {
            return Err(JobError::IllegalTransition { from, to });
        }
        let item = HistoryEntry {
            state: to,
            at: now,
            reason: reason.to_owned(),
        };
        let log = entry.record.home.join(layout::STATUS_LOG);
        self.observe(&entry.record.owner, FsOp::Write, &log);
        layout::append_status(&log, &item)?;
        entry.record.history.push(item);
        entry.record.state = to;
        Ok(())
    }

    fn lookup(&self, id: &str) -> Result<Arc<Mutex<JobEntry>>> {
        let uuid = match JobId::parse(id) {
            Some(parsed) if parsed.host() == self.host => parsed.uuid(),
            Some(_) => return Err(JobError::NotFound(id.to_owned())),
            None => id
                .parse::<Uuid>()
                .map_err(|_| JobError::NotFound(id.to_owned()))?,
        };
        self.jobs
            .read()
            .expect("job table poisoned")
            .get(&uuid)
            .cloned()
            .ok_or_else(|| JobError::NotFound(id.to_owned()))
    }

    fn owned(&self, id: &str, requester: &DistinguishedName) -> Result<Arc<Mutex<JobEntry>>> {
        let entry = self.lookup(id)?;
        if lock(&entry).record.owner != requester.user_id() {
            return Err(JobError::NotOwner);
        }
        Ok(entry)
    }

    fn snapshot(&self) -> Vec<Arc<Mutex<JobEntry>>> {
        self.jobs
            .read()
            .expect("job table poisoned")
            .values()
            .cloned()
            .collect()
    }

    /// A consistent copy of one record. Only the owner may look.
    pub fn status(&self, id: &str, requester: &DistinguishedName) -> Result<JobRecord> {
        let entry = self.owned(id, requester)?;
        let record = lock(&entry).record.clone();
        Ok(record)
    }

    /// Lookup without an ownership check, for administrative callers.
    pub fn record(&self, id: &str) -> Result<JobRecord> {
        let entry = self.lookup(id)?;
        let record = lock(&entry).record.clone();
        Ok(record)
    }

    /// The owner's jobs, oldest first.
    pub fn list(&self, owner: &UserId) -> Vec<JobRecord> {
        let mut out: Vec<JobRecord> = self
            .snapshot()
            .iter()
            .filter_map(|e| {
                let e = lock(e);
                (&e.record.owner == owner).then(|| e.record.clone())
            })
            .collect();
        out.sort_by(|a, b| (a.submitted_at, &a.id).cmp(&(b.submitted_at, &b.id)));
        out
    }

    /// Every job that can still run.
    pub fn active_jobs(&self) -> Vec<JobRecord> {
        let mut out: Vec<JobRecord> = self
            .snapshot()
            .iter()
            .filter_map(|e| {
                let e = lock(e);
                e.record.state.is_active().then(|| e.record.clone())
            })
            .collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }

    pub fn len(&self) -> usize {
        self.jobs.read().expect("job table poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Applies at most one transition to the job, if the executor says one
    /// is due at `now`.
    pub fn advance(&self, id: &str, now: DateTime<Utc>) -> Result<JobRecord> {
        let entry = self.lookup(id)?;
        let mut entry = lock(&entry);
        if !entry.record.state.is_active() {
            return Err(JobError::AlreadyTerminal(entry.record.state));
        }
        self.step(&mut entry, now)?;
        Ok(entry.record.clone())
    }

    /// One [`JobManager::advance`] pass over every active job. Returns the
    /// number of transitions applied.
    pub fn tick(&self, now: DateTime<Utc>) -> usize {
        let mut applied = 0;
        for entry in self.snapshot() {
            let mut entry = lock(&entry);
            if !entry.record.state.is_active() {
                continue;
            }
            match self.step(&mut entry, now) {
                Ok(true) => applied += 1,
                Ok(false) => {}
                Err(e) => tracing::warn!(job = %entry.record.id, error = %e, "advance failed"),
            }
        }
        applied
    }

    fn step(&self, entry: &mut JobEntry, now: DateTime<Utc>) -> Result<bool> {
        let delay = TimeDelta::from_std(self.executor.stage_delay).unwrap_or(TimeDelta::MAX);
        let due = now - entry.record.last_update() >= delay;
        let state = entry.record.state;
        match (state, self.executor.kind) {
            (JobState::Submitted | JobState::Waiting | JobState::Ready, _) if due => {
                let next = state.next_stage().expect("pre-running stage");
                let reason = match next {
                    JobState::Waiting => "accepted",
                    JobState::Ready => "matched",
                    _ => "queued",
                };
                self.transition(entry, next, reason, now)?;
            }
            (JobState::Scheduled, ExecutorKind::Scripted) if due => {
                self.transition(entry, JobState::Running, "started", now)?;
            }
            (JobState::Scheduled, ExecutorKind::Local) if due => match self.launch(entry) {
                Ok(child) => {
                    let reason = format!("started pid {}", child.id());
                    entry.child = Some(child);
                    if let Err(e) = self.transition(entry, JobState::Running, &reason, now) {
                        if let Some(mut child) = entry.child.take() {
                            let _ = child.kill();
                            let _ = child.wait();
                        }
                        return Err(e);
                    }
                }
                Err(e) => self.transition(
                    entry,
                    JobState::Aborted,
                    &format!("launch failure: {e}"),
                    now,
                )?,
            },
            (JobState::Running, ExecutorKind::Scripted) if due => {
                self.write_scripted_output(entry)?;
                self.complete(entry, 0, now)?;
            }
            (JobState::Running, ExecutorKind::Local) => {
                let status = match entry.child.as_mut() {
                    Some(child) => child.try_wait()?,
                    None => {
                        self.transition(entry, JobState::Aborted, "executor lost", now)?;
                        return Ok(true);
                    }
                };
                let Some(status) = status else {
                    return Ok(false);
                };
                entry.child = None;
                self.collect_output(entry)?;
                self.complete(entry, executor::exit_code(status), now)?;
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    fn complete(&self, entry: &mut JobEntry, code: i32, now: DateTime<Utc>) -> Result<()> {
        let to = if code == 0 {
            JobState::DoneOk
        } else {
            JobState::DoneFailed
        };
        self.transition(entry, to, &format!("exit code {code}"), now)?;
        entry.record.exit_code = Some(code);
        Ok(())
    }

    fn launch(&self, entry: &JobEntry) -> std::io::Result<Child> {
        let owner = &entry.record.owner;
        let input = entry.record.home.join(layout::INPUT_DIR);
        let work = entry.record.home.join(layout::WORK_DIR);
        self.observe(owner, FsOp::List, &input);
        let files = sandbox::read_tree(&input).map_err(std::io::Error::other)?;
        for file in &files {
            self.observe(owner, FsOp::Read, &input.join(&file.path));
            self.observe(owner, FsOp::Write, &work.join(&file.path));
        }
        sandbox::write_entries(&work, &files).map_err(std::io::Error::other)?;
        self.observe(owner, FsOp::Execute, &work);
        executor::launch(&entry.record.descriptor, &work)
    }

    /// Names the job promises to return, in order and without repeats.
    fn output_names(descriptor: &JobDescriptor) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        let listed = descriptor
            .std_output()
            .into_iter()
            .chain(descriptor.std_error())
            .chain(descriptor.output_sandbox());
        for name in listed {
            if let Ok(clean) = sandbox::sanitize_path(name) {
                if !names.contains(&clean) {
                    names.push(clean);
                }
            }
        }
        names
    }

    fn write_scripted_output(&self, entry: &JobEntry) -> Result<()> {
        let owner = &entry.record.owner;
        let output = entry.record.home.join(layout::OUTPUT_DIR);
        let descriptor = &entry.record.descriptor;
        let mut files = Vec::new();
        if let Some(name) = descriptor.std_output() {
            files.push(SandboxEntry::new(
                sandbox::sanitize_path(name)?,
                executor::scripted_stdout(descriptor),
            ));
        }
        if let Some(name) = descriptor.std_error() {
            let name = sandbox::sanitize_path(name)?;
            if !files.iter().any(|f| f.path == name) {
                files.push(SandboxEntry::new(name, Vec::new()));
            }
        }
        for file in &files {
            self.observe(owner, FsOp::Write, &output.join(&file.path));
        }
        sandbox::write_entries(&output, &files)?;
        Ok(())
    }

    fn collect_output(&self, entry: &JobEntry) -> Result<()> {
        let owner = &entry.record.owner;
        let work = entry.record.home.join(layout::WORK_DIR);
        let output = entry.record.home.join(layout::OUTPUT_DIR);
        let mut files = Vec::new();
        for name in Self::output_names(&entry.record.descriptor) {
            let source = work.join(&name);
            self.observe(owner, FsOp::Read, &source);
            if source.is_file() {
                files.push(SandboxEntry::new(name.clone(), fs::read(&source)?));
                self.observe(owner, FsOp::Write, &output.join(&name));
            }
        }
        sandbox::write_entries(&output, &files)?;
        Ok(())
    }

    /// Owner cancellation. A running local process is killed first.
    pub fn cancel(
        &self,
        id: &str,
        requester: &DistinguishedName,
        now: DateTime<Utc>,
    ) -> Result<JobRecord> {
        let entry = self.owned(id, requester)?;
        let mut entry = lock(&entry);
        if !entry.record.state.is_active() {
            return Err(JobError::AlreadyTerminal(entry.record.state));
        }
        self.kill_child(&mut entry);
        self.transition(&mut entry, JobState::Cancelled, "cancelled by owner", now)?;
        Ok(entry.record.clone())
    }

    /// System abort, for example when the job's proxy expired.
    pub fn abort(&self, id: &str, reason: &str, now: DateTime<Utc>) -> Result<JobRecord> {
        let entry = self.lookup(id)?;
        let mut entry = lock(&entry);
        if !entry.record.state.is_active() {
            return Err(JobError::AlreadyTerminal(entry.record.state));
        }
        self.kill_child(&mut entry);
        self.transition(&mut entry, JobState::Aborted, reason, now)?;
        Ok(entry.record.clone())
    }

    fn kill_child(&self, entry: &mut JobEntry) {
        if let Some(mut child) = entry.child.take() {
            let _ = child.kill();
            let _ = child.wait();
        }
    }

    /// Packs the job's outputs, moves it to CLEARED and purges its files.
    /// Outputs that were never produced are listed in a manifest entry.
    pub fn fetch_output(
        &self,
        id: &str,
        requester: &DistinguishedName,
        now: DateTime<Utc>,
    ) -> Result<FetchedOutput> {
        let entry = self.owned(id, requester)?;
        let mut entry = lock(&entry);
        if !matches!(entry.record.state, JobState::DoneOk | JobState::DoneFailed) {
            return Err(JobError::WrongState(entry.record.state));
        }
        let owner = entry.record.owner.clone();
        let output = entry.record.home.join(layout::OUTPUT_DIR);
        let mut entries = Vec::new();
        let mut missing = Vec::new();
        for name in Self::output_names(&entry.record.descriptor) {
            let path = output.join(&name);
            self.observe(&owner, FsOp::Read, &path);
            if path.is_file() {
                entries.push(SandboxEntry::new(name, fs::read(&path)?));
            } else {
                missing.push(name);
            }
        }
        let files: Vec<String> = entries.iter().map(|e| e.path.clone()).collect();
        if !missing.is_empty() {
            let manifest: String = missing.iter().map(|m| format!("missing\t{m}\n")).collect();
            entries.push(SandboxEntry::new(MANIFEST_ENTRY, manifest));
        }
        let archive = sandbox::pack(&entries)?;
        self.transition(&mut entry, JobState::Cleared, "output retrieved", now)?;
        for sub in [layout::INPUT_DIR, layout::WORK_DIR, layout::OUTPUT_DIR] {
            let dir = entry.record.home.join(sub);
            self.observe(&owner, FsOp::Remove, &dir);
            if dir.exists() {
                fs::remove_dir_all(&dir)?;
            }
        }
        Ok(FetchedOutput {
            archive,
            files,
            missing,
            record: entry.record.clone(),
        })
    }
}

impl Drop for JobManager {
    fn drop(&mut self) {
        if let Ok(table) = self.jobs.get_mut() {
            for entry in table.values() {
                if let Some(mut child) = lock(entry).child.take() {
                    let _ = child.kill();
                    let _ = child.wait();
                }
            }
        }
    }
}

/// Every file a job names is resolved below its own directories.
fn check_declared_paths(job: &JobDescriptor) -> Result<()> {
    let declared = job
        .input_sandbox()
        .into_iter()
        .chain(job.output_sandbox())
        .chain(job.std_output())
        .chain(job.std_error());
    for path in declared {
        sandbox::sanitize_path(path)?;
    }
    Ok(())
}
