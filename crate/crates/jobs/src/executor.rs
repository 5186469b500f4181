//! Executors stand in for the Grid: they decide when a job leaves each
//! stage and what it produces.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::jdl::JobDescriptor;

pub const DEFAULT_STAGE_DELAY: Duration = Duration::from_millis(200);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecutorKind {
    /// Advances on a fixed per-stage schedule and fabricates output.
    Scripted,
    /// Runs the Executable as a child process in the job's work directory.
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExecutorConfig {
    pub kind: ExecutorKind,
    /// Minimum time spent in each stage before the next transition.
    pub stage_delay: Duration,
}

impl ExecutorConfig {
    pub fn scripted(stage_delay: Duration) -> Self {
        ExecutorConfig {
            kind: ExecutorKind::Scripted,
            stage_delay,
        }
    }

    pub fn local(stage_delay: Duration) -> Self {
        ExecutorConfig {
            kind: ExecutorKind::Local,
            stage_delay,
        }
    }
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        ExecutorConfig::scripted(DEFAULT_STAGE_DELAY)
    }
}

/// Splits an Arguments string on whitespace, honoring single and double
/// quotes and backslash escapes outside single quotes.
pub fn split_arguments(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut in_word = false;
    let mut quote: Option<char> = None;
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        match (quote, c) {
            (Some(q), c) if c == q => quote = None,
            (Some('"') | None, '\\') => {
                if let Some(next) = chars.next() {
                    current.push(next);
                }
                in_word = true;
            }
            (Some(_), c) => current.push(c),
            (None, '"' | '\'') => {
                quote = Some(c);
                in_word = true;
            }
            (None, c) if c.is_whitespace() => {
                if in_word {
                    out.push(std::mem::take(&mut current));
                    in_word = false;
                }
            }
            (None, c) => {
                current.push(c);
                in_word = true;
            }
        }
    }
    if in_word {
        out.push(current);
    }
    out
}

/// The file a scripted job writes to StdOutput.
pub fn scripted_stdout(descriptor: &JobDescriptor) -> String {
    let exe = descriptor.executable().unwrap_or_default();
    let args = split_arguments(descriptor.arguments().unwrap_or_default()).join(" ");
    let base = exe.rsplit('/').next().unwrap_or(exe);
    if base == "echo" {
        format!("{args}\n")
    } else {
        format!("{exe} {args}\n")
    }
}

/// Starts the job's Executable inside `work`. A relative Executable that
/// exists in `work` is made executable and run from there; any other
/// relative name is looked up on PATH.
pub fn launch(descriptor: &JobDescriptor, work: &Path) -> std::io::Result<Child> {
    let exe = descriptor
        .executable()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "no Executable"))?;
    let program: PathBuf = if Path::new(exe).is_absolute() {
        PathBuf::from(exe)
    } else if work.join(exe).is_file() {
        let local = work.join(exe);
        make_executable(&local)?;
        local
    } else if exe.contains('/') {
        return Err(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("{exe} not found in sandbox"),
        ));
    } else {
        PathBuf::from(exe)
    };
    let stdio_file = |name: Option<&str>| -> std::io::Result<Stdio> {
        Ok(match name {
            Some(name) => {
                let path =
                    work.join(crate::sandbox::sanitize_path(name).map_err(std::io::Error::other)?);
                if let Some(parent) = path.parent() {
                    fs::create_dir_all(parent)?;
                }
                Stdio::from(fs::File::create(path)?)
            }
            None => Stdio::null(),
        })
    };
    let mut command = Command::new(program);
    command
        .args(split_arguments(descriptor.arguments().unwrap_or_default()))
        .current_dir(work)
        .stdin(Stdio::null())
        .stdout(stdio_file(descriptor.std_output())?)
        .stderr(stdio_file(descriptor.std_error())?);
    if let Some(env) = descriptor.attributes.get("Environment") {
        for pair in env.strings() {
            if let Some((k, v)) = pair.split_once('=') {
                command.env(k, v);
            }
        }
    }
    command.spawn()
}

#[cfg(unix)]
fn make_executable(path: &Path) -> std::io::Result<()> {
    use std::os::unix::fs::PermissionsExt;
    let mut perms = fs::metadata(path)?.permissions();
    perms.set_mode(perms.mode() | 0o755);
    fs::set_permissions(path, perms)
}

#[cfg(not(unix))]
fn make_executable(_: &Path) -> std::io::Result<()> {
    Ok(())
}

/// Exit code of a finished child; a signal number is reported negated.
pub fn exit_code(status: std::process::ExitStatus) -> i32 {
    if let Some(code) = status.code() {
        return code;
    }
    #[cfg(unix)]
    {
        use std::os::unix::process::ExitStatusExt;
        if let Some(signal) = status.signal() {
            return -signal;
        }
    }
    -1
}
