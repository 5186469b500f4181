//! Sandboxes travel as gzip-compressed tar streams of regular files.

use std::io::{Read, Write};
use std::path::{Component, Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use serde::{Deserialize, Serialize};

/// Unpacking stops once this many bytes of file content were produced.
pub const MAX_UNPACKED_BYTES: u64 = 256 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SandboxEntry {
    /// Relative, `/`-separated, without `.` or `..` components.
    pub path: String,
    pub data: Vec<u8>,
}

impl SandboxEntry {
    pub fn new(path: impl Into<String>, data: impl Into<Vec<u8>>) -> Self {
        SandboxEntry {
            path: path.into(),
            data: data.into(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SandboxError {
    #[error("entry path {0:?} escapes the sandbox root")]
    PathEscape(String),
    #[error("entry {path:?} is a {kind}; only regular files are allowed")]
    UnsupportedEntry { path: String, kind: String },
    #[error("duplicate entry {0:?}")]
    Duplicate(String),
    #[error("archive expands beyond {MAX_UNPACKED_BYTES} bytes")]
    TooLarge,
    #[error("corrupt archive: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Components of `path` relative to a sandbox root, or an error if it
/// would leave the root. The root itself yields no components.
fn components(path: &str) -> Result<Vec<&str>, SandboxError> {
    let escape = || SandboxError::PathEscape(path.to_owned());
    if path.is_empty() || path.contains('\0') || path.contains('\\') {
        return Err(escape());
    }
    let mut parts = Vec::new();
    for component in Path::new(path).components() {
        match component {
            Component::Normal(part) => parts.push(part.to_str().ok_or_else(escape)?),
            Component::CurDir => {}
            Component::ParentDir | Component::RootDir | Component::Prefix(_) => {
                return Err(escape())
            }
        }
    }
    Ok(parts)
}

/// Checks that `path` names something strictly inside a sandbox root and
/// returns it in normalized form.
pub fn sanitize_path(path: &str) -> Result<String, SandboxError> {
    let parts = components(path)?;
    if parts.is_empty() {
        return Err(SandboxError::PathEscape(path.to_owned()));
    }
    Ok(parts.join("/"))
}

/// Encodes entries, in order, as a gzip-compressed tar stream.
pub fn pack(entries: &[SandboxEntry]) -> Result<Vec<u8>, SandboxError> {
    let mut seen = std::collections::HashSet::new();
    let mut builder = tar::Builder::new(GzEncoder::new(Vec::new(), Compression::default()));
    for entry in entries {
        let path = sanitize_path(&entry.path)?;
        if !seen.insert(path.clone()) {
            return Err(SandboxError::Duplicate(path));
        }
        let mut header = tar::Header::new_gnu();
        header.set_entry_type(tar::EntryType::Regular);
        header.set_size(entry.data.len() as u64);
        header.set_mode(0o644);
        header.set_mtime(0);
        builder.append_data(&mut header, &path, entry.data.as_slice())?;
    }
    let gz = builder.into_inner()?;
    Ok(gz.finish()?)
}

/// Decodes an archive. Links, devices and any path leaving the root are
/// rejected; directory entries are skipped.
pub fn unpack(bytes: &[u8]) -> Result<Vec<SandboxEntry>, SandboxError> {
    let mut archive = tar::Archive::new(GzDecoder::new(bytes));
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    let mut total = 0u64;
    let corrupt = |e: std::io::Error| SandboxError::Corrupt(e.to_string());
    for entry in archive.entries().map_err(corrupt)? {
        let mut entry = entry.map_err(corrupt)?;
        let raw_path = String::from_utf8_lossy(&entry.path_bytes()).into_owned();
        let kind = entry.header().entry_type();
        match kind {
            tar::EntryType::Regular | tar::EntryType::Continuous => {}
            tar::EntryType::Directory => {
                components(&raw_path)?;
                continue;
            }
            other => {
                return Err(SandboxError::UnsupportedEntry {
                    path: raw_path,
                    kind: format!("{other:?}"),
                });
            }
        }
        let path = sanitize_path(&raw_path)?;
        if !seen.insert(path.clone()) {
            return Err(SandboxError::Duplicate(path));
        }
        let mut data = Vec::new();
        (&mut entry)
            .take(MAX_UNPACKED_BYTES - total + 1)
            .read_to_end(&mut data)
            .map_err(corrupt)?;
        total += data.len() as u64;
        if total > MAX_UNPACKED_BYTES {
            return Err(SandboxError::TooLarge);
        }
        out.push(SandboxEntry { path, data });
    }
    Ok(out)
}

/// Writes entries below `root`, creating parent directories.
pub fn write_entries(root: &Path, entries: &[SandboxEntry]) -> Result<Vec<PathBuf>, SandboxError> {
    let mut written = Vec::new();
    for entry in entries {
        let target = root.join(sanitize_path(&entry.path)?);
        if let Some(parent) = target.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut file = std::fs::File::create(&target)?;
        file.write_all(&entry.data)?;
        written.push(target);
    }
    Ok(written)
}

/// Reads every regular file below `root` as entries, sorted by path.
pub fn read_tree(root: &Path) -> Result<Vec<SandboxEntry>, SandboxError> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<SandboxEntry>) -> std::io::Result<()> {
        for item in std::fs::read_dir(dir)? {
            let item = item?;
            let kind = item.file_type()?;
            let path = item.path();
            if kind.is_dir() {
                walk(root, &path, out)?;
            } else if kind.is_file() {
                let rel = path.strip_prefix(root).expect("walk stays below root");
                let rel = rel
                    .to_string_lossy()
                    .replace(std::path::MAIN_SEPARATOR, "/");
                out.push(SandboxEntry {
                    path: rel,
                    data: std::fs::read(&path)?,
                });
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    if root.exists() {
        walk(root, root, &mut out)?;
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}
