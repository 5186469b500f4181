//! Hook over the file operations the manager performs for a user.

use std::path::Path;

use lgrid_pki::UserId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FsOp {
    Read,
    Write,
    CreateDir,
    Remove,
    List,
    Execute,
}

/// Receives every file operation together with the user it is performed
/// for.
pub trait FsObserver: Send + Sync {
    fn record(&self, actor: &UserId, op: FsOp, path: &Path);
}

#[derive(Debug, Default)]
pub struct NoObserver;

impl FsObserver for NoObserver {
    fn record(&self, _: &UserId, _: FsOp, _: &Path) {}
}
