//! Job descriptions, expansion, the lifecycle state machine, per-user homes
//! and sandbox archives.

pub mod executor;
pub mod expand;
pub mod jdl;
pub mod layout;
pub mod manager;
pub mod observe;
pub mod record;
pub mod sandbox;
pub mod state;

pub use executor::{ExecutorConfig, ExecutorKind, DEFAULT_STAGE_DELAY};
pub use expand::{expand, parameter_values, ExpandError, PARAM_PLACEHOLDER};
pub use jdl::{parse_jdl, Attributes, JdlError, JdlValue, JobDescriptor, JobKind, ParameterSpec};
pub use manager::{FetchedOutput, JobError, JobManager, MANIFEST_ENTRY};
pub use observe::{FsObserver, FsOp, NoObserver};
pub use record::{check_history, HistoryEntry, JobId, JobRecord, ProxyGrant};
pub use sandbox::{pack, unpack, SandboxEntry, SandboxError};
pub use state::{DisplayColor, JobState};
