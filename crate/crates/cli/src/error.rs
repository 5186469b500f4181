//! Failures and the exit codes they map to.

use lgrid_delegation::{ClientError, TransportError};
use lgrid_gateway::ApiClientError;
use lgrid_pki::PkiError;

/// Every command failure. The variant fixes the process exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Usage, I/O and any failure without a more specific code.
    #[error("{0}")]
    Failure(String),
    /// The credential could not be opened: wrong passphrase, key mismatch.
    #[error("{0}")]
    Credential(String),
    #[error("gateway unreachable: {0}")]
    Unreachable(String),
    /// The delegation was refused or the peer broke the protocol rules.
    #[error("delegation refused: {0}")]
    Delegation(String),
    #[error("unknown job: {0}")]
    UnknownJob(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Failure(_) => 1,
            CliError::Credential(_) => 2,
            CliError::Unreachable(_) => 3,
            CliError::Delegation(_) => 4,
            CliError::UnknownJob(_) => 5,
        }
    }

    pub fn failure(context: &str, err: impl std::fmt::Display) -> Self {
        CliError::Failure(format!("{context}: {err}"))
    }

    /// Maps a credential-loading error, naming the file involved.
    pub fn pki(context: &str, err: PkiError) -> Self {
        match err {
            PkiError::WrongPassphrase
            | PkiError::KeyMismatch
            | PkiError::MissingKey
            | PkiError::MissingCertificate => CliError::Credential(format!("{context}: {err}")),
            other => CliError::failure(context, other),
        }
    }

    /// Maps an API error; `job` names the job the request was about.
    pub fn api(err: ApiClientError, job: Option<&str>) -> Self {
        match err {
            ApiClientError::Transport(e) => CliError::Unreachable(e.to_string()),
            ApiClientError::Api { status: 404, .. } if job.is_some() => {
                CliError::UnknownJob(job.unwrap_or_default().to_owned())
            }
            ApiClientError::Api { status: 401, .. } => CliError::Failure(
                "the gateway rejected the cached token; run `lgrid delegate` again".into(),
            ),
            ApiClientError::Api {
                status,
                error,
                detail,
            } => CliError::Failure(format!("{error} ({status}): {detail}")),
            other => CliError::Failure(other.to_string()),
        }
    }

    pub fn delegation(err: ClientError) -> Self {
        match err {
            ClientError::Transport(TransportError::Unreachable(e)) => CliError::Unreachable(e),
            ClientError::Transport(TransportError::Io(e)) => CliError::Unreachable(e),
            ClientError::Timeout => CliError::Unreachable("delegation timed out".into()),
            ClientError::Pki(e) => CliError::pki("signing the proxy", e),
            other => CliError::Delegation(other.to_string()),
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;
