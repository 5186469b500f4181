use thiserror::Error;

pub type Result<T, E = PkiError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum PkiError {
    #[error("malformed DN segment `{segment}`: {reason}")]
    DnSyntax {
        segment: String,
        reason: &'static str,
    },

    #[error("unsupported key algorithm `{0}`")]
    UnsupportedAlgorithm(String),

    #[error("key self-test failed: signature did not verify")]
    KeySelfTest,

    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },

    #[error("wrong passphrase for credential container")]
    WrongPassphrase,

    #[error("credential container holds no private key")]
    MissingKey,

    #[error("credential container holds no certificate")]
    MissingCertificate,

    #[error("certificate and private key do not match")]
    KeyMismatch,

    #[error("CSR subject `{csr}` is not `{issuer}` plus one CN")]
    SubjectRule { csr: String, issuer: String },

    #[error("CSR proof-of-possession does not verify")]
    BadProofOfPossession,

    #[error("user certificate expired at {0}")]
    UserCertExpired(chrono::DateTime<chrono::Utc>),

    #[error("proxy lifetime must be positive, got {0}s")]
    BadLifetime(i64),

    #[error("inconsistent proxy bundle: {0}")]
    InconsistentBundle(&'static str),

    #[error("trust anchor is not self-signed: {0}")]
    NotSelfSigned(String),

    #[error(transparent)]
    OpenSsl(#[from] openssl::error::ErrorStack),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl PkiError {
    pub fn malformed(what: &'static str, detail: impl ToString) -> Self {
        PkiError::Malformed {
            what,
            detail: detail.to_string(),
        }
    }
}
