use serde::{Deserialize, Serialize};

use crate::message::Named;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum MyProxyRequest {
    PutCommand {
        username: String,
        passphrase: String,
        retention_secs: i64,
    },
    Credential {
        bundle_pem: String,
    },
    GetCommand {
        username: String,
        passphrase: String,
        lifetime_secs: i64,
    },
    Csr {
        csr_pem: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MyProxyErrorCode {
    UnknownUser,
    WrongPassphrase,
    CredentialExpired,
    BadRequest,
    Unauthenticated,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum MyProxyReply {
    Ok {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        subject_dn: Option<String>,
    },
    Stored {
        receipt: String,
        not_after: chrono::DateTime<chrono::Utc>,
    },
    Certificates {
        chain_pem: String,
    },
    Error {
        code: MyProxyErrorCode,
        detail: String,
    },
}

impl Named for MyProxyRequest {
    fn kind(&self) -> &'static str {
        match self {
            MyProxyRequest::PutCommand { .. } => "PutCommand",
            MyProxyRequest::Credential { .. } => "Credential",
            MyProxyRequest::GetCommand { .. } => "GetCommand",
            MyProxyRequest::Csr { .. } => "Csr",
        }
    }
}

impl Named for MyProxyReply {
    fn kind(&self) -> &'static str {
        match self {
            MyProxyReply::Ok { .. } => "Ok",
            MyProxyReply::Stored { .. } => "Stored",
            MyProxyReply::Certificates { .. } => "Certificates",
            MyProxyReply::Error { .. } => "Error",
        }
    }
}

impl MyProxyReply {
    pub fn error(code: MyProxyErrorCode, detail: impl Into<String>) -> Self {
        MyProxyReply::Error {
            code,
            detail: detail.into(),
        }
    }
}
