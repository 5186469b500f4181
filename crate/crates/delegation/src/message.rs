//! Wire messages. Every frame is a 4-byte big-endian length followed by a
//! UTF-8 JSON document whose `type` field names the variant.

use std::fmt;

use chrono::{DateTime, Utc};
use lgrid_pki::DistinguishedName;
use rand::RngCore;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tokio::io::{AsyncRead, AsyncReadExt, AsyncWrite, AsyncWriteExt};

/// Frames larger than this are rejected before allocation.
pub const MAX_FRAME_LEN: usize = 1 << 20;

/// Random 128-bit session token, hex-encoded.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(String);

impl SessionId {
    pub fn random() -> Self {
        let mut bytes = [0u8; 16];
        rand::thread_rng().fill_bytes(&mut bytes);
        SessionId(hex::encode(bytes))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FaultCode {
    DnMismatch,
    BadState,
    KeyMismatch,
    ValidationFailed,
    SessionExpired,
    UnknownSession,
    Malformed,
    Substitution,
    Internal,
}

impl FaultCode {
    pub fn as_str(self) -> &'static str {
        match self {
            FaultCode::DnMismatch => "dn-mismatch",
            FaultCode::BadState => "bad-state",
            FaultCode::KeyMismatch => "key-mismatch",
            FaultCode::ValidationFailed => "validation-failed",
            FaultCode::SessionExpired => "session-expired",
            FaultCode::UnknownSession => "unknown-session",
            FaultCode::Malformed => "malformed",
            FaultCode::Substitution => "substitution",
            FaultCode::Internal => "internal",
        }
    }
}

impl fmt::Display for FaultCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The delegation exchange. No variant has a field able to carry private
/// key material: only DNs, certificate requests and certificates travel.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum DelegationMessage {
    Init {
        subject_dn: DistinguishedName,
        /// The user certificate, for channels that did not authenticate the
        /// client.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        user_cert_pem: Option<String>,
    },
    CsrReply {
        session_id: SessionId,
        csr_pem: String,
    },
    SignedProxy {
        session_id: SessionId,
        proxy_cert_pem: String,
    },
    Ack {
        session_id: SessionId,
        proxy_fingerprint: String,
        not_after: DateTime<Utc>,
    },
    Fault {
        code: FaultCode,
        detail: String,
    },
}

impl DelegationMessage {
    pub fn kind(&self) -> &'static str {
        match self {
            DelegationMessage::Init { .. } => "Init",
            DelegationMessage::CsrReply { .. } => "CsrReply",
            DelegationMessage::SignedProxy { .. } => "SignedProxy",
            DelegationMessage::Ack { .. } => "Ack",
            DelegationMessage::Fault { .. } => "Fault",
        }
    }

    pub fn session_id(&self) -> Option<&SessionId> {
        match self {
            DelegationMessage::CsrReply { session_id, .. }
            | DelegationMessage::SignedProxy { session_id, .. }
            | DelegationMessage::Ack { session_id, .. } => Some(session_id),
            DelegationMessage::Init { .. } | DelegationMessage::Fault { .. } => None,
        }
    }

    pub fn init(subject_dn: DistinguishedName) -> Self {
        DelegationMessage::Init {
            subject_dn,
            user_cert_pem: None,
        }
    }

    pub fn fault(code: FaultCode, detail: impl Into<String>) -> Self {
        DelegationMessage::Fault {
            code,
            detail: detail.into(),
        }
    }
}

/// Anything with a short variant name, for transcripts.
pub trait Named {
    fn kind(&self) -> &'static str;
}

impl Named for DelegationMessage {
    fn kind(&self) -> &'static str {
        DelegationMessage::kind(self)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum FrameError {
    #[error("frame shorter than its length prefix")]
    Truncated,
    #[error("frame of {0} bytes exceeds limit")]
    TooLarge(usize),
    #[error("{0} trailing bytes after frame")]
    Trailing(usize),
    #[error("invalid frame payload: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn encode_frame<T: Serialize>(msg: &T) -> Vec<u8> {
    let body = serde_json::to_vec(msg).expect("message serialization is infallible");
    let mut out = Vec::with_capacity(4 + body.len());
    out.extend_from_slice(&(body.len() as u32).to_be_bytes());
    out.extend_from_slice(&body);
    out
}

/// Decodes exactly one frame occupying all of `bytes`.
pub fn decode_frame<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, FrameError> {
    let (len_bytes, body) = bytes
        .split_first_chunk::<4>()
        .ok_or(FrameError::Truncated)?;
    let len = u32::from_be_bytes(*len_bytes) as usize;
    if len > MAX_FRAME_LEN {
        return Err(FrameError::TooLarge(len));
    }
    if body.len() < len {
        return Err(FrameError::Truncated);
    }
    if body.len() > len {
        return Err(FrameError::Trailing(body.len() - len));
    }
    Ok(serde_json::from_slice(body)?)
}

/// Reads one raw frame (prefix included) from a stream.
pub async fn read_frame_bytes<R: AsyncRead + Unpin>(reader: &mut R) -> Result<Vec<u8>, FrameError> {
    let mut prefix = [0u8; 4];
    reader.read_exact(&mut prefix).await?;
    let len = u32::from_be_bytes(prefix) as usize;
    if len > MAX_FRAME_LEN {
        return Err(FrameError::TooLarge(len));
    }
    let mut frame = vec![0u8; 4 + len];
    frame[..4].copy_from_slice(&prefix);
    reader.read_exact(&mut frame[4..]).await?;
    Ok(frame)
}

pub async fn write_frame_bytes<W: AsyncWrite + Unpin>(
    writer: &mut W,
    frame: &[u8],
) -> Result<(), FrameError> {
    writer.write_all(frame).await?;
    writer.flush().await?;
    Ok(())
}
