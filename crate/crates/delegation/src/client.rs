//! Client side of the delegation handshake: the user's key signs the
//! server-generated request locally and never leaves this process.

use std::time::Duration as StdDuration;

use async_trait::async_trait;
use chrono::{DateTime, Duration, Utc};
use lgrid_pki::{
    sign_proxy_csr, CertificateSigningRequest, DistinguishedName, PkiError, ProxyOptions,
    UserCredential,
};

use crate::message::{
    decode_frame, encode_frame, DelegationMessage, FaultCode, FrameError, SessionId,
};
use crate::session::DEFAULT_SESSION_TIMEOUT;
use crate::transcript::Transcript;

pub const DEFAULT_PROXY_LIFETIME: Duration = Duration::hours(12);

#[derive(Debug, thiserror::Error)]
pub enum TransportError {
    #[error("cannot reach delegation endpoint: {0}")]
    Unreachable(String),
    #[error("transport failure: {0}")]
    Io(String),
    #[error("endpoint rejected request with HTTP status {status}")]
    Status { status: u16, body: Vec<u8> },
}

/// A mutually authenticated, integrity-protected request/response channel
/// carrying encoded delegation frames.
#[async_trait]
pub trait DelegationTransport: Send {
    /// Sends one frame and waits for the reply frame.
    async fn round_trip(&mut self, frame: Vec<u8>) -> Result<Vec<u8>, TransportError>;

    /// DN the channel authenticated for the server, if known.
    fn server_identity(&self) -> Option<DistinguishedName>;

    /// Connections opened so far.
    fn connections(&self) -> u32;
}

#[derive(Debug, Clone)]
pub struct ClientOptions {
    pub lifetime: Duration,
    /// When set, the authenticated server DN must equal this.
    pub expected_server: Option<DistinguishedName>,
    pub proxy_options: ProxyOptions,
    pub timeout: Duration,
    /// Send the user certificate in Init, for servers that do not
    /// authenticate the client at the channel.
    pub present_certificate: bool,
}

impl Default for ClientOptions {
    fn default() -> Self {
        ClientOptions {
            lifetime: DEFAULT_PROXY_LIFETIME,
            expected_server: None,
            proxy_options: ProxyOptions::default(),
            timeout: DEFAULT_SESSION_TIMEOUT,
            present_certificate: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ack {
    pub session_id: SessionId,
    pub proxy_fingerprint: String,
    pub not_after: DateTime<Utc>,
}

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("server fault {code}: {detail}")]
    Fault { code: FaultCode, detail: String },
    #[error("server asked to sign `{requested}`, which does not extend `{own}`; possible substitution attack")]
    Substitution {
        requested: DistinguishedName,
        own: DistinguishedName,
    },
    #[error("server CSR proof-of-possession does not verify")]
    BadProofOfPossession,
    #[error("server identity `{actual}` does not match expected `{expected}`")]
    ChannelIdentityMismatch {
        expected: DistinguishedName,
        actual: String,
    },
    #[error("delegation timed out")]
    Timeout,
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("acknowledged fingerprint does not match the signed proxy")]
    FingerprintMismatch,
    #[error(transparent)]
    Pki(#[from] PkiError),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

impl ClientError {
    /// The fault code for this failure, where one applies.
    pub fn fault_code(&self) -> Option<FaultCode> {
        match self {
            ClientError::Fault { code, .. } => Some(*code),
            ClientError::Substitution { .. } => Some(FaultCode::Substitution),
            _ => None,
        }
    }
}

/// Runs the delegation handshake from the client side.
///
/// Sends Init with the user DN; checks the returned CSR proves possession of
/// its key and that its subject is the user DN plus one CN; signs it with the
/// user key; sends SignedProxy and returns the server's Ack together with a
/// transcript of every frame exchanged.
pub async fn client_delegate<T: DelegationTransport + ?Sized>(
    transport: &mut T,
    user: &UserCredential,
    options: &ClientOptions,
) -> Result<(Ack, Transcript), ClientError> {
    let mut transcript = Transcript::new();
    let deadline = Utc::now() + options.timeout;
    let result = run(transport, user, options, deadline, &mut transcript).await;
    for _ in 0..transport.connections() {
        transcript.record_connection();
    }
    result.map(|ack| (ack, transcript))
}

async fn run<T: DelegationTransport + ?Sized>(
    transport: &mut T,
    user: &UserCredential,
    options: &ClientOptions,
    deadline: DateTime<Utc>,
    transcript: &mut Transcript,
) -> Result<Ack, ClientError> {
    let own_dn = user.cert.subject().clone();
    if let Some(expected) = &options.expected_server {
        let actual = transport.server_identity();
        if actual.as_ref() != Some(expected) {
            return Err(ClientError::ChannelIdentityMismatch {
                expected: expected.clone(),
                actual: actual
                    .map(|d| d.to_string())
                    .unwrap_or_else(|| "<unauthenticated>".into()),
            });
        }
    }

    let init = DelegationMessage::Init {
        subject_dn: own_dn.clone(),
        user_cert_pem: options.present_certificate.then(|| user.cert.to_pem()),
    };
    let reply = exchange(transport, &init, deadline, transcript).await?;

    let (session_id, csr_pem) = match reply {
        DelegationMessage::CsrReply {
            session_id,
            csr_pem,
        } => (session_id, csr_pem),
        other => return Err(unexpected(other)),
    };
    let csr = CertificateSigningRequest::from_pem(csr_pem.as_bytes())?;
    if !csr.verify_proof_of_possession() {
        return Err(ClientError::BadProofOfPossession);
    }
    if !csr.subject().extends_by_one_cn(&own_dn) {
        return Err(ClientError::Substitution {
            requested: csr.subject().clone(),
            own: own_dn,
        });
    }

    let proxy = sign_proxy_csr(
        &user.cert,
        &user.key,
        &csr,
        options.lifetime,
        Utc::now(),
        options.proxy_options,
    )?;
    let signed = DelegationMessage::SignedProxy {
        session_id: session_id.clone(),
        proxy_cert_pem: proxy.to_pem(),
    };
    match exchange(transport, &signed, deadline, transcript).await? {
        DelegationMessage::Ack {
            session_id: acked,
            proxy_fingerprint,
            not_after,
        } => {
            if acked != session_id {
                return Err(ClientError::Protocol("Ack for a different session".into()));
            }
            if proxy_fingerprint != proxy.fingerprint() {
                return Err(ClientError::FingerprintMismatch);
            }
            Ok(Ack {
                session_id,
                proxy_fingerprint,
                not_after,
            })
        }
        other => Err(unexpected(other)),
    }
}

async fn exchange<T: DelegationTransport + ?Sized>(
    transport: &mut T,
    msg: &DelegationMessage,
    deadline: DateTime<Utc>,
    transcript: &mut Transcript,
) -> Result<DelegationMessage, ClientError> {
    let frame = encode_frame(msg);
    transcript.record_sent(msg.kind(), &frame);
    let remaining = (deadline - Utc::now())
        .to_std()
        .unwrap_or(StdDuration::ZERO);
    let reply = match tokio::time::timeout(remaining, transport.round_trip(frame)).await {
        Ok(Ok(bytes)) => bytes,
        Ok(Err(TransportError::Status { body, status })) => {
            // Faults may arrive with a non-success HTTP status.
            match decode_frame::<DelegationMessage>(&body) {
                Ok(msg) => {
                    transcript.record_received(msg.kind(), &body);
                    return Err(unexpected(msg));
                }
                Err(_) => return Err(TransportError::Status { status, body }.into()),
            }
        }
        Ok(Err(err)) => return Err(err.into()),
        Err(_) => return Err(ClientError::Timeout),
    };
    let msg: DelegationMessage = decode_frame(&reply)?;
    transcript.record_received(msg.kind(), &reply);
    Ok(msg)
}

fn unexpected(msg: DelegationMessage) -> ClientError {
    match msg {
        DelegationMessage::Fault { code, detail } => ClientError::Fault { code, detail },
        other => ClientError::Protocol(format!("unexpected {}", other.kind())),
    }
}
