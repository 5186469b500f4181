//! Server side of the delegation handshake.
//!
//! ```text
//! client                                  server
//!   | -- Init{subject_dn} -------------------> |  fresh key pair + CSR
//!   | <------------- CsrReply{session, csr} -- |
//!   |  sign CSR with user key                  |
//!   | -- SignedProxy{session, cert} ---------> |  assemble, validate, store
//!   | <------- Ack{session, fingerprint, ..} -- |
//! ```

use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use lgrid_pki::{
    assemble_proxy_bundle, create_proxy_csr, AlgorithmId, Certificate, CertificateSigningRequest,
    DistinguishedName, KeyPair,
};

use crate::message::{DelegationMessage, FaultCode, SessionId};
use crate::store::{ProxyStore, StoreError, StoredProxy};

pub const DEFAULT_SESSION_TIMEOUT: Duration = Duration::seconds(60);

/// The authenticated party on the other end of the channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeerIdentity {
    pub dn: DistinguishedName,
    pub certificate: Certificate,
}

impl PeerIdentity {
    pub fn from_certificate(certificate: Certificate) -> Self {
        PeerIdentity {
            dn: certificate.subject().clone(),
            certificate,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StateName {
    AwaitInit,
    AwaitSigned,
    Done,
    Failed,
}

impl StateName {
    /// The declared transition relation.
    pub fn may_become(self, next: StateName) -> bool {
        use StateName::*;
        matches!(
            (self, next),
            (AwaitInit, AwaitSigned)
                | (AwaitSigned, Done)
                | (AwaitInit | AwaitSigned | Done, Failed)
        ) || self == next
    }
}

#[derive(Debug, Clone)]
pub enum SessionState {
    AwaitInit,
    AwaitSigned {
        keypair: KeyPair,
        csr: CertificateSigningRequest,
    },
    Done {
        stored: StoredProxy,
    },
    Failed {
        code: FaultCode,
    },
}

impl SessionState {
    pub fn name(&self) -> StateName {
        match self {
            SessionState::AwaitInit => StateName::AwaitInit,
            SessionState::AwaitSigned { .. } => StateName::AwaitSigned,
            SessionState::Done { .. } => StateName::Done,
            SessionState::Failed { .. } => StateName::Failed,
        }
    }
}

/// One in-flight delegation, confined to a single connection.
#[derive(Debug, Clone)]
pub struct DelegationSession {
    id: SessionId,
    /// Fixed by the channel, or by the certificate in Init when the channel
    /// is unauthenticated.
    peer: Option<PeerIdentity>,
    state: SessionState,
    deadline: DateTime<Utc>,
}

impl DelegationSession {
    pub fn id(&self) -> &SessionId {
        &self.id
    }

    pub fn peer(&self) -> Option<&PeerIdentity> {
        self.peer.as_ref()
    }

    pub fn state(&self) -> &SessionState {
        &self.state
    }

    pub fn deadline(&self) -> DateTime<Utc> {
        self.deadline
    }

    /// The stored proxy once the session reached `Done`.
    pub fn stored(&self) -> Option<&StoredProxy> {
        match &self.state {
            SessionState::Done { stored } => Some(stored),
            _ => None,
        }
    }

    fn fail(&mut self, code: FaultCode, detail: impl Into<String>) -> DelegationMessage {
        if self.state.name() != StateName::Failed {
            self.state = SessionState::Failed { code };
        }
        DelegationMessage::fault(code, detail)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DelegationConfig {
    pub session_timeout: Duration,
    pub key_algorithm: AlgorithmId,
}

impl Default for DelegationConfig {
    fn default() -> Self {
        DelegationConfig {
            session_timeout: DEFAULT_SESSION_TIMEOUT,
            key_algorithm: AlgorithmId::default(),
        }
    }
}

/// Stateless handler for delegation sessions, sharing one proxy store.
#[derive(Debug, Clone)]
pub struct DelegationService {
    store: Arc<ProxyStore>,
    config: DelegationConfig,
}

impl DelegationService {
    pub fn new(store: Arc<ProxyStore>, config: DelegationConfig) -> Self {
        DelegationService { store, config }
    }

    pub fn store(&self) -> &Arc<ProxyStore> {
        &self.store
    }

    pub fn open_session(&self, peer: PeerIdentity, now: DateTime<Utc>) -> DelegationSession {
        self.open(Some(peer), now)
    }

    /// A session on a channel that did not authenticate the client. Init
    /// must then carry a trusted user certificate, and the signed proxy
    /// proves possession of its key.
    pub fn open_unauthenticated_session(&self, now: DateTime<Utc>) -> DelegationSession {
        self.open(None, now)
    }

    fn open(&self, peer: Option<PeerIdentity>, now: DateTime<Utc>) -> DelegationSession {
        DelegationSession {
            id: SessionId::random(),
            peer,
            state: SessionState::AwaitInit,
            deadline: now + self.config.session_timeout,
        }
    }

    /// Applies one client message to the session and returns the reply.
    pub fn handle(
        &self,
        session: &mut DelegationSession,
        msg: DelegationMessage,
        now: DateTime<Utc>,
    ) -> DelegationMessage {
        if now > session.deadline
            && matches!(
                session.state.name(),
                StateName::AwaitInit | StateName::AwaitSigned
            )
        {
            return session.fail(
                FaultCode::SessionExpired,
                "delegation session deadline passed",
            );
        }
        match msg {
            DelegationMessage::Init {
                subject_dn,
                user_cert_pem,
            } => self.handle_init(session, subject_dn, user_cert_pem.as_deref(), now),
            DelegationMessage::SignedProxy {
                session_id,
                proxy_cert_pem,
            } => self.handle_signed_proxy(session, &session_id, &proxy_cert_pem, now),
            other => DelegationMessage::fault(
                FaultCode::BadState,
                format!("{} is not a client message", other.kind()),
            ),
        }
    }

    /// Step 3: generate a fresh key pair and a CSR for the peer's DN.
    pub fn handle_init(
        &self,
        session: &mut DelegationSession,
        subject_dn: DistinguishedName,
        user_cert_pem: Option<&str>,
        now: DateTime<Utc>,
    ) -> DelegationMessage {
        if session.state.name() != StateName::AwaitInit {
            return DelegationMessage::fault(
                FaultCode::BadState,
                "Init received outside AWAIT_INIT",
            );
        }
        let presented = match user_cert_pem.map(|pem| Certificate::from_pem(pem.as_bytes())) {
            None => None,
            Some(Ok(cert)) => Some(cert),
            Some(Err(err)) => {
                return session.fail(FaultCode::Malformed, format!("user certificate: {err}"))
            }
        };
        let peer = match (&session.peer, presented) {
            (Some(peer), Some(cert)) if cert != peer.certificate => {
                return session.fail(
                    FaultCode::DnMismatch,
                    "Init certificate differs from the channel's",
                );
            }
            (Some(peer), _) => peer.clone(),
            (None, None) => {
                return session.fail(
                    FaultCode::DnMismatch,
                    "unauthenticated channel and no certificate in Init",
                );
            }
            (None, Some(cert)) => {
                if !cert.is_valid_at(now) || self.store.trust().issuer_of(&cert, now).is_none() {
                    return session.fail(
                        FaultCode::ValidationFailed,
                        "user certificate is not trusted",
                    );
                }
                PeerIdentity::from_certificate(cert)
            }
        };
        if subject_dn != peer.dn {
            return session.fail(
                FaultCode::DnMismatch,
                format!("Init names {subject_dn} but the client is {}", peer.dn),
            );
        }
        session.peer = Some(peer);
        let prepared = KeyPair::generate(self.config.key_algorithm)
            .and_then(|keypair| create_proxy_csr(&subject_dn, &keypair).map(|csr| (keypair, csr)));
        match prepared {
            Ok((keypair, csr)) => {
                let reply = DelegationMessage::CsrReply {
                    session_id: session.id.clone(),
                    csr_pem: csr.to_pem(),
                };
                session.state = SessionState::AwaitSigned { keypair, csr };
                reply
            }
            Err(err) => session.fail(FaultCode::Internal, err.to_string()),
        }
    }

    /// Step 5: check the signed proxy, assemble the proxy file, store it.
    pub fn handle_signed_proxy(
        &self,
        session: &mut DelegationSession,
        session_id: &SessionId,
        proxy_cert_pem: &str,
        now: DateTime<Utc>,
    ) -> DelegationMessage {
        if session_id != &session.id {
            return DelegationMessage::fault(
                FaultCode::UnknownSession,
                format!("no session {session_id}"),
            );
        }
        let SessionState::AwaitSigned { keypair, .. } = &session.state else {
            return DelegationMessage::fault(
                FaultCode::BadState,
                "SignedProxy received outside AWAIT_SIGNED",
            );
        };
        let proxy = match Certificate::from_pem(proxy_cert_pem.as_bytes()) {
            Ok(cert) => cert,
            Err(err) => return session.fail(FaultCode::Malformed, err.to_string()),
        };
        if proxy.public_key() != keypair.public_key() {
            return session.fail(
                FaultCode::KeyMismatch,
                "proxy certificate is not over the session key",
            );
        }
        let Some(peer) = &session.peer else {
            return session.fail(FaultCode::BadState, "no client identity");
        };
        if proxy.issuer() != &peer.dn {
            return session.fail(
                FaultCode::ValidationFailed,
                "proxy issuer is not the authenticated user",
            );
        }
        let bundle = match assemble_proxy_bundle(&proxy, keypair, &peer.certificate) {
            Ok(bundle) => bundle,
            Err(err) => return session.fail(FaultCode::ValidationFailed, err.to_string()),
        };
        match self.store.put(bundle, now) {
            Ok(stored) => {
                let ack = DelegationMessage::Ack {
                    session_id: session.id.clone(),
                    proxy_fingerprint: stored.fingerprint.clone(),
                    not_after: stored.not_after,
                };
                session.state = SessionState::Done { stored };
                ack
            }
            Err(StoreError::Invalid(report)) => {
                session.fail(FaultCode::ValidationFailed, report.to_string())
            }
            Err(err) => session.fail(FaultCode::Internal, err.to_string()),
        }
    }
}
