//! In-process stand-in for the authenticated channel. The harness injects
//! the peer identity the server sees, so protocol logic is testable without
//! a TLS stack.

use std::sync::Arc;

use async_trait::async_trait;
use chrono::{DateTime, Utc};
use lgrid_pki::DistinguishedName;

use crate::client::{DelegationTransport, TransportError};
use crate::message::{decode_frame, encode_frame, DelegationMessage, FaultCode};
use crate::session::{DelegationService, DelegationSession, PeerIdentity};
use crate::transcript::Transcript;

type Tamper = Box<dyn FnMut(DelegationMessage) -> DelegationMessage + Send>;
type Clock = Box<dyn Fn() -> DateTime<Utc> + Send>;

/// One simulated connection to a [`DelegationService`]; holds at most one
/// session, like a real connection handler.
pub struct SimulatedChannel {
    service: Arc<DelegationService>,
    peer: Option<PeerIdentity>,
    server_dn: Option<DistinguishedName>,
    session: Option<DelegationSession>,
    tamper: Option<Tamper>,
    clock: Clock,
    server_log: Transcript,
}

impl SimulatedChannel {
    pub fn new(
        service: Arc<DelegationService>,
        peer: PeerIdentity,
        server_dn: Option<DistinguishedName>,
    ) -> Self {
        Self::with_peer(service, Some(peer), server_dn)
    }

    /// A channel that authenticated only the server, as a browser sees it.
    pub fn unauthenticated(
        service: Arc<DelegationService>,
        server_dn: Option<DistinguishedName>,
    ) -> Self {
        Self::with_peer(service, None, server_dn)
    }

    fn with_peer(
        service: Arc<DelegationService>,
        peer: Option<PeerIdentity>,
        server_dn: Option<DistinguishedName>,
    ) -> Self {
        let mut server_log = Transcript::new();
        server_log.record_connection();
        SimulatedChannel {
            service,
            peer,
            server_dn,
            session: None,
            tamper: None,
            clock: Box::new(Utc::now),
            server_log,
        }
    }

    /// Rewrites every server reply before the client sees it.
    pub fn with_tamper(
        mut self,
        f: impl FnMut(DelegationMessage) -> DelegationMessage + Send + 'static,
    ) -> Self {
        self.tamper = Some(Box::new(f));
        self
    }

    /// Overrides the server clock.
    pub fn with_clock(mut self, f: impl Fn() -> DateTime<Utc> + Send + 'static) -> Self {
        self.clock = Box::new(f);
        self
    }

    pub fn session(&self) -> Option<&DelegationSession> {
        self.session.as_ref()
    }

    /// Frames as the server saw them.
    pub fn server_log(&self) -> &Transcript {
        &self.server_log
    }
}

#[async_trait]
impl DelegationTransport for SimulatedChannel {
    async fn round_trip(&mut self, frame: Vec<u8>) -> Result<Vec<u8>, TransportError> {
        let now = (self.clock)();
        let reply = match decode_frame::<DelegationMessage>(&frame) {
            Ok(msg) => {
                self.server_log.record_received(msg.kind(), &frame);
                let service = &self.service;
                let peer = &self.peer;
                let session = self.session.get_or_insert_with(|| match peer {
                    Some(peer) => service.open_session(peer.clone(), now),
                    None => service.open_unauthenticated_session(now),
                });
                service.handle(session, msg, now)
            }
            Err(err) => DelegationMessage::fault(FaultCode::Malformed, err.to_string()),
        };
        let reply = match self.tamper.as_mut() {
            Some(tamper) => tamper(reply),
            None => reply,
        };
        let bytes = encode_frame(&reply);
        self.server_log.record_sent(reply.kind(), &bytes);
        Ok(bytes)
    }

    fn server_identity(&self) -> Option<DistinguishedName> {
        self.server_dn.clone()
    }

    fn connections(&self) -> u32 {
        1
    }
}
