//! Embedded proxy delegation for the L-GRID gateway.
//!
//! The server generates the proxy key pair and a certificate request; the
//! client signs the request with its user key, which never crosses the wire.
//! Also included: the per-user proxy store, the renewal policy and a minimal
//! external MyProxy simulator used as the comparison baseline.

mod client;
mod message;
pub mod myproxy;
mod renewal;
mod session;
mod sim;
mod store;
pub mod tls;
mod transcript;

pub use client::{
    client_delegate, Ack, ClientError, ClientOptions, DelegationTransport, TransportError,
    DEFAULT_PROXY_LIFETIME,
};
pub use message::{
    decode_frame, encode_frame, read_frame_bytes, write_frame_bytes, DelegationMessage, FaultCode,
    FrameError, Named, SessionId, MAX_FRAME_LEN,
};
pub use renewal::{
    renew_if_needed, ActiveJob, MyProxyRenewer, ProxyRenewer, RenewError, RenewalAction,
    RenewalPolicy, DEFAULT_CHECK_INTERVAL, DEFAULT_RENEWAL_THRESHOLD,
};
pub use session::{
    DelegationConfig, DelegationService, DelegationSession, PeerIdentity, SessionState, StateName,
    DEFAULT_SESSION_TIMEOUT,
};
pub use sim::SimulatedChannel;
pub use store::{ProxyStore, StoreError, StoredProxy};
pub use transcript::{Direction, Transcript, TranscriptEntry};
