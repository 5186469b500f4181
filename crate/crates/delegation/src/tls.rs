//! Mutually authenticated TLS plumbing shared by the gateway, the MyProxy
//! simulator and the command-line client.

use std::pin::Pin;

use lgrid_pki::{Certificate, DistinguishedName, KeyPair, TrustStore};
use openssl::pkey::PKey;
use openssl::ssl::{SslAcceptor, SslConnector, SslMethod, SslRef, SslVerifyMode, SslVersion};
use openssl::x509::store::X509StoreBuilder;
use openssl::x509::X509;
use tokio::io::{AsyncRead, AsyncWrite};
use tokio::net::TcpStream;
use tokio_openssl::SslStream;

use crate::client::TransportError;
use crate::session::PeerIdentity;

/// A certificate and its private key, as presented during a handshake.
#[derive(Debug, Clone)]
pub struct TlsIdentity {
    pub cert: Certificate,
    pub key: KeyPair,
}

fn x509(cert: &Certificate) -> Result<X509, openssl::error::ErrorStack> {
    X509::from_der(cert.der())
}

fn cert_store(
    trust: &TrustStore,
) -> Result<openssl::x509::store::X509Store, openssl::error::ErrorStack> {
    let mut builder = X509StoreBuilder::new()?;
    for anchor in trust.anchors() {
        builder.add_cert(x509(anchor)?)?;
    }
    Ok(builder.build())
}

fn private_key(key: &KeyPair) -> Result<PKey<openssl::pkey::Private>, openssl::error::ErrorStack> {
    let der = key
        .private_key_der()
        .map_err(|_| openssl::error::ErrorStack::get())?;
    PKey::private_key_from_der(&der)
}

/// Server side. Client certificates are requested and verified against
/// `trust` when presented, but not required: endpoints that need an
/// identity check [`peer_identity`] themselves.
pub fn server_acceptor(
    identity: &TlsIdentity,
    trust: &TrustStore,
) -> Result<SslAcceptor, openssl::error::ErrorStack> {
    let mut builder = SslAcceptor::mozilla_intermediate_v5(SslMethod::tls_server())?;
    builder.set_min_proto_version(Some(SslVersion::TLS1_2))?;
    let cert = x509(&identity.cert)?;
    let key = private_key(&identity.key)?;
    builder.set_certificate(&cert)?;
    builder.set_private_key(&key)?;
    builder.check_private_key()?;
    builder.set_verify_cert_store(cert_store(trust)?)?;
    let mut names = openssl::stack::Stack::new()?;
    for anchor in trust.anchors() {
        names.push(x509(anchor)?.subject_name().to_owned()?)?;
    }
    builder.set_client_ca_list(names);
    builder.set_verify(SslVerifyMode::PEER);
    Ok(builder.build())
}

/// Client-side settings: which anchors to trust, an optional client
/// identity, and the server DN the channel must authenticate.
#[derive(Clone)]
pub struct ClientTls {
    connector: SslConnector,
    expected_server: Option<DistinguishedName>,
}

impl std::fmt::Debug for ClientTls {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ClientTls")
            .field("expected_server", &self.expected_server)
            .finish_non_exhaustive()
    }
}

impl ClientTls {
    pub fn new(
        trust: &TrustStore,
        identity: Option<&TlsIdentity>,
        expected_server: Option<DistinguishedName>,
    ) -> Result<Self, openssl::error::ErrorStack> {
        let mut builder = SslConnector::builder(SslMethod::tls_client())?;
        builder.set_min_proto_version(Some(SslVersion::TLS1_2))?;
        builder.set_cert_store(cert_store(trust)?);
        if let Some(identity) = identity {
            let cert = x509(&identity.cert)?;
            let key = private_key(&identity.key)?;
            builder.set_certificate(&cert)?;
            builder.set_private_key(&key)?;
            builder.check_private_key()?;
        }
        builder.set_verify(SslVerifyMode::PEER);
        Ok(ClientTls {
            connector: builder.build(),
            expected_server,
        })
    }

    pub fn expected_server(&self) -> Option<&DistinguishedName> {
        self.expected_server.as_ref()
    }

    /// Opens TCP to `addr` and completes the handshake. Server identity is
    /// checked by DN, not by host name.
    pub async fn connect(
        &self,
        addr: &str,
    ) -> Result<(SslStream<TcpStream>, PeerIdentity), TransportError> {
        let tcp = TcpStream::connect(addr)
            .await
            .map_err(|e| TransportError::Unreachable(format!("{addr}: {e}")))?;
        let _ = tcp.set_nodelay(true);
        let mut config = self
            .connector
            .configure()
            .map_err(|e| TransportError::Io(e.to_string()))?;
        config.set_verify_hostname(false);
        let ssl = config
            .into_ssl("localhost")
            .map_err(|e| TransportError::Io(e.to_string()))?;
        let mut stream = SslStream::new(ssl, tcp).map_err(|e| TransportError::Io(e.to_string()))?;
        Pin::new(&mut stream)
            .connect()
            .await
            .map_err(|e| TransportError::Io(format!("TLS handshake: {e}")))?;
        let server = peer_identity(stream.ssl())
            .ok_or_else(|| TransportError::Io("server presented no certificate".into()))?;
        if let Some(expected) = &self.expected_server {
            if &server.dn != expected {
                return Err(TransportError::Io(format!(
                    "server identity {} does not match expected {expected}",
                    server.dn
                )));
            }
        }
        Ok((stream, server))
    }
}

/// Completes a server handshake and returns the verified client identity,
/// if the client presented one.
pub async fn accept<S>(
    acceptor: &SslAcceptor,
    stream: S,
) -> std::io::Result<(SslStream<S>, Option<PeerIdentity>)>
where
    S: AsyncRead + AsyncWrite + Unpin,
{
    let ssl = openssl::ssl::Ssl::new(acceptor.context()).map_err(std::io::Error::other)?;
    let mut stream = SslStream::new(ssl, stream).map_err(std::io::Error::other)?;
    Pin::new(&mut stream)
        .accept()
        .await
        .map_err(std::io::Error::other)?;
    let peer = peer_identity(stream.ssl());
    Ok((stream, peer))
}

/// The verified peer certificate of an established connection.
pub fn peer_identity(ssl: &SslRef) -> Option<PeerIdentity> {
    let cert = ssl.peer_certificate()?;
    let der = cert.to_der().ok()?;
    Certificate::from_der(&der)
        .ok()
        .map(PeerIdentity::from_certificate)
}
