use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use chrono::{DateTime, Duration, Utc};
use lgrid_pki::{
    sign_proxy_csr, validate_proxy_chain, CertificateSigningRequest, ProxyCredential, ProxyOptions,
    TrustStore,
};
use openssl::ssl::SslAcceptor;
use rand::RngCore;
use serde::de::DeserializeOwned;
use tokio::io::{AsyncRead, AsyncWrite};
use tokio::net::TcpListener;

use super::protocol::{MyProxyErrorCode, MyProxyReply, MyProxyRequest};
use crate::message::{decode_frame, encode_frame, read_frame_bytes, write_frame_bytes, FrameError};
use crate::session::PeerIdentity;
use crate::tls;

pub const DEFAULT_MYPROXY_PORT: u16 = 7513;

struct Entry {
    salt: [u8; 16],
    digest: [u8; 32],
    credential: ProxyCredential,
    not_after: DateTime<Utc>,
}

fn digest(salt: &[u8; 16], passphrase: &str) -> [u8; 32] {
    let mut input = salt.to_vec();
    input.extend_from_slice(passphrase.as_bytes());
    openssl::sha::sha256(&input)
}

/// Credential repository keyed by username. Passphrases are kept only as
/// salted digests.
pub struct MyProxyServer {
    entries: Mutex<HashMap<String, Entry>>,
    trust: TrustStore,
    options: ProxyOptions,
}

impl std::fmt::Debug for MyProxyServer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MyProxyServer")
            .field("users", &self.users())
            .finish_non_exhaustive()
    }
}

impl MyProxyServer {
    pub fn new(trust: TrustStore, options: ProxyOptions) -> Arc<Self> {
        Arc::new(MyProxyServer {
            entries: Mutex::default(),
            trust,
            options,
        })
    }

    pub fn users(&self) -> Vec<String> {
        let mut users: Vec<_> = self
            .entries
            .lock()
            .expect("repository lock")
            .keys()
            .cloned()
            .collect();
        users.sort();
        users
    }

    /// Accepts TLS connections until the listener fails.
    pub async fn serve(
        self: Arc<Self>,
        listener: TcpListener,
        acceptor: SslAcceptor,
    ) -> std::io::Result<()> {
        let acceptor = Arc::new(acceptor);
        loop {
            let (tcp, remote) = listener.accept().await?;
            let _ = tcp.set_nodelay(true);
            let server = Arc::clone(&self);
            let acceptor = Arc::clone(&acceptor);
            tokio::spawn(async move {
                match tls::accept(&acceptor, tcp).await {
                    Ok((mut stream, peer)) => {
                        if let Err(err) = server.handle_connection(&mut stream, peer).await {
                            tracing::debug!(%remote, %err, "myproxy connection ended");
                        }
                    }
                    Err(err) => tracing::debug!(%remote, %err, "myproxy handshake failed"),
                }
            });
        }
    }

    /// Runs one put or get exchange on an established connection.
    pub async fn handle_connection<S>(
        &self,
        stream: &mut S,
        peer: Option<PeerIdentity>,
    ) -> Result<(), FrameError>
    where
        S: AsyncRead + AsyncWrite + Unpin,
    {
        let first: MyProxyRequest = read(stream).await?;
        match first {
            MyProxyRequest::PutCommand {
                username,
                passphrase,
                retention_secs,
            } => {
                let Some(peer) = peer else {
                    return reply(
                        stream,
                        MyProxyReply::error(
                            MyProxyErrorCode::Unauthenticated,
                            "put requires a client certificate",
                        ),
                    )
                    .await;
                };
                if username.is_empty() || passphrase.is_empty() || retention_secs <= 0 {
                    return reply(
                        stream,
                        MyProxyReply::error(
                            MyProxyErrorCode::BadRequest,
                            "empty username, passphrase or retention",
                        ),
                    )
                    .await;
                }
                reply(stream, MyProxyReply::Ok { subject_dn: None }).await?;
                let MyProxyRequest::Credential { bundle_pem } = read(stream).await? else {
                    return reply(
                        stream,
                        MyProxyReply::error(MyProxyErrorCode::BadRequest, "expected Credential"),
                    )
                    .await;
                };
                let outcome = self.put(
                    &peer,
                    username,
                    &passphrase,
                    bundle_pem.as_bytes(),
                    Duration::seconds(retention_secs),
                    Utc::now(),
                );
                reply(stream, outcome).await
            }
            MyProxyRequest::GetCommand {
                username,
                passphrase,
                lifetime_secs,
            } => {
                let subject = match self.authenticate(&username, &passphrase, Utc::now()) {
                    Ok(subject) => subject,
                    Err(err) => return reply(stream, err).await,
                };
                reply(
                    stream,
                    MyProxyReply::Ok {
                        subject_dn: Some(subject),
                    },
                )
                .await?;
                let MyProxyRequest::Csr { csr_pem } = read(stream).await? else {
                    return reply(
                        stream,
                        MyProxyReply::error(MyProxyErrorCode::BadRequest, "expected Csr"),
                    )
                    .await;
                };
                let outcome = self.get(
                    &username,
                    csr_pem.as_bytes(),
                    Duration::seconds(lifetime_secs),
                    Utc::now(),
                );
                reply(stream, outcome).await
            }
            other => {
                let detail = format!(
                    "{} cannot open an exchange",
                    crate::message::Named::kind(&other)
                );
                reply(
                    stream,
                    MyProxyReply::error(MyProxyErrorCode::BadRequest, detail),
                )
                .await
            }
        }
    }

    fn put(
        &self,
        peer: &PeerIdentity,
        username: String,
        passphrase: &str,
        bundle: &[u8],
        retention: Duration,
        now: DateTime<Utc>,
    ) -> MyProxyReply {
        let credential = match ProxyCredential::parse(bundle) {
            Ok(c) if c.proxy_key.is_some() => c,
            Ok(_) => {
                return MyProxyReply::error(
                    MyProxyErrorCode::Invalid,
                    "credential carries no private key",
                )
            }
            Err(err) => return MyProxyReply::error(MyProxyErrorCode::Invalid, err.to_string()),
        };
        if credential.user_dn() != &peer.dn {
            return MyProxyReply::error(
                MyProxyErrorCode::Unauthenticated,
                "credential does not belong to the connected user",
            );
        }
        let report = validate_proxy_chain(&credential, &self.trust, now, self.options);
        if !report.is_ok() {
            return MyProxyReply::error(MyProxyErrorCode::Invalid, report.to_string());
        }
        let mut entries = self.entries.lock().expect("repository lock");
        if let Some(existing) = entries.get(&username) {
            if existing.credential.user_dn() != &peer.dn {
                return MyProxyReply::error(
                    MyProxyErrorCode::Unauthenticated,
                    "username belongs to another user",
                );
            }
        }
        let mut salt = [0u8; 16];
        rand::thread_rng().fill_bytes(&mut salt);
        let not_after = credential.proxy_cert.not_after().min(now + retention);
        let receipt = credential.proxy_cert.fingerprint();
        entries.insert(
            username,
            Entry {
                digest: digest(&salt, passphrase),
                salt,
                credential,
                not_after,
            },
        );
        MyProxyReply::Stored { receipt, not_after }
    }

    fn authenticate(
        &self,
        username: &str,
        passphrase: &str,
        now: DateTime<Utc>,
    ) -> Result<String, MyProxyReply> {
        let entries = self.entries.lock().expect("repository lock");
        let entry = entries.get(username).ok_or_else(|| {
            MyProxyReply::error(
                MyProxyErrorCode::UnknownUser,
                format!("no credential for {username}"),
            )
        })?;
        if !openssl::memcmp::eq(&digest(&entry.salt, passphrase), &entry.digest) {
            return Err(MyProxyReply::error(
                MyProxyErrorCode::WrongPassphrase,
                "passphrase does not match",
            ));
        }
        if now >= entry.not_after {
            return Err(MyProxyReply::error(
                MyProxyErrorCode::CredentialExpired,
                format!("credential expired at {}", entry.not_after),
            ));
        }
        Ok(entry.credential.proxy_cert.subject().to_string())
    }

    fn get(
        &self,
        username: &str,
        csr_pem: &[u8],
        lifetime: Duration,
        now: DateTime<Utc>,
    ) -> MyProxyReply {
        let entries = self.entries.lock().expect("repository lock");
        let Some(entry) = entries.get(username) else {
            return MyProxyReply::error(MyProxyErrorCode::UnknownUser, "credential removed");
        };
        let csr = match CertificateSigningRequest::from_pem(csr_pem) {
            Ok(csr) => csr,
            Err(err) => return MyProxyReply::error(MyProxyErrorCode::BadRequest, err.to_string()),
        };
        let stored = &entry.credential;
        let key = stored
            .proxy_key
            .as_ref()
            .expect("stored credentials carry keys");
        let lifetime = lifetime.min(entry.not_after - now);
        match sign_proxy_csr(&stored.proxy_cert, key, &csr, lifetime, now, self.options) {
            Ok(cert) => {
                let mut chain_pem = cert.to_pem();
                chain_pem.push_str(&stored.proxy_cert.to_pem());
                for c in &stored.chain {
                    chain_pem.push_str(&c.to_pem());
                }
                MyProxyReply::Certificates { chain_pem }
            }
            Err(err) => MyProxyReply::error(MyProxyErrorCode::BadRequest, err.to_string()),
        }
    }
}

async fn read<S: AsyncRead + Unpin, T: DeserializeOwned>(stream: &mut S) -> Result<T, FrameError> {
    let frame = read_frame_bytes(stream).await?;
    decode_frame(&frame)
}

async fn reply<S: AsyncWrite + Unpin>(stream: &mut S, msg: MyProxyReply) -> Result<(), FrameError> {
    write_frame_bytes(stream, &encode_frame(&msg)).await
}
