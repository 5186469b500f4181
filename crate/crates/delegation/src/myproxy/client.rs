use chrono::{DateTime, Duration, Utc};
use lgrid_pki::{
    assemble_proxy_bundle_with_chain, create_proxy_csr, parse_pem_blocks, AlgorithmId, Certificate,
    DistinguishedName, KeyPair, PkiError,
};
use tokio::io::{AsyncRead, AsyncWrite};

use super::protocol::{MyProxyErrorCode, MyProxyReply, MyProxyRequest};
use crate::client::TransportError;
use crate::message::{
    decode_frame, encode_frame, read_frame_bytes, write_frame_bytes, FrameError, Named,
};
use crate::tls::ClientTls;
use crate::transcript::Transcript;

/// Where the repository listens and how to reach it.
#[derive(Debug, Clone)]
pub struct MyProxyEndpoint {
    pub addr: String,
    pub tls: ClientTls,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Receipt {
    pub id: String,
    pub not_after: DateTime<Utc>,
}

#[derive(Debug, thiserror::Error)]
pub enum MyProxyError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("repository refused: {code:?}: {detail}")]
    Refused {
        code: MyProxyErrorCode,
        detail: String,
    },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Pki(#[from] PkiError),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

impl MyProxyError {
    pub fn code(&self) -> Option<MyProxyErrorCode> {
        match self {
            MyProxyError::Refused { code, .. } => Some(*code),
            _ => None,
        }
    }
}

async fn exchange<S>(
    stream: &mut S,
    msg: &MyProxyRequest,
    transcript: &mut Transcript,
) -> Result<MyProxyReply, MyProxyError>
where
    S: AsyncRead + AsyncWrite + Unpin,
{
    let frame = encode_frame(msg);
    transcript.record_sent(msg.kind(), &frame);
    write_frame_bytes(stream, &frame).await?;
    let reply_frame = read_frame_bytes(stream).await?;
    let reply: MyProxyReply = decode_frame(&reply_frame)?;
    transcript.record_received(reply.kind(), &reply_frame);
    match reply {
        MyProxyReply::Error { code, detail } => Err(MyProxyError::Refused { code, detail }),
        other => Ok(other),
    }
}

fn unexpected<T: Named>(reply: &T) -> MyProxyError {
    MyProxyError::Protocol(format!("unexpected {}", reply.kind()))
}

/// Uploads a long-lived proxy credential under `username`.
pub async fn myproxy_put(
    endpoint: &MyProxyEndpoint,
    username: &str,
    passphrase: &str,
    bundle: &[u8],
    retention: Duration,
) -> Result<(Receipt, Transcript), MyProxyError> {
    let mut transcript = Transcript::new();
    let (mut stream, _) = endpoint.tls.connect(&endpoint.addr).await?;
    transcript.record_connection();
    let command = MyProxyRequest::PutCommand {
        username: username.to_owned(),
        passphrase: passphrase.to_owned(),
        retention_secs: retention.num_seconds(),
    };
    match exchange(&mut stream, &command, &mut transcript).await? {
        MyProxyReply::Ok { .. } => {}
        other => return Err(unexpected(&other)),
    }
    let bundle_pem = String::from_utf8(bundle.to_vec())
        .map_err(|_| PkiError::malformed("proxy bundle", "not UTF-8"))?;
    match exchange(
        &mut stream,
        &MyProxyRequest::Credential { bundle_pem },
        &mut transcript,
    )
    .await?
    {
        MyProxyReply::Stored { receipt, not_after } => Ok((
            Receipt {
                id: receipt,
                not_after,
            },
            transcript,
        )),
        other => Err(unexpected(&other)),
    }
}

/// Retrieves a fresh short-lived proxy derived from the stored credential.
/// The new key pair is generated here and never sent.
pub async fn myproxy_get(
    endpoint: &MyProxyEndpoint,
    username: &str,
    passphrase: &str,
    lifetime: Duration,
) -> Result<(Vec<u8>, Transcript), MyProxyError> {
    let mut transcript = Transcript::new();
    let (mut stream, _) = endpoint.tls.connect(&endpoint.addr).await?;
    transcript.record_connection();
    let command = MyProxyRequest::GetCommand {
        username: username.to_owned(),
        passphrase: passphrase.to_owned(),
        lifetime_secs: lifetime.num_seconds(),
    };
    let subject = match exchange(&mut stream, &command, &mut transcript).await? {
        MyProxyReply::Ok {
            subject_dn: Some(dn),
        } => DistinguishedName::parse(&dn)?,
        other => return Err(unexpected(&other)),
    };
    let key = KeyPair::generate(AlgorithmId::default())?;
    let csr = create_proxy_csr(&subject, &key)?;
    let chain_pem = match exchange(
        &mut stream,
        &MyProxyRequest::Csr {
            csr_pem: csr.to_pem(),
        },
        &mut transcript,
    )
    .await?
    {
        MyProxyReply::Certificates { chain_pem } => chain_pem,
        other => return Err(unexpected(&other)),
    };
    let certs = parse_pem_blocks(chain_pem.as_bytes())?
        .iter()
        .map(|block| Certificate::from_der(block.contents()))
        .collect::<Result<Vec<_>, _>>()?;
    let (proxy, chain) = certs
        .split_first()
        .ok_or_else(|| MyProxyError::Protocol("empty certificate chain".into()))?;
    if proxy.public_key() != key.public_key() {
        return Err(MyProxyError::Protocol(
            "returned proxy is not over the requested key".into(),
        ));
    }
    let bundle = assemble_proxy_bundle_with_chain(proxy, &key, chain)?;
    Ok((bundle, transcript))
}

/// Creates a proxy credential locally, as a user does before uploading it
/// with [`myproxy_put`].
pub fn local_proxy_bundle(
    user: &lgrid_pki::UserCredential,
    lifetime: Duration,
    options: lgrid_pki::ProxyOptions,
) -> Result<Vec<u8>, PkiError> {
    let key = KeyPair::generate(AlgorithmId::default())?;
    let csr = create_proxy_csr(user.cert.subject(), &key)?;
    let cert =
        lgrid_pki::sign_proxy_csr(&user.cert, &user.key, &csr, lifetime, Utc::now(), options)?;
    lgrid_pki::assemble_proxy_bundle(&cert, &key, &user.cert)
}
