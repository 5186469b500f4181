//! HTTPS client for the gateway API, keeping one connection alive and
//! recording everything it sends and receives.

use async_trait::async_trait;
use bytes::Bytes;
use http_body_util::{BodyExt, Full};
use hyper::client::conn::http1::SendRequest;
use hyper::header::{HeaderMap, HeaderValue, AUTHORIZATION, CONTENT_TYPE};
use hyper::{Method, Request, StatusCode};
use hyper_util::rt::TokioIo;
use lgrid_delegation::tls::ClientTls;
use lgrid_delegation::{
    client_delegate, Ack, ClientError, ClientOptions, DelegationTransport, Transcript,
    TransportError,
};
use lgrid_pki::{DistinguishedName, UserCredential};
use rand::RngCore;
use serde::de::DeserializeOwned;

use crate::views::{
    ErrorBody, JobList, JobStatus, JobView, LogonRequest, LogonResponse, RenewalRegistration,
    Submitted, FRAME_CONTENT_TYPE, MISSING_HEADER, TOKEN_HEADER, VO_HEADER,
};

#[derive(Debug, thiserror::Error)]
pub enum ApiClientError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error("gateway returned {status}: {error}: {detail}")]
    Api {
        status: u16,
        error: String,
        detail: String,
    },
    #[error("unexpected response: {0}")]
    Decode(String),
    #[error("not logged in: delegate first")]
    NoToken,
}

impl ApiClientError {
    pub fn status(&self) -> Option<u16> {
        match self {
            ApiClientError::Api { status, .. } => Some(*status),
            _ => None,
        }
    }
}

/// A response as received.
#[derive(Debug, Clone)]
pub struct RawResponse {
    pub status: StatusCode,
    pub headers: HeaderMap,
    pub body: Bytes,
}

/// What a successful delegation yields.
#[derive(Debug, Clone)]
pub struct Delegated {
    pub ack: Ack,
    pub token: String,
    pub transcript: Transcript,
}

/// Output archive and the outputs the job did not produce.
#[derive(Debug, Clone)]
pub struct Output {
    pub archive: Vec<u8>,
    pub missing: Vec<String>,
}

pub struct GatewayClient {
    addr: String,
    tls: ClientTls,
    sender: Option<SendRequest<Full<Bytes>>>,
    server_dn: Option<DistinguishedName>,
    token: Option<String>,
    vo: Option<String>,
    transcript: Transcript,
}

impl std::fmt::Debug for GatewayClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GatewayClient")
            .field("addr", &self.addr)
            .field("connected", &self.sender.is_some())
            .finish()
    }
}

/// The path segment identifying a job: the uuid of a full job id.
pub fn job_path_id(id: &str) -> &str {
    if id.starts_with(lgrid_jobs::JobId::SCHEME) {
        id.rsplit('/').next().unwrap_or(id)
    } else {
        id
    }
}

impl GatewayClient {
    pub fn new(addr: impl Into<String>, tls: ClientTls) -> Self {
        GatewayClient {
            addr: addr.into(),
            tls,
            sender: None,
            server_dn: None,
            token: None,
            vo: None,
            transcript: Transcript::new(),
        }
    }

    pub fn with_token(mut self, token: impl Into<String>) -> Self {
        self.token = Some(token.into());
        self
    }

    pub fn set_token(&mut self, token: Option<String>) {
        self.token = token;
    }

    pub fn token(&self) -> Option<&str> {
        self.token.as_deref()
    }

    pub fn set_vo(&mut self, vo: Option<String>) {
        self.vo = vo;
    }

    /// Everything exchanged so far, across connections.
    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    pub fn take_transcript(&mut self) -> Transcript {
        std::mem::take(&mut self.transcript)
    }

    /// Closes the current connection; the next request opens a new one.
    pub fn disconnect(&mut self) {
        self.sender = None;
    }

    async fn connect(&mut self) -> Result<(), TransportError> {
        let (stream, server) = self.tls.connect(&self.addr).await?;
        let (sender, connection) = hyper::client::conn::http1::handshake(TokioIo::new(stream))
            .await
            .map_err(|e| TransportError::Io(e.to_string()))?;
        tokio::spawn(async move {
            let _ = connection.await;
        });
        self.transcript.record_connection();
        self.server_dn = Some(server.dn);
        self.sender = Some(sender);
        Ok(())
    }

    async fn live_sender(&mut self) -> Result<&mut SendRequest<Full<Bytes>>, TransportError> {
        let usable = match self.sender.as_mut() {
            Some(sender) => sender.ready().await.is_ok(),
            None => false,
        };
        if !usable {
            self.connect().await?;
        }
        Ok(self.sender.as_mut().expect("connected"))
    }

    /// Sends one request. With `reuse_only` no new connection is opened,
    /// which keeps a delegation confined to its connection.
    pub async fn send(
        &mut self,
        method: Method,
        path: &str,
        content_type: Option<&str>,
        body: Vec<u8>,
        reuse_only: bool,
    ) -> Result<RawResponse, TransportError> {
        let mut builder = Request::builder()
            .method(method.clone())
            .uri(path)
            .header("host", "lgrid");
        if let Some(ct) = content_type {
            builder = builder.header(CONTENT_TYPE, ct);
        }
        if let Some(token) = &self.token {
            builder = builder.header(AUTHORIZATION, format!("Bearer {token}"));
        }
        if let Some(vo) = &self.vo {
            builder = builder.header(VO_HEADER, vo.as_str());
        }
        let body = Bytes::from(body);
        let request = builder
            .body(Full::new(body.clone()))
            .map_err(|e| TransportError::Io(e.to_string()))?;
        let sender = if reuse_only {
            let sender = self
                .sender
                .as_mut()
                .ok_or_else(|| TransportError::Io("no open connection".into()))?;
            sender
                .ready()
                .await
                .map_err(|e| TransportError::Io(format!("connection lost: {e}")))?;
            sender
        } else {
            self.live_sender().await?
        };
        let logged = request_bytes(&request, &body);
        let response = sender
            .send_request(request)
            .await
            .map_err(|e| TransportError::Io(e.to_string()))?;
        let (parts, incoming) = response.into_parts();
        let body = incoming
            .collect()
            .await
            .map_err(|e| TransportError::Io(e.to_string()))?
            .to_bytes();
        self.transcript
            .record_sent(&format!("{method} {path}"), &logged);
        self.transcript
            .record_received(parts.status.as_str(), &body);
        Ok(RawResponse {
            status: parts.status,
            headers: parts.headers,
            body,
        })
    }

    async fn call<T: DeserializeOwned>(
        &mut self,
        method: Method,
        path: &str,
        content_type: Option<&str>,
        body: Vec<u8>,
    ) -> Result<T, ApiClientError> {
        let response = self.send(method, path, content_type, body, false).await?;
        let response = check(response)?;
        serde_json::from_slice(&response.body).map_err(|e| ApiClientError::Decode(e.to_string()))
    }

    fn require_token(&self) -> Result<(), ApiClientError> {
        self.token
            .as_ref()
            .map(|_| ())
            .ok_or(ApiClientError::NoToken)
    }

    /// Runs the delegation handshake on a fresh connection and keeps the
    /// issued token.
    pub async fn delegate(
        &mut self,
        user: &UserCredential,
        options: &ClientOptions,
    ) -> Result<Delegated, ClientError> {
        self.disconnect();
        self.connect().await?;
        let (ack, transcript) = client_delegate(self, user, options).await?;
        let token = self
            .token
            .clone()
            .ok_or_else(|| ClientError::Protocol("Ack carried no API token".into()))?;
        Ok(Delegated {
            ack,
            token,
            transcript,
        })
    }

    /// Submits a JDL with an optional input sandbox archive.
    pub async fn submit(
        &mut self,
        jdl: &str,
        input: Option<&[u8]>,
    ) -> Result<Vec<String>, ApiClientError> {
        self.require_token()?;
        let (content_type, body) = multipart(jdl, input);
        let submitted: Submitted = self
            .call(Method::POST, "/jobs", Some(&content_type), body)
            .await?;
        Ok(submitted.jobs)
    }

    pub async fn list(&mut self) -> Result<Vec<JobView>, ApiClientError> {
        self.require_token()?;
        let list: JobList = self.call(Method::GET, "/jobs", None, Vec::new()).await?;
        Ok(list.jobs)
    }

    pub async fn status(&mut self, id: &str) -> Result<JobStatus, ApiClientError> {
        self.require_token()?;
        self.call(
            Method::GET,
            &format!("/jobs/{}", job_path_id(id)),
            None,
            Vec::new(),
        )
        .await
    }

    pub async fn cancel(&mut self, id: &str) -> Result<JobStatus, ApiClientError> {
        self.require_token()?;
        self.call(
            Method::DELETE,
            &format!("/jobs/{}", job_path_id(id)),
            None,
            Vec::new(),
        )
        .await
    }

    pub async fn output(&mut self, id: &str) -> Result<Output, ApiClientError> {
        self.require_token()?;
        let path = format!("/jobs/{}/output", job_path_id(id));
        let response = check(
            self.send(Method::GET, &path, None, Vec::new(), false)
                .await?,
        )?;
        let missing = response
            .headers
            .get(MISSING_HEADER)
            .and_then(|v| v.to_str().ok())
            .map(|v| {
                v.split(',')
                    .filter(|s| !s.is_empty())
                    .map(str::to_owned)
                    .collect()
            })
            .unwrap_or_default();
        Ok(Output {
            archive: response.body.to_vec(),
            missing,
        })
    }

    /// Asks the gateway to fetch a proxy from its external repository and
    /// keeps the issued token.
    pub async fn myproxy_logon(
        &mut self,
        request: &LogonRequest,
    ) -> Result<LogonResponse, ApiClientError> {
        let body = serde_json::to_vec(request).expect("serializable");
        let response: LogonResponse = self
            .call(
                Method::POST,
                "/myproxy-logon",
                Some("application/json"),
                body,
            )
            .await?;
        self.token = Some(response.token.clone());
        Ok(response)
    }

    pub async fn register_renewal(
        &mut self,
        registration: &RenewalRegistration,
    ) -> Result<(), ApiClientError> {
        self.require_token()?;
        let body = serde_json::to_vec(registration).expect("serializable");
        let response = self
            .send(
                Method::PUT,
                "/renewal",
                Some("application/json"),
                body,
                false,
            )
            .await?;
        check(response).map(|_| ())
    }
}

/// Request line, headers and body as they are logged.
fn request_bytes(request: &Request<Full<Bytes>>, body: &[u8]) -> Vec<u8> {
    let mut out = format!("{} {}\r\n", request.method(), request.uri()).into_bytes();
    for (name, value) in request.headers() {
        out.extend_from_slice(name.as_str().as_bytes());
        out.extend_from_slice(b": ");
        out.extend_from_slice(value.as_bytes());
        out.extend_from_slice(b"\r\n");
    }
    out.extend_from_slice(b"\r\n");
    out.extend_from_slice(body);
    out
}

fn check(response: RawResponse) -> Result<RawResponse, ApiClientError> {
    if response.status.is_success() {
        return Ok(response);
    }
    let (error, detail) = match serde_json::from_slice::<ErrorBody>(&response.body) {
        Ok(body) => (body.error, body.detail),
        Err(_) => (
            response
                .status
                .canonical_reason()
                .unwrap_or("error")
                .to_owned(),
            String::from_utf8_lossy(&response.body).into_owned(),
        ),
    };
    Err(ApiClientError::Api {
        status: response.status.as_u16(),
        error,
        detail,
    })
}

/// A multipart/form-data body with a `jdl` text part and an optional
/// `input` archive part.
pub fn multipart(jdl: &str, input: Option<&[u8]>) -> (String, Vec<u8>) {
    let mut raw = [0u8; 16];
    rand::thread_rng().fill_bytes(&mut raw);
    let boundary = format!("lgrid-{}", hex::encode(raw));
    let mut body = Vec::new();
    body.extend_from_slice(
        format!("--{boundary}\r\nContent-Disposition: form-data; name=\"jdl\"\r\nContent-Type: text/plain; charset=utf-8\r\n\r\n")
            .as_bytes(),
    );
    body.extend_from_slice(jdl.as_bytes());
    body.extend_from_slice(b"\r\n");
    if let Some(input) = input {
        body.extend_from_slice(
            format!(
                "--{boundary}\r\nContent-Disposition: form-data; name=\"input\"; filename=\"input.tar.gz\"\r\nContent-Type: application/gzip\r\n\r\n"
            )
            .as_bytes(),
        );
        body.extend_from_slice(input);
        body.extend_from_slice(b"\r\n");
    }
    body.extend_from_slice(format!("--{boundary}--\r\n").as_bytes());
    (format!("multipart/form-data; boundary={boundary}"), body)
}

#[async_trait]
impl DelegationTransport for GatewayClient {
    async fn round_trip(&mut self, frame: Vec<u8>) -> Result<Vec<u8>, TransportError> {
        let response = self
            .send(
                Method::POST,
                "/delegate",
                Some(FRAME_CONTENT_TYPE),
                frame,
                true,
            )
            .await?;
        if let Some(token) = response
            .headers
            .get(TOKEN_HEADER)
            .and_then(|v| v.to_str().ok())
        {
            self.token = Some(token.to_owned());
        }
        let is_frame = response
            .headers
            .get(CONTENT_TYPE)
            .is_some_and(|v| v == HeaderValue::from_static(FRAME_CONTENT_TYPE));
        if is_frame {
            // Faults arrive as frames with an error status.
            return Ok(response.body.to_vec());
        }
        Err(TransportError::Status {
            status: response.status.as_u16(),
            body: response.body.to_vec(),
        })
    }

    fn server_identity(&self) -> Option<DistinguishedName> {
        self.server_dn.clone()
    }

    fn connections(&self) -> u32 {
        self.transcript.connections()
    }
}
