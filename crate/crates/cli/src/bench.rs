//! Embedded versus external credential flows under injected latency.
//!
//! The bench hosts its own environment: a development CA, a gateway, a
//! MyProxy repository and one latency relay on each network link
//! (client to gateway, client to repository, gateway to repository). One
//! iteration of either mode obtains a credential on the gateway, submits an
//! echo job, polls its status until done and retrieves the output.

use std::fmt::Write as _;
use std::sync::Arc;
use std::time::{Duration, Instant};

use chrono::TimeDelta;
use lgrid_delegation::myproxy::{local_proxy_bundle, myproxy_put, MyProxyEndpoint, MyProxyServer};
use lgrid_delegation::tls::{server_acceptor, ClientTls, TlsIdentity};
use lgrid_delegation::{ClientOptions, Transcript};
use lgrid_gateway::views::LogonRequest;
use lgrid_gateway::{Gateway, GatewayClient, GatewaySettings, VoPolicy};
use lgrid_jobs::{ExecutorConfig, JobState};
use lgrid_pki::devca::DevCa;
use lgrid_pki::{AlgorithmId, DistinguishedName, ProxyOptions, TrustStore, UserCredential};

use crate::latency::{LatencyProxy, LinkCounts};

pub const CSV_HEADER: &str = "mode,iter,seconds,connections,round_trips,bytes";

const USER_DN: &str = "/C=IT/O=L-GRID Bench/CN=Bench User";
const PASSPHRASE: &str = "bench passphrase";
const ECHO_JDL: &str = r#"Executable = "/bin/echo"; Arguments = "bench"; StdOutput = "out.txt"; OutputSandbox = {"out.txt"};"#;
const PROXY_LIFETIME: TimeDelta = TimeDelta::hours(12);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Mode {
    Embedded,
    External,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Embedded => "embedded",
            Mode::External => "external",
        }
    }
}

/// One measured iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub mode: Mode,
    pub iter: u32,
    pub seconds: f64,
    /// Measured on the wire, summed over all links.
    pub links: LinkCounts,
    /// The application-level exchanges the client recorded; the gateway's
    /// own repository traffic appears only in `links`.
    pub transcript: TranscriptCounts,
}

/// Connections and request/response pairs as logged by the client.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TranscriptCounts {
    pub connections: u32,
    pub round_trips: u32,
    pub bytes: usize,
}

impl TranscriptCounts {
    fn add(&mut self, transcript: &Transcript) {
        self.connections += transcript.connections();
        self.round_trips += transcript.round_trips();
        self.bytes += transcript.total_bytes();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub mode: Mode,
    pub n: usize,
    pub mean: f64,
    /// Sample standard deviation; zero for a single sample.
    pub stddev: f64,
    pub connections: f64,
    pub round_trips: f64,
    pub bytes: f64,
}

#[derive(Debug, Clone)]
pub struct BenchReport {
    pub rtt: Duration,
    pub samples: Vec<Sample>,
}

fn mean(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = values.clone().count();
    values.sum::<f64>() / n as f64
}

impl BenchReport {
    pub fn summary(&self, mode: Mode) -> Option<Summary> {
        let samples: Vec<&Sample> = self.samples.iter().filter(|s| s.mode == mode).collect();
        if samples.is_empty() {
            return None;
        }
        let n = samples.len();
        let avg = mean(samples.iter().map(|s| s.seconds));
        let variance = if n > 1 {
            samples
                .iter()
                .map(|s| (s.seconds - avg).powi(2))
                .sum::<f64>()
                / (n - 1) as f64
        } else {
            0.0
        };
        Some(Summary {
            mode,
            n,
            mean: avg,
            stddev: variance.sqrt(),
            connections: mean(samples.iter().map(|s| s.links.connections as f64)),
            round_trips: mean(samples.iter().map(|s| s.links.round_trips as f64)),
            bytes: mean(samples.iter().map(|s| s.links.bytes as f64)),
        })
    }

    /// mean(external) − mean(embedded), in seconds.
    pub fn gap(&self) -> Option<f64> {
        Some(self.summary(Mode::External)?.mean - self.summary(Mode::Embedded)?.mean)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{CSV_HEADER}\n");
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{},{},{:.6},{},{},{}",
                s.mode.as_str(),
                s.iter,
                s.seconds,
                s.links.connections,
                s.links.round_trips,
                s.links.bytes
            );
        }
        out
    }

    pub fn table(&self) -> String {
        let mut out = format!("rtt {} ms\n", self.rtt.as_millis());
        let _ = writeln!(
            out,
            "{:<9} {:>4} {:>10} {:>10} {:>11} {:>11} {:>10}",
            "mode", "n", "mean s", "stddev s", "connections", "round trips", "bytes"
        );
        for mode in [Mode::Embedded, Mode::External] {
            if let Some(s) = self.summary(mode) {
                let _ = writeln!(
                    out,
                    "{:<9} {:>4} {:>10.3} {:>10.3} {:>11.1} {:>11.1} {:>10.0}",
                    mode.as_str(),
                    s.n,
                    s.mean,
                    s.stddev,
                    s.connections,
                    s.round_trips,
                    s.bytes
                );
            }
        }
        if let Some(gap) = self.gap() {
            let _ = writeln!(out, "external - embedded: {gap:.3} s");
        }
        out
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("setting up the bench environment: {0}")]
    Setup(String),
    #[error("{mode} iteration {iter} failed: {detail}")]
    Iteration {
        mode: &'static str,
        iter: u32,
        detail: String,
    },
}

fn setup(e: impl std::fmt::Display) -> BenchError {
    BenchError::Setup(e.to_string())
}

/// A self-contained gateway, repository and latency relays.
pub struct BenchEnv {
    user: UserCredential,
    trust: TrustStore,
    gateway_dn: DistinguishedName,
    myproxy_dn: DistinguishedName,
    to_gateway: LatencyProxy,
    to_myproxy: LatencyProxy,
    gateway_to_myproxy: LatencyProxy,
    _gateway: Gateway,
    _myproxy: tokio::task::JoinHandle<std::io::Result<()>>,
    _root: tempfile::TempDir,
}

impl Drop for BenchEnv {
    fn drop(&mut self) {
        self._myproxy.abort();
    }
}

impl BenchEnv {
    pub async fn start(rtt: Duration) -> Result<BenchEnv, BenchError> {
        let ca = DevCa::new("/C=IT/O=L-GRID Bench/CN=Bench CA").map_err(setup)?;
        let mut trust = TrustStore::new();
        trust
            .add_self_signed(ca.certificate().clone())
            .map_err(setup)?;
        let (user_cert, user_key) = ca.issue_user(USER_DN, AlgorithmId::EcP256).map_err(setup)?;
        let user = UserCredential {
            cert: user_cert,
            key: user_key,
        };

        let (mp_cert, mp_key) = ca
            .issue_server("/C=IT/O=L-GRID Bench/CN=myproxy", &["localhost"])
            .map_err(setup)?;
        let myproxy_dn = mp_cert.subject().clone();
        let acceptor = server_acceptor(
            &TlsIdentity {
                cert: mp_cert,
                key: mp_key,
            },
            &trust,
        )
        .map_err(setup)?;
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0")
            .await
            .map_err(setup)?;
        let myproxy_addr = listener.local_addr().map_err(setup)?;
        let myproxy = MyProxyServer::new(trust.clone(), ProxyOptions::default());
        let myproxy_task = tokio::spawn(Arc::clone(&myproxy).serve(listener, acceptor));

        let to_myproxy = LatencyProxy::start(myproxy_addr.to_string(), rtt)
            .await
            .map_err(setup)?;
        let gateway_to_myproxy = LatencyProxy::start(myproxy_addr.to_string(), rtt)
            .await
            .map_err(setup)?;

        let (gw_cert, gw_key) = ca
            .issue_server("/C=IT/O=L-GRID Bench/CN=gateway", &["localhost"])
            .map_err(setup)?;
        let gateway_dn = gw_cert.subject().clone();
        let root = tempfile::tempdir().map_err(setup)?;
        let mut settings = GatewaySettings::local(
            root.path().to_path_buf(),
            TlsIdentity {
                cert: gw_cert,
                key: gw_key,
            },
            trust.clone(),
            VoPolicy::allow_all("/C=IT/O=L-GRID Bench/*", "bench"),
        );
        settings.executor = ExecutorConfig::scripted(Duration::ZERO);
        settings.tick = Duration::from_millis(5);
        settings.renewal.myproxy = Some(gateway_to_myproxy.addr().to_string());
        settings.renewal.myproxy_dn = Some(myproxy_dn.to_string());
        let gateway = Gateway::start(settings).await.map_err(setup)?;
        let to_gateway = LatencyProxy::start(gateway.addr().to_string(), rtt)
            .await
            .map_err(setup)?;

        Ok(BenchEnv {
            user,
            trust,
            gateway_dn,
            myproxy_dn,
            to_gateway,
            to_myproxy,
            gateway_to_myproxy,
            _gateway: gateway,
            _myproxy: myproxy_task,
            _root: root,
        })
    }

    fn identity(&self) -> TlsIdentity {
        TlsIdentity {
            cert: self.user.cert.clone(),
            key: self.user.key.clone(),
        }
    }

    fn gateway_client(&self) -> Result<GatewayClient, String> {
        let tls = ClientTls::new(
            &self.trust,
            Some(&self.identity()),
            Some(self.gateway_dn.clone()),
        )
        .map_err(|e| e.to_string())?;
        Ok(GatewayClient::new(self.to_gateway.addr().to_string(), tls))
    }

    fn reset(&self) {
        for link in [&self.to_gateway, &self.to_myproxy, &self.gateway_to_myproxy] {
            link.take_counts();
        }
    }

    fn collect(&self) -> LinkCounts {
        self.to_gateway.take_counts()
            + self.to_myproxy.take_counts()
            + self.gateway_to_myproxy.take_counts()
    }

    pub async fn run(&self, mode: Mode, iter: u32) -> Result<Sample, BenchError> {
        let fail = |detail: String| BenchError::Iteration {
            mode: mode.as_str(),
            iter,
            detail,
        };
        // Let relays from the previous iteration close before counting.
        tokio::time::sleep(Duration::from_millis(20)).await;
        self.reset();
        let started = Instant::now();
        let mut transcript = TranscriptCounts::default();
        let mut client = match mode {
            Mode::Embedded => self.embedded_logon().await.map_err(fail)?,
            Mode::External => self
                .external_logon(iter, &mut transcript)
                .await
                .map_err(fail)?,
        };
        job_round(&mut client).await.map_err(fail)?;
        let seconds = started.elapsed().as_secs_f64();
        transcript.add(client.transcript());
        drop(client);
        tokio::time::sleep(Duration::from_millis(20)).await;
        Ok(Sample {
            mode,
            iter,
            seconds,
            links: self.collect(),
            transcript,
        })
    }

    async fn embedded_logon(&self) -> Result<GatewayClient, String> {
        let mut client = self.gateway_client()?;
        let options = ClientOptions {
            lifetime: PROXY_LIFETIME,
            expected_server: Some(self.gateway_dn.clone()),
            ..ClientOptions::default()
        };
        client
            .delegate(&self.user, &options)
            .await
            .map_err(|e| e.to_string())?;
        Ok(client)
    }

    async fn external_logon(
        &self,
        iter: u32,
        transcript: &mut TranscriptCounts,
    ) -> Result<GatewayClient, String> {
        let username = format!("bench-{iter}");
        let bundle = local_proxy_bundle(&self.user, TimeDelta::days(7), ProxyOptions::default())
            .map_err(|e| e.to_string())?;
        let endpoint = MyProxyEndpoint {
            addr: self.to_myproxy.addr().to_string(),
            tls: ClientTls::new(
                &self.trust,
                Some(&self.identity()),
                Some(self.myproxy_dn.clone()),
            )
            .map_err(|e| e.to_string())?,
        };
        let (_, put) = myproxy_put(
            &endpoint,
            &username,
            PASSPHRASE,
            &bundle,
            TimeDelta::days(7),
        )
        .await
        .map_err(|e| e.to_string())?;
        transcript.add(&put);
        let mut client = self.gateway_client()?;
        let request = LogonRequest {
            username,
            passphrase: PASSPHRASE.into(),
            lifetime_secs: Some(PROXY_LIFETIME.num_seconds()),
        };
        client
            .myproxy_logon(&request)
            .await
            .map_err(|e| e.to_string())?;
        Ok(client)
    }
}

/// Submit, poll until done, fetch the output.
async fn job_round(client: &mut GatewayClient) -> Result<(), String> {
    let ids = client
        .submit(ECHO_JDL, None)
        .await
        .map_err(|e| e.to_string())?;
    let id = ids.first().ok_or("no job id returned")?.clone();
    let deadline = Instant::now() + Duration::from_secs(60);
    loop {
        let status = client.status(&id).await.map_err(|e| e.to_string())?;
        match status.view.state {
            JobState::DoneOk => break,
            state if !state.is_active() => return Err(format!("job ended in {state}")),
            _ if Instant::now() > deadline => return Err("job did not finish within 60 s".into()),
            _ => tokio::time::sleep(Duration::from_millis(5)).await,
        }
    }
    let output = client.output(&id).await.map_err(|e| e.to_string())?;
    if output.archive.is_empty() {
        return Err("empty output archive".into());
    }
    Ok(())
}

/// Runs `iterations` of each mode, alternating modes within an iteration.
pub async fn run_bench(
    rtt: Duration,
    iterations: u32,
    modes: &[Mode],
) -> Result<BenchReport, BenchError> {
    let env = BenchEnv::start(rtt).await?;
    let mut samples = Vec::new();
    for iter in 0..iterations {
        for &mode in modes {
            samples.push(env.run(mode, iter).await?);
        }
    }
    Ok(BenchReport { rtt, samples })
}
