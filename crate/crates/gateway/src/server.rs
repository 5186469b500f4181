//! TLS listener, per-connection HTTP serving and the background driver.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::Router;
use chrono::TimeDelta;
use hyper::body::Incoming;
use hyper::Request;
use hyper_util::rt::TokioIo;
use lgrid_delegation::myproxy::MyProxyEndpoint;
use lgrid_delegation::tls::{self, ClientTls, TlsIdentity};
use lgrid_delegation::{
    DelegationConfig, DelegationService, MyProxyRenewer, ProxyStore, RenewalPolicy,
};
use lgrid_jobs::{ExecutorConfig, FsObserver, JobManager, NoObserver};
use lgrid_pki::{DistinguishedName, ProxyOptions, TrustStore};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use tower::ServiceExt;

use crate::api::{router, AppState, Clock, ConnectionContext, PendingSessions};
use crate::config::{ConfigError, DelegationSection, GatewayConfig, RenewalSection};
use crate::policy::VoPolicy;
use crate::tokens::TokenTable;

pub const JOURNAL_FILE: &str = "journal.log";
pub const PROXY_DIR: &str = "proxies";

/// Fully resolved gateway settings, with credentials in memory.
#[derive(Clone)]
pub struct GatewaySettings {
    pub listen: String,
    pub state_root: PathBuf,
    pub host: String,
    pub web_root: Option<PathBuf>,
    pub identity: TlsIdentity,
    pub trust: TrustStore,
    pub delegation: DelegationSection,
    pub renewal: RenewalSection,
    pub executor: ExecutorConfig,
    pub tick: Duration,
    pub policy: VoPolicy,
    pub observer: Arc<dyn FsObserver>,
}

impl GatewaySettings {
    pub fn from_config(config: &GatewayConfig) -> Result<Self, ConfigError> {
        let (identity, trust) = config.load_tls()?;
        Ok(GatewaySettings {
            listen: config.listen.clone(),
            state_root: config.state_root.clone(),
            host: config.host.clone(),
            web_root: config.web_root.clone(),
            identity,
            trust,
            delegation: config.delegation.clone(),
            renewal: config.renewal.clone(),
            executor: config.executor_config(),
            tick: Duration::from_millis(config.executor.tick_ms),
            policy: config.policy.clone(),
            observer: Arc::new(NoObserver),
        })
    }

    /// Settings for a loopback gateway on an ephemeral port.
    pub fn local(
        state_root: PathBuf,
        identity: TlsIdentity,
        trust: TrustStore,
        policy: VoPolicy,
    ) -> Self {
        GatewaySettings {
            listen: "127.0.0.1:0".into(),
            state_root,
            host: "localhost".into(),
            web_root: None,
            identity,
            trust,
            delegation: DelegationSection::default(),
            renewal: RenewalSection::default(),
            executor: ExecutorConfig::default(),
            tick: Duration::from_millis(50),
            policy,
            observer: Arc::new(NoObserver),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StartError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("jobs: {0}")]
    Jobs(#[from] lgrid_jobs::JobError),
    #[error("TLS setup: {0}")]
    Tls(#[from] openssl::error::ErrorStack),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A running gateway. Dropping it stops serving and the background tasks.
pub struct Gateway {
    state: Arc<AppState>,
    addr: SocketAddr,
    tasks: Vec<JoinHandle<()>>,
}

impl Drop for Gateway {
    fn drop(&mut self) {
        for task in &self.tasks {
            task.abort();
        }
    }
}

fn build_state(settings: &GatewaySettings) -> Result<AppState, StartError> {
    std::fs::create_dir_all(&settings.state_root)?;
    let options = ProxyOptions {
        legacy_proxy: settings.delegation.legacy_proxy,
    };
    let store = Arc::new(ProxyStore::persistent(
        &settings.state_root.join(PROXY_DIR),
        settings.trust.clone(),
        options,
    )?);
    let delegation = DelegationService::new(
        Arc::clone(&store),
        DelegationConfig {
            session_timeout: TimeDelta::seconds(settings.delegation.session_timeout_secs as i64),
            ..DelegationConfig::default()
        },
    );
    let jobs = Arc::new(JobManager::open_observed(
        &settings.state_root,
        settings.host.clone(),
        settings.executor,
        Arc::clone(&settings.observer),
    )?);
    let tokens = TokenTable::with_journal(&settings.state_root.join(JOURNAL_FILE))?;
    let renewal = RenewalPolicy::new(
        TimeDelta::seconds(settings.renewal.threshold_secs as i64),
        settings.renewal.myproxy.clone(),
        TimeDelta::seconds(settings.renewal.check_interval_secs as i64),
    )
    .map_err(ConfigError::Invalid)?;
    let myproxy = match &settings.renewal.myproxy {
        Some(addr) => {
            let expected: Option<DistinguishedName> = match &settings.renewal.myproxy_dn {
                Some(dn) => Some(
                    dn.parse()
                        .map_err(|e: lgrid_pki::PkiError| ConfigError::Invalid(e.to_string()))?,
                ),
                None => None,
            };
            let tls = ClientTls::new(&settings.trust, Some(&settings.identity), expected)?;
            Some(MyProxyEndpoint {
                addr: addr.clone(),
                tls,
            })
        }
        None => None,
    };
    let renewer = myproxy
        .clone()
        .map(|endpoint| Arc::new(MyProxyRenewer::new(endpoint)));
    Ok(AppState {
        jobs,
        store,
        delegation,
        tokens,
        policy: settings.policy.clone(),
        renewal,
        myproxy,
        renewer,
        clock: Clock::default(),
        require_client_certificate: settings.delegation.require_client_certificate,
        pending: PendingSessions::default(),
    })
}

async fn serve_connection(
    app: Router,
    acceptor: Arc<openssl::ssl::SslAcceptor>,
    tcp: tokio::net::TcpStream,
) {
    let remote = tcp.peer_addr().ok();
    let _ = tcp.set_nodelay(true);
    let (stream, peer) = match tls::accept(&acceptor, tcp).await {
        Ok(accepted) => accepted,
        Err(e) => {
            tracing::debug!(?remote, error = %e, "TLS handshake failed");
            return;
        }
    };
    let ctx = ConnectionContext::new(peer);
    let service = hyper::service::service_fn(move |mut req: Request<Incoming>| {
        req.extensions_mut().insert(ctx.clone());
        app.clone().oneshot(req.map(axum::body::Body::new))
    });
    if let Err(e) = hyper::server::conn::http1::Builder::new()
        .keep_alive(true)
        .serve_connection(TokioIo::new(stream), service)
        .await
    {
        tracing::debug!(?remote, error = %e, "connection ended with error");
    }
}

impl Gateway {
    pub async fn start(settings: GatewaySettings) -> Result<Gateway, StartError> {
        let state = Arc::new(build_state(&settings)?);
        let acceptor = Arc::new(tls::server_acceptor(&settings.identity, &settings.trust)?);
        let listener = TcpListener::bind(&settings.listen).await?;
        let addr = listener.local_addr()?;
        let app = router(Arc::clone(&state), settings.web_root.as_deref());

        let accept = tokio::spawn(async move {
            // Owning the connections here ends them when the gateway stops.
            let mut connections = tokio::task::JoinSet::new();
            loop {
                while connections.try_join_next().is_some() {}
                match listener.accept().await {
                    Ok((tcp, _)) => {
                        connections.spawn(serve_connection(
                            app.clone(),
                            Arc::clone(&acceptor),
                            tcp,
                        ));
                    }
                    Err(e) => {
                        tracing::warn!(error = %e, "accept failed");
                        tokio::time::sleep(Duration::from_millis(50)).await;
                    }
                }
            }
        });

        let driver_state = Arc::clone(&state);
        let tick = settings.tick;
        let driver = tokio::spawn(async move {
            let mut interval = tokio::time::interval(tick);
            interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            loop {
                interval.tick().await;
                let jobs = Arc::clone(&driver_state.jobs);
                let now = driver_state.clock.now();
                if let Err(e) = tokio::task::spawn_blocking(move || jobs.tick(now)).await {
                    tracing::warn!(error = %e, "driver tick panicked");
                }
            }
        });

        let maintenance_state = Arc::clone(&state);
        let every = Duration::from_secs(settings.renewal.check_interval_secs.max(1));
        let maintenance = tokio::spawn(async move {
            let mut interval = tokio::time::interval(every);
            interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
            loop {
                interval.tick().await;
                maintenance_state.maintain().await;
            }
        });

        tracing::info!(%addr, root = %settings.state_root.display(), "gateway listening");
        Ok(Gateway {
            state,
            addr,
            tasks: vec![accept, driver, maintenance],
        })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn state(&self) -> &Arc<AppState> {
        &self.state
    }

    /// Waits until the gateway stops, which only happens on task failure.
    pub async fn wait(mut self) {
        for task in std::mem::take(&mut self.tasks) {
            let _ = task.await;
        }
    }
}
