#![allow(dead_code)]

use std::time::Duration;

use lgrid_delegation::myproxy::{MyProxyEndpoint, MyProxyServer};
use lgrid_delegation::tls::{server_acceptor, ClientTls, TlsIdentity};
use lgrid_delegation::ClientOptions;
use lgrid_gateway::{Gateway, GatewayClient, GatewaySettings, VoPolicy};
use lgrid_jobs::ExecutorConfig;
use lgrid_pki::devca::DevCa;
use lgrid_pki::{AlgorithmId, Certificate, ProxyOptions, TrustStore, UserCredential};
use std::sync::Arc;

pub const ALICE: &str = "/C=IT/O=Test/CN=Alice";
pub const BOB: &str = "/C=IT/O=Test/CN=Bob";
pub const MALLORY: &str = "/C=FR/O=Elsewhere/CN=Mallory";

pub struct Pki {
    pub ca: DevCa,
    pub trust: TrustStore,
    pub server: TlsIdentity,
}

impl Pki {
    pub fn new() -> Self {
        let ca = DevCa::new("/C=IT/O=Test/CN=Test CA").unwrap();
        let mut trust = TrustStore::new();
        trust.add_self_signed(ca.certificate().clone()).unwrap();
        let (cert, key) = ca
            .issue_server("/C=IT/O=Test/CN=gateway", &["localhost", "127.0.0.1"])
            .unwrap();
        Pki {
            ca,
            trust,
            server: TlsIdentity { cert, key },
        }
    }

    pub fn user(&self, dn: &str) -> UserCredential {
        let (cert, key) = self.ca.issue_user(dn, AlgorithmId::EcP256).unwrap();
        UserCredential { cert, key }
    }

    pub fn client_tls(&self, user: Option<&UserCredential>) -> ClientTls {
        let identity = user.map(|u| TlsIdentity {
            cert: u.cert.clone(),
            key: u.key.clone(),
        });
        ClientTls::new(
            &self.trust,
            identity.as_ref(),
            Some(self.server.cert.subject().clone()),
        )
        .unwrap()
    }
}

/// Members of `/C=IT/O=Test/*` may do everything in VO `test`.
pub fn test_policy() -> VoPolicy {
    VoPolicy::allow_all("/C=IT/O=Test/*", "test")
}

pub struct Fixture {
    pub pki: Pki,
    pub root: tempfile::TempDir,
    pub settings: GatewaySettings,
    pub gateway: Option<Gateway>,
}

impl Fixture {
    pub async fn start(stage_delay: Duration) -> Self {
        Self::start_with(stage_delay, |_| {}).await
    }

    pub async fn start_with(
        stage_delay: Duration,
        adjust: impl FnOnce(&mut GatewaySettings),
    ) -> Self {
        Self::start_on(Pki::new(), stage_delay, adjust).await
    }

    pub async fn start_on(
        pki: Pki,
        stage_delay: Duration,
        adjust: impl FnOnce(&mut GatewaySettings),
    ) -> Self {
        let root = tempfile::tempdir().unwrap();
        let mut settings = GatewaySettings::local(
            root.path().join("state"),
            pki.server.clone(),
            pki.trust.clone(),
            test_policy(),
        );
        settings.executor = ExecutorConfig::scripted(stage_delay);
        settings.tick = Duration::from_millis(10);
        adjust(&mut settings);
        let gateway = Gateway::start(settings.clone()).await.unwrap();
        Fixture {
            pki,
            root,
            settings,
            gateway: Some(gateway),
        }
    }

    pub fn gateway(&self) -> &Gateway {
        self.gateway.as_ref().expect("running")
    }

    pub fn addr(&self) -> String {
        self.gateway().addr().to_string()
    }

    /// Stops the gateway and starts a new one over the same state root,
    /// on the same port.
    pub async fn restart(&mut self) {
        let addr = self.addr();
        drop(self.gateway.take());
        let mut settings = self.settings.clone();
        settings.listen = addr;
        let mut attempt = 0;
        let gateway = loop {
            match Gateway::start(settings.clone()).await {
                Ok(g) => break g,
                Err(e) if attempt < 50 => {
                    attempt += 1;
                    let _ = e;
                    tokio::time::sleep(Duration::from_millis(20)).await;
                }
                Err(e) => panic!("restart failed: {e}"),
            }
        };
        self.gateway = Some(gateway);
    }

    pub fn client(&self, user: Option<&UserCredential>) -> GatewayClient {
        GatewayClient::new(self.addr(), self.pki.client_tls(user))
    }

    /// A client holding a token obtained by delegation.
    pub async fn login(&self, user: &UserCredential) -> GatewayClient {
        let mut client = self.client(Some(user));
        client
            .delegate(user, &ClientOptions::default())
            .await
            .unwrap();
        client
    }
}

pub struct MyProxyFixture {
    pub addr: String,
    pub server: Arc<MyProxyServer>,
    pub cert: Certificate,
    task: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl Drop for MyProxyFixture {
    fn drop(&mut self) {
        self.task.abort();
    }
}

impl MyProxyFixture {
    pub async fn start(pki: &Pki) -> Self {
        let (cert, key) = pki
            .ca
            .issue_server("/C=IT/O=Test/CN=myproxy", &["localhost", "127.0.0.1"])
            .unwrap();
        let acceptor = server_acceptor(
            &TlsIdentity {
                cert: cert.clone(),
                key,
            },
            &pki.trust,
        )
        .unwrap();
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let server = MyProxyServer::new(pki.trust.clone(), ProxyOptions::default());
        let task = tokio::spawn(Arc::clone(&server).serve(listener, acceptor));
        MyProxyFixture {
            addr,
            server,
            cert,
            task,
        }
    }

    pub fn endpoint(&self, pki: &Pki, user: &UserCredential) -> MyProxyEndpoint {
        let identity = TlsIdentity {
            cert: user.cert.clone(),
            key: user.key.clone(),
        };
        MyProxyEndpoint {
            addr: self.addr.clone(),
            tls: ClientTls::new(
                &pki.trust,
                Some(&identity),
                Some(self.cert.subject().clone()),
            )
            .unwrap(),
        }
    }
}

/// Polls until the job reaches `state` or two seconds pass.
pub async fn wait_for(
    client: &mut GatewayClient,
    id: &str,
    state: &str,
) -> lgrid_gateway::views::JobStatus {
    for _ in 0..200 {
        let status = client.status(id).await.unwrap();
        if status.view.state.as_str() == state {
            return status;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    panic!("job {id} never reached {state}");
}
