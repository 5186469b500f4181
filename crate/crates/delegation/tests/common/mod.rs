#![allow(dead_code)]

use std::sync::Arc;

use chrono::Duration;
use lgrid_delegation::{
    client_delegate, Ack, ClientOptions, DelegationConfig, DelegationService, PeerIdentity,
    ProxyStore, SimulatedChannel, Transcript,
};
use lgrid_pki::devca::DevCa;
use lgrid_pki::{AlgorithmId, ProxyOptions, TrustStore, UserCredential};

pub struct Pki {
    pub ca: DevCa,
    pub trust: TrustStore,
}

impl Pki {
    pub fn new() -> Self {
        let ca = DevCa::new("/C=IT/O=Test/CN=Test CA").unwrap();
        let mut trust = TrustStore::new();
        trust.add_self_signed(ca.certificate().clone()).unwrap();
        Pki { ca, trust }
    }

    pub fn user(&self, dn: &str) -> UserCredential {
        self.user_with(dn, AlgorithmId::EcP256)
    }

    pub fn user_with(&self, dn: &str, algorithm: AlgorithmId) -> UserCredential {
        let (cert, key) = self.ca.issue_user(dn, algorithm).unwrap();
        UserCredential { cert, key }
    }

    pub fn service(&self, options: ProxyOptions) -> Arc<DelegationService> {
        let store = Arc::new(ProxyStore::in_memory(self.trust.clone(), options));
        Arc::new(DelegationService::new(store, DelegationConfig::default()))
    }
}

pub fn peer(user: &UserCredential) -> PeerIdentity {
    PeerIdentity::from_certificate(user.cert.clone())
}

pub fn channel(service: &Arc<DelegationService>, user: &UserCredential) -> SimulatedChannel {
    SimulatedChannel::new(Arc::clone(service), peer(user), None)
}

pub async fn delegate(
    service: &Arc<DelegationService>,
    user: &UserCredential,
    lifetime: Duration,
) -> (Ack, Transcript) {
    let mut ch = channel(service, user);
    let options = ClientOptions {
        lifetime,
        ..ClientOptions::default()
    };
    client_delegate(&mut ch, user, &options).await.unwrap()
}

pub struct MyProxyFixture {
    pub addr: String,
    pub server: Arc<lgrid_delegation::myproxy::MyProxyServer>,
    pub server_cert: lgrid_pki::Certificate,
    task: tokio::task::JoinHandle<std::io::Result<()>>,
}

impl Drop for MyProxyFixture {
    fn drop(&mut self) {
        self.task.abort();
    }
}

impl Pki {
    pub async fn start_myproxy(&self) -> MyProxyFixture {
        use lgrid_delegation::myproxy::MyProxyServer;
        use lgrid_delegation::tls::{server_acceptor, TlsIdentity};
        let (cert, key) = self
            .ca
            .issue_server("/C=IT/O=Test/CN=myproxy", &["localhost", "127.0.0.1"])
            .unwrap();
        let acceptor = server_acceptor(
            &TlsIdentity {
                cert: cert.clone(),
                key,
            },
            &self.trust,
        )
        .unwrap();
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        let server = MyProxyServer::new(self.trust.clone(), ProxyOptions::default());
        let task = tokio::spawn(Arc::clone(&server).serve(listener, acceptor));
        MyProxyFixture {
            addr,
            server,
            server_cert: cert,
            task,
        }
    }

    pub fn endpoint(
        &self,
        addr: &str,
        user: Option<&UserCredential>,
        server: Option<&lgrid_pki::Certificate>,
    ) -> lgrid_delegation::myproxy::MyProxyEndpoint {
        use lgrid_delegation::tls::{ClientTls, TlsIdentity};
        let identity = user.map(|u| TlsIdentity {
            cert: u.cert.clone(),
            key: u.key.clone(),
        });
        let tls = ClientTls::new(
            &self.trust,
            identity.as_ref(),
            server.map(|c| c.subject().clone()),
        )
        .unwrap();
        lgrid_delegation::myproxy::MyProxyEndpoint {
            addr: addr.to_owned(),
            tls,
        }
    }
}
