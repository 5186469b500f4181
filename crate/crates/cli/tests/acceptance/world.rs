//! A loopback gateway with its own development CA.

use std::sync::Arc;
use std::time::Duration;

use lgrid_delegation::tls::{ClientTls, TlsIdentity};
use lgrid_delegation::ClientOptions;
use lgrid_gateway::{Gateway, GatewayClient, GatewaySettings, VoPolicy};
use lgrid_jobs::{ExecutorConfig, FsObserver};
use lgrid_pki::devca::DevCa;
use lgrid_pki::{AlgorithmId, DistinguishedName, TrustStore, UserCredential};

use crate::text;

pub const ORG: &str = "/C=IT/O=Acceptance";

pub struct World {
    pub ca: DevCa,
    pub trust: TrustStore,
    pub server_dn: DistinguishedName,
    pub gateway: Gateway,
    pub root: tempfile::TempDir,
}

impl World {
    pub async fn start(
        executor: ExecutorConfig,
        observer: Option<Arc<dyn FsObserver>>,
    ) -> Result<World, String> {
        let ca = DevCa::new(&format!("{ORG}/CN=Acceptance CA")).map_err(text)?;
        let mut trust = TrustStore::new();
        trust
            .add_self_signed(ca.certificate().clone())
            .map_err(text)?;
        let (cert, key) = ca
            .issue_server(&format!("{ORG}/CN=gateway"), &["localhost", "127.0.0.1"])
            .map_err(text)?;
        let server_dn = cert.subject().clone();
        let root = tempfile::tempdir().map_err(text)?;
        let mut settings = GatewaySettings::local(
            root.path().join("state"),
            TlsIdentity { cert, key },
            trust.clone(),
            VoPolicy::allow_all(&format!("{ORG}/*"), "acceptance"),
        );
        settings.executor = executor;
        settings.tick = Duration::from_millis(10);
        if let Some(observer) = observer {
            settings.observer = observer;
        }
        let gateway = Gateway::start(settings).await.map_err(text)?;
        Ok(World {
            ca,
            trust,
            server_dn,
            gateway,
            root,
        })
    }

    pub fn user(&self, name: &str, algorithm: AlgorithmId) -> Result<UserCredential, String> {
        let (cert, key) = self
            .ca
            .issue_user(&format!("{ORG}/CN={name}"), algorithm)
            .map_err(text)?;
        Ok(UserCredential { cert, key })
    }

    pub fn client(&self, user: Option<&UserCredential>) -> Result<GatewayClient, String> {
        let identity = user.map(|u| TlsIdentity {
            cert: u.cert.clone(),
            key: u.key.clone(),
        });
        let tls = ClientTls::new(&self.trust, identity.as_ref(), Some(self.server_dn.clone()))
            .map_err(text)?;
        Ok(GatewayClient::new(self.gateway.addr().to_string(), tls))
    }

    pub async fn login(&self, user: &UserCredential) -> Result<GatewayClient, String> {
        let mut client = self.client(Some(user))?;
        client
            .delegate(user, &ClientOptions::default())
            .await
            .map_err(text)?;
        Ok(client)
    }
}
