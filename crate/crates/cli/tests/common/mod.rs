#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Output;
use std::time::Duration;

use lgrid_delegation::tls::TlsIdentity;
use lgrid_gateway::{Gateway, GatewaySettings, VoPolicy};
use lgrid_jobs::ExecutorConfig;
use lgrid_pki::devca::DevCa;
use lgrid_pki::{AlgorithmId, TrustStore, UserCredential};

pub const ALICE: &str = "/C=IT/O=Test/CN=Alice";

/// A CA, a user with PEM files in `~/.globus`, and a private HOME.
pub struct Env {
    pub ca: DevCa,
    pub trust: TrustStore,
    pub user: UserCredential,
    pub home: tempfile::TempDir,
    pub ca_file: PathBuf,
}

impl Env {
    pub fn new() -> Self {
        let ca = DevCa::new("/C=IT/O=Test/CN=Test CA").unwrap();
        let mut trust = TrustStore::new();
        trust.add_self_signed(ca.certificate().clone()).unwrap();
        let (cert, key) = ca.issue_user(ALICE, AlgorithmId::EcP256).unwrap();
        let user = UserCredential { cert, key };
        let home = tempfile::tempdir().unwrap();
        user.write_pem_pair(&home.path().join(".globus")).unwrap();
        let ca_file = home.path().join("ca.pem");
        std::fs::write(&ca_file, ca.certificate().to_pem()).unwrap();
        Env {
            ca,
            trust,
            user,
            home,
            ca_file,
        }
    }

    pub fn server_identity(&self, dn: &str) -> TlsIdentity {
        let (cert, key) = self
            .ca
            .issue_server(dn, &["localhost", "127.0.0.1"])
            .unwrap();
        TlsIdentity { cert, key }
    }

    pub async fn gateway(&self, stage_delay: Duration) -> (Gateway, tempfile::TempDir) {
        let root = tempfile::tempdir().unwrap();
        let mut settings = GatewaySettings::local(
            root.path().to_path_buf(),
            self.server_identity("/C=IT/O=Test/CN=gateway"),
            self.trust.clone(),
            VoPolicy::allow_all("/C=IT/O=Test/*", "test"),
        );
        settings.executor = ExecutorConfig::scripted(stage_delay);
        settings.tick = Duration::from_millis(10);
        (Gateway::start(settings).await.unwrap(), root)
    }

    /// Runs the `lgrid` binary against `gateway` with this HOME.
    pub async fn lgrid(&self, gateway: &str, args: &[&str]) -> Output {
        self.lgrid_with(gateway, args, &[]).await
    }

    pub async fn lgrid_with(&self, gateway: &str, args: &[&str], env: &[(&str, &str)]) -> Output {
        let mut cmd = tokio::process::Command::new(env!("CARGO_BIN_EXE_lgrid"));
        cmd.args(args)
            .env_clear()
            .env("HOME", self.home.path())
            .env("PATH", std::env::var_os("PATH").unwrap_or_default())
            .env("LGRID_GATEWAY", gateway)
            .env("LGRID_CA", &self.ca_file);
        for (k, v) in env {
            cmd.env(k, v);
        }
        cmd.output().await.unwrap()
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.home.path().join(rel)
    }
}

pub fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

pub fn describe(output: &Output) -> String {
    format!(
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        output.status.code(),
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    )
}

pub fn mode(path: &Path) -> u32 {
    use std::os::unix::fs::PermissionsExt;
    std::fs::metadata(path).unwrap().permissions().mode() & 0o777
}
