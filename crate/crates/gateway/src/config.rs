//! Gateway configuration, read from a TOML file.
//!
//! ```toml
//! listen = "0.0.0.0:8443"
//! state_root = "/var/lib/lgrid"
//! host = "gateway.example.org"
//! web_root = "/usr/share/lgrid/web"
//!
//! [tls]
//! cert = "/etc/lgrid/hostcert.pem"
//! key = "/etc/lgrid/hostkey.pem"
//! trust = ["/etc/lgrid/ca.pem"]
//!
//! [delegation]
//! session_timeout_secs = 60
//! legacy_proxy = false
//! require_client_certificate = true
//!
//! [renewal]
//! threshold_secs = 1800
//! check_interval_secs = 60
//! myproxy = "myproxy.example.org:7513"
//!
//! [executor]
//! kind = "scripted"
//! stage_delay_ms = 200
//!
//! [[policy.members]]
//! pattern = "/C=IT/O=INFN/*"
//! vos = ["gilda"]
//!
//! [policy.vos.gilda]
//! operations = ["submit", "status", "output", "cancel"]
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use lgrid_delegation::tls::TlsIdentity;
use lgrid_jobs::{ExecutorConfig, ExecutorKind};
use lgrid_pki::{Certificate, KeyPair, TrustStore};
use serde::{Deserialize, Serialize};

use crate::policy::VoPolicy;

pub const DEFAULT_PORT: u16 = 8443;
pub const STATE_ROOT_ENV: &str = "LGRID_STATE_ROOT";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing configuration: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("loading {path}: {source}")]
    Credential {
        path: PathBuf,
        source: lgrid_pki::PkiError,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TlsFiles {
    pub cert: PathBuf,
    pub key: PathBuf,
    pub trust: Vec<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DelegationSection {
    pub session_timeout_secs: u64,
    pub legacy_proxy: bool,
    /// When false, clients without a TLS certificate delegate by sending
    /// their certificate in Init, as a browser holding its key in memory
    /// must.
    pub require_client_certificate: bool,
}

impl Default for DelegationSection {
    fn default() -> Self {
        DelegationSection {
            session_timeout_secs: 60,
            legacy_proxy: false,
            require_client_certificate: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenewalSection {
    pub threshold_secs: u64,
    pub check_interval_secs: u64,
    /// `host:port` of an external MyProxy repository.
    pub myproxy: Option<String>,
    /// Expected DN of the repository's host certificate.
    pub myproxy_dn: Option<String>,
}

impl Default for RenewalSection {
    fn default() -> Self {
        RenewalSection {
            threshold_secs: 1800,
            check_interval_secs: 60,
            myproxy: None,
            myproxy_dn: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecutorSection {
    pub kind: ExecutorKind,
    pub stage_delay_ms: u64,
    /// How often the driver advances jobs.
    pub tick_ms: u64,
}

impl Default for ExecutorSection {
    fn default() -> Self {
        ExecutorSection {
            kind: ExecutorKind::Scripted,
            stage_delay_ms: 200,
            tick_ms: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GatewayConfig {
    #[serde(default = "default_listen")]
    pub listen: String,
    #[serde(default = "default_state_root")]
    pub state_root: PathBuf,
    /// Host name placed in job identifiers.
    #[serde(default = "default_host")]
    pub host: String,
    /// Static files of the browser portal, served for paths no API route
    /// claims, so the portal and the API share one origin.
    #[serde(default)]
    pub web_root: Option<PathBuf>,
    pub tls: TlsFiles,
    #[serde(default)]
    pub delegation: DelegationSection,
    #[serde(default)]
    pub renewal: RenewalSection,
    #[serde(default)]
    pub executor: ExecutorSection,
    #[serde(default)]
    pub policy: VoPolicy,
}

fn default_listen() -> String {
    format!("0.0.0.0:{DEFAULT_PORT}")
}

fn default_state_root() -> PathBuf {
    PathBuf::from("lgrid-state")
}

fn default_host() -> String {
    "localhost".into()
}

impl GatewayConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: GatewayConfig = toml::from_str(text)?;
        config.check()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml(&text)
    }

    /// Applies `LGRID_STATE_ROOT` when set.
    pub fn apply_env(&mut self) {
        if let Some(root) = std::env::var_os(STATE_ROOT_ENV).filter(|v| !v.is_empty()) {
            self.state_root = PathBuf::from(root);
        }
    }

    fn check(&self) -> Result<(), ConfigError> {
        if self.renewal.check_interval_secs == 0 {
            return Err(ConfigError::Invalid(
                "renewal.check_interval_secs must be positive".into(),
            ));
        }
        if self.executor.tick_ms == 0 {
            return Err(ConfigError::Invalid(
                "executor.tick_ms must be positive".into(),
            ));
        }
        for vo in self.policy.members.iter().flat_map(|m| &m.vos) {
            if !self.policy.vos.contains_key(vo) {
                return Err(ConfigError::Invalid(format!(
                    "policy member rule names undefined VO {vo:?}"
                )));
            }
        }
        if let Some(dn) = &self.renewal.myproxy_dn {
            dn.parse::<lgrid_pki::DistinguishedName>()
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        }
        Ok(())
    }

    pub fn executor_config(&self) -> ExecutorConfig {
        ExecutorConfig {
            kind: self.executor.kind,
            stage_delay: Duration::from_millis(self.executor.stage_delay_ms),
        }
    }

    /// Reads the host credential and trust anchors named in `[tls]`.
    pub fn load_tls(&self) -> Result<(TlsIdentity, TrustStore), ConfigError> {
        let read = |path: &Path| {
            std::fs::read(path).map_err(|source| ConfigError::Read {
                path: path.to_owned(),
                source,
            })
        };
        fn pki(path: &Path) -> impl FnOnce(lgrid_pki::PkiError) -> ConfigError + '_ {
            move |source| ConfigError::Credential {
                path: path.to_owned(),
                source,
            }
        }
        let cert = Certificate::from_pem(&read(&self.tls.cert)?).map_err(pki(&self.tls.cert))?;
        let key = KeyPair::from_pem(&read(&self.tls.key)?).map_err(pki(&self.tls.key))?;
        let mut trust = TrustStore::new();
        for path in &self.tls.trust {
            for anchor in TrustStore::from_pem(&read(path)?)
                .map_err(pki(path))?
                .anchors()
            {
                trust.add_trusted(anchor.clone());
            }
        }
        if trust.anchors().is_empty() {
            return Err(ConfigError::Invalid(
                "tls.trust names no certificates".into(),
            ));
        }
        Ok((TlsIdentity { cert, key }, trust))
    }
}
