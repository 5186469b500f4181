//! Server-side store of delegated proxy credentials, one per user.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use lgrid_pki::{
    validate_proxy_chain, write_private, DistinguishedName, PkiError, ProxyCredential,
    ProxyOptions, TrustStore, UserId, ValidationReport,
};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("unparseable proxy bundle: {0}")]
    Parse(#[from] PkiError),
    #[error("bundle carries no private key")]
    NoKey,
    #[error("bundle failed validation: {0}")]
    Invalid(ValidationReport),
    #[error("stored proxy changed concurrently")]
    Conflict,
    #[error("persisting proxy: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoredProxy {
    pub user_id: UserId,
    pub user_dn: DistinguishedName,
    pub bundle: Vec<u8>,
    pub not_after: DateTime<Utc>,
    /// Hex SHA-256 of the proxy certificate DER.
    pub fingerprint: String,
}

impl StoredProxy {
    pub fn is_active(&self, now: DateTime<Utc>) -> bool {
        now <= self.not_after
    }
}

/// At most one bundle per user; every bundle validated when stored.
#[derive(Debug)]
pub struct ProxyStore {
    entries: Mutex<HashMap<UserId, StoredProxy>>,
    trust: TrustStore,
    options: ProxyOptions,
    dir: Option<PathBuf>,
}

impl ProxyStore {
    pub fn in_memory(trust: TrustStore, options: ProxyOptions) -> Self {
        ProxyStore {
            entries: Mutex::default(),
            trust,
            options,
            dir: None,
        }
    }

    /// A store persisting bundles as `<dir>/<UserId>.pem` (mode 0600).
    /// Existing files are loaded; unparseable ones are skipped.
    pub fn persistent(
        dir: &Path,
        trust: TrustStore,
        options: ProxyOptions,
    ) -> std::io::Result<Self> {
        fs::create_dir_all(dir)?;
        let mut entries = HashMap::new();
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_none_or(|e| e != "pem") {
                continue;
            }
            let Ok(bytes) = fs::read(&path) else { continue };
            match describe(&bytes) {
                Ok(stored) => {
                    entries.insert(stored.user_id.clone(), stored);
                }
                Err(err) => tracing::warn!(path = %path.display(), %err, "skipping stored proxy"),
            }
        }
        Ok(ProxyStore {
            entries: Mutex::new(entries),
            trust,
            options,
            dir: Some(dir.to_owned()),
        })
    }

    pub fn trust(&self) -> &TrustStore {
        &self.trust
    }

    pub fn options(&self) -> ProxyOptions {
        self.options
    }

    /// Validates `bundle` at `now` and stores it, replacing any previous
    /// bundle for the same user.
    pub fn put(&self, bundle: Vec<u8>, now: DateTime<Utc>) -> Result<StoredProxy, StoreError> {
        let stored = self.check(bundle, now)?;
        let mut entries = self.entries.lock().expect("store lock");
        self.persist(&stored)?;
        entries.insert(stored.user_id.clone(), stored.clone());
        Ok(stored)
    }

    /// Replaces the bundle for a user only if the current one still has
    /// `expected_fingerprint`.
    pub fn replace_if(
        &self,
        user: &UserId,
        expected_fingerprint: &str,
        bundle: Vec<u8>,
        now: DateTime<Utc>,
    ) -> Result<StoredProxy, StoreError> {
        let stored = self.check(bundle, now)?;
        if &stored.user_id != user {
            return Err(StoreError::Conflict);
        }
        let mut entries = self.entries.lock().expect("store lock");
        if entries.get(user).map(|e| e.fingerprint.as_str()) != Some(expected_fingerprint) {
            return Err(StoreError::Conflict);
        }
        self.persist(&stored)?;
        entries.insert(user.clone(), stored.clone());
        Ok(stored)
    }

    pub fn get(&self, user: &UserId) -> Option<StoredProxy> {
        self.entries.lock().expect("store lock").get(user).cloned()
    }

    /// The user's proxy if it has not expired at `now`.
    pub fn active(&self, user: &UserId, now: DateTime<Utc>) -> Option<StoredProxy> {
        self.get(user).filter(|p| p.is_active(now))
    }

    pub fn users(&self) -> Vec<UserId> {
        self.entries
            .lock()
            .expect("store lock")
            .keys()
            .cloned()
            .collect()
    }

    pub fn remove(&self, user: &UserId) -> Option<StoredProxy> {
        let removed = self.entries.lock().expect("store lock").remove(user);
        if let (Some(dir), Some(_)) = (&self.dir, &removed) {
            let _ = fs::remove_file(dir.join(format!("{user}.pem")));
        }
        removed
    }

    fn check(&self, bundle: Vec<u8>, now: DateTime<Utc>) -> Result<StoredProxy, StoreError> {
        let credential = ProxyCredential::parse(&bundle)?;
        if credential.proxy_key.is_none() {
            return Err(StoreError::NoKey);
        }
        let report = validate_proxy_chain(&credential, &self.trust, now, self.options);
        if !report.is_ok() {
            return Err(StoreError::Invalid(report));
        }
        Ok(stored_from(&credential, bundle))
    }

    fn persist(&self, stored: &StoredProxy) -> std::io::Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let tmp = dir.join(format!(".{}.pem.tmp", stored.user_id));
        write_private(&tmp, &stored.bundle).map_err(|e| std::io::Error::other(e.to_string()))?;
        fs::rename(&tmp, dir.join(format!("{}.pem", stored.user_id)))
    }
}

fn describe(bundle: &[u8]) -> Result<StoredProxy, PkiError> {
    let credential = ProxyCredential::parse(bundle)?;
    Ok(stored_from(&credential, bundle.to_vec()))
}

fn stored_from(credential: &ProxyCredential, bundle: Vec<u8>) -> StoredProxy {
    StoredProxy {
        user_id: credential.user_id(),
        user_dn: credential.user_dn().clone(),
        not_after: credential.proxy_cert.not_after(),
        fingerprint: credential.proxy_cert.fingerprint(),
        bundle,
    }
}
