//! Proxy renewal for long-running jobs.

use std::collections::{BTreeMap, HashMap};
use std::sync::Mutex;

use async_trait::async_trait;
use chrono::{DateTime, Duration, Utc};
use lgrid_pki::{ProxyCredential, UserId};
use serde::{Deserialize, Serialize};

use crate::client::DEFAULT_PROXY_LIFETIME;
use crate::myproxy::{myproxy_get, MyProxyEndpoint};
use crate::store::{ProxyStore, StoredProxy};

pub const DEFAULT_RENEWAL_THRESHOLD: Duration = Duration::minutes(30);
pub const DEFAULT_CHECK_INTERVAL: Duration = Duration::seconds(60);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenewalPolicy {
    threshold: Duration,
    external_endpoint: Option<String>,
    check_interval: Duration,
}

impl RenewalPolicy {
    /// Fails unless `threshold` and `check_interval` are positive.
    pub fn new(
        threshold: Duration,
        external_endpoint: Option<String>,
        check_interval: Duration,
    ) -> Result<Self, String> {
        if threshold <= Duration::zero() {
            return Err(format!(
                "renewal threshold must be positive, got {}s",
                threshold.num_seconds()
            ));
        }
        if check_interval <= Duration::zero() {
            return Err(format!(
                "check interval must be positive, got {}s",
                check_interval.num_seconds()
            ));
        }
        Ok(RenewalPolicy {
            threshold,
            external_endpoint,
            check_interval,
        })
    }

    pub fn threshold(&self) -> Duration {
        self.threshold
    }

    pub fn external_endpoint(&self) -> Option<&str> {
        self.external_endpoint.as_deref()
    }

    pub fn check_interval(&self) -> Duration {
        self.check_interval
    }
}

impl Default for RenewalPolicy {
    fn default() -> Self {
        RenewalPolicy {
            threshold: DEFAULT_RENEWAL_THRESHOLD,
            external_endpoint: None,
            check_interval: DEFAULT_CHECK_INTERVAL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActiveJob {
    pub job: String,
    pub user: UserId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum RenewalAction {
    Renewed {
        user: UserId,
        jobs: Vec<String>,
        previous_not_after: DateTime<Utc>,
        not_after: DateTime<Utc>,
    },
    /// Nothing can renew this proxy; its jobs end at `expires_at`.
    ExpiringUnrenewable {
        user: UserId,
        jobs: Vec<String>,
        expires_at: DateTime<Utc>,
        reason: String,
    },
    /// Renewal was attempted and failed; the old proxy is kept.
    RenewalFailed {
        user: UserId,
        jobs: Vec<String>,
        expires_at: DateTime<Utc>,
        reason: String,
    },
}

impl RenewalAction {
    pub fn name(&self) -> &'static str {
        match self {
            RenewalAction::Renewed { .. } => "renewed",
            RenewalAction::ExpiringUnrenewable { .. } => "expiring-unrenewable",
            RenewalAction::RenewalFailed { .. } => "renewal-failed",
        }
    }

    pub fn user(&self) -> &UserId {
        match self {
            RenewalAction::Renewed { user, .. }
            | RenewalAction::ExpiringUnrenewable { user, .. }
            | RenewalAction::RenewalFailed { user, .. } => user,
        }
    }

    pub fn jobs(&self) -> &[String] {
        match self {
            RenewalAction::Renewed { jobs, .. }
            | RenewalAction::ExpiringUnrenewable { jobs, .. }
            | RenewalAction::RenewalFailed { jobs, .. } => jobs,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RenewError {
    #[error("no repository login registered for this user")]
    NoLogin,
    #[error("{0}")]
    Failed(String),
}

/// Obtains a fresh proxy bundle for a user whose stored proxy is expiring.
#[async_trait]
pub trait ProxyRenewer: Send + Sync {
    async fn renew(&self, current: &StoredProxy) -> Result<Vec<u8>, RenewError>;
}

/// Renews from an external MyProxy repository using logins registered by
/// users.
#[derive(Debug)]
pub struct MyProxyRenewer {
    endpoint: MyProxyEndpoint,
    lifetime: Duration,
    logins: Mutex<HashMap<UserId, (String, String)>>,
}

impl MyProxyRenewer {
    pub fn new(endpoint: MyProxyEndpoint) -> Self {
        MyProxyRenewer {
            endpoint,
            lifetime: DEFAULT_PROXY_LIFETIME,
            logins: Mutex::default(),
        }
    }

    pub fn with_lifetime(mut self, lifetime: Duration) -> Self {
        self.lifetime = lifetime;
        self
    }

    pub fn endpoint(&self) -> &MyProxyEndpoint {
        &self.endpoint
    }

    pub fn register(&self, user: UserId, username: String, passphrase: String) {
        self.logins
            .lock()
            .expect("login lock")
            .insert(user, (username, passphrase));
    }

    pub fn is_registered(&self, user: &UserId) -> bool {
        self.logins.lock().expect("login lock").contains_key(user)
    }
}

#[async_trait]
impl ProxyRenewer for MyProxyRenewer {
    async fn renew(&self, current: &StoredProxy) -> Result<Vec<u8>, RenewError> {
        let login = self
            .logins
            .lock()
            .expect("login lock")
            .get(&current.user_id)
            .cloned();
        let (username, passphrase) = login.ok_or(RenewError::NoLogin)?;
        myproxy_get(&self.endpoint, &username, &passphrase, self.lifetime)
            .await
            .map(|(bundle, _)| bundle)
            .map_err(|e| RenewError::Failed(e.to_string()))
    }
}

/// One sweep: for every user with active jobs whose proxy expires within
/// the threshold, renew through `renewer` when an external endpoint is
/// configured, otherwise report the proxy as unrenewable.
pub async fn renew_if_needed(
    store: &ProxyStore,
    jobs: &[ActiveJob],
    policy: &RenewalPolicy,
    now: DateTime<Utc>,
    renewer: Option<&dyn ProxyRenewer>,
) -> Vec<RenewalAction> {
    let mut by_user: BTreeMap<&UserId, Vec<String>> = BTreeMap::new();
    for job in jobs {
        by_user.entry(&job.user).or_default().push(job.job.clone());
    }
    let renewer = renewer.filter(|_| policy.external_endpoint.is_some());

    let mut actions = Vec::new();
    for (user, jobs) in by_user {
        let Some(current) = store.get(user) else {
            actions.push(RenewalAction::ExpiringUnrenewable {
                user: user.clone(),
                jobs,
                expires_at: now,
                reason: "no stored proxy".into(),
            });
            continue;
        };
        if current.not_after - now > policy.threshold {
            continue;
        }
        let Some(renewer) = renewer else {
            actions.push(RenewalAction::ExpiringUnrenewable {
                user: user.clone(),
                jobs,
                expires_at: current.not_after,
                reason: "no external repository configured".into(),
            });
            continue;
        };
        let action = match renewer.renew(&current).await {
            Ok(bundle) => install(store, &current, bundle, now, jobs),
            Err(RenewError::NoLogin) => RenewalAction::ExpiringUnrenewable {
                user: user.clone(),
                jobs,
                expires_at: current.not_after,
                reason: RenewError::NoLogin.to_string(),
            },
            Err(err) => RenewalAction::RenewalFailed {
                user: user.clone(),
                jobs,
                expires_at: current.not_after,
                reason: err.to_string(),
            },
        };
        actions.push(action);
    }
    actions
}

fn install(
    store: &ProxyStore,
    current: &StoredProxy,
    bundle: Vec<u8>,
    now: DateTime<Utc>,
    jobs: Vec<String>,
) -> RenewalAction {
    let failed = |reason: String| RenewalAction::RenewalFailed {
        user: current.user_id.clone(),
        jobs: jobs.clone(),
        expires_at: current.not_after,
        reason,
    };
    match ProxyCredential::parse(&bundle) {
        Ok(c) if c.proxy_cert.not_after() <= current.not_after => {
            return failed("renewed proxy does not outlive the current one".into())
        }
        Ok(_) => {}
        Err(err) => return failed(err.to_string()),
    }
    match store.replace_if(&current.user_id, &current.fingerprint, bundle, now) {
        Ok(stored) => RenewalAction::Renewed {
            user: current.user_id.clone(),
            jobs,
            previous_not_after: current.not_after,
            not_after: stored.not_after,
        },
        Err(err) => failed(err.to_string()),
    }
}
