//! Proxy chain validation against a set of trust anchors.

use std::fmt;

use chrono::{DateTime, Utc};

use crate::bundle::ProxyCredential;
use crate::cert::Certificate;
use crate::error::{PkiError, Result};
use crate::proxy::{ProxyCertInfo, ProxyOptions, PROXY_CERT_INFO_OID};

/// Legacy terminal CN value accepted alongside decimal serials.
pub const LEGACY_PROXY_CN: &str = "proxy";

#[derive(Debug, Clone, Default)]
pub struct TrustStore {
    anchors: Vec<Certificate>,
}

impl TrustStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a self-signed CA certificate.
    pub fn add_self_signed(&mut self, cert: Certificate) -> Result<()> {
        if !cert.is_self_signed() {
            return Err(PkiError::NotSelfSigned(cert.subject().to_string()));
        }
        self.anchors.push(cert);
        Ok(())
    }

    /// Adds a certificate the operator explicitly trusts, self-signed or not.
    pub fn add_trusted(&mut self, cert: Certificate) {
        self.anchors.push(cert);
    }

    /// Loads every certificate in a PEM file as a trust anchor; self-signed
    /// roots are checked, others are taken as explicitly trusted.
    pub fn from_pem(text: &[u8]) -> Result<Self> {
        let mut store = TrustStore::new();
        for block in crate::cert::parse_pem_blocks(text)? {
            let cert = Certificate::from_der(block.contents())?;
            if cert.subject() == cert.issuer() {
                store.add_self_signed(cert)?;
            } else {
                store.add_trusted(cert);
            }
        }
        Ok(store)
    }

    pub fn anchors(&self) -> &[Certificate] {
        &self.anchors
    }

    /// Finds an anchor that issued `cert` and is valid at `at`.
    pub fn issuer_of(&self, cert: &Certificate, at: DateTime<Utc>) -> Option<&Certificate> {
        self.anchors.iter().find(|a| {
            a.subject() == cert.issuer() && a.is_valid_at(at) && cert.is_signed_by(a.public_key())
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    ProxyExpired,
    ProxyNotYetValid,
    SubjectExtensionRule,
    BadTerminalCn,
    IssuerMismatch,
    WrongSigner,
    ValidityNotContained,
    MissingProxyCertInfo,
    MalformedProxyCertInfo,
    KeyMismatch,
    UserCertExpired,
    UserCertNotYetValid,
    UntrustedUserCert,
}

impl ViolationKind {
    pub fn name(self) -> &'static str {
        match self {
            ViolationKind::ProxyExpired => "proxy expired",
            ViolationKind::ProxyNotYetValid => "proxy not yet valid",
            ViolationKind::SubjectExtensionRule => "subject extension rule",
            ViolationKind::BadTerminalCn => "terminal CN",
            ViolationKind::IssuerMismatch => "issuer mismatch",
            ViolationKind::WrongSigner => "wrong signer",
            ViolationKind::ValidityNotContained => "validity not contained",
            ViolationKind::MissingProxyCertInfo => "missing proxy-certificate-information",
            ViolationKind::MalformedProxyCertInfo => "malformed proxy-certificate-information",
            ViolationKind::KeyMismatch => "key mismatch",
            ViolationKind::UserCertExpired => "user certificate expired",
            ViolationKind::UserCertNotYetValid => "user certificate not yet valid",
            ViolationKind::UntrustedUserCert => "untrusted user certificate",
        }
    }
}

impl fmt::Display for ViolationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One failed check. `depth` 0 is the proxy certificate itself; the user
/// certificate sits at the end of the chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub depth: usize,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (depth {})", self.kind, self.depth)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has(&self, kind: ViolationKind) -> bool {
        self.violations.iter().any(|v| v.kind == kind)
    }

    fn push(&mut self, kind: ViolationKind, depth: usize) {
        self.violations.push(Violation { kind, depth });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        let names: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        f.write_str(&names.join("; "))
    }
}

/// Validates a proxy credential at instant `at`.
///
/// Each proxy level must be issued and signed by the next certificate, have
/// a subject equal to its issuer's plus one CN, and sit inside its issuer's
/// validity window. The final certificate must chain to a trust anchor.
pub fn validate_proxy_chain(
    credential: &ProxyCredential,
    trust: &TrustStore,
    at: DateTime<Utc>,
    options: ProxyOptions,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    let certs: Vec<&Certificate> = std::iter::once(&credential.proxy_cert)
        .chain(&credential.chain)
        .collect();

    if let Some(key) = &credential.proxy_key {
        if key.public_key() != credential.proxy_cert.public_key() {
            report.push(ViolationKind::KeyMismatch, 0);
        }
    }

    let (user, proxies) = certs.split_last().expect("chain includes proxy cert");
    if proxies.is_empty() {
        report.push(ViolationKind::SubjectExtensionRule, 0);
    }
    for (depth, cert) in proxies.iter().enumerate() {
        let issuer = certs[depth + 1];
        check_proxy_level(cert, issuer, depth, at, options, &mut report);
    }

    let user_depth = certs.len() - 1;
    if at > user.not_after() {
        report.push(ViolationKind::UserCertExpired, user_depth);
    } else if at < user.not_before() {
        report.push(ViolationKind::UserCertNotYetValid, user_depth);
    }
    if trust.issuer_of(user, at).is_none() {
        report.push(ViolationKind::UntrustedUserCert, user_depth);
    }
    report
}

fn check_proxy_level(
    cert: &Certificate,
    issuer: &Certificate,
    depth: usize,
    at: DateTime<Utc>,
    options: ProxyOptions,
    report: &mut ValidationReport,
) {
    if cert.issuer() != issuer.subject() {
        report.push(ViolationKind::IssuerMismatch, depth);
    }
    match cert.subject().split_terminal_cn() {
        Some((parent, cn)) if &parent == issuer.subject() => {
            let serial_like = !cn.is_empty() && cn.bytes().all(|b| b.is_ascii_digit());
            if !serial_like && cn != LEGACY_PROXY_CN {
                report.push(ViolationKind::BadTerminalCn, depth);
            }
        }
        _ => report.push(ViolationKind::SubjectExtensionRule, depth),
    }
    if !cert.is_signed_by(issuer.public_key()) {
        report.push(ViolationKind::WrongSigner, depth);
    }
    if cert.not_before() < issuer.not_before() || cert.not_after() > issuer.not_after() {
        report.push(ViolationKind::ValidityNotContained, depth);
    }
    if at > cert.not_after() {
        report.push(ViolationKind::ProxyExpired, depth);
    } else if at < cert.not_before() {
        report.push(ViolationKind::ProxyNotYetValid, depth);
    }
    match cert.extension(PROXY_CERT_INFO_OID) {
        Some(ext) => {
            if ProxyCertInfo::decode(&ext.value).is_err() {
                report.push(ViolationKind::MalformedProxyCertInfo, depth);
            }
        }
        None if !options.legacy_proxy => report.push(ViolationKind::MissingProxyCertInfo, depth),
        None => {}
    }
}

/// Parses a proxy file and validates it.
pub fn validate_proxy_bundle(
    bundle: &[u8],
    trust: &TrustStore,
    at: DateTime<Utc>,
    options: ProxyOptions,
) -> Result<ValidationReport> {
    let credential = ProxyCredential::parse(bundle)?;
    Ok(validate_proxy_chain(&credential, trust, at, options))
}
