//! Signing proxy certificates from delegation requests.

use chrono::{DateTime, Duration, Utc};
use openssl::x509::extension::KeyUsage;
use x509_parser::der_parser::ber::BerObjectContent;
use x509_parser::der_parser::parse_der;

use crate::cert::{Certificate, Serial};
use crate::csr::CertificateSigningRequest;
use crate::error::{PkiError, Result};
use crate::issue::{raw_extension, CertTemplate};
use crate::keys::KeyPair;

/// id-pe-proxyCertInfo.
pub const PROXY_CERT_INFO_OID: &str = "1.3.6.1.5.5.7.1.14";
/// id-ppl-inheritAll.
pub const INHERIT_ALL_POLICY_OID: &str = "1.3.6.1.5.5.7.21.1";
/// Backdating applied to proxy not-before to tolerate clock skew.
pub const CLOCK_SKEW: Duration = Duration::minutes(5);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ProxyOptions {
    /// Omit the proxy-certificate-information extension; validators then
    /// only enforce the subject rule.
    #[serde(default)]
    pub legacy_proxy: bool,
}

/// Decoded proxy-certificate-information extension.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProxyCertInfo {
    pub path_len: Option<u32>,
    pub policy_language: String,
}

impl ProxyCertInfo {
    pub fn inherit_all() -> Self {
        ProxyCertInfo {
            path_len: None,
            policy_language: INHERIT_ALL_POLICY_OID.to_owned(),
        }
    }

    /// DER for the inherit-all policy without a path length constraint.
    pub fn inherit_all_der() -> Vec<u8> {
        // SEQUENCE { SEQUENCE { OID 1.3.6.1.5.5.7.21.1 } }
        vec![
            0x30, 0x0c, 0x30, 0x0a, 0x06, 0x08, 0x2b, 0x06, 0x01, 0x05, 0x05, 0x07, 0x15, 0x01,
        ]
    }

    pub fn decode(der: &[u8]) -> Result<Self> {
        let bad = |d: &str| PkiError::malformed("proxyCertInfo", d);
        let (rest, obj) = parse_der(der).map_err(|e| bad(&e.to_string()))?;
        if !rest.is_empty() {
            return Err(bad("trailing bytes"));
        }
        let items = obj.as_sequence().map_err(|_| bad("not a SEQUENCE"))?;
        let (path_len, policy) = match items.as_slice() {
            [policy] => (None, policy),
            [len, policy] => {
                let len = len
                    .as_u32()
                    .map_err(|_| bad("path length is not an INTEGER"))?;
                (Some(len), policy)
            }
            _ => return Err(bad("unexpected element count")),
        };
        let policy = policy
            .as_sequence()
            .map_err(|_| bad("proxyPolicy is not a SEQUENCE"))?;
        let language = match policy.first().map(|o| &o.content) {
            Some(BerObjectContent::OID(oid)) => oid.to_id_string(),
            _ => return Err(bad("missing policy language")),
        };
        Ok(ProxyCertInfo {
            path_len,
            policy_language: language,
        })
    }
}

/// Signs `csr` with the user's key, producing a proxy certificate.
///
/// The CSR subject must be the user subject plus one CN. The proxy expires
/// at `min(now + lifetime, user not-after)`.
pub fn sign_proxy_csr(
    user_cert: &Certificate,
    user_key: &KeyPair,
    csr: &CertificateSigningRequest,
    lifetime: Duration,
    now: DateTime<Utc>,
    options: ProxyOptions,
) -> Result<Certificate> {
    if lifetime <= Duration::zero() {
        return Err(PkiError::BadLifetime(lifetime.num_seconds()));
    }
    if !csr.subject().extends_by_one_cn(user_cert.subject()) {
        return Err(PkiError::SubjectRule {
            csr: csr.subject().to_string(),
            issuer: user_cert.subject().to_string(),
        });
    }
    if !csr.verify_proof_of_possession() {
        return Err(PkiError::BadProofOfPossession);
    }
    if now >= user_cert.not_after() {
        return Err(PkiError::UserCertExpired(user_cert.not_after()));
    }
    if user_cert.public_key() != user_key.public_key() {
        return Err(PkiError::KeyMismatch);
    }

    let not_after = (now + lifetime).min(user_cert.not_after());
    let not_before = (now - CLOCK_SKEW).max(user_cert.not_before());
    let serial = csr
        .subject()
        .split_terminal_cn()
        .and_then(|(_, cn)| cn.parse::<u64>().ok())
        .unwrap_or_else(|| u64::from(crate::csr::fresh_proxy_serial()));

    let mut extensions = vec![KeyUsage::new()
        .critical()
        .digital_signature()
        .key_encipherment()
        .build()?];
    if !options.legacy_proxy {
        extensions.push(raw_extension(
            PROXY_CERT_INFO_OID,
            true,
            &ProxyCertInfo::inherit_all_der(),
        )?);
    }
    CertTemplate {
        subject: csr.subject(),
        issuer: user_cert.subject(),
        public_key: csr.public_key(),
        serial: Serial::from_u64(serial),
        not_before,
        not_after,
        extensions,
    }
    .sign(user_key)
}
