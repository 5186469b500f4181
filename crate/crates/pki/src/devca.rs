//! A throwaway certificate authority for local experiments, tests and the
//! benchmark harness. Not a general-purpose CA.

use chrono::{Duration, Utc};
use openssl::x509::extension::{
    BasicConstraints, ExtendedKeyUsage, KeyUsage, SubjectAlternativeName,
};
use openssl::x509::X509Builder;
use rand::Rng;

use crate::cert::{Certificate, Serial};
use crate::dn::DistinguishedName;
use crate::error::Result;
use crate::issue::CertTemplate;
use crate::keys::{AlgorithmId, KeyPair};

pub struct DevCa {
    cert: Certificate,
    key: KeyPair,
}

impl DevCa {
    pub fn new(dn: &str) -> Result<Self> {
        let dn = DistinguishedName::parse(dn)?;
        let key = KeyPair::generate(AlgorithmId::EcP256)?;
        let now = Utc::now();
        let cert = CertTemplate {
            subject: &dn,
            issuer: &dn,
            public_key: key.public_key(),
            serial: random_serial(),
            not_before: now - Duration::hours(1),
            not_after: now + Duration::days(3650),
            extensions: vec![
                BasicConstraints::new().critical().ca().build()?,
                KeyUsage::new()
                    .critical()
                    .key_cert_sign()
                    .crl_sign()
                    .build()?,
            ],
        }
        .sign(&key)?;
        Ok(DevCa { cert, key })
    }

    pub fn certificate(&self) -> &Certificate {
        &self.cert
    }

    /// Issues a user certificate valid for one year.
    pub fn issue_user(&self, dn: &str, algorithm: AlgorithmId) -> Result<(Certificate, KeyPair)> {
        self.issue_user_valid_for(dn, algorithm, Duration::days(365))
    }

    pub fn issue_user_valid_for(
        &self,
        dn: &str,
        algorithm: AlgorithmId,
        valid_for: Duration,
    ) -> Result<(Certificate, KeyPair)> {
        let dn = DistinguishedName::parse(dn)?;
        let key = KeyPair::generate(algorithm)?;
        let now = Utc::now();
        let cert = CertTemplate {
            subject: &dn,
            issuer: self.cert.subject(),
            public_key: key.public_key(),
            serial: random_serial(),
            not_before: now - Duration::hours(1),
            not_after: now + valid_for,
            extensions: vec![
                BasicConstraints::new().critical().build()?,
                KeyUsage::new()
                    .critical()
                    .digital_signature()
                    .key_encipherment()
                    .build()?,
                ExtendedKeyUsage::new().client_auth().build()?,
            ],
        }
        .sign(&self.key)?;
        Ok((cert, key))
    }

    /// Issues a TLS server certificate for the given DNS names / IP addresses.
    pub fn issue_server(&self, dn: &str, names: &[&str]) -> Result<(Certificate, KeyPair)> {
        let dn = DistinguishedName::parse(dn)?;
        let key = KeyPair::generate(AlgorithmId::EcP256)?;
        let now = Utc::now();
        // SAN needs an X509v3 context; build it against a scratch builder.
        let scratch = X509Builder::new()?;
        let mut san = SubjectAlternativeName::new();
        for name in names {
            if name.parse::<std::net::IpAddr>().is_ok() {
                san.ip(name);
            } else {
                san.dns(name);
            }
        }
        let san = san.build(&scratch.x509v3_context(None, None))?;
        let cert = CertTemplate {
            subject: &dn,
            issuer: self.cert.subject(),
            public_key: key.public_key(),
            serial: random_serial(),
            not_before: now - Duration::hours(1),
            not_after: now + Duration::days(365),
            extensions: vec![
                BasicConstraints::new().critical().build()?,
                KeyUsage::new()
                    .critical()
                    .digital_signature()
                    .key_encipherment()
                    .build()?,
                ExtendedKeyUsage::new()
                    .server_auth()
                    .client_auth()
                    .build()?,
                san,
            ],
        }
        .sign(&self.key)?;
        Ok((cert, key))
    }
}

fn random_serial() -> Serial {
    Serial::from_u64(rand::thread_rng().gen_range(1..i64::MAX as u64))
}
