//! X.509 certificates held as DER with their decoded fields.

use std::fmt;

use chrono::{DateTime, TimeZone, Utc};
use openssl::x509::{X509Name, X509};
use x509_parser::prelude::{FromDer, X509Certificate};
use x509_parser::x509::X509Name as ParsedName;

use crate::dn::{AttributeType, DistinguishedName, Rdn};
use crate::error::{PkiError, Result};
use crate::keys::PublicKey;

pub const CERTIFICATE_TAG: &str = "CERTIFICATE";

/// Certificate serial number, as unsigned big-endian bytes.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Serial(Vec<u8>);

impl Serial {
    pub fn from_u64(v: u64) -> Self {
        let bytes = v.to_be_bytes();
        let first = bytes
            .iter()
            .position(|b| *b != 0)
            .unwrap_or(bytes.len() - 1);
        Serial(bytes[first..].to_vec())
    }

    pub fn bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for Serial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Serial({})", hex::encode(&self.0))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Extension {
    pub oid: String,
    pub critical: bool,
    pub value: Vec<u8>,
}

#[derive(Clone, PartialEq, Eq)]
pub struct Certificate {
    der: Vec<u8>,
    subject: DistinguishedName,
    issuer: DistinguishedName,
    serial: Serial,
    not_before: DateTime<Utc>,
    not_after: DateTime<Utc>,
    public_key: PublicKey,
    extensions: Vec<Extension>,
    signature: Vec<u8>,
}

impl Certificate {
    pub fn from_der(der: &[u8]) -> Result<Self> {
        let (rest, parsed) =
            X509Certificate::from_der(der).map_err(|e| PkiError::malformed("certificate", e))?;
        if !rest.is_empty() {
            return Err(PkiError::malformed(
                "certificate",
                "trailing bytes after DER",
            ));
        }
        let validity = parsed.validity();
        let not_before = timestamp(validity.not_before.timestamp())?;
        let not_after = timestamp(validity.not_after.timestamp())?;
        if not_before >= not_after {
            return Err(PkiError::malformed(
                "certificate",
                "not-before is not before not-after",
            ));
        }
        let serial = parsed.raw_serial();
        let serial = Serial(serial.iter().skip_while(|b| **b == 0).copied().collect());
        Ok(Certificate {
            der: der.to_vec(),
            subject: dn_from_parsed(parsed.subject())?,
            issuer: dn_from_parsed(parsed.issuer())?,
            serial,
            not_before,
            not_after,
            public_key: PublicKey::from_der(parsed.public_key().raw)?,
            extensions: parsed
                .extensions()
                .iter()
                .map(|e| Extension {
                    oid: e.oid.to_id_string(),
                    critical: e.critical,
                    value: e.value.to_vec(),
                })
                .collect(),
            signature: parsed.signature_value.data.to_vec(),
        })
    }

    pub fn from_pem(pem_text: &[u8]) -> Result<Self> {
        let block = pem::parse(pem_text).map_err(|e| PkiError::malformed("certificate PEM", e))?;
        if block.tag() != CERTIFICATE_TAG {
            return Err(PkiError::malformed(
                "certificate PEM",
                format!("unexpected tag {}", block.tag()),
            ));
        }
        Self::from_der(block.contents())
    }

    pub(crate) fn from_openssl(x509: &X509) -> Result<Self> {
        Self::from_der(&x509.to_der()?)
    }

    pub(crate) fn to_openssl(&self) -> Result<X509> {
        Ok(X509::from_der(&self.der)?)
    }

    pub fn der(&self) -> &[u8] {
        &self.der
    }

    pub fn to_pem(&self) -> String {
        pem::encode(&pem::Pem::new(CERTIFICATE_TAG, self.der.clone()))
    }

    pub fn subject(&self) -> &DistinguishedName {
        &self.subject
    }

    pub fn issuer(&self) -> &DistinguishedName {
        &self.issuer
    }

    pub fn serial(&self) -> &Serial {
        &self.serial
    }

    pub fn not_before(&self) -> DateTime<Utc> {
        self.not_before
    }

    pub fn not_after(&self) -> DateTime<Utc> {
        self.not_after
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.public_key
    }

    pub fn extensions(&self) -> &[Extension] {
        &self.extensions
    }

    pub fn extension(&self, oid: &str) -> Option<&Extension> {
        self.extensions.iter().find(|e| e.oid == oid)
    }

    pub fn signature(&self) -> &[u8] {
        &self.signature
    }

    pub fn is_valid_at(&self, at: DateTime<Utc>) -> bool {
        self.not_before <= at && at <= self.not_after
    }

    /// Checks the certificate signature against an issuer public key.
    pub fn is_signed_by(&self, issuer_key: &PublicKey) -> bool {
        let (Ok(x509), Ok(key)) = (self.to_openssl(), issuer_key.to_openssl()) else {
            return false;
        };
        x509.verify(&key).unwrap_or(false)
    }

    pub fn is_self_signed(&self) -> bool {
        self.subject == self.issuer && self.is_signed_by(&self.public_key)
    }

    /// Hex SHA-256 over the DER encoding.
    pub fn fingerprint(&self) -> String {
        hex::encode(openssl::sha::sha256(&self.der))
    }
}

impl fmt::Debug for Certificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Certificate")
            .field("subject", &self.subject.to_string())
            .field("issuer", &self.issuer.to_string())
            .field("serial", &self.serial)
            .field("not_before", &self.not_before)
            .field("not_after", &self.not_after)
            .finish_non_exhaustive()
    }
}

fn timestamp(secs: i64) -> Result<DateTime<Utc>> {
    Utc.timestamp_opt(secs, 0)
        .single()
        .ok_or_else(|| PkiError::malformed("certificate", format!("time {secs} out of range")))
}

pub(crate) fn dn_from_parsed(name: &ParsedName<'_>) -> Result<DistinguishedName> {
    let mut rdns = Vec::new();
    for attr in name.iter_attributes() {
        let oid = attr.attr_type().to_id_string();
        let ty = AttributeType::from_oid(&oid).ok_or_else(|| {
            PkiError::malformed("distinguished name", format!("unsupported attribute {oid}"))
        })?;
        let value = attr
            .as_str()
            .map_err(|e| PkiError::malformed("distinguished name", e))?
            .to_owned();
        rdns.push(Rdn { attr: ty, value });
    }
    DistinguishedName::new(rdns)
}

pub(crate) fn dn_to_openssl(dn: &DistinguishedName) -> Result<X509Name> {
    let mut builder = X509Name::builder()?;
    for rdn in dn.rdns() {
        builder.append_entry_by_text(rdn.attr.short_name(), &rdn.value)?;
    }
    Ok(builder.build())
}

/// Splits PEM text into blocks, preserving order.
pub fn parse_pem_blocks(text: &[u8]) -> Result<Vec<pem::Pem>> {
    pem::parse_many(text).map_err(|e| PkiError::malformed("PEM", e))
}
