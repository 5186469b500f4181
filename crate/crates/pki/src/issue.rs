//! Low-level certificate construction shared by proxy signing and the
//! development CA.

use chrono::{DateTime, Utc};
use openssl::asn1::{Asn1Integer, Asn1Object, Asn1OctetString, Asn1Time};
use openssl::bn::BigNum;
use openssl::hash::MessageDigest;
use openssl::x509::{X509Builder, X509Extension};

use crate::cert::{dn_to_openssl, Certificate, Serial};
use crate::dn::DistinguishedName;
use crate::error::Result;
use crate::keys::{KeyPair, PublicKey};

pub(crate) struct CertTemplate<'a> {
    pub subject: &'a DistinguishedName,
    pub issuer: &'a DistinguishedName,
    pub public_key: &'a PublicKey,
    pub serial: Serial,
    pub not_before: DateTime<Utc>,
    pub not_after: DateTime<Utc>,
    pub extensions: Vec<X509Extension>,
}

impl CertTemplate<'_> {
    pub fn sign(self, issuer_key: &KeyPair) -> Result<Certificate> {
        let mut builder = X509Builder::new()?;
        builder.set_version(2)?;
        let serial = BigNum::from_slice(self.serial.bytes())?;
        let serial = Asn1Integer::from_bn(&serial)?;
        builder.set_serial_number(&serial)?;
        let subject = dn_to_openssl(self.subject)?;
        builder.set_subject_name(&subject)?;
        let issuer = dn_to_openssl(self.issuer)?;
        builder.set_issuer_name(&issuer)?;
        let public_key = self.public_key.to_openssl()?;
        builder.set_pubkey(&public_key)?;
        let not_before = Asn1Time::from_unix(self.not_before.timestamp())?;
        builder.set_not_before(&not_before)?;
        let not_after = Asn1Time::from_unix(self.not_after.timestamp())?;
        builder.set_not_after(&not_after)?;
        for ext in self.extensions {
            builder.append_extension(ext)?;
        }
        builder.sign(issuer_key.pkey(), MessageDigest::sha256())?;
        Certificate::from_openssl(&builder.build())
    }
}

pub(crate) fn raw_extension(oid: &str, critical: bool, der: &[u8]) -> Result<X509Extension> {
    let oid = Asn1Object::from_str(oid)?;
    let contents = Asn1OctetString::new_from_bytes(der)?;
    Ok(X509Extension::new_from_der(&oid, critical, &contents)?)
}
