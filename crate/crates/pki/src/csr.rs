use openssl::hash::MessageDigest;
use openssl::x509::{X509Req, X509ReqBuilder};
use rand::Rng;
use x509_parser::prelude::{FromDer, X509CertificationRequest};

use crate::cert::{dn_from_parsed, dn_to_openssl};
use crate::dn::DistinguishedName;
use crate::error::{PkiError, Result};
use crate::keys::{KeyPair, PublicKey};

pub const CSR_TAG: &str = "CERTIFICATE REQUEST";

/// A PKCS#10 certificate request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CertificateSigningRequest {
    der: Vec<u8>,
    subject: DistinguishedName,
    public_key: PublicKey,
}

impl CertificateSigningRequest {
    /// Builds and self-signs a request for `subject` over `key`.
    pub fn build(subject: &DistinguishedName, key: &KeyPair) -> Result<Self> {
        let mut builder = X509ReqBuilder::new()?;
        builder.set_version(0)?;
        let name = dn_to_openssl(subject)?;
        builder.set_subject_name(&name)?;
        builder.set_pubkey(key.pkey())?;
        builder.sign(key.pkey(), MessageDigest::sha256())?;
        Self::from_der(&builder.build().to_der()?)
    }

    pub fn from_der(der: &[u8]) -> Result<Self> {
        let (_, parsed) = X509CertificationRequest::from_der(der)
            .map_err(|e| PkiError::malformed("certificate request", e))?;
        let info = &parsed.certification_request_info;
        Ok(CertificateSigningRequest {
            der: der.to_vec(),
            subject: dn_from_parsed(&info.subject)?,
            public_key: PublicKey::from_der(info.subject_pki.raw)?,
        })
    }

    pub fn from_pem(text: &[u8]) -> Result<Self> {
        let block = pem::parse(text).map_err(|e| PkiError::malformed("CSR PEM", e))?;
        if block.tag() != CSR_TAG {
            return Err(PkiError::malformed(
                "CSR PEM",
                format!("unexpected tag {}", block.tag()),
            ));
        }
        Self::from_der(block.contents())
    }

    pub fn to_pem(&self) -> String {
        pem::encode(&pem::Pem::new(CSR_TAG, self.der.clone()))
    }

    pub fn der(&self) -> &[u8] {
        &self.der
    }

    pub fn subject(&self) -> &DistinguishedName {
        &self.subject
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.public_key
    }

    /// Proof of possession: the request is signed by the key it carries.
    pub fn verify_proof_of_possession(&self) -> bool {
        let (Ok(req), Ok(key)) = (X509Req::from_der(&self.der), self.public_key.to_openssl())
        else {
            return false;
        };
        req.verify(&key).unwrap_or(false)
    }
}

/// Fresh decimal serial for a proxy's terminal CN: a random 31-bit value.
pub fn fresh_proxy_serial() -> u32 {
    rand::thread_rng().gen_range(1..=i32::MAX as u32)
}

/// Creates the request a delegation server returns for `user_dn`: the
/// subject is the user DN plus one CN holding a fresh decimal serial.
pub fn create_proxy_csr(
    user_dn: &DistinguishedName,
    fresh: &KeyPair,
) -> Result<CertificateSigningRequest> {
    let subject = user_dn.with_cn(fresh_proxy_serial().to_string());
    CertificateSigningRequest::build(&subject, fresh)
}
