//! PKI primitives for the L-GRID portal: distinguished names, key pairs,
//! certificates, proxy certificate requests and signing, Globus-style proxy
//! files, chain validation and PKCS#12 conversion.
//!
//! All values are immutable after construction and can be shared across
//! threads.

mod bundle;
mod cert;
mod container;
mod csr;
pub mod devca;
mod dn;
mod error;
mod issue;
mod keys;
mod proxy;
mod validate;

pub use bundle::{assemble_proxy_bundle, assemble_proxy_bundle_with_chain, ProxyCredential};
pub use cert::{parse_pem_blocks, Certificate, Extension, Serial};
pub use container::{
    convert_credential_container, write_private, UserCredential, USER_CERT_FILE, USER_KEY_FILE,
};
pub use csr::{create_proxy_csr, fresh_proxy_serial, CertificateSigningRequest};
pub use dn::{AttributeType, DistinguishedName, Rdn, UserId};
pub use error::{PkiError, Result};
pub use keys::{AlgorithmId, KeyPair, PublicKey};
pub use proxy::{
    sign_proxy_csr, ProxyCertInfo, ProxyOptions, CLOCK_SKEW, INHERIT_ALL_POLICY_OID,
    PROXY_CERT_INFO_OID,
};
pub use validate::{
    validate_proxy_bundle, validate_proxy_chain, TrustStore, ValidationReport, Violation,
    ViolationKind, LEGACY_PROXY_CN,
};

/// Convenience wrapper matching the one-line DN grammar.
pub fn parse_dn(text: &str) -> Result<DistinguishedName> {
    DistinguishedName::parse(text)
}

pub fn derive_user_id(dn: &DistinguishedName) -> UserId {
    UserId::derive(dn)
}

pub fn generate_keypair(algorithm: AlgorithmId) -> Result<KeyPair> {
    KeyPair::generate(algorithm)
}
