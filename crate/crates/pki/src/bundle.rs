//! Proxy credential files in the Globus layout: proxy certificate, proxy
//! private key, then the issuing chain up to the user certificate.

use crate::cert::{parse_pem_blocks, Certificate, CERTIFICATE_TAG};
use crate::dn::{DistinguishedName, UserId};
use crate::error::{PkiError, Result};
use crate::keys::KeyPair;

const KEY_TAG: &str = "PRIVATE KEY";

#[derive(Debug, Clone)]
pub struct ProxyCredential {
    pub proxy_cert: Certificate,
    /// Present only on the party that generated the proxy key.
    pub proxy_key: Option<KeyPair>,
    /// Issuers of `proxy_cert`, nearest first; the last one is the user
    /// (end-entity) certificate.
    pub chain: Vec<Certificate>,
}

impl ProxyCredential {
    pub fn user_cert(&self) -> &Certificate {
        self.chain.last().unwrap_or(&self.proxy_cert)
    }

    /// DN of the end-entity certificate the proxy acts for.
    pub fn user_dn(&self) -> &DistinguishedName {
        self.user_cert().subject()
    }

    pub fn user_id(&self) -> UserId {
        self.user_dn().user_id()
    }

    /// Serializes in the Globus proxy-file order.
    pub fn to_pem(&self) -> Result<Vec<u8>> {
        let mut out = self.proxy_cert.to_pem().into_bytes();
        if let Some(key) = &self.proxy_key {
            out.extend_from_slice(&key.private_key_pem()?);
        }
        for cert in &self.chain {
            out.extend_from_slice(cert.to_pem().as_bytes());
        }
        Ok(out)
    }

    /// Parses a proxy file. The first block must be a certificate; an
    /// optional private key may follow it; the remaining blocks are the chain.
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let blocks = parse_pem_blocks(bytes)?;
        let mut iter = blocks.into_iter().peekable();
        let first = iter
            .next()
            .ok_or_else(|| PkiError::malformed("proxy bundle", "no PEM blocks"))?;
        if first.tag() != CERTIFICATE_TAG {
            return Err(PkiError::malformed(
                "proxy bundle",
                "first block is not a certificate",
            ));
        }
        let proxy_cert = Certificate::from_der(first.contents())?;
        let proxy_key = match iter.peek() {
            Some(block) if block.tag().ends_with(KEY_TAG) => {
                let block = iter.next().expect("peeked");
                Some(KeyPair::from_pem(pem::encode(&block).as_bytes())?)
            }
            _ => None,
        };
        let chain = iter
            .map(|block| {
                if block.tag() != CERTIFICATE_TAG {
                    return Err(PkiError::malformed(
                        "proxy bundle",
                        format!("unexpected {} block in chain", block.tag()),
                    ));
                }
                Certificate::from_der(block.contents())
            })
            .collect::<Result<Vec<_>>>()?;
        if chain.is_empty() {
            return Err(PkiError::malformed(
                "proxy bundle",
                "missing user certificate",
            ));
        }
        Ok(ProxyCredential {
            proxy_cert,
            proxy_key,
            chain,
        })
    }
}

/// Writes proxy cert, proxy key and user cert into one proxy file.
pub fn assemble_proxy_bundle(
    proxy_cert: &Certificate,
    proxy_key: &KeyPair,
    user_cert: &Certificate,
) -> Result<Vec<u8>> {
    assemble_proxy_bundle_with_chain(proxy_cert, proxy_key, std::slice::from_ref(user_cert))
}

/// Like [`assemble_proxy_bundle`] for a proxy issued by another proxy:
/// `chain` lists the issuers nearest first, ending at the user certificate.
pub fn assemble_proxy_bundle_with_chain(
    proxy_cert: &Certificate,
    proxy_key: &KeyPair,
    chain: &[Certificate],
) -> Result<Vec<u8>> {
    if proxy_cert.public_key() != proxy_key.public_key() {
        return Err(PkiError::InconsistentBundle(
            "proxy key does not match proxy certificate",
        ));
    }
    let issuer = chain
        .first()
        .ok_or(PkiError::InconsistentBundle("empty issuer chain"))?;
    if proxy_cert.issuer() != issuer.subject() {
        return Err(PkiError::InconsistentBundle(
            "proxy issuer is not the user certificate subject",
        ));
    }
    ProxyCredential {
        proxy_cert: proxy_cert.clone(),
        proxy_key: Some(proxy_key.clone()),
        chain: chain.to_vec(),
    }
    .to_pem()
}

#[cfg(test)]
mod tests {
    use chrono::{Duration, Utc};

    use super::*;
    use crate::csr::create_proxy_csr;
    use crate::devca::DevCa;
    use crate::keys::AlgorithmId;
    use crate::proxy::{sign_proxy_csr, ProxyOptions};

    fn proxy_parts() -> (Certificate, KeyPair, Certificate) {
        let ca = DevCa::new("/CN=CA").unwrap();
        let (user, user_key) = ca
            .issue_user("/C=IT/CN=Alice", AlgorithmId::EcP256)
            .unwrap();
        let fresh = KeyPair::generate(AlgorithmId::EcP256).unwrap();
        let csr = create_proxy_csr(user.subject(), &fresh).unwrap();
        let proxy = sign_proxy_csr(
            &user,
            &user_key,
            &csr,
            Duration::hours(12),
            Utc::now(),
            ProxyOptions::default(),
        )
        .unwrap();
        (proxy, fresh, user)
    }

    #[test]
    fn layout_is_cert_key_cert() {
        let (proxy, key, user) = proxy_parts();
        let bytes = assemble_proxy_bundle(&proxy, &key, &user).unwrap();
        let tags: Vec<String> = parse_pem_blocks(&bytes)
            .unwrap()
            .iter()
            .map(|b| b.tag().to_owned())
            .collect();
        assert_eq!(tags, ["CERTIFICATE", "PRIVATE KEY", "CERTIFICATE"]);
    }

    #[test]
    fn round_trip() {
        let (proxy, key, user) = proxy_parts();
        let bytes = assemble_proxy_bundle(&proxy, &key, &user).unwrap();
        let parsed = ProxyCredential::parse(&bytes).unwrap();
        assert_eq!(parsed.proxy_cert, proxy);
        assert_eq!(
            parsed.proxy_key.as_ref().unwrap().public_key(),
            key.public_key()
        );
        assert_eq!(parsed.chain, vec![user.clone()]);
        assert_eq!(parsed.to_pem().unwrap(), bytes);
        assert_eq!(parsed.user_dn(), user.subject());
    }

    #[test]
    fn mismatched_key_rejected() {
        let (proxy, _, user) = proxy_parts();
        let other = KeyPair::generate(AlgorithmId::EcP256).unwrap();
        assert!(matches!(
            assemble_proxy_bundle(&proxy, &other, &user),
            Err(PkiError::InconsistentBundle(_))
        ));
    }

    #[test]
    fn wrong_issuer_rejected() {
        let (proxy, key, _) = proxy_parts();
        let ca = DevCa::new("/CN=CA2").unwrap();
        let (bob, _) = ca.issue_user("/CN=Bob", AlgorithmId::EcP256).unwrap();
        assert!(matches!(
            assemble_proxy_bundle(&proxy, &key, &bob),
            Err(PkiError::InconsistentBundle(_))
        ));
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(ProxyCredential::parse(b"not pem").is_err());
        let (proxy, _, _) = proxy_parts();
        assert!(ProxyCredential::parse(proxy.to_pem().as_bytes()).is_err());
    }
}
