use std::fmt;
use std::str::FromStr;

use openssl::ec::{EcGroup, EcKey};
use openssl::hash::MessageDigest;
use openssl::nid::Nid;
use openssl::pkey::{Id, PKey, Private, Public};
use openssl::rsa::Rsa;
use openssl::sign::{Signer, Verifier};
use serde::{Deserialize, Serialize};

use crate::error::{PkiError, Result};

/// Supported signature schemes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum AlgorithmId {
    #[default]
    #[serde(rename = "ec-p256")]
    EcP256,
    #[serde(rename = "rsa-2048")]
    Rsa2048,
}

impl AlgorithmId {
    pub fn as_str(self) -> &'static str {
        match self {
            AlgorithmId::EcP256 => "ec-p256",
            AlgorithmId::Rsa2048 => "rsa-2048",
        }
    }
}

impl FromStr for AlgorithmId {
    type Err = PkiError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ec-p256" => Ok(AlgorithmId::EcP256),
            "rsa-2048" => Ok(AlgorithmId::Rsa2048),
            other => Err(PkiError::UnsupportedAlgorithm(other.to_owned())),
        }
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A SubjectPublicKeyInfo, compared by its DER encoding.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct PublicKey {
    der: Vec<u8>,
}

impl PublicKey {
    pub fn from_der(der: &[u8]) -> Result<Self> {
        PKey::public_key_from_der(der).map_err(|e| PkiError::malformed("public key", e))?;
        Ok(PublicKey { der: der.to_vec() })
    }

    pub fn der(&self) -> &[u8] {
        &self.der
    }

    pub(crate) fn to_openssl(&self) -> Result<PKey<Public>> {
        Ok(PKey::public_key_from_der(&self.der)?)
    }

    pub fn verify(&self, message: &[u8], signature: &[u8]) -> bool {
        let Ok(key) = self.to_openssl() else {
            return false;
        };
        let Ok(mut verifier) = Verifier::new(MessageDigest::sha256(), &key) else {
            return false;
        };
        verifier.verify_oneshot(signature, message).unwrap_or(false)
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let digest = openssl::sha::sha256(&self.der);
        write!(f, "PublicKey(sha256:{})", hex::encode(&digest[..8]))
    }
}

/// An asymmetric key pair. The private half is only ever serialized by
/// [`KeyPair::private_key_pem`], which callers use for local files and proxy
/// bundles kept on the party that generated the key.
#[derive(Clone)]
pub struct KeyPair {
    key: PKey<Private>,
    algorithm: AlgorithmId,
    public: PublicKey,
}

impl KeyPair {
    pub fn generate(algorithm: AlgorithmId) -> Result<Self> {
        let key = match algorithm {
            AlgorithmId::EcP256 => {
                let group = EcGroup::from_curve_name(Nid::X9_62_PRIME256V1)?;
                PKey::from_ec_key(EcKey::generate(&group)?)?
            }
            AlgorithmId::Rsa2048 => PKey::from_rsa(Rsa::generate(2048)?)?,
        };
        let pair = Self::from_pkey(key)?;
        let probe = b"lgrid key self-test";
        if !pair.public.verify(probe, &pair.sign(probe)?) {
            return Err(PkiError::KeySelfTest);
        }
        Ok(pair)
    }

    pub(crate) fn from_pkey(key: PKey<Private>) -> Result<Self> {
        let algorithm = match key.id() {
            Id::EC => {
                let curve = key.ec_key()?.group().curve_name();
                if curve != Some(Nid::X9_62_PRIME256V1) {
                    return Err(PkiError::UnsupportedAlgorithm(format!(
                        "EC curve {curve:?}"
                    )));
                }
                AlgorithmId::EcP256
            }
            Id::RSA => AlgorithmId::Rsa2048,
            other => return Err(PkiError::UnsupportedAlgorithm(format!("{other:?}"))),
        };
        let public = PublicKey {
            der: key.public_key_to_der()?,
        };
        Ok(KeyPair {
            key,
            algorithm,
            public,
        })
    }

    /// Reads a PKCS#8, SEC1 or PKCS#1 private key in PEM form.
    pub fn from_pem(pem: &[u8]) -> Result<Self> {
        let key =
            PKey::private_key_from_pem(pem).map_err(|e| PkiError::malformed("private key", e))?;
        Self::from_pkey(key)
    }

    pub fn algorithm(&self) -> AlgorithmId {
        self.algorithm
    }

    pub fn public_key(&self) -> &PublicKey {
        &self.public
    }

    pub fn sign(&self, message: &[u8]) -> Result<Vec<u8>> {
        let mut signer = Signer::new(MessageDigest::sha256(), &self.key)?;
        Ok(signer.sign_oneshot_to_vec(message)?)
    }

    /// PKCS#8 PEM of the private key.
    pub fn private_key_pem(&self) -> Result<Vec<u8>> {
        Ok(self.key.private_key_to_pem_pkcs8()?)
    }

    /// PKCS#8 DER of the private key.
    pub fn private_key_der(&self) -> Result<Vec<u8>> {
        Ok(self.key.private_key_to_pkcs8()?)
    }

    /// The secret number alone: the EC private scalar or the RSA private
    /// exponent. Used to scan outbound data for leaks.
    pub fn secret_scalar(&self) -> Result<Vec<u8>> {
        Ok(match self.algorithm {
            AlgorithmId::EcP256 => self.key.ec_key()?.private_key().to_vec(),
            AlgorithmId::Rsa2048 => self.key.rsa()?.d().to_vec(),
        })
    }

    pub(crate) fn pkey(&self) -> &PKey<Private> {
        &self.key
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("algorithm", &self.algorithm)
            .field("public", &self.public)
            .finish_non_exhaustive()
    }
}
