//! PKCS#12 to PEM conversion for the user's personal credential.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use openssl::pkcs12::Pkcs12;

use crate::cert::Certificate;
use crate::error::{PkiError, Result};
use crate::keys::KeyPair;

pub const USER_CERT_FILE: &str = "usercert.pem";
pub const USER_KEY_FILE: &str = "userkey.pem";

/// A user certificate and its private key, both decoded.
#[derive(Debug, Clone)]
pub struct UserCredential {
    pub cert: Certificate,
    pub key: KeyPair,
}

impl UserCredential {
    pub fn cert_pem(&self) -> String {
        self.cert.to_pem()
    }

    pub fn key_pem(&self) -> Result<Vec<u8>> {
        self.key.private_key_pem()
    }

    pub fn load(cert_path: &Path, key_path: &Path) -> Result<Self> {
        let cert = Certificate::from_pem(&fs::read(cert_path)?)?;
        let key = KeyPair::from_pem(&fs::read(key_path)?)?;
        if cert.public_key() != key.public_key() {
            return Err(PkiError::KeyMismatch);
        }
        Ok(UserCredential { cert, key })
    }

    /// Writes `usercert.pem` (0644) and `userkey.pem` (0600) into `dir`.
    /// The key file is created with owner-only permissions from the start.
    pub fn write_pem_pair(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let cert_path = dir.join(USER_CERT_FILE);
        let key_path = dir.join(USER_KEY_FILE);
        write_private(&key_path, &self.key_pem()?)?;
        fs::write(&cert_path, self.cert_pem())?;
        Ok((cert_path, key_path))
    }
}

/// Creates (or truncates) `path` with mode 0600 and writes `bytes`.
pub fn write_private(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut options = fs::OpenOptions::new();
    options.write(true).create(true).truncate(true);
    #[cfg(unix)]
    {
        use std::os::unix::fs::{OpenOptionsExt, PermissionsExt};
        options.mode(0o600);
        let mut file = options.open(path)?;
        file.set_permissions(fs::Permissions::from_mode(0o600))?;
        file.write_all(bytes)?;
    }
    #[cfg(not(unix))]
    {
        options.open(path)?.write_all(bytes)?;
    }
    Ok(())
}

/// Decodes a PKCS#12 container into the user certificate and key.
pub fn convert_credential_container(p12: &[u8], passphrase: &str) -> Result<UserCredential> {
    let container =
        Pkcs12::from_der(p12).map_err(|e| PkiError::malformed("PKCS#12 container", e))?;
    let parsed = container.parse2(passphrase).map_err(|e| {
        if e.errors().iter().any(|err| {
            err.reason()
                .is_some_and(|r| r.contains("mac verify failure"))
        }) {
            PkiError::WrongPassphrase
        } else {
            PkiError::malformed("PKCS#12 container", e)
        }
    })?;
    let key = parsed.pkey.ok_or(PkiError::MissingKey)?;
    let cert = parsed.cert.ok_or(PkiError::MissingCertificate)?;
    let cert = Certificate::from_der(&cert.to_der()?)?;
    let key = KeyPair::from_pkey(key)?;
    if cert.public_key() != key.public_key() {
        return Err(PkiError::KeyMismatch);
    }
    Ok(UserCredential { cert, key })
}
