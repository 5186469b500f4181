//! The token cache under `~/.lgrid`.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const CACHE_DIR: &str = ".lgrid";
pub const TOKEN_FILE: &str = "token";
/// Trust anchors used when `--ca` is not given.
pub const DEFAULT_CA_FILE: &str = "ca.pem";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CachedToken {
    /// The gateway that issued the token; it is useless elsewhere.
    pub gateway: String,
    pub token: String,
    pub user_dn: String,
    pub proxy_fingerprint: String,
    pub not_after: DateTime<Utc>,
}

pub fn cache_dir(home: &Path) -> PathBuf {
    home.join(CACHE_DIR)
}

pub fn token_path(home: &Path) -> PathBuf {
    cache_dir(home).join(TOKEN_FILE)
}

/// Writes the token file with owner-only permissions.
pub fn store(home: &Path, token: &CachedToken) -> CliResult<PathBuf> {
    let dir = cache_dir(home);
    std::fs::create_dir_all(&dir).map_err(|e| CliError::failure(&dir.display().to_string(), e))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let _ = std::fs::set_permissions(&dir, std::fs::Permissions::from_mode(0o700));
    }
    let path = token_path(home);
    let json = serde_json::to_vec_pretty(token).expect("serializable");
    lgrid_pki::write_private(&path, &json)
        .map_err(|e| CliError::failure(&path.display().to_string(), e))?;
    Ok(path)
}

/// The cached token for `gateway`, if one was stored for it.
pub fn load(home: &Path, gateway: &str) -> CliResult<CachedToken> {
    let path = token_path(home);
    let bytes = std::fs::read(&path)
        .map_err(|_| CliError::Failure("no cached token; run `lgrid delegate` first".into()))?;
    let cached: CachedToken = serde_json::from_slice(&bytes)
        .map_err(|e| CliError::failure(&path.display().to_string(), e))?;
    if cached.gateway != gateway {
        return Err(CliError::Failure(format!(
            "cached token belongs to {}, not {gateway}; run `lgrid delegate` first",
            cached.gateway
        )));
    }
    Ok(cached)
}
