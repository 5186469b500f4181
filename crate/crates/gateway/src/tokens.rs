//! Bearer tokens binding HTTP requests to a delegated identity.
//!
//! Only SHA-256 digests of tokens are kept, in memory and in the append-only
//! journal, so neither reveals a usable token.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use lgrid_pki::{DistinguishedName, UserId};
use openssl::sha::sha256;
use rand::RngCore;
use serde::{Deserialize, Serialize};

/// Identity a token stands for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiSession {
    pub user_id: UserId,
    pub dn: DistinguishedName,
    pub issued_at: DateTime<Utc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct JournalLine {
    at: DateTime<Utc>,
    event: String,
    token_sha256: String,
    user_id: UserId,
    dn: DistinguishedName,
}

#[derive(Debug)]
pub struct TokenTable {
    sessions: Mutex<HashMap<[u8; 32], ApiSession>>,
    journal: Option<PathBuf>,
}

fn digest(token: &str) -> [u8; 32] {
    sha256(token.as_bytes())
}

impl TokenTable {
    pub fn in_memory() -> Self {
        TokenTable {
            sessions: Mutex::default(),
            journal: None,
        }
    }

    /// Opens `journal`, replaying earlier issuance lines. A torn final line
    /// is ignored.
    pub fn with_journal(journal: &Path) -> std::io::Result<Self> {
        let mut sessions = HashMap::new();
        if journal.exists() {
            for line in std::fs::read_to_string(journal)?.lines() {
                let Ok(entry) = serde_json::from_str::<JournalLine>(line) else {
                    continue;
                };
                let Some(key) = hex::decode(&entry.token_sha256)
                    .ok()
                    .and_then(|b| <[u8; 32]>::try_from(b).ok())
                else {
                    continue;
                };
                if entry.event == "issued" {
                    sessions.insert(
                        key,
                        ApiSession {
                            user_id: entry.user_id,
                            dn: entry.dn,
                            issued_at: entry.at,
                        },
                    );
                }
            }
        }
        Ok(TokenTable {
            sessions: Mutex::new(sessions),
            journal: Some(journal.to_path_buf()),
        })
    }

    /// Issues a fresh random 128-bit token, journaled before it is returned.
    pub fn issue(&self, dn: &DistinguishedName, now: DateTime<Utc>) -> std::io::Result<String> {
        let mut raw = [0u8; 16];
        rand::thread_rng().fill_bytes(&mut raw);
        let token = hex::encode(raw);
        let key = digest(&token);
        let session = ApiSession {
            user_id: dn.user_id(),
            dn: dn.clone(),
            issued_at: now,
        };
        let mut sessions = self.sessions.lock().expect("token table poisoned");
        if let Some(path) = &self.journal {
            let line = JournalLine {
                at: now,
                event: "issued".into(),
                token_sha256: hex::encode(key),
                user_id: session.user_id.clone(),
                dn: dn.clone(),
            };
            let mut file = OpenOptions::new().create(true).append(true).open(path)?;
            file.write_all(
                format!(
                    "{}\n",
                    serde_json::to_string(&line).map_err(std::io::Error::other)?
                )
                .as_bytes(),
            )?;
            file.sync_data()?;
        }
        sessions.insert(key, session);
        Ok(token)
    }

    pub fn lookup(&self, token: &str) -> Option<ApiSession> {
        self.sessions
            .lock()
            .expect("token table poisoned")
            .get(&digest(token))
            .cloned()
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("token table poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
