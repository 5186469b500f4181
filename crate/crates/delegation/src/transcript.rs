//! Records of what crossed the wire during an exchange.

use chrono::{DateTime, Utc};
use lgrid_pki::KeyPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Sent,
    Received,
}

#[derive(Debug, Clone)]
pub struct TranscriptEntry {
    pub direction: Direction,
    pub kind: String,
    /// Exact encoded frame as it crossed the wire.
    pub payload: Vec<u8>,
    pub at: DateTime<Utc>,
}

impl TranscriptEntry {
    pub fn byte_len(&self) -> usize {
        self.payload.len()
    }
}

/// Ordered log of frames on one or more connections. A round trip is a
/// request followed by its response.
#[derive(Debug, Clone, Default)]
pub struct Transcript {
    entries: Vec<TranscriptEntry>,
    connections: u32,
    round_trips: u32,
}

impl Transcript {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record_connection(&mut self) {
        self.connections += 1;
    }

    pub fn record_sent(&mut self, kind: &str, payload: &[u8]) {
        self.push(Direction::Sent, kind, payload);
    }

    pub fn record_received(&mut self, kind: &str, payload: &[u8]) {
        if self
            .entries
            .last()
            .is_some_and(|e| e.direction == Direction::Sent)
        {
            self.round_trips += 1;
        }
        self.push(Direction::Received, kind, payload);
    }

    fn push(&mut self, direction: Direction, kind: &str, payload: &[u8]) {
        self.entries.push(TranscriptEntry {
            direction,
            kind: kind.to_owned(),
            payload: payload.to_vec(),
            at: Utc::now(),
        });
    }

    pub fn entries(&self) -> &[TranscriptEntry] {
        &self.entries
    }

    pub fn connections(&self) -> u32 {
        self.connections
    }

    pub fn round_trips(&self) -> u32 {
        self.round_trips
    }

    pub fn total_bytes(&self) -> usize {
        self.entries.iter().map(TranscriptEntry::byte_len).sum()
    }

    pub fn kinds(&self) -> Vec<&str> {
        self.entries.iter().map(|e| e.kind.as_str()).collect()
    }

    /// Appends another transcript (e.g. a second connection of one flow).
    pub fn extend(&mut self, other: Transcript) {
        self.connections += other.connections;
        self.round_trips += other.round_trips;
        self.entries.extend(other.entries);
    }

    /// Number of payloads containing `needle` as a byte substring.
    pub fn occurrences(&self, needle: &[u8]) -> usize {
        if needle.is_empty() {
            return 0;
        }
        self.entries
            .iter()
            .filter(|e| e.payload.windows(needle.len()).any(|w| w == needle))
            .count()
    }

    /// Scans every payload for the private key in any of the encodings a
    /// frame could carry: PKCS#8 DER and PEM (raw and JSON-escaped), hex,
    /// and the bare secret scalar raw, in hex and in base64 at each of the
    /// three byte alignments.
    pub fn key_leak_hits(&self, key: &KeyPair) -> usize {
        self.leak_needles(key)
            .iter()
            .map(|n| self.occurrences(n))
            .sum()
    }

    fn leak_needles(&self, key: &KeyPair) -> Vec<Vec<u8>> {
        let der = key.private_key_der().expect("key encodes");
        let pem = key.private_key_pem().expect("key encodes");
        let secret = key.secret_scalar().expect("key encodes");
        let escaped =
            serde_json::to_string(&String::from_utf8_lossy(&pem)).expect("string encodes");
        let mut needles = vec![
            der.clone(),
            pem.clone(),
            escaped.trim_matches('"').as_bytes().to_vec(),
            hex::encode(&der).into_bytes(),
            secret.clone(),
            hex::encode(&secret).into_bytes(),
        ];
        for shift in 0..3 {
            let encoded = openssl::base64::encode_block(&secret[shift..]);
            // Drop the last group, which depends on what follows the secret.
            let stable = (encoded.len() / 4).saturating_sub(1) * 4;
            needles.push(encoded.as_bytes()[..stable].to_vec());
        }
        needles
    }
}
