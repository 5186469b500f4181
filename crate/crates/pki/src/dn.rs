//! Distinguished names in the slash-separated one-line form
//! (`/C=IT/O=Test/CN=Alice`) and the DN-derived user identifier.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{PkiError, Result};

/// Attribute types accepted in a DN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AttributeType {
    C,
    O,
    OU,
    CN,
    L,
    ST,
    DC,
    #[serde(rename = "emailAddress")]
    EmailAddress,
}

impl AttributeType {
    pub const ALL: [AttributeType; 8] = [
        AttributeType::C,
        AttributeType::O,
        AttributeType::OU,
        AttributeType::CN,
        AttributeType::L,
        AttributeType::ST,
        AttributeType::DC,
        AttributeType::EmailAddress,
    ];

    pub fn short_name(self) -> &'static str {
        match self {
            AttributeType::C => "C",
            AttributeType::O => "O",
            AttributeType::OU => "OU",
            AttributeType::CN => "CN",
            AttributeType::L => "L",
            AttributeType::ST => "ST",
            AttributeType::DC => "DC",
            AttributeType::EmailAddress => "emailAddress",
        }
    }

    /// Dotted OID of the attribute, as it appears in certificates.
    pub fn oid(self) -> &'static str {
        match self {
            AttributeType::C => "2.5.4.6",
            AttributeType::O => "2.5.4.10",
            AttributeType::OU => "2.5.4.11",
            AttributeType::CN => "2.5.4.3",
            AttributeType::L => "2.5.4.7",
            AttributeType::ST => "2.5.4.8",
            AttributeType::DC => "0.9.2342.19200300.100.1.25",
            AttributeType::EmailAddress => "1.2.840.113549.1.9.1",
        }
    }

    pub fn from_oid(oid: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.oid() == oid)
    }
}

impl FromStr for AttributeType {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        Self::ALL
            .into_iter()
            .find(|t| t.short_name() == s)
            .ok_or(())
    }
}

impl fmt::Display for AttributeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Rdn {
    pub attr: AttributeType,
    pub value: String,
}

/// An ordered, non-empty list of relative distinguished names.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DistinguishedName {
    rdns: Vec<Rdn>,
}

impl DistinguishedName {
    pub fn new(rdns: Vec<Rdn>) -> Result<Self> {
        if rdns.is_empty() {
            return Err(PkiError::DnSyntax {
                segment: String::new(),
                reason: "no RDNs",
            });
        }
        if let Some(bad) = rdns.iter().find(|r| r.value.is_empty()) {
            return Err(PkiError::DnSyntax {
                segment: format!("{}=", bad.attr),
                reason: "empty value",
            });
        }
        Ok(DistinguishedName { rdns })
    }

    /// Parses the canonical `/TYPE=value/...` form. `/` and `\` inside a
    /// value are escaped with a backslash.
    pub fn parse(text: &str) -> Result<Self> {
        let rest = text.strip_prefix('/').ok_or_else(|| PkiError::DnSyntax {
            segment: text.to_owned(),
            reason: "DN must start with '/'",
        })?;

        let mut segments = Vec::new();
        let mut current = String::new();
        let mut raw = String::new();
        let mut chars = rest.chars();
        while let Some(c) = chars.next() {
            match c {
                '\\' => {
                    let escaped = chars.next().ok_or_else(|| PkiError::DnSyntax {
                        segment: format!("{raw}\\"),
                        reason: "dangling escape",
                    })?;
                    // Mark escaped chars so '=' splitting below ignores them.
                    current.push('\u{0}');
                    current.push(escaped);
                    raw.push('\\');
                    raw.push(escaped);
                }
                '/' => {
                    segments.push((std::mem::take(&mut current), std::mem::take(&mut raw)));
                }
                c => {
                    current.push(c);
                    raw.push(c);
                }
            }
        }
        segments.push((current, raw));

        let rdns = segments
            .into_iter()
            .map(|(marked, raw)| parse_segment(&marked, &raw))
            .collect::<Result<Vec<_>>>()?;
        DistinguishedName::new(rdns)
    }

    pub fn rdns(&self) -> &[Rdn] {
        &self.rdns
    }

    /// A copy of this DN with one more CN appended.
    pub fn with_cn(&self, value: impl Into<String>) -> Self {
        let mut rdns = self.rdns.clone();
        rdns.push(Rdn {
            attr: AttributeType::CN,
            value: value.into(),
        });
        DistinguishedName { rdns }
    }

    /// Splits off a terminal CN, returning the parent DN and the CN value.
    pub fn split_terminal_cn(&self) -> Option<(DistinguishedName, &str)> {
        let (last, parent) = self.rdns.split_last()?;
        if last.attr != AttributeType::CN || parent.is_empty() {
            return None;
        }
        Some((
            DistinguishedName {
                rdns: parent.to_vec(),
            },
            last.value.as_str(),
        ))
    }

    /// True when `self` is `parent` extended by exactly one CN.
    pub fn extends_by_one_cn(&self, parent: &DistinguishedName) -> bool {
        self.split_terminal_cn().is_some_and(|(p, _)| &p == parent)
    }

    pub fn user_id(&self) -> UserId {
        UserId::derive(self)
    }
}

fn parse_segment(marked: &str, raw: &str) -> Result<Rdn> {
    let err = |reason| PkiError::DnSyntax {
        segment: raw.to_owned(),
        reason,
    };
    if marked.is_empty() {
        return Err(err("empty segment"));
    }
    let (ty, value) = marked.split_once('=').ok_or_else(|| err("missing '='"))?;
    if ty.contains('\u{0}') {
        return Err(err("escape in attribute type"));
    }
    let attr = ty
        .parse::<AttributeType>()
        .map_err(|_| err("unknown attribute type"))?;
    let value = value.replace('\u{0}', "");
    if value.is_empty() {
        return Err(err("empty value"));
    }
    Ok(Rdn { attr, value })
}

impl fmt::Display for DistinguishedName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for rdn in &self.rdns {
            write!(f, "/{}=", rdn.attr)?;
            for c in rdn.value.chars() {
                if c == '/' || c == '\\' {
                    f.write_str("\\")?;
                }
                write!(f, "{c}")?;
            }
        }
        Ok(())
    }
}

impl FromStr for DistinguishedName {
    type Err = PkiError;

    fn from_str(s: &str) -> Result<Self> {
        DistinguishedName::parse(s)
    }
}

impl Serialize for DistinguishedName {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DistinguishedName {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        DistinguishedName::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Filesystem-safe user identifier: the first 128 bits of SHA-256 over the
/// canonical DN text, lowercase hex.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(String);

impl UserId {
    pub const LEN: usize = 32;

    pub fn derive(dn: &DistinguishedName) -> Self {
        let digest = openssl::sha::sha256(dn.to_string().as_bytes());
        UserId(hex::encode(&digest[..Self::LEN / 2]))
    }

    /// Accepts an already-derived id (e.g. a directory name read back from disk).
    pub fn from_hex(text: &str) -> Option<Self> {
        let ok = text.len() == Self::LEN
            && text
                .bytes()
                .all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b));
        ok.then(|| UserId(text.to_owned()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}
