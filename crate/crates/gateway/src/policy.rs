//! Virtual-organization authorization: which DNs belong to which VOs and
//! what each VO may do. Everything not granted is denied.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use lgrid_pki::DistinguishedName;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operation {
    Submit,
    Status,
    Output,
    Cancel,
}

impl Operation {
    pub const ALL: [Operation; 4] = [
        Operation::Submit,
        Operation::Status,
        Operation::Output,
        Operation::Cancel,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Operation::Submit => "submit",
            Operation::Status => "status",
            Operation::Output => "output",
            Operation::Cancel => "cancel",
        }
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Operation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Operation::ALL
            .into_iter()
            .find(|op| op.as_str() == s)
            .ok_or_else(|| format!("unknown operation {s:?}"))
    }
}

/// DNs matching `pattern` are members of `vos`. In a pattern `*` matches
/// any run of characters, `?` exactly one; everything else is literal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MemberRule {
    pub pattern: String,
    pub vos: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoGrant {
    pub operations: Vec<Operation>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoPolicy {
    #[serde(default)]
    pub members: Vec<MemberRule>,
    #[serde(default)]
    pub vos: BTreeMap<String, VoGrant>,
}

/// Why a request was refused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DenyReason {
    InvalidToken,
    NoVo,
    OperationNotPermitted,
    ProxyExpired,
}

impl DenyReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DenyReason::InvalidToken => "invalid-token",
            DenyReason::NoVo => "no-vo",
            DenyReason::OperationNotPermitted => "operation-not-permitted",
            DenyReason::ProxyExpired => "proxy-expired",
        }
    }
}

impl fmt::Display for DenyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn glob_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    let (mut pi, mut ti) = (0, 0);
    let mut backtrack: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && (p[pi] == '?' || p[pi] == t[ti]) {
            pi += 1;
            ti += 1;
        } else if pi < p.len() && p[pi] == '*' {
            backtrack = Some((pi, ti));
            pi += 1;
        } else if let Some((star, matched)) = backtrack {
            pi = star + 1;
            ti = matched + 1;
            backtrack = Some((star, matched + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&c| c == '*')
}

impl VoPolicy {
    /// A policy granting every operation in `vo` to DNs matching `pattern`.
    pub fn allow_all(pattern: &str, vo: &str) -> Self {
        VoPolicy {
            members: vec![MemberRule {
                pattern: pattern.to_owned(),
                vos: vec![vo.to_owned()],
            }],
            vos: BTreeMap::from([(
                vo.to_owned(),
                VoGrant {
                    operations: Operation::ALL.to_vec(),
                },
            )]),
        }
    }

    /// VOs the DN belongs to, in rule order, without repeats.
    pub fn vos_of(&self, dn: &DistinguishedName) -> Vec<&str> {
        let text = dn.to_string();
        let mut out: Vec<&str> = Vec::new();
        for rule in &self.members {
            if glob_match(&rule.pattern, &text) {
                for vo in &rule.vos {
                    if !out.contains(&vo.as_str()) {
                        out.push(vo);
                    }
                }
            }
        }
        out
    }

    /// Checks membership and the VO's grant. With no VO requested the first
    /// membership granting the operation is used. Returns the VO on success.
    pub fn check(
        &self,
        dn: &DistinguishedName,
        vo: Option<&str>,
        op: Operation,
    ) -> Result<String, DenyReason> {
        let memberships = self.vos_of(dn);
        let grants = |name: &str| {
            self.vos
                .get(name)
                .is_some_and(|g| g.operations.contains(&op))
        };
        match vo {
            Some(requested) if !memberships.contains(&requested) => Err(DenyReason::NoVo),
            Some(requested) if grants(requested) => Ok(requested.to_owned()),
            Some(_) => Err(DenyReason::OperationNotPermitted),
            None if memberships.is_empty() => Err(DenyReason::NoVo),
            None => memberships
                .into_iter()
                .find(|name| grants(name))
                .map(str::to_owned)
                .ok_or(DenyReason::OperationNotPermitted),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dn(s: &str) -> DistinguishedName {
        s.parse().unwrap()
    }

    #[test]
    fn globbing() {
        assert!(glob_match("/C=IT/*", "/C=IT/O=INFN/CN=x"));
        assert!(glob_match("*", ""));
        assert!(glob_match("/CN=?ob", "/CN=Bob"));
        assert!(!glob_match("/CN=?ob", "/CN=Boob"));
        assert!(glob_match("/C=*/CN=A*e", "/C=IT/O=x/CN=Alice"));
        assert!(!glob_match("/C=IT/*", "/C=UK/CN=x"));
    }

    #[test]
    fn deny_by_default_and_per_vo_operations() {
        let mut policy = VoPolicy::allow_all("/C=IT/*", "gilda");
        policy.members.push(MemberRule {
            pattern: "/C=UK/*".into(),
            vos: vec!["viewers".into()],
        });
        policy.vos.insert(
            "viewers".into(),
            VoGrant {
                operations: vec![Operation::Status],
            },
        );

        assert_eq!(
            policy.check(&dn("/C=IT/CN=A"), None, Operation::Submit),
            Ok("gilda".into())
        );
        assert_eq!(
            policy.check(&dn("/C=FR/CN=B"), None, Operation::Status),
            Err(DenyReason::NoVo)
        );
        assert_eq!(
            policy.check(&dn("/C=UK/CN=C"), None, Operation::Status),
            Ok("viewers".into())
        );
        assert_eq!(
            policy.check(&dn("/C=UK/CN=C"), None, Operation::Submit),
            Err(DenyReason::OperationNotPermitted)
        );
        assert_eq!(
            policy.check(&dn("/C=UK/CN=C"), Some("gilda"), Operation::Status),
            Err(DenyReason::NoVo)
        );
        assert_eq!(
            VoPolicy::default().check(&dn("/CN=x"), None, Operation::Status),
            Err(DenyReason::NoVo)
        );
    }
}
