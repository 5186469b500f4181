//! Expansion of parametric jobs and collections into concrete jobs.

use crate::jdl::{Attributes, JdlValue, JobDescriptor, JobKind, ParameterSpec};

pub const PARAM_PLACEHOLDER: &str = "_PARAM_";

/// Attributes that describe the shape of a job rather than the job itself;
/// they are neither inherited by nodes nor kept on expanded jobs.
const STRUCTURAL: [&str; 6] = [
    "Type",
    "JobType",
    "Nodes",
    "Parameters",
    "ParameterStart",
    "ParameterStep",
];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ExpandError {
    #[error("ParameterStep must be positive, got {0}")]
    NonPositiveStep(i64),
    #[error("Parameters ({bound}) must exceed ParameterStart ({start})")]
    EmptyRange { start: i64, bound: i64 },
    #[error("empty parameter list")]
    EmptyValueList,
    #[error("parameter values must be strings or integers, got {0}")]
    BadValue(String),
    #[error("collection has no nodes")]
    EmptyCollection,
    #[error("descriptor of kind {0:?} lacks its specification")]
    Incomplete(JobKind),
}

/// Expands a descriptor into Normal descriptors, in value order for
/// parametric jobs and node order for collections. Pure.
pub fn expand(descriptor: &JobDescriptor) -> Result<Vec<JobDescriptor>, ExpandError> {
    match descriptor.kind {
        JobKind::Normal => Ok(vec![concrete(descriptor.attributes.clone())]),
        JobKind::Parametric => {
            let spec = descriptor
                .parameters
                .as_ref()
                .ok_or(ExpandError::Incomplete(JobKind::Parametric))?;
            Ok(parameter_values(spec)?
                .iter()
                .map(|value| {
                    concrete(
                        descriptor
                            .attributes
                            .iter()
                            .map(|(n, v)| (n.to_owned(), v.substitute(PARAM_PLACEHOLDER, value)))
                            .collect(),
                    )
                })
                .collect())
        }
        JobKind::Collection => {
            if descriptor.nodes.is_empty() {
                return Err(ExpandError::EmptyCollection);
            }
            let mut jobs = Vec::new();
            for node in &descriptor.nodes {
                jobs.extend(expand(&inherit(&descriptor.attributes, node))?);
            }
            Ok(jobs)
        }
    }
}

/// The decimal or string form of each parameter value.
pub fn parameter_values(spec: &ParameterSpec) -> Result<Vec<String>, ExpandError> {
    match spec {
        ParameterSpec::Range { step, .. } if *step <= 0 => Err(ExpandError::NonPositiveStep(*step)),
        ParameterSpec::Range { start, bound, .. } if bound <= start => {
            Err(ExpandError::EmptyRange {
                start: *start,
                bound: *bound,
            })
        }
        ParameterSpec::Range { start, step, bound } => {
            let mut values = Vec::new();
            let mut v = *start;
            while v < *bound {
                values.push(v.to_string());
                v = match v.checked_add(*step) {
                    Some(next) => next,
                    None => break,
                };
            }
            Ok(values)
        }
        ParameterSpec::Values(items) if items.is_empty() => Err(ExpandError::EmptyValueList),
        ParameterSpec::Values(items) => items
            .iter()
            .map(|item| match item {
                JdlValue::Str(s) => Ok(s.clone()),
                JdlValue::Int(v) => Ok(v.to_string()),
                other => Err(ExpandError::BadValue(other.to_string())),
            })
            .collect(),
    }
}

/// A node sees the collection's non-structural attributes unless it sets
/// them itself.
fn inherit(parent: &Attributes, node: &JobDescriptor) -> JobDescriptor {
    let mut merged = node.clone();
    for (name, value) in parent.iter() {
        if !is_structural(name) && !merged.attributes.contains(name) {
            merged.attributes.set(name, value.clone());
        }
    }
    merged
}

fn is_structural(name: &str) -> bool {
    STRUCTURAL.iter().any(|s| s.eq_ignore_ascii_case(name))
}

fn concrete(attributes: Attributes) -> JobDescriptor {
    let attributes = attributes
        .iter()
        .filter(|(n, _)| !is_structural(n))
        .map(|(n, v)| (n.to_owned(), v.clone()))
        .collect();
    JobDescriptor {
        kind: JobKind::Normal,
        attributes,
        nodes: Vec::new(),
        parameters: None,
    }
}
