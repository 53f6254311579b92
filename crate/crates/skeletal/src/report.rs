//! Serializable records for machine-readable output. The JSON shape is
//! documented by `schema/verdict.schema.json`.

use serde::Serialize;
use std::collections::BTreeMap;

use crate::protocol::Dir;
use crate::search::{GoalCheck, SearchBounds, ShapeResult, Verdict};
use crate::skeleton::Skeleton;

#[derive(Debug, Clone, Serialize)]
pub struct StrandRecord {
    pub role: String,
    pub length: usize,
    /// Role parameter values, rendered as message text.
    pub binding: BTreeMap<String, String>,
    pub events: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SkeletonRecord {
    pub strands: Vec<StrandRecord>,
    /// Order edges as `[[strand, pos], [strand, pos]]`, 1-based
    /// positions.
    pub order: Vec<[[usize; 2]; 2]>,
    pub non: Vec<String>,
    pub unique: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsRecord {
    pub max_strands: usize,
    pub max_fresh: usize,
    pub max_states: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerdictRecord {
    pub verdict: String,
    pub shapes: Vec<SkeletonRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub counterexample: Option<SkeletonRecord>,
    pub bounds: BoundsRecord,
    pub exhausted: bool,
}

pub fn skeleton_record(sk: &Skeleton, prot: &crate::protocol::Protocol) -> SkeletonRecord {
    SkeletonRecord {
        strands: sk
            .strands
            .iter()
            .map(|s| {
                let mut binding = BTreeMap::new();
                if let Some(role) = prot.role(&s.role_name) {
                    if let Some(sub) =
                        crate::protocol::instance_of(&s.events, role, s.length)
                    {
                        for (p, ps) in role.params_through(s.length) {
                            let v = match ps {
                                crate::protocol::ParamSort::Atom(sort) => sub.apply(
                                    &crate::term::Message::Atom(crate::term::Atom::base(p.clone(), sort)),
                                ),
                                crate::protocol::ParamSort::Mesg => {
                                    sub.apply(&crate::term::Message::Ind(p.clone()))
                                }
                            };
                            binding.insert(p, v.to_string());
                        }
                    }
                }
                StrandRecord {
                    role: s.role_name.clone(),
                    length: s.length,
                    binding,
                    events: s
                        .events
                        .iter()
                        .map(|(d, m)| {
                            let sign = match d {
                                Dir::Send => '+',
                                Dir::Recv => '-',
                            };
                            format!("{sign}{m}")
                        })
                        .collect(),
                }
            })
            .collect(),
        order: sk
            .order
            .iter()
            .map(|(a, b)| [[a.strand, a.pos], [b.strand, b.pos]])
            .collect(),
        non: sk.non.iter().map(|a| a.to_string()).collect(),
        unique: sk.unique.iter().map(|a| a.to_string()).collect(),
    }
}

fn bounds_record(b: &SearchBounds) -> BoundsRecord {
    BoundsRecord {
        max_strands: b.max_added_strands,
        max_fresh: b.max_fresh_atoms,
        max_states: b.max_states,
    }
}

pub fn verdict_record(check: &GoalCheck, prot: &crate::protocol::Protocol) -> VerdictRecord {
    VerdictRecord {
        verdict: match check.verdict {
            Verdict::Achieved => "achieved",
            Verdict::Counterexample => "counterexample",
            Verdict::BoundExceeded => "bound_exceeded",
        }
        .to_string(),
        shapes: check.shapes.iter().map(|(_, sk)| skeleton_record(sk, prot)).collect(),
        counterexample: check
            .counterexample
            .as_ref()
            .map(|(_, sk)| skeleton_record(sk, prot)),
        bounds: bounds_record(&check.bounds),
        exhausted: check.exhausted,
    }
}

/// Record for a plain shape search (no goal verdict).
pub fn shapes_record(
    result: &ShapeResult,
    bounds: &SearchBounds,
    prot: &crate::protocol::Protocol,
) -> VerdictRecord {
    VerdictRecord {
        verdict: if result.exhausted { "achieved" } else { "bound_exceeded" }.to_string(),
        shapes: result.shapes.iter().map(|(_, sk)| skeleton_record(sk, prot)).collect(),
        counterexample: None,
        bounds: bounds_record(bounds),
        exhausted: result.exhausted,
    }
}
