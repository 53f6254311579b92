//! Symbolic security-protocol goal checking over strand spaces.
//!
//! The library is organized bottom-up:
//!
//! * [`term`] — the sorted free message algebra: atoms, indeterminates,
//!   encryption, tagged concatenation, substitutions, unification and
//!   matching, paths and the ingredient relation.
//! * [`protocol`] — protocol roles as parameterized strands, instantiation,
//!   and the role-node instance relation.
//! * [`skeleton`] — preskeletons, skeletons, origination, hull, and skeleton
//!   homomorphisms.
//! * [`goal`] — the goal language: role predicates, Non, Unq, Col, Preceq,
//!   equality; security claims and goals; Tarskian satisfaction.
//! * [`charskel`] — the characteristic-skeleton construction for a claim.
//! * [`adversary`] — Dolev-Yao derivability and the realized predicate.
//! * [`search`] — bounded search for shapes and goal checking.

pub mod adversary;

/// Bundled example protocols and goals, usable from tests and docs.
pub mod fixtures {
    pub use crate::protocol::{BLANCHET, BLANCHET_FIX};
    pub const GOAL_A_AUTH: &str = include_str!("../fixtures/goal-a-auth.goal");
    pub const GOAL_A_SECRECY: &str = include_str!("../fixtures/goal-a-secrecy.goal");
    pub const GOAL_B_AUTH: &str = include_str!("../fixtures/goal-b-auth.goal");
    pub const GOAL_B_AUTH_WEAK: &str = include_str!("../fixtures/goal-b-auth-weak.goal");
    pub const GOAL_B_SECRECY: &str = include_str!("../fixtures/goal-b-secrecy.goal");
    pub const VERDICT_SCHEMA: &str = include_str!("../schema/verdict.schema.json");
}
pub mod charskel;
pub mod dot;
pub mod goal;
pub mod protocol;
pub mod report;
pub mod search;
pub mod sexpr;
pub mod skeleton;
pub mod term;
