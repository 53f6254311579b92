//! Building the characteristic skeleton of a security claim: the most
//! general skeleton-and-assignment pair satisfying it, obtained by a
//! fold over the conjuncts with one handler per predicate.

use crate::goal::{
    eval_term, Assignment, AtomicFormula, GoalTerm, SecurityClaim, Value,
};
use crate::protocol::{instantiate, ParamSort, Protocol};
use crate::skeleton::{hull, merge_strands, NodeRef, SkelHom, Skeleton};
use crate::term::{Atom, FreshSource, Message, Subst};

/// The running state of the fold.
#[derive(Debug, Clone)]
pub struct CsState {
    pub skeleton: Skeleton,
    pub sigma: Assignment,
    fresh: FreshSource,
}

impl CsState {
    pub fn new() -> CsState {
        CsState { skeleton: Skeleton::empty(), sigma: Assignment::new(), fresh: FreshSource::new() }
    }
}

impl Default for CsState {
    fn default() -> Self {
        CsState::new()
    }
}

/// Outcome of the construction: a characteristic pair, or a proof
/// obligation that failed (meaning the claim is unsatisfiable).
#[derive(Debug, Clone)]
pub enum CsResult {
    Characteristic { skeleton: Skeleton, sigma: Assignment },
    Unsatisfiable { conjunct: usize, reason: String },
}

/// A malformed claim (sorts or kinds disagree with the protocol); this
/// is an input error, not unsatisfiability.
#[derive(Debug, Clone, thiserror::Error)]
#[error("invalid claim: {0}")]
pub struct CsInputError(pub String);

/// Why a single handler step failed.
enum StepFailure {
    Unsat(String),
    Input(String),
}

/// Map an assignment along a skeleton homomorphism.
pub fn map_assignment(h: &SkelHom, sigma: &Assignment) -> Assignment {
    let mut out = Assignment::new();
    for (x, v) in sigma.iter() {
        match v {
            Value::Node(n) => out.bind_node(x.clone(), h.map_node(*n)),
            Value::Msg(m) => out.bind_msg(x.clone(), h.subst.apply(m)),
        }
    }
    out
}

/// Does this role predicate pass a bare variable to a parameter with
/// no atom sort? Such a predicate cannot determine the variable's sort,
/// so it must run after the predicates that can.
fn defers_var_typing(f: &AtomicFormula, prot: &Protocol) -> bool {
    let AtomicFormula::RolePred { role, args, .. } = f else {
        return false;
    };
    let Some(r) = prot.role(role) else {
        return false;
    };
    args.iter().any(|(p, t)| {
        matches!(t, GoalTerm::Var(_)) && matches!(r.param_sort(p), Some(ParamSort::Mesg))
    })
}

/// Construct the characteristic skeleton of a claim. Conjuncts are
/// processed role-predicates-first (stable partition); within the role
/// predicates, ones that fix the sorts of their argument variables come
/// before ones (like the listener predicate) that accept any message,
/// so the result does not depend on the conjunct order.
pub fn characteristic_skeleton(
    claim: &SecurityClaim,
    prot: &Protocol,
) -> Result<CsResult, CsInputError> {
    let mut ordered: Vec<(usize, &AtomicFormula)> = Vec::new();
    ordered.extend(
        claim
            .conjuncts
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_role_pred() && !defers_var_typing(f, prot)),
    );
    ordered.extend(
        claim
            .conjuncts
            .iter()
            .enumerate()
            .filter(|(_, f)| f.is_role_pred() && defers_var_typing(f, prot)),
    );
    ordered.extend(claim.conjuncts.iter().enumerate().filter(|(_, f)| !f.is_role_pred()));

    let mut state = CsState::new();
    for (idx, f) in ordered {
        let step = match f {
            AtomicFormula::RolePred { .. } => handle_role_predicate(&mut state, f, prot),
            AtomicFormula::Non(t) => handle_non(&mut state, t),
            AtomicFormula::Unq(t) => handle_unq(&mut state, t),
            AtomicFormula::Preceq(m, n) => handle_preceq(&mut state, m, n),
            AtomicFormula::Col(m, n) => handle_col(&mut state, m, n),
            AtomicFormula::Eq(l, r) => {
                // equations are eliminated at parse time; a leftover one
                // is ground and either trivial or unsatisfiable
                match (eval_term(l, &state.sigma), eval_term(r, &state.sigma)) {
                    (Some(a), Some(b)) if a == b => Ok(()),
                    _ => Err(StepFailure::Unsat(format!("equation {l} = {r} has no solution"))),
                }
            }
            AtomicFormula::False => Err(StepFailure::Unsat("conjunct is false".into())),
        };
        match step {
            Ok(()) => {}
            Err(StepFailure::Unsat(reason)) => {
                return Ok(CsResult::Unsatisfiable { conjunct: idx, reason })
            }
            Err(StepFailure::Input(msg)) => return Err(CsInputError(msg)),
        }
    }
    Ok(CsResult::Characteristic { skeleton: state.skeleton, sigma: state.sigma })
}

/// A fresh atom or indeterminate, named after `hint` but distinct from
/// every identifier in the skeleton or the assignment.
fn fresh_value(state: &mut CsState, hint: &str, want: ParamSort) -> Message {
    let used_sk = state.skeleton.used_ids();
    let used_sigma: std::collections::BTreeSet<String> = state
        .sigma
        .iter()
        .filter_map(|(_, v)| match v {
            Value::Msg(m) => Some(m),
            Value::Node(_) => None,
        })
        .flat_map(|m| {
            let mut atoms = Vec::new();
            m.atoms(&mut atoms);
            let mut ids: Vec<String> = atoms
                .iter()
                .map(|a| match a.base_atom() {
                    Atom::Base { id, .. } => id,
                    _ => unreachable!("base_atom returns a base"),
                })
                .collect();
            let mut inds = Vec::new();
            m.indeterminates(&mut inds);
            ids.extend(inds);
            ids
        })
        .collect();
    let id = state
        .fresh
        .fresh_id(hint, &|cand| used_sk.contains(cand) || used_sigma.contains(cand));
    match want {
        ParamSort::Atom(s) => Message::Atom(Atom::base(id, s)),
        ParamSort::Mesg => Message::Ind(id),
    }
}

/// Evaluate a role-predicate argument, inventing fresh values for
/// variables not yet assigned. The expected parameter sort drives both
/// the sort check on bound values and the sort of fresh atoms.
fn eval_or_fresh(
    t: &GoalTerm,
    want: ParamSort,
    state: &mut CsState,
) -> Result<Message, StepFailure> {
    match t {
        GoalTerm::Var(x) => {
            if let Some(v) = state.sigma.get(x) {
                let m = match v {
                    Value::Msg(m) => m.clone(),
                    Value::Node(_) => {
                        return Err(StepFailure::Input(format!(
                            "node variable `{x}` used as a message argument"
                        )))
                    }
                };
                match (&m, want) {
                    (_, ParamSort::Mesg) => Ok(m),
                    (Message::Atom(a), ParamSort::Atom(s)) if a.sort() == s => Ok(m),
                    _ => Err(StepFailure::Input(format!(
                        "`{x}` = {m} does not fit a parameter of sort {want}"
                    ))),
                }
            } else {
                let m = fresh_value(state, x, want);
                state.sigma.bind_msg(x.clone(), m.clone());
                Ok(m)
            }
        }
        GoalTerm::Sk(inner) | GoalTerm::Pk(inner) => {
            match want {
                ParamSort::Atom(crate::term::Sort::Akey) | ParamSort::Mesg => {}
                other => {
                    return Err(StepFailure::Input(format!(
                        "key term {t} does not fit a parameter of sort {other}"
                    )))
                }
            }
            let name = match eval_or_fresh(
                inner,
                ParamSort::Atom(crate::term::Sort::Name),
                state,
            )? {
                Message::Atom(Atom::Base { id, sort: crate::term::Sort::Name }) => id,
                other => {
                    return Err(StepFailure::Input(format!(
                        "key constructor applied to non-name {other}"
                    )))
                }
            };
            Ok(Message::Atom(if matches!(t, GoalTerm::Sk(_)) {
                Atom::Sig(name)
            } else {
                Atom::Pub(name)
            }))
        }
        GoalTerm::Inv(inner) => {
            // inversion preserves the sort of an atomic key
            match eval_or_fresh(inner, want, state)? {
                Message::Atom(a) => Ok(Message::Atom(a.invert())),
                other => Ok(other),
            }
        }
    }
}

/// Run the hull on the current skeleton and carry the assignment along.
fn rehull(state: &mut CsState) -> Result<(), StepFailure> {
    let (sk, hom) =
        hull(&state.skeleton).ok_or_else(|| StepFailure::Unsat("hull is undefined".into()))?;
    state.sigma = map_assignment(&hom, &state.sigma);
    state.skeleton = sk;
    Ok(())
}

/// Add the first `index` nodes of a role instance for a role predicate
/// (the listener predicate included), binding fresh values for
/// unassigned argument variables and pointing the node variable at the
/// instance's last node.
fn handle_role_predicate(
    state: &mut CsState,
    f: &AtomicFormula,
    prot: &Protocol,
) -> Result<(), StepFailure> {
    let AtomicFormula::RolePred { role, index, node_var, args } = f else {
        unreachable!("handle_role_predicate requires a role predicate");
    };
    if state.sigma.get(node_var).is_some() {
        return Err(StepFailure::Input(format!(
            "node variable `{node_var}` is already assigned"
        )));
    }
    let r = prot
        .role(role)
        .ok_or_else(|| StepFailure::Input(format!("unknown role `{role}`")))?
        .clone();
    // arguments first (they may share variables with earlier conjuncts),
    // then fresh values for the remaining parameters of the prefix
    let mut binding = Subst::new();
    for (p, t) in args {
        let want = r
            .param_sort(p)
            .ok_or_else(|| StepFailure::Input(format!("unknown parameter `{p}`")))?;
        let v = eval_or_fresh(t, want, state)?;
        bind_param(&mut binding, p, want, &v)?;
    }
    for (p, want) in r.params_through(*index) {
        if args.iter().any(|(q, _)| *q == p) {
            continue;
        }
        // parameters the predicate leaves unconstrained get fresh values
        let v = fresh_value(state, &p, want);
        bind_param(&mut binding, &p, want, &v)?;
    }
    let strand = instantiate(&r, &binding, *index)
        .map_err(|e| StepFailure::Input(format!("cannot instantiate `{role}`: {e}")))?;
    state.skeleton.strands.push(strand);
    let new_strand = state.skeleton.strands.len() - 1;
    // a new node must not originate anything assumed non-originating
    for a in state.skeleton.non.clone() {
        if !state.skeleton.origination_nodes(&a).is_empty() {
            return Err(StepFailure::Unsat(format!(
                "the new strand originates non-originating atom {a}"
            )));
        }
    }
    let hom_node = NodeRef::new(new_strand, *index);
    let before_hull = state.skeleton.clone();
    let (sk, hom) =
        hull(&before_hull).ok_or_else(|| StepFailure::Unsat("hull is undefined".into()))?;
    state.sigma = map_assignment(&hom, &state.sigma);
    state.skeleton = sk;
    state.sigma.bind_node(node_var.clone(), hom.map_node(hom_node));
    Ok(())
}

fn bind_param(
    binding: &mut Subst,
    p: &str,
    want: ParamSort,
    v: &Message,
) -> Result<(), StepFailure> {
    use crate::term::{match_atom_under, match_under, AllVars};
    let ok = match want {
        ParamSort::Atom(s) => match v {
            Message::Atom(a) if a.sort() == s => {
                match_atom_under(binding, &AllVars, &Atom::base(p, s), a)
            }
            _ => false,
        },
        ParamSort::Mesg => match_under(binding, &AllVars, &Message::Ind(p.to_string()), v),
    };
    if ok {
        Ok(())
    } else {
        Err(StepFailure::Input(format!("value {v} does not fit parameter `{p}` of sort {want}")))
    }
}

fn eval_ground_atom(t: &GoalTerm, state: &CsState) -> Result<Atom, StepFailure> {
    match eval_term(t, &state.sigma) {
        Some(Message::Atom(a)) => Ok(a),
        Some(other) => Err(StepFailure::Unsat(format!("{t} denotes the non-atom {other}"))),
        None => Err(StepFailure::Input(format!("term {t} has unassigned variables"))),
    }
}

fn handle_non(state: &mut CsState, t: &GoalTerm) -> Result<(), StepFailure> {
    let a = eval_ground_atom(t, state)?;
    if !state.skeleton.origination_nodes(&a).is_empty() {
        return Err(StepFailure::Unsat(format!("atom {a} originates in the skeleton")));
    }
    state.skeleton.non.insert(a);
    Ok(())
}

fn handle_unq(state: &mut CsState, t: &GoalTerm) -> Result<(), StepFailure> {
    let a = eval_ground_atom(t, state)?;
    state.skeleton.unique.insert(a);
    rehull(state)
}

fn handle_preceq(state: &mut CsState, m: &str, n: &str) -> Result<(), StepFailure> {
    let (Some(a), Some(b)) = (state.sigma.node(m), state.sigma.node(n)) else {
        return Err(StepFailure::Input(format!("`{m}` and `{n}` must be assigned nodes")));
    };
    if a == b {
        return Ok(());
    }
    state.skeleton.order.insert((a, b));
    if state.skeleton.has_order_cycle() {
        return Err(StepFailure::Unsat(format!(
            "ordering node {}:{} before {}:{} creates a cycle",
            a.strand, a.pos, b.strand, b.pos
        )));
    }
    Ok(())
}

fn handle_col(state: &mut CsState, m: &str, n: &str) -> Result<(), StepFailure> {
    let (Some(a), Some(b)) = (state.sigma.node(m), state.sigma.node(n)) else {
        return Err(StepFailure::Input(format!("`{m}` and `{n}` must be assigned nodes")));
    };
    if a.strand == b.strand {
        return Ok(());
    }
    let (merged, hom) = merge_strands(&state.skeleton, a.strand, b.strand).ok_or_else(|| {
        StepFailure::Unsat(format!(
            "strands {} and {} cannot be identified",
            a.strand, b.strand
        ))
    })?;
    state.sigma = map_assignment(&hom, &state.sigma);
    state.skeleton = merged;
    rehull(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::goal::{parse_goal, satisfies_claim};
    use crate::skeleton::tests::{a0, blanchet};
    use crate::skeleton::{is_isomorphic, Classification};
    use crate::term::Sort;

    fn cs(src: &str) -> CsResult {
        let p = blanchet();
        let g = parse_goal(src, &p).unwrap();
        characteristic_skeleton(&g.hypothesis, &p).unwrap()
    }

    #[test]
    fn empty_claim_gives_empty_skeleton() {
        let p = blanchet();
        let claim = SecurityClaim { conjuncts: vec![] };
        match characteristic_skeleton(&claim, &p).unwrap() {
            CsResult::Characteristic { skeleton, sigma } => {
                assert_eq!(skeleton, Skeleton::empty());
                assert_eq!(sigma, Assignment::new());
            }
            other => panic!("expected success, got {other:?}"),
        }
    }

    #[test]
    fn initiator_point_of_view() {
        let src = crate::goal::tests::GOAL_A_AUTH;
        match cs(src) {
            CsResult::Characteristic { skeleton, sigma } => {
                assert!(is_isomorphic(&skeleton, &a0()), "{skeleton:?}");
                let n2 = sigma.node("n2").unwrap();
                assert_eq!((n2.strand, n2.pos), (0, 2));
                // self-satisfaction
                let p = blanchet();
                let g = parse_goal(src, &p).unwrap();
                assert!(satisfies_claim(&skeleton, &p, &sigma, &g.hypothesis));
            }
            other => panic!("expected success, got {other:?}"),
        }
    }

    #[test]
    fn non_originating_atom_cannot_be_sent_first() {
        let src = r#"
            (defgoal g (forall ((n node) (a b name) (k skey))
              (implies (and (p "init" 1 n (a a) (b b) (k k)) (non k)) (false))))"#;
        match cs(src) {
            CsResult::Unsatisfiable { reason, .. } => {
                assert!(reason.contains("originates"), "{reason}");
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn unique_atom_forces_strand_identification() {
        let src = r#"
            (defgoal g (forall ((n m node) (a name) (k skey))
              (implies
                (and (p "init" 2 n (a a) (k k))
                     (p "init" 2 m (k k))
                     (unq k))
                (false))))"#;
        match cs(src) {
            CsResult::Characteristic { skeleton, sigma } => {
                assert_eq!(skeleton.strands.len(), 1);
                assert_eq!(skeleton.validate(), Classification::Skeleton);
                assert_eq!(sigma.node("n"), sigma.node("m"));
            }
            other => panic!("expected success, got {other:?}"),
        }
    }

    #[test]
    fn collinear_merges_and_identifies_parameters() {
        let src = r#"
            (defgoal g (forall ((n m node) (a b c name))
              (implies
                (and (p "init" 1 n (a a) (b b))
                     (p "init" 1 m (a a) (b c))
                     (col n m))
                (false))))"#;
        match cs(src) {
            CsResult::Characteristic { skeleton, sigma } => {
                assert_eq!(skeleton.strands.len(), 1);
                assert_eq!(
                    crate::goal::eval_term(&GoalTerm::var("b"), &sigma),
                    crate::goal::eval_term(&GoalTerm::var("c"), &sigma)
                );
            }
            other => panic!("expected success, got {other:?}"),
        }
    }

    #[test]
    fn antisymmetric_order_demands_fail() {
        let src = r#"
            (defgoal g (forall ((n m node) (a name) (k skey) (s text))
              (implies
                (and (p "init" 2 n (a a) (k k))
                     (p "resp" 2 m (s s))
                     (prec n m)
                     (prec m n))
                (false))))"#;
        match cs(src) {
            CsResult::Unsatisfiable { reason, .. } => {
                assert!(reason.contains("cycle"), "{reason}");
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn listener_hears_a_bound_value() {
        let src = r#"
            (defgoal g (forall ((n m node) (a name) (k skey))
              (implies
                (and (p "init" 1 n (a a) (k k))
                     (lsn m k))
                (false))))"#;
        match cs(src) {
            CsResult::Characteristic { skeleton, sigma } => {
                assert_eq!(skeleton.strands.len(), 2);
                let m = sigma.node("m").unwrap();
                let heard = skeleton.msg(m);
                let k = crate::goal::eval_term(&GoalTerm::var("k"), &sigma).unwrap();
                assert_eq!(*heard, k);
            }
            other => panic!("expected success, got {other:?}"),
        }
    }

    #[test]
    fn fresh_values_are_distinct_and_sorted() {
        let src = r#"
            (defgoal g (forall ((n node) (a b name))
              (implies (and (p "init" 1 n (a a) (b b))) (false))))"#;
        match cs(src) {
            CsResult::Characteristic { skeleton, sigma } => {
                let a = sigma.msg("a").unwrap();
                let b = sigma.msg("b").unwrap();
                assert_ne!(a, b);
                assert!(
                    matches!(a, Message::Atom(Atom::Base { sort: Sort::Name, .. })),
                    "{a}"
                );
                // the unnamed parameter k was invented too
                assert_eq!(skeleton.strands[0].length, 1);
            }
            other => panic!("expected success, got {other:?}"),
        }
    }
}
