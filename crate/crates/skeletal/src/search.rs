//! Bounded breadth-first search for shapes (minimal realized
//! homomorphic images of a skeleton) and the goal-checking procedure
//! built on it.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::adversary::{realized, underivable_receptions};
use crate::charskel::{characteristic_skeleton, map_assignment, CsInputError, CsResult};
use crate::goal::{satisfies_conclusion, SecurityGoal};
use crate::protocol::{instantiate, Dir, Protocol, LISTENER_ROLE};
use crate::skeleton::{
    compose, hull, is_isomorphic, merge_strands, find_homomorphisms, NodeRef, SkelHom, Skeleton,
};
use crate::term::{unify_under, Atom, Message, Subst};

/// Limits on the explored space. Defaults fit the bundled examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchBounds {
    /// Strands the search may add beyond the starting skeleton.
    pub max_added_strands: usize,
    /// Atoms a single added strand may introduce.
    pub max_fresh_atoms: usize,
    /// States popped from the frontier before giving up.
    pub max_states: usize,
}

impl Default for SearchBounds {
    fn default() -> SearchBounds {
        SearchBounds { max_added_strands: 3, max_fresh_atoms: 4, max_states: 20000 }
    }
}

/// Result of a shape search.
#[derive(Debug, Clone)]
pub struct ShapeResult {
    /// Minimal realized images, with the homomorphism from the start.
    pub shapes: Vec<(SkelHom, Skeleton)>,
    /// True iff the bounded space was fully explored.
    pub exhausted: bool,
    pub states_explored: usize,
}

#[derive(Clone)]
struct State {
    sk: Skeleton,
    hom: SkelHom,
    added: usize,
}

/// A deterministic rendering of a skeleton, used for output ordering.
pub fn canonical_key(sk: &Skeleton) -> String {
    use std::fmt::Write as _;
    let mut out = String::new();
    for s in &sk.strands {
        write!(out, "[{}", s.role_name).unwrap();
        for (d, m) in &s.events {
            let sign = match d {
                Dir::Send => '+',
                Dir::Recv => '-',
            };
            write!(out, " {sign}{m}").unwrap();
        }
        out.push(']');
    }
    write!(out, " order{:?}", sk.order).unwrap();
    for a in &sk.non {
        write!(out, " non:{a}").unwrap();
    }
    for a in &sk.unique {
        write!(out, " unq:{a}").unwrap();
    }
    out
}

fn bucket_key(sk: &Skeleton) -> (Vec<(String, usize)>, usize, usize, usize) {
    let mut roles: Vec<(String, usize)> =
        sk.strands.iter().map(|s| (s.role_name.clone(), s.length)).collect();
    roles.sort();
    (roles, sk.order.len(), sk.non.len(), sk.unique.len())
}

/// Base identifiers (of atoms and indeterminates) in a message list.
fn event_ids(events: &[(Dir, Message)]) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for (_, m) in events {
        let mut atoms = Vec::new();
        m.atoms(&mut atoms);
        for a in atoms {
            if let Atom::Base { id, .. } = a.base_atom() {
                out.insert(id);
            }
        }
        let mut inds = Vec::new();
        m.indeterminates(&mut inds);
        out.extend(inds);
    }
    out
}

/// All candidate unification points of a message: its encryption
/// subterms plus the message itself.
fn unification_points(m: &Message) -> Vec<Message> {
    let mut out = m.enc_subterms();
    if !out.contains(m) {
        out.push(m.clone());
    }
    out
}

/// Enumerate the minimal realized homomorphic images of `start`.
pub fn shapes(start: &Skeleton, prot: &Protocol, bounds: &SearchBounds) -> ShapeResult {
    let mut queue: VecDeque<State> = VecDeque::new();
    let mut visited: BTreeMap<(Vec<(String, usize)>, usize, usize, usize), Vec<Skeleton>> =
        BTreeMap::new();
    let mut found: Vec<(SkelHom, Skeleton)> = Vec::new();
    let mut explored = 0usize;
    let mut exhausted = true;

    let push = |st: State,
                    queue: &mut VecDeque<State>,
                    visited: &mut BTreeMap<_, Vec<Skeleton>>| {
        let bucket: &mut Vec<Skeleton> = visited.entry(bucket_key(&st.sk)).or_default();
        if bucket.iter().any(|seen| is_isomorphic(seen, &st.sk)) {
            return;
        }
        bucket.push(st.sk.clone());
        queue.push_back(st);
    };

    push(
        State { sk: start.clone(), hom: SkelHom::identity(start), added: 0 },
        &mut queue,
        &mut visited,
    );

    while let Some(st) = queue.pop_front() {
        if explored >= bounds.max_states {
            exhausted = false;
            break;
        }
        explored += 1;
        if realized(&st.sk) {
            found.push((st.hom, st.sk));
            continue;
        }
        for succ in successors(&st, prot, bounds) {
            push(succ, &mut queue, &mut visited);
        }
    }

    let mut shapes = minimal_shapes(start, found);
    shapes.sort_by_key(|(_, sk)| (sk.strands.len(), sk.node_count(), canonical_key(sk)));
    ShapeResult { shapes, exhausted, states_explored: explored }
}

fn successors(st: &State, prot: &Protocol, bounds: &SearchBounds) -> Vec<State> {
    let mut out = Vec::new();
    augmentations(st, prot, bounds, &mut out);
    contractions(st, &mut out);
    strand_merges(st, &mut out);
    order_edges(st, &mut out);
    out
}

/// Finish a successor: hull the candidate and thread the homomorphism.
fn finish(st: &State, candidate: &Skeleton, delta: SkelHom, added: usize) -> Option<State> {
    let (hulled, h) = hull(candidate)?;
    let hom = compose(&compose(&h, &delta), &st.hom);
    Some(State { sk: hulled, hom, added })
}

/// Add one role-prefix instance whose final transmission can supply an
/// unexplained reception, ordering it before that reception.
fn augmentations(st: &State, prot: &Protocol, bounds: &SearchBounds, out: &mut Vec<State>) {
    if st.added >= bounds.max_added_strands {
        return;
    }
    let targets = underivable_receptions(&st.sk);
    if targets.is_empty() {
        return;
    }
    let used = st.sk.used_ids();
    for role in &prot.roles {
        if role.name == LISTENER_ROLE {
            continue;
        }
        for j in 1..=role.trace.len() {
            if role.trace[j - 1].0 != Dir::Send {
                continue;
            }
            // rename every parameter of the prefix to a fresh identifier
            let mut rename = Subst::new();
            let mut fresh = crate::term::FreshSource::new();
            for (p, ps) in role.params_through(j) {
                let id = fresh.fresh_id(&format!("{p}-0"), &|cand| used.contains(cand));
                let ok = match ps {
                    crate::protocol::ParamSort::Atom(s) => crate::term::match_atom_under(
                        &mut rename,
                        &crate::term::AllVars,
                        &Atom::base(p, s),
                        &Atom::base(id, s),
                    ),
                    crate::protocol::ParamSort::Mesg => crate::term::match_under(
                        &mut rename,
                        &crate::term::AllVars,
                        &Message::Ind(p),
                        &Message::Ind(id),
                    ),
                };
                debug_assert!(ok, "fresh renaming cannot clash");
            }
            let Ok(strand) = instantiate(role, &rename, j) else {
                continue;
            };
            let trans = strand.events[j - 1].1.clone();
            for &target in &targets {
                for tpoint in unification_points(&trans) {
                    for rpoint in unification_points(st.sk.msg(target)) {
                        let mut mgu = Subst::new();
                        if !unify_under(&mut mgu, &tpoint, &rpoint) {
                            continue;
                        }
                        let mapped = st.sk.map_messages(&mgu);
                        let new_strand = crate::protocol::StrandInstance {
                            role_name: strand.role_name.clone(),
                            length: strand.length,
                            binding: Subst::compose(&mgu, &strand.binding),
                            events: strand
                                .events
                                .iter()
                                .map(|(d, m)| (*d, mgu.apply(m)))
                                .collect(),
                        };
                        // the strand may only introduce a bounded number
                        // of values unknown to the skeleton
                        let old_ids: BTreeSet<String> = mapped.used_ids();
                        let fresh_count =
                            event_ids(&new_strand.events).difference(&old_ids).count();
                        if fresh_count > bounds.max_fresh_atoms {
                            continue;
                        }
                        let mut cand = mapped;
                        cand.strands.push(new_strand.clone());
                        let s_new = cand.strands.len() - 1;
                        cand.order.insert((NodeRef::new(s_new, j), target));
                        let delta = SkelHom {
                            strand_map: (0..st.sk.strands.len()).collect(),
                            subst: mgu,
                        };
                        if let Some(succ) = finish(st, &cand, delta, st.added + 1) {
                            out.push(succ);
                        }
                    }
                }
            }
        }
    }
}

/// Identify two same-sort base atoms.
fn contractions(st: &State, out: &mut Vec<State>) {
    let bases: Vec<Atom> = st
        .sk
        .mentioned_atoms()
        .iter()
        .map(|a| a.base_atom())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    for (i, a) in bases.iter().enumerate() {
        for b in &bases[i + 1..] {
            if a.sort() != b.sort() {
                continue;
            }
            let mut sub = Subst::new();
            if !crate::term::match_atom_under(&mut sub, &crate::term::AllVars, a, b) {
                continue;
            }
            let cand = st.sk.map_messages(&sub);
            let delta = SkelHom { strand_map: (0..st.sk.strands.len()).collect(), subst: sub };
            if let Some(succ) = finish(st, &cand, delta, st.added) {
                out.push(succ);
            }
        }
    }
}

/// Identify two strands of the same role where one's trace is a prefix
/// of the other's under unification.
fn strand_merges(st: &State, out: &mut Vec<State>) {
    for s1 in 0..st.sk.strands.len() {
        for s2 in s1 + 1..st.sk.strands.len() {
            if st.sk.strands[s1].role_name != st.sk.strands[s2].role_name {
                continue;
            }
            if let Some((merged, hom)) = merge_strands(&st.sk, s1, s2) {
                if let Some(succ) = finish(st, &merged, hom, st.added) {
                    out.push(succ);
                }
            }
        }
    }
}

/// Order one transmission before one reception.
fn order_edges(st: &State, out: &mut Vec<State>) {
    for t in st.sk.nodes() {
        if st.sk.dir(t) != Dir::Send {
            continue;
        }
        for r in st.sk.nodes() {
            if st.sk.dir(r) != Dir::Recv
                || t.strand == r.strand
                || st.sk.precedes(t, r)
                || st.sk.precedes(r, t)
            {
                continue;
            }
            let mut cand = st.sk.clone();
            cand.order.insert((t, r));
            let delta = SkelHom::identity(&st.sk);
            if let Some(succ) = finish(st, &cand, delta, st.added) {
                out.push(succ);
            }
        }
    }
}

/// Does `j` factor through `h` (both out of `src`)? Returns the witness
/// homomorphism when it does.
pub fn factors_through(
    src: &Skeleton,
    j: &SkelHom,
    bj: &Skeleton,
    h: &SkelHom,
    bh: &Skeleton,
) -> Option<SkelHom> {
    find_homomorphisms(bh, bj)
        .into_iter()
        .find(|k| compose(k, h).equiv(j, src))
}

/// Keep only shapes: quotient by isomorphism, then drop any image that
/// properly factors through another.
fn minimal_shapes(src: &Skeleton, found: Vec<(SkelHom, Skeleton)>) -> Vec<(SkelHom, Skeleton)> {
    // isomorphism quotient, keeping the first (breadth-first, so most
    // general) representative
    let mut reps: Vec<(SkelHom, Skeleton)> = Vec::new();
    for (h, sk) in found {
        if !reps.iter().any(|(_, s)| is_isomorphic(s, &sk)) {
            reps.push((h, sk));
        }
    }
    let n = reps.len();
    let mut keep = vec![true; n];
    for i in 0..n {
        for k in 0..n {
            if i == k || !keep[k] {
                continue;
            }
            let (hi, bi) = &reps[i];
            let (hk, bk) = &reps[k];
            let i_through_k = factors_through(src, hi, bi, hk, bk).is_some();
            let k_through_i = factors_through(src, hk, bk, hi, bi).is_some();
            if i_through_k && !k_through_i {
                keep[i] = false;
                break;
            }
        }
    }
    reps.into_iter()
        .zip(keep)
        .filter_map(|(p, k)| k.then_some(p))
        .collect()
}

/// Outcome of checking one goal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Achieved,
    Counterexample,
    BoundExceeded,
}

/// Full report for a goal check.
#[derive(Debug, Clone)]
pub struct GoalCheck {
    pub verdict: Verdict,
    pub shapes: Vec<(SkelHom, Skeleton)>,
    pub counterexample: Option<(SkelHom, Skeleton)>,
    pub start: Option<Skeleton>,
    pub exhausted: bool,
    /// True when the hypothesis itself is unsatisfiable.
    pub vacuous: bool,
    pub bounds: SearchBounds,
}

/// Decide whether the protocol achieves the goal, within bounds: build
/// the characteristic skeleton of the hypothesis, enumerate its shapes,
/// and test the conclusion on each.
pub fn check_goal(
    prot: &Protocol,
    goal: &SecurityGoal,
    bounds: &SearchBounds,
) -> Result<GoalCheck, CsInputError> {
    let (start, sigma) = match characteristic_skeleton(&goal.hypothesis, prot)? {
        CsResult::Characteristic { skeleton, sigma } => (skeleton, sigma),
        CsResult::Unsatisfiable { .. } => {
            // nothing satisfies the hypothesis: the goal holds vacuously
            return Ok(GoalCheck {
                verdict: Verdict::Achieved,
                shapes: Vec::new(),
                counterexample: None,
                start: None,
                exhausted: true,
                vacuous: true,
                bounds: *bounds,
            });
        }
    };
    let result = shapes(&start, prot, bounds);
    for (h, sk) in &result.shapes {
        let mapped = map_assignment(h, &sigma);
        if !satisfies_conclusion(sk, prot, &mapped, goal) {
            return Ok(GoalCheck {
                verdict: Verdict::Counterexample,
                shapes: result.shapes.clone(),
                counterexample: Some((h.clone(), sk.clone())),
                start: Some(start),
                exhausted: result.exhausted,
                vacuous: false,
                bounds: *bounds,
            });
        }
    }
    let verdict = if result.exhausted { Verdict::Achieved } else { Verdict::BoundExceeded };
    Ok(GoalCheck {
        verdict,
        shapes: result.shapes,
        counterexample: None,
        start: Some(start),
        exhausted: result.exhausted,
        vacuous: false,
        bounds: *bounds,
    })
}
