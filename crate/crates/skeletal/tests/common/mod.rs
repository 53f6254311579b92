//! Shared helpers for the integration test suites: seeded random
//! generators, an independent derivability oracle, the skeleton corpus,
//! and random homomorphism construction.

#![allow(dead_code)]

use std::collections::BTreeSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use skeletal::adversary::AdversaryContext;
use skeletal::charskel::{characteristic_skeleton, CsResult};
use skeletal::goal::{parse_goal, Assignment, SecurityGoal};
use skeletal::protocol::{instantiate, parse_protocol, Dir, ParamSort, Protocol};
use skeletal::search::{shapes, SearchBounds};
use skeletal::skeleton::{compose, hull, NodeRef, SkelHom, Skeleton};
use skeletal::term::{
    match_atom_under, match_under, AllVars, Atom, Message, Sort, Subst,
};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub const SORTS: [Sort; 5] = [Sort::Name, Sort::Text, Sort::Nonce, Sort::Skey, Sort::Akey];

/// A pool of base atoms, two per sort, plus a few constructed keys.
pub fn atom_pool() -> Vec<Atom> {
    let mut out = Vec::new();
    for s in SORTS {
        for i in 0..2 {
            out.push(Atom::base(format!("{}{}", sort_prefix(s), i), s));
        }
    }
    out.push(Atom::Sig("n0".into()));
    out.push(Atom::Pub("n1".into()));
    out.push(Atom::Inv(Box::new(Atom::Pub("n1".into()))));
    out
}

fn sort_prefix(s: Sort) -> &'static str {
    match s {
        Sort::Name => "n",
        Sort::Text => "t",
        Sort::Nonce => "c",
        Sort::Skey => "k",
        Sort::Akey => "a",
    }
}

pub fn rand_atom(rng: &mut ChaCha8Rng) -> Atom {
    let pool = atom_pool();
    pool[rng.gen_range(0..pool.len())].clone()
}

pub fn rand_message(rng: &mut ChaCha8Rng, depth: usize) -> Message {
    if depth == 0 || rng.gen_bool(0.35) {
        if rng.gen_bool(0.15) {
            Message::Ind(format!("x{}", rng.gen_range(0..2)))
        } else {
            Message::Atom(rand_atom(rng))
        }
    } else {
        let l = rand_message(rng, depth - 1);
        let r = rand_message(rng, depth - 1);
        match rng.gen_range(0..3) {
            0 => Message::enc(l, r),
            1 => Message::cat(l, r),
            _ => Message::tagged("t", l, r),
        }
    }
}

/// Replace random subterms of `t` with fresh variables (same-sort atoms
/// or indeterminates), producing a strict generalization of `t`.
pub fn abstract_message(
    rng: &mut ChaCha8Rng,
    t: &Message,
    prefix: &str,
    counter: &mut usize,
) -> Message {
    if rng.gen_bool(0.2) {
        // replace the whole subterm by a fresh variable
        *counter += 1;
        return match t {
            Message::Atom(a) => {
                Message::Atom(Atom::base(format!("{prefix}v{counter}"), a.sort()))
            }
            _ => Message::Ind(format!("{prefix}i{counter}")),
        };
    }
    match t {
        Message::Atom(_) | Message::Ind(_) => t.clone(),
        Message::Enc(l, r) => Message::enc(
            abstract_message(rng, l, prefix, counter),
            abstract_message(rng, r, prefix, counter),
        ),
        Message::Tag(tag, l, r) => Message::tagged(
            tag.clone(),
            abstract_message(rng, l, prefix, counter),
            abstract_message(rng, r, prefix, counter),
        ),
    }
}

/// Independent derivability oracle: a chaotic fixpoint over the closed
/// universe of subterms of the context and target (plus decryption
/// keys), rather than the analyze-then-synthesize split used by the
/// library.
pub fn oracle_derivable(ctx: &AdversaryContext, available: &[Message], target: &Message) -> bool {
    let mut universe: BTreeSet<Message> = BTreeSet::new();
    for m in available.iter().chain([target]) {
        let mut subs = Vec::new();
        m.subterms(&mut subs);
        universe.extend(subs);
    }
    for m in universe.clone() {
        if let Some(k) = m.decryption_key() {
            let mut subs = Vec::new();
            k.subterms(&mut subs);
            universe.extend(subs);
        }
    }
    let mut known: BTreeSet<Message> = BTreeSet::new();
    loop {
        let mut added = false;
        for u in &universe {
            if known.contains(u) {
                continue;
            }
            let now = match u {
                _ if available.contains(u) => true,
                Message::Ind(_) => true,
                Message::Atom(a) => ctx.creatable(a) || exposed(u, &known),
                Message::Tag(_, l, r) => {
                    (known.contains(l.as_ref()) && known.contains(r.as_ref()))
                        || exposed(u, &known)
                }
                Message::Enc(p, k) => {
                    (known.contains(p.as_ref()) && known.contains(k.as_ref()))
                        || exposed(u, &known)
                }
            };
            if now {
                known.insert(u.clone());
                added = true;
            }
        }
        if !added {
            return known.contains(target);
        }
    }
}

/// Is `u` obtainable by decomposing something already known?
fn exposed(u: &Message, known: &BTreeSet<Message>) -> bool {
    known.iter().any(|m| match m {
        Message::Tag(_, l, r) => l.as_ref() == u || r.as_ref() == u,
        Message::Enc(p, _) => {
            p.as_ref() == u
                && known.contains(&m.decryption_key().expect("encryption has a key"))
        }
        _ => false,
    })
}

pub struct Fixture {
    pub protocol: Protocol,
    pub goal: SecurityGoal,
    pub cs_skeleton: Option<Skeleton>,
    pub cs_sigma: Option<Assignment>,
}

pub fn fixtures() -> Vec<Fixture> {
    let blanchet = parse_protocol(skeletal::fixtures::BLANCHET).unwrap();
    let fix = parse_protocol(skeletal::fixtures::BLANCHET_FIX).unwrap();
    let mut out = Vec::new();
    for (prot, goal_src) in [
        (&blanchet, skeletal::fixtures::GOAL_A_AUTH),
        (&blanchet, skeletal::fixtures::GOAL_A_SECRECY),
        (&blanchet, skeletal::fixtures::GOAL_B_AUTH),
        (&blanchet, skeletal::fixtures::GOAL_B_AUTH_WEAK),
        (&blanchet, skeletal::fixtures::GOAL_B_SECRECY),
        (&fix, skeletal::fixtures::GOAL_B_AUTH),
        (&fix, skeletal::fixtures::GOAL_B_SECRECY),
    ] {
        let goal = parse_goal(goal_src, prot).unwrap();
        let (cs_skeleton, cs_sigma) =
            match characteristic_skeleton(&goal.hypothesis, prot).unwrap() {
                CsResult::Characteristic { skeleton, sigma } => (Some(skeleton), Some(sigma)),
                CsResult::Unsatisfiable { .. } => (None, None),
            };
        out.push(Fixture { protocol: prot.clone(), goal, cs_skeleton, cs_sigma });
    }
    out
}

/// The skeleton corpus: every characteristic skeleton of the fixture
/// goals plus every shape reachable from it.
pub fn corpus() -> Vec<(Protocol, Skeleton)> {
    let mut out = Vec::new();
    for f in fixtures() {
        if let Some(sk) = f.cs_skeleton {
            let r = shapes(&sk, &f.protocol, &SearchBounds::default());
            out.push((f.protocol.clone(), sk));
            for (_, shape) in r.shapes {
                out.push((f.protocol.clone(), shape));
            }
        }
    }
    out
}

/// Apply a random sequence of verified homomorphism steps (strand
/// additions, atom contractions, order edges) to `start`.
pub fn random_hom(
    start: &Skeleton,
    prot: &Protocol,
    rng: &mut ChaCha8Rng,
    steps: usize,
) -> (Skeleton, SkelHom) {
    let mut sk = start.clone();
    let mut hom = SkelHom::identity(start);
    for _ in 0..steps {
        let choice = rng.gen_range(0..3);
        let next = match choice {
            0 => add_random_strand(&sk, prot, rng),
            1 => contract_random_atoms(&sk, rng),
            _ => add_random_edge(&sk, rng),
        };
        if let Some((cand, delta)) = next {
            if let Some((hulled, h)) = hull(&cand) {
                hom = compose(&compose(&h, &delta), &hom);
                sk = hulled;
            }
        }
    }
    (sk, hom)
}

fn add_random_strand(
    sk: &Skeleton,
    prot: &Protocol,
    rng: &mut ChaCha8Rng,
) -> Option<(Skeleton, SkelHom)> {
    let role = &prot.roles[rng.gen_range(0..prot.roles.len())];
    let j = rng.gen_range(1..=role.trace.len());
    let existing = sk.mentioned_atoms();
    let mut binding = Subst::new();
    for (i, (p, ps)) in role.params_through(j).into_iter().enumerate() {
        match ps {
            ParamSort::Atom(s) => {
                let same_sort: Vec<&Atom> =
                    existing.iter().filter(|a| a.sort() == s && matches!(a, Atom::Base { .. })).collect();
                let v = if !same_sort.is_empty() && rng.gen_bool(0.5) {
                    (*same_sort[rng.gen_range(0..same_sort.len())]).clone()
                } else {
                    Atom::base(format!("r{}{}", i, rng.gen_range(0..1000)), s)
                };
                if !match_atom_under(&mut binding, &AllVars, &Atom::base(p, s), &v) {
                    return None;
                }
            }
            ParamSort::Mesg => {
                let v = Message::Ind(format!("ri{}", rng.gen_range(0..1000)));
                if !match_under(&mut binding, &AllVars, &Message::Ind(p), &v) {
                    return None;
                }
            }
        }
    }
    let strand = instantiate(role, &binding, j).ok()?;
    let mut cand = sk.clone();
    cand.strands.push(strand);
    let delta = SkelHom { strand_map: (0..sk.strands.len()).collect(), subst: Subst::new() };
    Some((cand, delta))
}

fn contract_random_atoms(sk: &Skeleton, rng: &mut ChaCha8Rng) -> Option<(Skeleton, SkelHom)> {
    let bases: Vec<Atom> = sk
        .mentioned_atoms()
        .iter()
        .map(|a| a.base_atom())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let pairs: Vec<(&Atom, &Atom)> = bases
        .iter()
        .flat_map(|a| bases.iter().map(move |b| (a, b)))
        .filter(|(a, b)| a != b && a.sort() == b.sort())
        .collect();
    if pairs.is_empty() {
        return None;
    }
    let (a, b) = pairs[rng.gen_range(0..pairs.len())];
    let mut sub = Subst::new();
    if !match_atom_under(&mut sub, &AllVars, a, b) {
        return None;
    }
    let cand = sk.map_messages(&sub);
    let delta = SkelHom { strand_map: (0..sk.strands.len()).collect(), subst: sub };
    Some((cand, delta))
}

fn add_random_edge(sk: &Skeleton, rng: &mut ChaCha8Rng) -> Option<(Skeleton, SkelHom)> {
    let sends: Vec<NodeRef> = sk.nodes().filter(|n| sk.dir(*n) == Dir::Send).collect();
    let recvs: Vec<NodeRef> = sk.nodes().filter(|n| sk.dir(*n) == Dir::Recv).collect();
    if sends.is_empty() || recvs.is_empty() {
        return None;
    }
    let t = sends[rng.gen_range(0..sends.len())];
    let r = recvs[rng.gen_range(0..recvs.len())];
    if t.strand == r.strand || sk.precedes(r, t) {
        return None;
    }
    let mut cand = sk.clone();
    cand.order.insert((t, r));
    Some((cand, SkelHom::identity(sk)))
}
