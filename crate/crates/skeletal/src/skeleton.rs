//! Preskeletons, skeletons, origination bookkeeping, hull computation,
//! and skeleton homomorphisms.

use std::collections::{BTreeMap, BTreeSet};

use crate::protocol::{Dir, StrandInstance};
use crate::term::{
    is_ingredient, match_atom_under, match_under, unify_under, AllVars, Atom, Message, Subst,
};

/// A node in a skeleton: strand index plus 1-based position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeRef {
    pub strand: usize,
    pub pos: usize,
}

impl NodeRef {
    pub fn new(strand: usize, pos: usize) -> NodeRef {
        NodeRef { strand, pos }
    }
}

/// A partially ordered finite set of regular strand nodes plus the
/// non/unique assumption sets. Whether it is a preskeleton or a
/// skeleton is a property checked by [`Skeleton::validate`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Skeleton {
    pub strands: Vec<StrandInstance>,
    /// Order edges beyond strand succession (which is implicit).
    pub order: BTreeSet<(NodeRef, NodeRef)>,
    pub non: BTreeSet<Atom>,
    pub unique: BTreeSet<Atom>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Classification {
    Skeleton,
    Preskeleton,
    Invalid(String),
}

impl Skeleton {
    pub fn empty() -> Skeleton {
        Skeleton::default()
    }

    pub fn node_count(&self) -> usize {
        self.strands.iter().map(|s| s.length).sum()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeRef> + '_ {
        self.strands
            .iter()
            .enumerate()
            .flat_map(|(i, s)| (1..=s.length).map(move |p| NodeRef::new(i, p)))
    }

    pub fn contains(&self, n: NodeRef) -> bool {
        n.strand < self.strands.len() && n.pos >= 1 && n.pos <= self.strands[n.strand].length
    }

    pub fn event(&self, n: NodeRef) -> &(Dir, Message) {
        &self.strands[n.strand].events[n.pos - 1]
    }

    pub fn msg(&self, n: NodeRef) -> &Message {
        &self.event(n).1
    }

    pub fn dir(&self, n: NodeRef) -> Dir {
        self.event(n).0
    }

    /// Strict precedence: strand succession plus declared edges,
    /// transitively closed.
    pub fn precedes(&self, from: NodeRef, to: NodeRef) -> bool {
        // no early equality return: precedes(n, n) is how cycles show up
        let mut seen = BTreeSet::new();
        let mut stack = vec![from];
        while let Some(n) = stack.pop() {
            for next in self.successors(n) {
                if next == to {
                    return true;
                }
                if seen.insert(next) {
                    stack.push(next);
                }
            }
        }
        false
    }

    pub fn precedes_eq(&self, from: NodeRef, to: NodeRef) -> bool {
        from == to || self.precedes(from, to)
    }

    fn successors(&self, n: NodeRef) -> Vec<NodeRef> {
        let mut out = Vec::new();
        if n.pos < self.strands[n.strand].length {
            out.push(NodeRef::new(n.strand, n.pos + 1));
        }
        for (a, b) in &self.order {
            if *a == n {
                out.push(*b);
            }
        }
        out
    }

    pub fn has_order_cycle(&self) -> bool {
        self.nodes().any(|n| self.precedes(n, n))
    }

    /// True iff `a` originates at `n`: `n` transmits, `a` is an
    /// ingredient of its message, and of no earlier message on the
    /// same strand.
    pub fn originates_at(&self, a: &Message, n: NodeRef) -> bool {
        assert!(self.contains(n), "originates_at: node out of range");
        if self.dir(n) != Dir::Send || !is_ingredient(a, self.msg(n)) {
            return false;
        }
        (1..n.pos).all(|p| !is_ingredient(a, self.msg(NodeRef::new(n.strand, p))))
    }

    pub fn origination_nodes(&self, a: &Atom) -> Vec<NodeRef> {
        let m = Message::Atom(a.clone());
        self.nodes().filter(|n| self.originates_at(&m, *n)).collect()
    }

    /// Collect every atom occurring in node messages or the assumption
    /// sets.
    pub fn mentioned_atoms(&self) -> Vec<Atom> {
        let mut out = Vec::new();
        for s in &self.strands {
            for (_, m) in &s.events {
                m.atoms(&mut out);
            }
        }
        out.extend(self.non.iter().cloned());
        out.extend(self.unique.iter().cloned());
        out.sort();
        out.dedup();
        out
    }

    pub fn mentioned_inds(&self) -> Vec<String> {
        let mut out = Vec::new();
        for s in &self.strands {
            for (_, m) in &s.events {
                m.indeterminates(&mut out);
            }
        }
        out.sort();
        out.dedup();
        out
    }

    /// Base identifiers in use, for fresh-atom generation.
    pub fn used_ids(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for a in self.mentioned_atoms() {
            if let Atom::Base { id, .. } = a.base_atom() {
                out.insert(id);
            }
        }
        for x in self.mentioned_inds() {
            out.insert(x);
        }
        out
    }

    /// Apply a substitution throughout: events, bindings, assumption
    /// sets. Order and strand structure are unchanged.
    pub fn map_messages(&self, sub: &Subst) -> Skeleton {
        Skeleton {
            strands: self
                .strands
                .iter()
                .map(|s| StrandInstance {
                    role_name: s.role_name.clone(),
                    length: s.length,
                    binding: Subst::compose(sub, &s.binding),
                    events: s.events.iter().map(|(d, m)| (*d, sub.apply(m))).collect(),
                })
                .collect(),
            order: self.order.clone(),
            non: self.non.iter().map(|a| sub.apply_atom(a)).collect(),
            unique: self.unique.iter().map(|a| sub.apply_atom(a)).collect(),
        }
    }

    /// Total classification of this structure.
    pub fn validate(&self) -> Classification {
        for (a, b) in &self.order {
            if !self.contains(*a) || !self.contains(*b) {
                return Classification::Invalid("order edge references a missing node".into());
            }
        }
        if self.has_order_cycle() {
            return Classification::Invalid("order relation has a cycle".into());
        }
        for a in &self.non {
            if !self.origination_nodes(a).is_empty() {
                return Classification::Invalid(format!("non-originating atom {a} originates"));
            }
        }
        for a in &self.unique {
            if self.origination_nodes(a).len() > 1 {
                return Classification::Preskeleton;
            }
        }
        Classification::Skeleton
    }
}

/// A skeleton homomorphism: a strand-prefix map (which determines the
/// node map) plus a message substitution satisfying the structure
/// preservation clauses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkelHom {
    /// `strand_map[i]` is the target strand of source strand `i`; node
    /// `s↓j` maps to `strand_map[s]↓j`.
    pub strand_map: Vec<usize>,
    pub subst: Subst,
}

impl SkelHom {
    pub fn identity(src: &Skeleton) -> SkelHom {
        SkelHom { strand_map: (0..src.strands.len()).collect(), subst: Subst::new() }
    }

    pub fn map_node(&self, n: NodeRef) -> NodeRef {
        NodeRef::new(self.strand_map[n.strand], n.pos)
    }

    /// Canonical representative modulo the equivalence that ignores the
    /// substitution's action outside the source.
    pub fn canonical(&self, src: &Skeleton) -> SkelHom {
        let atoms: Vec<Atom> = src
            .mentioned_atoms()
            .iter()
            .map(|a| a.base_atom())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let inds = src.mentioned_inds();
        SkelHom { strand_map: self.strand_map.clone(), subst: self.subst.restrict(&atoms, &inds) }
    }

    /// Equality modulo the closing equivalence clause.
    pub fn equiv(&self, other: &SkelHom, src: &Skeleton) -> bool {
        self.canonical(src) == other.canonical(src)
    }
}

/// Componentwise composition `h2 ∘ h1`.
pub fn compose(h2: &SkelHom, h1: &SkelHom) -> SkelHom {
    SkelHom {
        strand_map: h1.strand_map.iter().map(|&s| h2.strand_map[s]).collect(),
        subst: Subst::compose(&h2.subst, &h1.subst),
    }
}

/// Check all homomorphism clauses between `src` and `dst`.
pub fn check_homomorphism(h: &SkelHom, src: &Skeleton, dst: &Skeleton) -> bool {
    if h.strand_map.len() != src.strands.len() {
        return false;
    }
    // 1a + 1b: prefix-preserving node map with matching messages and
    // directions
    for (i, s) in src.strands.iter().enumerate() {
        let Some(t) = dst.strands.get(h.strand_map[i]) else {
            return false;
        };
        if s.length > t.length {
            return false;
        }
        for p in 0..s.length {
            if s.events[p].0 != t.events[p].0 {
                return false;
            }
            if h.subst.apply(&s.events[p].1) != t.events[p].1 {
                return false;
            }
        }
    }
    // 2: order preservation
    for m in src.nodes() {
        for n in src.nodes() {
            if src.precedes(m, n) && !dst.precedes_eq(h.map_node(m), h.map_node(n)) {
                return false;
            }
        }
    }
    // 3 and 4a: assumption-set inclusion
    for a in &src.non {
        if !dst.non.contains(&h.subst.apply_atom(a)) {
            return false;
        }
    }
    for a in &src.unique {
        if !dst.unique.contains(&h.subst.apply_atom(a)) {
            return false;
        }
    }
    // 4b: origination points of unique atoms are preserved
    for a in &src.unique {
        let img = Message::Atom(h.subst.apply_atom(a));
        for n in src.origination_nodes(a) {
            if !dst.originates_at(&img, h.map_node(n)) {
                return false;
            }
        }
    }
    true
}

/// Complete, duplicate-free enumeration of homomorphisms `src → dst`.
pub fn find_homomorphisms(src: &Skeleton, dst: &Skeleton) -> Vec<SkelHom> {
    let mut out: Vec<SkelHom> = Vec::new();
    let mut strand_map = vec![0usize; src.strands.len()];
    search_strand(src, dst, 0, &mut strand_map, &Subst::new(), &mut out);
    out
}

fn search_strand(
    src: &Skeleton,
    dst: &Skeleton,
    i: usize,
    strand_map: &mut Vec<usize>,
    sub: &Subst,
    out: &mut Vec<SkelHom>,
) {
    if i == src.strands.len() {
        finish_candidate(src, dst, strand_map, sub, out);
        return;
    }
    let s = &src.strands[i];
    for (d, t) in dst.strands.iter().enumerate() {
        if s.length > t.length {
            continue;
        }
        let mut cand = sub.clone();
        let mut ok = true;
        for p in 0..s.length {
            if s.events[p].0 != t.events[p].0
                || !match_under(&mut cand, &AllVars, &s.events[p].1, &t.events[p].1)
            {
                ok = false;
                break;
            }
        }
        if ok {
            strand_map[i] = d;
            search_strand(src, dst, i + 1, strand_map, &cand, out);
        }
    }
}

/// After the node map is fixed, resolve assumption-set membership
/// (branching where the substitution is not yet determined on a set
/// element) and check the remaining clauses.
fn finish_candidate(
    src: &Skeleton,
    dst: &Skeleton,
    strand_map: &[usize],
    sub: &Subst,
    out: &mut Vec<SkelHom>,
) {
    let pending: Vec<(Atom, bool)> = src
        .non
        .iter()
        .map(|a| (a.clone(), true))
        .chain(src.unique.iter().map(|a| (a.clone(), false)))
        .collect();
    resolve_sets(src, dst, strand_map, sub, &pending, out);
}

fn resolve_sets(
    src: &Skeleton,
    dst: &Skeleton,
    strand_map: &[usize],
    sub: &Subst,
    pending: &[(Atom, bool)],
    out: &mut Vec<SkelHom>,
) {
    match pending.first() {
        None => {
            let h = SkelHom { strand_map: strand_map.to_vec(), subst: sub.clone() };
            if check_homomorphism(&h, src, dst) {
                let canon = h.canonical(src);
                if !out.iter().any(|g| g.equiv(&canon, src)) {
                    out.push(canon);
                }
            }
        }
        Some((a, is_non)) => {
            let rest = &pending[1..];
            let target_set = if *is_non { &dst.non } else { &dst.unique };
            let img = sub.apply_atom(a);
            if target_set.contains(&img) {
                resolve_sets(src, dst, strand_map, sub, rest, out);
                // also try other bindings below: the image may still be
                // adjustable if it contains unbound base atoms
            }
            for cand in target_set.iter() {
                if cand == &img {
                    continue;
                }
                let mut ext = sub.clone();
                if match_atom_under(&mut ext, &AllVars, a, cand) {
                    resolve_sets(src, dst, strand_map, &ext, rest, out);
                }
            }
        }
    }
}

/// The hull: the canonical most-general skeleton quotient of a
/// preskeleton, with the homomorphism onto it. Identity when the input
/// is already a skeleton; `None` when no identification yields a
/// skeleton.
pub fn hull(p: &Skeleton) -> Option<(Skeleton, SkelHom)> {
    let mut cur = p.clone();
    let mut hom = SkelHom::identity(p);
    loop {
        match cur.validate() {
            Classification::Invalid(_) => return None,
            Classification::Skeleton => {
                debug_assert!(check_homomorphism(&hom, p, &cur));
                return Some((cur, hom));
            }
            Classification::Preskeleton => {}
        }
        // find a unique atom with two origination nodes and merge the
        // two strands carrying them
        let (n1, n2) = cur
            .unique
            .iter()
            .find_map(|a| {
                let orig = cur.origination_nodes(a);
                (orig.len() > 1).then(|| (orig[0], orig[1]))
            })
            .expect("preskeleton has a doubly-originating unique atom");
        let step = merge_strands(&cur, n1.strand, n2.strand)?;
        hom = compose(&step.1, &hom);
        cur = step.0;
    }
}

/// Identify two strands: unify their common prefix with the MGU, map
/// the shorter onto the longer (ties keep the lower index), re-point
/// order edges. Fails on direction conflict or unification failure;
/// order cycles and non-origination violations surface via `validate`
/// on the next iteration.
pub fn merge_strands(sk: &Skeleton, s1: usize, s2: usize) -> Option<(Skeleton, SkelHom)> {
    assert_ne!(s1, s2, "merge_strands: distinct strands required");
    let (keep, drop_) = {
        let (l1, l2) = (sk.strands[s1].length, sk.strands[s2].length);
        if l1 > l2 || (l1 == l2 && s1 < s2) {
            (s1, s2)
        } else {
            (s2, s1)
        }
    };
    let common = sk.strands[drop_].length;
    let mut beta = Subst::new();
    for p in 0..common {
        let (d1, m1) = &sk.strands[keep].events[p];
        let (d2, m2) = &sk.strands[drop_].events[p];
        if d1 != d2 || !unify_under(&mut beta, m1, m2) {
            return None;
        }
    }
    let mapped = sk.map_messages(&beta);

    // strand indices after removal of drop_
    let reindex = |s: usize| if s > drop_ { s - 1 } else { s };
    let target_of = |s: usize| if s == drop_ { reindex(keep) } else { reindex(s) };

    let mut strands = mapped.strands.clone();
    strands.remove(drop_);
    let order = mapped
        .order
        .iter()
        .map(|(a, b)| {
            (
                NodeRef::new(target_of(a.strand), a.pos),
                NodeRef::new(target_of(b.strand), b.pos),
            )
        })
        .filter(|(a, b)| a != b)
        .collect();
    let merged = Skeleton { strands, order, non: mapped.non, unique: mapped.unique };
    let hom = SkelHom {
        strand_map: (0..sk.strands.len()).map(target_of).collect(),
        subst: beta,
    };
    Some((merged, hom))
}

/// Does `A` have an invertible homomorphism onto `B`?
pub fn is_isomorphic(a: &Skeleton, b: &Skeleton) -> bool {
    if a.strands.len() != b.strands.len()
        || a.node_count() != b.node_count()
        || a.non.len() != b.non.len()
        || a.unique.len() != b.unique.len()
    {
        return false;
    }
    for h in find_homomorphisms(a, b) {
        if let Some(inv) = invert(&h, a, b) {
            if check_homomorphism(&inv, b, a) {
                return true;
            }
        }
    }
    false
}

/// Build the inverse of `h` when it is structurally invertible:
/// a strand permutation preserving lengths, with the substitution
/// mapping base atoms injectively to base atoms and indeterminates to
/// indeterminates.
fn invert(h: &SkelHom, src: &Skeleton, dst: &Skeleton) -> Option<SkelHom> {
    let n = src.strands.len();
    let mut inv_map = vec![usize::MAX; dst.strands.len()];
    for (i, &t) in h.strand_map.iter().enumerate() {
        if t >= dst.strands.len() || inv_map[t] != usize::MAX {
            return None;
        }
        if src.strands[i].length != dst.strands[t].length {
            return None;
        }
        inv_map[t] = i;
    }
    if inv_map.iter().any(|&x| x == usize::MAX) || dst.strands.len() != n {
        return None;
    }
    let mut inv_sub = Subst::new();
    let mut seen = BTreeMap::new();
    let bases: BTreeSet<Atom> = src.mentioned_atoms().iter().map(|a| a.base_atom()).collect();
    for base in bases {
        let img = h.subst.apply_atom(&base);
        if img == base {
            continue;
        }
        match img {
            Atom::Base { .. } => {
                if seen.insert(img.clone(), base.clone()).is_some() {
                    return None;
                }
                if !match_atom_under(&mut inv_sub, &AllVars, &img, &base) {
                    return None;
                }
            }
            _ => return None,
        }
    }
    let mut ind_seen = BTreeMap::new();
    for x in src.mentioned_inds() {
        match h.subst.lookup_ind(&x) {
            None => {}
            Some(Message::Ind(y)) => {
                if y != &x && ind_seen.insert(y.clone(), x.clone()).is_some() {
                    return None;
                }
                if y != &x
                    && !match_under(
                        &mut inv_sub,
                        &AllVars,
                        &Message::Ind(y.clone()),
                        &Message::Ind(x.clone()),
                    )
                {
                    return None;
                }
            }
            Some(_) => return None,
        }
    }
    Some(SkelHom { strand_map: inv_map, subst: inv_sub })
}
