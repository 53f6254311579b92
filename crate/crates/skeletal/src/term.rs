//! The message algebra: sorted atoms, indeterminates, constructors,
//! paths, ingredient/origination relations, substitutions, and
//! most-general unification.
//!
//! Atoms act as sorted variables under substitution; indeterminates are
//! untyped variables ranging over arbitrary messages.

use std::collections::BTreeMap;
use std::fmt;

/// The five base sorts. Atomic keys are split into symmetric (`Skey`,
/// self-inverse) and asymmetric (`Akey`) so inverse normalization is
/// sort-driven.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Sort {
    Name,
    Text,
    Nonce,
    Skey,
    Akey,
}

impl Sort {
    pub fn parse(s: &str) -> Option<Sort> {
        match s {
            "name" => Some(Sort::Name),
            "text" => Some(Sort::Text),
            "nonce" => Some(Sort::Nonce),
            "skey" => Some(Sort::Skey),
            "akey" => Some(Sort::Akey),
            _ => None,
        }
    }
}

impl fmt::Display for Sort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Sort::Name => "name",
            Sort::Text => "text",
            Sort::Nonce => "nonce",
            Sort::Skey => "skey",
            Sort::Akey => "akey",
        };
        f.write_str(s)
    }
}

/// An atom: a sorted base identifier or a constructed key.
///
/// `Sig(a)` is the signature key of name `a`, `Pub(a)` its public
/// encryption key; both are akey-sorted and their ranges are disjoint
/// from each other and from base akey atoms. `Inv(k)` is kept in
/// normal form: the inner atom is never itself an `Inv`, and the
/// inverse of a symmetric key never appears (it normalizes away).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    Base { id: String, sort: Sort },
    Sig(String),
    Pub(String),
    Inv(Box<Atom>),
}

impl Atom {
    pub fn base(id: impl Into<String>, sort: Sort) -> Atom {
        Atom::Base { id: id.into(), sort }
    }

    pub fn sort(&self) -> Sort {
        match self {
            Atom::Base { sort, .. } => *sort,
            Atom::Sig(_) | Atom::Pub(_) | Atom::Inv(_) => Sort::Akey,
        }
    }

    /// Normalizing inverse: `inv(inv(k)) = k`, symmetric keys (and
    /// non-key sorts, which act as symmetric when used to encrypt) are
    /// their own inverses.
    pub fn invert(self) -> Atom {
        match self {
            Atom::Inv(k) => *k,
            a if a.sort() == Sort::Akey => Atom::Inv(Box::new(a)),
            a => a,
        }
    }

    /// Base atoms occurring in this atom (an atom has exactly one,
    /// except that a constructed key's name is the base).
    pub fn base_atom(&self) -> Atom {
        match self {
            Atom::Base { .. } => self.clone(),
            Atom::Sig(n) | Atom::Pub(n) => Atom::base(n.clone(), Sort::Name),
            Atom::Inv(k) => k.base_atom(),
        }
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Atom::Base { id, .. } => f.write_str(id),
            Atom::Sig(n) => write!(f, "(sk {n})"),
            Atom::Pub(n) => write!(f, "(pk {n})"),
            Atom::Inv(k) => write!(f, "(invk {k})"),
        }
    }
}

/// A message: a finite tree whose leaves are atoms and indeterminates.
/// `Tag` is tagged concatenation; the tag `"nil"` renders as plain
/// concatenation `(cat ...)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Message {
    Atom(Atom),
    Ind(String),
    Enc(Box<Message>, Box<Message>),
    Tag(String, Box<Message>, Box<Message>),
}

pub const NIL_TAG: &str = "nil";

impl Message {
    pub fn atom(a: Atom) -> Message {
        Message::Atom(a)
    }

    pub fn enc(p: Message, k: Message) -> Message {
        Message::Enc(Box::new(p), Box::new(k))
    }

    pub fn cat(l: Message, r: Message) -> Message {
        Message::Tag(NIL_TAG.to_string(), Box::new(l), Box::new(r))
    }

    pub fn tagged(tag: impl Into<String>, l: Message, r: Message) -> Message {
        Message::Tag(tag.into(), Box::new(l), Box::new(r))
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, Message::Atom(_) | Message::Ind(_))
    }

    pub fn depth(&self) -> usize {
        match self {
            Message::Atom(_) | Message::Ind(_) => 0,
            Message::Enc(l, r) | Message::Tag(_, l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    /// All atoms occurring anywhere in the tree (key positions included).
    pub fn atoms(&self, out: &mut Vec<Atom>) {
        match self {
            Message::Atom(a) => out.push(a.clone()),
            Message::Ind(_) => {}
            Message::Enc(l, r) | Message::Tag(_, l, r) => {
                l.atoms(out);
                r.atoms(out);
            }
        }
    }

    pub fn indeterminates(&self, out: &mut Vec<String>) {
        match self {
            Message::Atom(_) => {}
            Message::Ind(x) => out.push(x.clone()),
            Message::Enc(l, r) | Message::Tag(_, l, r) => {
                l.indeterminates(out);
                r.indeterminates(out);
            }
        }
    }

    /// All subterms, the message itself included.
    pub fn subterms(&self, out: &mut Vec<Message>) {
        out.push(self.clone());
        match self {
            Message::Enc(l, r) | Message::Tag(_, l, r) => {
                l.subterms(out);
                r.subterms(out);
            }
            _ => {}
        }
    }

    /// Subterms that are encryptions.
    pub fn enc_subterms(&self) -> Vec<Message> {
        let mut all = Vec::new();
        self.subterms(&mut all);
        all.retain(|m| matches!(m, Message::Enc(..)));
        all.dedup();
        all
    }

    /// The key the adversary needs to decrypt this message, when it is
    /// an encryption. A non-atomic key is its own inverse.
    pub fn decryption_key(&self) -> Option<Message> {
        match self {
            Message::Enc(_, k) => Some(match k.as_ref() {
                Message::Atom(a) => Message::Atom(a.clone().invert()),
                other => other.clone(),
            }),
            _ => None,
        }
    }
}

impl fmt::Display for Message {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Message::Atom(a) => write!(f, "{a}"),
            Message::Ind(x) => f.write_str(x),
            Message::Enc(p, k) => write!(f, "(enc {p} {k})"),
            Message::Tag(tag, l, r) if tag == NIL_TAG => write!(f, "(cat {l} {r})"),
            Message::Tag(tag, l, r) => write!(f, "(tag {tag:?} {l} {r})"),
        }
    }
}

/// One step of a path through a message tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Left,
    Right,
}

pub type Path = Vec<Step>;

/// Partial application of a path: left of an encryption is the
/// plaintext, right is the key; undefined on leaves.
pub fn path_apply<'a>(p: &[Step], t: &'a Message) -> Option<&'a Message> {
    let mut cur = t;
    for step in p {
        cur = match (step, cur) {
            (Step::Left, Message::Enc(l, _)) | (Step::Left, Message::Tag(_, l, _)) => l,
            (Step::Right, Message::Enc(_, r)) | (Step::Right, Message::Tag(_, _, r)) => r,
            _ => return None,
        };
    }
    Some(cur)
}

/// True iff some proper prefix of `p` ends by taking the key branch of
/// an encryption in `t`. Precondition: `path_apply(p, t)` is defined.
pub fn traverses_key_edge(p: &[Step], t: &Message) -> bool {
    let mut cur = t;
    for step in p {
        match (step, cur) {
            (Step::Left, Message::Enc(l, _)) => cur = l,
            (Step::Right, Message::Enc(_, r)) => {
                let _ = r;
                return true;
            }
            (Step::Left, Message::Tag(_, l, _)) => cur = l,
            (Step::Right, Message::Tag(_, _, r)) => cur = r,
            _ => panic!("traverses_key_edge: path undefined on message"),
        }
    }
    false
}

/// The ingredient relation `t0 ⊑ t`: reachable without crossing a key
/// edge.
pub fn is_ingredient(t0: &Message, t: &Message) -> bool {
    if t0 == t {
        return true;
    }
    match t {
        Message::Enc(p, _) => is_ingredient(t0, p),
        Message::Tag(_, l, r) => is_ingredient(t0, l) || is_ingredient(t0, r),
        _ => false,
    }
}

/// The appears relation `t0 ≪ t`: reachable by any path, key edges
/// allowed.
pub fn appears_in(t0: &Message, t: &Message) -> bool {
    if t0 == t {
        return true;
    }
    match t {
        Message::Enc(l, r) | Message::Tag(_, l, r) => appears_in(t0, l) || appears_in(t0, r),
        _ => false,
    }
}

/// A substitution (algebra homomorphism): a sort-respecting finite map
/// on base atoms, acting homomorphically on constructed keys, together
/// with a finite map from indeterminates to messages.
///
/// Kept in triangular-solved form: bindings are fully applied on
/// insertion, so application is idempotent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Subst {
    atoms: BTreeMap<Atom, Atom>,
    inds: BTreeMap<String, Message>,
}

/// Why two messages fail to unify or match.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UnifyError {
    SortClash,
    ConstructorClash,
    OccursCheck,
}

impl Subst {
    pub fn new() -> Subst {
        Subst::default()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty() && self.inds.is_empty()
    }

    pub fn atom_bindings(&self) -> impl Iterator<Item = (&Atom, &Atom)> {
        self.atoms.iter()
    }

    pub fn ind_bindings(&self) -> impl Iterator<Item = (&String, &Message)> {
        self.inds.iter()
    }

    pub fn lookup_ind(&self, x: &str) -> Option<&Message> {
        self.inds.get(x)
    }

    pub fn apply_atom(&self, a: &Atom) -> Atom {
        match a {
            Atom::Base { .. } => self.atoms.get(a).cloned().unwrap_or_else(|| a.clone()),
            Atom::Sig(n) => {
                match self.apply_atom(&Atom::base(n.clone(), Sort::Name)) {
                    Atom::Base { id, .. } => Atom::Sig(id),
                    // names only ever map to base name atoms
                    other => unreachable!("name mapped to non-base atom {other:?}"),
                }
            }
            Atom::Pub(n) => match self.apply_atom(&Atom::base(n.clone(), Sort::Name)) {
                Atom::Base { id, .. } => Atom::Pub(id),
                other => unreachable!("name mapped to non-base atom {other:?}"),
            },
            Atom::Inv(k) => self.apply_atom(k).invert(),
        }
    }

    pub fn apply(&self, t: &Message) -> Message {
        match t {
            Message::Atom(a) => Message::Atom(self.apply_atom(a)),
            Message::Ind(x) => self.inds.get(x).cloned().unwrap_or_else(|| t.clone()),
            Message::Enc(p, k) => Message::enc(self.apply(p), self.apply(k)),
            Message::Tag(tag, l, r) => Message::tagged(tag.clone(), self.apply(l), self.apply(r)),
        }
    }

    /// Bind a base atom to an atom of the same sort, keeping solved form.
    fn bind_atom(&mut self, var: Atom, val: Atom) -> Result<(), UnifyError> {
        debug_assert!(matches!(var, Atom::Base { .. }));
        let val = self.apply_atom(&val);
        if val == var {
            return Ok(());
        }
        if var.sort() != val.sort() {
            return Err(UnifyError::SortClash);
        }
        if val.base_atom() == var {
            return Err(UnifyError::OccursCheck);
        }
        let mut single = Subst::new();
        single.atoms.insert(var.clone(), val.clone());
        for v in self.atoms.values_mut() {
            *v = single.apply_atom(v);
        }
        for m in self.inds.values_mut() {
            *m = single.apply(m);
        }
        self.atoms.insert(var, val);
        Ok(())
    }

    /// Bind an indeterminate to a message, with occurs check.
    fn bind_ind(&mut self, var: String, val: Message) -> Result<(), UnifyError> {
        let val = self.apply(&val);
        if val == Message::Ind(var.clone()) {
            return Ok(());
        }
        let mut occ = Vec::new();
        val.indeterminates(&mut occ);
        if occ.contains(&var) {
            return Err(UnifyError::OccursCheck);
        }
        let mut single = Subst::new();
        single.inds.insert(var.clone(), val.clone());
        for v in self.inds.values_mut() {
            *v = single.apply(v);
        }
        self.inds.insert(var, val);
        Ok(())
    }

    /// Composition: `compose(b2, b1)` applies as `b2 ∘ b1`.
    pub fn compose(outer: &Subst, inner: &Subst) -> Subst {
        let mut out = Subst::new();
        for (a, v) in &inner.atoms {
            out.atoms.insert(a.clone(), outer.apply_atom(v));
        }
        for (a, v) in &outer.atoms {
            out.atoms.entry(a.clone()).or_insert_with(|| v.clone());
        }
        for (x, m) in &inner.inds {
            out.inds.insert(x.clone(), outer.apply(m));
        }
        for (x, m) in &outer.inds {
            out.inds.entry(x.clone()).or_insert_with(|| m.clone());
        }
        // drop identity bindings so solved forms compare equal
        out.atoms.retain(|a, v| a != v);
        out.inds.retain(|x, m| m != &Message::Ind(x.clone()));
        out
    }

    /// Restriction to the given base atoms and indeterminates; used for
    /// homomorphism equality, which ignores action outside the source.
    pub fn restrict(&self, atoms: &[Atom], inds: &[String]) -> Subst {
        let mut out = Subst::new();
        for a in atoms {
            let v = self.apply_atom(a);
            if &v != a {
                out.atoms.insert(a.clone(), v);
            }
        }
        for x in inds {
            if let Some(m) = self.inds.get(x) {
                if m != &Message::Ind(x.clone()) {
                    out.inds.insert(x.clone(), m.clone());
                }
            }
        }
        out
    }
}

fn unify_atoms(s: &mut Subst, a: &Atom, b: &Atom) -> Result<(), UnifyError> {
    let a = s.apply_atom(a);
    let b = s.apply_atom(b);
    if a == b {
        return Ok(());
    }
    match (&a, &b) {
        (Atom::Base { .. }, _) => s.bind_atom(a, b),
        (_, Atom::Base { .. }) => s.bind_atom(b, a),
        (Atom::Sig(n1), Atom::Sig(n2)) | (Atom::Pub(n1), Atom::Pub(n2)) => s.bind_atom(
            Atom::base(n1.clone(), Sort::Name),
            Atom::base(n2.clone(), Sort::Name),
        ),
        (Atom::Inv(k1), Atom::Inv(k2)) => unify_atoms(s, k1, k2),
        // inv(k) = c solves as k = inv(c); the inner of a normalized Inv
        // is never Inv, so this only succeeds when k is a base variable.
        (Atom::Inv(k), other) | (other, Atom::Inv(k)) if matches!(**k, Atom::Base { .. }) => {
            let inv_other = (*other).clone().invert();
            unify_atoms(s, k, &inv_other)
        }
        _ => Err(UnifyError::ConstructorClash),
    }
}

fn unify_into(s: &mut Subst, u: &Message, v: &Message) -> Result<(), UnifyError> {
    let u = s.apply(u);
    let v = s.apply(v);
    match (&u, &v) {
        (Message::Ind(x), _) => s.bind_ind(x.clone(), v),
        (_, Message::Ind(y)) => s.bind_ind(y.clone(), u),
        (Message::Atom(a), Message::Atom(b)) => unify_atoms(s, a, b),
        // an atom is a sorted variable over atoms; it never unifies with
        // a compound message
        (Message::Atom(_), _) | (_, Message::Atom(_)) => Err(UnifyError::ConstructorClash),
        (Message::Enc(p1, k1), Message::Enc(p2, k2)) => {
            unify_into(s, p1, p2)?;
            unify_into(s, k1, k2)
        }
        (Message::Tag(t1, l1, r1), Message::Tag(t2, l2, r2)) => {
            if t1 != t2 {
                return Err(UnifyError::ConstructorClash);
            }
            unify_into(s, l1, l2)?;
            unify_into(s, r1, r2)
        }
        _ => Err(UnifyError::ConstructorClash),
    }
}

/// Most general unifier of two messages, or `None` when no unifier
/// exists (sort clash, constructor clash, occurs-check failure).
pub fn unify(u: &Message, v: &Message) -> Option<Subst> {
    let mut s = Subst::new();
    unify_into(&mut s, u, v).ok().map(|_| s)
}

/// Unify under an accumulated substitution; on success the substitution
/// is extended in place.
pub fn unify_under(s: &mut Subst, u: &Message, v: &Message) -> bool {
    let saved = s.clone();
    if unify_into(s, u, v).is_ok() {
        true
    } else {
        *s = saved;
        false
    }
}

/// Which identifiers count as variables during one-sided matching.
pub trait VarSet {
    fn is_atom_var(&self, a: &Atom) -> bool;
    fn is_ind_var(&self, x: &str) -> bool;
}

/// Every base atom and indeterminate is a variable (the usual case for
/// homomorphism solving, where all parameters may be specialized).
pub struct AllVars;

impl VarSet for AllVars {
    fn is_atom_var(&self, _: &Atom) -> bool {
        true
    }
    fn is_ind_var(&self, _: &str) -> bool {
        true
    }
}

fn match_atom(
    s: &mut Subst,
    vars: &dyn VarSet,
    pat: &Atom,
    tgt: &Atom,
) -> Result<(), UnifyError> {
    let pat = s.apply_atom(pat);
    if &pat == tgt {
        return Ok(());
    }
    match &pat {
        Atom::Base { .. } if vars.is_atom_var(&pat) => s.bind_atom(pat.clone(), tgt.clone()),
        Atom::Base { .. } => Err(UnifyError::ConstructorClash),
        Atom::Sig(n) => match tgt {
            Atom::Sig(m) => match_atom(
                s,
                vars,
                &Atom::base(n.clone(), Sort::Name),
                &Atom::base(m.clone(), Sort::Name),
            ),
            _ => Err(UnifyError::ConstructorClash),
        },
        Atom::Pub(n) => match tgt {
            Atom::Pub(m) => match_atom(
                s,
                vars,
                &Atom::base(n.clone(), Sort::Name),
                &Atom::base(m.clone(), Sort::Name),
            ),
            _ => Err(UnifyError::ConstructorClash),
        },
        Atom::Inv(k) => {
            let tgt_inv = tgt.clone().invert();
            match_atom(s, vars, k, &tgt_inv)
        }
    }
}

fn match_into(
    s: &mut Subst,
    vars: &dyn VarSet,
    pat: &Message,
    tgt: &Message,
) -> Result<(), UnifyError> {
    let pat = s.apply(pat);
    match (&pat, tgt) {
        (Message::Ind(x), _) if vars.is_ind_var(x) => s.bind_ind(x.clone(), tgt.clone()),
        (Message::Ind(_), _) => {
            if &pat == tgt {
                Ok(())
            } else {
                Err(UnifyError::ConstructorClash)
            }
        }
        (Message::Atom(a), Message::Atom(b)) => match_atom(s, vars, a, b),
        (Message::Atom(_), _) => Err(UnifyError::ConstructorClash),
        (Message::Enc(p1, k1), Message::Enc(p2, k2)) => {
            match_into(s, vars, p1, p2)?;
            match_into(s, vars, k1, k2)
        }
        (Message::Tag(t1, l1, r1), Message::Tag(t2, l2, r2)) if t1 == t2 => {
            match_into(s, vars, l1, l2)?;
            match_into(s, vars, r1, r2)
        }
        _ => Err(UnifyError::ConstructorClash),
    }
}

/// One-sided matching: find an extension of `s` over `vars` with
/// `apply(s, pat) = tgt`. Non-variable leaves of `pat` and everything in
/// `tgt` are constants.
pub fn match_under(s: &mut Subst, vars: &dyn VarSet, pat: &Message, tgt: &Message) -> bool {
    let saved = s.clone();
    if match_into(s, vars, pat, tgt).is_ok() {
        true
    } else {
        *s = saved;
        false
    }
}

/// Match an atom pattern against an atom target under `s`.
pub fn match_atom_under(s: &mut Subst, vars: &dyn VarSet, pat: &Atom, tgt: &Atom) -> bool {
    let saved = s.clone();
    if match_atom(s, vars, pat, tgt).is_ok() {
        true
    } else {
        *s = saved;
        false
    }
}

/// Deterministic fresh-identifier source, namespaced per analysis run.
#[derive(Debug, Clone, Default)]
pub struct FreshSource {
    counter: u64,
}

impl FreshSource {
    pub fn new() -> FreshSource {
        FreshSource::default()
    }

    /// An identifier based on `hint` that is not in `used`.
    pub fn fresh_id(&mut self, hint: &str, used: &dyn Fn(&str) -> bool) -> String {
        if !used(hint) {
            return hint.to_string();
        }
        loop {
            self.counter += 1;
            let cand = format!("{hint}-{}", self.counter);
            if !used(&cand) {
                return cand;
            }
        }
    }
}
