//! Protocol definitions: roles as parameterized strands of
//! transmission/reception events, the implicit listener role, role
//! instantiation, and the role-node instance relation.

use std::collections::BTreeMap;
use std::fmt;

use crate::sexpr::{self, Pos, Sexpr};
use crate::term::{match_under, Atom, Message, Sort, Subst, VarSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Dir {
    Send,
    Recv,
}

impl fmt::Display for Dir {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dir::Send => "send",
            Dir::Recv => "recv",
        })
    }
}

/// Sort of a role parameter; `mesg` declares an indeterminate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamSort {
    Atom(Sort),
    Mesg,
}

impl fmt::Display for ParamSort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamSort::Atom(s) => write!(f, "{s}"),
            ParamSort::Mesg => f.write_str("mesg"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Role {
    pub name: String,
    /// Ordered by first textual appearance in the declaration; this is
    /// the canonical argument order of the role predicates.
    pub params: Vec<(String, ParamSort)>,
    pub trace: Vec<(Dir, Message)>,
}

pub const LISTENER_ROLE: &str = "lsn";

impl Role {
    /// The listener role: a single reception of an indeterminate.
    pub fn listener() -> Role {
        Role {
            name: LISTENER_ROLE.to_string(),
            params: vec![("x".to_string(), ParamSort::Mesg)],
            trace: vec![(Dir::Recv, Message::Ind("x".to_string()))],
        }
    }

    pub fn param_sort(&self, id: &str) -> Option<ParamSort> {
        self.params.iter().find(|(p, _)| p == id).map(|(_, s)| *s)
    }

    /// Parameters appearing in the first `j` templates, in canonical order.
    pub fn params_through(&self, j: usize) -> Vec<(String, ParamSort)> {
        let mut seen: Vec<(String, ParamSort)> = Vec::new();
        for (_, t) in self.trace.iter().take(j) {
            let mut atoms = Vec::new();
            t.atoms(&mut atoms);
            let mut inds = Vec::new();
            t.indeterminates(&mut inds);
            for (p, s) in &self.params {
                let present = match s {
                    ParamSort::Atom(sort) => atoms
                        .iter()
                        .any(|a| a.base_atom() == Atom::base(p.clone(), *sort)),
                    ParamSort::Mesg => inds.iter().any(|x| x == p),
                };
                if present && !seen.iter().any(|(q, _)| q == p) {
                    seen.push((p.clone(), *s));
                }
            }
        }
        // keep canonical (declaration) order
        let mut ordered = Vec::new();
        for (p, s) in &self.params {
            if seen.iter().any(|(q, _)| q == p) {
                ordered.push((p.clone(), *s));
            }
        }
        let _ = seen;
        ordered
    }

    fn var_set(&self) -> RoleVars {
        RoleVars {
            atoms: self
                .params
                .iter()
                .filter_map(|(p, s)| match s {
                    ParamSort::Atom(sort) => Some(Atom::base(p.clone(), *sort)),
                    ParamSort::Mesg => None,
                })
                .collect(),
            inds: self
                .params
                .iter()
                .filter_map(|(p, s)| match s {
                    ParamSort::Mesg => Some(p.clone()),
                    ParamSort::Atom(_) => None,
                })
                .collect(),
        }
    }
}

struct RoleVars {
    atoms: Vec<Atom>,
    inds: Vec<String>,
}

impl VarSet for RoleVars {
    fn is_atom_var(&self, a: &Atom) -> bool {
        self.atoms.contains(a)
    }
    fn is_ind_var(&self, x: &str) -> bool {
        self.inds.iter().any(|i| i == x)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    pub name: String,
    /// Declared roles followed by the implicit listener role.
    pub roles: Vec<Role>,
}

impl Protocol {
    pub fn role(&self, name: &str) -> Option<&Role> {
        self.roles.iter().find(|r| r.name == name)
    }
}

/// A (possibly partial) instance of a role: the first `length` events
/// under `binding`.
#[derive(Debug, Clone)]
pub struct StrandInstance {
    pub role_name: String,
    pub length: usize,
    pub binding: Subst,
    pub events: Vec<(Dir, Message)>,
}

// binding is derived data; structural identity is the events
impl PartialEq for StrandInstance {
    fn eq(&self, other: &Self) -> bool {
        self.role_name == other.role_name
            && self.length == other.length
            && self.events == other.events
    }
}
impl Eq for StrandInstance {}

#[derive(Debug, thiserror::Error)]
pub enum ProtocolError {
    #[error(transparent)]
    Syntax(#[from] sexpr::SyntaxError),
    #[error("at {pos}: undeclared identifier `{id}`")]
    Undeclared { id: String, pos: Pos },
    #[error("at {pos}: duplicate role name `{name}`")]
    DuplicateRole { name: String, pos: Pos },
    #[error("at {pos}: duplicate parameter `{id}`")]
    DuplicateParam { id: String, pos: Pos },
    #[error("at {pos}: role `{name}` has an empty trace")]
    EmptyTrace { name: String, pos: Pos },
    #[error("at {pos}: {msg}")]
    Malformed { msg: String, pos: Pos },
    #[error("instantiate: length {length} out of range for role `{role}` (trace length {max})")]
    BadLength { role: String, length: usize, max: usize },
}

fn malformed(pos: Pos, msg: impl Into<String>) -> ProtocolError {
    ProtocolError::Malformed { msg: msg.into(), pos }
}

/// Parse a message in an environment of declared identifiers.
pub fn parse_message(
    e: &Sexpr,
    env: &BTreeMap<String, ParamSort>,
) -> Result<Message, ProtocolError> {
    match e {
        Sexpr::Sym(id, pos) => match env.get(id) {
            Some(ParamSort::Atom(sort)) => Ok(Message::Atom(Atom::base(id.clone(), *sort))),
            Some(ParamSort::Mesg) => Ok(Message::Ind(id.clone())),
            None => Err(ProtocolError::Undeclared { id: id.clone(), pos: *pos }),
        },
        Sexpr::List(items, pos) => {
            let head = items
                .first()
                .and_then(|h| h.as_sym())
                .ok_or_else(|| malformed(*pos, "expected operator"))?;
            let args = &items[1..];
            match head {
                "enc" => {
                    if args.len() < 2 {
                        return Err(malformed(*pos, "enc needs a plaintext and a key"));
                    }
                    let key = parse_message(args.last().unwrap(), env)?;
                    let parts: Vec<Message> = args[..args.len() - 1]
                        .iter()
                        .map(|a| parse_message(a, env))
                        .collect::<Result<_, _>>()?;
                    Ok(Message::enc(cat_right(parts), key))
                }
                "cat" => {
                    if args.len() < 2 {
                        return Err(malformed(*pos, "cat needs at least two parts"));
                    }
                    let parts: Vec<Message> =
                        args.iter().map(|a| parse_message(a, env)).collect::<Result<_, _>>()?;
                    Ok(cat_right(parts))
                }
                "tag" => {
                    let tag = match args.first() {
                        Some(Sexpr::Str(s, _)) => s.clone(),
                        _ => return Err(malformed(*pos, "tag needs a string literal")),
                    };
                    if args.len() != 3 {
                        return Err(malformed(*pos, "tag needs exactly two parts"));
                    }
                    let l = parse_message(&args[1], env)?;
                    let r = parse_message(&args[2], env)?;
                    Ok(Message::tagged(tag, l, r))
                }
                "sk" | "pk" => {
                    let name = name_arg(head, args, env, *pos)?;
                    Ok(Message::Atom(if head == "sk" {
                        Atom::Sig(name)
                    } else {
                        Atom::Pub(name)
                    }))
                }
                "invk" => {
                    if args.len() != 1 {
                        return Err(malformed(*pos, "invk needs one argument"));
                    }
                    match parse_message(&args[0], env)? {
                        Message::Atom(a) => Ok(Message::Atom(a.invert())),
                        _ => Err(malformed(*pos, "invk applies to an atomic key")),
                    }
                }
                other => Err(malformed(*pos, format!("unknown operator `{other}`"))),
            }
        }
        Sexpr::Str(_, pos) | Sexpr::Int(_, pos) => {
            Err(malformed(*pos, "expected an identifier or operator form"))
        }
    }
}

fn name_arg(
    head: &str,
    args: &[Sexpr],
    env: &BTreeMap<String, ParamSort>,
    pos: Pos,
) -> Result<String, ProtocolError> {
    if args.len() != 1 {
        return Err(malformed(pos, format!("{head} needs one name argument")));
    }
    match &args[0] {
        Sexpr::Sym(id, p) => match env.get(id) {
            Some(ParamSort::Atom(Sort::Name)) => Ok(id.clone()),
            Some(_) => Err(malformed(*p, format!("{head} applies to a name, `{id}` is not"))),
            None => Err(ProtocolError::Undeclared { id: id.clone(), pos: *p }),
        },
        other => Err(malformed(other.pos(), format!("{head} needs a name identifier"))),
    }
}

fn cat_right(mut parts: Vec<Message>) -> Message {
    let mut acc = parts.pop().expect("nonempty");
    while let Some(m) = parts.pop() {
        acc = Message::cat(m, acc);
    }
    acc
}

/// Parse and validate a protocol source file.
pub fn parse_protocol(source: &str) -> Result<Protocol, ProtocolError> {
    let top = sexpr::parse_one(source)?;
    let items = top
        .as_list()
        .ok_or_else(|| malformed(top.pos(), "expected (defprotocol ...)"))?;
    if items.first().and_then(|h| h.as_sym()) != Some("defprotocol") {
        return Err(malformed(top.pos(), "expected (defprotocol ...)"));
    }
    let name = items
        .get(1)
        .and_then(|h| h.as_sym())
        .ok_or_else(|| malformed(top.pos(), "defprotocol needs a name"))?
        .to_string();

    let mut roles: Vec<Role> = Vec::new();
    for form in &items[2..] {
        let role = parse_role(form)?;
        if roles.iter().any(|r| r.name == role.name) || role.name == LISTENER_ROLE {
            return Err(ProtocolError::DuplicateRole { name: role.name, pos: form.pos() });
        }
        roles.push(role);
    }
    roles.push(Role::listener());
    Ok(Protocol { name, roles })
}

fn parse_role(e: &Sexpr) -> Result<Role, ProtocolError> {
    let items = e
        .as_list()
        .ok_or_else(|| malformed(e.pos(), "expected (defrole ...)"))?;
    if items.first().and_then(|h| h.as_sym()) != Some("defrole") {
        return Err(malformed(e.pos(), "expected (defrole ...)"));
    }
    let name = items
        .get(1)
        .and_then(|h| h.as_sym())
        .ok_or_else(|| malformed(e.pos(), "defrole needs a name"))?
        .to_string();

    let vars_form = items
        .get(2)
        .and_then(|v| v.as_list())
        .filter(|v| v.first().and_then(|h| h.as_sym()) == Some("vars"))
        .ok_or_else(|| malformed(e.pos(), "defrole needs a (vars ...) block"))?;
    let mut params: Vec<(String, ParamSort)> = Vec::new();
    for decl in &vars_form[1..] {
        let group = decl
            .as_list()
            .ok_or_else(|| malformed(decl.pos(), "vars entries are (<id>+ <sort>)"))?;
        if group.len() < 2 {
            return Err(malformed(decl.pos(), "vars entries are (<id>+ <sort>)"));
        }
        let sort_sym = group
            .last()
            .unwrap()
            .as_sym()
            .ok_or_else(|| malformed(decl.pos(), "missing sort"))?;
        let psort = if sort_sym == "mesg" {
            ParamSort::Mesg
        } else {
            ParamSort::Atom(
                Sort::parse(sort_sym)
                    .ok_or_else(|| malformed(decl.pos(), format!("unknown sort `{sort_sym}`")))?,
            )
        };
        for id_form in &group[..group.len() - 1] {
            let id = id_form
                .as_sym()
                .ok_or_else(|| malformed(id_form.pos(), "expected identifier"))?;
            if params.iter().any(|(p, _)| p == id) {
                return Err(ProtocolError::DuplicateParam { id: id.to_string(), pos: id_form.pos() });
            }
            params.push((id.to_string(), psort));
        }
    }
    let env: BTreeMap<String, ParamSort> = params.iter().cloned().collect();

    let trace_form = items
        .get(3)
        .and_then(|v| v.as_list())
        .filter(|v| v.first().and_then(|h| h.as_sym()) == Some("trace"))
        .ok_or_else(|| malformed(e.pos(), "defrole needs a (trace ...) block"))?;
    let mut trace = Vec::new();
    for ev in &trace_form[1..] {
        let pair = ev
            .as_list()
            .filter(|p| p.len() == 2)
            .ok_or_else(|| malformed(ev.pos(), "trace events are (send <msg>) or (recv <msg>)"))?;
        let dir = match pair[0].as_sym() {
            Some("send") => Dir::Send,
            Some("recv") => Dir::Recv,
            _ => return Err(malformed(ev.pos(), "trace events are (send <msg>) or (recv <msg>)")),
        };
        trace.push((dir, parse_message(&pair[1], &env)?));
    }
    if trace.is_empty() {
        return Err(ProtocolError::EmptyTrace { name, pos: e.pos() });
    }
    Ok(Role { name, params, trace })
}

/// Pretty-print a protocol back to its source grammar.
pub fn pretty_protocol(p: &Protocol) -> String {
    let mut out = format!("(defprotocol {}", p.name);
    for role in &p.roles {
        if role.name == LISTENER_ROLE {
            continue;
        }
        out.push_str(&format!("\n  (defrole {}\n    (vars", role.name));
        for (id, s) in &role.params {
            out.push_str(&format!(" ({id} {s})"));
        }
        out.push_str(")\n    (trace");
        for (d, m) in &role.trace {
            out.push_str(&format!(" ({d} {m})"));
        }
        out.push_str("))");
    }
    out.push(')');
    out
}

/// Instantiate the first `length` events of a role under `binding`.
/// Params not bound keep their declared identifiers as atoms; callers
/// that need disjoint parameters bind them to fresh atoms first.
pub fn instantiate(
    role: &Role,
    binding: &Subst,
    length: usize,
) -> Result<StrandInstance, ProtocolError> {
    if length == 0 || length > role.trace.len() {
        return Err(ProtocolError::BadLength {
            role: role.name.clone(),
            length,
            max: role.trace.len(),
        });
    }
    let events = role.trace[..length]
        .iter()
        .map(|(d, t)| (*d, binding.apply(t)))
        .collect();
    Ok(StrandInstance {
        role_name: role.name.clone(),
        length,
        binding: binding.clone(),
        events,
    })
}

/// One-sided matching of a strand prefix against a role: returns the
/// parameter substitution when the events are an instance of the role's
/// first `j` nodes. Indeterminates on the event side are constants.
pub fn instance_of(events: &[(Dir, Message)], role: &Role, j: usize) -> Option<Subst> {
    if events.len() != j || j == 0 || j > role.trace.len() {
        return None;
    }
    let vars = role.var_set();
    let mut sub = Subst::new();
    for (i, (dir, msg)) in events.iter().enumerate() {
        let (tdir, template) = &role.trace[i];
        if dir != tdir {
            return None;
        }
        if !match_under(&mut sub, &vars, template, msg) {
            return None;
        }
    }
    Some(sub)
}

pub const BLANCHET: &str = include_str!("../fixtures/blanchet.prot");
pub const BLANCHET_FIX: &str = include_str!("../fixtures/blanchet-fix.prot");

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::Sort;

    fn blanchet() -> Protocol {
        parse_protocol(BLANCHET).unwrap()
    }

    #[test]
    fn parses_blanchet() {
        let p = blanchet();
        assert_eq!(p.name, "blanchet");
        let init = p.role("init").unwrap();
        let resp = p.role("resp").unwrap();
        assert_eq!(init.trace.len(), 2);
        assert_eq!(resp.trace.len(), 2);
        assert_eq!(init.trace[0].0, Dir::Send);
        assert_eq!(resp.trace[0].0, Dir::Recv);
        assert!(p.role(LISTENER_ROLE).is_some());
    }

    #[test]
    fn undeclared_identifier_is_named() {
        let src = "(defprotocol bad (defrole r (vars (a name)) (trace (send z))))";
        let err = parse_protocol(src).unwrap_err();
        assert!(matches!(err, ProtocolError::Undeclared { ref id, .. } if id == "z"));
    }

    #[test]
    fn parses_corrected_protocol() {
        let p = parse_protocol(BLANCHET_FIX).unwrap();
        let init = p.role("init").unwrap();
        // initiator sends enc(enc(cat(k, b), sk(a)), pk(b))
        match &init.trace[0].1 {
            Message::Enc(inner, _) => match inner.as_ref() {
                Message::Enc(plain, _) => {
                    assert!(matches!(plain.as_ref(), Message::Tag(t, _, _) if t == "nil"))
                }
                other => panic!("unexpected {other}"),
            },
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn roundtrip_pretty_parse() {
        let p = blanchet();
        let p2 = parse_protocol(&pretty_protocol(&p)).unwrap();
        assert_eq!(p, p2);
    }

    #[test]
    fn instantiate_and_instance_of() {
        let p = blanchet();
        let init = p.role("init").unwrap();
        let mut binding = Subst::new();
        let pairs = [("a", "A", Sort::Name), ("b", "B", Sort::Name), ("k", "K", Sort::Skey), ("s", "S", Sort::Text)];
        for (v, val, sort) in &pairs {
            assert!(crate::term::match_atom_under(
                &mut binding,
                &crate::term::AllVars,
                &Atom::base(*v, *sort),
                &Atom::base(*val, *sort)
            ));
        }
        let s = instantiate(init, &binding, 2).unwrap();
        assert_eq!(s.events.len(), 2);
        assert_eq!(
            format!("{}", s.events[0].1),
            "(enc (enc K (sk A)) (pk B))"
        );
        assert_eq!(format!("{}", s.events[1].1), "(enc S K)");

        // round-trip through instance_of
        let got = instance_of(&s.events, init, 2).expect("instance");
        assert_eq!(got.apply_atom(&Atom::base("a", Sort::Name)), Atom::base("A", Sort::Name));
        assert_eq!(got.apply_atom(&Atom::base("s", Sort::Text)), Atom::base("S", Sort::Text));

        // direction mismatch: init node 1 is a send, resp node 1 a recv
        assert!(instance_of(&s.events[..1], p.role("resp").unwrap(), 1).is_none());

        // prefix instantiation leaves s unbound
        let s1 = instantiate(init, &binding, 1).unwrap();
        assert_eq!(s1.events.len(), 1);
    }

    #[test]
    fn listener_matches_any_reception() {
        let p = blanchet();
        let lsn = p.role(LISTENER_ROLE).unwrap();
        let msg = Message::Atom(Atom::base("S", Sort::Text));
        let events = vec![(Dir::Recv, msg.clone())];
        let sub = instance_of(&events, lsn, 1).expect("listener instance");
        assert_eq!(sub.lookup_ind("x"), Some(&msg));
    }
}
