//! The goal language: role predicates and structural predicates over
//! skeletons, security claims, security goals, and their Tarskian
//! satisfaction relation.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::protocol::{instance_of, ParamSort, Protocol};
use crate::sexpr::{parse_one, Pos, Sexpr, SyntaxError};
use crate::skeleton::{NodeRef, Skeleton};
use crate::term::{Atom, Message, Sort};

/// A term of the goal language: a variable or a key built with the
/// three key function symbols.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum GoalTerm {
    Var(String),
    Sk(Box<GoalTerm>),
    Pk(Box<GoalTerm>),
    Inv(Box<GoalTerm>),
}

impl GoalTerm {
    pub fn var(x: impl Into<String>) -> GoalTerm {
        GoalTerm::Var(x.into())
    }

    pub fn vars(&self, out: &mut BTreeSet<String>) {
        match self {
            GoalTerm::Var(x) => {
                out.insert(x.clone());
            }
            GoalTerm::Sk(t) | GoalTerm::Pk(t) | GoalTerm::Inv(t) => t.vars(out),
        }
    }

    fn substitute(&self, map: &BTreeMap<String, GoalTerm>) -> GoalTerm {
        match self {
            GoalTerm::Var(x) => map.get(x).cloned().unwrap_or_else(|| self.clone()),
            GoalTerm::Sk(t) => GoalTerm::Sk(Box::new(t.substitute(map))),
            GoalTerm::Pk(t) => GoalTerm::Pk(Box::new(t.substitute(map))),
            GoalTerm::Inv(t) => match t.substitute(map) {
                // collapse a double inverse produced by substitution
                GoalTerm::Inv(u) => *u,
                u => GoalTerm::Inv(Box::new(u)),
            },
        }
    }
}

impl fmt::Display for GoalTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GoalTerm::Var(x) => f.write_str(x),
            GoalTerm::Sk(t) => write!(f, "(sk {t})"),
            GoalTerm::Pk(t) => write!(f, "(pk {t})"),
            GoalTerm::Inv(t) => write!(f, "(inv {t})"),
        }
    }
}

/// Atomic formulas. The listener predicate is represented as a role
/// predicate on the built-in listener role.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AtomicFormula {
    RolePred {
        role: String,
        /// 1-based node position within the role's trace.
        index: usize,
        node_var: String,
        /// Named role-parameter arguments, in the role's canonical order.
        args: Vec<(String, GoalTerm)>,
    },
    Non(GoalTerm),
    Unq(GoalTerm),
    Col(String, String),
    Preceq(String, String),
    Eq(GoalTerm, GoalTerm),
    False,
}

impl AtomicFormula {
    pub fn is_role_pred(&self) -> bool {
        matches!(self, AtomicFormula::RolePred { .. })
    }

    /// Message variables occurring in argument terms (node variables
    /// excluded).
    pub fn term_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            AtomicFormula::RolePred { args, .. } => {
                for (_, t) in args {
                    t.vars(out);
                }
            }
            AtomicFormula::Non(t) | AtomicFormula::Unq(t) => t.vars(out),
            AtomicFormula::Eq(l, r) => {
                l.vars(out);
                r.vars(out);
            }
            AtomicFormula::Col(..) | AtomicFormula::Preceq(..) | AtomicFormula::False => {}
        }
    }

    pub fn node_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            AtomicFormula::RolePred { node_var, .. } => {
                out.insert(node_var.clone());
            }
            AtomicFormula::Col(m, n) | AtomicFormula::Preceq(m, n) => {
                out.insert(m.clone());
                out.insert(n.clone());
            }
            _ => {}
        }
    }

    fn substitute(&self, map: &BTreeMap<String, GoalTerm>) -> AtomicFormula {
        match self {
            AtomicFormula::RolePred { role, index, node_var, args } => AtomicFormula::RolePred {
                role: role.clone(),
                index: *index,
                node_var: node_var.clone(),
                args: args.iter().map(|(p, t)| (p.clone(), t.substitute(map))).collect(),
            },
            AtomicFormula::Non(t) => AtomicFormula::Non(t.substitute(map)),
            AtomicFormula::Unq(t) => AtomicFormula::Unq(t.substitute(map)),
            AtomicFormula::Eq(l, r) => AtomicFormula::Eq(l.substitute(map), r.substitute(map)),
            other => other.clone(),
        }
    }
}

impl fmt::Display for AtomicFormula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AtomicFormula::RolePred { role, index, node_var, args } => {
                write!(f, "(p {role:?} {index} {node_var}")?;
                for (p, t) in args {
                    write!(f, " ({p} {t})")?;
                }
                f.write_str(")")
            }
            AtomicFormula::Non(t) => write!(f, "(non {t})"),
            AtomicFormula::Unq(t) => write!(f, "(unq {t})"),
            AtomicFormula::Col(m, n) => write!(f, "(col {m} {n})"),
            AtomicFormula::Preceq(m, n) => write!(f, "(prec {m} {n})"),
            AtomicFormula::Eq(l, r) => write!(f, "(= {l} {r})"),
            AtomicFormula::False => f.write_str("(false)"),
        }
    }
}

/// A conjunction of atomic formulas obeying the two claim restrictions:
/// distinct node variables across role predicates, and every message
/// variable anchored in some role predicate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecurityClaim {
    pub conjuncts: Vec<AtomicFormula>,
}

/// Sort of a quantified goal variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoalVarSort {
    Node,
    Msg(ParamSort),
}

impl fmt::Display for GoalVarSort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GoalVarSort::Node => f.write_str("node"),
            GoalVarSort::Msg(s) => write!(f, "{s}"),
        }
    }
}

/// One disjunct of a conclusion: its existential variables and its
/// conjunction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Disjunct {
    pub exist_vars: Vec<(String, GoalVarSort)>,
    pub conjuncts: Vec<AtomicFormula>,
}

/// `∀ x̄ (hypothesis ⊃ ⋁ disjuncts)`; an empty disjunct list is the
/// conclusion `false`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SecurityGoal {
    pub label: String,
    pub universal_vars: Vec<(String, GoalVarSort)>,
    pub hypothesis: SecurityClaim,
    pub disjuncts: Vec<Disjunct>,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum GoalError {
    #[error(transparent)]
    Syntax(#[from] SyntaxError),
    #[error("{pos}: {msg}")]
    Invalid { pos: Pos, msg: String },
}

fn invalid(pos: Pos, msg: impl Into<String>) -> GoalError {
    GoalError::Invalid { pos, msg: msg.into() }
}

/// A partial assignment of goal variables to nodes or messages.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment {
    map: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Value {
    Node(NodeRef),
    Msg(Message),
}

impl Assignment {
    pub fn new() -> Assignment {
        Assignment::default()
    }

    pub fn bind(&mut self, x: impl Into<String>, v: Value) {
        self.map.insert(x.into(), v);
    }

    pub fn bind_node(&mut self, x: impl Into<String>, n: NodeRef) {
        self.bind(x, Value::Node(n));
    }

    pub fn bind_msg(&mut self, x: impl Into<String>, m: Message) {
        self.bind(x, Value::Msg(m));
    }

    pub fn get(&self, x: &str) -> Option<&Value> {
        self.map.get(x)
    }

    pub fn node(&self, x: &str) -> Option<NodeRef> {
        match self.map.get(x) {
            Some(Value::Node(n)) => Some(*n),
            _ => None,
        }
    }

    pub fn msg(&self, x: &str) -> Option<&Message> {
        match self.map.get(x) {
            Some(Value::Msg(m)) => Some(m),
            _ => None,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Value)> {
        self.map.iter()
    }
}

/// Evaluate a goal term to a message; `None` when a variable is
/// unassigned or a key constructor is applied to an unsuitable value.
pub fn eval_term(t: &GoalTerm, sigma: &Assignment) -> Option<Message> {
    match t {
        GoalTerm::Var(x) => sigma.msg(x).cloned(),
        GoalTerm::Sk(inner) | GoalTerm::Pk(inner) => {
            let name = match eval_term(inner, sigma)? {
                Message::Atom(Atom::Base { id, sort: Sort::Name }) => id,
                _ => return None,
            };
            Some(Message::Atom(if matches!(t, GoalTerm::Sk(_)) {
                Atom::Sig(name)
            } else {
                Atom::Pub(name)
            }))
        }
        GoalTerm::Inv(inner) => match eval_term(inner, sigma)? {
            Message::Atom(a) => Some(Message::Atom(a.invert())),
            // a non-atomic key is its own inverse
            other => Some(other),
        },
    }
}

/// Satisfaction of an atomic formula at `(sk, sigma)`. An undefined
/// variable makes the formula false.
pub fn satisfies_atomic(
    sk: &Skeleton,
    prot: &Protocol,
    sigma: &Assignment,
    f: &AtomicFormula,
) -> bool {
    match f {
        AtomicFormula::False => false,
        AtomicFormula::Eq(l, r) => match (eval_term(l, sigma), eval_term(r, sigma)) {
            (Some(a), Some(b)) => a == b,
            _ => false,
        },
        AtomicFormula::Non(t) => match eval_term(t, sigma) {
            Some(Message::Atom(a)) => sk.non.contains(&a),
            _ => false,
        },
        AtomicFormula::Unq(t) => match eval_term(t, sigma) {
            Some(Message::Atom(a)) => sk.unique.contains(&a),
            _ => false,
        },
        AtomicFormula::Col(m, n) => match (sigma.node(m), sigma.node(n)) {
            (Some(a), Some(b)) => sk.contains(a) && sk.contains(b) && a.strand == b.strand,
            _ => false,
        },
        AtomicFormula::Preceq(m, n) => match (sigma.node(m), sigma.node(n)) {
            (Some(a), Some(b)) => sk.contains(a) && sk.contains(b) && sk.precedes_eq(a, b),
            _ => false,
        },
        AtomicFormula::RolePred { role, index, node_var, args } => {
            let Some(n) = sigma.node(node_var) else {
                return false;
            };
            if !sk.contains(n) || n.pos != *index {
                return false;
            }
            let Some(r) = prot.role(role) else {
                return false;
            };
            let prefix = &sk.strands[n.strand].events[..*index];
            let Some(sub) = instance_of(prefix, r, *index) else {
                return false;
            };
            args.iter().all(|(p, t)| {
                let Some(want) = eval_term(t, sigma) else {
                    return false;
                };
                let have = match r.param_sort(p) {
                    Some(ParamSort::Atom(sort)) => {
                        sub.apply(&Message::Atom(Atom::base(p.clone(), sort)))
                    }
                    Some(ParamSort::Mesg) => sub.apply(&Message::Ind(p.clone())),
                    None => return false,
                };
                have == want
            })
        }
    }
}

pub fn satisfies_claim(
    sk: &Skeleton,
    prot: &Protocol,
    sigma: &Assignment,
    c: &SecurityClaim,
) -> bool {
    c.conjuncts.iter().all(|f| satisfies_atomic(sk, prot, sigma, f))
}

/// All messages occurring as role-instance parameters of the skeleton:
/// the witness domain for existential message variables.
pub fn parameter_closure(sk: &Skeleton, prot: &Protocol) -> Vec<Message> {
    let mut out: BTreeSet<Message> = BTreeSet::new();
    for s in &sk.strands {
        let Some(role) = prot.role(&s.role_name) else {
            continue;
        };
        let Some(sub) = instance_of(&s.events, role, s.length) else {
            continue;
        };
        for (p, ps) in role.params_through(s.length) {
            let v = match ps {
                ParamSort::Atom(sort) => sub.apply(&Message::Atom(Atom::base(p, sort))),
                ParamSort::Mesg => sub.apply(&Message::Ind(p)),
            };
            out.insert(v);
        }
    }
    out.into_iter().collect()
}

fn value_fits(v: &Message, sort: GoalVarSort) -> bool {
    match sort {
        GoalVarSort::Node => false,
        GoalVarSort::Msg(ParamSort::Mesg) => true,
        GoalVarSort::Msg(ParamSort::Atom(s)) => {
            matches!(v, Message::Atom(a) if a.sort() == s)
        }
    }
}

/// Does some disjunct of the goal's conclusion hold at `(sk, sigma)`
/// for some witness extension of `sigma` over its existential
/// variables?
pub fn satisfies_conclusion(
    sk: &Skeleton,
    prot: &Protocol,
    sigma: &Assignment,
    goal: &SecurityGoal,
) -> bool {
    let closure = parameter_closure(sk, prot);
    goal.disjuncts
        .iter()
        .any(|d| witness_search(sk, prot, sigma.clone(), &d.exist_vars, &d.conjuncts, &closure))
}

fn witness_search(
    sk: &Skeleton,
    prot: &Protocol,
    sigma: Assignment,
    vars: &[(String, GoalVarSort)],
    conjuncts: &[AtomicFormula],
    closure: &[Message],
) -> bool {
    match vars.first() {
        None => conjuncts.iter().all(|f| satisfies_atomic(sk, prot, &sigma, f)),
        Some((x, GoalVarSort::Node)) => sk.nodes().any(|n| {
            let mut s = sigma.clone();
            s.bind_node(x.clone(), n);
            witness_search(sk, prot, s, &vars[1..], conjuncts, closure)
        }),
        Some((x, sort)) => closure.iter().filter(|v| value_fits(v, *sort)).any(|v| {
            let mut s = sigma.clone();
            s.bind_msg(x.clone(), v.clone());
            witness_search(sk, prot, s, &vars[1..], conjuncts, closure)
        }),
    }
}

// ---------------------------------------------------------------------------
// Parsing and validation
// ---------------------------------------------------------------------------

struct VarEnv {
    sorts: BTreeMap<String, GoalVarSort>,
}

impl VarEnv {
    fn sort(&self, x: &str) -> Option<GoalVarSort> {
        self.sorts.get(x).copied()
    }
}

fn parse_var_decls(
    e: &Sexpr,
    env: &mut VarEnv,
    order: &mut Vec<(String, GoalVarSort)>,
) -> Result<(), GoalError> {
    let decls = e
        .as_list()
        .ok_or_else(|| invalid(e.pos(), "expected a variable declaration list"))?;
    for d in decls {
        let items = d
            .as_list()
            .ok_or_else(|| invalid(d.pos(), "expected (var... sort)"))?;
        if items.len() < 2 {
            return Err(invalid(d.pos(), "expected (var... sort)"));
        }
        let (sort_e, vars) = items.split_last().unwrap();
        let sort_sym = sort_e
            .as_sym()
            .ok_or_else(|| invalid(sort_e.pos(), "expected a sort symbol"))?;
        let sort = match sort_sym {
            "node" => GoalVarSort::Node,
            "mesg" => GoalVarSort::Msg(ParamSort::Mesg),
            other => match Sort::parse(other) {
                Some(s) => GoalVarSort::Msg(ParamSort::Atom(s)),
                None => return Err(invalid(sort_e.pos(), format!("unknown sort `{other}`"))),
            },
        };
        for v in vars {
            let name = v
                .as_sym()
                .ok_or_else(|| invalid(v.pos(), "expected a variable name"))?;
            if env.sorts.insert(name.to_string(), sort).is_some() {
                return Err(invalid(v.pos(), format!("duplicate variable `{name}`")));
            }
            order.push((name.to_string(), sort));
        }
    }
    Ok(())
}

fn parse_goal_term(e: &Sexpr, env: &VarEnv) -> Result<GoalTerm, GoalError> {
    match e {
        Sexpr::Sym(x, pos) => match env.sort(x) {
            Some(GoalVarSort::Node) => {
                Err(invalid(*pos, format!("node variable `{x}` used as a message term")))
            }
            Some(_) => Ok(GoalTerm::var(x.clone())),
            None => Err(invalid(*pos, format!("undeclared variable `{x}`"))),
        },
        Sexpr::List(items, pos) => {
            let head = items
                .first()
                .and_then(|h| h.as_sym())
                .ok_or_else(|| invalid(*pos, "expected (sk t), (pk t), or (inv t)"))?;
            if items.len() != 2 {
                return Err(invalid(*pos, format!("`{head}` takes exactly one argument")));
            }
            let inner = Box::new(parse_goal_term(&items[1], env)?);
            match head {
                "sk" => Ok(GoalTerm::Sk(inner)),
                "pk" => Ok(GoalTerm::Pk(inner)),
                "inv" => Ok(GoalTerm::Inv(inner)),
                other => Err(invalid(*pos, format!("unknown key constructor `{other}`"))),
            }
        }
        _ => Err(invalid(e.pos(), "expected a goal term")),
    }
}

fn expect_node_var<'a>(e: &'a Sexpr, env: &VarEnv) -> Result<&'a str, GoalError> {
    let x = e
        .as_sym()
        .ok_or_else(|| invalid(e.pos(), "expected a node variable"))?;
    match env.sort(x) {
        Some(GoalVarSort::Node) => Ok(x),
        Some(_) => Err(invalid(e.pos(), format!("`{x}` is not declared as a node variable"))),
        None => Err(invalid(e.pos(), format!("undeclared variable `{x}`"))),
    }
}

fn parse_atomic(e: &Sexpr, prot: &Protocol, env: &VarEnv) -> Result<AtomicFormula, GoalError> {
    let items = e
        .as_list()
        .ok_or_else(|| invalid(e.pos(), "expected an atomic formula"))?;
    let head = items
        .first()
        .and_then(|h| h.as_sym())
        .ok_or_else(|| invalid(e.pos(), "expected an atomic formula"))?;
    match head {
        "p" => {
            if items.len() < 4 {
                return Err(invalid(e.pos(), "expected (p \"role\" index nodevar args...)"));
            }
            let role_name = match &items[1] {
                Sexpr::Str(s, _) => s.clone(),
                other => return Err(invalid(other.pos(), "role name must be a string")),
            };
            let role = prot
                .role(&role_name)
                .ok_or_else(|| invalid(items[1].pos(), format!("unknown role `{role_name}`")))?;
            let index = match &items[2] {
                Sexpr::Int(i, _) if *i >= 1 && (*i as usize) <= role.trace.len() => *i as usize,
                other => {
                    return Err(invalid(
                        other.pos(),
                        format!("node index must be in 1..={}", role.trace.len()),
                    ))
                }
            };
            let node_var = expect_node_var(&items[3], env)?.to_string();
            let in_scope: Vec<String> =
                role.params_through(index).into_iter().map(|(p, _)| p).collect();
            let mut args: Vec<(String, GoalTerm)> = Vec::new();
            for arg in &items[4..] {
                let pair = arg
                    .as_list()
                    .ok_or_else(|| invalid(arg.pos(), "expected (param term)"))?;
                if pair.len() != 2 {
                    return Err(invalid(arg.pos(), "expected (param term)"));
                }
                let p = pair[0]
                    .as_sym()
                    .ok_or_else(|| invalid(pair[0].pos(), "expected a parameter name"))?;
                if !in_scope.iter().any(|q| q == p) {
                    return Err(invalid(
                        pair[0].pos(),
                        format!("`{p}` is not a parameter of `{role_name}` through node {index}"),
                    ));
                }
                if args.iter().any(|(q, _)| q == p) {
                    return Err(invalid(pair[0].pos(), format!("duplicate parameter `{p}`")));
                }
                args.push((p.to_string(), parse_goal_term(&pair[1], env)?));
            }
            // canonical parameter order
            args.sort_by_key(|(p, _)| in_scope.iter().position(|q| q == p).unwrap());
            Ok(AtomicFormula::RolePred { role: role_name, index, node_var, args })
        }
        "lsn" => {
            if items.len() != 3 {
                return Err(invalid(e.pos(), "expected (lsn nodevar term)"));
            }
            let node_var = expect_node_var(&items[1], env)?.to_string();
            let t = parse_goal_term(&items[2], env)?;
            Ok(AtomicFormula::RolePred {
                role: crate::protocol::LISTENER_ROLE.to_string(),
                index: 1,
                node_var,
                args: vec![("x".to_string(), t)],
            })
        }
        "non" | "unq" => {
            if items.len() != 2 {
                return Err(invalid(e.pos(), format!("expected ({head} term)")));
            }
            let t = parse_goal_term(&items[1], env)?;
            Ok(if head == "non" { AtomicFormula::Non(t) } else { AtomicFormula::Unq(t) })
        }
        "col" | "prec" => {
            if items.len() != 3 {
                return Err(invalid(e.pos(), format!("expected ({head} nodevar nodevar)")));
            }
            let m = expect_node_var(&items[1], env)?.to_string();
            let n = expect_node_var(&items[2], env)?.to_string();
            Ok(if head == "col" { AtomicFormula::Col(m, n) } else { AtomicFormula::Preceq(m, n) })
        }
        "=" => {
            if items.len() != 3 {
                return Err(invalid(e.pos(), "expected (= term term)"));
            }
            Ok(AtomicFormula::Eq(
                parse_goal_term(&items[1], env)?,
                parse_goal_term(&items[2], env)?,
            ))
        }
        "false" => {
            if items.len() != 1 {
                return Err(invalid(e.pos(), "expected (false)"));
            }
            Ok(AtomicFormula::False)
        }
        other => Err(invalid(e.pos(), format!("unknown predicate `{other}`"))),
    }
}

fn parse_conjunction(
    e: &Sexpr,
    prot: &Protocol,
    env: &VarEnv,
) -> Result<Vec<AtomicFormula>, GoalError> {
    let items = e
        .as_list()
        .ok_or_else(|| invalid(e.pos(), "expected (and ...)"))?;
    match items.first().and_then(|h| h.as_sym()) {
        Some("and") => items[1..].iter().map(|a| parse_atomic(a, prot, env)).collect(),
        _ => Err(invalid(e.pos(), "expected (and ...)")),
    }
}

/// Try to solve `l = r` as a variable binding, peeling matched key
/// constructors. `None` means the equation could not be reduced to a
/// binding (it is kept as a conjunct and treated by satisfaction).
fn solve_equation(l: &GoalTerm, r: &GoalTerm) -> Option<(String, GoalTerm)> {
    match (l, r) {
        // replace left by right when the left side is a variable
        (GoalTerm::Var(x), t) | (t, GoalTerm::Var(x)) => {
            let mut vs = BTreeSet::new();
            t.vars(&mut vs);
            if vs.contains(x) {
                None
            } else {
                Some((x.clone(), t.clone()))
            }
        }
        (GoalTerm::Sk(a), GoalTerm::Sk(b)) | (GoalTerm::Pk(a), GoalTerm::Pk(b)) => {
            solve_equation(a, b)
        }
        (GoalTerm::Inv(a), GoalTerm::Inv(b)) => solve_equation(a, b),
        (GoalTerm::Inv(a), b) | (b, GoalTerm::Inv(a)) => {
            solve_equation(a, &GoalTerm::Inv(Box::new(b.clone())))
        }
        _ => None,
    }
}

/// Eliminate solvable equations from the hypothesis by substituting
/// throughout the goal; returns the set of eliminated variables.
fn eliminate_equations(goal: &mut SecurityGoal) -> BTreeSet<String> {
    let mut eliminated = BTreeSet::new();
    loop {
        let found = goal.hypothesis.conjuncts.iter().enumerate().find_map(|(i, f)| {
            if let AtomicFormula::Eq(l, r) = f {
                // identities just disappear
                if l == r {
                    return Some((i, None));
                }
                solve_equation(l, r).map(|b| (i, Some(b)))
            } else {
                None
            }
        });
        let Some((i, binding)) = found else {
            return eliminated;
        };
        goal.hypothesis.conjuncts.remove(i);
        if let Some((x, t)) = binding {
            let map: BTreeMap<String, GoalTerm> = [(x.clone(), t)].into();
            eliminated.insert(x);
            for f in &mut goal.hypothesis.conjuncts {
                *f = f.substitute(&map);
            }
            for d in &mut goal.disjuncts {
                for f in &mut d.conjuncts {
                    *f = f.substitute(&map);
                }
            }
        }
    }
}

/// The two syntactic claim restrictions, plus anchoring of every node
/// variable.
fn validate_claim(conjuncts: &[AtomicFormula], what: &str) -> Result<(), GoalError> {
    let origin = Pos { line: 0, col: 0 };
    let mut role_nodes: BTreeSet<String> = BTreeSet::new();
    let mut role_term_vars: BTreeSet<String> = BTreeSet::new();
    for f in conjuncts {
        if let AtomicFormula::RolePred { node_var, .. } = f {
            if !role_nodes.insert(node_var.clone()) {
                return Err(invalid(
                    origin,
                    format!(
                        "{what}: node variable `{node_var}` is the first argument of two role \
                         predicates"
                    ),
                ));
            }
            f.term_vars(&mut role_term_vars);
        }
    }
    for f in conjuncts {
        if f.is_role_pred() {
            continue;
        }
        let mut tv = BTreeSet::new();
        f.term_vars(&mut tv);
        for x in tv.difference(&role_term_vars) {
            return Err(invalid(
                origin,
                format!("{what}: variable `{x}` does not appear in any role predicate"),
            ));
        }
        let mut nv = BTreeSet::new();
        f.node_vars(&mut nv);
        for x in nv.difference(&role_nodes) {
            return Err(invalid(
                origin,
                format!("{what}: node variable `{x}` does not appear in any role predicate"),
            ));
        }
    }
    Ok(())
}

/// Parse and validate a goal file against a protocol.
pub fn parse_goal(source: &str, prot: &Protocol) -> Result<SecurityGoal, GoalError> {
    let top = parse_one(source)?;
    let items = top
        .as_list()
        .ok_or_else(|| invalid(top.pos(), "expected (defgoal ...)"))?;
    if items.len() != 3 || items[0].as_sym() != Some("defgoal") {
        return Err(invalid(top.pos(), "expected (defgoal label (forall ...))"));
    }
    let label = items[1]
        .as_sym()
        .ok_or_else(|| invalid(items[1].pos(), "expected a goal label"))?
        .to_string();
    let forall = items[2]
        .as_list()
        .ok_or_else(|| invalid(items[2].pos(), "expected (forall ...)"))?;
    if forall.len() != 3 || forall[0].as_sym() != Some("forall") {
        return Err(invalid(items[2].pos(), "expected (forall (vars) (implies ...))"));
    }
    let mut env = VarEnv { sorts: BTreeMap::new() };
    let mut universal_vars = Vec::new();
    parse_var_decls(&forall[1], &mut env, &mut universal_vars)?;
    let implies = forall[2]
        .as_list()
        .ok_or_else(|| invalid(forall[2].pos(), "expected (implies ...)"))?;
    if implies.len() != 3 || implies[0].as_sym() != Some("implies") {
        return Err(invalid(forall[2].pos(), "expected (implies (and ...) conclusion)"));
    }
    let hypothesis = SecurityClaim { conjuncts: parse_conjunction(&implies[1], prot, &env)? };
    let disjuncts = parse_conclusion(&implies[2], prot, &mut env)?;

    let mut goal = SecurityGoal { label, universal_vars, hypothesis, disjuncts };
    let eliminated = eliminate_equations(&mut goal);
    goal.universal_vars.retain(|(x, _)| !eliminated.contains(x));
    for d in &mut goal.disjuncts {
        d.exist_vars.retain(|(x, _)| !eliminated.contains(x));
    }

    validate_claim(&goal.hypothesis.conjuncts, "hypothesis")?;
    // every universal variable must be pinned down by the hypothesis so
    // the characteristic construction can bind it
    let mut hyp_vars: BTreeSet<String> = BTreeSet::new();
    for f in &goal.hypothesis.conjuncts {
        f.term_vars(&mut hyp_vars);
        f.node_vars(&mut hyp_vars);
    }
    for (x, _) in &goal.universal_vars {
        if !hyp_vars.contains(x) {
            return Err(invalid(
                Pos { line: 0, col: 0 },
                format!("universal variable `{x}` does not occur in the hypothesis"),
            ));
        }
    }
    // each existential variable must be anchored in its own disjunct
    for d in &goal.disjuncts {
        let mut anchored: BTreeSet<String> = BTreeSet::new();
        for f in &d.conjuncts {
            if let AtomicFormula::RolePred { node_var, .. } = f {
                anchored.insert(node_var.clone());
                f.term_vars(&mut anchored);
            }
        }
        for (x, _) in &d.exist_vars {
            if !anchored.contains(x) {
                return Err(invalid(
                    Pos { line: 0, col: 0 },
                    format!("existential variable `{x}` is not anchored by a role predicate"),
                ));
            }
        }
    }
    Ok(goal)
}

fn parse_conclusion(
    e: &Sexpr,
    prot: &Protocol,
    env: &mut VarEnv,
) -> Result<Vec<Disjunct>, GoalError> {
    let items = e
        .as_list()
        .ok_or_else(|| invalid(e.pos(), "expected a conclusion"))?;
    match items.first().and_then(|h| h.as_sym()) {
        Some("false") if items.len() == 1 => Ok(Vec::new()),
        Some("exists") => Ok(vec![parse_exists(e, prot, env)?]),
        Some("or") => items[1..].iter().map(|b| parse_exists(b, prot, env)).collect(),
        _ => Err(invalid(e.pos(), "expected (false), (exists ...), or (or ...)")),
    }
}

fn parse_exists(e: &Sexpr, prot: &Protocol, env: &mut VarEnv) -> Result<Disjunct, GoalError> {
    let items = e
        .as_list()
        .ok_or_else(|| invalid(e.pos(), "expected (exists (vars) (and ...))"))?;
    if items.len() != 3 || items[0].as_sym() != Some("exists") {
        return Err(invalid(e.pos(), "expected (exists (vars) (and ...))"));
    }
    let mut exist_vars = Vec::new();
    parse_var_decls(&items[1], env, &mut exist_vars)?;
    let conjuncts = parse_conjunction(&items[2], prot, env)?;
    // existential scopes are independent across disjuncts
    for (x, _) in &exist_vars {
        env.sorts.remove(x);
    }
    Ok(Disjunct { exist_vars, conjuncts })
}
