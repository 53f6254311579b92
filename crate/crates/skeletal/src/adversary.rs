//! Adversary derivability: what the penetrator can build from the
//! messages regular participants have transmitted, and the realized
//! check for skeletons.

use std::collections::BTreeSet;

use crate::protocol::Dir;
use crate::skeleton::{NodeRef, Skeleton};
use crate::term::{Atom, Message};

/// The assumptions constraining adversary creation: atoms declared
/// non-originating, and uniquely-originating atoms that already have an
/// origination point (and so cannot be re-originated by the adversary).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AdversaryContext {
    pub non: BTreeSet<Atom>,
    pub unique_originated: BTreeSet<Atom>,
}

impl AdversaryContext {
    /// Atoms the adversary may invent out of thin air.
    pub fn creatable(&self, a: &Atom) -> bool {
        !self.non.contains(a) && !self.unique_originated.contains(a)
    }

    /// Build the context for a skeleton: `non` is carried over and a
    /// unique atom counts as spent once it originates anywhere.
    pub fn of_skeleton(sk: &Skeleton) -> AdversaryContext {
        AdversaryContext {
            non: sk.non.clone(),
            unique_originated: sk
                .unique
                .iter()
                .filter(|a| !sk.origination_nodes(a).is_empty())
                .cloned()
                .collect(),
        }
    }
}

/// Can the adversary produce `target` from `available`? Closure under
/// pairing/unpairing, encryption, decryption with a derivable key, and
/// creation of unconstrained atoms and indeterminates.
pub fn derivable(ctx: &AdversaryContext, available: &[Message], target: &Message) -> bool {
    let knowledge = analyze(ctx, available);
    synthesizable(ctx, &knowledge, target)
}

/// Saturate the available messages under decomposition: split
/// concatenations, and open an encryption once its decryption key is
/// synthesizable from everything learned so far.
fn analyze(ctx: &AdversaryContext, available: &[Message]) -> BTreeSet<Message> {
    let mut knowledge: BTreeSet<Message> = available.iter().cloned().collect();
    loop {
        let mut learned: Vec<Message> = Vec::new();
        for m in &knowledge {
            match m {
                Message::Tag(_, l, r) => {
                    for part in [l.as_ref(), r.as_ref()] {
                        if !knowledge.contains(part) {
                            learned.push(part.clone());
                        }
                    }
                }
                Message::Enc(p, _) => {
                    let key = m.decryption_key().expect("encryption has a decryption key");
                    if !knowledge.contains(p.as_ref()) && synthesizable(ctx, &knowledge, &key) {
                        learned.push(p.as_ref().clone());
                    }
                }
                _ => {}
            }
        }
        if learned.is_empty() {
            return knowledge;
        }
        knowledge.extend(learned);
    }
}

/// Structural synthesis from a fixed knowledge set.
fn synthesizable(ctx: &AdversaryContext, knowledge: &BTreeSet<Message>, t: &Message) -> bool {
    if knowledge.contains(t) {
        return true;
    }
    match t {
        Message::Atom(a) => ctx.creatable(a),
        Message::Ind(_) => true,
        Message::Enc(p, k) => {
            synthesizable(ctx, knowledge, p) && synthesizable(ctx, knowledge, k)
        }
        Message::Tag(_, l, r) => {
            synthesizable(ctx, knowledge, l) && synthesizable(ctx, knowledge, r)
        }
    }
}

/// Transmissions strictly preceding `n` in the skeleton order.
pub fn messages_before(sk: &Skeleton, n: NodeRef) -> Vec<Message> {
    sk.nodes()
        .filter(|m| sk.dir(*m) == Dir::Send && sk.precedes(*m, n))
        .map(|m| sk.msg(m).clone())
        .collect()
}

/// Reception nodes whose message the adversary cannot supply from
/// earlier transmissions. Empty iff the skeleton is realized.
pub fn underivable_receptions(sk: &Skeleton) -> Vec<NodeRef> {
    let ctx = AdversaryContext::of_skeleton(sk);
    sk.nodes()
        .filter(|n| {
            sk.dir(*n) == Dir::Recv && !derivable(&ctx, &messages_before(sk, *n), sk.msg(*n))
        })
        .collect()
}

/// A skeleton is realized when every reception can be explained by the
/// adversary using only earlier transmissions and permitted creations.
pub fn realized(sk: &Skeleton) -> bool {
    underivable_receptions(sk).is_empty()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::term::Sort;

    fn atom(id: &str, sort: Sort) -> Message {
        Message::Atom(Atom::base(id, sort))
    }

    fn sig(n: &str) -> Message {
        Message::Atom(Atom::Sig(n.into()))
    }

    fn pubk(n: &str) -> Message {
        Message::Atom(Atom::Pub(n.into()))
    }

    fn inv(a: Atom) -> Atom {
        a.invert()
    }

    #[test]
    fn creation_rules() {
        let mut ctx = AdversaryContext::default();
        ctx.non.insert(Atom::Sig("A".into()));
        ctx.unique_originated.insert(Atom::base("K", Sort::Skey));
        assert!(!derivable(&ctx, &[], &sig("A")));
        assert!(!derivable(&ctx, &[], &atom("K", Sort::Skey)));
        assert!(derivable(&ctx, &[], &atom("K2", Sort::Skey)));
        assert!(derivable(&ctx, &[], &pubk("A")));
        assert!(derivable(&ctx, &[], &Message::Ind("x".into())));
        // unprotected ingredients can be repackaged
        assert!(derivable(
            &ctx,
            &[atom("K", Sort::Skey)],
            &Message::enc(atom("K", Sort::Skey), pubk("B"))
        ));
    }

    #[test]
    fn pairing_and_unpairing() {
        let ctx = AdversaryContext::default();
        let pair = Message::cat(atom("N", Sort::Nonce), atom("M", Sort::Nonce));
        let mut ctx2 = ctx.clone();
        ctx2.unique_originated.insert(Atom::base("N", Sort::Nonce));
        ctx2.unique_originated.insert(Atom::base("M", Sort::Nonce));
        assert!(derivable(&ctx2, &[pair.clone()], &atom("M", Sort::Nonce)));
        assert!(!derivable(&ctx2, &[], &pair));
        assert!(derivable(&ctx2, &[atom("N", Sort::Nonce), atom("M", Sort::Nonce)], &pair));
    }

    #[test]
    fn decryption_needs_the_inverse_key() {
        // enc(K, pk B): opening needs inv(pk B)
        let mut ctx = AdversaryContext::default();
        ctx.unique_originated.insert(Atom::base("K", Sort::Skey));
        let m = Message::enc(atom("K", Sort::Skey), pubk("B"));
        assert!(!{
            let mut c = ctx.clone();
            c.non.insert(inv(Atom::Pub("B".into())));
            derivable(&c, &[m.clone()], &atom("K", Sort::Skey))
        });
        // without the non assumption the private key is creatable
        assert!(derivable(&ctx, &[m], &atom("K", Sort::Skey)));
    }

    #[test]
    fn decrypt_and_reencrypt_for_a_new_peer() {
        // the adversary peels pk(C) from enc(enc(K, sk A), pk C) when
        // C is a compromised identity, then re-encrypts for B: the
        // signed unit itself stays intact because sk(A) is safe
        let mut ctx = AdversaryContext::default();
        ctx.non.insert(Atom::Sig("A".into()));
        ctx.non.insert(inv(Atom::Pub("B".into())));
        ctx.unique_originated.insert(Atom::base("K", Sort::Skey));
        let signed = Message::enc(atom("K", Sort::Skey), sig("A"));
        let sent = Message::enc(signed.clone(), pubk("C"));
        let redirected = Message::enc(signed.clone(), pubk("B"));
        assert!(derivable(&ctx, &[sent.clone()], &redirected));
        // but the signed unit cannot be forged for a different key
        let forged = Message::enc(atom("K2", Sort::Skey), sig("A"));
        assert!(!derivable(&ctx, &[sent.clone()], &forged));
        // and K itself leaks through the open signature
        assert!(derivable(&ctx, &[sent], &atom("K", Sort::Skey)));
    }

    #[test]
    fn key_chains_resolve_in_any_order() {
        // k2 protected by k1, target protected by k2; k1 arrives last
        let mut ctx = AdversaryContext::default();
        for id in ["K1", "K2", "N"] {
            ctx.unique_originated
                .insert(Atom::base(id, if id == "N" { Sort::Nonce } else { Sort::Skey }));
        }
        let avail = [
            Message::enc(atom("N", Sort::Nonce), atom("K2", Sort::Skey)),
            Message::enc(atom("K2", Sort::Skey), atom("K1", Sort::Skey)),
            atom("K1", Sort::Skey),
        ];
        assert!(derivable(&ctx, &avail, &atom("N", Sort::Nonce)));
        assert!(!derivable(&ctx, &avail[..2], &atom("N", Sort::Nonce)));
    }

    #[test]
    fn monotone_in_available_messages() {
        let mut ctx = AdversaryContext::default();
        ctx.unique_originated.insert(Atom::base("N", Sort::Nonce));
        let extra = atom("X", Sort::Text);
        let m = Message::enc(atom("N", Sort::Nonce), atom("K", Sort::Skey));
        assert!(derivable(&ctx, &[m.clone()], &atom("N", Sort::Nonce)));
        assert!(derivable(&ctx, &[m, extra], &atom("N", Sort::Nonce)));
    }

    #[test]
    fn realized_cases() {
        use crate::protocol::{instantiate, parse_protocol, BLANCHET};
        use crate::skeleton::NodeRef;
        use crate::term::{match_atom_under, AllVars, Subst};

        let p = parse_protocol(BLANCHET).unwrap();
        let mut binding = Subst::new();
        for (v, val, sort) in [
            ("a", "A", Sort::Name),
            ("b", "B", Sort::Name),
            ("k", "K", Sort::Skey),
            ("s", "S", Sort::Text),
        ] {
            assert!(match_atom_under(
                &mut binding,
                &AllVars,
                &Atom::base(v, sort),
                &Atom::base(val, sort)
            ));
        }
        let mut sk = Skeleton::empty();
        sk.strands.push(instantiate(p.role("init").unwrap(), &binding, 2).unwrap());
        sk.unique.insert(Atom::base("K", Sort::Skey));
        sk.non.insert(Atom::Sig("A".into()));
        sk.non.insert(inv(Atom::Pub("B".into())));
        // the lone initiator cannot get its reply: enc(S, K) needs K
        assert_eq!(underivable_receptions(&sk), vec![NodeRef::new(0, 2)]);
        assert!(!realized(&sk));

        // add the responder and the connecting order edges
        sk.strands.push(instantiate(p.role("resp").unwrap(), &binding, 2).unwrap());
        sk.order.insert((NodeRef::new(0, 1), NodeRef::new(1, 1)));
        sk.order.insert((NodeRef::new(1, 2), NodeRef::new(0, 2)));
        assert!(realized(&sk));

        // drop the edge feeding the initiator's reception: no longer
        // realized
        sk.order.remove(&(NodeRef::new(1, 2), NodeRef::new(0, 2)));
        assert!(!realized(&sk));
    }
}
