//! Refobs, facts, and knowledge sets.
//!
//! A *refob* is a `(token, owner, target)` triple: the only handle through
//! which an owner may address a target. Each actor's system-level state is a
//! *knowledge set* of facts about refobs (creation, release, activation, and
//! message counts). The derivation relation [`KnowledgeSet::derives`] extends
//! plain membership with four closure rules:
//!
//! * a missing `SentCount` for a token derives `SentCount(x, 0)`;
//! * a missing `RecvCount` for a token derives `RecvCount(x, 0)`;
//! * `Created(x)` without `Released(x)` derives `Unreleased(x)`;
//! * `CreatedUsing(x, y)` derives `Created(y)`.
//!
//! Everything in this module is a pure value; there is no protocol logic here.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

/// Whether an actor lives inside the tracked system or in its environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActorKind {
    Internal,
    External,
}

/// A unique actor address. Ids are allocated from a single per-run counter,
/// so a name's id never repeats; the kind never changes once assigned.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActorName {
    pub id: u32,
    pub kind: ActorKind,
}

impl ActorName {
    pub fn internal(id: u32) -> Self {
        ActorName { id, kind: ActorKind::Internal }
    }

    pub fn external(id: u32) -> Self {
        ActorName { id, kind: ActorKind::External }
    }

    pub fn is_internal(&self) -> bool {
        self.kind == ActorKind::Internal
    }

    pub fn is_external(&self) -> bool {
        self.kind == ActorKind::External
    }
}

/// Render an id in bijective base-26: 0 -> A, 25 -> Z, 26 -> AA, ...
fn letters(mut id: u32) -> String {
    let mut out = Vec::new();
    loop {
        out.push(b'A' + (id % 26) as u8);
        id /= 26;
        if id == 0 {
            break;
        }
        id -= 1;
    }
    out.reverse();
    String::from_utf8(out).unwrap()
}

/// Parse the bijective base-26 rendering produced by [`letters`].
fn unletters(s: &str) -> Option<u32> {
    if s.is_empty() {
        return None;
    }
    let mut id: u64 = 0;
    for c in s.chars() {
        if !c.is_ascii_uppercase() {
            return None;
        }
        id = id * 26 + (c as u64 - 'A' as u64 + 1);
        if id > u32::MAX as u64 {
            return None;
        }
    }
    Some((id - 1) as u32)
}

impl fmt::Display for ActorName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ActorKind::Internal => write!(f, "{}", letters(self.id)),
            ActorKind::External => write!(f, "{}*", letters(self.id)),
        }
    }
}

impl ActorName {
    pub fn parse(s: &str) -> Option<ActorName> {
        if let Some(base) = s.strip_suffix('*') {
            Some(ActorName::external(unletters(base)?))
        } else {
            Some(ActorName::internal(unletters(s)?))
        }
    }
}

/// A globally unique reference token.
///
/// Ordinary tokens combine the generating actor's name with that actor's
/// local sequence number; uniqueness needs no coordination. `Null` is the
/// reserved token tagging application messages from external actors that do
/// not participate in the protocol. `Synthetic` tokens belong to snapshot
/// aggregators and name the fake refobs inside summaries; being a separate
/// namespace they can never collide with engine tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Token {
    Null,
    Seq { origin: ActorName, seq: u32 },
    Synthetic { aggregator: u32, seq: u32 },
}

impl Token {
    pub fn seq(origin: ActorName, seq: u32) -> Self {
        Token::Seq { origin, seq }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Token::Null)
    }
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Token::Null => write!(f, "null"),
            Token::Seq { origin, seq } => write!(f, "{origin}!{seq}"),
            Token::Synthetic { aggregator, seq } => write!(f, "@{aggregator}!{seq}"),
        }
    }
}

impl Token {
    pub fn parse(s: &str) -> Option<Token> {
        if s == "null" {
            return Some(Token::Null);
        }
        if let Some(rest) = s.strip_prefix('@') {
            let (agg, seq) = rest.split_once('!')?;
            return Some(Token::Synthetic {
                aggregator: agg.parse().ok()?,
                seq: seq.parse().ok()?,
            });
        }
        let (origin, seq) = s.split_once('!')?;
        Some(Token::Seq {
            origin: ActorName::parse(origin)?,
            seq: seq.parse().ok()?,
        })
    }
}

/// A reference object: `token` names the reference, `owner` is the actor
/// permitted to use it, `target` is the actor it addresses. A token
/// functionally determines its owner and target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Refob {
    pub token: Token,
    pub owner: ActorName,
    pub target: ActorName,
}

impl Refob {
    pub fn new(token: Token, owner: ActorName, target: ActorName) -> Self {
        Refob { token, owner, target }
    }
}

impl fmt::Display for Refob {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}->{}", self.token, self.owner, self.target)
    }
}

impl Refob {
    pub fn parse(s: &str) -> Option<Refob> {
        let (token, rest) = s.split_once(':')?;
        let (owner, target) = rest.split_once("->")?;
        Some(Refob {
            token: Token::parse(token)?,
            owner: ActorName::parse(owner)?,
            target: ActorName::parse(target)?,
        })
    }
}

/// One fact in an actor's knowledge set.
///
/// In `CreatedUsing(x, y)`, the refob `y` was created using `x`; both address
/// the same target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Fact {
    Created(Refob),
    Released(Refob),
    CreatedUsing(Refob, Refob),
    Activated(Refob),
    SentCount(Refob, u64),
    RecvCount(Refob, u64),
}

impl Fact {
    /// The token the fact is primarily about, used for the canonical sort.
    pub fn primary_token(&self) -> Token {
        match self {
            Fact::Created(x)
            | Fact::Released(x)
            | Fact::CreatedUsing(x, _)
            | Fact::Activated(x)
            | Fact::SentCount(x, _)
            | Fact::RecvCount(x, _) => x.token,
        }
    }

    fn kind_rank(&self) -> u8 {
        match self {
            Fact::Created(_) => 0,
            Fact::Released(_) => 1,
            Fact::CreatedUsing(..) => 2,
            Fact::Activated(_) => 3,
            Fact::SentCount(..) => 4,
            Fact::RecvCount(..) => 5,
        }
    }

    /// Key for the canonical token-sorted rendering order.
    pub fn sort_key(&self) -> (Token, u8, Option<Token>) {
        let secondary = match self {
            Fact::CreatedUsing(_, y) => Some(y.token),
            _ => None,
        };
        (self.primary_token(), self.kind_rank(), secondary)
    }

    /// Every refob mentioned by the fact.
    pub fn refobs(&self) -> Vec<Refob> {
        match self {
            Fact::Created(x)
            | Fact::Released(x)
            | Fact::Activated(x)
            | Fact::SentCount(x, _)
            | Fact::RecvCount(x, _) => vec![*x],
            Fact::CreatedUsing(x, y) => vec![*x, *y],
        }
    }
}

impl fmt::Display for Fact {
    /// Canonical textual rendering, e.g. `CreatedUsing(x=A!3, y=A!4)` or
    /// `SentCount(x=A!3, 2)`. The format is bit-exact and used by goldens.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fact::Created(x) => write!(f, "Created(x={})", x.token),
            Fact::Released(x) => write!(f, "Released(x={})", x.token),
            Fact::CreatedUsing(x, y) => write!(f, "CreatedUsing(x={}, y={})", x.token, y.token),
            Fact::Activated(x) => write!(f, "Activated(x={})", x.token),
            Fact::SentCount(x, n) => write!(f, "SentCount(x={}, {n})", x.token),
            Fact::RecvCount(x, n) => write!(f, "RecvCount(x={}, {n})", x.token),
        }
    }
}

/// A goal for the derivation relation: either a plain fact or the derived
/// form `Unreleased(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Goal {
    Fact(Fact),
    Unreleased(Refob),
}

impl From<Fact> for Goal {
    fn from(f: Fact) -> Goal {
        Goal::Fact(f)
    }
}

/// An actor's knowledge set: a finite set of facts.
///
/// Stored in indexed form (by fact kind, counts keyed by token) so that a
/// knowledge set holds at most one send count and one receive count per token
/// by construction, and lookups during derivation are cheap. Derived facts
/// such as `Unreleased` and default-zero counts are computed on demand and
/// never stored.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KnowledgeSet {
    created: BTreeSet<Refob>,
    released: BTreeSet<Refob>,
    created_using: BTreeSet<(Refob, Refob)>,
    activated: BTreeSet<Refob>,
    sent: BTreeMap<Token, (Refob, u64)>,
    recv: BTreeMap<Token, (Refob, u64)>,
}

impl KnowledgeSet {
    pub fn new() -> Self {
        KnowledgeSet::default()
    }

    pub fn from_facts<I: IntoIterator<Item = Fact>>(facts: I) -> Self {
        let mut ks = KnowledgeSet::new();
        for f in facts {
            ks.insert(f);
        }
        ks
    }

    /// Add a fact. A count fact replaces any stored count for the same token,
    /// preserving the one-count-per-token invariant.
    pub fn insert(&mut self, fact: Fact) {
        match fact {
            Fact::Created(x) => {
                self.created.insert(x);
            }
            Fact::Released(x) => {
                self.released.insert(x);
            }
            Fact::CreatedUsing(x, y) => {
                debug_assert_eq!(x.target, y.target, "created-using pair must share a target");
                self.created_using.insert((x, y));
            }
            Fact::Activated(x) => {
                self.activated.insert(x);
            }
            Fact::SentCount(x, n) => {
                self.sent.insert(x.token, (x, n));
            }
            Fact::RecvCount(x, n) => {
                self.recv.insert(x.token, (x, n));
            }
        }
    }

    /// Remove a fact if present; returns whether it was stored.
    pub fn remove(&mut self, fact: &Fact) -> bool {
        match fact {
            Fact::Created(x) => self.created.remove(x),
            Fact::Released(x) => self.released.remove(x),
            Fact::CreatedUsing(x, y) => self.created_using.remove(&(*x, *y)),
            Fact::Activated(x) => self.activated.remove(x),
            Fact::SentCount(x, n) => match self.sent.get(&x.token) {
                Some((_, m)) if m == n => {
                    self.sent.remove(&x.token);
                    true
                }
                _ => false,
            },
            Fact::RecvCount(x, n) => match self.recv.get(&x.token) {
                Some((_, m)) if m == n => {
                    self.recv.remove(&x.token);
                    true
                }
                _ => false,
            },
        }
    }

    /// Plain set membership, without closure rules.
    pub fn contains(&self, fact: &Fact) -> bool {
        match fact {
            Fact::Created(x) => self.created.contains(x),
            Fact::Released(x) => self.released.contains(x),
            Fact::CreatedUsing(x, y) => self.created_using.contains(&(*x, *y)),
            Fact::Activated(x) => self.activated.contains(x),
            Fact::SentCount(x, n) => self.sent.get(&x.token).is_some_and(|(_, m)| m == n),
            Fact::RecvCount(x, n) => self.recv.get(&x.token).is_some_and(|(_, m)| m == n),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.created.is_empty()
            && self.released.is_empty()
            && self.created_using.is_empty()
            && self.activated.is_empty()
            && self.sent.is_empty()
            && self.recv.is_empty()
    }

    pub fn len(&self) -> usize {
        self.created.len()
            + self.released.len()
            + self.created_using.len()
            + self.activated.len()
            + self.sent.len()
            + self.recv.len()
    }

    /// All stored facts in canonical (token-sorted) order.
    pub fn facts(&self) -> Vec<Fact> {
        let mut out: Vec<Fact> = Vec::with_capacity(self.len());
        out.extend(self.created.iter().map(|x| Fact::Created(*x)));
        out.extend(self.released.iter().map(|x| Fact::Released(*x)));
        out.extend(self.created_using.iter().map(|(x, y)| Fact::CreatedUsing(*x, *y)));
        out.extend(self.activated.iter().map(|x| Fact::Activated(*x)));
        out.extend(self.sent.values().map(|(x, n)| Fact::SentCount(*x, *n)));
        out.extend(self.recv.values().map(|(x, n)| Fact::RecvCount(*x, *n)));
        out.sort_by_key(|f| f.sort_key());
        out
    }

    /// Every refob mentioned by any stored fact.
    pub fn mentioned_refobs(&self) -> BTreeSet<Refob> {
        let mut out = BTreeSet::new();
        for f in self.facts() {
            out.extend(f.refobs());
        }
        out
    }

    // Indexed views.

    pub fn created_refobs(&self) -> impl Iterator<Item = &Refob> {
        self.created.iter()
    }

    pub fn activated_refobs(&self) -> impl Iterator<Item = &Refob> {
        self.activated.iter()
    }

    pub fn created_using_pairs(&self) -> impl Iterator<Item = &(Refob, Refob)> {
        self.created_using.iter()
    }

    /// Refobs recorded as created using `x`.
    pub fn created_using(&self, x: Token) -> impl Iterator<Item = &Refob> {
        self.created_using
            .iter()
            .filter(move |(using, _)| using.token == x)
            .map(|(_, z)| z)
    }

    pub fn has_created_using_source(&self, x: Token) -> bool {
        self.created_using(x).next().is_some()
    }

    pub fn stored_sent_count(&self, x: Token) -> Option<u64> {
        self.sent.get(&x).map(|(_, n)| *n)
    }

    pub fn stored_recv_count(&self, x: Token) -> Option<u64> {
        self.recv.get(&x).map(|(_, n)| *n)
    }

    /// The derived send count for `x`: the stored count, or zero.
    pub fn sent_count(&self, x: Token) -> u64 {
        self.stored_sent_count(x).unwrap_or(0)
    }

    /// The derived receive count for `x`: the stored count, or zero.
    pub fn recv_count(&self, x: Token) -> u64 {
        self.stored_recv_count(x).unwrap_or(0)
    }

    /// Decide whether `goal` follows from this set under membership plus the
    /// four closure rules. Total and side-effect free.
    pub fn derives<G: Into<Goal>>(&self, goal: G) -> bool {
        match goal.into() {
            Goal::Fact(Fact::Created(x)) => {
                self.created.contains(&x) || self.created_using.iter().any(|(_, z)| *z == x)
            }
            Goal::Fact(Fact::SentCount(x, n)) => self.sent_count(x.token) == n,
            Goal::Fact(Fact::RecvCount(x, n)) => self.recv_count(x.token) == n,
            Goal::Fact(f) => self.contains(&f),
            Goal::Unreleased(x) => {
                self.derives(Fact::Created(x)) && !self.derives(Fact::Released(x))
            }
        }
    }

    /// `IncSent(x, Φ)`: bump the send count for `x`, starting from one.
    pub fn inc_sent(&self, x: Refob) -> KnowledgeSet {
        let mut out = self.clone();
        out.inc_sent_mut(x);
        out
    }

    /// `IncRecv(x, Φ)`: bump the receive count for `x`, starting from one.
    pub fn inc_recv(&self, x: Refob) -> KnowledgeSet {
        let mut out = self.clone();
        out.inc_recv_mut(x);
        out
    }

    pub fn inc_sent_mut(&mut self, x: Refob) {
        let entry = self.sent.entry(x.token).or_insert((x, 0));
        entry.1 += 1;
    }

    pub fn inc_recv_mut(&mut self, x: Refob) {
        let entry = self.recv.entry(x.token).or_insert((x, 0));
        entry.1 += 1;
    }

    /// Canonical rendering: one fact per token-sorted line.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for f in self.facts() {
            out.push_str(&f.to_string());
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn name(id: u32) -> ActorName {
        ActorName::internal(id)
    }

    fn refob(origin: u32, seq: u32, owner: u32, target: u32) -> Refob {
        Refob::new(Token::seq(name(origin), seq), name(owner), name(target))
    }

    #[test]
    fn empty_set_derives_zero_counts() {
        let phi = KnowledgeSet::new();
        let x = refob(0, 0, 0, 1);
        assert!(phi.derives(Fact::SentCount(x, 0)));
        assert!(phi.derives(Fact::RecvCount(x, 0)));
        assert!(!phi.derives(Fact::SentCount(x, 1)));
    }

    #[test]
    fn created_without_released_derives_unreleased() {
        let x = refob(0, 0, 0, 1);
        let phi = KnowledgeSet::from_facts([Fact::Created(x)]);
        assert!(phi.derives(Goal::Unreleased(x)));

        let blocked = KnowledgeSet::from_facts([Fact::Created(x), Fact::Released(x)]);
        assert!(!blocked.derives(Goal::Unreleased(x)));
    }

    #[test]
    fn created_using_derives_created() {
        let x = refob(0, 0, 0, 2);
        let y = refob(0, 1, 1, 2);
        let phi = KnowledgeSet::from_facts([Fact::CreatedUsing(x, y)]);
        assert!(phi.derives(Fact::Created(y)));
        assert!(!phi.derives(Fact::Created(x)));
    }

    #[test]
    fn inc_sent_base_and_step() {
        let x = refob(0, 0, 0, 1);
        let phi = KnowledgeSet::new();
        assert_eq!(phi.inc_sent(x).facts(), vec![Fact::SentCount(x, 1)]);

        let phi = KnowledgeSet::from_facts([Fact::SentCount(x, 2)]);
        assert_eq!(phi.inc_sent(x).facts(), vec![Fact::SentCount(x, 3)]);
    }

    #[test]
    fn inc_sent_leaves_recv_counts_alone() {
        let x = refob(0, 0, 0, 1);
        let phi = KnowledgeSet::from_facts([Fact::RecvCount(x, 5)]);
        let out = phi.inc_sent(x);
        assert!(out.derives(Fact::RecvCount(x, 5)));
        assert!(out.derives(Fact::SentCount(x, 1)));
    }

    #[test]
    fn inc_recv_mirrors_inc_sent() {
        let x = refob(0, 0, 0, 1);
        assert_eq!(KnowledgeSet::new().inc_recv(x).facts(), vec![Fact::RecvCount(x, 1)]);
        let phi = KnowledgeSet::from_facts([Fact::RecvCount(x, 1)]);
        assert_eq!(phi.inc_recv(x).facts(), vec![Fact::RecvCount(x, 2)]);
        let phi = KnowledgeSet::from_facts([Fact::SentCount(x, 3)]);
        let out = phi.inc_recv(x);
        assert!(out.derives(Fact::SentCount(x, 3)));
        assert!(out.derives(Fact::RecvCount(x, 1)));
    }

    #[test]
    fn count_facts_replace_per_token() {
        let x = refob(0, 0, 0, 1);
        let mut phi = KnowledgeSet::new();
        phi.insert(Fact::SentCount(x, 1));
        phi.insert(Fact::SentCount(x, 4));
        assert_eq!(phi.facts(), vec![Fact::SentCount(x, 4)]);
    }

    #[test]
    fn rendering_matches_golden_format() {
        let a = name(0);
        let x = Refob::new(Token::seq(a, 3), a, name(1));
        let y = Refob::new(Token::seq(a, 4), name(1), name(1));
        assert_eq!(Fact::CreatedUsing(x, y).to_string(), "CreatedUsing(x=A!3, y=A!4)");
        assert_eq!(Fact::SentCount(x, 2).to_string(), "SentCount(x=A!3, 2)");
        assert_eq!(Fact::Created(y).to_string(), "Created(x=A!4)");

        let phi = KnowledgeSet::from_facts([Fact::SentCount(x, 2), Fact::CreatedUsing(x, y)]);
        assert_eq!(phi.render(), "CreatedUsing(x=A!3, y=A!4)\nSentCount(x=A!3, 2)\n");
    }

    #[test]
    fn name_and_token_rendering_round_trips() {
        for id in [0, 1, 25, 26, 27, 700, 1000] {
            let n = ActorName::internal(id);
            assert_eq!(ActorName::parse(&n.to_string()), Some(n));
            let e = ActorName::external(id);
            assert_eq!(ActorName::parse(&e.to_string()), Some(e));
        }
        for tok in [
            Token::Null,
            Token::seq(ActorName::external(3), 7),
            Token::Synthetic { aggregator: 2, seq: 9 },
        ] {
            assert_eq!(Token::parse(&tok.to_string()), Some(tok));
        }
        let r = refob(0, 0, 0, 1);
        assert_eq!(Refob::parse(&r.to_string()), Some(r));
    }

    fn arb_refob() -> impl Strategy<Value = Refob> {
        // Small id space so random sets collide on tokens and targets.
        (0u32..3, 0u32..3, 0u32..3, 0u32..3)
            .prop_map(|(o, s, owner, target)| refob(o, s, owner, target))
    }

    fn arb_fact() -> impl Strategy<Value = Fact> {
        prop_oneof![
            arb_refob().prop_map(Fact::Created),
            arb_refob().prop_map(Fact::Released),
            arb_refob().prop_map(|x| {
                // Force the shared-target invariant.
                let y = Refob::new(
                    Token::seq(x.owner, x.token_seq_or(9)),
                    ActorName::internal(2),
                    x.target,
                );
                Fact::CreatedUsing(x, y)
            }),
            arb_refob().prop_map(Fact::Activated),
            (arb_refob(), 0u64..4).prop_map(|(x, n)| Fact::SentCount(x, n)),
            (arb_refob(), 0u64..4).prop_map(|(x, n)| Fact::RecvCount(x, n)),
        ]
    }

    impl Refob {
        fn token_seq_or(&self, d: u32) -> u32 {
            match self.token {
                Token::Seq { seq, .. } => seq + 10,
                _ => d,
            }
        }
    }

    proptest! {
        // Monotonicity of derivation for goals without negation: growing the
        // set never invalidates a derivable fact. (Unreleased is excluded;
        // see below.)
        #[test]
        fn derives_is_monotone_for_positive_goals(
            base in proptest::collection::vec(arb_fact(), 0..8),
            extra in proptest::collection::vec(arb_fact(), 0..4),
            goal in arb_fact(),
        ) {
            // A well-formed superset cannot carry a second count for a token
            // the smaller set already counts, so filter those additions.
            let phi = KnowledgeSet::from_facts(base.iter().copied());
            let additions: Vec<Fact> = extra.iter().copied()
                .filter(|f| match f {
                    Fact::SentCount(a, _) => phi.stored_sent_count(a.token).is_none(),
                    Fact::RecvCount(a, _) => phi.stored_recv_count(a.token).is_none(),
                    _ => true,
                })
                .collect();
            let psi = KnowledgeSet::from_facts(base.iter().copied().chain(additions));
            let positive = !matches!(goal, Fact::SentCount(_, 0) | Fact::RecvCount(_, 0));
            if positive && phi.derives(goal) {
                prop_assert!(psi.derives(goal));
            }
        }

        // Unreleased is nonmonotone: adding Released(x) kills it.
        #[test]
        fn unreleased_is_nonmonotone(x in arb_refob()) {
            let phi = KnowledgeSet::from_facts([Fact::Created(x)]);
            prop_assert!(phi.derives(Goal::Unreleased(x)));
            let mut psi = phi.clone();
            psi.insert(Fact::Released(x));
            prop_assert!(!psi.derives(Goal::Unreleased(x)));
        }

        // IncSent changes exactly the send count for that token, nothing else,
        // and the result derives SentCount(x, n+1) for the old derived n.
        #[test]
        fn inc_sent_changes_exactly_one_fact(
            facts in proptest::collection::vec(arb_fact(), 0..8),
            x in arb_refob(),
        ) {
            let phi = KnowledgeSet::from_facts(facts);
            let n = phi.sent_count(x.token);
            let out = phi.inc_sent(x);
            prop_assert!(out.derives(Fact::SentCount(x, n + 1)));

            let before: BTreeSet<Fact> = phi.facts().into_iter().collect();
            let after: BTreeSet<Fact> = out.facts().into_iter().collect();
            let removed: Vec<&Fact> = before.difference(&after).collect();
            let added: Vec<&Fact> = after.difference(&before).collect();
            prop_assert!(removed.len() <= 1);
            prop_assert_eq!(added.len(), 1);
            for f in added {
                prop_assert_eq!(f.primary_token(), x.token);
            }
        }
    }
}
