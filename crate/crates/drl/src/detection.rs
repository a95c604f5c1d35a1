//! Termination detection over sets of actor snapshots.
//!
//! A [`SnapshotSet`] is a cut: at most one immutable snapshot per actor. The
//! predicates here treat the set as a joint collection of facts. `Chain`
//! looks for a path of unreleased refobs from a Created fact at the target
//! out to a given inbound refob; `Relevant` checks that the refob is active
//! at its owner with agreeing send and receive counts. A set in which every
//! chain-derivable inbound refob has its owner present and relevant is
//! *finalized*, and finalized sets consist exactly of terminated actors.
//!
//! [`max_finalized_subset`] removes every snapshot that cannot belong to a
//! finalized subset and returns the (unique) largest one;
//! [`heuristic_finalized_subset`] is the coarser variant that over-removes
//! by tracing merely-unreleased refobs instead of chains.

use crate::facts::{ActorName, Fact, Goal, KnowledgeSet, Refob, Token};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

/// An immutable copy of one actor's knowledge set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Snapshot {
    pub actor: ActorName,
    pub knowledge: KnowledgeSet,
    pub taken_at: u64,
}

/// A cut: one snapshot per actor.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SnapshotSet {
    by_actor: BTreeMap<ActorName, Snapshot>,
}

impl SnapshotSet {
    pub fn new() -> Self {
        SnapshotSet::default()
    }

    pub fn from_snapshots<I: IntoIterator<Item = Snapshot>>(snaps: I) -> Self {
        let mut q = SnapshotSet::new();
        for s in snaps {
            q.insert(s);
        }
        q
    }

    /// Add a snapshot, keeping only the newest per actor.
    pub fn insert(&mut self, snap: Snapshot) {
        match self.by_actor.get(&snap.actor) {
            Some(existing) if existing.taken_at > snap.taken_at => {}
            _ => {
                self.by_actor.insert(snap.actor, snap);
            }
        }
    }

    pub fn get(&self, actor: ActorName) -> Option<&Snapshot> {
        self.by_actor.get(&actor)
    }

    pub fn contains(&self, actor: ActorName) -> bool {
        self.by_actor.contains_key(&actor)
    }

    pub fn actors(&self) -> impl Iterator<Item = ActorName> + '_ {
        self.by_actor.keys().copied()
    }

    pub fn domain(&self) -> BTreeSet<ActorName> {
        self.by_actor.keys().copied().collect()
    }

    pub fn snapshots(&self) -> impl Iterator<Item = &Snapshot> {
        self.by_actor.values()
    }

    pub fn len(&self) -> usize {
        self.by_actor.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_actor.is_empty()
    }

    /// The set restricted to the given actors.
    pub fn restrict(&self, keep: &BTreeSet<ActorName>) -> SnapshotSet {
        SnapshotSet {
            by_actor: self
                .by_actor
                .iter()
                .filter(|(a, _)| keep.contains(a))
                .map(|(a, s)| (*a, s.clone()))
                .collect(),
        }
    }

    pub fn without(&self, drop: &BTreeSet<ActorName>) -> SnapshotSet {
        SnapshotSet {
            by_actor: self
                .by_actor
                .iter()
                .filter(|(a, _)| !drop.contains(a))
                .map(|(a, s)| (*a, s.clone()))
                .collect(),
        }
    }

    /// Union of two cuts with disjoint or agreeing domains; on a shared
    /// actor the newest snapshot wins.
    pub fn union(&self, other: &SnapshotSet) -> SnapshotSet {
        let mut out = self.clone();
        for s in other.snapshots() {
            out.insert(s.clone());
        }
        out
    }
}

/// Which finalized-subset computation produced a result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    Chain,
    Heuristic,
}

impl Algorithm {
    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Chain => "chain",
            Algorithm::Heuristic => "heuristic",
        }
    }
}

/// Result of a finalized-subset computation: the retained snapshots and the
/// actors removed. The two partition the input domain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionResult {
    pub finalized: SnapshotSet,
    pub removed: BTreeSet<ActorName>,
    pub algorithm: Algorithm,
}

impl DetectionResult {
    pub fn finalized_actors(&self) -> BTreeSet<ActorName> {
        self.finalized.domain()
    }
}

/// Precomputed joint view of a snapshot set: the refob universe, membership
/// indices, and memoized chain verdicts. All predicates on a set go through
/// this; the set is immutable so the memoization is sound.
pub struct Analysis<'a> {
    q: &'a SnapshotSet,
    /// Every refob occurring in any fact of the set.
    universe: BTreeSet<Refob>,
    created: BTreeSet<Token>,
    released: BTreeSet<Token>,
    /// created-using successors: token of x -> refobs created using x.
    successors: BTreeMap<Token, Vec<Refob>>,
    chains: BTreeMap<Token, bool>,
}

impl<'a> Analysis<'a> {
    pub fn new(q: &'a SnapshotSet) -> Analysis<'a> {
        let mut universe = BTreeSet::new();
        let mut created = BTreeSet::new();
        let mut released = BTreeSet::new();
        let mut successors: BTreeMap<Token, Vec<Refob>> = BTreeMap::new();
        for snap in q.snapshots() {
            for fact in snap.knowledge.facts() {
                universe.extend(fact.refobs());
                match fact {
                    Fact::Created(x) => {
                        created.insert(x.token);
                    }
                    Fact::Released(x) => {
                        released.insert(x.token);
                    }
                    Fact::CreatedUsing(x, y) => {
                        created.insert(y.token);
                        successors.entry(x.token).or_default().push(y);
                    }
                    _ => {}
                }
            }
        }
        let mut analysis =
            Analysis { q, universe, created, released, successors, chains: BTreeMap::new() };
        analysis.compute_chains();
        analysis
    }

    /// Mark every refob reachable per the chain predicate: roots are
    /// unreleased refobs whose target's own snapshot derives their creation,
    /// links follow created-using facts into unreleased refobs with the same
    /// target. A created-using fact held elsewhere never roots a chain; it
    /// only extends one.
    fn compute_chains(&mut self) {
        let mut frontier: VecDeque<Refob> = VecDeque::new();
        for x in &self.universe {
            let rooted = self
                .q
                .get(x.target)
                .map(|s| s.knowledge.derives(Fact::Created(*x)))
                .unwrap_or(false);
            let ok = rooted && !self.released.contains(&x.token);
            if ok {
                frontier.push_back(*x);
            }
            self.chains.insert(x.token, ok);
        }
        while let Some(x) = frontier.pop_front() {
            let next: Vec<Refob> = self
                .successors
                .get(&x.token)
                .map(|v| {
                    v.iter()
                        .filter(|y| y.target == x.target && !self.released.contains(&y.token))
                        .copied()
                        .collect()
                })
                .unwrap_or_default();
            for y in next {
                if !self.chains.get(&y.token).copied().unwrap_or(false) {
                    self.chains.insert(y.token, true);
                    frontier.push_back(y);
                }
            }
        }
    }

    pub fn universe(&self) -> &BTreeSet<Refob> {
        &self.universe
    }

    /// Refobs in the universe targeting an actor of the set's domain.
    pub fn inbound(&self, target: ActorName) -> impl Iterator<Item = &Refob> {
        self.universe.iter().filter(move |x| x.target == target)
    }

    /// `Q |- Chain(x)`.
    pub fn chain(&self, x: &Refob) -> bool {
        self.chains.get(&x.token).copied().unwrap_or(false)
    }

    /// `Q |- Relevant(x)`: the owner's snapshot is present and has activated
    /// `x`, and the owner's send count agrees with the target's receive
    /// count (both defaulting to zero when unrecorded or the target's
    /// snapshot is absent).
    pub fn relevant(&self, x: &Refob) -> bool {
        let Some(owner) = self.q.get(x.owner) else { return false };
        if !owner.knowledge.contains(&Fact::Activated(*x)) {
            return false;
        }
        let sent = owner.knowledge.sent_count(x.token);
        let recv = match self.q.get(x.target) {
            Some(target) => target.knowledge.recv_count(x.token),
            None => 0,
        };
        sent == recv
    }

    /// `Q |- Unreleased(x)` over the joint fact set.
    pub fn unreleased(&self, x: &Refob) -> bool {
        self.created.contains(&x.token) && !self.released.contains(&x.token)
    }

    /// Derivation over the union of the member knowledge sets; count facts
    /// default to zero when no snapshot records a count for the token.
    pub fn derives<G: Into<Goal>>(&self, goal: G) -> bool {
        match goal.into() {
            Goal::Fact(Fact::SentCount(x, n)) => {
                let stored: Vec<u64> = self
                    .q
                    .snapshots()
                    .filter_map(|s| s.knowledge.stored_sent_count(x.token))
                    .collect();
                if stored.is_empty() {
                    n == 0
                } else {
                    stored.contains(&n)
                }
            }
            Goal::Fact(Fact::RecvCount(x, n)) => {
                let stored: Vec<u64> = self
                    .q
                    .snapshots()
                    .filter_map(|s| s.knowledge.stored_recv_count(x.token))
                    .collect();
                if stored.is_empty() {
                    n == 0
                } else {
                    stored.contains(&n)
                }
            }
            Goal::Fact(f) => self.q.snapshots().any(|s| s.knowledge.derives(f)),
            Goal::Unreleased(x) => self.unreleased(&x),
        }
    }

    /// The snapshots that violate the finalized conditions directly: some
    /// inbound refob has a chain but a missing owner or failing relevance.
    pub fn directly_unfinalized(&self) -> BTreeSet<ActorName> {
        let mut out = BTreeSet::new();
        for b in self.q.actors() {
            let bad = self
                .inbound(b)
                .any(|x| self.chain(x) && (!self.q.contains(x.owner) || !self.relevant(x)));
            if bad {
                out.insert(b);
            }
        }
        out
    }

    /// Actors of the domain reachable from `seeds` (inclusive) over edges
    /// `owner -> target` justified by `edge`.
    fn dependents_via(
        &self,
        seeds: &BTreeSet<ActorName>,
        edge: impl Fn(&Analysis, &Refob) -> bool,
    ) -> BTreeSet<ActorName> {
        let mut edges: BTreeMap<ActorName, BTreeSet<ActorName>> = BTreeMap::new();
        for x in &self.universe {
            if edge(self, x) {
                edges.entry(x.owner).or_default().insert(x.target);
            }
        }
        let mut reached: BTreeSet<ActorName> = seeds.clone();
        let mut frontier: VecDeque<ActorName> = seeds.iter().copied().collect();
        while let Some(a) = frontier.pop_front() {
            if let Some(succs) = edges.get(&a) {
                for b in succs {
                    if reached.insert(*b) {
                        frontier.push_back(*b);
                    }
                }
            }
        }
        reached.intersection(&self.q.domain()).copied().collect()
    }

    /// The reflexive-transitive "depends on" relation restricted to the
    /// domain: `depends_on(b, a)` iff a chain-justified refob path runs from
    /// `a` to `b`.
    pub fn dependency_relation(&self) -> DependencyRelation {
        let mut reaches = BTreeMap::new();
        for a in self.q.actors() {
            let mut seed = BTreeSet::new();
            seed.insert(a);
            reaches.insert(a, self.dependents_via(&seed, |an, x| an.chain(x)));
        }
        DependencyRelation { reaches }
    }

    fn removal(&self, algorithm: Algorithm) -> BTreeSet<ActorName> {
        let direct = self.directly_unfinalized();
        match algorithm {
            Algorithm::Chain => self.dependents_via(&direct, |an, x| an.chain(x)),
            Algorithm::Heuristic => self.dependents_via(&direct, |an, x| an.unreleased(x)),
        }
    }
}

/// The reflexive-transitive dependency relation of a snapshot set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DependencyRelation {
    /// For each actor, the actors that depend on it (its chain-descendants).
    pub reaches: BTreeMap<ActorName, BTreeSet<ActorName>>,
}

impl DependencyRelation {
    /// Does `b` depend on `a`?
    pub fn depends_on(&self, b: ActorName, a: ActorName) -> bool {
        a == b || self.reaches.get(&a).map(|s| s.contains(&b)).unwrap_or(false)
    }

    /// The actors `b` depends on.
    pub fn dependencies_of(&self, b: ActorName) -> BTreeSet<ActorName> {
        self.reaches
            .iter()
            .filter(|(_, reached)| reached.contains(&b))
            .map(|(a, _)| *a)
            .collect()
    }
}

/// `Q |- goal` over the joint fact set.
pub fn q_derives<G: Into<Goal>>(q: &SnapshotSet, goal: G) -> bool {
    Analysis::new(q).derives(goal)
}

/// The chain predicate for one refob.
pub fn chain_predicate(q: &SnapshotSet, x: &Refob) -> bool {
    Analysis::new(q).chain(x)
}

/// The relevance predicate for one refob.
pub fn relevant_predicate(q: &SnapshotSet, x: &Refob) -> bool {
    Analysis::new(q).relevant(x)
}

/// Is the whole set finalized: every chain-derivable inbound refob of every
/// member has its owner in the set and is relevant.
pub fn is_finalized(q: &SnapshotSet) -> bool {
    Analysis::new(q).directly_unfinalized().is_empty()
}

/// The older, equivalent characterization: every unreleased inbound refob of
/// every member is relevant.
pub fn is_strongly_finalized(q: &SnapshotSet) -> bool {
    let analysis = Analysis::new(q);
    for b in q.actors() {
        for x in analysis.inbound(b) {
            if analysis.unreleased(x) && !analysis.relevant(x) {
                return false;
            }
        }
    }
    true
}

/// The "depends on" relation of the set.
pub fn depends_on(q: &SnapshotSet) -> DependencyRelation {
    Analysis::new(q).dependency_relation()
}

/// Largest finalized subset: drop every actor with a chain-justified but
/// irrelevant (or owner-less) inbound refob, together with everything that
/// depends on one.
pub fn max_finalized_subset(q: &SnapshotSet) -> DetectionResult {
    let removed = Analysis::new(q).removal(Algorithm::Chain);
    DetectionResult { finalized: q.without(&removed), removed, algorithm: Algorithm::Chain }
}

/// The faster, coarser variant tracing merely-unreleased refobs when
/// removing dependents. Always a finalized subset of the maximum one.
pub fn heuristic_finalized_subset(q: &SnapshotSet) -> DetectionResult {
    let removed = Analysis::new(q).removal(Algorithm::Heuristic);
    DetectionResult { finalized: q.without(&removed), removed, algorithm: Algorithm::Heuristic }
}

pub fn finalized_subset(q: &SnapshotSet, algorithm: Algorithm) -> DetectionResult {
    match algorithm {
        Algorithm::Chain => max_finalized_subset(q),
        Algorithm::Heuristic => heuristic_finalized_subset(q),
    }
}

/// Can this actor conclude, from its own snapshot alone, that it is simple
/// garbage? True when no refob owned by another actor is known to target it
/// and every self-refob is quiet: its send and receive counts agree and it
/// is not awaiting its own release message (created and unreleased but no
/// longer activated means a self-release is still in flight).
pub fn is_simple_garbage(s: &Snapshot) -> bool {
    for x in s.knowledge.mentioned_refobs() {
        if x.target != s.actor || !s.knowledge.derives(Fact::Created(x)) {
            continue;
        }
        if x.owner != s.actor {
            return false;
        }
        if s.knowledge.sent_count(x.token) != s.knowledge.recv_count(x.token) {
            return false;
        }
        if !s.knowledge.derives(Fact::Released(x)) && !s.knowledge.contains(&Fact::Activated(x)) {
            return false;
        }
    }
    true
}
