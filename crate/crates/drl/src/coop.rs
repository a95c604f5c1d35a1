//! Cooperative garbage collection between snapshot aggregators.
//!
//! Each aggregator holds a disjoint slice of the system's snapshots. Local
//! collection finds the finalized actors it can prove alone; what remains is
//! pruned to the *potentially finalized* snapshots, compressed into a
//! [`Summary`] retaining only boundary-facing facts plus synthetic refobs
//! encoding who depends on which receptionist, and exchanged. Finalized
//! receptionists are then decided over the union of summaries, and each
//! aggregator collects every local actor whose depended-upon receptionists
//! all came back finalized. The collected set matches what a single
//! aggregator running the chain algorithm on the union of all stores would
//! collect.

use crate::detection::{
    finalized_subset, Algorithm, Analysis, DetectionResult, Snapshot, SnapshotSet,
};
use crate::facts::{ActorName, Fact, KnowledgeSet, Refob, Token};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Identifies one snapshot aggregator; doubles as the namespace for the
/// fresh tokens its summaries invent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct AggregatorId(pub u32);

#[derive(Debug, Error)]
pub enum CoopError {
    #[error("aggregator stores overlap on actor {0}")]
    DomainOverlap(ActorName),
}

/// A compressed snapshot set for exchange: boundary facts of the source set
/// plus fake refobs (fresh synthetic tokens) recording which actors depend
/// on which receptionists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Summary {
    pub snapshots: SnapshotSet,
    pub fake_refobs: BTreeSet<Refob>,
}

impl Summary {
    /// Wire rendering: per-actor fact sections in the canonical fact format,
    /// then a FAKE section listing the synthetic refobs.
    pub fn render(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        for snap in self.snapshots.snapshots() {
            writeln!(out, "snapshot {}", snap.actor).unwrap();
            for fact in snap.knowledge.facts() {
                writeln!(out, "  {fact}").unwrap();
            }
        }
        writeln!(out, "FAKE").unwrap();
        for r in &self.fake_refobs {
            writeln!(out, "  {r}").unwrap();
        }
        out
    }
}

/// Actors of the set with a chain-justified inbound refob owned outside the
/// set.
pub fn receptionists_of(q: &SnapshotSet) -> BTreeSet<ActorName> {
    receptionists_in(&Analysis::new(q), q)
}

fn receptionists_in(analysis: &Analysis, q: &SnapshotSet) -> BTreeSet<ActorName> {
    let mut out = BTreeSet::new();
    for b in q.actors() {
        if analysis.inbound(b).any(|x| analysis.chain(x) && !q.contains(x.owner)) {
            out.insert(b);
        }
    }
    out
}

/// Drop every actor that provably cannot be finalized in any union with
/// further snapshot sets: those depending on a chain-justified inbound refob
/// whose owner is inside the set yet irrelevant.
pub fn potentially_finalized_subset(q: &SnapshotSet) -> SnapshotSet {
    let analysis = Analysis::new(q);
    let offenders: BTreeSet<ActorName> = q
        .actors()
        .filter(|b| {
            analysis
                .inbound(*b)
                .any(|x| analysis.chain(x) && q.contains(x.owner) && !analysis.relevant(x))
        })
        .collect();
    let deps = analysis.dependency_relation();
    let removed: BTreeSet<ActorName> = q
        .actors()
        .filter(|c| offenders.iter().any(|o| deps.depends_on(*c, *o)))
        .collect();
    q.without(&removed)
}

/// Build the summary of a potentially finalized set.
pub fn summarize(q: &SnapshotSet, aggregator: AggregatorId) -> Summary {
    let analysis = Analysis::new(q);
    let receptionists = receptionists_in(&analysis, q);
    let deps = analysis.dependency_relation();

    let mut facts: BTreeMap<ActorName, Vec<Fact>> = BTreeMap::new();
    for x in analysis.universe() {
        let boundary = receptionists.contains(&x.target) || !q.contains(x.target);
        if boundary {
            if let Some(owner) = q.get(x.owner) {
                if owner.knowledge.contains(&Fact::Activated(*x)) {
                    facts.entry(x.owner).or_default().push(Fact::Activated(*x));
                }
                for (y, z) in owner.knowledge.created_using_pairs() {
                    if y == x {
                        facts.entry(x.owner).or_default().push(Fact::CreatedUsing(*y, *z));
                    }
                }
                if let Some(n) = owner.knowledge.stored_sent_count(x.token) {
                    facts.entry(x.owner).or_default().push(Fact::SentCount(*x, n));
                }
            }
        }
        if receptionists.contains(&x.target) {
            if let Some(target) = q.get(x.target) {
                if target.knowledge.derives(Fact::Created(*x)) {
                    facts.entry(x.target).or_default().push(Fact::Created(*x));
                }
                if target.knowledge.contains(&Fact::Released(*x)) {
                    facts.entry(x.target).or_default().push(Fact::Released(*x));
                }
                if let Some(n) = target.knowledge.stored_recv_count(x.token) {
                    facts.entry(x.target).or_default().push(Fact::RecvCount(*x, n));
                }
            }
        }
    }

    // One fake refob per (receptionist, distinct dependent) pair. Fake
    // refobs carry no counts: relevance holds through the default-zero rule.
    let mut fake_refobs = BTreeSet::new();
    let mut fake_seq = 0u32;
    for a in &receptionists {
        for b in q.actors() {
            if b != *a && deps.depends_on(b, *a) {
                let token = Token::Synthetic { aggregator: aggregator.0, seq: fake_seq };
                fake_seq += 1;
                let fake = Refob::new(token, *a, b);
                fake_refobs.insert(fake);
                facts.entry(*a).or_default().push(Fact::Activated(fake));
                facts.entry(b).or_default().push(Fact::Created(fake));
            }
        }
    }

    let snapshots = SnapshotSet::from_snapshots(facts.into_iter().map(|(actor, facts)| {
        Snapshot {
            actor,
            knowledge: KnowledgeSet::from_facts(facts),
            taken_at: q.get(actor).map(|s| s.taken_at).unwrap_or(0),
        }
    }));
    Summary { snapshots, fake_refobs }
}

/// The full cooperative procedure over disjoint aggregator stores:
/// local collection, potential-finalized pruning, summary exchange, a joint
/// finalized-receptionist computation (with the chain or the coarser
/// unreleased dependency relation), and final local collection of every
/// actor whose depended-upon receptionists are all finalized.
pub fn cooperative_detect(
    parts: &[SnapshotSet],
    union_algorithm: Algorithm,
) -> Result<Vec<DetectionResult>, CoopError> {
    let mut seen: BTreeSet<ActorName> = BTreeSet::new();
    for part in parts {
        for a in part.actors() {
            if !seen.insert(a) {
                return Err(CoopError::DomainOverlap(a));
            }
        }
    }

    // Step 1: local collection.
    let local: Vec<DetectionResult> =
        parts.iter().map(|q| finalized_subset(q, Algorithm::Chain)).collect();

    // Step 2: prune to the potentially finalized snapshots. Locally
    // collected actors stay in the working set: an actor awaiting the
    // exchange can have an inbound chain owned by a collected neighbor, and
    // only that neighbor's snapshot proves the chain relevant in the joint
    // view. Dropping it would under-collect relative to a single aggregator
    // holding the union.
    let remainders: Vec<SnapshotSet> =
        parts.iter().map(potentially_finalized_subset).collect();

    // Step 3: summaries, one token namespace per aggregator.
    let summaries: Vec<Summary> = remainders
        .iter()
        .enumerate()
        .map(|(i, q)| summarize(q, AggregatorId(i as u32)))
        .collect();

    // Step 4: finalized actors over the union of summaries.
    let mut joint = SnapshotSet::new();
    for s in &summaries {
        joint = joint.union(&s.snapshots);
    }
    let finalized_in_joint = finalized_subset(&joint, union_algorithm).finalized_actors();

    // Step 5: collect local actors whose receptionist dependencies are all
    // finalized in the joint view.
    let mut results = Vec::with_capacity(parts.len());
    for ((part, collected), remainder) in parts.iter().zip(&local).zip(&remainders) {
        let analysis = Analysis::new(remainder);
        let receptionists = receptionists_in(&analysis, remainder);
        let deps = analysis.dependency_relation();
        let mut keep = collected.finalized_actors();
        for c in remainder.actors() {
            let settled = receptionists
                .iter()
                .filter(|r| deps.depends_on(c, **r))
                .all(|r| finalized_in_joint.contains(r));
            if settled {
                keep.insert(c);
            }
        }
        let removed: BTreeSet<ActorName> =
            part.actors().filter(|a| !keep.contains(a)).collect();
        results.push(DetectionResult {
            finalized: part.restrict(&keep),
            removed,
            algorithm: union_algorithm,
        });
    }
    Ok(results)
}
