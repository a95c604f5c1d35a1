//! Ground truth over full configurations.
//!
//! The oracle sees everything the protocol cannot: the whole actor map, all
//! undelivered messages, and the engine's refob registry. It computes which
//! actors are unblocked, which are terminated (idle and unable to ever
//! receive a message again), the root set, and chain existence. Detection
//! results are validated against it; it never feeds back into the protocol.

use crate::engine::{Configuration, Message};
use crate::facts::{ActorName, Fact, Refob, Token};
use std::collections::{BTreeMap, BTreeSet, VecDeque};

/// Everything the oracle knows about one configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    /// Busy actors, receptionists, and actors (internal or external) with
    /// undelivered messages.
    pub unblocked: BTreeSet<ActorName>,
    /// Idle internal actors not potentially reachable from any unblocked
    /// actor.
    pub terminated: BTreeSet<ActorName>,
    /// Receptionists plus internal targets of refobs inside application
    /// messages queued at external actors.
    pub root_set: BTreeSet<ActorName>,
    /// The potential-acquaintance relation: an edge `A -> B` for every
    /// unreleased refob owned by `A` targeting `B` (held, in flight, or
    /// deactivated but not yet released).
    pub reachability: BTreeMap<ActorName, BTreeSet<ActorName>>,
}

impl GroundTruth {
    pub fn is_terminated(&self, actor: ActorName) -> bool {
        self.terminated.contains(&actor)
    }
}

/// Compute the ground truth for a configuration.
pub fn ground_truth(cfg: &Configuration) -> GroundTruth {
    let mut reachability: BTreeMap<ActorName, BTreeSet<ActorName>> = BTreeMap::new();
    for rec in cfg.refob_records() {
        if !rec.released {
            reachability.entry(rec.refob.owner).or_default().insert(rec.refob.target);
        }
    }

    let mut unblocked: BTreeSet<ActorName> = BTreeSet::new();
    for (name, state) in cfg.actors() {
        if state.is_busy() || cfg.receptionists().contains(name) {
            unblocked.insert(*name);
        }
    }
    for (name, mbox) in cfg.mailboxes() {
        if !mbox.is_empty() {
            unblocked.insert(name);
        }
    }

    // Reflexive-transitive closure of potential acquaintance from the
    // unblocked actors.
    let mut reached = unblocked.clone();
    let mut frontier: VecDeque<ActorName> = unblocked.iter().copied().collect();
    while let Some(a) = frontier.pop_front() {
        if let Some(succs) = reachability.get(&a) {
            for b in succs {
                if reached.insert(*b) {
                    frontier.push_back(*b);
                }
            }
        }
    }

    let terminated: BTreeSet<ActorName> = cfg
        .actors()
        .iter()
        .filter(|(name, state)| state.is_idle() && !reached.contains(name))
        .map(|(name, _)| *name)
        .collect();

    let mut root_set = cfg.receptionists().clone();
    for (at, mbox) in cfg.mailboxes() {
        if cfg.actor(at).is_some() {
            continue;
        }
        for msg in mbox {
            if let Message::App { contents, .. } = msg {
                for r in contents {
                    if cfg.actor(r.target).is_some() {
                        root_set.insert(r.target);
                    }
                }
            }
        }
    }

    GroundTruth { unblocked, terminated, root_set, reachability }
}

/// The equivalent fixpoint characterization of the terminated set: the
/// largest set of blocked actors closed under potential inverse
/// acquaintance. Kept separate so the two computations can be checked
/// against each other.
pub fn terminated_fixpoint(cfg: &Configuration) -> BTreeSet<ActorName> {
    let mut candidates: BTreeSet<ActorName> = cfg
        .actors()
        .iter()
        .filter(|(name, state)| {
            state.is_idle()
                && !cfg.receptionists().contains(name)
                && cfg.mailbox(**name).is_empty()
        })
        .map(|(name, _)| *name)
        .collect();
    loop {
        let shrunk: BTreeSet<ActorName> = candidates
            .iter()
            .filter(|b| {
                cfg.refob_records().all(|rec| {
                    rec.released
                        || rec.refob.target != **b
                        || candidates.contains(&rec.refob.owner)
                })
            })
            .copied()
            .collect();
        if shrunk == candidates {
            return candidates;
        }
        candidates = shrunk;
    }
}

/// All unreleased refobs targeting `target` that have a chain: a path of
/// created-using links (held by owners, or inside info messages still in
/// flight to the target) rooted at a created-and-unreleased refob known to
/// the target.
pub fn chain_closure(cfg: &Configuration, target: ActorName) -> BTreeSet<Token> {
    let Some(target_knowledge) = cfg.knowledge_of(target) else {
        return BTreeSet::new();
    };

    let inbound: Vec<Refob> = cfg
        .refob_records()
        .filter(|rec| !rec.released && rec.refob.target == target)
        .map(|rec| rec.refob)
        .collect();

    // Links come from owners' created-using facts and from undelivered info
    // messages addressed to the target.
    let mut links: BTreeMap<Token, Vec<Refob>> = BTreeMap::new();
    for x in &inbound {
        if x.owner.is_internal() {
            if let Some(knowledge) = cfg.knowledge_of(x.owner) {
                for z in knowledge.created_using(x.token) {
                    links.entry(x.token).or_default().push(*z);
                }
            }
        }
    }
    for msg in cfg.mailbox(target) {
        if let Message::Info { created_using, created } = msg {
            links.entry(created_using.token).or_default().push(*created);
        }
    }

    let mut chained: BTreeSet<Token> = BTreeSet::new();
    let mut frontier: VecDeque<Refob> = VecDeque::new();
    for x in &inbound {
        if target_knowledge.derives(Fact::Created(*x)) && chained.insert(x.token) {
            frontier.push_back(*x);
        }
    }
    while let Some(x) = frontier.pop_front() {
        if let Some(next) = links.get(&x.token) {
            for z in next {
                if z.target == target && !cfg.is_released(z.token) && chained.insert(z.token) {
                    frontier.push_back(*z);
                }
            }
        }
    }
    chained
}

/// Does an unreleased refob have a chain in this configuration?
pub fn has_chain(cfg: &Configuration, x: &Refob) -> bool {
    chain_closure(cfg, x.target).contains(&x.token)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{initial_configuration, Event, Execution, SchedulerPolicy};

    fn root_of(cfg: &Configuration) -> ActorName {
        *cfg.actors().keys().next().unwrap()
    }

    #[test]
    fn initial_configuration_has_no_terminated_actors() {
        let cfg = initial_configuration();
        let gt = ground_truth(&cfg);
        assert!(gt.terminated.is_empty(), "the root actor is busy");
        assert!(gt.unblocked.contains(&root_of(&cfg)));
    }

    #[test]
    fn spawned_refob_has_a_chain_immediately() {
        let mut cfg = initial_configuration();
        let spawn = cfg.build_spawn(root_of(&cfg));
        let Event::Spawn { refob } = spawn.clone() else { unreachable!() };
        cfg.apply_event(&spawn).unwrap();
        assert!(has_chain(&cfg, &refob));
    }

    #[test]
    fn chain_survives_send_and_send_info() {
        // A spawns B and C, then introduces B to C; the new refob's chain
        // goes through A's created-using fact, then through the in-flight
        // info message, then through C's created fact.
        let mut cfg = initial_configuration();
        let a = root_of(&cfg);
        let spawn_b = cfg.build_spawn(a);
        let Event::Spawn { refob: x } = spawn_b.clone() else { unreachable!() };
        cfg.apply_event(&spawn_b).unwrap();
        let spawn_c = cfg.build_spawn(a);
        let Event::Spawn { refob: y } = spawn_c.clone() else { unreachable!() };
        cfg.apply_event(&spawn_c).unwrap();

        let send = cfg.build_send(x, &[y]);
        let Event::Send { sent, .. } = send.clone() else { unreachable!() };
        let z = sent[0];
        cfg.apply_event(&send).unwrap();
        assert!(has_chain(&cfg, &z), "justified by A's created-using fact");

        cfg.apply_event(&Event::SendInfo { created_using: y, created: z }).unwrap();
        assert!(has_chain(&cfg, &z), "justified by the in-flight info message");

        cfg.apply_event(&Event::Idle { actor: z.target }).unwrap();
        cfg.apply_event(&Event::Info { created_using: y, created: z }).unwrap();
        assert!(has_chain(&cfg, &z), "justified by C's created fact");
    }

    #[test]
    fn chain_survives_release_of_mid_chain_refob() {
        // Build a two-link chain to B, deliver the info message for the
        // second link, then release the first; the tail must still chain.
        let mut cfg = initial_configuration();
        let a = root_of(&cfg);
        let spawn_b = cfg.build_spawn(a);
        let Event::Spawn { refob: x1 } = spawn_b.clone() else { unreachable!() };
        cfg.apply_event(&spawn_b).unwrap();
        let b = x1.target;
        let spawn_c = cfg.build_spawn(a);
        let Event::Spawn { refob: to_c } = spawn_c.clone() else { unreachable!() };
        cfg.apply_event(&spawn_c).unwrap();
        let c = to_c.target;

        // A creates x2: C -> B using x1, sends it to C.
        let send = cfg.build_send(to_c, &[x1]);
        let Event::Send { sent, .. } = send.clone() else { unreachable!() };
        let x2 = sent[0];
        cfg.apply_event(&send).unwrap();
        cfg.apply_event(&Event::Idle { actor: c }).unwrap();
        cfg.apply_event(&Event::Receive { at: c, via: Some(to_c), contents: vec![x2] }).unwrap();

        // The info for x2 must be received by B before x1 can be released.
        cfg.apply_event(&Event::SendInfo { created_using: x1, created: x2 }).unwrap();
        cfg.apply_event(&Event::Idle { actor: b }).unwrap();
        cfg.apply_event(&Event::Info { created_using: x1, created: x2 }).unwrap();

        assert!(has_chain(&cfg, &x2));
        cfg.apply_event(&Event::SendRelease { refob: x1 }).unwrap();
        let count = cfg
            .mailbox(b)
            .iter()
            .find_map(|m| match m {
                Message::Release { refob, count } if *refob == x1 => Some(*count),
                _ => None,
            })
            .unwrap();
        cfg.apply_event(&Event::Release { refob: x1, count }).unwrap();
        assert!(has_chain(&cfg, &x2), "chain re-roots at B's created fact for x2");
    }

    #[test]
    fn terminated_matches_fixpoint_on_random_runs() {
        for seed in 0..30 {
            let mut exec = Execution::new(seed, SchedulerPolicy::default());
            exec.run(150).unwrap();
            let gt = ground_truth(exec.config());
            assert_eq!(gt.terminated, terminated_fixpoint(exec.config()), "seed {seed}");
        }
    }

    #[test]
    fn terminated_set_is_stable_under_quiesce_continuation() {
        for seed in 0..12 {
            let mut exec = Execution::new(seed, SchedulerPolicy::default());
            exec.run(200).unwrap();
            let before = ground_truth(exec.config()).terminated;
            exec.quiesce().unwrap();
            let after = ground_truth(exec.config()).terminated;
            assert!(
                before.is_subset(&after),
                "seed {seed}: {before:?} not preserved into {after:?}"
            );
        }
    }
}
