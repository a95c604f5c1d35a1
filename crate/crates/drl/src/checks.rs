//! The protocol's invariants as runtime checks.
//!
//! Configuration-level checks run after every applied event in checked mode:
//! queued messages ride only unreleased refobs, message counts agree across
//! quiet refobs, and every unreleased refob into a non-root actor has a
//! chain. The persistence check replays a recorded event log and verifies
//! that the bookkeeping facts disappear only at their sanctioned points.

use crate::engine::{initial_configuration, Configuration, Event, Message};
use crate::facts::{ActorName, Fact, Token};
use crate::oracle;
use std::collections::BTreeSet;

/// Queued messages ride only unreleased refobs. Refobs placed inside an
/// application message are pending and therefore unreleased as well; a refob
/// inside an info message carries no such guarantee (its release can race
/// ahead of the info along a different token).
pub fn check_queued_messages_unreleased(cfg: &Configuration) -> Result<(), String> {
    for (at, mbox) in cfg.mailboxes() {
        for msg in mbox {
            if let Some(token) = msg.along() {
                if cfg.is_released(token) {
                    return Err(format!(
                        "message to {at} rides released refob {token}"
                    ));
                }
            }
            if let Message::App { contents, .. } = msg {
                for r in contents {
                    if cfg.is_released(r.token) {
                        return Err(format!(
                            "application message to {at} carries released refob {r}"
                        ));
                    }
                }
            }
        }
    }
    Ok(())
}

/// For every unreleased, still-activated refob with no messages in flight
/// along it, the owner's send count equals the target's receive count.
pub fn check_message_counts(cfg: &Configuration) -> Result<(), String> {
    let mut in_flight: BTreeSet<Token> = BTreeSet::new();
    for (_, mbox) in cfg.mailboxes() {
        for msg in mbox {
            if let Some(token) = msg.along() {
                in_flight.insert(token);
            }
        }
    }
    for rec in cfg.refob_records() {
        let x = rec.refob;
        if rec.released || in_flight.contains(&x.token) {
            continue;
        }
        let (Some(owner), Some(target)) = (cfg.knowledge_of(x.owner), cfg.knowledge_of(x.target))
        else {
            continue; // counts are only tracked between internal actors
        };
        if !owner.contains(&Fact::Activated(x)) {
            continue;
        }
        let sent = owner.sent_count(x.token);
        let recv = target.recv_count(x.token);
        if sent != recv {
            return Err(format!(
                "quiet refob {x} has send count {sent} but receive count {recv}"
            ));
        }
    }
    Ok(())
}

/// The chain invariant: every unreleased refob into an internal actor
/// outside the root set has a chain; a root-set actor has a chain to at
/// least one externally owned refob.
pub fn check_chain_lemma(cfg: &Configuration) -> Result<(), String> {
    let root_set = oracle::ground_truth(cfg).root_set;
    for name in cfg.actors().keys() {
        let chained = oracle::chain_closure(cfg, *name);
        let inbound: Vec<_> = cfg
            .refob_records()
            .filter(|rec| !rec.released && rec.refob.target == *name)
            .map(|rec| rec.refob)
            .collect();
        if root_set.contains(name) {
            let witnessed = inbound
                .iter()
                .any(|x| x.owner.is_external() && chained.contains(&x.token));
            if !witnessed {
                return Err(format!(
                    "root-set actor {name} has no chain to an externally owned refob"
                ));
            }
        } else {
            for x in &inbound {
                if !chained.contains(&x.token) {
                    return Err(format!("unreleased refob {x} has no chain"));
                }
            }
        }
    }
    Ok(())
}

/// All per-configuration checks together.
pub fn check_step_invariants(cfg: &Configuration) -> Result<(), String> {
    check_queued_messages_unreleased(cfg)?;
    check_message_counts(cfg)?;
    check_chain_lemma(cfg)
}

/// Replay an event log and verify fact persistence: a created-using fact
/// disappears only through the matching SendInfo; a created fact only
/// through compaction after the release message arrived; a released fact
/// only through compaction after the info message arrived (or the refob was
/// born with the actor at spawn time).
pub fn scan_trace_persistence<'a, I>(events: I) -> Result<(), String>
where
    I: IntoIterator<Item = &'a Event>,
{
    let mut cfg = initial_configuration();
    let mut release_delivered: BTreeSet<Token> = BTreeSet::new();
    let mut info_delivered: BTreeSet<Token> = BTreeSet::new();
    let mut spawn_born: BTreeSet<Token> = BTreeSet::new();
    for state in cfg.actors().values() {
        for x in state.knowledge.created_refobs() {
            spawn_born.insert(x.token);
        }
    }

    for (i, event) in events.into_iter().enumerate() {
        let touched: Vec<ActorName> = match event {
            Event::Spawn { refob } => vec![refob.owner],
            Event::Send { via, .. } => vec![via.owner],
            Event::Receive { at, .. } => vec![*at],
            Event::Idle { actor } | Event::Snapshot { actor } => vec![*actor],
            Event::SendInfo { created_using, .. } => vec![created_using.owner],
            Event::Info { created, .. } => vec![created.target],
            Event::SendRelease { refob } | Event::Release { refob, .. } => {
                vec![refob.target, refob.owner]
            }
            Event::Compaction { refob } => vec![refob.target],
            Event::In { .. } | Event::Out { .. } | Event::ReleaseOut { .. }
            | Event::InfoOut { .. } => vec![],
        };
        let before: Vec<(ActorName, Vec<Fact>)> = touched
            .iter()
            .filter_map(|a| cfg.knowledge_of(*a).map(|k| (*a, k.facts())))
            .collect();

        cfg.apply_event(event)
            .map_err(|e| format!("event {i} ({event}) not applicable: {e}"))?;

        match event {
            Event::Release { refob, .. } => {
                release_delivered.insert(refob.token);
            }
            Event::Info { created, .. } => {
                info_delivered.insert(created.token);
            }
            Event::Spawn { refob } => {
                spawn_born.insert(refob.token);
                for x in cfg.knowledge_of(refob.target).unwrap().created_refobs() {
                    spawn_born.insert(x.token);
                }
            }
            _ => {}
        }

        for (actor, old_facts) in before {
            let new = cfg.knowledge_of(actor).unwrap();
            for fact in old_facts {
                if new.contains(&fact) {
                    continue;
                }
                let ok = match fact {
                    Fact::CreatedUsing(y, z) => {
                        matches!(event, Event::SendInfo { created_using, created }
                            if *created_using == y && *created == z)
                    }
                    Fact::Created(z) => {
                        matches!(event, Event::Compaction { refob } if *refob == z)
                            && release_delivered.contains(&z.token)
                    }
                    Fact::Released(z) => {
                        matches!(event, Event::Compaction { refob } if *refob == z)
                            && (info_delivered.contains(&z.token)
                                || spawn_born.contains(&z.token))
                    }
                    // Count resets and deactivation are governed by the
                    // rules' own patterns, not by the persistence claims.
                    Fact::Activated(_) | Fact::SentCount(..) | Fact::RecvCount(..) => true,
                };
                if !ok {
                    return Err(format!(
                        "event {i} ({event}) removed {fact} from {actor} outside its sanctioned point"
                    ));
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::{Execution, SchedulerPolicy};

    #[test]
    fn invariants_hold_on_random_runs() {
        for seed in 0..10 {
            let mut exec = Execution::new(seed, SchedulerPolicy::default());
            for step in 0..200 {
                exec.step().unwrap();
                check_step_invariants(exec.config())
                    .unwrap_or_else(|e| panic!("seed {seed} step {step}: {e}"));
            }
        }
    }

    #[test]
    fn persistence_scan_accepts_recorded_runs() {
        for seed in 0..10 {
            let mut exec = Execution::new(seed, SchedulerPolicy::default());
            exec.run(250).unwrap();
            exec.quiesce().unwrap();
            scan_trace_persistence(exec.events().iter().map(|(_, e)| e)).unwrap();
        }
    }

    #[test]
    fn persistence_scan_rejects_reordered_events() {
        let mut exec = Execution::new(4, SchedulerPolicy::default());
        exec.run(120).unwrap();
        let mut events: Vec<Event> = exec.events().iter().map(|(_, e)| e.clone()).collect();
        // Swapping two adjacent events usually breaks applicability; find a
        // swap that does and confirm the scan reports it.
        let mut rejected = false;
        for i in 0..events.len() - 1 {
            events.swap(i, i + 1);
            if scan_trace_persistence(events.iter()).is_err() {
                rejected = true;
                break;
            }
            events.swap(i, i + 1);
        }
        assert!(rejected, "no adjacent swap was rejected");
    }
}
