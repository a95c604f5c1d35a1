//! Cross-module properties on engine-produced states: the ground-truth
//! characterization on a scripted topology, closure of finalized sets under
//! union, the stale-snapshot behavior of the heuristic algorithm, and
//! snapshot freshness after the quiescing wind-down.

use drl::detection::{
    heuristic_finalized_subset, is_finalized, max_finalized_subset, SnapshotSet,
};
use drl::engine::{Event, Execution, SchedulerPolicy};
use drl::facts::ActorName;
use drl::oracle::ground_truth;
use std::collections::{BTreeMap, BTreeSet};

fn spawn(exec: &mut Execution, parent: ActorName) -> drl::facts::Refob {
    let e = exec.config().build_spawn(parent);
    let Event::Spawn { refob } = e.clone() else { unreachable!() };
    exec.apply_scripted(e).unwrap();
    refob
}

/// A forgetful sender: F messages C with a reference to E, drops both of its
/// references before the message is delivered, and the parent releases its
/// reference to F. Once C has received the message, F is the one terminated
/// actor: everyone else stays reachable from the busy parent.
#[test]
fn forgetful_sender_is_the_only_terminated_actor() {
    let mut exec = Execution::new(0, SchedulerPolicy::default());
    let a = *exec.config().actors().keys().next().unwrap();

    let spokes: Vec<_> = (0..5).map(|_| spawn(&mut exec, a)).collect();
    let [to_b, to_c, to_d, to_e, to_f] = spokes[..] else { unreachable!() };
    let (b, c, d, e, f) = (to_b.target, to_c.target, to_d.target, to_e.target, to_f.target);
    for actor in [b, c, d, e, f] {
        exec.apply_scripted(Event::Idle { actor }).unwrap();
    }

    // E learns about D.
    let send = exec.config().build_send(to_e, &[to_d]);
    let Event::Send { sent, .. } = send.clone() else { unreachable!() };
    let z_ed = sent[0];
    exec.apply_scripted(send).unwrap();
    exec.apply_scripted(Event::SendInfo { created_using: to_d, created: z_ed }).unwrap();
    exec.apply_scripted(Event::Receive { at: e, via: Some(to_e), contents: vec![z_ed] }).unwrap();
    exec.apply_scripted(Event::Idle { actor: e }).unwrap();

    // F learns about C and E.
    let send = exec.config().build_send(to_f, &[to_c, to_e]);
    let Event::Send { sent, .. } = send.clone() else { unreachable!() };
    let (z_fc, z_fe) = (sent[0], sent[1]);
    exec.apply_scripted(send).unwrap();
    exec.apply_scripted(Event::SendInfo { created_using: to_c, created: z_fc }).unwrap();
    exec.apply_scripted(Event::SendInfo { created_using: to_e, created: z_fe }).unwrap();
    exec.apply_scripted(Event::Receive { at: f, via: Some(to_f), contents: vec![z_fc, z_fe] })
        .unwrap();

    // F sends C the message m containing a reference to E, then forgets
    // everything and goes idle.
    let send = exec.config().build_send(z_fc, &[z_fe]);
    let Event::Send { sent, .. } = send.clone() else { unreachable!() };
    let z_ce = sent[0];
    exec.apply_scripted(send).unwrap();
    exec.apply_scripted(Event::SendInfo { created_using: z_fe, created: z_ce }).unwrap();
    exec.apply_scripted(Event::SendRelease { refob: z_fc }).unwrap();
    exec.apply_scripted(Event::SendRelease { refob: z_fe }).unwrap();
    exec.apply_scripted(Event::Idle { actor: f }).unwrap();

    // The parent drops F, and F processes the release.
    exec.apply_scripted(Event::SendRelease { refob: to_f }).unwrap();
    exec.apply_scripted(Event::Release { refob: to_f, count: 1 }).unwrap();

    // Configuration (1): m is still in flight; F is already terminated.
    let gt1 = ground_truth(exec.config());
    assert_eq!(gt1.terminated, [f].into());

    // Configuration (2): C receives m and becomes busy with a reference to
    // E; the terminated set is unchanged.
    exec.apply_scripted(Event::Receive { at: c, via: Some(z_fc), contents: vec![z_ce] }).unwrap();
    let gt2 = ground_truth(exec.config());
    assert_eq!(gt2.terminated, [f].into(), "only the forgetful sender is terminated");
    assert!(gt2.unblocked.contains(&a));
    assert!(gt2.unblocked.contains(&c));
}

/// Enumerate the finalized subsets of small quiesced stores; any two of them
/// (which agree on common actors, coming from one cut) union into a
/// finalized set.
#[test]
fn finalized_sets_are_closed_under_union() {
    let mut pairs_checked = 0u64;
    for seed in 0..60u64 {
        let mut exec = Execution::new(seed, SchedulerPolicy::default());
        exec.run(150).unwrap();
        exec.quiesce().unwrap();
        let mut store = SnapshotSet::new();
        for s in exec.take_snapshots() {
            store.insert(s);
        }
        if store.len() > 10 {
            continue;
        }
        let actors: Vec<ActorName> = store.actors().collect();
        let mut finalized_subsets: Vec<(BTreeSet<ActorName>, SnapshotSet)> = Vec::new();
        for mask in 0u32..(1 << actors.len()) {
            let keep: BTreeSet<ActorName> = actors
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << *i) != 0)
                .map(|(_, a)| *a)
                .collect();
            let subset = store.restrict(&keep);
            if is_finalized(&subset) {
                finalized_subsets.push((keep, subset));
            }
        }
        for (i, (_, q1)) in finalized_subsets.iter().enumerate() {
            for (_, q2) in finalized_subsets.iter().skip(i + 1).take(8) {
                pairs_checked += 1;
                assert!(
                    is_finalized(&q1.union(q2)),
                    "seed {seed}: union of finalized subsets not finalized"
                );
            }
        }
    }
    assert!(pairs_checked > 100, "only {pairs_checked} union pairs exercised");
}

/// Snapshots taken mid-run go stale. A finalized subset frozen at time t,
/// unioned with fresh snapshots of disjoint actors taken later, is still
/// fully retained by the heuristic algorithm: staleness can only hide in
/// the discarded snapshots, not in the finalized ones.
#[test]
fn heuristic_retains_old_finalized_subset_under_fresh_disjoint_snapshots() {
    let mut nonempty_instances = 0u64;
    for seed in 0..80u64 {
        let mut exec = Execution::new(seed, SchedulerPolicy::default());
        exec.run(150).unwrap();
        exec.take_snapshots();

        // Q: a cut of every currently idle actor, taken at time t.
        let mut q = SnapshotSet::new();
        let idle: Vec<ActorName> = exec
            .config()
            .actors()
            .iter()
            .filter(|(_, s)| s.is_idle())
            .map(|(n, _)| *n)
            .collect();
        for actor in idle {
            exec.apply_scripted(Event::Snapshot { actor }).unwrap();
        }
        for s in exec.take_snapshots() {
            q.insert(s);
        }
        let q_f = max_finalized_subset(&q).finalized;
        if q_f.is_empty() {
            continue;
        }
        nonempty_instances += 1;

        // Q': fresh snapshots of every other actor, taken after the run
        // continues and winds down.
        exec.run(150).unwrap();
        exec.quiesce().unwrap();
        let mut q_prime = SnapshotSet::new();
        for s in exec.take_snapshots() {
            if !q_f.contains(s.actor) {
                q_prime.insert(s);
            }
        }

        let combined = q_prime.union(&q_f);
        let kept = heuristic_finalized_subset(&combined).finalized_actors();
        assert!(
            q_f.domain().is_subset(&kept),
            "seed {seed}: heuristic dropped stale-but-finalized actors {:?}",
            q_f.domain().difference(&kept).collect::<Vec<_>>()
        );
    }
    assert!(nonempty_instances >= 10, "only {nonempty_instances} instances had a finalized core");
}

/// Termination is stable: once the oracle marks an actor terminated, no
/// later event of any kind can unmark it.
#[test]
fn terminated_actors_stay_terminated() {
    for seed in 0..40u64 {
        let mut exec = Execution::new(seed, SchedulerPolicy::default());
        let mut previously: BTreeSet<ActorName> = BTreeSet::new();
        for step in 1..=400u64 {
            exec.step().unwrap();
            if step % 20 == 0 {
                let now = ground_truth(exec.config()).terminated;
                assert!(
                    previously.is_subset(&now),
                    "seed {seed} step {step}: {:?} lost terminated status",
                    previously.difference(&now).collect::<Vec<_>>()
                );
                previously = now;
            }
        }
    }
}

/// Summary faithfulness on random two-way splits of quiesced stores: after
/// local collection and potential-finalization pruning, the summary union
/// reproduces the full union's chains and relevance verdicts on cross-part
/// refobs, and yields the same finalized actors on its domain.
#[test]
fn summaries_preserve_cross_edges_and_finalization() {
    use drl::coop::{potentially_finalized_subset, summarize, AggregatorId};
    use drl::detection::Analysis;
    use drl::harness::home_aggregator;

    let mut cross_edges_seen = 0u64;
    for seed in 0..40u64 {
        let mut exec = Execution::new(seed, SchedulerPolicy::default());
        exec.run(250).unwrap();
        exec.quiesce().unwrap();
        let mut parts = vec![SnapshotSet::new(); 2];
        for s in exec.take_snapshots() {
            parts[home_aggregator(s.actor, 2)].insert(s);
        }
        // Establish the exchange preconditions per part.
        let pruned: Vec<SnapshotSet> = parts
            .iter()
            .map(|q| {
                let local = max_finalized_subset(q).finalized_actors();
                potentially_finalized_subset(&q.without(&local))
            })
            .collect();
        if pruned.iter().any(|q| q.is_empty()) {
            continue;
        }
        let full = pruned[0].union(&pruned[1]);
        let joint = summarize(&pruned[0], AggregatorId(0))
            .snapshots
            .union(&summarize(&pruned[1], AggregatorId(1)).snapshots);

        let full_analysis = Analysis::new(&full);
        let joint_analysis = Analysis::new(&joint);
        for x in full_analysis.universe() {
            let crosses = pruned[0].contains(x.owner) != pruned[0].contains(x.target)
                && full.contains(x.owner)
                && full.contains(x.target);
            if crosses && full_analysis.chain(x) {
                cross_edges_seen += 1;
                assert!(joint_analysis.chain(x), "seed {seed}: cross chain {x} lost");
                assert_eq!(
                    full_analysis.relevant(x),
                    joint_analysis.relevant(x),
                    "seed {seed}: relevance of {x} diverged"
                );
            }
        }

        let fin_full = max_finalized_subset(&full).finalized_actors();
        let fin_joint = max_finalized_subset(&joint).finalized_actors();
        for c in joint.actors() {
            assert_eq!(
                fin_joint.contains(&c),
                fin_full.contains(&c),
                "seed {seed}: finalization verdict for {c} diverged in the summary union"
            );
        }
    }
    assert!(cross_edges_seen >= 20, "only {cross_edges_seen} cross-part chains exercised");
}

/// In a potentially finalized store with its finalized subsets removed,
/// every remaining actor depends on some receptionist: an actor whose whole
/// upstream were local and relevant would itself have been finalized.
#[test]
fn every_undecided_actor_depends_on_a_receptionist() {
    use drl::coop::{potentially_finalized_subset, receptionists_of};
    use drl::detection::depends_on;

    let mut nonempty = 0u64;
    for seed in 0..40u64 {
        let mut exec = Execution::new(seed, SchedulerPolicy::default());
        exec.run(200).unwrap();
        let mut store = SnapshotSet::new();
        for s in exec.take_snapshots() {
            store.insert(s);
        }
        let collected = max_finalized_subset(&store).finalized_actors();
        let q = potentially_finalized_subset(&store.without(&collected));
        if q.is_empty() {
            continue;
        }
        nonempty += 1;
        let receptionists = receptionists_of(&q);
        let deps = depends_on(&q);
        for c in q.actors() {
            assert!(
                receptionists.iter().any(|r| deps.depends_on(c, *r)),
                "seed {seed}: {c} depends on no receptionist"
            );
        }
    }
    assert!(nonempty >= 10, "only {nonempty} undecided stores seen");
}

/// After the wind-down, every terminated actor has a snapshot newer than its
/// final non-snapshot event.
#[test]
fn quiesce_leaves_fresh_snapshots_for_terminated_actors() {
    for seed in 0..25u64 {
        let mut exec = Execution::new(seed, SchedulerPolicy::default());
        exec.run(250).unwrap();
        exec.quiesce().unwrap();

        // The step of each actor's last state-changing event.
        let mut final_action: BTreeMap<ActorName, u64> = BTreeMap::new();
        for (step, event) in exec.events() {
            let touched: Vec<ActorName> = match event {
                Event::Spawn { refob } => vec![refob.owner, refob.target],
                Event::Send { via, .. } => vec![via.owner],
                Event::Receive { at, .. } => vec![*at],
                Event::Idle { actor } => vec![*actor],
                Event::SendInfo { created_using, .. } => vec![created_using.owner],
                Event::Info { created, .. } => vec![created.target],
                Event::SendRelease { refob } => vec![refob.owner],
                Event::Release { refob, .. } => vec![refob.target],
                Event::Compaction { refob } => vec![refob.target],
                Event::Snapshot { .. }
                | Event::In { .. }
                | Event::Out { .. }
                | Event::ReleaseOut { .. }
                | Event::InfoOut { .. } => vec![],
            };
            for actor in touched {
                final_action.insert(actor, *step);
            }
        }
        let mut newest_snapshot: BTreeMap<ActorName, u64> = BTreeMap::new();
        for snap in exec.take_snapshots() {
            let newest = newest_snapshot.entry(snap.actor).or_insert(0);
            *newest = (*newest).max(snap.taken_at);
        }
        for actor in ground_truth(exec.config()).terminated {
            let acted = final_action.get(&actor).copied().unwrap_or(0);
            let snapped = newest_snapshot.get(&actor).copied().unwrap_or(0);
            assert!(
                snapped > acted,
                "seed {seed}: {actor} snapshotted at {snapped}, last acted at {acted}"
            );
        }
    }
}
