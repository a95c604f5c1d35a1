//! Two snapshot aggregators collect a terminated cycle that spans their
//! stores by exchanging summaries instead of full snapshot sets.
//!
//! `cargo run --example cooperative -- 11`

use drl::coop::{cooperative_detect, potentially_finalized_subset, receptionists_of, summarize, AggregatorId};
use drl::detection::{max_finalized_subset, Algorithm, SnapshotSet};
use drl::engine::{Execution, SchedulerPolicy};
use drl::harness::home_aggregator;
use std::collections::BTreeSet;

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(11);
    let mut exec = Execution::new(seed, SchedulerPolicy::default());
    exec.run(300).unwrap();
    exec.quiesce().unwrap();

    // Route each actor's snapshots to its home aggregator.
    let mut stores = vec![SnapshotSet::new(); 2];
    for snap in exec.take_snapshots() {
        stores[home_aggregator(snap.actor, 2)].insert(snap);
    }
    let union = stores[0].union(&stores[1]);
    println!("stores: {} + {} snapshots", stores[0].len(), stores[1].len());

    // What a single aggregator holding everything would collect.
    let central = max_finalized_subset(&union).finalized_actors();

    // What each aggregator can prove alone.
    let local: Vec<BTreeSet<_>> =
        stores.iter().map(|q| max_finalized_subset(q).finalized_actors()).collect();
    println!("local-only collection: {} + {} actors", local[0].len(), local[1].len());

    // The exchanged summaries carry boundary facts plus fake refobs that
    // encode who depends on which receptionist.
    for (i, store) in stores.iter().enumerate() {
        let pruned = potentially_finalized_subset(store);
        let summary = summarize(&pruned, AggregatorId(i as u32));
        let facts: usize = store.snapshots().map(|s| s.knowledge.len()).sum();
        let kept: usize = summary.snapshots.snapshots().map(|s| s.knowledge.len()).sum();
        println!(
            "aggregator {i}: {} receptionists, summary keeps {kept}/{facts} facts, {} fake refobs",
            receptionists_of(&pruned).len(),
            summary.fake_refobs.len()
        );
    }

    // The full cooperative procedure.
    let results = cooperative_detect(&stores, Algorithm::Chain).unwrap();
    let collected: BTreeSet<_> = results.iter().flat_map(|r| r.finalized_actors()).collect();
    println!(
        "\ncooperative collection: {} actors; central would collect {}",
        collected.len(),
        central.len()
    );
    assert_eq!(collected, central, "exchange loses nothing");
    let local_total: usize = local.iter().map(|l| l.len()).sum();
    if collected.len() > local_total {
        println!(
            "{} actors were collectable only through the exchange",
            collected.len() - local_total
        );
    }
}
