//! Snapshot-based termination detection against the ground truth.
//!
//! Runs a seeded execution, collects the snapshots idle actors take along
//! the way, and periodically asks both detection algorithms which actors
//! have terminated. Detected sets are always contained in the oracle's
//! terminated set; after the wind-down they coincide with it.
//!
//! `cargo run --example detect -- 3`

use drl::detection::{heuristic_finalized_subset, max_finalized_subset, SnapshotSet};
use drl::engine::{Execution, SchedulerPolicy};
use drl::facts::ActorName;
use drl::oracle::ground_truth;
use std::collections::BTreeSet;

fn names(set: &BTreeSet<ActorName>) -> String {
    let parts: Vec<String> = set.iter().map(|a| a.to_string()).collect();
    format!("[{}]", parts.join(", "))
}

fn main() {
    let seed: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let mut exec = Execution::new(seed, SchedulerPolicy::default());
    let mut store = SnapshotSet::new();

    for round in 1..=8 {
        exec.run(50).unwrap();
        for snap in exec.take_snapshots() {
            store.insert(snap); // the store keeps the newest per actor
        }
        let chain = max_finalized_subset(&store).finalized_actors();
        let heuristic = heuristic_finalized_subset(&store).finalized_actors();
        let oracle = ground_truth(exec.config()).terminated;
        println!(
            "round {round}: store={:>3} chain={:>3} heuristic={:>3} oracle-terminated={:>3}",
            store.len(),
            chain.len(),
            heuristic.len(),
            oracle.len()
        );
        assert!(chain.is_subset(&oracle), "safety");
        assert!(heuristic.is_subset(&chain), "heuristic soundness");
    }

    // Wind down: deliverable messages drain, everyone idles and snapshots.
    exec.quiesce().unwrap();
    for snap in exec.take_snapshots() {
        store.insert(snap);
    }
    let detected = max_finalized_subset(&store).finalized_actors();
    let oracle = ground_truth(exec.config()).terminated;
    println!("\nafter wind-down:");
    println!("  detected  {}", names(&detected));
    println!("  oracle    {}", names(&oracle));
    assert_eq!(detected, oracle, "post-quiesce detection is exact");
}
