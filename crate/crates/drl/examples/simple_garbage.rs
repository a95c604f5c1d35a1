//! Local detection of simple garbage: an isolated actor can tell, from its
//! own snapshot alone, that nothing will ever message it again.
//!
//! `cargo run --example simple_garbage`

use drl::detection::is_simple_garbage;
use drl::engine::{initial_configuration, Event};
use drl::oracle::ground_truth;

fn main() {
    let mut cfg = initial_configuration();
    let a = *cfg.actors().keys().next().unwrap();

    let spawn = cfg.build_spawn(a);
    let Event::Spawn { refob: x } = spawn.clone() else { unreachable!() };
    cfg.apply_event(&spawn).unwrap();
    let b = x.target;
    cfg.apply_event(&Event::Idle { actor: b }).unwrap();

    let before = cfg.snapshot_of(b).unwrap();
    println!("while the parent holds {x}:");
    println!("  simple garbage? {}", is_simple_garbage(&before));
    assert!(!is_simple_garbage(&before));

    // The parent releases its only refob to the child; the child records
    // the release and compacts the dead bookkeeping away.
    cfg.apply_event(&Event::SendRelease { refob: x }).unwrap();
    cfg.apply_event(&Event::Release { refob: x, count: 0 }).unwrap();
    cfg.apply_event(&Event::Compaction { refob: x }).unwrap();

    let after = cfg.snapshot_of(b).unwrap();
    println!("\nafter the parent released {x} and the child compacted:");
    for line in after.knowledge.render().lines() {
        println!("    {line}");
    }
    println!("  simple garbage? {}", is_simple_garbage(&after));
    assert!(is_simple_garbage(&after));
    assert!(ground_truth(&cfg).is_terminated(b), "the oracle agrees");

    // The flag is purely local: no other snapshot was consulted.
    println!("\nthe flag used only {b}'s own {} facts", after.knowledge.len());
}
