//! The reference-object life-cycle, one rule at a time.
//!
//! A spawns B and C, introduces B to C by creating a refob inside a message,
//! informs C about it, B drops the refob again, and C compacts every trace
//! of it away. Run with `cargo run --example lifecycle`.

use drl::engine::{initial_configuration, Configuration, Event};
use drl::facts::ActorName;

fn show(cfg: &Configuration, title: &str, actors: &[ActorName]) {
    println!("--- {title} (clock {})", cfg.clock());
    for actor in actors {
        let state = cfg.actor(*actor).unwrap();
        let status = if state.is_busy() { "busy" } else { "idle" };
        println!("{actor} [{status}]");
        for line in state.knowledge.render().lines() {
            println!("    {line}");
        }
        for msg in cfg.mailbox(*actor) {
            println!("    (undelivered: {msg:?})");
        }
    }
    println!();
}

fn main() {
    let mut cfg = initial_configuration();
    let a = *cfg.actors().keys().next().unwrap();

    // Spawning hands the parent an activated refob and the child a created
    // fact for it, plus a self-refob.
    let spawn_b = cfg.build_spawn(a);
    let Event::Spawn { refob: x } = spawn_b.clone() else { unreachable!() };
    cfg.apply_event(&spawn_b).unwrap();
    let b = x.target;
    let spawn_c = cfg.build_spawn(a);
    let Event::Spawn { refob: y } = spawn_c.clone() else { unreachable!() };
    cfg.apply_event(&spawn_c).unwrap();
    let c = y.target;
    show(&cfg, "after spawning B and C", &[a, b, c]);

    // A introduces B to C: the message along x carries a fresh refob z
    // owned by B targeting C, and A remembers that z was created using y.
    let send = cfg.build_send(x, &[y]);
    let Event::Send { sent, .. } = send.clone() else { unreachable!() };
    let z = sent[0];
    cfg.apply_event(&send).unwrap();
    show(&cfg, &format!("A sent B the refob {z}"), &[a, b]);

    // B receives and activates z; A flushes the created-using fact into an
    // info message for C.
    cfg.apply_event(&Event::Idle { actor: b }).unwrap();
    cfg.apply_event(&Event::Receive { at: b, via: Some(x), contents: vec![z] }).unwrap();
    cfg.apply_event(&Event::SendInfo { created_using: y, created: z }).unwrap();
    show(&cfg, "B activated z; info message on its way to C", &[a, b, c]);

    // B no longer needs z: deactivation queues a release message carrying
    // the number of messages B sent along z (none).
    cfg.apply_event(&Event::SendRelease { refob: z }).unwrap();
    show(&cfg, "B deactivated z", &[b, c]);

    // C processes both system messages (any order) and compacts.
    cfg.apply_event(&Event::Idle { actor: c }).unwrap();
    cfg.apply_event(&Event::Release { refob: z, count: 0 }).unwrap();
    cfg.apply_event(&Event::Info { created_using: y, created: z }).unwrap();
    cfg.apply_event(&Event::Compaction { refob: z }).unwrap();
    show(&cfg, "C compacted: no fact mentions z anymore", &[c]);
}
