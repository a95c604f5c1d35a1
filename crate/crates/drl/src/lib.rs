//! An executable model of deferred reference listing (DRL): a protocol for
//! detecting terminated actors from asynchronous local snapshots.
//!
//! The crate is organized around the protocol's layers:
//!
//! * [`facts`] — refobs, facts, knowledge sets, and the derivation relation.
//! * [`engine`] — configurations, the fourteen transition rules, a seeded
//!   scheduler producing legal executions, and replayable traces.
//! * [`oracle`] — ground truth over full configurations: blocked/terminated
//!   sets, potential reachability, and chain existence.
//! * [`detection`] — snapshot-set predicates and the finalized-subset
//!   algorithms that recognize terminated actors from snapshots alone.
//! * [`coop`] — summaries and the cooperative procedure by which multiple
//!   snapshot aggregators collect cycles spanning their stores.
//! * [`checks`] — the protocol's invariants as runtime checks over
//!   configurations and traces.
//! * [`harness`] — scenario runner: scheduled detection, invariant checking,
//!   trace emission, replay, and seed sweeps. The `drl` binary is a thin
//!   wrapper over this module.
//!
//! The `examples/` directory demonstrates each capability end to end; start
//! with `cargo run --example lifecycle`.

pub mod checks;
pub mod coop;
pub mod detection;
pub mod engine;
pub mod facts;
pub mod harness;
pub mod oracle;
