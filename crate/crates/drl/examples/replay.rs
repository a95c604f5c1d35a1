//! Record a fully-checked scenario to a trace file, replay it, and show
//! that tampering is caught.
//!
//! `cargo run --example replay`

use drl::harness::{replay_trace_text, run_scenario, Check, DetectMode, RunSpec};

fn main() {
    let spec = RunSpec {
        seed: 5,
        steps: 150,
        detect: DetectMode::Both,
        checks: Check::all(),
        ..RunSpec::default()
    };
    let report = run_scenario(&spec).unwrap();
    assert!(report.all_passed());
    println!(
        "recorded run: {} trace lines, terminal hash pinned",
        report.trace_text.lines().count()
    );

    let replayed = replay_trace_text(&report.trace_text).unwrap();
    assert_eq!(replayed.terminal_render, report.terminal_render);
    for (check, passed) in replayed.verdicts() {
        assert_eq!(report.verdicts().get(check), Some(&passed), "verdict for {check}");
    }
    println!("replay reproduced the terminal configuration and all verdicts");

    // Swap two adjacent event lines: the step numbering (and usually the
    // rule pattern) no longer matches, and replay refuses the trace.
    let mut lines: Vec<&str> = report.trace_text.lines().collect();
    lines.swap(1, 2);
    let tampered = lines.join("\n");
    match replay_trace_text(&tampered) {
        Err(e) => println!("tampered trace rejected: {e}"),
        Ok(_) => panic!("tampered trace was accepted"),
    }
}
