//! Scenario runner and verification harness.
//!
//! [`run_scenario`] drives a seeded execution, routes fresh snapshots to
//! each actor's home aggregator, runs the selected detection algorithms and
//! enabled checks at a fixed step interval, winds the system down with a
//! quiescing phase, and emits a replayable trace. [`replay_trace_text`]
//! re-applies a recorded trace and recomputes every embedded checkpoint,
//! failing on any divergence. [`sweep`] repeats a scenario across seeds.
//!
//! The `drl` binary is a thin wrapper over [`cli`].

pub mod cli;

use crate::checks;
use crate::coop;
use crate::detection::{
    finalized_subset, is_finalized, is_simple_garbage, is_strongly_finalized,
    max_finalized_subset, Algorithm, SnapshotSet,
};
use crate::engine::{
    initial_configuration, parse_trace, CheckpointLine, Configuration, EngineError, Event,
    Execution, SchedulerPolicy, Trace, TraceError, TraceLine,
};
use crate::facts::ActorName;
use crate::oracle::{ground_truth, GroundTruth};
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Which detection algorithm(s) a scenario runs each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectMode {
    Chain,
    Heuristic,
    Both,
}

impl DetectMode {
    pub fn algorithms(&self) -> Vec<Algorithm> {
        match self {
            DetectMode::Chain => vec![Algorithm::Chain],
            DetectMode::Heuristic => vec![Algorithm::Heuristic],
            DetectMode::Both => vec![Algorithm::Chain, Algorithm::Heuristic],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DetectMode::Chain => "chain",
            DetectMode::Heuristic => "heuristic",
            DetectMode::Both => "both",
        }
    }

    pub fn parse(s: &str) -> Option<DetectMode> {
        match s {
            "chain" => Some(DetectMode::Chain),
            "heuristic" => Some(DetectMode::Heuristic),
            "both" => Some(DetectMode::Both),
            _ => None,
        }
    }
}

/// The checks a scenario can enable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Check {
    /// The chain invariant, verified in every reachable configuration.
    ChainLemma,
    /// Message-count and persistence lemmas: queued messages ride unreleased
    /// refobs, quiet refobs have agreeing counts, and bookkeeping facts
    /// vanish only at their sanctioned points (trace scan at the end).
    LemmaCounts,
    /// Detected actors are terminated at detection time; detection results
    /// are finalized, the heuristic result is contained in the chain result,
    /// the finalized/strongly-finalized verdicts agree, and snapshots
    /// flagged as simple garbage belong to terminated actors.
    Safety,
    /// After the wind-down, the chain algorithm over all collected snapshots
    /// reports exactly the terminated set, and the heuristic agrees.
    Liveness,
    /// On stores of at most twelve actors, the chain algorithm equals the
    /// union of all finalized subsets found by exhaustive enumeration.
    Maximality,
    /// The cooperative procedure over the aggregator stores collects exactly
    /// what the chain algorithm collects on their union.
    SummaryEquivalence,
}

impl Check {
    pub fn all() -> BTreeSet<Check> {
        [
            Check::ChainLemma,
            Check::LemmaCounts,
            Check::Safety,
            Check::Liveness,
            Check::Maximality,
            Check::SummaryEquivalence,
        ]
        .into()
    }

    pub fn name(&self) -> &'static str {
        match self {
            Check::ChainLemma => "chain-lemma",
            Check::LemmaCounts => "lemma-counts",
            Check::Safety => "safety",
            Check::Liveness => "liveness",
            Check::Maximality => "maximality",
            Check::SummaryEquivalence => "summary-equivalence",
        }
    }

    pub fn parse(s: &str) -> Option<Check> {
        match s {
            "chain-lemma" => Some(Check::ChainLemma),
            "lemma-counts" => Some(Check::LemmaCounts),
            "safety" => Some(Check::Safety),
            "liveness" => Some(Check::Liveness),
            "maximality" => Some(Check::Maximality),
            "summary-equivalence" => Some(Check::SummaryEquivalence),
            _ => None,
        }
    }
}

/// Everything needed to reproduce one scenario run.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub seed: u64,
    pub steps: u64,
    pub policy: SchedulerPolicy,
    pub aggregators: u32,
    pub detect: DetectMode,
    pub checks: BTreeSet<Check>,
    pub detect_every: u64,
    pub trace_out: Option<PathBuf>,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            seed: 0,
            steps: 200,
            policy: SchedulerPolicy::default(),
            aggregators: 1,
            detect: DetectMode::Chain,
            checks: BTreeSet::new(),
            detect_every: 25,
            trace_out: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid run spec: {0}")]
    Config(String),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Outcome of one enabled check over a whole run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckOutcome {
    pub check: Check,
    pub passed: bool,
    /// How many individual assertions the check covered.
    pub instances: u64,
    /// First violation, when failed.
    pub detail: Option<String>,
}

/// Detected-versus-oracle sizes over time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeriesPoint {
    pub step: u64,
    pub algorithm: Algorithm,
    pub detected: usize,
    pub oracle_terminated: usize,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub seed: u64,
    pub steps: u64,
    pub outcomes: Vec<CheckOutcome>,
    pub event_counts: BTreeMap<&'static str, u64>,
    pub series: Vec<SeriesPoint>,
    pub trace_text: String,
    pub trace_path: Option<PathBuf>,
    pub terminal_render: String,
    pub final_terminated: BTreeSet<ActorName>,
}

impl RunReport {
    pub fn all_passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn outcome(&self, check: Check) -> Option<&CheckOutcome> {
        self.outcomes.iter().find(|o| o.check == check)
    }

    /// Pass/fail verdicts keyed by check name (used to compare replays).
    pub fn verdicts(&self) -> BTreeMap<&'static str, bool> {
        self.outcomes.iter().map(|o| (o.check.name(), o.passed)).collect()
    }
}

impl fmt::Display for RunReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "run seed={} steps={}", self.seed, self.steps)?;
        let counts: Vec<String> =
            self.event_counts.iter().map(|(rule, n)| format!("{rule}={n}")).collect();
        writeln!(f, "  events: {}", counts.join(" "))?;
        for point in &self.series {
            writeln!(
                f,
                "  step {}: detected({})={} oracle-terminated={}",
                point.step,
                point.algorithm.name(),
                point.detected,
                point.oracle_terminated
            )?;
        }
        for o in &self.outcomes {
            let status = if o.passed { "PASS" } else { "FAIL" };
            write!(f, "  check {}: {status} ({} checks)", o.check.name(), o.instances)?;
            match &o.detail {
                Some(d) => writeln!(f, " - {d}")?,
                None => writeln!(f)?,
            }
        }
        if let Some(path) = &self.trace_path {
            writeln!(f, "  trace: {}", path.display())?;
        }
        Ok(())
    }
}

fn validate(spec: &RunSpec) -> Result<(), HarnessError> {
    if spec.aggregators == 0 {
        return Err(HarnessError::Config("aggregators must be at least 1".into()));
    }
    if spec.detect_every == 0 {
        return Err(HarnessError::Config("detect-every must be at least 1".into()));
    }
    if spec.steps > 0 && spec.detect_every > spec.steps {
        return Err(HarnessError::Config("detect-every exceeds the step count".into()));
    }
    Ok(())
}

/// Each actor's home aggregator: a stable hash of its rendered name.
pub fn home_aggregator(actor: ActorName, aggregators: u32) -> usize {
    (crate::engine::fnv64(actor.to_string().as_bytes()) % aggregators as u64) as usize
}

/// Accumulates pass/fail per check.
struct Tally {
    instances: u64,
    failure: Option<String>,
}

impl Tally {
    fn new() -> Self {
        Tally { instances: 0, failure: None }
    }

    fn record(&mut self, result: Result<(), String>) {
        self.instances += 1;
        if self.failure.is_none() {
            if let Err(e) = result {
                self.failure = Some(e);
            }
        }
    }

    fn outcome(self, check: Check) -> CheckOutcome {
        CheckOutcome {
            check,
            passed: self.failure.is_none(),
            instances: self.instances,
            detail: self.failure,
        }
    }
}

struct Scenario<'a> {
    spec: &'a RunSpec,
    stores: Vec<SnapshotSet>,
    lines: Vec<TraceLine>,
    flushed: usize,
    series: Vec<SeriesPoint>,
    tallies: BTreeMap<Check, Tally>,
}

impl<'a> Scenario<'a> {
    fn new(spec: &'a RunSpec) -> Self {
        let tallies = spec.checks.iter().map(|c| (*c, Tally::new())).collect();
        Scenario {
            spec,
            stores: vec![SnapshotSet::new(); spec.aggregators as usize],
            lines: Vec::new(),
            flushed: 0,
            series: Vec::new(),
            tallies,
        }
    }

    fn tally(&mut self, check: Check, result: Result<(), String>) {
        if let Some(t) = self.tallies.get_mut(&check) {
            t.record(result);
        }
    }

    fn enabled(&self, check: Check) -> bool {
        self.spec.checks.contains(&check)
    }

    fn flush_events(&mut self, exec: &Execution) {
        for (step, event) in &exec.events()[self.flushed..] {
            self.lines.push(TraceLine::Event { step: *step, event: event.clone() });
        }
        self.flushed = exec.events().len();
    }

    fn route_snapshots(&mut self, exec: &mut Execution, gt: Option<&GroundTruth>) {
        let snaps = exec.take_snapshots();
        let check_garbage = self.enabled(Check::Safety) && !snaps.is_empty();
        let gt_local;
        let gt = if check_garbage && gt.is_none() {
            gt_local = ground_truth(exec.config());
            Some(&gt_local)
        } else {
            gt
        };
        for snap in snaps {
            if check_garbage && is_simple_garbage(&snap) {
                let ok = gt.unwrap().is_terminated(snap.actor);
                self.tally(
                    Check::Safety,
                    if ok {
                        Ok(())
                    } else {
                        Err(format!(
                            "simple-garbage flag on non-terminated actor {}",
                            snap.actor
                        ))
                    },
                );
            }
            let home = home_aggregator(snap.actor, self.spec.aggregators);
            self.stores[home].insert(snap);
        }
    }

    fn per_step_checks(&mut self, cfg: &Configuration) {
        if self.enabled(Check::ChainLemma) {
            let r = checks::check_chain_lemma(cfg)
                .map_err(|e| format!("step {}: {e}", cfg.clock()));
            self.tally(Check::ChainLemma, r);
        }
        if self.enabled(Check::LemmaCounts) {
            let r = checks::check_queued_messages_unreleased(cfg)
                .and_then(|_| checks::check_message_counts(cfg))
                .map_err(|e| format!("step {}: {e}", cfg.clock()));
            self.tally(Check::LemmaCounts, r);
        }
    }

    fn union_store(&self) -> SnapshotSet {
        let mut union = SnapshotSet::new();
        for store in &self.stores {
            union = union.union(store);
        }
        union
    }

    fn detection_round(&mut self, exec: &mut Execution) {
        let gt = ground_truth(exec.config());
        self.route_snapshots(exec, Some(&gt));
        let step = exec.config().clock();
        self.flush_events(exec);
        self.lines.push(TraceLine::Checkpoint(CheckpointLine::Oracle {
            step,
            terminated: gt.terminated.iter().copied().collect(),
        }));

        let mut per_algorithm: BTreeMap<&'static str, BTreeSet<ActorName>> = BTreeMap::new();
        for algorithm in self.spec.detect.algorithms() {
            let mut finalized: BTreeSet<ActorName> = BTreeSet::new();
            let mut removed: BTreeSet<ActorName> = BTreeSet::new();
            let mut result_checks: Vec<Result<(), String>> = Vec::new();
            for store in &self.stores {
                let result = finalized_subset(store, algorithm);
                if self.enabled(Check::Safety) {
                    result_checks.push(if is_finalized(&result.finalized) {
                        Ok(())
                    } else {
                        Err(format!("step {step}: detection result is not finalized"))
                    });
                }
                finalized.extend(result.finalized_actors());
                removed.extend(result.removed);
            }
            for r in result_checks {
                self.tally(Check::Safety, r);
            }
            self.lines.push(TraceLine::Checkpoint(CheckpointLine::Detect {
                step,
                algorithm: algorithm.name().to_string(),
                finalized: finalized.iter().copied().collect(),
                removed: removed.iter().copied().collect(),
            }));
            self.series.push(SeriesPoint {
                step,
                algorithm,
                detected: finalized.len(),
                oracle_terminated: gt.terminated.len(),
            });
            if self.enabled(Check::Safety) {
                let stray: Vec<ActorName> =
                    finalized.difference(&gt.terminated).copied().collect();
                let r = if stray.is_empty() {
                    Ok(())
                } else {
                    Err(format!(
                        "step {step}: {} detected but not terminated: {stray:?}",
                        algorithm.name()
                    ))
                };
                self.tally(Check::Safety, r);
            }
            per_algorithm.insert(algorithm.name(), finalized);
        }

        if self.enabled(Check::Safety) {
            if let (Some(heur), Some(chain)) =
                (per_algorithm.get("heuristic"), per_algorithm.get("chain"))
            {
                let r = if heur.is_subset(chain) {
                    Ok(())
                } else {
                    Err(format!("step {step}: heuristic result exceeds the chain result"))
                };
                self.tally(Check::Safety, r);
            }
            // The two finalized characterizations agree on every store.
            let agreement: Vec<Result<(), String>> = self
                .stores
                .iter()
                .map(|store| {
                    if is_finalized(store) == is_strongly_finalized(store) {
                        Ok(())
                    } else {
                        Err(format!("step {step}: finalized/strongly-finalized verdicts differ"))
                    }
                })
                .collect();
            for r in agreement {
                self.tally(Check::Safety, r);
            }
        }

        if self.enabled(Check::Maximality) {
            let comparisons: Vec<Result<(), String>> = self
                .stores
                .iter()
                .filter(|store| store.len() <= 12 && !store.is_empty())
                .map(|store| {
                    let got = max_finalized_subset(store).finalized_actors();
                    let want = brute_force_finalized_union(store);
                    if got == want {
                        Ok(())
                    } else {
                        Err(format!(
                            "step {step}: maximum finalized subset {got:?} != enumeration {want:?}"
                        ))
                    }
                })
                .collect();
            for r in comparisons {
                self.tally(Check::Maximality, r);
            }
        }

        if self.enabled(Check::SummaryEquivalence) {
            let parts: Vec<SnapshotSet> =
                self.stores.iter().filter(|s| !s.is_empty()).cloned().collect();
            if !parts.is_empty() {
                let central = max_finalized_subset(&self.union_store()).finalized_actors();
                let r = match coop::cooperative_detect(&parts, Algorithm::Chain) {
                    Ok(results) => {
                        let collected: BTreeSet<ActorName> =
                            results.iter().flat_map(|r| r.finalized_actors()).collect();
                        if collected == central {
                            Ok(())
                        } else {
                            Err(format!(
                                "step {step}: cooperative collected {collected:?} but central found {central:?}"
                            ))
                        }
                    }
                    Err(e) => Err(format!("step {step}: {e}")),
                };
                self.tally(Check::SummaryEquivalence, r);
            }
        }
    }

    fn liveness_check(&mut self, cfg: &Configuration) {
        if !self.enabled(Check::Liveness) {
            return;
        }
        let gt = ground_truth(cfg);
        let union = self.union_store();
        let chain = max_finalized_subset(&union).finalized_actors();
        let r = if chain == gt.terminated {
            Ok(())
        } else {
            Err(format!(
                "post-quiesce chain detection {chain:?} != oracle terminated {:?}",
                gt.terminated
            ))
        };
        self.tally(Check::Liveness, r);
        let heuristic = finalized_subset(&union, Algorithm::Heuristic).finalized_actors();
        let r = if heuristic == gt.terminated {
            Ok(())
        } else {
            Err(format!(
                "post-quiesce heuristic detection {heuristic:?} != oracle terminated {:?}",
                gt.terminated
            ))
        };
        self.tally(Check::Liveness, r);
    }
}

/// Union of all finalized subsets, by exhaustive enumeration. Only for
/// stores of at most twelve actors.
pub fn brute_force_finalized_union(q: &SnapshotSet) -> BTreeSet<ActorName> {
    let actors: Vec<ActorName> = q.actors().collect();
    assert!(actors.len() <= 12, "enumeration is capped at 12 actors");
    let mut union = BTreeSet::new();
    for mask in 0u32..(1u32 << actors.len()) {
        let keep: BTreeSet<ActorName> = actors
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << *i) != 0)
            .map(|(_, a)| *a)
            .collect();
        if keep.is_subset(&union) {
            continue; // cannot add anything new
        }
        if is_finalized(&q.restrict(&keep)) {
            union.extend(keep);
        }
    }
    union
}

/// Run one scenario to completion and report on every enabled check.
pub fn run_scenario(spec: &RunSpec) -> Result<RunReport, HarnessError> {
    validate(spec)?;
    let mut exec = Execution::new(spec.seed, spec.policy.clone());
    let mut scenario = Scenario::new(spec);

    for step in 1..=spec.steps {
        exec.step()?;
        scenario.per_step_checks(exec.config());
        if step % spec.detect_every == 0 {
            scenario.detection_round(&mut exec);
        } else {
            scenario.route_snapshots(&mut exec, None);
        }
    }

    exec.quiesce()?;
    if scenario.enabled(Check::ChainLemma) {
        let r = checks::check_chain_lemma(exec.config())
            .map_err(|e| format!("post-quiesce: {e}"));
        scenario.tally(Check::ChainLemma, r);
    }
    scenario.detection_round(&mut exec);
    scenario.liveness_check(exec.config());
    if scenario.enabled(Check::LemmaCounts) {
        let r = checks::scan_trace_persistence(exec.events().iter().map(|(_, e)| e));
        scenario.tally(Check::LemmaCounts, r);
    }
    scenario.flush_events(&exec);

    let terminal_render = exec.config().render();
    let mut meta: Vec<(String, String)> = vec![
        ("steps".into(), spec.steps.to_string()),
        ("aggregators".into(), spec.aggregators.to_string()),
        ("detect".into(), spec.detect.name().to_string()),
        ("detect-every".into(), spec.detect_every.to_string()),
    ];
    if !spec.checks.is_empty() {
        let names: Vec<&str> = spec.checks.iter().map(|c| c.name()).collect();
        meta.push(("checks".into(), names.join(",")));
    }
    let trace = Trace {
        seed: spec.seed,
        policy_hash: spec.policy.hash(),
        meta,
        lines: scenario.lines,
        terminal_hash: crate::engine::config_hash(&terminal_render),
    };
    let trace_text = trace.render();

    let mut event_counts: BTreeMap<&'static str, u64> = BTreeMap::new();
    for (_, event) in exec.events() {
        *event_counts.entry(event.rule_name()).or_insert(0) += 1;
    }

    let outcomes: Vec<CheckOutcome> =
        scenario.tallies.into_iter().map(|(check, tally)| tally.outcome(check)).collect();
    let failed = outcomes.iter().any(|o| !o.passed);

    // A failed check must always leave a replayable trace behind.
    let trace_path = match (&spec.trace_out, failed) {
        (Some(path), _) => {
            std::fs::write(path, &trace_text)?;
            Some(path.clone())
        }
        (None, true) => {
            let path = std::env::temp_dir().join(format!("drl-seed{}.trace", spec.seed));
            std::fs::write(&path, &trace_text)?;
            Some(path)
        }
        (None, false) => None,
    };

    Ok(RunReport {
        seed: spec.seed,
        steps: spec.steps,
        outcomes,
        event_counts,
        series: scenario.series,
        trace_text,
        trace_path,
        terminal_render,
        final_terminated: ground_truth(exec.config()).terminated,
    })
}

fn corrupt<T>(msg: impl Into<String>) -> Result<T, HarnessError> {
    Err(HarnessError::Trace(TraceError::Corrupt(msg.into())))
}

/// Re-apply a recorded trace, recomputing every checkpoint line and the
/// terminal hash. Any divergence, illegal event, or malformed line fails
/// with a corrupt-trace error.
pub fn replay_trace_text(text: &str) -> Result<RunReport, HarnessError> {
    let trace = parse_trace(text)?;
    let aggregators: u32 = match trace.meta("aggregators") {
        Some(v) => v.parse().map_err(|_| TraceError::Corrupt("bad aggregators field".into()))?,
        None => 1,
    };
    let checks: BTreeSet<Check> = match trace.meta("checks") {
        Some(list) => list
            .split(',')
            .map(|s| {
                Check::parse(s)
                    .ok_or_else(|| TraceError::Corrupt(format!("unknown check {s:?}")))
            })
            .collect::<Result<_, _>>()?,
        None => BTreeSet::new(),
    };

    let mut cfg = initial_configuration();
    let mut stores: Vec<SnapshotSet> = vec![SnapshotSet::new(); aggregators as usize];
    let mut tallies: BTreeMap<Check, Tally> =
        checks.iter().map(|c| (*c, Tally::new())).collect();
    let mut applied: Vec<Event> = Vec::new();
    let mut event_counts: BTreeMap<&'static str, u64> = BTreeMap::new();
    let mut series = Vec::new();

    for line in &trace.lines {
        match line {
            TraceLine::Event { step, event } => {
                if *step != cfg.clock() {
                    return corrupt(format!(
                        "event at step {step} but the configuration is at {}",
                        cfg.clock()
                    ));
                }
                if let Err(e) = cfg.apply_event(event) {
                    return corrupt(format!("illegal event during replay: {e}"));
                }
                if let Event::Snapshot { actor } = event {
                    let snap = cfg.snapshot_of(*actor).expect("snapshotted actor exists");
                    stores[home_aggregator(*actor, aggregators)].insert(snap);
                }
                *event_counts.entry(event.rule_name()).or_insert(0) += 1;
                applied.push(event.clone());
                if checks.contains(&Check::ChainLemma) {
                    tallies.get_mut(&Check::ChainLemma).unwrap().record(
                        checks::check_chain_lemma(&cfg).map_err(|e| format!("step {step}: {e}")),
                    );
                }
                if checks.contains(&Check::LemmaCounts) {
                    tallies.get_mut(&Check::LemmaCounts).unwrap().record(
                        checks::check_queued_messages_unreleased(&cfg)
                            .and_then(|_| checks::check_message_counts(&cfg))
                            .map_err(|e| format!("step {step}: {e}")),
                    );
                }
            }
            TraceLine::Checkpoint(CheckpointLine::Oracle { step, terminated }) => {
                if *step != cfg.clock() {
                    return corrupt("oracle checkpoint out of position");
                }
                let fresh: Vec<ActorName> =
                    ground_truth(&cfg).terminated.iter().copied().collect();
                if &fresh != terminated {
                    return corrupt(format!(
                        "oracle checkpoint at step {step} diverged: recorded {terminated:?}, recomputed {fresh:?}"
                    ));
                }
            }
            TraceLine::Checkpoint(CheckpointLine::Detect { step, algorithm, finalized, removed }) => {
                if *step != cfg.clock() {
                    return corrupt("detection checkpoint out of position");
                }
                let algo = match algorithm.as_str() {
                    "chain" => Algorithm::Chain,
                    "heuristic" => Algorithm::Heuristic,
                    other => return corrupt(format!("unknown algorithm {other:?}")),
                };
                let mut fresh_finalized: BTreeSet<ActorName> = BTreeSet::new();
                let mut fresh_removed: BTreeSet<ActorName> = BTreeSet::new();
                for store in &stores {
                    let result = finalized_subset(store, algo);
                    fresh_finalized.extend(result.finalized_actors());
                    fresh_removed.extend(result.removed);
                }
                let fresh_f: Vec<ActorName> = fresh_finalized.iter().copied().collect();
                let fresh_r: Vec<ActorName> = fresh_removed.iter().copied().collect();
                if &fresh_f != finalized || &fresh_r != removed {
                    return corrupt(format!(
                        "detection checkpoint at step {step} diverged for {algorithm}"
                    ));
                }
                series.push(SeriesPoint {
                    step: *step,
                    algorithm: algo,
                    detected: fresh_f.len(),
                    oracle_terminated: ground_truth(&cfg).terminated.len(),
                });
                if checks.contains(&Check::Safety) {
                    let terminated = ground_truth(&cfg).terminated;
                    tallies.get_mut(&Check::Safety).unwrap().record(
                        if fresh_finalized.is_subset(&terminated) {
                            Ok(())
                        } else {
                            Err(format!("step {step}: detected set not terminated"))
                        },
                    );
                }
            }
        }
    }

    let terminal_render = cfg.render();
    if crate::engine::config_hash(&terminal_render) != trace.terminal_hash {
        return corrupt("terminal configuration hash diverged");
    }
    if checks.contains(&Check::LemmaCounts) {
        tallies
            .get_mut(&Check::LemmaCounts)
            .unwrap()
            .record(checks::scan_trace_persistence(applied.iter()));
    }
    if checks.contains(&Check::Liveness) {
        let mut union = SnapshotSet::new();
        for store in &stores {
            union = union.union(store);
        }
        let terminated = ground_truth(&cfg).terminated;
        let chain = max_finalized_subset(&union).finalized_actors();
        tallies.get_mut(&Check::Liveness).unwrap().record(if chain == terminated {
            Ok(())
        } else {
            Err("replayed liveness check diverged".into())
        });
    }

    let steps = trace.meta("steps").and_then(|s| s.parse().ok()).unwrap_or(0);
    Ok(RunReport {
        seed: trace.seed,
        steps,
        // Only the checks the replay actually re-ran appear in the report.
        outcomes: tallies
            .into_iter()
            .filter(|(_, t)| t.instances > 0)
            .map(|(c, t)| t.outcome(c))
            .collect(),
        event_counts,
        series,
        trace_text: text.to_string(),
        trace_path: None,
        terminal_render,
        final_terminated: ground_truth(&cfg).terminated,
    })
}

pub fn replay_trace(path: &Path) -> Result<RunReport, HarnessError> {
    let text = std::fs::read_to_string(path)?;
    replay_trace_text(&text)
}

/// Aggregate of a seed sweep.
#[derive(Debug, Clone)]
pub struct SweepReport {
    pub per_seed: Vec<(u64, bool)>,
    pub first_failure: Option<(u64, String)>,
    pub event_counts: BTreeMap<&'static str, u64>,
    pub check_instances: BTreeMap<Check, u64>,
}

impl SweepReport {
    pub fn all_passed(&self) -> bool {
        self.per_seed.iter().all(|(_, ok)| *ok)
    }

    pub fn passed_count(&self) -> usize {
        self.per_seed.iter().filter(|(_, ok)| *ok).count()
    }
}

impl fmt::Display for SweepReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "sweep: {}/{} seeds passed", self.passed_count(), self.per_seed.len())?;
        for (check, n) in &self.check_instances {
            writeln!(f, "  {}: {} checks", check.name(), n)?;
        }
        if let Some((seed, detail)) = &self.first_failure {
            writeln!(f, "  first failure: seed {seed}: {detail}")?;
        }
        Ok(())
    }
}

/// Run the scenario once per seed and aggregate pass rates. Per-seed
/// verdicts are independent of the order the seeds are visited in.
pub fn sweep(
    seeds: impl IntoIterator<Item = u64>,
    template: &RunSpec,
) -> Result<SweepReport, HarnessError> {
    let mut report = SweepReport {
        per_seed: Vec::new(),
        first_failure: None,
        event_counts: BTreeMap::new(),
        check_instances: BTreeMap::new(),
    };
    for seed in seeds {
        let spec = RunSpec { seed, trace_out: None, ..template.clone() };
        let run = run_scenario(&spec)?;
        let ok = run.all_passed();
        if !ok && report.first_failure.is_none() {
            let detail = run
                .outcomes
                .iter()
                .find(|o| !o.passed)
                .and_then(|o| o.detail.clone())
                .unwrap_or_else(|| "unknown".into());
            report.first_failure = Some((seed, detail));
        }
        for (rule, n) in &run.event_counts {
            *report.event_counts.entry(rule).or_insert(0) += n;
        }
        for o in &run.outcomes {
            *report.check_instances.entry(o.check).or_insert(0) += o.instances;
        }
        report.per_seed.push((seed, ok));
    }
    if report.per_seed.is_empty() {
        return Err(HarnessError::Config("empty seed range".into()));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick_spec() -> RunSpec {
        RunSpec { steps: 120, checks: Check::all(), detect: DetectMode::Both, ..RunSpec::default() }
    }

    #[test]
    fn zero_step_run_passes_vacuously() {
        let spec = RunSpec { steps: 0, checks: Check::all(), ..RunSpec::default() };
        let report = run_scenario(&spec).unwrap();
        assert!(report.all_passed(), "{report}");
    }

    #[test]
    fn default_scenario_passes_all_checks() {
        for seed in [0, 1, 2] {
            let spec = RunSpec { seed, ..quick_spec() };
            let report = run_scenario(&spec).unwrap();
            assert!(report.all_passed(), "seed {seed}:\n{report}");
        }
    }

    #[test]
    fn empty_check_set_reports_only_statistics() {
        let spec = RunSpec { seed: 4, steps: 80, ..RunSpec::default() };
        let report = run_scenario(&spec).unwrap();
        assert!(report.outcomes.is_empty());
        assert!(report.all_passed());
        assert!(!report.event_counts.is_empty());
        assert!(!report.series.is_empty());
    }

    #[test]
    fn multi_aggregator_scenario_passes() {
        let spec = RunSpec { seed: 5, aggregators: 3, ..quick_spec() };
        let report = run_scenario(&spec).unwrap();
        assert!(report.all_passed(), "{report}");
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let spec = RunSpec { aggregators: 0, ..RunSpec::default() };
        assert!(matches!(run_scenario(&spec), Err(HarnessError::Config(_))));
        let spec = RunSpec { steps: 10, detect_every: 25, ..RunSpec::default() };
        assert!(matches!(run_scenario(&spec), Err(HarnessError::Config(_))));
    }

    #[test]
    fn reports_are_deterministic_per_spec() {
        let a = run_scenario(&quick_spec()).unwrap();
        let b = run_scenario(&quick_spec()).unwrap();
        assert_eq!(a.trace_text, b.trace_text);
        assert_eq!(a.verdicts(), b.verdicts());
        assert_eq!(a.series, b.series);
        assert_eq!(a.event_counts, b.event_counts);
    }

    #[test]
    fn replay_reproduces_verdicts_and_terminal_state() {
        let report = run_scenario(&quick_spec()).unwrap();
        let replayed = replay_trace_text(&report.trace_text).unwrap();
        assert_eq!(replayed.terminal_render, report.terminal_render);
        assert_eq!(replayed.final_terminated, report.final_terminated);
        for (check, passed) in replayed.verdicts() {
            assert_eq!(Some(&passed), report.verdicts().get(check));
        }
    }

    #[test]
    fn replay_rejects_reordered_traces() {
        let report = run_scenario(&quick_spec()).unwrap();
        // Swap two adjacent event lines; the step numbering breaks.
        let mut lines: Vec<&str> = report.trace_text.lines().collect();
        let first_event = 1;
        lines.swap(first_event, first_event + 1);
        let tampered = lines.join("\n");
        assert!(matches!(
            replay_trace_text(&tampered),
            Err(HarnessError::Trace(TraceError::Corrupt(_)))
        ));
    }

    #[test]
    fn sweep_aggregates_and_is_order_independent() {
        let template = RunSpec { steps: 60, checks: [Check::Safety].into(), ..RunSpec::default() };
        let forward = sweep(0..4, &template).unwrap();
        let backward = sweep((0..4).rev(), &template).unwrap();
        assert!(forward.all_passed());
        let mut fwd = forward.per_seed.clone();
        let mut bwd = backward.per_seed.clone();
        fwd.sort();
        bwd.sort();
        assert_eq!(fwd, bwd);
        assert!(sweep(std::iter::empty(), &template).is_err());
    }
}
