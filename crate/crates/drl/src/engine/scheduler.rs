//! Seeded generation of legal executions.
//!
//! Events are drawn by weighted category (deliver-message, spawn, send, idle,
//! deactivate, snapshot, compaction, external-in, external-out); within a
//! category the choice is uniform via the seeded generator, so a run is fully
//! determined by `(seed, policy)`. Unbounded rule families (send payloads,
//! environment messages) are bounded by the policy limits and sampled from
//! the live configuration.

use super::{Configuration, EngineError, Event, Message, initial_configuration};
use crate::detection::Snapshot;
use crate::facts::{ActorName, Refob};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeSet, VecDeque};

/// Step bound multiplier for the quiescing wind-down.
pub const DEFAULT_QUIESCE_FACTOR: u64 = 50;

/// Per-category weights for the scheduler's event choice. A category with
/// weight zero is never drawn.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub deliver: u32,
    pub spawn: u32,
    pub send: u32,
    pub idle: u32,
    pub deactivate: u32,
    pub snapshot: u32,
    pub compaction: u32,
    pub external_in: u32,
    pub external_out: u32,
}

impl Default for Weights {
    fn default() -> Self {
        Weights {
            deliver: 10,
            spawn: 4,
            send: 7,
            idle: 2,
            deactivate: 2,
            snapshot: 2,
            compaction: 1,
            external_in: 1,
            external_out: 1,
        }
    }
}

/// Release/info scheduling mode. In the default mode an actor flushes an
/// info message immediately after creating a refob and deactivates refobs
/// one at a time; in batching mode info and release messages for a target
/// are deferred and sent together once every refob to that target is dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    EagerInfo,
    BatchRelease,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerPolicy {
    pub weights: Weights,
    /// `limits.maxRefobsPerMessage`
    pub max_refobs_per_message: usize,
    /// `limits.busyBudget`: actions a busy actor may take before the
    /// scheduler only offers it Idle.
    pub busy_budget: u32,
    /// `mode.fifo`: restrict delivery to the oldest undelivered message per
    /// (sender, receiver) edge.
    pub fifo: bool,
    /// `mode.batchRelease`
    pub batch_release: bool,
    /// `snapshot.rate`: probability that an actor snapshots immediately
    /// after an Idle, Info, or Release event.
    pub snapshot_rate: f64,
}

impl Default for SchedulerPolicy {
    fn default() -> Self {
        SchedulerPolicy {
            weights: Weights::default(),
            max_refobs_per_message: 3,
            busy_budget: 5,
            fifo: false,
            batch_release: false,
            snapshot_rate: 0.25,
        }
    }
}

impl SchedulerPolicy {
    pub fn mode(&self) -> Mode {
        if self.batch_release {
            Mode::BatchRelease
        } else {
            Mode::EagerInfo
        }
    }

    /// Canonical flat key-value rendering; this is also the config file
    /// format accepted by [`SchedulerPolicy::parse`].
    pub fn render(&self) -> String {
        let w = &self.weights;
        format!(
            "weights.deliver = {}\n\
             weights.spawn = {}\n\
             weights.send = {}\n\
             weights.idle = {}\n\
             weights.deactivate = {}\n\
             weights.snapshot = {}\n\
             weights.compaction = {}\n\
             weights.external-in = {}\n\
             weights.external-out = {}\n\
             limits.maxRefobsPerMessage = {}\n\
             limits.busyBudget = {}\n\
             mode.fifo = {}\n\
             mode.batchRelease = {}\n\
             snapshot.rate = {:?}\n",
            w.deliver,
            w.spawn,
            w.send,
            w.idle,
            w.deactivate,
            w.snapshot,
            w.compaction,
            w.external_in,
            w.external_out,
            self.max_refobs_per_message,
            self.busy_budget,
            self.fifo,
            self.batch_release,
            self.snapshot_rate,
        )
    }

    /// Parse a flat key-value config file. Unset keys keep their defaults;
    /// `#` starts a comment.
    pub fn parse(text: &str) -> Result<SchedulerPolicy, String> {
        let mut policy = SchedulerPolicy::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", lineno + 1))?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: &str| format!("line {}: bad {what} value {value:?}", lineno + 1);
            let as_u32 = || value.parse::<u32>().map_err(|_| bad("integer"));
            match key {
                "weights.deliver" => policy.weights.deliver = as_u32()?,
                "weights.spawn" => policy.weights.spawn = as_u32()?,
                "weights.send" => policy.weights.send = as_u32()?,
                "weights.idle" => policy.weights.idle = as_u32()?,
                "weights.deactivate" => policy.weights.deactivate = as_u32()?,
                "weights.snapshot" => policy.weights.snapshot = as_u32()?,
                "weights.compaction" => policy.weights.compaction = as_u32()?,
                "weights.external-in" => policy.weights.external_in = as_u32()?,
                "weights.external-out" => policy.weights.external_out = as_u32()?,
                "limits.maxRefobsPerMessage" => {
                    policy.max_refobs_per_message =
                        value.parse().map_err(|_| bad("integer"))?
                }
                "limits.busyBudget" => policy.busy_budget = as_u32()?,
                "mode.fifo" => policy.fifo = value.parse().map_err(|_| bad("boolean"))?,
                "mode.batchRelease" => {
                    policy.batch_release = value.parse().map_err(|_| bad("boolean"))?
                }
                "snapshot.rate" => {
                    policy.snapshot_rate = value.parse().map_err(|_| bad("float"))?
                }
                other => return Err(format!("line {}: unknown key {other:?}", lineno + 1)),
            }
        }
        Ok(policy)
    }

    pub fn hash(&self) -> u64 {
        fnv64(self.render().as_bytes())
    }
}

/// FNV-1a, used for stable fingerprints in trace headers.
pub fn fnv64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// A running execution: configuration, seeded generator, and the recorded
/// event log. Snapshot events deposit copies of the actor's knowledge set
/// into a buffer for the caller to drain.
pub struct Execution {
    cfg: Configuration,
    rng: ChaCha8Rng,
    policy: SchedulerPolicy,
    seed: u64,
    events: Vec<(u64, Event)>,
    forced: VecDeque<Event>,
    snapshots: Vec<Snapshot>,
}

impl Execution {
    pub fn new(seed: u64, policy: SchedulerPolicy) -> Self {
        Execution {
            cfg: initial_configuration(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            policy,
            seed,
            events: Vec::new(),
            forced: VecDeque::new(),
            snapshots: Vec::new(),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn policy(&self) -> &SchedulerPolicy {
        &self.policy
    }

    pub fn config(&self) -> &Configuration {
        &self.cfg
    }

    pub fn events(&self) -> &[(u64, Event)] {
        &self.events
    }

    /// Drain the snapshots emitted since the last call.
    pub fn take_snapshots(&mut self) -> Vec<Snapshot> {
        std::mem::take(&mut self.snapshots)
    }

    /// Apply an event chosen by the caller (scripted scenarios), recording it
    /// like a sampled one.
    pub fn apply_scripted(&mut self, event: Event) -> Result<(), EngineError> {
        self.apply_recorded(event)
    }

    fn apply_recorded(&mut self, event: Event) -> Result<(), EngineError> {
        let step = self.cfg.clock();
        self.cfg.apply_event(&event)?;
        if let Event::Snapshot { actor } = &event {
            self.snapshots.push(self.cfg.snapshot_of(*actor).expect("snapshotted actor exists"));
        }
        self.events.push((step, event));
        Ok(())
    }

    /// Sample and apply one event. Never deadlocks: some actor always has
    /// Idle or Snapshot available.
    pub fn step(&mut self) -> Result<(), EngineError> {
        while let Some(forced) = self.forced.pop_front() {
            if self.cfg.is_enabled(&forced) {
                return self.finish_step(forced);
            }
            debug_assert!(false, "forced event became disabled: {forced}");
        }
        let event = self.sample_event()?;
        self.finish_step(event)
    }

    fn finish_step(&mut self, event: Event) -> Result<(), EngineError> {
        self.apply_recorded(event.clone())?;
        // Eager-info mode: flush the created-using facts a send just added.
        if self.policy.mode() == Mode::EagerInfo {
            if let Event::Send { using, sent, .. } = &event {
                for (y, z) in using.iter().zip(sent) {
                    self.forced.push_back(Event::SendInfo { created_using: *y, created: *z });
                }
            }
        }
        // An actor that just performed Idle, Info, or Release snapshots
        // immediately with probability snapshot.rate.
        let snapshot_subject = match &event {
            Event::Idle { actor } => Some(*actor),
            Event::Info { created, .. } => Some(created.target),
            Event::Release { refob, .. } => Some(refob.target),
            _ => None,
        };
        if let Some(actor) = snapshot_subject {
            if self.policy.snapshot_rate > 0.0
                && self.rng.gen::<f64>() < self.policy.snapshot_rate
            {
                self.forced.push_back(Event::Snapshot { actor });
            }
        }
        Ok(())
    }

    /// Run `steps` sampled events.
    pub fn run(&mut self, steps: u64) -> Result<(), EngineError> {
        for _ in 0..steps {
            self.step()?;
        }
        Ok(())
    }

    // --- sampling ---

    fn internal_deliveries(&self) -> Vec<Event> {
        let mut out = Vec::new();
        for (at, mbox) in self.cfg.mailboxes() {
            let Some(state) = self.cfg.actor(at) else { continue };
            if !state.is_idle() {
                continue;
            }
            let mut seen_senders: BTreeSet<Option<ActorName>> = BTreeSet::new();
            for msg in mbox {
                if self.policy.fifo && !seen_senders.insert(msg.sender()) {
                    continue; // an older message from this sender is pending
                }
                let event = match msg {
                    Message::App { via, contents } => {
                        Event::Receive { at, via: *via, contents: contents.clone() }
                    }
                    Message::Info { created_using, created } => {
                        Event::Info { created_using: *created_using, created: *created }
                    }
                    Message::Release { refob, count } => {
                        Event::Release { refob: *refob, count: *count }
                    }
                };
                if matches!(event, Event::Release { .. }) && !self.cfg.is_enabled(&event) {
                    continue;
                }
                if !out.contains(&event) {
                    out.push(event);
                }
            }
        }
        out
    }

    fn external_deliveries(&self) -> Vec<Event> {
        let mut out = Vec::new();
        for (at, mbox) in self.cfg.mailboxes() {
            if self.cfg.actor(at).is_some() {
                continue;
            }
            for msg in mbox {
                let event = match msg {
                    Message::App { via, contents } => Event::Out {
                        via: via.expect("app message to an external carries a refob"),
                        contents: contents.clone(),
                    },
                    Message::Info { created_using, created } => {
                        Event::InfoOut { created_using: *created_using, created: *created }
                    }
                    Message::Release { refob, .. } => Event::ReleaseOut { refob: *refob },
                };
                if !out.contains(&event) {
                    out.push(event);
                }
            }
        }
        out
    }

    fn busy_with_budget(&self) -> Vec<ActorName> {
        self.cfg
            .actors()
            .iter()
            .filter(|(_, a)| a.is_busy() && a.actions_this_activation < self.policy.busy_budget)
            .map(|(n, _)| *n)
            .collect()
    }

    fn sample_event(&mut self) -> Result<Event, EngineError> {
        #[derive(Clone, Copy, PartialEq)]
        enum Cat {
            Deliver,
            Spawn,
            Send,
            Idle,
            Deactivate,
            Snapshot,
            Compaction,
            ExternalIn,
            ExternalOut,
        }

        let deliveries = self.internal_deliveries();
        let ext_deliveries = self.external_deliveries();
        let budget_ok = self.busy_with_budget();
        let busy: Vec<ActorName> = self
            .cfg
            .actors()
            .iter()
            .filter(|(_, a)| a.is_busy())
            .map(|(n, _)| *n)
            .collect();
        let idle: Vec<ActorName> = self
            .cfg
            .actors()
            .iter()
            .filter(|(_, a)| a.is_idle())
            .map(|(n, _)| *n)
            .collect();

        // (sender, via) pairs for sends; (owner, refob) for deactivation.
        let mut send_pairs: Vec<Refob> = Vec::new();
        let mut release_candidates: Vec<Refob> = Vec::new();
        let mut batch_candidates: Vec<(ActorName, ActorName)> = Vec::new();
        for name in &budget_ok {
            let knowledge = &self.cfg.actor(*name).unwrap().knowledge;
            for via in knowledge.activated_refobs() {
                send_pairs.push(*via);
                if self.policy.batch_release {
                    let pair = (*name, via.target);
                    if !batch_candidates.contains(&pair) {
                        batch_candidates.push(pair);
                    }
                } else if !knowledge.has_created_using_source(via.token) {
                    release_candidates.push(*via);
                }
            }
        }
        let compactions = self.cfg.compaction_events();
        let receptionists: Vec<ActorName> = self.cfg.receptionists().iter().copied().collect();

        let w = &self.policy.weights;
        let mut cats: Vec<(Cat, u32)> = Vec::new();
        if !deliveries.is_empty() && w.deliver > 0 {
            cats.push((Cat::Deliver, w.deliver));
        }
        if !budget_ok.is_empty() && w.spawn > 0 {
            cats.push((Cat::Spawn, w.spawn));
        }
        if !send_pairs.is_empty() && w.send > 0 {
            cats.push((Cat::Send, w.send));
        }
        if !busy.is_empty() && w.idle > 0 {
            cats.push((Cat::Idle, w.idle));
        }
        if (!release_candidates.is_empty() || !batch_candidates.is_empty()) && w.deactivate > 0 {
            cats.push((Cat::Deactivate, w.deactivate));
        }
        if !idle.is_empty() && w.snapshot > 0 {
            cats.push((Cat::Snapshot, w.snapshot));
        }
        if !compactions.is_empty() && w.compaction > 0 {
            cats.push((Cat::Compaction, w.compaction));
        }
        if !receptionists.is_empty() && w.external_in > 0 {
            cats.push((Cat::ExternalIn, w.external_in));
        }
        if !ext_deliveries.is_empty() && w.external_out > 0 {
            cats.push((Cat::ExternalOut, w.external_out));
        }

        if cats.is_empty() {
            // Idle/Snapshot are always available to some actor while any
            // internal actor exists, so this is a configuration bug.
            return Err(EngineError::Internal(
                "no event category available; check the policy weights".into(),
            ));
        }

        let total: u64 = cats.iter().map(|(_, w)| *w as u64).sum();
        let mut pick = self.rng.gen_range(0..total);
        let mut chosen = cats[0].0;
        for (cat, weight) in &cats {
            if pick < *weight as u64 {
                chosen = *cat;
                break;
            }
            pick -= *weight as u64;
        }

        let event = match chosen {
            Cat::Deliver => self.choose(&deliveries).clone(),
            Cat::ExternalOut => self.choose(&ext_deliveries).clone(),
            Cat::Idle => Event::Idle { actor: *self.choose(&busy) },
            Cat::Snapshot => Event::Snapshot { actor: *self.choose(&idle) },
            Cat::Compaction => self.choose(&compactions).clone(),
            Cat::Spawn => {
                let parent = *self.choose(&budget_ok);
                self.cfg.build_spawn(parent)
            }
            Cat::Send => {
                let via = *self.choose(&send_pairs);
                let activated: Vec<Refob> = self
                    .cfg
                    .actor(via.owner)
                    .unwrap()
                    .knowledge
                    .activated_refobs()
                    .copied()
                    .collect();
                let k = self.rng.gen_range(0..=self.policy.max_refobs_per_message);
                let using: Vec<Refob> =
                    (0..k).map(|_| *self.choose(&activated)).collect();
                self.cfg.build_send(via, &using)
            }
            Cat::Deactivate => {
                if self.policy.batch_release {
                    let (owner, target) = *self.choose(&batch_candidates);
                    self.batch_deactivate(owner, target)
                } else {
                    Event::SendRelease { refob: *self.choose(&release_candidates) }
                }
            }
            Cat::ExternalIn => {
                let to = *self.choose(&receptionists);
                let mut pool: Vec<ActorName> = receptionists.clone();
                pool.extend(self.cfg.externals().iter().copied());
                let k = self.rng.gen_range(0..=2usize);
                let mut targets: Vec<ActorName> = (0..k).map(|_| *self.choose(&pool)).collect();
                if self.rng.gen::<f64>() < 0.15 {
                    targets.push(ActorName::external(self.cfg.peek_next_actor_id()));
                }
                self.cfg.build_in(to, &targets)
            }
        };
        Ok(event)
    }

    /// Queue the whole info-then-release burst for (owner, target) and return
    /// its first event.
    fn batch_deactivate(&mut self, owner: ActorName, target: ActorName) -> Event {
        let knowledge = &self.cfg.actor(owner).unwrap().knowledge;
        let mut burst: Vec<Event> = Vec::new();
        for (y, z) in knowledge.created_using_pairs() {
            if y.target == target {
                burst.push(Event::SendInfo { created_using: *y, created: *z });
            }
        }
        for x in knowledge.activated_refobs() {
            if x.target == target {
                burst.push(Event::SendRelease { refob: *x });
            }
        }
        debug_assert!(!burst.is_empty());
        let first = burst.remove(0);
        for e in burst.into_iter().rev() {
            self.forced.push_front(e);
        }
        first
    }

    fn choose<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        &items[self.rng.gen_range(0..items.len())]
    }

    // --- quiescing wind-down ---

    /// Drive the configuration to a quiescent state: no new environment
    /// events, all deliverable internal messages delivered, busy actors
    /// idled without further sends, and a snapshot after every Idle, Info,
    /// or Release event plus a final snapshot sweep over all actors.
    ///
    /// Messages queued at external actors are left in place.
    pub fn quiesce(&mut self) -> Result<(), EngineError> {
        let bound = DEFAULT_QUIESCE_FACTOR * self.cfg.actors().len() as u64
            + 4 * self.cfg.mailboxes().map(|(_, m)| m.len() as u64).sum::<u64>()
            + 16;
        self.forced.clear();
        let mut taken = 0u64;
        let budget = |taken: &mut u64| -> Result<(), EngineError> {
            *taken += 1;
            if *taken > bound {
                Err(EngineError::NonQuiescent { bound })
            } else {
                Ok(())
            }
        };
        loop {
            let deliveries = self.internal_deliveries();
            if let Some(event) = deliveries.first() {
                let event = event.clone();
                budget(&mut taken)?;
                self.apply_recorded(event.clone())?;
                let snap = match &event {
                    Event::Info { created, .. } => Some(created.target),
                    Event::Release { refob, .. } => Some(refob.target),
                    _ => None,
                };
                if let Some(actor) = snap {
                    budget(&mut taken)?;
                    self.apply_recorded(Event::Snapshot { actor })?;
                }
                continue;
            }
            let busy = self
                .cfg
                .actors()
                .iter()
                .find(|(_, a)| a.is_busy())
                .map(|(n, _)| *n);
            if let Some(actor) = busy {
                budget(&mut taken)?;
                self.apply_recorded(Event::Idle { actor })?;
                budget(&mut taken)?;
                self.apply_recorded(Event::Snapshot { actor })?;
                continue;
            }
            break;
        }
        let actors: Vec<ActorName> = self.cfg.actors().keys().copied().collect();
        for actor in actors {
            budget(&mut taken)?;
            self.apply_recorded(Event::Snapshot { actor })?;
        }
        Ok(())
    }
}

/// Run a fresh seeded execution for `steps` events and package it as a
/// replayable trace. Deterministic in `(seed, steps, policy)`.
pub fn run_execution(
    seed: u64,
    steps: u64,
    policy: &SchedulerPolicy,
) -> Result<super::Trace, EngineError> {
    let mut exec = Execution::new(seed, policy.clone());
    exec.run(steps)?;
    Ok(super::Trace {
        seed,
        policy_hash: policy.hash(),
        meta: vec![("steps".into(), steps.to_string())],
        lines: exec
            .events()
            .iter()
            .map(|(step, event)| super::TraceLine::Event { step: *step, event: event.clone() })
            .collect(),
        terminal_hash: super::trace::config_hash(&exec.config().render()),
    })
}
