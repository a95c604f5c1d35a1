//! The global transition system.
//!
//! A [`Configuration`] is the quadruple of actor map, undelivered-message
//! map, receptionists and externals, plus a step clock and bookkeeping for
//! fresh names/tokens. [`Event`]s are the labels of the fourteen transition
//! rules; [`Configuration::apply_event`] rewrites a configuration atomically
//! according to the rule, after validating the rule's side conditions.
//!
//! The engine also keeps a registry of every refob ever created, with its
//! released flag. The registry is observation-only instrumentation (the
//! ground-truth oracle and the runtime invariant checks read it); protocol
//! behavior never depends on it.

mod scheduler;
mod trace;

pub use scheduler::{fnv64, run_execution, Execution, Mode, SchedulerPolicy, Weights, DEFAULT_QUIESCE_FACTOR};
pub use trace::{config_hash, parse_trace, CheckpointLine, Trace, TraceError, TraceLine};

use crate::detection::Snapshot;
use crate::facts::{ActorName, Fact, KnowledgeSet, Refob, Token};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// An undelivered message. Application messages carry the refob they were
/// sent along (`None` when an external actor used the null token) and the
/// set of refobs created for the destination.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub enum Message {
    App { via: Option<Refob>, contents: Vec<Refob> },
    Info { created_using: Refob, created: Refob },
    Release { refob: Refob, count: u64 },
}

impl Message {
    /// The token the message was sent along, if any.
    pub fn along(&self) -> Option<Token> {
        match self {
            Message::App { via, .. } => via.map(|r| r.token),
            Message::Info { created_using, .. } => Some(created_using.token),
            Message::Release { refob, .. } => Some(refob.token),
        }
    }

    /// The sending actor, recoverable from the refob the message was sent
    /// along. In-messages from the environment have no sender.
    pub fn sender(&self) -> Option<ActorName> {
        match self {
            Message::App { via, .. } => via.map(|r| r.owner),
            Message::Info { created_using, .. } => Some(created_using.owner),
            Message::Release { refob, .. } => Some(refob.owner),
        }
    }

    /// Refobs carried inside the message (pending until delivered).
    pub fn carried_refobs(&self) -> &[Refob] {
        match self {
            Message::App { contents, .. } => contents,
            Message::Info { created, .. } => std::slice::from_ref(created),
            Message::Release { .. } => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Busy,
    Idle,
}

/// One internal actor: its busy/idle status and knowledge set, plus a count
/// of actions taken since it last became busy (used only by the scheduler's
/// fairness budget, never by rule side conditions).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActorState {
    pub status: Status,
    pub knowledge: KnowledgeSet,
    pub actions_this_activation: u32,
}

impl ActorState {
    fn busy(knowledge: KnowledgeSet) -> Self {
        ActorState { status: Status::Busy, knowledge, actions_this_activation: 0 }
    }

    pub fn is_busy(&self) -> bool {
        self.status == Status::Busy
    }

    pub fn is_idle(&self) -> bool {
        self.status == Status::Idle
    }
}

/// Registry entry for a refob: the triple itself and whether its target has
/// processed the release message for it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RefobRecord {
    pub refob: Refob,
    pub released: bool,
}

/// A transition-rule label with its arguments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    /// A busy parent spawns a child; `refob` is the parent's refob to the
    /// child. The child also receives a self-refob (the child's token 0).
    Spawn { refob: Refob },
    /// A busy actor sends an application message along `via`, containing
    /// refobs `sent[i]` created using `using[i]`.
    Send { via: Refob, using: Vec<Refob>, sent: Vec<Refob> },
    /// An idle actor consumes an application message and becomes busy.
    Receive { at: ActorName, via: Option<Refob>, contents: Vec<Refob> },
    Idle { actor: ActorName },
    /// A busy actor flushes one created-using fact into an info message.
    SendInfo { created_using: Refob, created: Refob },
    /// Delivery of an info message; the receiver stays idle.
    Info { created_using: Refob, created: Refob },
    /// A busy owner deactivates a refob it owns.
    SendRelease { refob: Refob },
    /// Delivery of a release message; enabled only once the receive count
    /// matches the count carried by the message.
    Release { refob: Refob, count: u64 },
    /// Remove the created/released/receive-count triple for a refob.
    Compaction { refob: Refob },
    /// An idle actor records its knowledge set; no state change.
    Snapshot { actor: ActorName },
    /// The environment sends an application message to a receptionist,
    /// containing fresh refobs owned by the receptionist.
    In { to: ActorName, contents: Vec<Refob> },
    /// Delivery of an application message to an external actor; internal
    /// targets of carried refobs become receptionists.
    Out { via: Refob, contents: Vec<Refob> },
    /// A release message addressed to an external actor is dropped.
    ReleaseOut { refob: Refob },
    /// An info message addressed to an external actor is dropped.
    InfoOut { created_using: Refob, created: Refob },
}

impl Event {
    pub fn rule_name(&self) -> &'static str {
        match self {
            Event::Spawn { .. } => "Spawn",
            Event::Send { .. } => "Send",
            Event::Receive { .. } => "Receive",
            Event::Idle { .. } => "Idle",
            Event::SendInfo { .. } => "SendInfo",
            Event::Info { .. } => "Info",
            Event::SendRelease { .. } => "SendRelease",
            Event::Release { .. } => "Release",
            Event::Compaction { .. } => "Compaction",
            Event::Snapshot { .. } => "Snapshot",
            Event::In { .. } => "In",
            Event::Out { .. } => "Out",
            Event::ReleaseOut { .. } => "ReleaseOut",
            Event::InfoOut { .. } => "InfoOut",
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("illegal event {event}: {reason}")]
    IllegalEvent { event: String, reason: String },
    #[error("internal error: {0}")]
    Internal(String),
    #[error("configuration did not quiesce within {bound} steps")]
    NonQuiescent { bound: u64 },
}

fn illegal(event: &Event, reason: impl Into<String>) -> EngineError {
    EngineError::IllegalEvent { event: event.to_string(), reason: reason.into() }
}

/// The global state `<actors | mailboxes | receptionists | externals>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    actors: BTreeMap<ActorName, ActorState>,
    mailboxes: BTreeMap<ActorName, Vec<Message>>,
    receptionists: BTreeSet<ActorName>,
    externals: BTreeSet<ActorName>,
    clock: u64,
    next_actor_id: u32,
    token_seqs: BTreeMap<ActorName, u32>,
    refobs: BTreeMap<Token, RefobRecord>,
}

/// The initial configuration: one busy actor holding a refob to itself and a
/// refob to a single external actor.
pub fn initial_configuration() -> Configuration {
    let mut cfg = Configuration {
        actors: BTreeMap::new(),
        mailboxes: BTreeMap::new(),
        receptionists: BTreeSet::new(),
        externals: BTreeSet::new(),
        clock: 0,
        next_actor_id: 0,
        token_seqs: BTreeMap::new(),
        refobs: BTreeMap::new(),
    };
    let root = ActorName::internal(cfg.alloc_actor_id());
    let env = ActorName::external(cfg.alloc_actor_id());
    let to_env = Refob::new(cfg.alloc_token(root), root, env);
    let self_ref = Refob::new(cfg.alloc_token(root), root, root);
    cfg.register_refob(to_env);
    cfg.register_refob(self_ref);
    let knowledge = KnowledgeSet::from_facts([
        Fact::Activated(to_env),
        Fact::Created(self_ref),
        Fact::Activated(self_ref),
    ]);
    cfg.actors.insert(root, ActorState::busy(knowledge));
    cfg.externals.insert(env);
    cfg
}

impl Configuration {
    // --- accessors ---

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn actors(&self) -> &BTreeMap<ActorName, ActorState> {
        &self.actors
    }

    pub fn actor(&self, name: ActorName) -> Option<&ActorState> {
        self.actors.get(&name)
    }

    pub fn knowledge_of(&self, name: ActorName) -> Option<&KnowledgeSet> {
        self.actors.get(&name).map(|a| &a.knowledge)
    }

    pub fn mailbox(&self, name: ActorName) -> &[Message] {
        self.mailboxes.get(&name).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn mailboxes(&self) -> impl Iterator<Item = (ActorName, &[Message])> {
        self.mailboxes.iter().map(|(n, m)| (*n, m.as_slice()))
    }

    pub fn receptionists(&self) -> &BTreeSet<ActorName> {
        &self.receptionists
    }

    pub fn externals(&self) -> &BTreeSet<ActorName> {
        &self.externals
    }

    /// Every refob ever created, with its released flag.
    pub fn refob_records(&self) -> impl Iterator<Item = &RefobRecord> {
        self.refobs.values()
    }

    pub fn refob_record(&self, token: Token) -> Option<&RefobRecord> {
        self.refobs.get(&token)
    }

    pub fn is_released(&self, token: Token) -> bool {
        self.refobs.get(&token).map(|r| r.released).unwrap_or(false)
    }

    /// An immutable copy of an actor's knowledge set, stamped with the clock.
    pub fn snapshot_of(&self, actor: ActorName) -> Option<Snapshot> {
        self.actors.get(&actor).map(|a| Snapshot {
            actor,
            knowledge: a.knowledge.clone(),
            taken_at: self.clock,
        })
    }

    // --- freshness ---

    fn alloc_actor_id(&mut self) -> u32 {
        let id = self.next_actor_id;
        self.next_actor_id += 1;
        id
    }

    pub fn peek_next_actor_id(&self) -> u32 {
        self.next_actor_id
    }

    /// The next token this actor would generate.
    pub fn peek_token(&self, actor: ActorName, offset: u32) -> Token {
        let seq = self.token_seqs.get(&actor).copied().unwrap_or(0);
        Token::seq(actor, seq + offset)
    }

    fn alloc_token(&mut self, actor: ActorName) -> Token {
        let seq = self.token_seqs.entry(actor).or_insert(0);
        let token = Token::seq(actor, *seq);
        *seq += 1;
        token
    }

    fn register_refob(&mut self, refob: Refob) {
        let prev = self.refobs.insert(refob.token, RefobRecord { refob, released: false });
        assert!(prev.is_none(), "token reused: {}", refob.token);
    }

    // --- event builders (fill in fresh names/tokens deterministically) ---

    pub fn build_spawn(&self, parent: ActorName) -> Event {
        let child = ActorName::internal(self.peek_next_actor_id());
        Event::Spawn { refob: Refob::new(self.peek_token(parent, 0), parent, child) }
    }

    /// Build a send along `via` carrying one fresh refob per entry of
    /// `using`; `using[i]` names the target of the i-th created refob.
    pub fn build_send(&self, via: Refob, using: &[Refob]) -> Event {
        let sender = via.owner;
        let sent = using
            .iter()
            .enumerate()
            .map(|(i, y)| Refob::new(self.peek_token(sender, i as u32), via.target, y.target))
            .collect();
        Event::Send { via, using: using.to_vec(), sent }
    }

    /// Build an environment message to receptionist `to` carrying fresh
    /// refobs to `targets`. Targets not present in the configuration must be
    /// external names with consecutive fresh ids (use
    /// [`Configuration::peek_next_actor_id`]).
    pub fn build_in(&self, to: ActorName, targets: &[ActorName]) -> Event {
        let contents = targets
            .iter()
            .enumerate()
            .map(|(i, t)| Refob::new(self.peek_token(to, i as u32), to, *t))
            .collect();
        Event::In { to, contents }
    }

    // --- enabledness ---

    fn queued(&self, at: ActorName, msg: &Message) -> bool {
        self.mailbox(at).iter().any(|m| m == msg)
    }

    /// Check a rule's pattern and side conditions against this configuration.
    pub fn check_enabled(&self, e: &Event) -> Result<(), EngineError> {
        match e {
            Event::Spawn { refob } => {
                let parent = self.busy_actor(e, refob.owner)?;
                if refob.target != ActorName::internal(self.next_actor_id) {
                    return Err(illegal(e, "child name is not the next fresh name"));
                }
                if refob.token != self.peek_token(refob.owner, 0) {
                    return Err(illegal(e, "token is not the parent's next fresh token"));
                }
                let _ = parent;
                Ok(())
            }
            Event::Send { via, using, sent } => {
                let sender = self.busy_actor(e, via.owner)?;
                self.check_registered(e, via)?;
                if !sender.knowledge.derives(Fact::Activated(*via)) {
                    return Err(illegal(e, "sender has not activated the refob sent along"));
                }
                if using.len() != sent.len() {
                    return Err(illegal(e, "created refobs do not match the refobs used"));
                }
                for (i, (y, z)) in using.iter().zip(sent).enumerate() {
                    self.check_registered(e, y)?;
                    if y.owner != via.owner {
                        return Err(illegal(e, "using refob not owned by the sender"));
                    }
                    if !sender.knowledge.derives(Fact::Activated(*y)) {
                        return Err(illegal(e, "using refob not activated"));
                    }
                    if z.owner != via.target || z.target != y.target {
                        return Err(illegal(e, "created refob endpoints do not match"));
                    }
                    if z.token != self.peek_token(via.owner, i as u32) {
                        return Err(illegal(e, "created token is not the next fresh token"));
                    }
                }
                Ok(())
            }
            Event::Receive { at, via, contents } => {
                self.idle_actor(e, *at)?;
                if let Some(r) = via {
                    if r.target != *at {
                        return Err(illegal(e, "message refob does not target the receiver"));
                    }
                }
                let msg = Message::App { via: *via, contents: contents.clone() };
                if !self.queued(*at, &msg) {
                    return Err(illegal(e, "no such undelivered application message"));
                }
                Ok(())
            }
            Event::Idle { actor } => {
                self.busy_actor(e, *actor)?;
                Ok(())
            }
            Event::SendInfo { created_using, created } => {
                let owner = self.busy_actor(e, created_using.owner)?;
                if !owner.knowledge.contains(&Fact::CreatedUsing(*created_using, *created)) {
                    return Err(illegal(e, "no matching created-using fact"));
                }
                Ok(())
            }
            Event::Info { created_using, created } => {
                let at = created.target;
                self.idle_actor(e, at)?;
                let msg = Message::Info { created_using: *created_using, created: *created };
                if !self.queued(at, &msg) {
                    return Err(illegal(e, "no such undelivered info message"));
                }
                Ok(())
            }
            Event::SendRelease { refob } => {
                let owner = self.busy_actor(e, refob.owner)?;
                self.check_registered(e, refob)?;
                if !owner.knowledge.contains(&Fact::Activated(*refob)) {
                    return Err(illegal(e, "refob is not active at its owner"));
                }
                if owner.knowledge.has_created_using_source(refob.token) {
                    return Err(illegal(e, "created-using facts for this refob remain"));
                }
                Ok(())
            }
            Event::Release { refob, count } => {
                let at = refob.target;
                let target = self.idle_actor(e, at)?;
                let msg = Message::Release { refob: *refob, count: *count };
                if !self.queued(at, &msg) {
                    return Err(illegal(e, "no such undelivered release message"));
                }
                if !target.knowledge.derives(Fact::RecvCount(*refob, *count)) {
                    return Err(illegal(e, "receive count does not match the release count"));
                }
                Ok(())
            }
            Event::Compaction { refob } => {
                let at = self.idle_actor(e, refob.target)?;
                if !at.knowledge.contains(&Fact::Created(*refob)) {
                    return Err(illegal(e, "created fact not present"));
                }
                if !at.knowledge.contains(&Fact::Released(*refob)) {
                    return Err(illegal(e, "released fact not present"));
                }
                Ok(())
            }
            Event::Snapshot { actor } => {
                self.idle_actor(e, *actor)?;
                Ok(())
            }
            Event::In { to, contents } => {
                if !self.receptionists.contains(to) {
                    return Err(illegal(e, "destination is not a receptionist"));
                }
                let mut fresh = 0u32;
                for (i, r) in contents.iter().enumerate() {
                    if r.owner != *to {
                        return Err(illegal(e, "carried refob not owned by the receptionist"));
                    }
                    if r.token != self.peek_token(*to, i as u32) {
                        return Err(illegal(e, "carried token is not the next fresh token"));
                    }
                    if self.actors.contains_key(&r.target) {
                        if !self.receptionists.contains(&r.target) {
                            return Err(illegal(e, "internal target is not a receptionist"));
                        }
                    } else if !self.externals.contains(&r.target) {
                        if r.target != ActorName::external(self.next_actor_id + fresh) {
                            return Err(illegal(e, "fresh external name out of sequence"));
                        }
                        fresh += 1;
                    }
                }
                Ok(())
            }
            Event::Out { via, contents } => {
                if !self.externals.contains(&via.target) {
                    return Err(illegal(e, "destination is not an external actor"));
                }
                let msg = Message::App { via: Some(*via), contents: contents.clone() };
                if !self.queued(via.target, &msg) {
                    return Err(illegal(e, "no such undelivered application message"));
                }
                Ok(())
            }
            Event::ReleaseOut { refob } => {
                if !self.externals.contains(&refob.target) {
                    return Err(illegal(e, "destination is not an external actor"));
                }
                // The count is recoverable from the unique queued message.
                if self.find_release(*refob).is_none() {
                    return Err(illegal(e, "no such undelivered release message"));
                }
                Ok(())
            }
            Event::InfoOut { created_using, created } => {
                if !self.externals.contains(&created.target) {
                    return Err(illegal(e, "destination is not an external actor"));
                }
                let msg = Message::Info { created_using: *created_using, created: *created };
                if !self.queued(created.target, &msg) {
                    return Err(illegal(e, "no such undelivered info message"));
                }
                Ok(())
            }
        }
    }

    pub fn is_enabled(&self, e: &Event) -> bool {
        self.check_enabled(e).is_ok()
    }

    fn busy_actor(&self, e: &Event, name: ActorName) -> Result<&ActorState, EngineError> {
        match self.actors.get(&name) {
            Some(a) if a.is_busy() => Ok(a),
            Some(_) => Err(illegal(e, format!("{name} is not busy"))),
            None => Err(illegal(e, format!("{name} is not an internal actor"))),
        }
    }

    fn idle_actor(&self, e: &Event, name: ActorName) -> Result<&ActorState, EngineError> {
        match self.actors.get(&name) {
            Some(a) if a.is_idle() => Ok(a),
            Some(_) => Err(illegal(e, format!("{name} is not idle"))),
            None => Err(illegal(e, format!("{name} is not an internal actor"))),
        }
    }

    fn check_registered(&self, e: &Event, refob: &Refob) -> Result<(), EngineError> {
        match self.refobs.get(&refob.token) {
            Some(rec) if rec.refob == *refob => Ok(()),
            Some(_) => Err(illegal(e, format!("token {} bound to a different refob", refob.token))),
            None => Err(illegal(e, format!("unknown token {}", refob.token))),
        }
    }

    fn find_release(&self, refob: Refob) -> Option<u64> {
        self.mailbox(refob.target).iter().find_map(|m| match m {
            Message::Release { refob: r, count } if *r == refob => Some(*count),
            _ => None,
        })
    }

    // --- transition ---

    fn push_msg(&mut self, to: ActorName, msg: Message) {
        self.mailboxes.entry(to).or_default().push(msg);
    }

    fn take_msg(&mut self, at: ActorName, msg: &Message) {
        let Some(mbox) = self.mailboxes.get_mut(&at) else {
            panic!("message vanished from mailbox of {at}");
        };
        let idx = mbox.iter().position(|m| m == msg).expect("message vanished");
        mbox.remove(idx);
        if mbox.is_empty() {
            self.mailboxes.remove(&at);
        }
    }

    fn bump_action(&mut self, actor: ActorName) {
        let a = self.actors.get_mut(&actor).expect("busy actor exists");
        a.actions_this_activation += 1;
    }

    /// Apply an enabled event in place. Fails with `IllegalEvent` (leaving
    /// the configuration untouched) when the event is not enabled.
    pub fn apply_event(&mut self, e: &Event) -> Result<(), EngineError> {
        self.check_enabled(e)?;
        match e {
            Event::Spawn { refob } => {
                let parent = refob.owner;
                let child = refob.target;
                let id = self.alloc_actor_id();
                debug_assert_eq!(child, ActorName::internal(id));
                let token = self.alloc_token(parent);
                debug_assert_eq!(token, refob.token);
                let self_ref = Refob::new(self.alloc_token(child), child, child);
                self.register_refob(*refob);
                self.register_refob(self_ref);
                self.actors
                    .get_mut(&parent)
                    .unwrap()
                    .knowledge
                    .insert(Fact::Activated(*refob));
                self.actors.insert(
                    child,
                    ActorState::busy(KnowledgeSet::from_facts([
                        Fact::Created(*refob),
                        Fact::Created(self_ref),
                        Fact::Activated(self_ref),
                    ])),
                );
                self.bump_action(parent);
            }
            Event::Send { via, using, sent } => {
                let sender = via.owner;
                for z in sent {
                    let token = self.alloc_token(sender);
                    debug_assert_eq!(token, z.token);
                    self.register_refob(*z);
                }
                let knowledge = &mut self.actors.get_mut(&sender).unwrap().knowledge;
                knowledge.inc_sent_mut(*via);
                for (y, z) in using.iter().zip(sent) {
                    knowledge.insert(Fact::CreatedUsing(*y, *z));
                }
                let mut contents = sent.clone();
                contents.sort();
                self.push_msg(via.target, Message::App { via: Some(*via), contents });
                self.bump_action(sender);
            }
            Event::Receive { at, via, contents } => {
                let msg = Message::App { via: *via, contents: contents.clone() };
                self.take_msg(*at, &msg);
                let actor = self.actors.get_mut(at).unwrap();
                actor.status = Status::Busy;
                actor.actions_this_activation = 0;
                if let Some(r) = via {
                    // Null-token messages from the environment track no counts.
                    actor.knowledge.inc_recv_mut(*r);
                }
                for z in contents {
                    actor.knowledge.insert(Fact::Activated(*z));
                }
            }
            Event::Idle { actor } => {
                self.actors.get_mut(actor).unwrap().status = Status::Idle;
            }
            Event::SendInfo { created_using, created } => {
                let owner = created_using.owner;
                let knowledge = &mut self.actors.get_mut(&owner).unwrap().knowledge;
                knowledge.remove(&Fact::CreatedUsing(*created_using, *created));
                knowledge.inc_sent_mut(*created_using);
                self.push_msg(
                    created_using.target,
                    Message::Info { created_using: *created_using, created: *created },
                );
                self.bump_action(owner);
            }
            Event::Info { created_using, created } => {
                let at = created.target;
                let msg = Message::Info { created_using: *created_using, created: *created };
                self.take_msg(at, &msg);
                let knowledge = &mut self.actors.get_mut(&at).unwrap().knowledge;
                knowledge.inc_recv_mut(*created_using);
                knowledge.insert(Fact::Created(*created));
            }
            Event::SendRelease { refob } => {
                let owner = refob.owner;
                let knowledge = &mut self.actors.get_mut(&owner).unwrap().knowledge;
                let count = knowledge.sent_count(refob.token);
                knowledge.remove(&Fact::Activated(*refob));
                if let Some(n) = knowledge.stored_sent_count(refob.token) {
                    knowledge.remove(&Fact::SentCount(*refob, n));
                }
                self.push_msg(refob.target, Message::Release { refob: *refob, count });
                self.bump_action(owner);
            }
            Event::Release { refob, count } => {
                let at = refob.target;
                let msg = Message::Release { refob: *refob, count: *count };
                self.take_msg(at, &msg);
                self.actors
                    .get_mut(&at)
                    .unwrap()
                    .knowledge
                    .insert(Fact::Released(*refob));
                self.refobs.get_mut(&refob.token).expect("registered refob").released = true;
            }
            Event::Compaction { refob } => {
                let knowledge = &mut self.actors.get_mut(&refob.target).unwrap().knowledge;
                knowledge.remove(&Fact::Created(*refob));
                knowledge.remove(&Fact::Released(*refob));
                if let Some(n) = knowledge.stored_recv_count(refob.token) {
                    knowledge.remove(&Fact::RecvCount(*refob, n));
                }
            }
            Event::Snapshot { .. } => {}
            Event::In { to, contents } => {
                for r in contents {
                    let token = self.alloc_token(*to);
                    debug_assert_eq!(token, r.token);
                    self.register_refob(*r);
                    if !self.actors.contains_key(&r.target) && !self.externals.contains(&r.target)
                    {
                        let id = self.alloc_actor_id();
                        debug_assert_eq!(r.target, ActorName::external(id));
                        self.externals.insert(r.target);
                    }
                }
                let mut sorted = contents.clone();
                sorted.sort();
                self.push_msg(*to, Message::App { via: None, contents: sorted });
            }
            Event::Out { via, contents } => {
                let msg = Message::App { via: Some(*via), contents: contents.clone() };
                self.take_msg(via.target, &msg);
                for r in contents {
                    if self.actors.contains_key(&r.target) {
                        self.receptionists.insert(r.target);
                    }
                }
            }
            Event::ReleaseOut { refob } => {
                let count = self.find_release(*refob).expect("checked above");
                let msg = Message::Release { refob: *refob, count };
                self.take_msg(refob.target, &msg);
            }
            Event::InfoOut { created_using, created } => {
                let msg = Message::Info { created_using: *created_using, created: *created };
                self.take_msg(created.target, &msg);
            }
        }
        self.clock += 1;
        Ok(())
    }

    /// Pure form of [`Configuration::apply_event`].
    pub fn apply(&self, e: &Event) -> Result<Configuration, EngineError> {
        let mut next = self.clone();
        next.apply_event(e)?;
        Ok(next)
    }

    /// All currently enabled delivery events (internal and external), fully
    /// determined by the configuration.
    pub fn delivery_events(&self) -> Vec<Event> {
        let mut out = Vec::new();
        for (at, mbox) in &self.mailboxes {
            let internal = self.actors.contains_key(at);
            let idle = self.actors.get(at).map(|a| a.is_idle()).unwrap_or(false);
            let mut seen: BTreeSet<&Message> = BTreeSet::new();
            for msg in mbox {
                if !seen.insert(msg) {
                    continue; // duplicate multiset entries yield one event
                }
                let event = match msg {
                    Message::App { via, contents } => {
                        if internal {
                            Event::Receive { at: *at, via: *via, contents: contents.clone() }
                        } else {
                            Event::Out { via: via.expect("external app msg has a refob"), contents: contents.clone() }
                        }
                    }
                    Message::Info { created_using, created } => {
                        if internal {
                            Event::Info { created_using: *created_using, created: *created }
                        } else {
                            Event::InfoOut { created_using: *created_using, created: *created }
                        }
                    }
                    Message::Release { refob, count } => {
                        if internal {
                            Event::Release { refob: *refob, count: *count }
                        } else {
                            Event::ReleaseOut { refob: *refob }
                        }
                    }
                };
                let deliverable = match &event {
                    Event::Receive { .. } | Event::Info { .. } => idle,
                    Event::Release { .. } => idle && self.is_enabled(&event),
                    _ => true, // external deliveries have no side conditions
                };
                if deliverable {
                    out.push(event);
                }
            }
        }
        out
    }

    /// Every event enabled in this configuration, with the unbounded rule
    /// families cut down to policy-bounded representatives: spawns and
    /// environment messages appear once per eligible actor, sends appear
    /// once per activated refob with an empty payload (the scheduler samples
    /// payloads separately), and a busy actor past its action budget offers
    /// only Idle.
    pub fn enabled_events(&self, policy: &SchedulerPolicy) -> Vec<Event> {
        let mut out = self.delivery_events();
        out.extend(self.compaction_events());
        for (name, state) in &self.actors {
            if state.is_idle() {
                out.push(Event::Snapshot { actor: *name });
                continue;
            }
            out.push(Event::Idle { actor: *name });
            if state.actions_this_activation >= policy.busy_budget {
                continue;
            }
            out.push(self.build_spawn(*name));
            for via in state.knowledge.activated_refobs() {
                out.push(self.build_send(*via, &[]));
                if !state.knowledge.has_created_using_source(via.token) {
                    out.push(Event::SendRelease { refob: *via });
                }
            }
            for (y, z) in state.knowledge.created_using_pairs() {
                out.push(Event::SendInfo { created_using: *y, created: *z });
            }
        }
        for r in &self.receptionists {
            out.push(self.build_in(*r, &[]));
        }
        out
    }

    /// All enabled compaction events.
    pub fn compaction_events(&self) -> Vec<Event> {
        let mut out = Vec::new();
        for (_, state) in self.actors.iter().filter(|(_, a)| a.is_idle()) {
            for x in state.knowledge.created_refobs() {
                if state.knowledge.contains(&Fact::Released(*x)) {
                    out.push(Event::Compaction { refob: *x });
                }
            }
        }
        out
    }

    /// Canonical multi-line rendering of the whole configuration. Two
    /// configurations are equal iff their renderings are equal; the replay
    /// determinism checks hash this text.
    pub fn render(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        writeln!(out, "clock={}", self.clock).unwrap();
        for (name, state) in &self.actors {
            let status = if state.is_busy() { "busy" } else { "idle" };
            writeln!(out, "actor {name} {status}").unwrap();
            for fact in state.knowledge.facts() {
                writeln!(out, "  {fact}").unwrap();
            }
        }
        for (name, mbox) in &self.mailboxes {
            writeln!(out, "mailbox {name}").unwrap();
            for msg in mbox {
                writeln!(out, "  {}", trace::render_message(msg)).unwrap();
            }
        }
        let recs: Vec<String> = self.receptionists.iter().map(|n| n.to_string()).collect();
        writeln!(out, "receptionists=[{}]", recs.join(", ")).unwrap();
        let exts: Vec<String> = self.externals.iter().map(|n| n.to_string()).collect();
        writeln!(out, "externals=[{}]", exts.join(", ")).unwrap();
        for rec in self.refobs.values() {
            writeln!(out, "refob {} released={}", rec.refob, rec.released).unwrap();
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::facts::{ActorKind, Goal};

    #[test]
    fn initial_configuration_matches_contract() {
        let cfg = initial_configuration();
        assert_eq!(cfg.actors().len(), 1);
        assert_eq!(cfg.externals().len(), 1);
        assert_eq!(cfg.receptionists().len(), 0);
        assert_eq!(cfg.mailboxes().count(), 0);

        let (root, state) = cfg.actors().iter().next().unwrap();
        assert!(state.is_busy());
        assert_eq!(state.knowledge.len(), 3);

        // The self-refob is created and unreleased from the start.
        let self_ref = state
            .knowledge
            .created_refobs()
            .find(|r| r.target == *root)
            .copied()
            .unwrap();
        assert!(state.knowledge.derives(Goal::Unreleased(self_ref)));

        // The refob to the environment is activated but not created here.
        let to_env = state
            .knowledge
            .activated_refobs()
            .find(|r| r.target.kind == ActorKind::External)
            .copied()
            .unwrap();
        assert!(!state.knowledge.derives(Fact::Created(to_env)));
    }

    #[test]
    fn idle_then_snapshot_is_legal_from_initial() {
        let mut cfg = initial_configuration();
        let root = *cfg.actors().keys().next().unwrap();
        cfg.apply_event(&Event::Idle { actor: root }).unwrap();
        cfg.apply_event(&Event::Snapshot { actor: root }).unwrap();
        assert_eq!(cfg.clock(), 2);
    }

    #[test]
    fn snapshot_requires_idle() {
        let mut cfg = initial_configuration();
        let root = *cfg.actors().keys().next().unwrap();
        let err = cfg.apply_event(&Event::Snapshot { actor: root }).unwrap_err();
        assert!(matches!(err, EngineError::IllegalEvent { .. }));
    }

    #[test]
    fn spawn_initializes_child_knowledge() {
        let mut cfg = initial_configuration();
        let root = *cfg.actors().keys().next().unwrap();
        let spawn = cfg.build_spawn(root);
        let Event::Spawn { refob } = spawn.clone() else { unreachable!() };
        cfg.apply_event(&spawn).unwrap();

        let child = cfg.actor(refob.target).unwrap();
        assert!(child.is_busy());
        assert!(child.knowledge.contains(&Fact::Created(refob)));
        let self_ref = Refob::new(Token::seq(refob.target, 0), refob.target, refob.target);
        assert!(child.knowledge.contains(&Fact::Created(self_ref)));
        assert!(child.knowledge.contains(&Fact::Activated(self_ref)));
        assert_eq!(child.knowledge.len(), 3);

        let parent = cfg.actor(root).unwrap();
        assert!(parent.knowledge.contains(&Fact::Activated(refob)));
    }

    #[test]
    fn release_defers_until_counts_match() {
        // A spawns B, sends one message along x, then deactivates x. The
        // release is undeliverable until the application message arrives.
        let mut cfg = initial_configuration();
        let root = *cfg.actors().keys().next().unwrap();
        let spawn = cfg.build_spawn(root);
        let Event::Spawn { refob: x } = spawn.clone() else { unreachable!() };
        cfg.apply_event(&spawn).unwrap();
        cfg.apply_event(&Event::Idle { actor: x.target }).unwrap();

        cfg.apply_event(&cfg.build_send(x, &[])).unwrap();
        cfg.apply_event(&Event::SendRelease { refob: x }).unwrap();

        let release = Event::Release { refob: x, count: 1 };
        assert!(!cfg.is_enabled(&release), "release must wait for the app message");
        assert!(!cfg.delivery_events().contains(&release));

        cfg.apply_event(&Event::Receive { at: x.target, via: Some(x), contents: vec![] })
            .unwrap();
        cfg.apply_event(&Event::Idle { actor: x.target }).unwrap();
        assert!(cfg.is_enabled(&release));
        cfg.apply_event(&release).unwrap();
        assert!(cfg.is_released(x.token));
    }

    #[test]
    fn enabled_events_on_the_initial_configuration() {
        let cfg = initial_configuration();
        let root = *cfg.actors().keys().next().unwrap();
        let policy = SchedulerPolicy::default();
        let events = cfg.enabled_events(&policy);
        assert!(events.iter().any(|e| matches!(e, Event::Spawn { .. })));
        assert!(events.contains(&Event::Idle { actor: root }));
        assert!(events.iter().any(|e| matches!(e, Event::Send { .. })));
        assert!(!events.iter().any(|e| matches!(e, Event::Receive { .. })), "no messages yet");
        assert!(!events.iter().any(|e| matches!(e, Event::In { .. })), "no receptionists yet");
        for e in &events {
            assert!(cfg.is_enabled(e), "listed event not enabled: {e}");
        }
    }

    #[test]
    fn enabled_events_lists_pending_deliveries() {
        let mut cfg = initial_configuration();
        let root = *cfg.actors().keys().next().unwrap();
        let spawn = cfg.build_spawn(root);
        let Event::Spawn { refob } = spawn.clone() else { unreachable!() };
        cfg.apply_event(&spawn).unwrap();
        cfg.apply_event(&cfg.build_send(refob, &[])).unwrap();

        let policy = SchedulerPolicy::default();
        let receive = Event::Receive { at: refob.target, via: Some(refob), contents: vec![] };
        assert!(!cfg.enabled_events(&policy).contains(&receive), "receiver still busy");
        cfg.apply_event(&Event::Idle { actor: refob.target }).unwrap();
        assert!(cfg.enabled_events(&policy).contains(&receive));
    }

    #[test]
    fn budget_exhausted_actor_offers_only_idle() {
        let mut cfg = initial_configuration();
        let root = *cfg.actors().keys().next().unwrap();
        let policy = SchedulerPolicy { busy_budget: 1, ..SchedulerPolicy::default() };
        cfg.apply_event(&cfg.build_spawn(root)).unwrap();
        let from_root: Vec<Event> = cfg
            .enabled_events(&policy)
            .into_iter()
            .filter(|e| match e {
                Event::Idle { actor } => *actor == root,
                Event::Spawn { refob } => refob.owner == root,
                Event::Send { via, .. } => via.owner == root,
                Event::SendRelease { refob } => refob.owner == root,
                _ => false,
            })
            .collect();
        assert_eq!(from_root, vec![Event::Idle { actor: root }]);
    }

    #[test]
    fn apply_rejects_disabled_events_without_state_change() {
        let cfg = initial_configuration();
        let root = *cfg.actors().keys().next().unwrap();
        let mut tampered = cfg.clone();
        let bogus = Event::Receive { at: root, via: None, contents: vec![] };
        assert!(tampered.apply_event(&bogus).is_err());
        assert_eq!(tampered, cfg);
    }
}
