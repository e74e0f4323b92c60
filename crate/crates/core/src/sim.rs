// Copyright (c) The bft-kernel Contributors
// SPDX-License-Identifier: Apache-2.0

//! Deterministic discrete-event simulation of peers over a lossy network.
//!
//! One step pops one event from a queue ordered by `(due time, sequence)`. Each
//! send draws a delivery delay from the seeded PRNG; drop and duplication are
//! decided when the delivery is popped. Messages a peer sends to itself are
//! delivered immediately and never dropped. Rounds advance when a peer learns a
//! QC, or when its per-round timer fires. The leader of round `r` is `r mod n`.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::auditor::{audit, AuditReport, AuditVerdict, PreferredRoundFinding, Provenance, RecordPool};
use crate::chains::{InsertError, RecordId, RecordStore};
use crate::quorum::{ConfigError, EpochConfig, HonestyMap};
use crate::types::{validate_qc, Block, HashMode, Member, Qc, Record, Round, Uid, Vote};
use crate::voter::{should_vote, update_safety_state, VoterSafetyState};

pub const PRNG_NAME: &str = "chacha8";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Behavior {
    /// As leader, sends a different block variant to each peer.
    Equivocate,
    /// Votes for every proposal it receives. As leader, also extends the highest QC
    /// off its main branch and sends that fork to odd-numbered peers.
    /// Byzantine peers receive both.
    DoubleVote,
    /// Votes whenever the round is above its last vote, skipping the parent-round check.
    IgnorePreferredRound,
    Silent,
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Behavior::Equivocate => "Equivocate",
            Behavior::DoubleVote => "DoubleVote",
            Behavior::IgnorePreferredRound => "IgnorePreferredRound",
            Behavior::Silent => "Silent",
        })
    }
}

impl FromStr for Behavior {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "Equivocate" => Ok(Behavior::Equivocate),
            "DoubleVote" => Ok(Behavior::DoubleVote),
            "IgnorePreferredRound" => Ok(Behavior::IgnorePreferredRound),
            "Silent" => Ok(Behavior::Silent),
            _ => Err(format!("unknown adversary behavior {s:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub cfg: EpochConfig,
    /// Byzantine members and their behavior; everyone else is honest.
    pub adversaries: BTreeMap<Member, Behavior>,
    pub steps: u64,
    pub drop_prob: f64,
    pub dup_prob: f64,
    pub max_delay: u64,
    pub seed: u64,
    pub hash_mode: HashMode,
    /// Block variants an equivocating leader emits per round; 0 means one per peer.
    pub equivocation_variants: usize,
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("steps must be at least 1")]
    ZeroSteps,
    #[error("{name} = {value} is not a probability")]
    BadProbability { name: &'static str, value: f64 },
    #[error("byzantine member {0} is out of range")]
    MemberOutOfRange(Member),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl Scenario {
    pub fn new(cfg: EpochConfig) -> Scenario {
        Scenario {
            cfg,
            adversaries: BTreeMap::new(),
            steps: 1000,
            drop_prob: 0.0,
            dup_prob: 0.0,
            max_delay: 0,
            seed: 0,
            hash_mode: HashMode::Strong,
            equivocation_variants: 0,
        }
    }

    pub fn honesty(&self) -> HonestyMap {
        let byz: Vec<Member> = self.adversaries.keys().copied().collect();
        HonestyMap::with_byzantine(self.cfg.authors_n(), &byz)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.cfg.validate()?;
        if self.steps == 0 {
            return Err(ScenarioError::ZeroSteps);
        }
        for (name, value) in [("drop_prob", self.drop_prob), ("dup_prob", self.dup_prob)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ScenarioError::BadProbability { name, value });
            }
        }
        if let Some(m) = self.adversaries.keys().find(|m| m.0 >= self.cfg.authors_n()) {
            return Err(ScenarioError::MemberOutOfRange(*m));
        }
        Ok(())
    }

    fn variants(&self) -> usize {
        match self.equivocation_variants {
            0 => self.cfg.authors_n(),
            v => v,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum MessageKind {
    /// A block plus the chain (from genesis, exclusive) of the QC it extends.
    Proposal { block: Block, support: Arc<[Record]> },
    VoteMsg(Vote),
    QcMsg(Qc),
}

impl MessageKind {
    fn label(&self) -> &'static str {
        match self {
            MessageKind::Proposal { .. } => "proposal",
            MessageKind::VoteMsg(_) => "vote",
            MessageKind::QcMsg(_) => "qc",
        }
    }

    fn round(&self) -> Round {
        match self {
            MessageKind::Proposal { block, .. } => block.round,
            MessageKind::VoteMsg(v) => v.round,
            MessageKind::QcMsg(q) => q.round,
        }
    }

    fn id(&self) -> Uid {
        match self {
            MessageKind::Proposal { block, .. } => block.id,
            MessageKind::VoteMsg(v) => v.block_uid,
            MessageKind::QcMsg(q) => q.cert_block_id,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Message {
    pub kind: MessageKind,
    pub sender: Member,
    pub send_step: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Evt {
    Send,
    Deliver,
    Drop,
    Dup,
    Refuse,
    QcForm,
    Commit,
    Violation,
}

impl fmt::Display for Evt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Evt::Send => "SEND",
            Evt::Deliver => "DELIVER",
            Evt::Drop => "DROP",
            Evt::Dup => "DUP",
            Evt::Refuse => "REFUSE",
            Evt::QcForm => "QCFORM",
            Evt::Commit => "COMMIT",
            Evt::Violation => "VIOLATION",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TraceEvent {
    pub step: u64,
    pub evt: Evt,
    pub peer: Member,
    pub kind: &'static str,
    pub round: Round,
    pub id: Option<Uid>,
    pub detail: String,
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let id = self.id.map_or_else(|| "-".to_string(), |u| u.short());
        let detail = if self.detail.is_empty() { "-" } else { &self.detail };
        write!(
            f,
            "step={} evt={} peer={} kind={} round={} id={} detail={}",
            self.step, self.evt, self.peer, self.kind, self.round, id, detail
        )
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum EventKind {
    Deliver { to: Member, msg: Arc<Message>, copy: bool },
    Timeout { peer: Member, round: Round },
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Event {
    due: u64,
    seq: u64,
    kind: EventKind,
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on (due, seq).
        (other.due, other.seq).cmp(&(self.due, self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const ORPHAN_LIMIT: usize = 512;

#[derive(Clone, Debug)]
pub struct Peer {
    pub me: Member,
    pub behavior: Option<Behavior>,
    pub store: RecordStore,
    pub safety: VoterSafetyState,
    pub round: Round,
    /// Blocks committed so far, oldest first.
    pub committed: Vec<Uid>,
    highest_qc: RecordId,
    proposed: Round,
    votes: BTreeMap<(Round, Uid), BTreeMap<Member, Vote>>,
    formed: BTreeSet<(Round, Uid)>,
    orphans: Vec<Record>,
}

/// What a handler wants done: messages to send and trace events to log.
struct Effects {
    sends: Vec<(Vec<Member>, MessageKind)>,
    trace: Vec<(Evt, &'static str, Round, Option<Uid>, String)>,
    entered: Option<Round>,
}

impl Effects {
    fn new() -> Effects {
        Effects { sends: Vec::new(), trace: Vec::new(), entered: None }
    }

    fn log(&mut self, evt: Evt, kind: &'static str, round: Round, id: Option<Uid>, detail: impl Into<String>) {
        self.trace.push((evt, kind, round, id, detail.into()));
    }
}

impl Peer {
    fn new(me: Member, behavior: Option<Behavior>, cfg: &EpochConfig, mode: HashMode) -> Peer {
        Peer {
            me,
            behavior,
            store: RecordStore::new(cfg.clone(), mode),
            safety: VoterSafetyState::default(),
            round: Round(0),
            committed: Vec::new(),
            highest_qc: RecordId::GENESIS,
            proposed: Round(0),
            votes: BTreeMap::new(),
            formed: BTreeSet::new(),
            orphans: Vec::new(),
        }
    }

    pub fn is_honest(&self) -> bool {
        self.behavior.is_none()
    }

    /// Inserts a record, buffering orphans. Returns newly stored QCs (including
    /// buffered ones that became insertable) and whether `r` itself is stored.
    fn absorb(&mut self, r: Record, sent: &HashSet<Vote>, fx: &mut Effects) -> (Vec<RecordId>, bool) {
        let mut new_qcs = Vec::new();
        let stored = match self.store.insert(r.clone(), sent) {
            Ok(id) => {
                if matches!(r, Record::Q(_)) {
                    new_qcs.push(id);
                }
                true
            }
            Err(InsertError::OrphanRecord) => {
                if !self.orphans.contains(&r) {
                    if self.orphans.len() == ORPHAN_LIMIT {
                        self.orphans.remove(0);
                    }
                    self.orphans.push(r);
                }
                return (new_qcs, false);
            }
            Err(e) => {
                fx.log(Evt::Refuse, r.kind(), r.round(), r.as_block().map(|b| b.id), format!("invalid:{e:?}").replace(' ', ""));
                return (new_qcs, false);
            }
        };
        loop {
            let mut progressed = false;
            let mut i = 0;
            while i < self.orphans.len() {
                match self.store.insert(self.orphans[i].clone(), sent) {
                    Ok(id) => {
                        let o = self.orphans.remove(i);
                        if matches!(o, Record::Q(_)) {
                            new_qcs.push(id);
                        }
                        progressed = true;
                    }
                    Err(InsertError::OrphanRecord) => i += 1,
                    Err(_) => {
                        self.orphans.remove(i);
                    }
                }
            }
            if !progressed {
                break;
            }
        }
        (new_qcs, stored)
    }

    fn on_proposal(&mut self, block: &Block, support: &[Record], cfg: &EpochConfig, sent: &HashSet<Vote>, fx: &mut Effects) {
        let mut new_qcs = Vec::new();
        for r in support {
            if !self.store.contains(r) {
                new_qcs.extend(self.absorb(r.clone(), sent, fx).0);
            }
        }
        let (qcs, stored) = self.absorb(Record::B(block.clone()), sent, fx);
        new_qcs.extend(qcs);
        for q in new_qcs {
            self.on_new_qc(q, fx);
        }
        if !stored {
            return;
        }
        let vote = match self.behavior {
            Some(Behavior::Silent) => return,
            Some(Behavior::DoubleVote) => Ok(Vote { round: block.round, member: self.me, block_uid: block.id }),
            Some(Behavior::IgnorePreferredRound) if block.round > self.safety.last_voted_round => {
                self.safety.last_voted_round = block.round;
                Ok(Vote { round: block.round, member: self.me, block_uid: block.id })
            }
            _ => should_vote(&self.safety, self.me, block, &self.store).inspect(|_| {
                if let Ok(s) = update_safety_state(&self.safety, block, &self.store) {
                    self.safety = s;
                }
            }),
        };
        match vote {
            Ok(v) => fx.sends.push((all_members(cfg), MessageKind::VoteMsg(v))),
            Err(reason) => fx.log(Evt::Refuse, "proposal", block.round, Some(block.id), reason.name()),
        }
        self.try_form(block.round, block.id, cfg, sent, fx);
    }

    fn on_vote(&mut self, v: &Vote, cfg: &EpochConfig, sent: &HashSet<Vote>, fx: &mut Effects) {
        self.votes.entry((v.round, v.block_uid)).or_default().insert(v.member, v.clone());
        self.try_form(v.round, v.block_uid, cfg, sent, fx);
    }

    fn try_form(&mut self, round: Round, id: Uid, cfg: &EpochConfig, sent: &HashSet<Vote>, fx: &mut Effects) {
        let key = (round, id);
        if self.formed.contains(&key) {
            return;
        }
        let Some(votes) = self.votes.get(&key) else { return };
        let members: Vec<Member> = votes.keys().copied().collect();
        if !cfg.is_quorum(&members).unwrap_or(false) {
            return;
        }
        let have_block = self.store.blocks_with_id(&id).iter().any(|&b| self.store.record(b).round() == round);
        if !have_block {
            return;
        }
        self.formed.insert(key);
        if self.store.qcs_certifying(&id).iter().any(|&q| self.store.record(q).round() == round) {
            return;
        }
        let qc = Qc { round, cert_block_id: id, votes: votes.values().cloned().collect() };
        if validate_qc(&qc, cfg, sent).is_err() {
            return;
        }
        let (new_qcs, _) = self.absorb(Record::Q(qc.clone()), sent, fx);
        fx.log(Evt::QcForm, "qc", round, Some(id), format!("votes={}", members.len()));
        let others = cfg.members().filter(|&m| m != self.me).collect();
        fx.sends.push((others, MessageKind::QcMsg(qc)));
        for q in new_qcs {
            self.on_new_qc(q, fx);
        }
    }

    fn on_qc(&mut self, qc: &Qc, sent: &HashSet<Vote>, fx: &mut Effects) {
        if self.store.contains(&Record::Q(qc.clone())) {
            return;
        }
        let (new_qcs, _) = self.absorb(Record::Q(qc.clone()), sent, fx);
        for q in new_qcs {
            self.on_new_qc(q, fx);
        }
    }

    fn on_new_qc(&mut self, q: RecordId, fx: &mut Effects) {
        let round = self.store.record(q).round();
        if round > self.store.record(self.highest_qc).round() {
            self.highest_qc = q;
        }
        let next = Round(round.0 + 1);
        if fx.entered.is_none_or(|r| r < next) {
            fx.entered = Some(next);
        }
        let Ok(Some(cr)) = self.store.detect_commit(q) else { return };
        let upto: Vec<Uid> = {
            let blocks: Vec<&Block> = cr.chain.blocks().collect();
            let end = blocks.iter().position(|b| **b == cr.committed).expect("committed block is on its chain");
            blocks[..=end].iter().map(|b| b.id).collect()
        };
        if upto.starts_with(&self.committed) {
            for (i, id) in upto.iter().enumerate().skip(self.committed.len()) {
                let b = cr.chain.blocks().nth(i).expect("index within chain");
                fx.log(Evt::Commit, "block", b.round, Some(*id), format!("height={}", i + 1));
            }
            self.committed = upto;
        } else if !self.committed.starts_with(&upto) {
            fx.log(Evt::Violation, "block", cr.committed.round, Some(cr.committed.id), "commit-conflicts-local-history");
        }
    }

    /// Proposals this peer sends as leader of `round`.
    fn propose(&mut self, round: Round, sc: &Scenario) -> Vec<(Vec<Member>, MessageKind)> {
        if self.proposed >= round || self.behavior == Some(Behavior::Silent) {
            return Vec::new();
        }
        self.proposed = round;
        let n = sc.cfg.authors_n();
        let make = |store: &RecordStore, parent: RecordId, tag: String| {
            let prev = store.record(parent).as_qc().map(|q| q.cert_block_id);
            let support: Arc<[Record]> =
                store.record_chain(parent).expect("stored").records()[1..].to_vec().into();
            let payload = format!("r{}-m{}{}", round.0, self.me.0, tag).into_bytes();
            let block = Block::new(round, prev, payload, sc.hash_mode).expect("short payload");
            MessageKind::Proposal { block, support }
        };
        match self.behavior {
            Some(Behavior::Equivocate) => {
                let v = sc.variants();
                let variants: Vec<MessageKind> =
                    (0..v).map(|k| make(&self.store, self.highest_qc, format!("-v{k}"))).collect();
                (0..v.max(n)).map(|k| (vec![Member(k % n)], variants[k % v].clone())).collect()
            }
            Some(Behavior::DoubleVote) => {
                let on_main: HashSet<Uid> = self
                    .store
                    .record_chain(self.highest_qc)
                    .expect("stored")
                    .blocks()
                    .map(|b| b.id)
                    .collect();
                // Without an existing side branch, fork from the QC the main head extends.
                let alt = self
                    .store
                    .qc_ids()
                    .filter(|&q| self.store.record(q).as_qc().is_some_and(|x| !on_main.contains(&x.cert_block_id)))
                    .max_by_key(|&q| (self.store.record(q).round(), std::cmp::Reverse(q)))
                    .or_else(|| self.store.parent(self.highest_qc).and_then(|b| self.store.parent(b)));
                let main = make(&self.store, self.highest_qc, String::new());
                let fork = make(&self.store, alt.unwrap_or(RecordId::GENESIS), "-fork".to_string());
                // Colluding byzantine peers get both; honest peers are split by parity.
                let byz = |m: &Member| sc.adversaries.contains_key(m);
                let evens = (0..n).map(Member).filter(|m| m.0 % 2 == 0 || byz(m)).collect();
                let odds = (0..n).map(Member).filter(|m| m.0 % 2 == 1 || byz(m)).collect();
                vec![(evens, main), (odds, fork)]
            }
            _ => vec![(all_members(&sc.cfg), make(&self.store, self.highest_qc, String::new()))],
        }
    }
}

fn all_members(cfg: &EpochConfig) -> Vec<Member> {
    cfg.members().collect()
}

/// Full simulation state.
pub struct World {
    pub scenario: Scenario,
    pub peers: Vec<Peer>,
    /// Every message sent, in send order.
    pub log: Vec<Arc<Message>>,
    pub trace: Vec<TraceEvent>,
    sent_votes: HashSet<Vote>,
    queue: BinaryHeap<Event>,
    rng: ChaCha8Rng,
    seq: u64,
    now: u64,
    step: u64,
    timeout: u64,
}

impl World {
    pub fn new(scenario: Scenario) -> Result<World, ScenarioError> {
        scenario.validate()?;
        let peers = scenario
            .cfg
            .members()
            .map(|m| Peer::new(m, scenario.adversaries.get(&m).copied(), &scenario.cfg, scenario.hash_mode))
            .collect();
        let rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        let timeout = 4 * (scenario.max_delay + 1);
        let mut w = World {
            scenario,
            peers,
            log: Vec::new(),
            trace: Vec::new(),
            sent_votes: HashSet::new(),
            queue: BinaryHeap::new(),
            rng,
            seq: 0,
            now: 0,
            step: 0,
            timeout,
        };
        for i in 0..w.peers.len() {
            w.enter_round(i, Round(1));
        }
        Ok(w)
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.step >= self.scenario.steps
    }

    fn push(&mut self, due: u64, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Event { due, seq: self.seq, kind });
    }

    fn log_event(&mut self, peer: Member, evt: Evt, kind: &'static str, round: Round, id: Option<Uid>, detail: String) {
        self.trace.push(TraceEvent { step: self.step, evt, peer, kind, round, id, detail });
    }

    fn leader(&self, r: Round) -> usize {
        (r.0 % self.peers.len() as u64) as usize
    }

    fn enter_round(&mut self, i: usize, r: Round) {
        let peer = &mut self.peers[i];
        if r <= peer.round || peer.behavior == Some(Behavior::Silent) {
            return;
        }
        peer.round = r;
        let due = self.now + self.timeout;
        self.push(due, EventKind::Timeout { peer: Member(i), round: r });
        if self.leader(r) == i {
            let sends = self.peers[i].propose(r, &self.scenario);
            for (to, kind) in sends {
                self.send(i, to, kind);
            }
        }
    }

    fn send(&mut self, from: usize, to: Vec<Member>, kind: MessageKind) {
        if let MessageKind::VoteMsg(v) = &kind {
            self.sent_votes.insert(v.clone());
        }
        let targets = to.iter().map(|m| m.0.to_string()).collect::<Vec<_>>().join(",");
        self.log_event(Member(from), Evt::Send, kind.label(), kind.round(), Some(kind.id()), format!("to={targets}"));
        let msg = Arc::new(Message { kind, sender: Member(from), send_step: self.step });
        self.log.push(msg.clone());
        for m in to {
            let delay = if m.0 == from { 0 } else { self.rng.gen_range(0..=self.scenario.max_delay) };
            self.push(self.now + delay, EventKind::Deliver { to: m, msg: msg.clone(), copy: false });
        }
    }

    /// Pops and handles one event. Returns false once the step budget is spent.
    pub fn step(&mut self) -> bool {
        if self.is_done() {
            return false;
        }
        let Some(ev) = self.queue.pop() else {
            // Nothing in flight: every active peer moves to its next round.
            let before = self.queue.len();
            for i in 0..self.peers.len() {
                let r = Round(self.peers[i].round.0 + 1);
                self.enter_round(i, r);
            }
            self.step += 1;
            return self.queue.len() > before;
        };
        self.step += 1;
        self.now = ev.due;
        match ev.kind {
            EventKind::Timeout { peer, round } => {
                if self.peers[peer.0].round == round {
                    self.enter_round(peer.0, Round(round.0 + 1));
                }
            }
            EventKind::Deliver { to, msg, copy } => self.deliver(to, msg, copy),
        }
        true
    }

    fn deliver(&mut self, to: Member, msg: Arc<Message>, copy: bool) {
        let (label, round, id) = (msg.kind.label(), msg.kind.round(), Some(msg.kind.id()));
        let from = format!("from={}", msg.sender);
        if msg.sender != to {
            if self.rng.gen_bool(self.scenario.drop_prob) {
                self.log_event(to, Evt::Drop, label, round, id, from);
                return;
            }
            if !copy && self.rng.gen_bool(self.scenario.dup_prob) {
                let delay = self.rng.gen_range(0..=self.scenario.max_delay);
                self.log_event(to, Evt::Dup, label, round, id, from.clone());
                self.push(self.now + delay, EventKind::Deliver { to, msg: msg.clone(), copy: true });
            }
        }
        self.log_event(to, Evt::Deliver, label, round, id, from);
        let peer = &mut self.peers[to.0];
        if peer.behavior == Some(Behavior::Silent) {
            return;
        }
        let mut fx = Effects::new();
        let cfg = &self.scenario.cfg;
        match &msg.kind {
            MessageKind::Proposal { block, support } => peer.on_proposal(block, support, cfg, &self.sent_votes, &mut fx),
            MessageKind::VoteMsg(v) => peer.on_vote(v, cfg, &self.sent_votes, &mut fx),
            MessageKind::QcMsg(q) => peer.on_qc(q, &self.sent_votes, &mut fx),
        }
        for (evt, kind, round, id, detail) in fx.trace {
            self.log_event(to, evt, kind, round, id, detail);
        }
        for (targets, kind) in fx.sends {
            self.send(to.0, targets, kind);
        }
        if let Some(r) = fx.entered {
            self.enter_round(to.0, r);
        }
    }

    pub fn run(&mut self) {
        while self.step() {}
    }

    /// Records and votes from every message sent so far.
    pub fn pool(&self) -> RecordPool {
        let mut records = Vec::new();
        let mut votes = Vec::new();
        for m in &self.log {
            let prov = Provenance { sender: m.sender, step: m.send_step };
            match &m.kind {
                MessageKind::Proposal { block, support } => {
                    records.extend(support.iter().map(|r| (r.clone(), prov)));
                    records.push((Record::B(block.clone()), prov));
                }
                MessageKind::VoteMsg(v) => votes.push(v.clone()),
                MessageKind::QcMsg(q) => records.push((Record::Q(q.clone()), prov)),
            }
        }
        RecordPool::build(self.scenario.cfg.clone(), self.scenario.hash_mode, records, votes)
    }

    /// Header line naming the PRNG and seed, then one event per line.
    pub fn render_trace(&self) -> String {
        let mut out = format!("# prng={} seed={}\n", PRNG_NAME, self.scenario.seed);
        for e in &self.trace {
            out.push_str(&e.to_string());
            out.push('\n');
        }
        out
    }
}

/// True when each pair of sequences has one as a prefix of the other.
pub fn prefix_consistent(seqs: &[&[Uid]]) -> bool {
    seqs.iter().enumerate().all(|(i, a)| seqs[i + 1..].iter().all(|b| a.starts_with(b) || b.starts_with(a)))
}

pub struct RunOutcome {
    pub trace: String,
    pub pool: RecordPool,
    pub report: AuditReport,
    /// Committed block ids per peer, indexed by member.
    pub committed: Vec<Vec<Uid>>,
    pub honest_prefix_consistent: bool,
    pub log: Vec<Arc<Message>>,
}

impl RunOutcome {
    pub fn verdict(&self) -> &AuditVerdict {
        &self.report.verdict
    }
}

/// Runs the scenario to its step budget, then audits the sent records.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutcome, ScenarioError> {
    let mut world = World::new(scenario.clone())?;
    world.run();
    let honesty = scenario.honesty();
    let pool = world.pool();
    let report = audit(&pool, &honesty);
    let mut findings: Vec<(Member, String, Round)> = report
        .votes_only_once
        .iter()
        .chain(&report.complete)
        .chain(report.preferred_round.iter().filter_map(|f| match f {
            PreferredRoundFinding::Violation(v) => Some(v),
            PreferredRoundFinding::Injectivity(_) => None,
        }))
        .map(|v| (v.member, v.rule.to_string(), v.round))
        .collect();
    if !report.verdict.is_safe() {
        findings.push((Member(0), format!("verdict={}", report.verdict.name()), Round(0)));
    }
    for (member, detail, round) in findings {
        world.log_event(member, Evt::Violation, "audit", round, None, detail);
    }
    let committed: Vec<Vec<Uid>> = world.peers.iter().map(|p| p.committed.clone()).collect();
    let honest: Vec<&[Uid]> =
        world.peers.iter().filter(|p| p.is_honest()).map(|p| p.committed.as_slice()).collect();
    Ok(RunOutcome {
        trace: world.render_trace(),
        honest_prefix_consistent: prefix_consistent(&honest),
        pool,
        report,
        committed,
        log: world.log,
    })
}
