// Copyright (c) The bft-kernel Contributors
// SPDX-License-Identifier: Apache-2.0

//! Safety audits over the pool of records that were actually sent.
//!
//! Every audit here checks a safety property directly against the pool
//! rather than re-deriving a proof. Id collisions among pool blocks are
//! reported as evidence and take precedence over conflicts.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use thiserror::Error;

use crate::chains::{block_in_chain, CommitRule, RecordStore};
use crate::quorum::{quorum_intersection_honest, EpochConfig, HonestyMap};
use crate::types::{Block, HashMode, Member, Qc, Record, Round, Uid, Vote};

/// Who sent the first message carrying a record, and when.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Provenance {
    pub sender: Member,
    pub step: u64,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "sender={} step={}", self.sender, self.step)
    }
}

/// Records contained in sent messages, plus the votes that were sent.
///
/// `store` holds the subset that validates (ids match content, QCs coherent,
/// parents present), inserted in round order so parents precede children.
#[derive(Clone, Debug)]
pub struct RecordPool {
    records: Vec<(Record, Provenance)>,
    sent_votes: HashSet<Vote>,
    store: RecordStore,
}

impl RecordPool {
    pub fn build(
        cfg: EpochConfig,
        mode: HashMode,
        records: impl IntoIterator<Item = (Record, Provenance)>,
        sent_votes: impl IntoIterator<Item = Vote>,
    ) -> RecordPool {
        let mut seen = HashSet::new();
        let records: Vec<(Record, Provenance)> = records
            .into_iter()
            .filter(|(r, _)| !matches!(r, Record::Genesis))
            .filter(|(r, _)| seen.insert(r.clone()))
            .collect();
        let sent_votes: HashSet<Vote> = sent_votes.into_iter().collect();
        let mut order: Vec<usize> = (0..records.len()).collect();
        order.sort_by_key(|&i| {
            let r = &records[i].0;
            (r.round(), matches!(r, Record::Q(_)), i)
        });
        let mut store = RecordStore::new(cfg, mode);
        // Blocks may arrive before a QC at an earlier round made it in, so retry until stable.
        let mut pending = order;
        loop {
            let before = pending.len();
            pending.retain(|&i| store.insert(records[i].0.clone(), &sent_votes).is_err());
            if pending.len() == before {
                break;
            }
        }
        RecordPool { records, sent_votes, store }
    }

    /// Pool where every vote appearing in a pool QC counts as sent.
    pub fn with_qc_votes_as_sent(
        cfg: EpochConfig,
        mode: HashMode,
        records: impl IntoIterator<Item = (Record, Provenance)>,
    ) -> RecordPool {
        let records: Vec<_> = records.into_iter().collect();
        let votes: Vec<Vote> =
            records.iter().filter_map(|(r, _)| r.as_qc()).flat_map(|q| q.votes.iter().cloned()).collect();
        RecordPool::build(cfg, mode, records, votes)
    }

    pub fn records(&self) -> &[(Record, Provenance)] {
        &self.records
    }

    pub fn sent_votes(&self) -> &HashSet<Vote> {
        &self.sent_votes
    }

    /// The validated part of the pool as a record tree.
    pub fn store(&self) -> &RecordStore {
        &self.store
    }

    pub fn contains(&self, r: &Record) -> bool {
        self.records.iter().any(|(x, _)| x == r)
    }

    pub fn blocks(&self) -> impl Iterator<Item = (&Block, Provenance)> {
        self.records.iter().filter_map(|(r, p)| r.as_block().map(|b| (b, *p)))
    }

    pub fn qcs(&self) -> impl Iterator<Item = &Qc> {
        self.records.iter().filter_map(|(r, _)| r.as_qc())
    }

    /// Every commit rule derivable from a validated pool QC, one per certified block.
    pub fn commits(&self) -> Vec<CommitRule> {
        let mut seen_blocks = HashSet::new();
        self.store
            .qc_ids()
            .filter(|&q| seen_blocks.insert(self.store.parent(q)))
            .filter_map(|q| self.store.detect_commit(q).ok().flatten())
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rule {
    VotesOnlyOnce,
    PreferredRound,
    /// Honest votes only for blocks with a full chain in the system.
    Complete,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Rule::VotesOnlyOnce => "VotesOnlyOnce",
            Rule::PreferredRound => "PreferredRound",
            Rule::Complete => "Complete",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ViolationEvidence {
    /// Two different votes for one round.
    DoubleVote { first: Vote, second: Vote },
    /// A vote in a QC completing a commit, then a higher-round vote whose parent
    /// round is below the committed block's round.
    PreferredRound { commit_vote: Vote, committed: Uid, committed_round: Round, later_vote: Vote, prev_round: Round },
    /// A vote for a block with no chain in the pool.
    NoChain { vote: Vote },
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Violation {
    pub member: Member,
    pub rule: Rule,
    pub round: Round,
    pub evidence: ViolationEvidence,
}

/// Two pool blocks that differ in content yet share an id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InjectivityFailure {
    pub first: Block,
    pub second: Block,
    pub first_provenance: Provenance,
    pub second_provenance: Provenance,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PreferredRoundFinding {
    Violation(Violation),
    Injectivity(InjectivityFailure),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AuditVerdict {
    Safe,
    RuleViolation(Violation),
    ConflictingCommits(Box<CommitRule>, Box<CommitRule>),
    InjectivityFailure(InjectivityFailure),
}

impl AuditVerdict {
    pub fn name(&self) -> &'static str {
        match self {
            AuditVerdict::Safe => "safe",
            AuditVerdict::RuleViolation(_) => "rule_violation",
            AuditVerdict::ConflictingCommits(..) => "conflicting_commits",
            AuditVerdict::InjectivityFailure(_) => "injectivity_failure",
        }
    }

    pub fn is_safe(&self) -> bool {
        matches!(self, AuditVerdict::Safe)
    }
}

fn honest_votes<'a>(qcs: impl Iterator<Item = &'a Qc>, honesty: &'a HonestyMap) -> impl Iterator<Item = &'a Vote> {
    qcs.flat_map(|q| q.votes.iter()).filter(|v| honesty.is_honest(v.member))
}

/// Honest members must not appear in pool QCs with two different votes for one round.
pub fn audit_votes_only_once(pool: &RecordPool, honesty: &HonestyMap) -> Vec<Violation> {
    let mut by_slot: BTreeMap<(Member, Round), BTreeSet<&Vote>> = BTreeMap::new();
    for v in honest_votes(pool.qcs(), honesty) {
        by_slot.entry((v.member, v.round)).or_default().insert(v);
    }
    let mut out = Vec::new();
    for ((member, round), votes) in by_slot {
        let votes: Vec<&Vote> = votes.into_iter().collect();
        for (i, a) in votes.iter().enumerate() {
            for b in &votes[i + 1..] {
                out.push(Violation {
                    member,
                    rule: Rule::VotesOnlyOnce,
                    round,
                    evidence: ViolationEvidence::DoubleVote { first: (*a).clone(), second: (*b).clone() },
                });
            }
        }
    }
    out
}

/// For every honest vote in a QC completing a contiguous 3-chain, each of that
/// member's higher-round votes must extend a QC whose round is at least the
/// committed block's round.
pub fn audit_preferred_round(pool: &RecordPool, honesty: &HonestyMap) -> Vec<PreferredRoundFinding> {
    let store = pool.store();
    // Per member: (vote, round of the QC the voted block extends).
    let mut later: BTreeMap<Member, Vec<(&Vote, Round)>> = BTreeMap::new();
    let mut heads = Vec::new();
    for q in store.qc_ids() {
        let qc = store.record(q).as_qc().expect("qc id");
        let Some(prev_round) = store.parent(q).and_then(|b| store.parent(b)).map(|p| store.record(p).round()) else {
            continue;
        };
        for v in qc.votes.iter().filter(|v| honesty.is_honest(v.member)) {
            later.entry(v.member).or_default().push((v, prev_round));
        }
        heads.push(q);
    }
    let mut findings = BTreeSet::new();
    for head in heads {
        let Ok(Some(cr)) = store.detect_commit(head) else { continue };
        for commit_vote in cr.head_qc().votes.iter().filter(|v| honesty.is_honest(v.member)) {
            for &(later_vote, prev_round) in later.get(&commit_vote.member).into_iter().flatten() {
                if later_vote.round > commit_vote.round && cr.committed.round > prev_round {
                    findings.insert(Violation {
                        member: commit_vote.member,
                        rule: Rule::PreferredRound,
                        round: later_vote.round,
                        evidence: ViolationEvidence::PreferredRound {
                            commit_vote: commit_vote.clone(),
                            committed: cr.committed.id,
                            committed_round: cr.committed.round,
                            later_vote: later_vote.clone(),
                            prev_round,
                        },
                    });
                }
            }
        }
    }
    if findings.is_empty() {
        return Vec::new();
    }
    if let Some(inj) = find_injectivity_failure(pool) {
        return vec![PreferredRoundFinding::Injectivity(inj)];
    }
    findings.into_iter().map(PreferredRoundFinding::Violation).collect()
}

/// Every honest vote in a pool QC must be for a block whose full chain is in the pool.
pub fn audit_complete(pool: &RecordPool, honesty: &HonestyMap) -> Vec<Violation> {
    let store = pool.store();
    let mut out = BTreeSet::new();
    for v in honest_votes(pool.qcs(), honesty) {
        let has_chain =
            store.blocks_with_id(&v.block_uid).iter().any(|&b| store.record(b).round() == v.round);
        if !has_chain {
            out.insert(Violation {
                member: v.member,
                rule: Rule::Complete,
                round: v.round,
                evidence: ViolationEvidence::NoChain { vote: v.clone() },
            });
        }
    }
    out.into_iter().collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum RoundUniquenessError {
    Injectivity(InjectivityFailure),
    /// Two valid QCs at one round certifying different block ids.
    Conflict { first: Qc, second: Qc },
}

fn provenance_of(pool: &RecordPool, b: &Block) -> Provenance {
    pool.records
        .iter()
        .find(|(r, _)| r.as_block() == Some(b))
        .map(|(_, p)| *p)
        .expect("store blocks come from the pool")
}

/// At most one certified block per round, unless ids collide.
#[allow(clippy::result_large_err)]
pub fn certified_round_uniqueness(pool: &RecordPool) -> Result<(), RoundUniquenessError> {
    let store = pool.store();
    let mut by_round: BTreeMap<Round, Vec<&Qc>> = BTreeMap::new();
    for id in store.qc_ids() {
        let q = store.record(id).as_qc().expect("qc id");
        by_round.entry(q.round).or_default().push(q);
    }
    let mut conflict = None;
    for qcs in by_round.values() {
        for q in qcs {
            let certified: Vec<&Block> = store
                .blocks_with_id(&q.cert_block_id)
                .iter()
                .filter_map(|&b| store.record(b).as_block())
                .filter(|b| b.round == q.round)
                .collect();
            if let [first, .., second] = certified.as_slice() {
                return Err(RoundUniquenessError::Injectivity(InjectivityFailure {
                    first: (*first).clone(),
                    second: (*second).clone(),
                    first_provenance: provenance_of(pool, first),
                    second_provenance: provenance_of(pool, second),
                }));
            }
        }
        if conflict.is_none() {
            if let Some(other) = qcs.iter().find(|q| q.cert_block_id != qcs[0].cert_block_id) {
                conflict = Some(RoundUniquenessError::Conflict { first: qcs[0].clone(), second: (*other).clone() });
            }
        }
    }
    conflict.map_or(Ok(()), Err)
}

/// First pair of pool blocks, in pool order, with equal ids and different content.
/// Only blocks whose id matches their content count.
pub fn find_injectivity_failure(pool: &RecordPool) -> Option<InjectivityFailure> {
    let mode = pool.store().hash_mode();
    let mut first_by_id: BTreeMap<Uid, (&Block, Provenance)> = BTreeMap::new();
    for (b, p) in pool.blocks().filter(|(b, _)| b.id_matches(mode)) {
        match first_by_id.get(&b.id) {
            Some((other, op)) if other.content_differs(b) => {
                return Some(InjectivityFailure {
                    first: (*other).clone(),
                    second: b.clone(),
                    first_provenance: *op,
                    second_provenance: p,
                });
            }
            Some(_) => {}
            None => {
                first_by_id.insert(b.id, (b, p));
            }
        }
    }
    None
}

/// For every pair of derivable commits, one committed block must lie on the
/// other's chain. Collision evidence takes precedence over a conflict.
pub fn commits_do_not_conflict(pool: &RecordPool) -> AuditVerdict {
    let commits = pool.commits();
    for (i, a) in commits.iter().enumerate() {
        for b in &commits[i + 1..] {
            if !block_in_chain(&a.committed, &b.chain) && !block_in_chain(&b.committed, &a.chain) {
                return match find_injectivity_failure(pool) {
                    Some(inj) => AuditVerdict::InjectivityFailure(inj),
                    None => AuditVerdict::ConflictingCommits(Box::new(a.clone()), Box::new(b.clone())),
                };
            }
        }
    }
    AuditVerdict::Safe
}

/// All audit results for one pool.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AuditReport {
    pub verdict: AuditVerdict,
    pub commits: AuditVerdict,
    pub votes_only_once: Vec<Violation>,
    pub preferred_round: Vec<PreferredRoundFinding>,
    pub complete: Vec<Violation>,
    pub round_uniqueness: Result<(), RoundUniquenessError>,
    pub injectivity: Option<InjectivityFailure>,
    pub explanation: Option<Explanation>,
}

/// Runs every audit. The overall verdict is the commit verdict when it is not
/// safe, otherwise the first honest rule violation, otherwise safe.
pub fn audit(pool: &RecordPool, honesty: &HonestyMap) -> AuditReport {
    let commits = commits_do_not_conflict(pool);
    let votes_only_once = audit_votes_only_once(pool, honesty);
    let preferred_round = audit_preferred_round(pool, honesty);
    let complete = audit_complete(pool, honesty);
    let round_uniqueness = certified_round_uniqueness(pool);
    let injectivity = find_injectivity_failure(pool);
    let verdict = if !commits.is_safe() {
        commits.clone()
    } else if let Some(v) = votes_only_once
        .iter()
        .chain(preferred_round.iter().filter_map(|f| match f {
            PreferredRoundFinding::Violation(v) => Some(v),
            PreferredRoundFinding::Injectivity(_) => None,
        }))
        .chain(&complete)
        .next()
    {
        AuditVerdict::RuleViolation(v.clone())
    } else if let Some(PreferredRoundFinding::Injectivity(inj)) = preferred_round.first() {
        AuditVerdict::InjectivityFailure(inj.clone())
    } else {
        AuditVerdict::Safe
    };
    let explanation = cross_check_conflict_pair(&verdict, pool, honesty, pool.store().config()).ok();
    AuditReport { verdict, commits, votes_only_once, preferred_round, complete, round_uniqueness, injectivity, explanation }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Explanation {
    /// The two commit-completing QCs share no honest member: more byzantine
    /// members than the assumption allows.
    NoHonestIntersection { first: Vec<Member>, second: Vec<Member> },
    /// An honest member is in both QCs; names the rule its votes broke, if found.
    HonestMember { member: Member, rule: Option<Rule> },
}

impl fmt::Display for Explanation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Explanation::NoHonestIntersection { .. } => {
                f.write_str("no honest member in quorum intersection; byzantine budget exceeded")
            }
            Explanation::HonestMember { member, rule: Some(rule) } => {
                write!(f, "honest member {member} in quorum intersection violated {rule}")
            }
            Explanation::HonestMember { member, rule: None } => {
                write!(f, "honest member {member} in quorum intersection; no rule violation found")
            }
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum CrossCheckError {
    #[error("verdict is not a commit conflict")]
    NotAConflict,
    #[error("commit QCs are not quorums")]
    NotQuorums,
}

/// Explains a conflict: finds an honest member voting in both commit-completing
/// QCs and names the rule it broke, or reports that no such member exists.
pub fn cross_check_conflict_pair(
    verdict: &AuditVerdict,
    pool: &RecordPool,
    honesty: &HonestyMap,
    cfg: &EpochConfig,
) -> Result<Explanation, CrossCheckError> {
    let AuditVerdict::ConflictingCommits(a, b) = verdict else {
        return Err(CrossCheckError::NotAConflict);
    };
    let first: Vec<Member> = a.head_qc().voters().collect();
    let second: Vec<Member> = b.head_qc().voters().collect();
    let member = quorum_intersection_honest(&first, &second, honesty, cfg).map_err(|_| CrossCheckError::NotQuorums)?;
    let Some(member) = member else {
        return Ok(Explanation::NoHonestIntersection { first, second });
    };
    let rule = if audit_votes_only_once(pool, honesty).iter().any(|v| v.member == member) {
        Some(Rule::VotesOnlyOnce)
    } else if audit_preferred_round(pool, honesty)
        .iter()
        .any(|f| matches!(f, PreferredRoundFinding::Violation(v) if v.member == member))
    {
        Some(Rule::PreferredRound)
    } else {
        None
    };
    Ok(Explanation::HonestMember { member, rule })
}
