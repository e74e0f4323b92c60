// Copyright (c) The bft-kernel Contributors
// SPDX-License-Identifier: Apache-2.0

//! The tree of records rooted at genesis, record chains over it, k-chains and
//! commit detection.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::quorum::EpochConfig;
use crate::types::{
    extends, validate_qc, Block, ExtendsError, ExtendsWitness, HashMode, Member, Qc, QcError, Record, Round, Uid,
    Vote, VoteEvidence,
};

/// Handle to a record stored in a [`RecordStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordId(pub usize);

impl RecordId {
    pub const GENESIS: RecordId = RecordId(0);
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum InsertError {
    #[error("no parent record present")]
    OrphanRecord,
    #[error("invalid extends link: {0}")]
    InvalidExtends(ExtendsError),
    #[error("invalid qc: {0}")]
    InvalidQc(QcError),
    #[error("block id does not match its content")]
    BadBlockId,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ChainError {
    #[error("record not in store")]
    NotInStore,
    #[error("chain is malformed for this operation")]
    Malformed,
}

#[derive(Clone, Debug)]
struct Entry {
    record: Record,
    parent: Option<RecordId>,
    witness: Option<ExtendsWitness>,
    children: Vec<RecordId>,
}

/// Validated records forming a tree rooted at genesis. Each record keeps the
/// parent under which it was inserted, so parent walks are deterministic.
#[derive(Clone, Debug)]
pub struct RecordStore {
    cfg: EpochConfig,
    mode: HashMode,
    entries: Vec<Entry>,
    index: HashMap<Record, RecordId>,
    blocks_by_id: HashMap<Uid, Vec<RecordId>>,
    qcs_by_cert: HashMap<Uid, Vec<RecordId>>,
    collisions: Vec<(RecordId, RecordId)>,
}

impl RecordStore {
    pub fn new(cfg: EpochConfig, mode: HashMode) -> Self {
        let genesis = Entry { record: Record::Genesis, parent: None, witness: None, children: Vec::new() };
        let mut index = HashMap::new();
        index.insert(Record::Genesis, RecordId::GENESIS);
        RecordStore {
            cfg,
            mode,
            entries: vec![genesis],
            index,
            blocks_by_id: HashMap::new(),
            qcs_by_cert: HashMap::new(),
            collisions: Vec::new(),
        }
    }

    pub fn config(&self) -> &EpochConfig {
        &self.cfg
    }

    pub fn hash_mode(&self) -> HashMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.len() == 1
    }

    pub fn get(&self, id: RecordId) -> Option<&Record> {
        self.entries.get(id.0).map(|e| &e.record)
    }

    pub fn record(&self, id: RecordId) -> &Record {
        &self.entries[id.0].record
    }

    pub fn find(&self, r: &Record) -> Option<RecordId> {
        self.index.get(r).copied()
    }

    pub fn contains(&self, r: &Record) -> bool {
        self.index.contains_key(r)
    }

    pub fn parent(&self, id: RecordId) -> Option<RecordId> {
        self.entries.get(id.0).and_then(|e| e.parent)
    }

    pub fn witness(&self, id: RecordId) -> Option<ExtendsWitness> {
        self.entries.get(id.0).and_then(|e| e.witness)
    }

    pub fn children(&self, id: RecordId) -> &[RecordId] {
        &self.entries[id.0].children
    }

    /// All stored records in insertion order, genesis first.
    pub fn iter(&self) -> impl Iterator<Item = (RecordId, &Record)> {
        self.entries.iter().enumerate().map(|(i, e)| (RecordId(i), &e.record))
    }

    pub fn qc_ids(&self) -> impl Iterator<Item = RecordId> + '_ {
        self.iter().filter(|(_, r)| matches!(r, Record::Q(_))).map(|(id, _)| id)
    }

    /// Stored blocks with this id, in insertion order. More than one only after a collision.
    pub fn blocks_with_id(&self, id: &Uid) -> &[RecordId] {
        self.blocks_by_id.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Stored QCs certifying this block id, in insertion order.
    pub fn qcs_certifying(&self, id: &Uid) -> &[RecordId] {
        self.qcs_by_cert.get(id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Pairs of stored blocks sharing an id but differing in content.
    pub fn collisions(&self) -> &[(RecordId, RecordId)] {
        &self.collisions
    }

    fn parent_candidates(&self, r: &Record) -> Vec<RecordId> {
        match r {
            Record::Genesis => Vec::new(),
            Record::B(b) => match &b.prev_qc {
                None => vec![RecordId::GENESIS],
                Some(prev) => self.qcs_certifying(prev).to_vec(),
            },
            Record::Q(q) => self.blocks_with_id(&q.cert_block_id).to_vec(),
        }
    }

    /// Inserts a record under the first stored parent it validly extends.
    /// Re-inserting an identical record is a no-op returning the existing handle.
    pub fn insert(&mut self, r: Record, evidence: &dyn VoteEvidence) -> Result<RecordId, InsertError> {
        if let Some(id) = self.find(&r) {
            return Ok(id);
        }
        match &r {
            Record::Genesis => unreachable!("genesis is always present"),
            Record::B(b) if !b.id_matches(self.mode) => return Err(InsertError::BadBlockId),
            Record::Q(q) => validate_qc(q, &self.cfg, evidence).map_err(InsertError::InvalidQc)?,
            Record::B(_) => {}
        }
        let candidates = self.parent_candidates(&r);
        if candidates.is_empty() {
            return Err(InsertError::OrphanRecord);
        }
        let mut first_err = None;
        let mut link = None;
        for p in candidates {
            match extends(self.record(p), &r) {
                Ok(w) => {
                    link = Some((p, w));
                    break;
                }
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        let (parent, witness) = match (link, first_err) {
            (Some(l), _) => l,
            (None, Some(e)) => return Err(InsertError::InvalidExtends(e)),
            (None, None) => return Err(InsertError::OrphanRecord),
        };
        let id = RecordId(self.entries.len());
        match &r {
            Record::B(b) => {
                let same_id = self.blocks_by_id.entry(b.id).or_default();
                if let Some(&other) = same_id.first() {
                    self.collisions.push((other, id));
                }
                same_id.push(id);
            }
            Record::Q(q) => self.qcs_by_cert.entry(q.cert_block_id).or_default().push(id),
            Record::Genesis => {}
        }
        self.entries[parent.0].children.push(id);
        self.index.insert(r.clone(), id);
        self.entries.push(Entry { record: r, parent: Some(parent), witness: Some(witness), children: Vec::new() });
        Ok(id)
    }

    /// Path from genesis to `id` along insertion-time parents.
    pub fn record_chain(&self, id: RecordId) -> Result<RecordChain, ChainError> {
        if id.0 >= self.entries.len() {
            return Err(ChainError::NotInStore);
        }
        let mut path = vec![id];
        let mut cur = id;
        while let Some(p) = self.parent(cur) {
            path.push(p);
            cur = p;
        }
        path.reverse();
        let links = path.iter().skip(1).map(|&i| self.witness(i).expect("non-genesis has witness")).collect();
        Ok(RecordChain {
            origin: ChainOrigin::Genesis,
            records: path.into_iter().map(|i| self.record(i).clone()).collect(),
            links,
        })
    }

    pub fn record_chain_of(&self, r: &Record) -> Result<RecordChain, ChainError> {
        self.record_chain(self.find(r).ok_or(ChainError::NotInStore)?)
    }

    pub fn find_kchain(&self, q: RecordId, k: usize, relation: Relation) -> Result<Option<KChain>, ChainError> {
        Ok(self.record_chain(q)?.kchain(k, relation))
    }

    pub fn detect_commit(&self, q: RecordId) -> Result<Option<CommitRule>, ChainError> {
        Ok(self.record_chain(q)?.commit_rule())
    }

    /// Every chain from genesis to `id`, following all stored parents that the
    /// record validly extends (not just the insertion-time one). Stops after `limit`.
    pub fn all_chains(&self, id: RecordId, limit: usize) -> Vec<Vec<RecordId>> {
        let mut out = Vec::new();
        let mut stack = vec![vec![id]];
        while let Some(path) = stack.pop() {
            if out.len() >= limit {
                break;
            }
            let head = *path.last().expect("non-empty");
            if head == RecordId::GENESIS {
                let mut p = path;
                p.reverse();
                out.push(p);
                continue;
            }
            let r = self.record(head);
            for p in self.parent_candidates(r).into_iter().rev() {
                if extends(self.record(p), r).is_ok() {
                    let mut next = path.clone();
                    next.push(p);
                    stack.push(next);
                }
            }
        }
        out
    }

    /// Verifies that all chains ending at `id` are pointwise equivalent; otherwise
    /// returns two distinct same-id blocks found where they diverge.
    #[allow(clippy::result_large_err)]
    pub fn check_rc_irrelevance(&self, id: RecordId) -> Result<(), InjectivityEvidence> {
        let chains = self.all_chains(id, 4096);
        let Some(first) = chains.first() else { return Ok(()) };
        for other in &chains[1..] {
            for (a, b) in first.iter().rev().zip(other.iter().rev()) {
                let (ra, rb) = (self.record(*a), self.record(*b));
                if !records_equivalent(ra, rb) {
                    if let (Record::B(x), Record::B(y)) = (ra, rb) {
                        return Err(InjectivityEvidence { first: x.clone(), second: y.clone() });
                    }
                    unreachable!("chains to one record diverge only at same-id blocks");
                }
            }
        }
        Ok(())
    }

    /// Line-oriented dump of every stored record in insertion order.
    pub fn dump(&self) -> String {
        self.entries.iter().map(|e| format!("{}\n", dump_line(&e.record))).collect()
    }
}

/// Two distinct blocks sharing one id.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InjectivityEvidence {
    pub first: Block,
    pub second: Block,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ChainOrigin {
    /// Starts at genesis.
    Genesis,
    /// Starts at an arbitrary record.
    Partial,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Relation {
    /// Adjacent blocks have rounds `r` and `r + 1`.
    Contig,
    /// No constraint between adjacent blocks.
    Simple,
}

/// Records linked pairwise by the extends relation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RecordChain {
    origin: ChainOrigin,
    records: Vec<Record>,
    links: Vec<ExtendsWitness>,
}

impl RecordChain {
    /// Validates every adjacent link. On failure reports the index of the record
    /// that does not extend its predecessor.
    pub fn from_records(records: Vec<Record>) -> Result<RecordChain, (usize, ExtendsError)> {
        if records.is_empty() {
            return Err((0, ExtendsError::ShapeMismatch));
        }
        let origin = if records[0] == Record::Genesis { ChainOrigin::Genesis } else { ChainOrigin::Partial };
        let links = records
            .windows(2)
            .enumerate()
            .map(|(i, w)| extends(&w[0], &w[1]).map_err(|e| (i + 1, e)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(RecordChain { origin, records, links })
    }

    pub fn genesis() -> RecordChain {
        RecordChain { origin: ChainOrigin::Genesis, records: vec![Record::Genesis], links: Vec::new() }
    }

    pub fn origin(&self) -> ChainOrigin {
        self.origin
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn links(&self) -> &[ExtendsWitness] {
        &self.links
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn last(&self) -> &Record {
        self.records.last().expect("chains are never empty")
    }

    pub fn blocks(&self) -> impl DoubleEndedIterator<Item = &Block> {
        self.records.iter().filter_map(Record::as_block)
    }

    /// Round of the QC extended by the chain's final block; 0 when it extends genesis.
    pub fn prev_round(&self) -> Result<Round, ChainError> {
        let n = self.records.len();
        match self.records.as_slice() {
            [.., before, Record::B(_), Record::Q(_)] if n >= 3 => match before {
                Record::Genesis => Ok(Round(0)),
                Record::Q(q) => Ok(q.round),
                Record::B(_) => Err(ChainError::Malformed),
            },
            _ => Err(ChainError::Malformed),
        }
    }

    /// The k-chain formed by the last `k` (block, QC) pairs, if they satisfy `relation`.
    pub fn kchain(&self, k: usize, relation: Relation) -> Option<KChain> {
        let n = self.records.len();
        if k == 0 || n < 2 * k {
            return None;
        }
        let mut blocks = Vec::with_capacity(k);
        let mut qcs = Vec::with_capacity(k);
        for pair in self.records[n - 2 * k..].chunks(2) {
            match pair {
                [Record::B(b), Record::Q(q)] => {
                    blocks.push(b.clone());
                    qcs.push(q.clone());
                }
                _ => return None,
            }
        }
        if relation == Relation::Contig && blocks.windows(2).any(|w| w[1].round.0 != w[0].round.0 + 1) {
            return None;
        }
        Some(KChain { relation, blocks, qcs })
    }

    /// Commit rule: a contiguous 3-chain at the end of the chain commits its head block.
    pub fn commit_rule(&self) -> Option<CommitRule> {
        let kchain = self.kchain(3, Relation::Contig)?;
        let committed = kchain.kchain_block(2).clone();
        Some(CommitRule { chain: self.clone(), kchain, committed })
    }

    /// The chain's records after dropping everything before the final `n` (block, QC) pairs.
    pub fn suffix_pairs(&self, n: usize) -> Option<RecordChain> {
        let len = self.records.len();
        if len < 2 * n || n == 0 {
            return None;
        }
        RecordChain::from_records(self.records[len - 2 * n..].to_vec()).ok()
    }
}

/// Genesis matches genesis, blocks must be equal, QCs must certify the same block.
pub fn records_equivalent(a: &Record, b: &Record) -> bool {
    match (a, b) {
        (Record::Genesis, Record::Genesis) => true,
        (Record::B(x), Record::B(y)) => x == y,
        (Record::Q(x), Record::Q(y)) => x.equivalent(y),
        _ => false,
    }
}

/// Pointwise equivalence of two record chains.
pub fn chains_equivalent(rc1: &RecordChain, rc2: &RecordChain) -> bool {
    rc1.origin == rc2.origin
        && rc1.records.len() == rc2.records.len()
        && rc1.records.iter().zip(&rc2.records).all(|(a, b)| records_equivalent(a, b))
}

/// Membership of a block in a chain. Equivalent chains hold identical blocks
/// position by position, so this is a positional scan.
pub fn block_in_chain(b: &Block, rc: &RecordChain) -> bool {
    rc.blocks().any(|x| x == b)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct KChain {
    pub relation: Relation,
    /// Oldest first.
    pub blocks: Vec<Block>,
    pub qcs: Vec<Qc>,
}

impl KChain {
    pub fn k(&self) -> usize {
        self.blocks.len()
    }

    /// The `n`th block from the end: 0 is the newest, `k - 1` the head.
    pub fn kchain_block(&self, n: usize) -> &Block {
        &self.blocks[self.blocks.len() - 1 - n]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommitRule {
    pub chain: RecordChain,
    pub kchain: KChain,
    pub committed: Block,
}

impl CommitRule {
    /// The QC ending the chain, which completes the 3-chain.
    pub fn head_qc(&self) -> &Qc {
        self.kchain.qcs.last().expect("3-chain")
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum DumpError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn vote_field(q: &Qc) -> String {
    q.votes
        .iter()
        .map(vote_text)
        .collect::<Vec<_>>()
        .join(";")
}

/// `member:round:block id`.
pub fn vote_text(v: &Vote) -> String {
    format!("{}:{}:{}", v.member.0, v.round.0, v.block_uid.to_hex())
}

pub fn parse_vote_text(v: &str) -> Result<Vote, String> {
    let parts: Vec<&str> = v.split(':').collect();
    let [m, r, id] = parts.as_slice() else {
        return Err(format!("invalid vote `{v}`"));
    };
    Ok(Vote {
        member: Member(parse_u64(m, "member")? as usize),
        round: Round(parse_u64(r, "vote round")?),
        block_uid: parse_uid(id)?,
    })
}

/// One dump line: `kind= id= round= parent=` followed by the content needed to
/// rebuild the record (`payload=` for blocks, `votes=` for QCs).
pub fn dump_line(r: &Record) -> String {
    match r {
        Record::Genesis => "kind=genesis".to_string(),
        Record::B(b) => format!(
            "kind=block id={} round={} parent={} payload={}",
            b.id.to_hex(),
            b.round.0,
            b.prev_qc.map(|p| p.to_hex()).unwrap_or_else(|| "none".into()),
            hex::encode(&b.payload)
        ),
        Record::Q(q) => format!(
            "kind=qc id={} round={} parent={} votes={}",
            q.cert_block_id.to_hex(),
            q.round.0,
            q.cert_block_id.to_hex(),
            vote_field(q)
        ),
    }
}

/// Parses `key=value` fields separated by single spaces.
pub(crate) fn kv_fields(line: &str) -> Result<Vec<(&str, &str)>, String> {
    line.split_whitespace()
        .map(|f| f.split_once('=').ok_or_else(|| format!("field `{f}` is not key=value")))
        .collect()
}

fn field<'a>(fields: &[(&str, &'a str)], key: &str) -> Result<&'a str, String> {
    fields.iter().find(|(k, _)| *k == key).map(|(_, v)| *v).ok_or_else(|| format!("missing `{key}`"))
}

fn parse_uid(s: &str) -> Result<Uid, String> {
    s.parse::<Uid>().map_err(|e| e.to_string())
}

fn parse_u64(s: &str, what: &str) -> Result<u64, String> {
    s.parse::<u64>().map_err(|_| format!("invalid {what} `{s}`"))
}

pub fn parse_dump_line(line: &str) -> Result<Record, String> {
    let fields = kv_fields(line)?;
    match field(&fields, "kind")? {
        "genesis" => Ok(Record::Genesis),
        "block" => {
            let parent = field(&fields, "parent")?;
            Ok(Record::B(Block {
                id: parse_uid(field(&fields, "id")?)?,
                round: Round(parse_u64(field(&fields, "round")?, "round")?),
                prev_qc: if parent == "none" { None } else { Some(parse_uid(parent)?) },
                payload: hex::decode(field(&fields, "payload")?).map_err(|_| "invalid payload hex".to_string())?,
            }))
        }
        "qc" => {
            let votes = field(&fields, "votes")?;
            let votes = votes
                .split(';')
                .filter(|s| !s.is_empty())
                .map(parse_vote_text)
                .collect::<Result<Vec<_>, String>>()?;
            Ok(Record::Q(Qc {
                cert_block_id: parse_uid(field(&fields, "id")?)?,
                round: Round(parse_u64(field(&fields, "round")?, "round")?),
                votes,
            }))
        }
        other => Err(format!("unknown record kind `{other}`")),
    }
}

/// Parses a dump, skipping blank lines and `#` comments.
pub fn parse_dump(text: &str) -> Result<Vec<Record>, DumpError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| parse_dump_line(l.trim()).map_err(|msg| DumpError::Parse { line: i + 1, msg }))
        .collect()
}

impl fmt::Display for RecordChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.records {
            writeln!(f, "{}", dump_line(r))?;
        }
        Ok(())
    }
}
