// Copyright (c) The bft-kernel Contributors
// SPDX-License-Identifier: Apache-2.0

//! Abstract records of the consensus tree: blocks, votes, quorum certificates and
//! the genesis record, together with the canonical block encoding, id assignment
//! and the `extends` relation between records.

use std::fmt;
use std::str::FromStr;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::quorum::{EpochConfig, QuorumError};

/// Protocol round number. Round 0 is reserved for the genesis context.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Round(pub u64);

impl fmt::Display for Round {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index of an epoch member, in `[0, authors_n)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Member(pub usize);

impl fmt::Display for Member {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// 32-byte record identifier. Equality is byte equality.
#[derive(Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Uid(pub [u8; 32]);

impl Uid {
    pub const LEN: usize = 32;

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// First 16 hex characters, used in trace lines.
    pub fn short(&self) -> String {
        hex::encode(&self.0[..8])
    }
}

impl fmt::Debug for Uid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Uid({})", self.short())
    }
}

impl fmt::Display for Uid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid uid `{0}`: expected 64 hex characters")]
pub struct UidParseError(pub String);

impl FromStr for Uid {
    type Err = UidParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|_| UidParseError(s.to_string()))?;
        Ok(Uid(out))
    }
}

/// How block ids are derived from their canonical encoding.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum HashMode {
    /// SHA-256 of the encoding.
    #[default]
    Strong,
    /// SHA-256 with every byte after the first `k` zeroed. Collision-prone on purpose.
    Weak(usize),
}

impl fmt::Display for HashMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HashMode::Strong => f.write_str("strong"),
            HashMode::Weak(k) => write!(f, "weak:{k}"),
        }
    }
}

impl FromStr for HashMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "strong" {
            return Ok(HashMode::Strong);
        }
        match s.strip_prefix("weak:").map(str::parse::<usize>) {
            Some(Ok(k)) if k <= Uid::LEN => Ok(HashMode::Weak(k)),
            _ => Err(format!("invalid hash mode `{s}` (expected strong or weak:k)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Block {
    pub round: Round,
    pub id: Uid,
    /// Certified block id of the QC this block extends; `None` extends genesis.
    pub prev_qc: Option<Uid>,
    pub payload: Vec<u8>,
}

impl Block {
    /// Builds a block whose id is derived from its content, as honest code does.
    pub fn new(
        round: Round,
        prev_qc: Option<Uid>,
        payload: Vec<u8>,
        mode: HashMode,
    ) -> Result<Block, EncodeError> {
        let mut block = Block { round, id: Uid::default(), prev_qc, payload };
        block.id = assign_id(&canonical_encode(&block)?, mode);
        Ok(block)
    }

    /// True when the two blocks differ in anything the id is supposed to commit to.
    pub fn content_differs(&self, other: &Block) -> bool {
        self.round != other.round || self.prev_qc != other.prev_qc || self.payload != other.payload
    }

    /// Whether `id` matches the content under `mode`.
    pub fn id_matches(&self, mode: HashMode) -> bool {
        canonical_encode(self).map(|enc| assign_id(&enc, mode) == self.id).unwrap_or(false)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Vote {
    pub round: Round,
    pub member: Member,
    pub block_uid: Uid,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Qc {
    pub round: Round,
    pub cert_block_id: Uid,
    pub votes: Vec<Vote>,
}

impl Qc {
    pub fn voters(&self) -> impl Iterator<Item = Member> + '_ {
        self.votes.iter().map(|v| v.member)
    }

    pub fn vote_of(&self, member: Member) -> Option<&Vote> {
        self.votes.iter().find(|v| v.member == member)
    }

    /// Two QCs are equivalent iff they certify the same block id.
    pub fn equivalent(&self, other: &Qc) -> bool {
        self.cert_block_id == other.cert_block_id
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Record {
    Genesis,
    B(Block),
    Q(Qc),
}

impl Record {
    pub fn round(&self) -> Round {
        match self {
            Record::Genesis => Round(0),
            Record::B(b) => b.round,
            Record::Q(q) => q.round,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Record::Genesis => "genesis",
            Record::B(_) => "block",
            Record::Q(_) => "qc",
        }
    }

    pub fn as_block(&self) -> Option<&Block> {
        match self {
            Record::B(b) => Some(b),
            _ => None,
        }
    }

    pub fn as_qc(&self) -> Option<&Qc> {
        match self {
            Record::Q(q) => Some(q),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EncodeError {
    #[error("payload of {0} bytes exceeds the 4-byte length prefix")]
    PayloadTooLong(usize),
}

const BLOCK_TAG: u8 = 0x42;

/// Bit-exact block encoding: `0x42 ‖ round(u64 BE) ‖ flag ‖ [prev id] ‖ len(u32 BE) ‖ payload`.
/// The block's own id is not part of the encoding.
pub fn canonical_encode(b: &Block) -> Result<Vec<u8>, EncodeError> {
    let len = u32::try_from(b.payload.len()).map_err(|_| EncodeError::PayloadTooLong(b.payload.len()))?;
    let mut out = Vec::with_capacity(1 + 8 + 1 + 32 + 4 + b.payload.len());
    out.push(BLOCK_TAG);
    out.extend_from_slice(&b.round.0.to_be_bytes());
    match &b.prev_qc {
        None => out.push(0x00),
        Some(id) => {
            out.push(0x01);
            out.extend_from_slice(&id.0);
        }
    }
    out.extend_from_slice(&len.to_be_bytes());
    out.extend_from_slice(&b.payload);
    Ok(out)
}

pub fn assign_id(enc: &[u8], mode: HashMode) -> Uid {
    let digest: [u8; 32] = Sha256::digest(enc).into();
    let mut id = Uid(digest);
    if let HashMode::Weak(k) = mode {
        for byte in id.0.iter_mut().skip(k) {
            *byte = 0;
        }
    }
    id
}

/// Which constructor of the extends relation holds between two records.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExtendsWitness {
    GenesisToBlock,
    QcToBlock,
    BlockToQc,
}

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq, Hash)]
pub enum ExtendsError {
    #[error("round not greater than predecessor")]
    RoundNotGreater,
    #[error("prev_qc does not identify the predecessor")]
    PrevQcMismatch,
    #[error("qc round differs from block round")]
    RoundMismatch,
    #[error("qc certifies a different block id")]
    IdMismatch,
    #[error("no extends constructor for this pair of record kinds")]
    ShapeMismatch,
}

impl ExtendsError {
    pub fn name(&self) -> &'static str {
        match self {
            ExtendsError::RoundNotGreater => "RoundNotGreater",
            ExtendsError::PrevQcMismatch => "PrevQCMismatch",
            ExtendsError::RoundMismatch => "RoundMismatch",
            ExtendsError::IdMismatch => "IdMismatch",
            ExtendsError::ShapeMismatch => "ShapeMismatch",
        }
    }
}

/// `r ← r2`: does `r2` extend `r`?
pub fn extends(r: &Record, r2: &Record) -> Result<ExtendsWitness, ExtendsError> {
    match (r, r2) {
        (Record::Genesis, Record::B(b)) => {
            if b.round.0 == 0 {
                Err(ExtendsError::RoundNotGreater)
            } else if b.prev_qc.is_some() {
                Err(ExtendsError::PrevQcMismatch)
            } else {
                Ok(ExtendsWitness::GenesisToBlock)
            }
        }
        (Record::Q(q), Record::B(b)) => {
            if q.round >= b.round {
                Err(ExtendsError::RoundNotGreater)
            } else if b.prev_qc != Some(q.cert_block_id) {
                Err(ExtendsError::PrevQcMismatch)
            } else {
                Ok(ExtendsWitness::QcToBlock)
            }
        }
        (Record::B(b), Record::Q(q)) => {
            if q.round != b.round {
                Err(ExtendsError::RoundMismatch)
            } else if q.cert_block_id != b.id {
                Err(ExtendsError::IdMismatch)
            } else {
                Ok(ExtendsWitness::BlockToQc)
            }
        }
        _ => Err(ExtendsError::ShapeMismatch),
    }
}

/// Source of send evidence for votes (clause C4 of QC coherence).
pub trait VoteEvidence {
    /// True iff a message carrying exactly `vote`, sent by `vote.member`, exists.
    fn was_sent(&self, vote: &Vote) -> bool;
}

impl VoteEvidence for std::collections::HashSet<Vote> {
    fn was_sent(&self, vote: &Vote) -> bool {
        self.contains(vote)
    }
}

impl VoteEvidence for std::collections::BTreeSet<Vote> {
    fn was_sent(&self, vote: &Vote) -> bool {
        self.contains(vote)
    }
}

impl<T: VoteEvidence + ?Sized> VoteEvidence for &T {
    fn was_sent(&self, vote: &Vote) -> bool {
        (**self).was_sent(vote)
    }
}

/// Treats every vote as carrying its own send evidence, the way a vote with a
/// valid signature would for a party outside the simulation.
#[derive(Clone, Copy, Debug, Default)]
pub struct SelfSigned;

impl VoteEvidence for SelfSigned {
    fn was_sent(&self, _vote: &Vote) -> bool {
        true
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum QcError {
    #[error("votes do not form a quorum")]
    NotAQuorum,
    #[error("member {0} voted twice")]
    DuplicateMember(Member),
    #[error("member {0} is not part of the epoch")]
    UnknownMember(Member),
    #[error("vote of member {0} is for a different block")]
    WrongBlockId(Member),
    #[error("vote of member {0} is for a different round")]
    WrongRound(Member),
    #[error("no send evidence for the vote of member {0}")]
    NoSendEvidence(Member),
}

impl QcError {
    pub fn name(&self) -> &'static str {
        match self {
            QcError::NotAQuorum => "NotAQuorum",
            QcError::DuplicateMember(_) => "DuplicateMember",
            QcError::UnknownMember(_) => "UnknownMember",
            QcError::WrongBlockId(_) => "WrongBlockId",
            QcError::WrongRound(_) => "WrongRound",
            QcError::NoSendEvidence(_) => "NoSendEvidence",
        }
    }
}

/// Checks the four coherence clauses of a QC, in order.
pub fn validate_qc(q: &Qc, cfg: &EpochConfig, evidence: &dyn VoteEvidence) -> Result<(), QcError> {
    // C1: distinct members forming a quorum.
    let mut seen = vec![false; cfg.authors_n()];
    for v in &q.votes {
        let slot = seen.get_mut(v.member.0).ok_or(QcError::UnknownMember(v.member))?;
        if *slot {
            return Err(QcError::DuplicateMember(v.member));
        }
        *slot = true;
    }
    let members: Vec<Member> = q.voters().collect();
    match cfg.is_quorum(&members) {
        Ok(true) => {}
        Ok(false) => return Err(QcError::NotAQuorum),
        Err(QuorumError::MemberOutOfRange(m)) => return Err(QcError::UnknownMember(m)),
        Err(QuorumError::DuplicateMember(m)) => return Err(QcError::DuplicateMember(m)),
    }
    // C2
    if let Some(v) = q.votes.iter().find(|v| v.block_uid != q.cert_block_id) {
        return Err(QcError::WrongBlockId(v.member));
    }
    // C3
    if let Some(v) = q.votes.iter().find(|v| v.round != q.round) {
        return Err(QcError::WrongRound(v.member));
    }
    // C4
    if let Some(v) = q.votes.iter().find(|v| !evidence.was_sent(v)) {
        return Err(QcError::NoSendEvidence(v.member));
    }
    Ok(())
}
