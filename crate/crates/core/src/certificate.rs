// Copyright (c) The bft-kernel Contributors
// SPDX-License-Identifier: Apache-2.0

//! Light-client commit certificates: a suffix of a record chain ending in a
//! contiguous 3-chain, plus the id of the block it claims is committed.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use thiserror::Error;

use crate::chains::{dump_line, parse_dump_line, parse_vote_text, vote_text, CommitRule, RecordChain};
use crate::quorum::EpochConfig;
use crate::types::{extends, validate_qc, ExtendsError, HashMode, QcError, Record, Uid, Vote, VoteEvidence};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommitCertificate {
    pub records: Vec<Record>,
    pub claim: Uid,
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum CertError {
    #[error("record {0} does not extend its predecessor: {1}")]
    BadLink(usize, ExtendsError),
    #[error("record {0} is an invalid QC: {1}")]
    BadQC(usize, QcError),
    #[error("record {0} has an id that does not match its content")]
    BadBlockId(usize),
    #[error("last three blocks are not at consecutive rounds")]
    NotContiguous,
    #[error("claimed block is not the head of the 3-chain")]
    WrongClaimedBlock,
    #[error("fewer than three block/QC pairs")]
    TooShort,
}

impl CertError {
    pub fn name(&self) -> &'static str {
        match self {
            CertError::BadLink(..) => "BadLink",
            CertError::BadQC(..) => "BadQC",
            CertError::BadBlockId(_) => "BadBlockId",
            CertError::NotContiguous => "NotContiguous",
            CertError::WrongClaimedBlock => "WrongClaimedBlock",
            CertError::TooShort => "TooShort",
        }
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum CertParseError {
    #[error("line {line}: {msg}")]
    Line { line: usize, msg: String },
    #[error("missing claim line")]
    MissingClaim,
}

impl CommitCertificate {
    /// The last three block/QC pairs of the commit's chain.
    pub fn from_commit(cr: &CommitRule) -> CommitCertificate {
        let suffix = cr.chain.suffix_pairs(3).expect("commit chains hold three pairs");
        CommitCertificate { records: suffix.records().to_vec(), claim: cr.committed.id }
    }

    /// One record per line in dump format, then `claim=<id>`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let _ = writeln!(out, "{}", dump_line(r));
        }
        let _ = writeln!(out, "claim={}", self.claim.to_hex());
        out
    }

    pub fn parse(text: &str) -> Result<CommitCertificate, CertParseError> {
        let mut records = Vec::new();
        let mut claim = None;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |msg: String| CertParseError::Line { line: i + 1, msg };
            if let Some(hex) = line.strip_prefix("claim=") {
                claim = Some(hex.parse::<Uid>().map_err(|e| err(e.0))?);
            } else {
                records.push(parse_dump_line(line).map_err(err)?);
            }
        }
        Ok(CommitCertificate { records, claim: claim.ok_or(CertParseError::MissingClaim)? })
    }
}

/// Sent-vote log used as send evidence when verifying certificates: one
/// `vote=member:round:id` line per vote, sorted.
pub fn render_vote_log<'a>(votes: impl IntoIterator<Item = &'a Vote>) -> String {
    let sorted: BTreeSet<&Vote> = votes.into_iter().collect();
    sorted.into_iter().map(|v| format!("vote={}\n", vote_text(v))).collect()
}

pub fn parse_vote_log(text: &str) -> Result<BTreeSet<Vote>, CertParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            let err = |msg: String| CertParseError::Line { line: i + 1, msg };
            let v = l.trim().strip_prefix("vote=").ok_or_else(|| err("expected vote=".into()))?;
            parse_vote_text(v).map_err(err)
        })
        .collect()
}

/// Checks a certificate without any other chain state and returns the id of the
/// committed block. Checks run in record order; the first failure is reported.
pub fn verify_commit_certificate(
    cert: &CommitCertificate,
    cfg: &EpochConfig,
    mode: HashMode,
    evidence: &dyn VoteEvidence,
) -> Result<Uid, CertError> {
    let recs = &cert.records;
    let start = usize::from(matches!(recs.first(), Some(Record::Genesis)));
    if recs.len() - start < 6 {
        return Err(CertError::TooShort);
    }
    for (pos, r) in recs.iter().enumerate() {
        let expect_block = (pos + start) % 2 == 0;
        match r {
            Record::B(b) if expect_block => {
                if !b.id_matches(mode) {
                    return Err(CertError::BadBlockId(pos));
                }
            }
            Record::Q(q) if !expect_block => validate_qc(q, cfg, evidence).map_err(|e| CertError::BadQC(pos, e))?,
            Record::Genesis if pos == 0 => continue,
            _ => return Err(CertError::BadLink(pos, ExtendsError::ShapeMismatch)),
        }
        if pos > 0 {
            extends(&recs[pos - 1], r).map_err(|e| CertError::BadLink(pos, e))?;
        }
    }
    if !matches!(recs.last(), Some(Record::Q(_))) {
        return Err(CertError::TooShort);
    }
    let chain = RecordChain::from_records(recs.clone()).map_err(|(pos, e)| CertError::BadLink(pos, e))?;
    let cr = chain.commit_rule().ok_or(CertError::NotContiguous)?;
    if cr.committed.id != cert.claim {
        return Err(CertError::WrongClaimedBlock);
    }
    Ok(cr.committed.id)
}
