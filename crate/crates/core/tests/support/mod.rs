// Copyright (c) The bft-kernel Contributors
// SPDX-License-Identifier: Apache-2.0

//! Brute-force reference implementations used to cross-check the kernel, plus
//! the certificate mutation generator. Shared with the CLI acceptance suite.

#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet};

use bft_kernel::{extends, Block, CommitCertificate, Member, Qc, Record, RecordId, RecordStore, Round, Uid, Vote};
use rand::Rng;

/// Every stored record that `id` validly extends, by linear scan.
pub fn predecessors(store: &RecordStore, id: RecordId) -> Vec<RecordId> {
    let r = store.record(id);
    store.iter().filter(|(_, p)| extends(p, r).is_ok()).map(|(pid, _)| pid).collect()
}

/// All genesis-rooted paths ending at `id`, each as records oldest first.
pub fn all_paths(store: &RecordStore, id: RecordId) -> Vec<Vec<Record>> {
    if id == RecordId::GENESIS {
        return vec![vec![Record::Genesis]];
    }
    let mut out = Vec::new();
    for p in predecessors(store, id) {
        for mut path in all_paths(store, p) {
            path.push(store.record(id).clone());
            out.push(path);
        }
    }
    out
}

/// Head of the final contiguous 3-chain of a path ending `B Q B Q B Q`.
pub fn path_commit(path: &[Record]) -> Option<Block> {
    let n = path.len();
    if n < 6 {
        return None;
    }
    let tail = &path[n - 6..];
    let mut blocks = Vec::new();
    for pair in tail.chunks(2) {
        match pair {
            [Record::B(b), Record::Q(q)] if q.cert_block_id == b.id => blocks.push(b.clone()),
            _ => return None,
        }
    }
    let rounds: Vec<u64> = blocks.iter().map(|b| b.round.0).collect();
    (rounds[1] == rounds[0] + 1 && rounds[2] == rounds[1] + 1).then(|| blocks[0].clone())
}

/// Every (committed block, path) pair derivable in the store.
pub fn brute_commits(store: &RecordStore) -> Vec<(Block, Vec<Record>)> {
    let mut out = Vec::new();
    for (id, r) in store.iter() {
        if let Record::Q(_) = r {
            for path in all_paths(store, id) {
                if let Some(b) = path_commit(&path) {
                    out.push((b, path));
                }
            }
        }
    }
    out
}

pub fn path_has_block(path: &[Record], b: &Block) -> bool {
    path.iter().any(|r| matches!(r, Record::B(x) if x == b))
}

/// True when some pair of derivable commits has neither block on the other's path.
pub fn brute_conflict(store: &RecordStore) -> bool {
    let commits = brute_commits(store);
    commits.iter().enumerate().any(|(i, (a, pa))| {
        commits[i + 1..].iter().any(|(b, pb)| !path_has_block(pb, a) && !path_has_block(pa, b))
    })
}

/// True when two stored QCs of one round certify different ids.
pub fn brute_round_conflict(store: &RecordStore) -> bool {
    let qcs: Vec<&Qc> = store.iter().filter_map(|(_, r)| r.as_qc()).collect();
    qcs.iter().enumerate().any(|(i, a)| qcs[i + 1..].iter().any(|b| a.round == b.round && a.cert_block_id != b.cert_block_id))
}

pub fn brute_injectivity_failure(blocks: &[Block]) -> bool {
    blocks.iter().enumerate().any(|(i, a)| blocks[i + 1..].iter().any(|b| a.id == b.id && a != b))
}

/// Which field a mutation touched.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mutation {
    BlockId,
    BlockRound,
    BlockParent,
    BlockPayload,
    QcRound,
    QcBlockId,
    VoteMember,
    VoteRound,
    VoteBlockId,
    VoteDeleted,
    VoteDuplicated,
    Claim,
    Truncated,
}

fn other_uid(rng: &mut impl Rng, not: &Uid) -> Uid {
    loop {
        let u = Uid(rng.gen());
        if u != *not {
            return u;
        }
    }
}

fn nonzero_shift(rng: &mut impl Rng, r: Round) -> Round {
    loop {
        let delta: i64 = rng.gen_range(-3..=3);
        let next = r.0 as i64 + delta;
        if delta != 0 && next >= 0 {
            return Round(next as u64);
        }
    }
}

/// Applies one random single-field change to a certificate.
///
/// Member substitutions that would reproduce another vote the member really
/// sent for the same block, and deletions that leave a quorum, give a valid
/// certificate for the same commit; those are redrawn and counted in
/// `equivalent`.
pub fn mutate(
    cert: &CommitCertificate,
    n: usize,
    quorum: usize,
    sent: &HashSet<Vote>,
    rng: &mut impl Rng,
    equivalent: &mut usize,
) -> (CommitCertificate, Mutation) {
    loop {
        let mut c = cert.clone();
        let pos = rng.gen_range(0..c.records.len());
        let m = match &mut c.records[pos] {
            Record::Genesis => continue,
            Record::B(b) => match rng.gen_range(0..5) {
                0 => {
                    let byte = rng.gen_range(0..32);
                    b.id.0[byte] ^= 1 << rng.gen_range(0..8);
                    Mutation::BlockId
                }
                1 => {
                    b.round = nonzero_shift(rng, b.round);
                    Mutation::BlockRound
                }
                2 => {
                    b.prev_qc = match b.prev_qc {
                        Some(p) if rng.gen_bool(0.2) => {
                            let _ = p;
                            None
                        }
                        Some(p) => Some(other_uid(rng, &p)),
                        None => Some(Uid(rng.gen())),
                    };
                    Mutation::BlockParent
                }
                3 => {
                    b.payload.push(rng.gen());
                    Mutation::BlockPayload
                }
                _ => {
                    c.records.drain(..2.min(pos + 1));
                    Mutation::Truncated
                }
            },
            Record::Q(q) => match rng.gen_range(0..8) {
                0 => {
                    q.round = nonzero_shift(rng, q.round);
                    Mutation::QcRound
                }
                1 => {
                    q.cert_block_id = other_uid(rng, &q.cert_block_id);
                    Mutation::QcBlockId
                }
                2 => {
                    let i = rng.gen_range(0..q.votes.len());
                    let voters: BTreeSet<Member> = q.voters().collect();
                    let old = q.votes[i].member;
                    let new = Member(rng.gen_range(0..=n));
                    if new == old {
                        continue;
                    }
                    let swapped = Vote { member: new, ..q.votes[i].clone() };
                    if !voters.contains(&new) && new.0 < n && sent.contains(&swapped) {
                        *equivalent += 1;
                        continue;
                    }
                    q.votes[i] = swapped;
                    Mutation::VoteMember
                }
                3 => {
                    let i = rng.gen_range(0..q.votes.len());
                    q.votes[i].round = nonzero_shift(rng, q.votes[i].round);
                    Mutation::VoteRound
                }
                4 => {
                    let i = rng.gen_range(0..q.votes.len());
                    q.votes[i].block_uid = other_uid(rng, &q.votes[i].block_uid);
                    Mutation::VoteBlockId
                }
                5 => {
                    if q.votes.len() > quorum {
                        *equivalent += 1;
                        continue;
                    }
                    let i = rng.gen_range(0..q.votes.len());
                    q.votes.remove(i);
                    Mutation::VoteDeleted
                }
                6 => {
                    let i = rng.gen_range(0..q.votes.len());
                    let dup = q.votes[i].clone();
                    q.votes.insert(rng.gen_range(0..=q.votes.len()), dup);
                    Mutation::VoteDuplicated
                }
                _ => {
                    c.claim = other_uid(rng, &c.claim);
                    Mutation::Claim
                }
            },
        };
        return (c, m);
    }
}
