// Copyright (c) The bft-kernel Contributors
// SPDX-License-Identifier: Apache-2.0

//! Small hand-built record trees shared by tests, benches and examples.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::chains::{RecordId, RecordStore};
use crate::quorum::EpochConfig;
use crate::types::{Block, HashMode, Member, Qc, Record, Round, SelfSigned, Uid, Vote};

/// The seven-block tree:
///
/// ```text
/// genesis ← b0(1) ← q0 ← b1(2) ← q1 ← b3(3) ← q3 ← b5(4) ← q5
///                   │            └── b4(6) ← q4 ← b6(7) ← q6
///                   └── b2(5) ← q2
/// ```
pub struct Fig1 {
    pub cfg: EpochConfig,
    pub b: Vec<Block>,
    pub q: Vec<Qc>,
    pub store: RecordStore,
    qids: Vec<RecordId>,
}

/// `(block index, round, index of the extended QC)`, in insertion order.
const FIG1_LAYOUT: [(usize, u64, Option<usize>); 7] = [
    (0, 1, None),
    (1, 2, Some(0)),
    (2, 5, Some(0)),
    (3, 3, Some(1)),
    (4, 6, Some(1)),
    (5, 4, Some(3)),
    (6, 7, Some(4)),
];

impl Fig1 {
    pub fn new() -> Fig1 {
        let cfg = EpochConfig::count(0, 4, 1).expect("n=4 f=1");
        let mut store = RecordStore::new(cfg.clone(), HashMode::Strong);
        let mut b: Vec<Option<Block>> = vec![None; 7];
        let mut q: Vec<Option<Qc>> = vec![None; 7];
        let mut qids = vec![RecordId::GENESIS; 7];
        for (i, round, prev) in FIG1_LAYOUT {
            let prev_id = prev.map(|p| q[p].as_ref().expect("inserted earlier").cert_block_id);
            let block = Block::new(Round(round), prev_id, format!("b{i}").into_bytes(), HashMode::Strong).unwrap();
            let qc = Qc { round: Round(round), cert_block_id: block.id, votes: votes_for(&block, &[0, 1, 2]) };
            store.insert(Record::B(block.clone()), &SelfSigned).expect("fixture block");
            qids[i] = store.insert(Record::Q(qc.clone()), &SelfSigned).expect("fixture qc");
            b[i] = Some(block);
            q[i] = Some(qc);
        }
        Fig1 {
            cfg,
            b: b.into_iter().map(Option::unwrap).collect(),
            q: q.into_iter().map(Option::unwrap).collect(),
            store,
            qids,
        }
    }

    pub fn qid(&self, i: usize) -> RecordId {
        self.qids[i]
    }

    pub fn rb(&self, i: usize) -> Record {
        Record::B(self.b[i].clone())
    }

    pub fn rq(&self, i: usize) -> Record {
        Record::Q(self.q[i].clone())
    }

    pub fn votes_for(&self, b: &Block, members: &[usize]) -> Vec<Vote> {
        votes_for(b, members)
    }
}

impl Default for Fig1 {
    fn default() -> Self {
        Fig1::new()
    }
}

pub fn votes_for(b: &Block, members: &[usize]) -> Vec<Vote> {
    members.iter().map(|&m| Vote { round: b.round, member: Member(m), block_uid: b.id }).collect()
}

/// Two blocks with the same round and predecessor whose ids collide under `mode`.
pub fn weak_collision_pair(mode: HashMode, round: u64, prev: Option<Uid>) -> (Block, Block) {
    let mut seen: HashMap<Uid, Block> = HashMap::new();
    for i in 0u64.. {
        let b = Block::new(Round(round), prev, format!("collide-{i}").into_bytes(), mode).unwrap();
        if let Some(other) = seen.insert(b.id, b.clone()) {
            return (other, b);
        }
    }
    unreachable!()
}

/// A random record tree of up to `max_records` records (genesis included).
///
/// Blocks extend genesis or a random QC at a round one or two above it, so
/// contiguous 3-chains, forks and same-round siblings all occur. QCs certify a
/// random block with a random quorum; a block may get several QCs.
pub fn random_store(rng: &mut impl Rng, cfg: &EpochConfig, max_records: usize) -> RecordStore {
    let mut store = RecordStore::new(cfg.clone(), HashMode::Strong);
    let target = rng.gen_range(1..=max_records.max(1));
    let members: Vec<usize> = (0..cfg.authors_n()).collect();
    let mut blocks: Vec<RecordId> = Vec::new();
    let mut parents: Vec<RecordId> = vec![RecordId::GENESIS];
    let mut tag = 0u64;
    while store.len() < target {
        if blocks.is_empty() || rng.gen_bool(0.5) {
            let parent = *parents.choose(rng).expect("genesis");
            let prev = store.record(parent);
            let round = Round(prev.round().0 + rng.gen_range(1..=2));
            let prev_id = prev.as_qc().map(|q| q.cert_block_id);
            tag += 1;
            let b = Block::new(round, prev_id, tag.to_be_bytes().to_vec(), HashMode::Strong).expect("short payload");
            blocks.push(store.insert(Record::B(b), &SelfSigned).expect("valid block"));
        } else {
            let bid = *blocks.choose(rng).expect("non-empty");
            let b = store.record(bid).as_block().expect("block").clone();
            let mut voters = members.clone();
            voters.shuffle(rng);
            let size = rng.gen_range(cfg.count_threshold().min(voters.len())..=voters.len());
            voters.truncate(size);
            voters.sort_unstable();
            let qc = Qc { round: b.round, cert_block_id: b.id, votes: votes_for(&b, &voters) };
            if let Ok(id) = store.insert(Record::Q(qc), &SelfSigned) {
                if !parents.contains(&id) {
                    parents.push(id);
                }
            }
        }
    }
    store
}
