// Copyright (c) The bft-kernel Contributors
// SPDX-License-Identifier: Apache-2.0

//! Per-peer voting safety state.
//!
//! A peer votes for a proposal only if its round is above the last round voted
//! in (which implies never sending two different votes for one round), and the
//! round of the QC the proposal extends is at least the preferred round.

use std::fmt;

use thiserror::Error;

use crate::chains::{RecordId, RecordStore};
use crate::types::{extends, Block, ExtendsError, Member, Record, Round, Vote};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct VoterSafetyState {
    pub last_voted_round: Round,
    pub preferred_round: Round,
}

impl fmt::Display for VoterSafetyState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "last_voted={},preferred={}", self.last_voted_round, self.preferred_round)
    }
}

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
pub enum RefusalReason {
    #[error("already voted in this round or a later one")]
    AlreadyVotedThisRound,
    #[error("parent round below preferred round")]
    BelowPreferredRound,
    #[error("parent of the proposal is unknown")]
    UnknownParent,
    #[error("proposal does not extend its parent: {0}")]
    InvalidProposal(ExtendsError),
}

impl RefusalReason {
    pub fn name(&self) -> &'static str {
        match self {
            RefusalReason::AlreadyVotedThisRound => "AlreadyVotedThisRound",
            RefusalReason::BelowPreferredRound => "BelowPreferredRound",
            RefusalReason::UnknownParent => "UnknownParent",
            RefusalReason::InvalidProposal(_) => "InvalidProposal",
        }
    }
}

/// The record a block extends: genesis or the first stored QC certifying `prev_qc`.
fn parent_record(block: &Block, store: &RecordStore) -> Result<RecordId, RefusalReason> {
    match &block.prev_qc {
        None => Ok(RecordId::GENESIS),
        Some(prev) => store.qcs_certifying(prev).first().copied().ok_or(RefusalReason::UnknownParent),
    }
}

/// Round of the QC a block extends (0 for genesis), checked against the store.
pub fn parent_round(block: &Block, store: &RecordStore) -> Result<Round, RefusalReason> {
    let parent = parent_record(block, store)?;
    let rec = store.record(parent);
    extends(rec, &Record::B(block.clone())).map_err(RefusalReason::InvalidProposal)?;
    Ok(rec.round())
}

pub fn should_vote(
    state: &VoterSafetyState,
    me: Member,
    proposal: &Block,
    store: &RecordStore,
) -> Result<Vote, RefusalReason> {
    let parent_round = parent_round(proposal, store)?;
    if proposal.round <= state.last_voted_round {
        return Err(RefusalReason::AlreadyVotedThisRound);
    }
    if parent_round < state.preferred_round {
        return Err(RefusalReason::BelowPreferredRound);
    }
    Ok(Vote { round: proposal.round, member: me, block_uid: proposal.id })
}

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq)]
#[error("lineage of the voted block is not in the store")]
pub struct LineageError;

/// Records a vote: bumps the last voted round and raises the preferred round to
/// the round of the voted block's grandparent (the block two links back), whether
/// or not the rounds along the way are contiguous.
pub fn update_safety_state(
    state: &VoterSafetyState,
    voted: &Block,
    store: &RecordStore,
) -> Result<VoterSafetyState, LineageError> {
    let grandparent_round = match &voted.prev_qc {
        None => Round(0),
        Some(parent_id) => {
            let parent_qc = *store.qcs_certifying(parent_id).first().ok_or(LineageError)?;
            let parent_block = store.parent(parent_qc).ok_or(LineageError)?;
            let parent = store.record(parent_block).as_block().ok_or(LineageError)?;
            match &parent.prev_qc {
                None => Round(0),
                Some(gp) => store.record(*store.qcs_certifying(gp).first().ok_or(LineageError)?).round(),
            }
        }
    };
    Ok(VoterSafetyState {
        last_voted_round: state.last_voted_round.max(voted.round),
        preferred_round: state.preferred_round.max(grandparent_round),
    })
}
