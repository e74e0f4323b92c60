// Copyright (c) The bft-kernel Contributors
// SPDX-License-Identifier: Apache-2.0

//! Safety kernel for chained HotStuff / LibraBFT-style consensus.
//!
//! The crate models the abstract record tree (genesis, blocks, quorum
//! certificates), enforces the two honest-voter rules, simulates byzantine
//! executions over a lossy network, and audits every execution for conflicting
//! commits, rule violations and id collisions.

pub mod auditor;
pub mod certificate;
pub mod chains;
pub mod fixtures;
pub mod quorum;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod types;
pub mod voter;

pub use auditor::{
    audit, audit_complete, audit_preferred_round, audit_votes_only_once, certified_round_uniqueness,
    commits_do_not_conflict, cross_check_conflict_pair, find_injectivity_failure, AuditReport, AuditVerdict,
    Explanation, InjectivityFailure, Provenance, RecordPool, Rule, Violation,
};
pub use certificate::{
    parse_vote_log, render_vote_log, verify_commit_certificate, CertError, CertParseError, CommitCertificate,
};
pub use chains::{
    block_in_chain, chains_equivalent, records_equivalent, ChainError, ChainOrigin, CommitRule, InjectivityEvidence, InsertError,
    KChain, RecordChain, RecordId, RecordStore, Relation,
};
pub use quorum::{check_bft_assumption, quorum_intersection_honest, EpochConfig, HonestyMap, QuorumModel};
pub use report::render_report;
pub use scenario::ScenarioFileError;
pub use sim::{run_scenario, Behavior, RunOutcome, Scenario, ScenarioError, World};
pub use types::{
    assign_id, canonical_encode, extends, validate_qc, Block, ExtendsError, ExtendsWitness, HashMode, Member, Qc,
    QcError, Record, Round, SelfSigned, Uid, Vote, VoteEvidence,
};
pub use voter::{should_vote, update_safety_state, RefusalReason, VoterSafetyState};
