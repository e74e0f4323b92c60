// Copyright (c) The bft-kernel Contributors
// SPDX-License-Identifier: Apache-2.0

//! Plain-text audit report: a verdict line, one summary line per check, then
//! evidence blocks. Field order is fixed.

use std::fmt::Write as _;

use crate::auditor::{
    AuditReport, AuditVerdict, InjectivityFailure, PreferredRoundFinding, RoundUniquenessError, Violation,
    ViolationEvidence,
};
use crate::chains::CommitRule;
use crate::types::{Block, Vote};

fn vote(v: &Vote) -> String {
    format!("{}:{}:{}", v.member, v.round, v.block_uid.to_hex())
}

fn block(b: &Block) -> String {
    format!(
        "id={} round={} parent={} payload={}",
        b.id.to_hex(),
        b.round,
        b.prev_qc.map_or_else(|| "none".to_string(), |p| p.to_hex()),
        hex::encode(&b.payload)
    )
}

fn violation(out: &mut String, v: &Violation) {
    let _ = write!(out, "member={} rule={} round={}", v.member, v.rule, v.round);
    let _ = match &v.evidence {
        ViolationEvidence::DoubleVote { first, second } => {
            writeln!(out, " first={} second={}", vote(first), vote(second))
        }
        ViolationEvidence::PreferredRound { commit_vote, committed, committed_round, later_vote, prev_round } => writeln!(
            out,
            " commit_vote={} committed={} committed_round={} later_vote={} prev_round={}",
            vote(commit_vote),
            committed.to_hex(),
            committed_round,
            vote(later_vote),
            prev_round
        ),
        ViolationEvidence::NoChain { vote: v } => writeln!(out, " vote={}", vote(v)),
    };
}

fn commit(out: &mut String, tag: &str, cr: &CommitRule) {
    let head = cr.head_qc();
    let voters: Vec<String> = head.voters().map(|m| m.to_string()).collect();
    let _ = writeln!(
        out,
        "{tag} committed={} round={} head_qc_round={} head_qc_voters={} chain_len={}",
        cr.committed.id.to_hex(),
        cr.committed.round,
        head.round,
        voters.join(","),
        cr.chain.len()
    );
}

fn injectivity(out: &mut String, inj: &InjectivityFailure) {
    let _ = writeln!(out, "first {} {}", block(&inj.first), inj.first_provenance);
    let _ = writeln!(out, "second {} {}", block(&inj.second), inj.second_provenance);
}

pub fn render_report(r: &AuditReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "verdict={}", r.verdict.name());
    if let Some(e) = &r.explanation {
        let _ = writeln!(out, "explanation={e}");
    }
    let _ = writeln!(out, "check=commits_do_not_conflict result={}", r.commits.name());
    let _ = writeln!(out, "check=votes_only_once violations={}", r.votes_only_once.len());
    let _ = writeln!(out, "check=preferred_round findings={}", r.preferred_round.len());
    let _ = writeln!(out, "check=complete violations={}", r.complete.len());
    let uniq = match &r.round_uniqueness {
        Ok(()) => "ok",
        Err(RoundUniquenessError::Conflict { .. }) => "conflict",
        Err(RoundUniquenessError::Injectivity(_)) => "injectivity_failure",
    };
    let _ = writeln!(out, "check=certified_round_uniqueness result={uniq}");
    let _ = writeln!(out, "check=injectivity result={}", if r.injectivity.is_some() { "found" } else { "none" });

    match &r.verdict {
        AuditVerdict::Safe => {}
        AuditVerdict::ConflictingCommits(a, b) => {
            out.push_str("\n[conflicting_commits]\n");
            commit(&mut out, "commit1", a);
            commit(&mut out, "commit2", b);
        }
        AuditVerdict::InjectivityFailure(inj) => {
            out.push_str("\n[injectivity_failure]\n");
            injectivity(&mut out, inj);
        }
        AuditVerdict::RuleViolation(v) => {
            out.push_str("\n[rule_violation]\n");
            violation(&mut out, v);
        }
    }
    let rule_sections: [(&str, Vec<&Violation>); 3] = [
        ("votes_only_once", r.votes_only_once.iter().collect()),
        (
            "preferred_round",
            r.preferred_round
                .iter()
                .filter_map(|f| match f {
                    PreferredRoundFinding::Violation(v) => Some(v),
                    PreferredRoundFinding::Injectivity(_) => None,
                })
                .collect(),
        ),
        ("complete", r.complete.iter().collect()),
    ];
    for (name, vs) in rule_sections {
        if !vs.is_empty() {
            let _ = writeln!(out, "\n[{name}]");
            for v in vs {
                violation(&mut out, v);
            }
        }
    }
    if let Err(RoundUniquenessError::Conflict { first, second }) = &r.round_uniqueness {
        let _ = writeln!(out, "\n[certified_round_uniqueness]");
        let _ = writeln!(out, "round={} first={} second={}", first.round, first.cert_block_id.to_hex(), second.cert_block_id.to_hex());
    }
    if let (Some(inj), false) = (&r.injectivity, matches!(r.verdict, AuditVerdict::InjectivityFailure(_))) {
        out.push_str("\n[injectivity]\n");
        injectivity(&mut out, inj);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::auditor::{audit, Provenance, RecordPool};
    use crate::fixtures::Fig1;
    use crate::quorum::HonestyMap;
    use crate::types::{HashMode, Member};

    #[test]
    fn full_fig1_tree_reports_preferred_round() {
        let fig = Fig1::new();
        let recs = fig.store.iter().map(|(_, r)| (r.clone(), Provenance { sender: Member(0), step: 0 }));
        let pool = RecordPool::with_qc_votes_as_sent(fig.cfg.clone(), HashMode::Strong, recs);
        let text = render_report(&audit(&pool, &HonestyMap::all_honest(4)));
        assert!(text.starts_with("verdict=rule_violation\n"));
        assert!(text.contains("\n[rule_violation]\nmember=0 rule=PreferredRound round=5 "));
    }

    #[test]
    fn safe_report_golden() {
        let fig = Fig1::new();
        // The main branch only: the full tree breaks the preferred-round rule.
        let chain = fig.store.record_chain(fig.qid(5)).unwrap();
        let recs = chain.records().iter().map(|r| (r.clone(), Provenance { sender: Member(0), step: 0 }));
        let pool = RecordPool::with_qc_votes_as_sent(fig.cfg.clone(), HashMode::Strong, recs);
        let text = render_report(&audit(&pool, &HonestyMap::all_honest(4)));
        assert_eq!(
            text,
            "verdict=safe\n\
             check=commits_do_not_conflict result=safe\n\
             check=votes_only_once violations=0\n\
             check=preferred_round findings=0\n\
             check=complete violations=0\n\
             check=certified_round_uniqueness result=ok\n\
             check=injectivity result=none\n"
        );
    }
}
