// Copyright (c) The bft-kernel Contributors
// SPDX-License-Identifier: Apache-2.0

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use bft_kernel::fixtures::random_store;
use bft_kernel::{
    block_in_chain, certified_round_uniqueness, check_bft_assumption, commits_do_not_conflict,
    cross_check_conflict_pair, find_injectivity_failure, render_vote_log, run_scenario, verify_commit_certificate,
    AuditVerdict, Behavior, CommitCertificate, EpochConfig, Explanation, HashMode, Member, Provenance, QuorumModel,
    Record, RecordPool, Scenario, Vote,
};
use bft_kernel_cli::{cmd_run, cmd_verify_commit, describe_cert_error, load_scenario, RunArgs};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn scenario(name: &str) -> Scenario {
    load_scenario(&scenario_path(name)).expect("committed scenario parses")
}

fn count_cfg(n: usize, f: u64) -> EpochConfig {
    EpochConfig::count(0, n, f).expect("valid config")
}

/// Certificates and sent votes of one honest run, kept for the certificate check.
struct Export {
    n: usize,
    certs: Vec<CommitCertificate>,
    sent: HashSet<Vote>,
}

fn a1(exports: &mut Vec<Export>) -> Outcome {
    let base = scenario("honest.scn");
    let (mut runs, mut commits) = (0, 0);
    for n in [4usize, 5, 7] {
        for seed in 0..100 {
            let mut sc = base.clone();
            sc.cfg = count_cfg(n, ((n - 1) / 3) as u64);
            sc.seed = seed;
            let out = run_scenario(&sc).map_err(|e| e.to_string())?;
            let r = &out.report;
            if !out.verdict().is_safe()
                || !r.votes_only_once.is_empty()
                || !r.preferred_round.is_empty()
                || !r.complete.is_empty()
                || !out.honest_prefix_consistent
            {
                return Err(format!("n={n} seed={seed} verdict={}", out.verdict().name()));
            }
            let certs: Vec<_> = out.pool.commits().iter().map(CommitCertificate::from_commit).collect();
            runs += 1;
            commits += certs.len();
            exports.push(Export { n, certs, sent: out.pool.sent_votes().clone() });
        }
    }
    if commits == 0 {
        return Err("no run committed anything".into());
    }
    Ok(format!("runs={runs} commits={commits}"))
}

fn a2() -> Outcome {
    let behaviors = [Behavior::Equivocate, Behavior::DoubleVote, Behavior::IgnorePreferredRound, Behavior::Silent];
    let mut runs = 0;
    for behavior in behaviors {
        for seed in 0..100 {
            let mut sc = scenario("honest.scn");
            sc.adversaries = [(Member((seed % 4) as usize), behavior)].into();
            sc.seed = seed;
            let out = run_scenario(&sc).map_err(|e| e.to_string())?;
            let r = &out.report;
            if !out.verdict().is_safe() || !r.votes_only_once.is_empty() || !r.preferred_round.is_empty() {
                return Err(format!("{behavior} seed={seed} verdict={}", out.verdict().name()));
            }
            runs += 1;
        }
    }
    Ok(format!("runs={runs}"))
}

fn a3(tmp: &Path) -> Outcome {
    let sc = scenario("over-budget-fork.scn");
    let out = run_scenario(&sc).map_err(|e| e.to_string())?;
    if !matches!(out.verdict(), AuditVerdict::ConflictingCommits(..)) {
        return Err(format!("verdict={}", out.verdict().name()));
    }
    let explanation = cross_check_conflict_pair(out.verdict(), &out.pool, &sc.honesty(), &sc.cfg)
        .map_err(|e| e.to_string())?;
    if !matches!(explanation, Explanation::NoHonestIntersection { .. }) {
        return Err(format!("explanation={explanation}"));
    }
    let args = RunArgs {
        scenario: scenario_path("over-budget-fork.scn"),
        trace: tmp.join("a3.trace"),
        report: tmp.join("a3.report"),
        seed: None,
        export: None,
    };
    let code = cmd_run(&args).map_err(|e| format!("{e:#}"))?;
    let report = fs::read_to_string(&args.report).map_err(|e| e.to_string())?;
    if code != 2 || !report.contains(&format!("explanation={explanation}")) {
        return Err(format!("cli exit={code}"));
    }
    Ok(format!("seed={} exit={code} explanation=\"{explanation}\"", sc.seed))
}

fn a4() -> Outcome {
    let mut configs = 0;
    let mut subsets = 0;
    for n in 1..=7usize {
        for f in (0..).take_while(|f| n > 3 * f) {
            check_bft_assumption(&count_cfg(n, f as u64)).map_err(|e| format!("n={n} f={f}: {e}"))?;
            configs += 1;
        }
        let count = count_cfg(n, ((n - 1) / 3) as u64);
        let weighted = EpochConfig::weighted(0, vec![1; n], ((n - 1) / 3) as u64).map_err(|e| e.to_string())?;
        if count.model() != QuorumModel::CountTwoThirds || weighted.model() != QuorumModel::WeightedTwoThirds {
            return Err("model mismatch".into());
        }
        for mask in 0u32..1 << n {
            let set: Vec<Member> = (0..n).filter(|i| mask >> i & 1 == 1).map(Member).collect();
            if count.is_quorum(&set) != weighted.is_quorum(&set) {
                return Err(format!("n={n} subset={set:?} models disagree"));
            }
            subsets += 1;
        }
    }
    Ok(format!("configs={configs} subsets={subsets}"))
}

fn a5() -> Outcome {
    let base = scenario("weak-hash-equivocation.scn");
    let mut found = 0;
    let mut min_distinct = usize::MAX;
    for seed in 0..10 {
        let mut sc = base.clone();
        sc.seed = base.seed + seed;
        let out = run_scenario(&sc).map_err(|e| e.to_string())?;
        let distinct: HashSet<_> = out.pool.blocks().map(|(b, _)| b.clone()).collect();
        min_distinct = min_distinct.min(distinct.len());
        if distinct.len() < 500 {
            return Err(format!("seed={} only {} distinct blocks", sc.seed, distinct.len()));
        }
        let Some(inj) = find_injectivity_failure(&out.pool) else {
            return Err(format!("seed={} no collision found", sc.seed));
        };
        if inj.first.id != inj.second.id || !inj.first.content_differs(&inj.second) {
            return Err(format!("seed={} bad collision evidence", sc.seed));
        }
        if matches!(commits_do_not_conflict(&out.pool), AuditVerdict::ConflictingCommits(..)) {
            return Err(format!("seed={} conflict reported despite a collision", sc.seed));
        }
        found += 1;
    }
    Ok(format!("runs={found} min_distinct_blocks={min_distinct}"))
}

fn a6(exports: &[Export], tmp: &Path) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut certs, mut mutants, mut equivalent) = (0usize, 0usize, 0usize);
    let mut errors: BTreeMap<String, usize> = BTreeMap::new();
    let mut out = Vec::new();
    for (run, ex) in exports.iter().enumerate() {
        let sc = Scenario::new(count_cfg(ex.n, ((ex.n - 1) / 3) as u64));
        let config = tmp.join(format!("a6-{run}.scn"));
        let votes = tmp.join(format!("a6-{run}.votes"));
        let cert_path = tmp.join("a6.cert");
        fs::write(&config, sc.to_text()).map_err(|e| e.to_string())?;
        fs::write(&votes, render_vote_log(&ex.sent)).map_err(|e| e.to_string())?;
        for cert in &ex.certs {
            fs::write(&cert_path, cert.to_text()).map_err(|e| e.to_string())?;
            out.clear();
            let code = cmd_verify_commit(&cert_path, &config, Some(&votes), &mut out).map_err(|e| format!("{e:#}"))?;
            if code != 0 {
                return Err(format!("run {run}: exported certificate rejected: {}", String::from_utf8_lossy(&out)));
            }
            certs += 1;
            for _ in 0..200 {
                let (m, kind) =
                    support::mutate(cert, ex.n, sc.cfg.count_threshold(), &ex.sent, &mut rng, &mut equivalent);
                match verify_commit_certificate(&m, &sc.cfg, HashMode::Strong, &ex.sent) {
                    Ok(_) => return Err(format!("run {run}: {kind:?} mutant accepted")),
                    Err(e) => {
                        let name = describe_cert_error(&e);
                        let head = name.split(' ').next().unwrap_or_default().to_string();
                        *errors.entry(head).or_default() += 1;
                    }
                }
                mutants += 1;
            }
        }
        let _ = fs::remove_file(&config);
        let _ = fs::remove_file(&votes);
    }
    let by_error: Vec<String> = errors.iter().map(|(k, v)| format!("{k}:{v}")).collect();
    Ok(format!(
        "certificates={certs} mutants={mutants} redrawn_equivalent={equivalent} errors={}",
        by_error.join(",")
    ))
}

fn a7() -> Outcome {
    let mut records = 0;
    let (mut commits, mut round_conflicts) = (0, 0);
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 4 + (seed as usize % 4);
        let store = random_store(&mut rng, &count_cfg(n, ((n - 1) / 3) as u64), 200);
        records += store.len();
        for (id, _) in store.iter() {
            let chain = store.record_chain(id).map_err(|e| e.to_string())?;
            let paths = support::all_paths(&store, id);
            let expected = paths.iter().map(|p| support::path_commit(p)).collect::<HashSet<_>>();
            if expected.len() != 1 {
                return Err(format!("seed={seed}: paths to one record disagree on its commit"));
            }
            let got = store.detect_commit(id).map_err(|e| e.to_string())?.map(|c| c.committed);
            if !expected.contains(&got) {
                return Err(format!("seed={seed}: detect_commit disagrees at {id:?}"));
            }
            commits += usize::from(got.is_some());
            for (_, r) in store.iter() {
                if let Record::B(b) = r {
                    if block_in_chain(b, &chain) != support::path_has_block(chain.records(), b) {
                        return Err(format!("seed={seed}: block_in_chain disagrees"));
                    }
                }
            }
        }
        let recs = store.iter().map(|(_, r)| (r.clone(), Provenance { sender: Member(0), step: 0 }));
        let pool = RecordPool::with_qc_votes_as_sent(store.config().clone(), HashMode::Strong, recs);
        let brute = support::brute_round_conflict(&store);
        if certified_round_uniqueness(&pool).is_err() != brute {
            return Err(format!("seed={seed}: certified_round_uniqueness disagrees"));
        }
        round_conflicts += usize::from(brute);
    }
    Ok(format!("stores=50 records={records} commit_points={commits} stores_with_round_conflict={round_conflicts}"))
}

fn a8(tmp: &Path) -> Outcome {
    let mut traces = Vec::new();
    for i in 0..2 {
        let args = RunArgs {
            scenario: scenario_path("honest.scn"),
            trace: tmp.join(format!("a8-{i}.trace")),
            report: tmp.join(format!("a8-{i}.report")),
            seed: Some(42),
            export: None,
        };
        cmd_run(&args).map_err(|e| format!("{e:#}"))?;
        traces.push(fs::read(&args.trace).map_err(|e| e.to_string())?);
    }
    if traces[0] != traces[1] {
        return Err("traces differ".into());
    }
    Ok(format!("trace_bytes={}", traces[0].len()))
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temp dir");
    let mut exports = Vec::new();
    let mut failed = false;
    let mut report = |name: &str, limit: u64, f: &mut dyn FnMut() -> Outcome| {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let over = took > Duration::from_secs(limit);
        let line = match (&outcome, over) {
            (Ok(detail), false) => format!("{name} PASS {detail} time={:.1}s", took.as_secs_f64()),
            (Ok(detail), true) => format!("{name} FAIL over time limit {limit}s: {detail} time={:.1}s", took.as_secs_f64()),
            (Err(why), _) => format!("{name} FAIL {why} time={:.1}s", took.as_secs_f64()),
        };
        failed |= outcome.is_err() || over;
        println!("{line}");
    };
    report("A1", 60, &mut || a1(&mut exports));
    report("A2", 60, &mut a2);
    report("A3", 10, &mut || a3(tmp.path()));
    report("A4", 30, &mut a4);
    report("A5", 10, &mut a5);
    report("A6", 30, &mut || a6(&exports, tmp.path()));
    report("A7", 30, &mut a7);
    report("A8", 10, &mut || a8(tmp.path()));
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
