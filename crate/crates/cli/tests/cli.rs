// Copyright (c) The bft-kernel Contributors
// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bftk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bftk")).args(args).output().expect("binary runs")
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run(dir: &Path, name: &str, extra: &[&str]) -> Output {
    let (sc, trace, report) = (scenario(name), dir.join("trace"), dir.join("report"));
    let mut args = vec!["run", "--scenario", s(&sc), "--trace", s(&trace), "--report", s(&report)];
    args.extend_from_slice(extra);
    bftk(&args)
}

#[test]
fn run_honest_scenario_is_safe() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "honest.scn", &[]);
    assert_eq!(out.status.code(), Some(0));
    let report = fs::read_to_string(dir.path().join("report")).unwrap();
    assert!(report.starts_with("verdict=safe\n"));
    let trace = fs::read_to_string(dir.path().join("trace")).unwrap();
    assert!(trace.starts_with("# prng=chacha8 seed=42\n"));
    assert!(trace.ends_with('\n'));
}

#[test]
fn run_over_budget_scenario_reports_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "over-budget-fork.scn", &[]);
    assert_eq!(out.status.code(), Some(2));
    let report = fs::read_to_string(dir.path().join("report")).unwrap();
    assert!(report.starts_with(
        "verdict=conflicting_commits\nexplanation=no honest member in quorum intersection; byzantine budget exceeded\n"
    ));
    assert!(report.contains("\n[conflicting_commits]\ncommit1 "));
}

#[test]
fn run_weak_hash_scenario_finds_collision_but_stays_safe() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), "weak-hash-equivocation.scn", &[]);
    assert_eq!(out.status.code(), Some(0));
    let report = fs::read_to_string(dir.path().join("report")).unwrap();
    assert!(report.contains("check=injectivity result=found\n"));
}

#[test]
fn run_rejects_scenario_without_size() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.scn");
    fs::write(&bad, "f=1\n").unwrap();
    let out = bftk(&["run", "--scenario", s(&bad), "--trace", "t", "--report", "r"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing required key authors_n"));
}

#[test]
fn exported_certificates_verify_and_tampering_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let export = dir.path().join("export");
    assert_eq!(run(dir.path(), "honest.scn", &["--export", s(&export)]).status.code(), Some(0));
    let votes = export.join("votes.log");
    let config = scenario("honest.scn");
    let cert = fs::read_dir(&export)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "cert"))
        .min()
        .expect("at least one commit");
    let verify = |c: &Path| bftk(&["verify-commit", "--cert", s(c), "--config", s(&config), "--votes", s(&votes)]);

    let ok = verify(&cert);
    assert_eq!(ok.status.code(), Some(0));
    let text = fs::read_to_string(&cert).unwrap();
    let claim = text.lines().find_map(|l| l.strip_prefix("claim=")).unwrap();
    assert_eq!(stdout(&ok), format!("{claim}\n"));

    // Drop votes from the first QC until it falls below a quorum.
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let (head, votes_field) = lines[1].split_once("votes=").unwrap();
    let head = head.to_string();
    let mut vs: Vec<String> = votes_field.split(';').map(String::from).collect();
    let tampered = dir.path().join("tampered.cert");
    while vs.len() >= 3 {
        vs.pop();
        lines[1] = format!("{head}votes={}", vs.join(";"));
        fs::write(&tampered, lines.join("\n") + "\n").unwrap();
        if verify(&tampered).status.code() == Some(2) {
            break;
        }
    }
    let bad = verify(&tampered);
    assert_eq!(bad.status.code(), Some(2));
    assert_eq!(stdout(&bad), "BadQC position=1 reason=NotAQuorum\n");

    let truncated = dir.path().join("truncated.cert");
    let short: Vec<&str> = text.lines().skip(2).collect();
    fs::write(&truncated, short.join("\n") + "\n").unwrap();
    let out = verify(&truncated);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stdout(&out), "TooShort\n");
}

#[test]
fn check_bft_exit_codes() {
    let ok = bftk(&["check-bft", "--n", "4", "--f", "1"]);
    assert_eq!(ok.status.code(), Some(0));
    assert!(stdout(&ok).starts_with("ok n=4 "));
    assert_eq!(bftk(&["check-bft", "--n", "4", "--f", "2"]).status.code(), Some(1));
    assert_eq!(bftk(&["check-bft", "--n", "7", "--f", "2"]).status.code(), Some(0));
    assert_eq!(bftk(&["check-bft", "--n", "4", "--powers", "1,1,1,1", "--byz-power", "1"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(bftk(&["run"]).status.code(), Some(1));
    assert_eq!(bftk(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(bftk(&["--help"]).status.code(), Some(0));
}
