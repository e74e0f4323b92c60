// Copyright (c) The bft-kernel Contributors
// SPDX-License-Identifier: Apache-2.0

//! Command implementations behind the `bftk` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bft_kernel::quorum::BftCheckError;
use bft_kernel::{
    check_bft_assumption, parse_vote_log, render_report, render_vote_log, run_scenario, verify_commit_certificate,
    AuditVerdict, CertError, CommitCertificate, EpochConfig, Scenario, SelfSigned, VoteEvidence,
};
use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "bftk", version, about = "Safety kernel for chained BFT consensus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a scenario, write its trace and audit report.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        report: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Directory for one certificate per commit plus the sent-vote log.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Check a commit certificate against an epoch configuration.
    VerifyCommit {
        #[arg(long)]
        cert: PathBuf,
        /// Scenario-format file; only the quorum and hashing keys matter.
        #[arg(long)]
        config: PathBuf,
        /// Sent-vote log to check votes against. Without it every vote counts as sent.
        #[arg(long)]
        votes: Option<PathBuf>,
    },
    /// Exhaustively check that any two quorums share an honest member.
    CheckBft {
        #[arg(long)]
        n: usize,
        #[arg(long, conflicts_with = "powers")]
        f: Option<u64>,
        /// Comma-separated voting power per member; selects the weighted model.
        #[arg(long, value_delimiter = ',')]
        powers: Option<Vec<u64>>,
        #[arg(long, requires = "powers")]
        byz_power: Option<u64>,
    },
}

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;

/// Exit code for a run verdict.
pub fn verdict_exit_code(v: &AuditVerdict) -> u8 {
    match v {
        AuditVerdict::Safe => 0,
        AuditVerdict::ConflictingCommits(..) => 2,
        AuditVerdict::InjectivityFailure(_) => 3,
        AuditVerdict::RuleViolation(_) => 4,
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    Scenario::parse(&read(path)?).with_context(|| format!("in {}", path.display()))
}

/// Options for `run`.
#[derive(Clone, Debug)]
pub struct RunArgs {
    pub scenario: PathBuf,
    pub trace: PathBuf,
    pub report: PathBuf,
    pub seed: Option<u64>,
    pub export: Option<PathBuf>,
}

fn write(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn cmd_run(args: &RunArgs) -> Result<u8> {
    let mut sc = load_scenario(&args.scenario)?;
    if let Some(seed) = args.seed {
        sc.seed = seed;
    }
    let out = run_scenario(&sc)?;
    write(&args.trace, &out.trace)?;
    write(&args.report, &render_report(&out.report))?;
    if let Some(dir) = &args.export {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write(&dir.join("votes.log"), &render_vote_log(out.pool.sent_votes()))?;
        for cr in out.pool.commits() {
            let name = format!("commit-{}-{}.cert", cr.committed.round, cr.committed.id.short());
            write(&dir.join(name), &CommitCertificate::from_commit(&cr).to_text())?;
        }
    }
    Ok(verdict_exit_code(out.verdict()))
}

/// One-line description of a rejection: the error name, then its position and clause.
pub fn describe_cert_error(e: &CertError) -> String {
    match e {
        CertError::BadLink(pos, clause) => format!("BadLink position={pos} clause={}", clause.name()),
        CertError::BadQC(pos, reason) => format!("BadQC position={pos} reason={}", reason.name()),
        CertError::BadBlockId(pos) => format!("BadBlockId position={pos}"),
        other => other.name().to_string(),
    }
}

pub fn cmd_verify_commit(cert: &Path, config: &Path, votes: Option<&Path>, out: &mut dyn Write) -> Result<u8> {
    let sc = load_scenario(config)?;
    let cert = CommitCertificate::parse(&read(cert)?).with_context(|| format!("in {}", cert.display()))?;
    let evidence: Box<dyn VoteEvidence> = match votes {
        Some(path) => Box::new(parse_vote_log(&read(path)?).with_context(|| format!("in {}", path.display()))?),
        None => Box::new(SelfSigned),
    };
    match verify_commit_certificate(&cert, &sc.cfg, sc.hash_mode, evidence.as_ref()) {
        Ok(id) => {
            writeln!(out, "{}", id.to_hex())?;
            Ok(0)
        }
        Err(e) => {
            writeln!(out, "{}", describe_cert_error(&e))?;
            Ok(2)
        }
    }
}

pub fn cmd_check_bft(
    n: usize,
    f: Option<u64>,
    powers: Option<Vec<u64>>,
    byz_power: Option<u64>,
    out: &mut dyn Write,
) -> Result<u8> {
    let cfg = match powers {
        Some(p) => {
            if p.len() != n {
                bail!("--powers has {} entries but --n is {n}", p.len());
            }
            let total: u64 = p.iter().sum();
            EpochConfig::weighted(0, p, byz_power.unwrap_or(total.saturating_sub(1) / 3))?
        }
        None => EpochConfig::count(0, n, f.unwrap_or((n.saturating_sub(1) / 3) as u64))?,
    };
    match check_bft_assumption(&cfg) {
        Ok(()) => {
            writeln!(out, "ok n={n} model={} budget={}", cfg.model(), cfg.byzantine_budget())?;
            Ok(0)
        }
        Err(BftCheckError::Counterexample(report)) => {
            writeln!(out, "{report}")?;
            Ok(2)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> Result<u8> {
    match cli.command {
        Command::Run { scenario, trace, report, seed, export } => {
            cmd_run(&RunArgs { scenario, trace, report, seed, export })
        }
        Command::VerifyCommit { cert, config, votes } => cmd_verify_commit(&cert, &config, votes.as_deref(), out),
        Command::CheckBft { n, f, powers, byz_power } => cmd_check_bft(n, f, powers, byz_power, out),
    }
}
