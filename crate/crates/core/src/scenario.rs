// Copyright (c) The bft-kernel Contributors
// SPDX-License-Identifier: Apache-2.0

//! Plain-text `key=value` scenario files.
//!
//! ```text
//! authors_n=4
//! f=1
//! byzantine=2,3
//! adversary=DoubleVote,DoubleVote
//! steps=600
//! drop_prob=0.1
//! max_delay=5
//! seed=5
//! ```
//!
//! Only `authors_n` is required. Unknown and repeated keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::quorum::{ConfigError, EpochConfig, QuorumModel};
use crate::sim::{Behavior, Scenario, ScenarioError};
use crate::types::{HashMode, Member};

const KEYS: [&str; 15] = [
    "epoch_id",
    "authors_n",
    "voting_power",
    "quorum_model",
    "f",
    "byz_power",
    "byzantine",
    "adversary",
    "steps",
    "drop_prob",
    "dup_prob",
    "max_delay",
    "seed",
    "hash_mode",
    "equivocation_variants",
];

#[derive(Clone, Debug, Error, PartialEq)]
pub enum ScenarioFileError {
    #[error("line {0}: expected key=value")]
    Syntax(usize),
    #[error("unknown key {0:?}")]
    UnknownKey(String),
    #[error("key {0:?} given twice")]
    DuplicateKey(String),
    #[error("missing required key {0}")]
    MissingKey(&'static str),
    #[error("bad value for {key}: {msg}")]
    BadValue { key: &'static str, msg: String },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

struct Fields<'a>(BTreeMap<&'a str, &'a str>);

impl<'a> Fields<'a> {
    fn get<T: FromStr>(&self, key: &'static str) -> Result<Option<T>, ScenarioFileError>
    where
        T::Err: std::fmt::Display,
    {
        self.0
            .get(key)
            .map(|v| v.parse::<T>().map_err(|e| ScenarioFileError::BadValue { key, msg: e.to_string() }))
            .transpose()
    }

    fn list<T: FromStr>(&self, key: &'static str) -> Result<Option<Vec<T>>, ScenarioFileError>
    where
        T::Err: std::fmt::Display,
    {
        let Some(v) = self.0.get(key) else { return Ok(None) };
        if v.is_empty() {
            return Ok(Some(Vec::new()));
        }
        v.split(',')
            .map(|x| x.trim().parse::<T>().map_err(|e| ScenarioFileError::BadValue { key, msg: e.to_string() }))
            .collect::<Result<Vec<T>, _>>()
            .map(Some)
    }
}

fn bad(key: &'static str, msg: impl Into<String>) -> ScenarioFileError {
    ScenarioFileError::BadValue { key, msg: msg.into() }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Scenario, ScenarioFileError> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ScenarioFileError::Syntax(i + 1))?;
            let (k, v) = (k.trim(), v.trim());
            if !KEYS.contains(&k) {
                return Err(ScenarioFileError::UnknownKey(k.to_string()));
            }
            if map.insert(k, v).is_some() {
                return Err(ScenarioFileError::DuplicateKey(k.to_string()));
            }
        }
        let fields = Fields(map);
        let n: usize = fields.get("authors_n")?.ok_or(ScenarioFileError::MissingKey("authors_n"))?;
        let epoch: u64 = fields.get("epoch_id")?.unwrap_or(0);
        let powers: Option<Vec<u64>> = fields.list("voting_power")?;
        let model = match fields.0.get("quorum_model").copied() {
            None | Some("count") => QuorumModel::CountTwoThirds,
            Some("weighted") => QuorumModel::WeightedTwoThirds,
            Some(other) => return Err(bad("quorum_model", format!("expected count or weighted, got {other:?}"))),
        };
        let cfg = match model {
            QuorumModel::CountTwoThirds => {
                if fields.0.contains_key("byz_power") {
                    return Err(bad("byz_power", "only valid with quorum_model=weighted"));
                }
                if powers.as_ref().is_some_and(|p| p.len() != n || p.iter().any(|&x| x != 1)) {
                    return Err(bad("voting_power", "count model needs uniform power 1 for every member"));
                }
                let f = fields.get("f")?.unwrap_or((n.saturating_sub(1) / 3) as u64);
                EpochConfig::count(epoch, n, f)?
            }
            QuorumModel::WeightedTwoThirds => {
                if fields.0.contains_key("f") {
                    return Err(bad("f", "use byz_power with quorum_model=weighted"));
                }
                let powers = powers.unwrap_or_else(|| vec![1; n]);
                if powers.len() != n {
                    return Err(bad("voting_power", format!("expected {n} entries, got {}", powers.len())));
                }
                let total: u64 = powers.iter().sum();
                let byz = fields.get("byz_power")?.unwrap_or(total.saturating_sub(1) / 3);
                EpochConfig::weighted(epoch, powers, byz)?
            }
        };
        let byzantine: Vec<usize> = fields.list("byzantine")?.unwrap_or_default();
        let behaviors: Vec<Behavior> = fields.list("adversary")?.unwrap_or_default();
        if byzantine.len() != behaviors.len() {
            return Err(bad(
                "adversary",
                format!("{} behaviors for {} byzantine members", behaviors.len(), byzantine.len()),
            ));
        }
        let mut adversaries = BTreeMap::new();
        for (m, b) in byzantine.into_iter().zip(behaviors) {
            if adversaries.insert(Member(m), b).is_some() {
                return Err(bad("byzantine", format!("member {m} listed twice")));
            }
        }
        let mut sc = Scenario::new(cfg);
        sc.adversaries = adversaries;
        sc.steps = fields.get("steps")?.unwrap_or(sc.steps);
        sc.drop_prob = fields.get("drop_prob")?.unwrap_or(0.0);
        sc.dup_prob = fields.get("dup_prob")?.unwrap_or(0.0);
        sc.max_delay = fields.get("max_delay")?.unwrap_or(0);
        sc.seed = fields.get("seed")?.unwrap_or(0);
        sc.hash_mode = fields.get::<HashMode>("hash_mode")?.unwrap_or(HashMode::Strong);
        sc.equivocation_variants = fields.get("equivocation_variants")?.unwrap_or(0);
        sc.validate()?;
        Ok(sc)
    }

    /// Renders every key, so `parse(to_text())` round-trips.
    pub fn to_text(&self) -> String {
        let join = |xs: Vec<String>| xs.join(",");
        let mut out = String::new();
        let _ = writeln!(out, "epoch_id={}", self.cfg.epoch_id);
        let _ = writeln!(out, "authors_n={}", self.cfg.authors_n());
        match self.cfg.model() {
            QuorumModel::CountTwoThirds => {
                let _ = writeln!(out, "quorum_model=count");
                let _ = writeln!(out, "f={}", self.cfg.byzantine_budget());
            }
            QuorumModel::WeightedTwoThirds => {
                let _ = writeln!(out, "quorum_model=weighted");
                let _ = writeln!(out, "voting_power={}", join(self.cfg.voting_power().iter().map(u64::to_string).collect()));
                let _ = writeln!(out, "byz_power={}", self.cfg.byzantine_budget());
            }
        }
        let _ = writeln!(out, "byzantine={}", join(self.adversaries.keys().map(|m| m.0.to_string()).collect()));
        let _ = writeln!(out, "adversary={}", join(self.adversaries.values().map(Behavior::to_string).collect()));
        let _ = writeln!(out, "steps={}", self.steps);
        let _ = writeln!(out, "drop_prob={}", self.drop_prob);
        let _ = writeln!(out, "dup_prob={}", self.dup_prob);
        let _ = writeln!(out, "max_delay={}", self.max_delay);
        let _ = writeln!(out, "seed={}", self.seed);
        let _ = writeln!(out, "hash_mode={}", self.hash_mode);
        let _ = writeln!(out, "equivocation_variants={}", self.equivocation_variants);
        out
    }
}
