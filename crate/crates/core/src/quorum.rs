// Copyright (c) The bft-kernel Contributors
// SPDX-License-Identifier: Apache-2.0

//! Epoch configuration and quorum predicates.
//!
//! Two quorum models are supported: a count model where a quorum is strictly
//! more than `2n/3` distinct members, and a weighted model where a quorum holds
//! strictly more than two thirds of the total voting power. Both are evaluated in
//! integer arithmetic, and with uniform power 1 they accept exactly the same sets.

use std::fmt;

use thiserror::Error;

use crate::types::Member;

/// Largest epoch for which the intersection assumption is checked exhaustively.
pub const MAX_EXHAUSTIVE_MEMBERS: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum QuorumModel {
    CountTwoThirds,
    WeightedTwoThirds,
}

impl fmt::Display for QuorumModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QuorumModel::CountTwoThirds => "count",
            QuorumModel::WeightedTwoThirds => "weighted",
        })
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum ConfigError {
    #[error("epoch must have at least one member")]
    Empty,
    #[error("n > 3f violated: n={n}, f={f}")]
    TooManyFaulty { n: usize, f: u64 },
    #[error("total power > 3 * byzantine power violated: total={total}, byzantine={byz}")]
    TooMuchByzantinePower { total: u64, byz: u64 },
    #[error("member {0} has zero voting power")]
    ZeroPower(usize),
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum QuorumError {
    #[error("member {0} out of range")]
    MemberOutOfRange(Member),
    #[error("member {0} listed twice")]
    DuplicateMember(Member),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct EpochConfig {
    pub epoch_id: u64,
    voting_power: Vec<u64>,
    model: QuorumModel,
    /// `f` in the count model, maximum byzantine power in the weighted model.
    byzantine_budget: u64,
}

impl EpochConfig {
    /// Count model with uniform power: requires `n > 3f`.
    pub fn count(epoch_id: u64, n: usize, f: u64) -> Result<EpochConfig, ConfigError> {
        let cfg = EpochConfig::new_unchecked(epoch_id, vec![1; n], QuorumModel::CountTwoThirds, f);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Weighted model: requires `total > 3 * byz_power` and positive powers.
    pub fn weighted(epoch_id: u64, powers: Vec<u64>, byz_power: u64) -> Result<EpochConfig, ConfigError> {
        let cfg = EpochConfig::new_unchecked(epoch_id, powers, QuorumModel::WeightedTwoThirds, byz_power);
        cfg.validate()?;
        Ok(cfg)
    }

    /// Skips invariant checks. Only meant for exercising the intersection checker
    /// on configurations that are known to be broken.
    pub fn new_unchecked(epoch_id: u64, voting_power: Vec<u64>, model: QuorumModel, byzantine_budget: u64) -> Self {
        EpochConfig { epoch_id, voting_power, model, byzantine_budget }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.voting_power.is_empty() {
            return Err(ConfigError::Empty);
        }
        if let Some(i) = self.voting_power.iter().position(|&p| p == 0) {
            return Err(ConfigError::ZeroPower(i));
        }
        match self.model {
            QuorumModel::CountTwoThirds => {
                let n = self.authors_n();
                if (n as u128) <= 3 * self.byzantine_budget as u128 {
                    return Err(ConfigError::TooManyFaulty { n, f: self.byzantine_budget });
                }
            }
            QuorumModel::WeightedTwoThirds => {
                let total = self.total_power();
                if total as u128 <= 3 * self.byzantine_budget as u128 {
                    return Err(ConfigError::TooMuchByzantinePower { total, byz: self.byzantine_budget });
                }
            }
        }
        Ok(())
    }

    pub fn authors_n(&self) -> usize {
        self.voting_power.len()
    }

    pub fn model(&self) -> QuorumModel {
        self.model
    }

    pub fn byzantine_budget(&self) -> u64 {
        self.byzantine_budget
    }

    pub fn voting_power(&self) -> &[u64] {
        &self.voting_power
    }

    pub fn power(&self, m: Member) -> u64 {
        self.voting_power[m.0]
    }

    pub fn total_power(&self) -> u64 {
        self.voting_power.iter().sum()
    }

    pub fn members(&self) -> impl Iterator<Item = Member> {
        (0..self.authors_n()).map(Member)
    }

    /// Smallest member count forming a quorum in the count model: `⌊2n/3⌋ + 1`.
    pub fn count_threshold(&self) -> usize {
        2 * self.authors_n() / 3 + 1
    }

    pub fn is_quorum(&self, members: &[Member]) -> Result<bool, QuorumError> {
        let mut seen = vec![false; self.authors_n()];
        for &m in members {
            let slot = seen.get_mut(m.0).ok_or(QuorumError::MemberOutOfRange(m))?;
            if *slot {
                return Err(QuorumError::DuplicateMember(m));
            }
            *slot = true;
        }
        Ok(self.quorum_by_count_and_power(members.len(), members.iter().map(|&m| self.power(m)).sum()))
    }

    fn quorum_by_count_and_power(&self, count: usize, power: u64) -> bool {
        match self.model {
            QuorumModel::CountTwoThirds => 3 * count > 2 * self.authors_n(),
            QuorumModel::WeightedTwoThirds => 3 * power as u128 > 2 * self.total_power() as u128,
        }
    }

    fn mask_power(&self, mask: u64) -> u64 {
        self.members().filter(|m| mask >> m.0 & 1 == 1).map(|m| self.power(m)).sum()
    }

    fn is_quorum_mask(&self, mask: u64) -> bool {
        self.quorum_by_count_and_power(mask.count_ones() as usize, self.mask_power(mask))
    }

    /// Whether a set of members may all be byzantine within the budget.
    fn byzantine_admissible(&self, mask: u64) -> bool {
        match self.model {
            QuorumModel::CountTwoThirds => mask.count_ones() as u64 <= self.byzantine_budget,
            QuorumModel::WeightedTwoThirds => self.mask_power(mask) <= self.byzantine_budget,
        }
    }
}

/// Simulation ground truth about who is byzantine. Never consulted by peer logic.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HonestyMap {
    byzantine: Vec<bool>,
}

impl HonestyMap {
    pub fn all_honest(n: usize) -> Self {
        HonestyMap { byzantine: vec![false; n] }
    }

    pub fn with_byzantine(n: usize, byzantine: &[Member]) -> Self {
        let mut map = HonestyMap::all_honest(n);
        for m in byzantine {
            map.byzantine[m.0] = true;
        }
        map
    }

    pub fn len(&self) -> usize {
        self.byzantine.len()
    }

    pub fn is_empty(&self) -> bool {
        self.byzantine.is_empty()
    }

    pub fn is_honest(&self, m: Member) -> bool {
        !self.byzantine.get(m.0).copied().unwrap_or(true)
    }

    pub fn byzantine_members(&self) -> Vec<Member> {
        (0..self.byzantine.len()).filter(|&i| self.byzantine[i]).map(Member).collect()
    }

    /// Whether the byzantine members fit in the epoch's byzantine budget.
    pub fn within_budget(&self, cfg: &EpochConfig) -> bool {
        let byz = self.byzantine_members();
        match cfg.model() {
            QuorumModel::CountTwoThirds => byz.len() as u64 <= cfg.byzantine_budget(),
            QuorumModel::WeightedTwoThirds => byz.iter().map(|&m| cfg.power(m)).sum::<u64>() <= cfg.byzantine_budget(),
        }
    }
}

/// Two quorums and a within-budget byzantine set covering their whole intersection.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CounterexampleReport {
    pub quorum1: Vec<Member>,
    pub quorum2: Vec<Member>,
    pub byzantine: Vec<Member>,
}

impl fmt::Display for CounterexampleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |ms: &[Member]| ms.iter().map(|m| m.0.to_string()).collect::<Vec<_>>().join(",");
        write!(f, "quorum1={} quorum2={} byzantine={}", list(&self.quorum1), list(&self.quorum2), list(&self.byzantine))
    }
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum BftCheckError {
    #[error("{0} members is too many for an exhaustive check (max {MAX_EXHAUSTIVE_MEMBERS})")]
    TooLargeForExhaustiveCheck(usize),
    #[error("quorum intersection assumption violated: {0}")]
    Counterexample(CounterexampleReport),
}

fn mask_members(mask: u64) -> Vec<Member> {
    (0..64).filter(|i| mask >> i & 1 == 1).map(Member).collect()
}

/// Verifies that any two quorums share a member outside every admissible byzantine set.
///
/// Only minimal quorums are enumerated: a pair of larger quorums contains a pair of
/// minimal ones, so their intersection is at least as large. Admissibility is
/// downward closed, so a pair fails iff its intersection is itself admissible.
pub fn check_bft_assumption(cfg: &EpochConfig) -> Result<(), BftCheckError> {
    let n = cfg.authors_n();
    if n > MAX_EXHAUSTIVE_MEMBERS {
        return Err(BftCheckError::TooLargeForExhaustiveCheck(n));
    }
    let minimal: Vec<u64> = (0u64..1 << n)
        .filter(|&s| cfg.is_quorum_mask(s))
        .filter(|&s| (0..n).filter(|i| s >> i & 1 == 1).all(|i| !cfg.is_quorum_mask(s & !(1 << i))))
        .collect();
    for (i, &q1) in minimal.iter().enumerate() {
        for &q2 in &minimal[i..] {
            let common = q1 & q2;
            if cfg.byzantine_admissible(common) {
                return Err(BftCheckError::Counterexample(CounterexampleReport {
                    quorum1: mask_members(q1),
                    quorum2: mask_members(q2),
                    byzantine: mask_members(common),
                }));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Debug, Error, PartialEq, Eq)]
pub enum IntersectionError {
    #[error("input set is not a quorum")]
    NotAQuorum,
    #[error(transparent)]
    Quorum(#[from] QuorumError),
}

/// Lowest-index honest member in `a ∩ b`, or `None` when the intersection is
/// entirely byzantine (the budget has been exceeded).
pub fn quorum_intersection_honest(
    a: &[Member],
    b: &[Member],
    honesty: &HonestyMap,
    cfg: &EpochConfig,
) -> Result<Option<Member>, IntersectionError> {
    if !cfg.is_quorum(a)? || !cfg.is_quorum(b)? {
        return Err(IntersectionError::NotAQuorum);
    }
    Ok(cfg.members().find(|m| a.contains(m) && b.contains(m) && honesty.is_honest(*m)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms(xs: &[usize]) -> Vec<Member> {
        xs.iter().copied().map(Member).collect()
    }

    /// Independent oracle: every subset pair and every byzantine subset.
    fn brute_force_bft(cfg: &EpochConfig) -> bool {
        let n = cfg.authors_n();
        let subsets: Vec<Vec<Member>> =
            (0u64..1 << n).map(|s| (0..n).filter(|i| s >> i & 1 == 1).map(Member).collect()).collect();
        let quorums: Vec<&Vec<Member>> = subsets.iter().filter(|s| cfg.is_quorum(s).unwrap()).collect();
        let byz_sets: Vec<&Vec<Member>> = subsets
            .iter()
            .filter(|s| match cfg.model() {
                QuorumModel::CountTwoThirds => s.len() as u64 <= cfg.byzantine_budget(),
                QuorumModel::WeightedTwoThirds => s.iter().map(|&m| cfg.power(m)).sum::<u64>() <= cfg.byzantine_budget(),
            })
            .collect();
        quorums.iter().all(|q1| {
            quorums.iter().all(|q2| {
                byz_sets.iter().all(|byz| q1.iter().any(|m| q2.contains(m) && !byz.contains(m)))
            })
        })
    }

    #[test]
    fn count_quorum_n4() {
        let cfg = EpochConfig::count(0, 4, 1).unwrap();
        assert_eq!(cfg.count_threshold(), 3);
        assert!(cfg.is_quorum(&ms(&[0, 1, 2])).unwrap());
        assert!(!cfg.is_quorum(&ms(&[0, 1])).unwrap());
        assert_eq!(cfg.is_quorum(&ms(&[0, 4])), Err(QuorumError::MemberOutOfRange(Member(4))));
        assert_eq!(cfg.is_quorum(&ms(&[0, 0, 1])), Err(QuorumError::DuplicateMember(Member(0))));
    }

    #[test]
    fn weighted_quorum_uniform() {
        let cfg = EpochConfig::weighted(0, vec![1, 1, 1, 1], 1).unwrap();
        assert!(cfg.is_quorum(&ms(&[0, 1, 2])).unwrap());
        assert!(!cfg.is_quorum(&ms(&[0, 1])).unwrap());
    }

    #[test]
    fn config_invariants() {
        assert_eq!(EpochConfig::count(0, 3, 1), Err(ConfigError::TooManyFaulty { n: 3, f: 1 }));
        assert_eq!(EpochConfig::count(0, 4, 2), Err(ConfigError::TooManyFaulty { n: 4, f: 2 }));
        assert!(EpochConfig::count(0, 4, 1).is_ok());
        assert_eq!(EpochConfig::weighted(0, vec![1, 0, 1, 1], 0), Err(ConfigError::ZeroPower(1)));
        assert_eq!(
            EpochConfig::weighted(0, vec![3, 1, 1, 1], 2),
            Err(ConfigError::TooMuchByzantinePower { total: 6, byz: 2 })
        );
        assert_eq!(EpochConfig::count(0, 0, 0), Err(ConfigError::Empty));
    }

    #[test]
    fn bft_assumption_n4_f1() {
        let cfg = EpochConfig::count(0, 4, 1).unwrap();
        assert!(brute_force_bft(&cfg));
        assert_eq!(check_bft_assumption(&cfg), Ok(()));
    }

    #[test]
    fn bft_assumption_weighted_3111() {
        // Golden: every >4-power subset contains member 0 (power 3 > budget 1).
        let cfg = EpochConfig::weighted(0, vec![3, 1, 1, 1], 1).unwrap();
        assert!(brute_force_bft(&cfg));
        assert_eq!(check_bft_assumption(&cfg), Ok(()));
    }

    #[test]
    fn bft_assumption_agrees_with_brute_force_on_broken_configs() {
        for n in 1..=6usize {
            for f in 0..=n as u64 {
                let cfg = EpochConfig::new_unchecked(0, vec![1; n], QuorumModel::CountTwoThirds, f);
                let ok = check_bft_assumption(&cfg).is_ok();
                assert_eq!(ok, brute_force_bft(&cfg), "n={n} f={f}");
                if n as u64 > 3 * f {
                    assert!(ok, "n={n} f={f}");
                }
            }
        }
        for powers in [vec![3, 1, 1, 1], vec![2, 2, 1], vec![5, 1, 1], vec![1, 2, 3, 4]] {
            for byz in 0..powers.iter().sum::<u64>() {
                let cfg = EpochConfig::new_unchecked(0, powers.clone(), QuorumModel::WeightedTwoThirds, byz);
                assert_eq!(check_bft_assumption(&cfg).is_ok(), brute_force_bft(&cfg), "{powers:?} byz={byz}");
            }
        }
    }

    #[test]
    fn bft_counterexample_is_a_witness() {
        let cfg = EpochConfig::new_unchecked(0, vec![1; 4], QuorumModel::CountTwoThirds, 2);
        let Err(BftCheckError::Counterexample(rep)) = check_bft_assumption(&cfg) else { panic!() };
        assert!(cfg.is_quorum(&rep.quorum1).unwrap());
        assert!(cfg.is_quorum(&rep.quorum2).unwrap());
        assert!(rep.byzantine.len() as u64 <= 2);
        assert!(rep.quorum1.iter().filter(|m| rep.quorum2.contains(m)).all(|m| rep.byzantine.contains(m)));
    }

    #[test]
    fn bft_capacity_limit() {
        let cfg = EpochConfig::count(0, 13, 4).unwrap();
        assert_eq!(check_bft_assumption(&cfg), Err(BftCheckError::TooLargeForExhaustiveCheck(13)));
        assert!(check_bft_assumption(&EpochConfig::count(0, 12, 3).unwrap()).is_ok());
    }

    #[test]
    fn quorum_monotone_and_models_agree() {
        for n in 1..=7usize {
            let count = EpochConfig::new_unchecked(0, vec![1; n], QuorumModel::CountTwoThirds, 0);
            let weighted = EpochConfig::new_unchecked(0, vec![1; n], QuorumModel::WeightedTwoThirds, 0);
            for s in 0u64..1 << n {
                let set = mask_members(s);
                let q = count.is_quorum(&set).unwrap();
                assert_eq!(q, weighted.is_quorum(&set).unwrap(), "n={n} s={s:b}");
                assert_eq!(q, set.len() >= count.count_threshold());
                for i in 0..n {
                    if q {
                        assert!(count.is_quorum(&mask_members(s | 1 << i)).unwrap());
                    }
                }
            }
        }
    }

    #[test]
    fn intersection_examples() {
        let cfg = EpochConfig::count(0, 4, 1).unwrap();
        let a = ms(&[0, 1, 2]);
        let b = ms(&[1, 2, 3]);
        let h = HonestyMap::with_byzantine(4, &ms(&[1]));
        assert_eq!(quorum_intersection_honest(&a, &b, &h, &cfg), Ok(Some(Member(2))));
        assert_eq!(quorum_intersection_honest(&a, &a, &HonestyMap::all_honest(4), &cfg), Ok(Some(Member(0))));
        let over = HonestyMap::with_byzantine(4, &ms(&[1, 2]));
        assert!(!over.within_budget(&cfg));
        assert_eq!(quorum_intersection_honest(&a, &b, &over, &cfg), Ok(None));
        assert_eq!(quorum_intersection_honest(&ms(&[0]), &b, &h, &cfg), Err(IntersectionError::NotAQuorum));
    }
}
