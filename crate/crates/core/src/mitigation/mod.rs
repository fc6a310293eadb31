//! Example-pool defenses applied before prompt composition.

mod correlation;
mod fair_spd;
mod subset;

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{Record, Schema, Subgroup};
use crate::error::{Error, Result};
use crate::stats::spd_records;

pub use correlation::{
    correlation_filter, correlation_profile, filter_count, CorrelationProfile, FeatureScore, Filtered,
    Standardizer, MI_BINS,
};
pub use fair_spd::{fair_spd_prune, PruneStop, Pruned};
pub use subset::{group_balance, random_subset, Balanced};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    #[default]
    None,
    RandomSubset,
    GroupBalanced,
    FairSpd,
    CorrelationFilter,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::None,
        Strategy::RandomSubset,
        Strategy::GroupBalanced,
        Strategy::FairSpd,
        Strategy::CorrelationFilter,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::None => "none",
            Strategy::RandomSubset => "random_subset",
            Strategy::GroupBalanced => "group_balanced",
            Strategy::FairSpd => "fair_spd",
            Strategy::CorrelationFilter => "correlation_filter",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Target size of the subset strategies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum KStar {
    Fixed(usize),
    /// Use the size Fair-SPD would keep, then discard its selection.
    #[default]
    MatchFairSpd,
}

const MATCH_FAIR_SPD: &str = "match-fair-spd";

impl Serialize for KStar {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            KStar::Fixed(k) => s.serialize_u64(*k as u64),
            KStar::MatchFairSpd => s.serialize_str(MATCH_FAIR_SPD),
        }
    }
}

impl<'de> Deserialize<'de> for KStar {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Count(u64),
            Mode(String),
        }
        match Repr::deserialize(d)? {
            Repr::Count(k) => Ok(KStar::Fixed(k as usize)),
            Repr::Mode(m) if m == MATCH_FAIR_SPD => Ok(KStar::MatchFairSpd),
            Repr::Mode(m) => Err(serde::de::Error::custom(format!(
                "k_star must be an integer or \"{MATCH_FAIR_SPD}\", got \"{m}\""
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MitigationConfig {
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_drop_fraction")]
    pub drop_fraction: f64,
    #[serde(default)]
    pub k_star: KStar,
}

fn default_epsilon() -> f64 {
    0.02
}
fn default_drop_fraction() -> f64 {
    0.10
}

impl Default for MitigationConfig {
    fn default() -> Self {
        MitigationConfig {
            strategy: Strategy::None,
            epsilon: default_epsilon(),
            drop_fraction: default_drop_fraction(),
            k_star: KStar::MatchFairSpd,
        }
    }
}

impl MitigationConfig {
    pub fn with_strategy(strategy: Strategy) -> Self {
        MitigationConfig {
            strategy,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Config(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        if !(0.0..1.0).contains(&self.drop_fraction) {
            return Err(Error::Config(format!("drop_fraction {} outside [0, 1)", self.drop_fraction)));
        }
        Ok(())
    }
}

/// What a strategy did to a pool.
#[derive(Clone, Debug, PartialEq)]
pub struct Mitigated {
    pub strategy: Strategy,
    /// Surviving indices, ascending.
    pub kept: Vec<usize>,
    /// Dropped indices, ascending.
    pub removed: Vec<usize>,
    /// Set when the strategy could not meet its contract.
    pub flag: Option<String>,
    /// SPD of the surviving pool, when both groups survive.
    pub in_context_spd: Option<f64>,
    pub k_star: Option<usize>,
}

impl Mitigated {
    pub fn select(&self, pool: &[Record]) -> Vec<Record> {
        self.kept.iter().map(|&i| pool[i].clone()).collect()
    }
}

fn match_size(cfg: &MitigationConfig, pool: &[Record], sub: &Subgroup) -> Result<usize> {
    match cfg.k_star {
        KStar::Fixed(k) => Ok(k),
        KStar::MatchFairSpd => Ok(fair_spd_prune(pool, sub, cfg.epsilon)?.kept.len()),
    }
}

/// Run the configured strategy on `pool`.
pub fn mitigate(
    cfg: &MitigationConfig,
    pool: &[Record],
    schema: &Schema,
    sub: &Subgroup,
    seed: u64,
) -> Result<Mitigated> {
    cfg.validate()?;
    let n = pool.len();
    let (kept, flag, k_star) = match cfg.strategy {
        Strategy::None => ((0..n).collect(), None, None),
        Strategy::FairSpd => {
            let p = fair_spd_prune(pool, sub, cfg.epsilon)?;
            let flag = p.degenerate().then(|| format!("degenerate: {:?}", p.stop).to_lowercase());
            (p.kept, flag, None)
        }
        Strategy::RandomSubset => {
            let k = match_size(cfg, pool, sub)?;
            let kept = random_subset(n, k, seed)?;
            let flag = kept.is_empty().then(|| "empty subset".to_string());
            (kept, flag, Some(k))
        }
        Strategy::GroupBalanced => {
            let k = match_size(cfg, pool, sub)?;
            let b = group_balance(pool, sub, k, seed)?;
            let flag = b.shortfall.then(|| "group shortfall".to_string());
            (b.kept, flag, Some(k))
        }
        Strategy::CorrelationFilter => {
            let f = correlation_filter(pool, schema, sub, cfg.drop_fraction, None)?;
            (f.kept, None, None)
        }
    };
    let mut alive = vec![false; n];
    for &i in &kept {
        alive[i] = true;
    }
    let removed = (0..n).filter(|&i| !alive[i]).collect();
    let survivors: Vec<Record> = kept.iter().map(|&i| pool[i].clone()).collect();
    Ok(Mitigated {
        strategy: cfg.strategy,
        kept,
        removed,
        flag,
        in_context_spd: spd_records(&survivors, sub).ok(),
        k_star,
    })
}
