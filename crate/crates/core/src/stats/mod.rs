//! Distributional divergences, fairness metrics and small estimators.

mod blocks;
mod distribution;
mod divergence;
mod fairness;
mod regression;

pub use blocks::{block_spd, block_stats, mean_std, BlockStats};
pub use distribution::{
    equal_width_edges, CategoricalDistribution, Distribution, Histogram, DEFAULT_BINS,
    JSD_SMOOTHING,
};
pub use divergence::{drift_score, jsd, jsd_mass, tvc, tvd, tvd_mass, DriftReport};
pub use fairness::{
    eo, eod, expected_statistic, spd, spd_records, BiasStatistic, FnStatistic, GroupCounts,
};
pub use regression::{ols_fit, RegressionFit};

pub(crate) use distribution::bin_index;
