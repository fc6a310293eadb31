use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Record, Subgroup};
use crate::error::{Error, Result};

use super::fairness::spd_records;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockStats {
    pub mean: f64,
    /// Population standard deviation across blocks.
    pub std: f64,
    pub values: Vec<f64>,
}

/// Evaluate `metric` on `n_blocks` contiguous blocks of `ds` in row order.
/// Remainder rows go to the last block. The first failing block aborts.
pub fn block_stats<F>(ds: &Dataset, metric: F, n_blocks: usize) -> Result<BlockStats>
where
    F: Fn(&[Record]) -> Result<f64>,
{
    if n_blocks == 0 {
        return Err(Error::InvalidArgument("block count must be positive".into()));
    }
    let n = ds.len();
    if n < n_blocks {
        return Err(Error::InvalidArgument(format!(
            "{n} rows cannot form {n_blocks} blocks"
        )));
    }
    let size = n / n_blocks;
    let recs = ds.records();
    let values = (0..n_blocks)
        .map(|b| {
            let lo = b * size;
            let hi = if b + 1 == n_blocks { n } else { lo + size };
            metric(&recs[lo..hi])
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, std) = mean_std(&values);
    Ok(BlockStats { mean, std, values })
}

/// [`block_stats`] with SPD as the metric.
pub fn block_spd(ds: &Dataset, sub: &Subgroup, n_blocks: usize) -> Result<BlockStats> {
    block_stats(ds, |r| spd_records(r, sub), n_blocks)
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}
