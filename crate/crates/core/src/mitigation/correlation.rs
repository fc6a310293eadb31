use serde::{Deserialize, Serialize};

use crate::data::{Record, Schema, Subgroup, Value};
use crate::error::{Error, Result};

/// Quantile bins used to discretize numerical columns for mutual information.
pub const MI_BINS: usize = 10;

/// Dependence of one feature on the protected indicator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureScore {
    pub feature: String,
    pub index: usize,
    pub pearson: f64,
    pub spearman: f64,
    /// Mutual information scaled by its attainable maximum, in `[0, 1]`.
    pub mutual_info: f64,
    pub rho: f64,
}

/// How `z_ij` is computed for a feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Standardizer {
    Numeric { mean: f64, std: f64 },
    /// Indicator of the category with the strongest dependence.
    Indicator { category: u32, mean: f64, std: f64 },
}

impl Standardizer {
    pub fn z(&self, v: Value) -> f64 {
        let (x, mean, std) = match (self, v) {
            (Standardizer::Numeric { mean, std }, Value::Number(x)) => (x, *mean, *std),
            (Standardizer::Indicator { category, mean, std }, Value::Category(c)) => {
                ((c == *category) as u8 as f64, *mean, *std)
            }
            _ => panic!("value kind does not match standardizer"),
        };
        if std > 0.0 {
            (x - mean) / std
        } else {
            0.0
        }
    }
}

/// Per-feature `rho_j`, standardization parameters and per-example scores
/// `s_i = sum_j rho_j * |z_ij|`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationProfile {
    pub features: Vec<FeatureScore>,
    pub standardizers: Vec<Standardizer>,
    pub scores: Vec<f64>,
}

impl CorrelationProfile {
    /// Recompute `s` for any record from the stored parameters.
    pub fn score(&self, r: &Record) -> f64 {
        self.features
            .iter()
            .zip(&self.standardizers)
            .map(|(f, st)| f.rho * st.z(r.values[f.index]).abs())
            .sum()
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, v.sqrt())
}

pub(crate) fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let (mx, sx) = mean_std(x);
    let (my, sy) = mean_std(y);
    if sx == 0.0 || sy == 0.0 {
        return 0.0;
    }
    let cov = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / x.len() as f64;
    (cov / (sx * sy)).clamp(-1.0, 1.0)
}

/// 1-based ranks with ties sharing their average rank.
pub(crate) fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && x[order[j + 1]] == x[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = r;
        }
        i = j + 1;
    }
    ranks
}

pub(crate) fn spearman(x: &[f64], y: &[f64]) -> f64 {
    pearson(&average_ranks(x), &average_ranks(y))
}

/// Bin ids from `bins` quantile cut points; equal values share a bin.
pub(crate) fn quantile_bins(x: &[f64], bins: usize) -> Vec<usize> {
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut edges: Vec<f64> = (1..bins).map(|b| sorted[b * n / bins]).collect();
    edges.dedup();
    x.iter().map(|v| edges.partition_point(|e| e <= v)).collect()
}

fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

/// Plug-in mutual information between two discrete codings, divided by
/// `min(H(a), H(b))` so it spans `[0, 1]`. Zero when either side is constant.
pub(crate) fn mutual_information(a: &[usize], b: &[usize]) -> f64 {
    let na = a.iter().max().map_or(0, |m| m + 1);
    let nb = b.iter().max().map_or(0, |m| m + 1);
    let mut joint = vec![0.0; na * nb];
    for (&i, &j) in a.iter().zip(b) {
        joint[i * nb + j] += 1.0;
    }
    let n = a.len() as f64;
    let pa: Vec<f64> = (0..na).map(|i| (0..nb).map(|j| joint[i * nb + j]).sum::<f64>() / n).collect();
    let pb: Vec<f64> = (0..nb).map(|j| (0..na).map(|i| joint[i * nb + j]).sum::<f64>() / n).collect();
    let mut mi = 0.0;
    for i in 0..na {
        for j in 0..nb {
            let p = joint[i * nb + j] / n;
            if p > 0.0 {
                mi += p * (p / (pa[i] * pb[j])).ln();
            }
        }
    }
    let cap = entropy(&pa).min(entropy(&pb));
    if cap <= 1e-12 {
        return 0.0;
    }
    (mi / cap).clamp(0.0, 1.0)
}

struct Column {
    feature: usize,
    category: Option<u32>,
    values: Vec<f64>,
    pearson: f64,
    spearman: f64,
    mi: f64,
}

/// Score every feature outside the protected attribute and the subgroup
/// definition against the unprivileged indicator.
pub fn correlation_profile(pool: &[Record], schema: &Schema, sub: &Subgroup) -> Result<CorrelationProfile> {
    if pool.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "correlation profile needs at least 3 examples, got {}",
            pool.len()
        )));
    }
    let ind: Vec<f64> = pool.iter().map(|r| sub.is_unprivileged(r) as u8 as f64).collect();
    if ind.iter().all(|&v| v == ind[0]) {
        return Err(Error::Degenerate("protected indicator is constant over the pool".into()));
    }
    let ind_codes: Vec<usize> = ind.iter().map(|&v| v as usize).collect();
    let excluded: Vec<usize> = schema
        .protected_indices()
        .iter()
        .copied()
        .chain(sub.predicate.features())
        .collect();

    let mut columns = Vec::new();
    for (j, spec) in schema.features().iter().enumerate() {
        if excluded.contains(&j) {
            continue;
        }
        if spec.is_categorical() {
            for c in 0..spec.cardinality() as u32 {
                let values: Vec<f64> = pool.iter().map(|r| (r.category(j) == c) as u8 as f64).collect();
                let codes: Vec<usize> = values.iter().map(|&v| v as usize).collect();
                columns.push(Column {
                    feature: j,
                    category: Some(c),
                    pearson: pearson(&values, &ind).abs(),
                    spearman: spearman(&values, &ind).abs(),
                    mi: mutual_information(&codes, &ind_codes),
                    values,
                });
            }
        } else {
            let values: Vec<f64> = pool.iter().map(|r| r.number(j)).collect();
            columns.push(Column {
                feature: j,
                category: None,
                pearson: pearson(&values, &ind).abs(),
                spearman: spearman(&values, &ind).abs(),
                mi: mutual_information(&quantile_bins(&values, MI_BINS), &ind_codes),
                values,
            });
        }
    }

    let mut features: Vec<FeatureScore> = Vec::new();
    let mut standardizers: Vec<Standardizer> = Vec::new();
    for c in &columns {
        let mi = c.mi;
        let rho = (c.pearson + c.spearman + mi) / 3.0;
        let (mean, std) = mean_std(&c.values);
        let st = match c.category {
            None => Standardizer::Numeric { mean, std },
            Some(category) => Standardizer::Indicator { category, mean, std },
        };
        let score = FeatureScore {
            feature: schema.feature(c.feature).name.clone(),
            index: c.feature,
            pearson: c.pearson,
            spearman: c.spearman,
            mutual_info: mi,
            rho,
        };
        match features.last() {
            Some(prev) if prev.index == c.feature => {
                if rho > prev.rho {
                    *features.last_mut().unwrap() = score;
                    *standardizers.last_mut().unwrap() = st;
                }
            }
            _ => {
                features.push(score);
                standardizers.push(st);
            }
        }
    }

    let mut profile = CorrelationProfile {
        features,
        standardizers,
        scores: Vec::new(),
    };
    profile.scores = pool.iter().map(|r| profile.score(r)).collect();
    Ok(profile)
}

/// Output of [`correlation_filter`].
#[derive(Clone, Debug, PartialEq)]
pub struct Filtered {
    pub kept: Vec<usize>,
    /// Removed indices, highest score first.
    pub removed: Vec<usize>,
    pub profile: CorrelationProfile,
}

/// Number of examples the filter drops from a pool of `n`.
pub fn filter_count(n: usize, drop_fraction: f64) -> usize {
    let x = ((drop_fraction * n as f64) * 1e9).round() / 1e9;
    x.ceil() as usize
}

/// Drop the `ceil(drop_fraction * n)` highest-scoring examples in one pass.
/// Among equal scores the lower index is kept.
pub fn correlation_filter(
    pool: &[Record],
    schema: &Schema,
    sub: &Subgroup,
    drop_fraction: f64,
    profile: Option<CorrelationProfile>,
) -> Result<Filtered> {
    if !(0.0..1.0).contains(&drop_fraction) {
        return Err(Error::InvalidArgument(format!("drop fraction {drop_fraction} outside [0, 1)")));
    }
    let profile = match profile {
        Some(p) => p,
        None => correlation_profile(pool, schema, sub)?,
    };
    if profile.scores.len() != pool.len() {
        return Err(Error::InvalidArgument("profile does not match the pool".into()));
    }
    let m = filter_count(pool.len(), drop_fraction);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| profile.scores[b].total_cmp(&profile.scores[a]).then(b.cmp(&a)));
    let removed: Vec<usize> = order[..m].to_vec();
    let mut kept: Vec<usize> = order[m..].to_vec();
    kept.sort_unstable();
    Ok(Filtered { kept, removed, profile })
}
