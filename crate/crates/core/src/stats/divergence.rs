use serde::{Deserialize, Serialize};

use super::distribution::{
    bin_index, equal_width_edges, normalize, CategoricalDistribution, Distribution, DEFAULT_BINS,
    JSD_SMOOTHING,
};
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Total variation distance `½ Σ |p_v − q_v|`.
pub fn tvd(p: &CategoricalDistribution, q: &CategoricalDistribution) -> Result<f64> {
    if p.support() != q.support() {
        return Err(Error::SupportMismatch("tvd over different supports".into()));
    }
    Ok(tvd_mass(p.mass(), q.mass()))
}

/// Total variation complement, `1 − tvd`.
pub fn tvc(p: &CategoricalDistribution, q: &CategoricalDistribution) -> Result<f64> {
    tvd(p, q).map(|d| 1.0 - d)
}

pub fn tvd_mass(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Jensen-Shannon divergence in bits (bounded by 1). Zero-mass terms
/// contribute nothing.
pub fn jsd(p: &Distribution, q: &Distribution) -> Result<f64> {
    match (p, q) {
        (Distribution::Categorical(a), Distribution::Categorical(b)) => {
            if a.support() != b.support() {
                return Err(Error::SupportMismatch("jsd over different supports".into()));
            }
            Ok(jsd_mass(a.mass(), b.mass()))
        }
        (Distribution::Histogram(a), Distribution::Histogram(b)) => {
            if a.edges() != b.edges() {
                return Err(Error::SupportMismatch("jsd over different bin edges".into()));
            }
            Ok(jsd_mass(a.mass(), b.mass()))
        }
        _ => Err(Error::SupportMismatch("jsd between a histogram and a categorical".into())),
    }
}

pub fn jsd_mass(p: &[f64], q: &[f64]) -> f64 {
    debug_assert_eq!(p.len(), q.len());
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = 0.5 * (a + b);
        if a > 0.0 {
            total += 0.5 * a * (a / m).log2();
        }
        if b > 0.0 {
            total += 0.5 * b * (b / m).log2();
        }
    }
    total.clamp(0.0, 1.0)
}

/// Per-column divergences between two datasets plus the combined score.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    /// `(column, divergence)`: TVD for categorical columns (label
    /// included), JSD for numerical ones.
    pub per_feature: Vec<(String, f64)>,
    pub categorical_mean_tvd: f64,
    pub numerical_mean_jsd: f64,
    pub total: f64,
}

/// Mean TVD over categorical columns plus mean JSD over numerical columns.
/// Numerical histograms share edges computed from the pooled values of both
/// datasets.
pub fn drift_score(a: &Dataset, b: &Dataset) -> Result<DriftReport> {
    if a.schema() != b.schema() {
        return Err(Error::SchemaMismatch("drift between different schemas".into()));
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("drift of an empty dataset".into()));
    }
    let schema = a.schema();
    let mut per_feature = Vec::with_capacity(schema.n_features() + 1);
    let (mut cat_sum, mut cat_n, mut num_sum, mut num_n) = (0.0, 0usize, 0.0, 0usize);

    for (idx, spec) in schema.features().iter().enumerate() {
        let d = if let Some(support) = spec.support() {
            let pa = category_mass(a, support.len(), |r| r.category(idx));
            let pb = category_mass(b, support.len(), |r| r.category(idx));
            let d = tvd_mass(&pa, &pb);
            cat_sum += d;
            cat_n += 1;
            d
        } else {
            let xa = a.numbers(idx);
            let xb = b.numbers(idx);
            let lo = xa.iter().chain(&xb).copied().fold(f64::INFINITY, f64::min);
            let hi = xa.iter().chain(&xb).copied().fold(f64::NEG_INFINITY, f64::max);
            let edges = equal_width_edges(lo, hi, DEFAULT_BINS);
            let ha = smoothed_hist(&xa, &edges);
            let hb = smoothed_hist(&xb, &edges);
            let d = jsd_mass(&ha, &hb);
            num_sum += d;
            num_n += 1;
            d
        };
        per_feature.push((spec.name.clone(), d));
    }
    let n_labels = schema.n_labels();
    let la = category_mass(a, n_labels, |r| r.label);
    let lb = category_mass(b, n_labels, |r| r.label);
    let dl = tvd_mass(&la, &lb);
    cat_sum += dl;
    cat_n += 1;
    per_feature.push((schema.label().name.clone(), dl));

    let categorical_mean_tvd = cat_sum / cat_n as f64;
    let numerical_mean_jsd = if num_n == 0 { 0.0 } else { num_sum / num_n as f64 };
    Ok(DriftReport {
        per_feature,
        categorical_mean_tvd,
        numerical_mean_jsd,
        total: categorical_mean_tvd + numerical_mean_jsd,
    })
}

fn category_mass(ds: &Dataset, k: usize, f: impl Fn(&crate::data::Record) -> u32) -> Vec<f64> {
    let mut counts = vec![0.0; k];
    for r in ds.records() {
        counts[f(r) as usize] += 1.0;
    }
    normalize(&counts)
}

fn smoothed_hist(xs: &[f64], edges: &[f64]) -> Vec<f64> {
    let mut counts = vec![JSD_SMOOTHING; edges.len() - 1];
    for &x in xs {
        counts[bin_index(edges, x)] += 1.0;
    }
    normalize(&counts)
}
