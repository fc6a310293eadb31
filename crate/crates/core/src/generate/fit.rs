use super::cells::CellIndex;
use super::component::{Component, FeatureDist};
use crate::data::{Record, Schema, Value};
use crate::stats::{bin_index, equal_width_edges, DEFAULT_BINS};

/// How component tables are estimated from records.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) enum Estimator {
    /// Raw frequencies; numerical features as observed-value tables
    /// (integer) or histograms (real).
    Empirical,
    /// Additive smoothing of every categorical table; numerical features
    /// resampled with Gaussian jitter.
    Smoothed { lambda: f64 },
}

fn normalize_with(counts: &[f64], lambda: f64) -> Vec<f64> {
    let total: f64 = counts.iter().sum::<f64>() + lambda * counts.len() as f64;
    if total <= 0.0 {
        return vec![1.0 / counts.len() as f64; counts.len()];
    }
    counts.iter().map(|c| (c + lambda) / total).collect()
}

/// Silverman's rule of thumb, `0.9 · min(σ, IQR/1.34) · n^(-1/5)`.
pub fn silverman_bandwidth(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    let sd = var.sqrt();
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile(&sorted, 0.75) - quantile(&sorted, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * (n as f64).powf(-0.2)
}

/// Linear-interpolated quantile of sorted data.
pub(crate) fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

struct NumericContext {
    edges: Option<Vec<f64>>,
    bandwidth: f64,
}

fn feature_dist(
    schema: &Schema,
    j: usize,
    rows: &[&Record],
    est: Estimator,
    ctx: &NumericContext,
) -> FeatureDist {
    let spec = schema.feature(j);
    match spec.range() {
        None => {
            let mut counts = vec![0.0; spec.cardinality()];
            for r in rows {
                counts[r.category(j) as usize] += 1.0;
            }
            let lambda = match est {
                Estimator::Empirical => 0.0,
                Estimator::Smoothed { lambda } => lambda,
            };
            FeatureDist::Categorical {
                mass: normalize_with(&counts, lambda),
            }
        }
        Some((lo, hi)) => {
            let xs: Vec<f64> = rows.iter().map(|r| r.number(j)).collect();
            match est {
                Estimator::Smoothed { .. } => FeatureDist::Kernel {
                    values: xs,
                    bandwidth: ctx.bandwidth,
                    lo,
                    hi,
                    integer: spec.is_integer(),
                },
                Estimator::Empirical if spec.is_integer() => {
                    let mut sorted = xs;
                    sorted.sort_by(f64::total_cmp);
                    let mut values: Vec<f64> = Vec::new();
                    let mut counts: Vec<f64> = Vec::new();
                    for x in sorted {
                        if values.last() == Some(&x) {
                            *counts.last_mut().unwrap() += 1.0;
                        } else {
                            values.push(x);
                            counts.push(1.0);
                        }
                    }
                    FeatureDist::Values {
                        values,
                        mass: normalize_with(&counts, 0.0),
                    }
                }
                Estimator::Empirical => {
                    let edges = ctx.edges.clone().expect("edges for real features");
                    let mut counts = vec![0.0; edges.len() - 1];
                    for x in xs {
                        counts[bin_index(&edges, x)] += 1.0;
                    }
                    FeatureDist::Bins {
                        edges,
                        mass: normalize_with(&counts, 0.0),
                        integer: false,
                    }
                }
            }
        }
    }
}

/// Estimate a component from `records`. Panics on an empty slice.
pub(crate) fn fit_component(records: &[Record], schema: &Schema, cells: &CellIndex, est: Estimator) -> Component {
    assert!(!records.is_empty(), "fit_component needs records");
    let n_labels = schema.n_labels();
    let n_cells = cells.n_cells();
    let lambda = match est {
        Estimator::Empirical => 0.0,
        Estimator::Smoothed { lambda } => lambda,
    };

    let numeric: Vec<NumericContext> = (0..schema.n_features())
        .map(|j| {
            if schema.feature(j).is_categorical() {
                return NumericContext {
                    edges: None,
                    bandwidth: 0.0,
                };
            }
            let xs: Vec<f64> = records.iter().map(|r| r.number(j)).collect();
            let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            NumericContext {
                edges: Some(equal_width_edges(lo, hi, DEFAULT_BINS)),
                bandwidth: silverman_bandwidth(&xs),
            }
        })
        .collect();

    let all: Vec<&Record> = records.iter().collect();
    let pooled: Vec<FeatureDist> = (0..schema.n_features())
        .map(|j| feature_dist(schema, j, &all, est, &numeric[j]))
        .collect();

    let mut by_group: Vec<Vec<&Record>> = vec![Vec::new(); n_cells * n_labels];
    let mut cell_counts = vec![0.0; n_cells];
    let mut label_counts = vec![vec![0.0; n_labels]; n_cells];
    let mut pooled_labels = vec![0.0; n_labels];
    for r in records {
        let c = cells.cell_of(r);
        cell_counts[c] += 1.0;
        label_counts[c][r.label as usize] += 1.0;
        pooled_labels[r.label as usize] += 1.0;
        by_group[c * n_labels + r.label as usize].push(r);
    }
    let pooled_label_mass = normalize_with(&pooled_labels, lambda);
    let label_mass = label_counts
        .iter()
        .map(|counts| {
            if est == Estimator::Empirical && counts.iter().sum::<f64>() == 0.0 {
                pooled_label_mass.clone()
            } else {
                normalize_with(counts, lambda)
            }
        })
        .collect();
    let groups = by_group
        .iter()
        .map(|rows| {
            if rows.is_empty() {
                None
            } else {
                Some(
                    (0..schema.n_features())
                        .map(|j| feature_dist(schema, j, rows, est, &numeric[j]))
                        .collect(),
                )
            }
        })
        .collect();
    Component {
        cell_mass: normalize_with(&cell_counts, lambda),
        label_mass,
        groups,
        pooled,
        n_labels,
    }
}

/// Marginal mass of a categorical feature under a component.
pub(crate) fn component_marginal(comp: &Component, schema: &Schema, cells: &CellIndex, j: usize) -> Vec<f64> {
    let card = schema.feature(j).cardinality();
    let mut out = vec![0.0; card];
    // protected categorical features are fixed by the cell
    let mut probe = Record::new(
        schema
            .features()
            .iter()
            .map(|f| if f.is_categorical() { Value::Category(0) } else { Value::Number(f.range().unwrap().0) })
            .collect(),
        0,
    );
    for c in 0..cells.n_cells() {
        let pc = comp.cell_mass[c];
        if pc == 0.0 {
            continue;
        }
        if schema.protected_indices().contains(&j) {
            cells.imprint(c, &mut probe, |lo, _, _| lo);
            out[probe.category(j) as usize] += pc;
            continue;
        }
        for (l, pl) in comp.label_mass[c].iter().enumerate() {
            let dists = comp.groups[c * comp.n_labels + l].as_deref().unwrap_or(&comp.pooled);
            let m = dists[j].mass().expect("categorical feature");
            for (o, v) in out.iter_mut().zip(m) {
                *o += pc * pl * v;
            }
        }
    }
    out
}
