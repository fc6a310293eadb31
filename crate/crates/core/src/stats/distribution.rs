use crate::error::{Error, Result};

/// Bin count for numerical features.
pub const DEFAULT_BINS: usize = 20;

/// Additive per-bin smoothing applied to histograms before JSD.
pub const JSD_SMOOTHING: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct CategoricalDistribution {
    support: Vec<String>,
    mass: Vec<f64>,
}

impl CategoricalDistribution {
    pub fn new(support: Vec<String>, mass: Vec<f64>) -> Result<Self> {
        if support.len() != mass.len() {
            return Err(Error::SupportMismatch(format!(
                "{} categories but {} masses",
                support.len(),
                mass.len()
            )));
        }
        if mass.iter().any(|m| !(m.is_finite() && *m >= 0.0)) {
            return Err(Error::InvalidArgument("negative or non-finite mass".into()));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("masses sum to {total}, not 1")));
        }
        Ok(CategoricalDistribution { support, mass })
    }

    pub fn from_counts(support: Vec<String>, counts: &[f64]) -> Result<Self> {
        let total: f64 = counts.iter().sum();
        if total <= 0.0 {
            return Err(Error::Empty("no observations".into()));
        }
        let mass = normalize(counts);
        CategoricalDistribution::new(support, mass)
    }

    pub fn support(&self) -> &[String] {
        &self.support
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }
}

/// Equal-width histogram with normalized bin masses.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    edges: Vec<f64>,
    mass: Vec<f64>,
}

impl Histogram {
    pub fn new(edges: Vec<f64>, mass: Vec<f64>) -> Result<Self> {
        if edges.len() != mass.len() + 1 || mass.is_empty() {
            return Err(Error::SupportMismatch(format!(
                "{} edges for {} bins",
                edges.len(),
                mass.len()
            )));
        }
        if edges.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidArgument("histogram edges not strictly increasing".into()));
        }
        let total: f64 = mass.iter().sum();
        if mass.iter().any(|m| !(m.is_finite() && *m >= 0.0)) || (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("histogram masses sum to {total}")));
        }
        Ok(Histogram { edges, mass })
    }

    /// Bin `values` over `edges` (values outside are assigned to the edge
    /// bins), add `smoothing` to every bin and normalize.
    pub fn from_values(values: &[f64], edges: Vec<f64>, smoothing: f64) -> Result<Self> {
        if values.is_empty() && smoothing <= 0.0 {
            return Err(Error::Empty("histogram of no values".into()));
        }
        let bins = edges.len().saturating_sub(1);
        if bins == 0 {
            return Err(Error::InvalidArgument("histogram needs at least one bin".into()));
        }
        let mut counts = vec![smoothing; bins];
        for &x in values {
            counts[bin_index(&edges, x)] += 1.0;
        }
        Histogram::new(edges, normalize(&counts))
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }
}

/// Either kind of univariate distribution.
#[derive(Clone, Debug, PartialEq)]
pub enum Distribution {
    Categorical(CategoricalDistribution),
    Histogram(Histogram),
}

/// `bins + 1` equal-width edges over `[lo, hi]`; widened by ±0.5 when the
/// interval is degenerate.
pub fn equal_width_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) };
    let width = (hi - lo) / bins as f64;
    let mut edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    edges[bins] = hi;
    edges
}

pub(crate) fn bin_index(edges: &[f64], x: f64) -> usize {
    let bins = edges.len() - 1;
    if x <= edges[0] {
        return 0;
    }
    if x >= edges[bins] {
        return bins - 1;
    }
    // first edge strictly greater than x, minus one
    let pos = edges.partition_point(|e| *e <= x);
    (pos - 1).min(bins - 1)
}

pub(crate) fn normalize(counts: &[f64]) -> Vec<f64> {
    let total: f64 = counts.iter().sum();
    counts.iter().map(|c| c / total).collect()
}
