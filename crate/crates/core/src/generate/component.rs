use rand::{Rng, RngCore};
use rand_distr::{Distribution as _, Normal};

use super::cells::CellIndex;
use crate::data::{uniform_in, Predicate, Record, Schema, Value};

/// Univariate sampler for one feature.
#[derive(Clone, Debug, PartialEq)]
pub(crate) enum FeatureDist {
    Categorical { mass: Vec<f64> },
    /// Discrete distribution over observed numerical values.
    Values { values: Vec<f64>, mass: Vec<f64> },
    /// Histogram; draws are uniform inside the chosen bin.
    Bins { edges: Vec<f64>, mass: Vec<f64>, integer: bool },
    /// Resample an observed value and add Gaussian noise, then clamp.
    Kernel {
        values: Vec<f64>,
        bandwidth: f64,
        lo: f64,
        hi: f64,
        integer: bool,
    },
    Uniform { lo: f64, hi: f64, integer: bool },
    Normal {
        mean: f64,
        std: f64,
        lo: f64,
        hi: f64,
        integer: bool,
    },
}

pub(crate) fn pick(mass: &[f64], rng: &mut dyn RngCore) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, m) in mass.iter().enumerate() {
        acc += m;
        if u < acc {
            return i;
        }
    }
    // rounding slack: last index with positive mass
    mass.iter().rposition(|m| *m > 0.0).unwrap_or(0)
}

fn finish(x: f64, lo: f64, hi: f64, integer: bool) -> f64 {
    let x = if integer { x.round() } else { x };
    x.clamp(lo, hi)
}

impl FeatureDist {
    pub(crate) fn sample(&self, rng: &mut dyn RngCore) -> Value {
        match self {
            FeatureDist::Categorical { mass } => Value::Category(pick(mass, rng) as u32),
            FeatureDist::Values { values, mass } => Value::Number(values[pick(mass, rng)]),
            FeatureDist::Bins { edges, mass, integer } => {
                let b = pick(mass, rng);
                Value::Number(uniform_in(edges[b], edges[b + 1], *integer, rng))
            }
            FeatureDist::Kernel {
                values,
                bandwidth,
                lo,
                hi,
                integer,
            } => {
                let base = values[rng.random_range(0..values.len())];
                let noise = if *bandwidth > 0.0 {
                    Normal::new(0.0, *bandwidth).expect("positive bandwidth").sample(rng)
                } else {
                    0.0
                };
                Value::Number(finish(base + noise, *lo, *hi, *integer))
            }
            FeatureDist::Uniform { lo, hi, integer } => Value::Number(uniform_in(*lo, *hi, *integer, rng)),
            FeatureDist::Normal {
                mean,
                std,
                lo,
                hi,
                integer,
            } => {
                let x = if *std > 0.0 {
                    Normal::new(*mean, *std).expect("positive std").sample(rng)
                } else {
                    *mean
                };
                Value::Number(finish(x, *lo, *hi, *integer))
            }
        }
    }

    /// Probability mass vector for categorical distributions.
    pub(crate) fn mass(&self) -> Option<&[f64]> {
        match self {
            FeatureDist::Categorical { mass } => Some(mass),
            _ => None,
        }
    }
}

/// One mixture component: protected cell, then label given cell, then
/// every feature given (cell, label), falling back to pooled marginals
/// where a group has no distributions of its own.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Component {
    pub cell_mass: Vec<f64>,
    pub label_mass: Vec<Vec<f64>>,
    pub groups: Vec<Option<Vec<FeatureDist>>>,
    pub pooled: Vec<FeatureDist>,
    pub n_labels: usize,
}

const CONDITION_ATTEMPTS: usize = 200;

impl Component {
    fn features_for(&self, cell: usize, label: usize) -> &[FeatureDist] {
        self.groups[cell * self.n_labels + label]
            .as_deref()
            .unwrap_or(&self.pooled)
    }

    pub(crate) fn sample(&self, cells: &CellIndex, rng: &mut dyn RngCore) -> Record {
        let cell = pick(&self.cell_mass, rng);
        let label = pick(&self.label_mass[cell], rng);
        let values: Vec<Value> = self
            .features_for(cell, label)
            .iter()
            .map(|d| d.sample(rng))
            .collect();
        let mut r = Record::new(values, label as u32);
        cells.imprint(cell, &mut r, |lo, hi, integer| uniform_in(lo, hi, integer, rng));
        r
    }

    /// Draw conditioned on `stratum` by rejection, forcing the predicate
    /// onto the last draw if no sample matches.
    pub(crate) fn sample_where(
        &self,
        cells: &CellIndex,
        schema: &Schema,
        stratum: Option<&Predicate>,
        rng: &mut dyn RngCore,
    ) -> Record {
        let Some(pred) = stratum else {
            return self.sample(cells, rng);
        };
        let mut r = self.sample(cells, rng);
        for _ in 1..CONDITION_ATTEMPTS {
            if pred.matches(&r) {
                return r;
            }
            r = self.sample(cells, rng);
        }
        pred.force(schema, &mut r, rng);
        r
    }
}
