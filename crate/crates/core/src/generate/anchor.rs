use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::cells::CellIndex;
use super::component::{pick, Component, FeatureDist};
use super::fit::{component_marginal, fit_component, Estimator};
use crate::data::{Conjunct, Dataset, Predicate, Provenance, Record, Schema};
use crate::error::{Error, Result};
use crate::prompt::RecordSampler;

/// Declared marginal of one feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarginalDist {
    /// Category → probability; must cover mass 1.
    Mass(BTreeMap<String, f64>),
    /// Uniform over the feature's declared range.
    Uniform,
    Normal { mean: f64, std: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginalSpec {
    pub feature: String,
    #[serde(flatten)]
    pub dist: MarginalDist,
}

/// Label distribution applied to records matching `when`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LabelRule {
    pub when: Vec<Conjunct>,
    pub mass: BTreeMap<String, f64>,
}

/// Hand-written anchor: independent feature marginals plus label rules
/// (first match wins). Unlisted features are uniform; unmatched records
/// use `default_label`, itself uniform when empty.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnchorSpec {
    #[serde(default)]
    pub features: Vec<MarginalSpec>,
    #[serde(default)]
    pub labels: Vec<LabelRule>,
    #[serde(default)]
    pub default_label: BTreeMap<String, f64>,
}

#[derive(Clone, Debug)]
struct Declared {
    features: Vec<FeatureDist>,
    rules: Vec<(Predicate, Vec<f64>)>,
    default_label: Vec<f64>,
}

#[derive(Clone, Debug)]
enum Inner {
    Fitted { cells: CellIndex, comp: Component },
    Declared(Declared),
}

/// The generator's zero-shot distribution.
#[derive(Clone, Debug)]
pub struct AnchorModel {
    schema: Arc<Schema>,
    inner: Inner,
}

/// Fit an anchor to a dataset: protected-cell frequencies, label given
/// cell, and per-(cell, label) feature tables.
pub fn fit_anchor(source: &Dataset) -> Result<AnchorModel> {
    fit_anchor_split(source, &[])
}

/// [`fit_anchor`] with numerical protected features cut at the interval
/// bounds of `split`.
pub fn fit_anchor_split(source: &Dataset, split: &[Conjunct]) -> Result<AnchorModel> {
    if source.is_empty() {
        return Err(Error::Empty("cannot fit an anchor to an empty dataset".into()));
    }
    let schema = source.schema().clone();
    let cells = CellIndex::new(&schema, split);
    let comp = fit_component(source.records(), &schema, &cells, Estimator::Empirical);
    Ok(AnchorModel {
        schema,
        inner: Inner::Fitted { cells, comp },
    })
}

fn mass_vector(support: &[String], mass: &BTreeMap<String, f64>, what: &str) -> Result<Vec<f64>> {
    if mass.is_empty() {
        return Ok(vec![1.0 / support.len() as f64; support.len()]);
    }
    for (k, v) in mass {
        if !support.contains(k) {
            return Err(Error::InvalidArgument(format!("{what}: `{k}` not in support")));
        }
        if !(v.is_finite() && *v >= 0.0) {
            return Err(Error::InvalidArgument(format!("{what}: invalid mass {v} for `{k}`")));
        }
    }
    let out: Vec<f64> = support.iter().map(|s| mass.get(s).copied().unwrap_or(0.0)).collect();
    let total: f64 = out.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("{what}: masses sum to {total}")));
    }
    Ok(out)
}

impl AnchorModel {
    pub fn from_spec(schema: Arc<Schema>, spec: &AnchorSpec) -> Result<AnchorModel> {
        let mut features = Vec::with_capacity(schema.n_features());
        for f in schema.features() {
            let declared = spec.features.iter().find(|m| m.feature == f.name);
            let dist = match (declared.map(|d| &d.dist), f.support(), f.range()) {
                (Some(MarginalDist::Mass(m)), Some(support), _) => FeatureDist::Categorical {
                    mass: mass_vector(support, m, &f.name)?,
                },
                (None | Some(MarginalDist::Uniform), Some(support), _) => FeatureDist::Categorical {
                    mass: vec![1.0 / support.len() as f64; support.len()],
                },
                (None | Some(MarginalDist::Uniform), None, Some((lo, hi))) => FeatureDist::Uniform {
                    lo,
                    hi,
                    integer: f.is_integer(),
                },
                (Some(MarginalDist::Normal { mean, std }), None, Some((lo, hi))) => {
                    if !(*std >= 0.0) {
                        return Err(Error::InvalidArgument(format!("`{}`: negative std", f.name)));
                    }
                    FeatureDist::Normal {
                        mean: *mean,
                        std: *std,
                        lo,
                        hi,
                        integer: f.is_integer(),
                    }
                }
                _ => {
                    return Err(Error::InvalidArgument(format!(
                        "marginal for `{}` does not match its kind",
                        f.name
                    )))
                }
            };
            features.push(dist);
        }
        for m in &spec.features {
            schema.require_feature(&m.feature)?;
        }
        let labels = schema.label().support().expect("categorical label");
        let rules = spec
            .labels
            .iter()
            .map(|r| {
                Ok((
                    Predicate::compile(&r.when, &schema)?,
                    mass_vector(labels, &r.mass, "label rule")?,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        let default_label = mass_vector(labels, &spec.default_label, "default label")?;
        Ok(AnchorModel {
            schema,
            inner: Inner::Declared(Declared {
                features,
                rules,
                default_label,
            }),
        })
    }

    pub fn schema(&self) -> &Arc<Schema> {
        &self.schema
    }

    /// One record from the anchor.
    pub fn draw_record(&self, rng: &mut dyn RngCore) -> Record {
        match &self.inner {
            Inner::Fitted { cells, comp } => comp.sample(cells, rng),
            Inner::Declared(d) => {
                let values = d.features.iter().map(|f| f.sample(rng)).collect();
                let mut r = Record::new(values, 0);
                let mass = d
                    .rules
                    .iter()
                    .find(|(p, _)| p.matches(&r))
                    .map_or(&d.default_label, |(_, m)| m);
                r.label = pick(mass, rng) as u32;
                r
            }
        }
    }

    /// A draw conditioned on `stratum` (rejection, forced on exhaustion).
    pub fn draw_where(&self, stratum: Option<&Predicate>, rng: &mut dyn RngCore) -> Record {
        match (&self.inner, stratum) {
            (Inner::Fitted { cells, comp }, _) => comp.sample_where(cells, &self.schema, stratum, rng),
            (Inner::Declared(_), None) => self.draw_record(rng),
            (Inner::Declared(_), Some(p)) => crate::prompt::draw_matching(self, p, &self.schema, rng),
        }
    }

    /// `n` independent records; record `i` uses stream `i` of `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Dataset {
        let records: Vec<Record> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(i as u64);
                self.draw_record(&mut rng)
            })
            .collect();
        Dataset::new(self.schema.clone(), records, Provenance::Anchor).expect("anchor samples are valid")
    }

    /// Exact marginal mass of a categorical feature, if it can be read off
    /// the model tables.
    pub fn marginal(&self, feature: usize) -> Option<Vec<f64>> {
        if !self.schema.feature(feature).is_categorical() {
            return None;
        }
        match &self.inner {
            Inner::Fitted { cells, comp } => Some(component_marginal(comp, &self.schema, cells, feature)),
            Inner::Declared(d) => d.features[feature].mass().map(<[f64]>::to_vec),
        }
    }
}

impl RecordSampler for AnchorModel {
    fn draw(&self, rng: &mut dyn RngCore) -> Record {
        self.draw_record(rng)
    }
}
