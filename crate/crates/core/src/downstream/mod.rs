//! Classifiers trained on synthetic data and evaluated on real data.

mod encode;
mod forest;
mod logistic;

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Schema, Subgroup};
use crate::error::{Error, Result};
use crate::stats::{eo, eod, mean_std, GroupCounts};

pub use encode::{protected_features, Column, Encoder, FeaturePolicy};
pub use forest::{Forest, ForestParams, Node, Tree};
pub use logistic::{
    fit_binary, logistic_gradient, logistic_loss, BinaryLogistic, LogisticModel, LogisticParams,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LogisticRegression,
    RandomForest,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::LogisticRegression => "lr",
            ModelKind::RandomForest => "rf",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierSpec {
    pub kind: ModelKind,
    #[serde(default)]
    pub policy: FeaturePolicy,
    #[serde(default)]
    pub logistic: LogisticParams,
    #[serde(default)]
    pub forest: ForestParams,
}

impl ClassifierSpec {
    pub fn new(kind: ModelKind, policy: FeaturePolicy) -> Self {
        ClassifierSpec {
            kind,
            policy,
            logistic: LogisticParams::default(),
            forest: ForestParams::default(),
        }
    }

    /// Short tag such as `rf-aware`.
    pub fn tag(&self) -> String {
        format!("{}-{}", self.kind.as_str(), self.policy.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fitted {
    Logistic(LogisticModel),
    Forest(Forest),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ClassifierSpec,
    pub encoder: Encoder,
    pub fitted: Fitted,
    pub feature_names: Vec<String>,
    pub label_names: Vec<String>,
}

/// Rank of each label index when labels are sorted as strings.
fn label_ranks(schema: &Schema) -> Vec<usize> {
    let names = schema.label().support().expect("categorical label");
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| names[a].cmp(&names[b]));
    let mut rank = vec![0; names.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    rank
}

/// Fit a classifier. `sub` names the features a blind model drops.
pub fn train(spec: &ClassifierSpec, data: &Dataset, sub: &Subgroup, seed: u64) -> Result<TrainedModel> {
    if data.is_empty() {
        return Err(Error::Training("empty training data".into()));
    }
    let schema = data.schema();
    let mut present = vec![false; schema.n_labels()];
    for r in data.records() {
        present[r.label as usize] = true;
    }
    let classes: Vec<u32> = (0..present.len() as u32).filter(|&c| present[c as usize]).collect();
    if classes.len() < 2 {
        return Err(Error::Training("training data has a single label class".into()));
    }
    let excluded = match spec.policy {
        FeaturePolicy::AttributeAware => Vec::new(),
        FeaturePolicy::AttributeBlind => protected_features(schema, sub),
    };
    let encoder = Encoder::fit(data, &excluded)?;
    let (x, _) = encoder.matrix(data.records());
    let y: Vec<u32> = data.records().iter().map(|r| r.label).collect();
    let d = encoder.width();
    let fitted = match spec.kind {
        ModelKind::LogisticRegression => Fitted::Logistic(LogisticModel::fit(&x, &y, d, &classes, &spec.logistic)),
        ModelKind::RandomForest => Fitted::Forest(Forest::fit(&x, &y, d, &label_ranks(schema), &spec.forest, seed)),
    };
    Ok(TrainedModel {
        spec: spec.clone(),
        encoder,
        fitted,
        feature_names: schema.features().iter().map(|f| f.name.clone()).collect(),
        label_names: schema.label().support().expect("categorical label").to_vec(),
    })
}

/// Predicted label indices plus how many rows hit an unseen category.
#[derive(Clone, Debug, PartialEq)]
pub struct Predictions {
    pub labels: Vec<u32>,
    pub unseen: usize,
}

impl TrainedModel {
    fn check_schema(&self, schema: &Schema) -> Result<()> {
        let names: Vec<&str> = schema.features().iter().map(|f| f.name.as_str()).collect();
        let labels = schema.label().support().expect("categorical label");
        if names != self.feature_names || labels != self.label_names.as_slice() {
            return Err(Error::SchemaMismatch("dataset schema differs from the training schema".into()));
        }
        Ok(())
    }

    pub fn predict_row(&self, row: &[f64]) -> u32 {
        match &self.fitted {
            Fitted::Logistic(m) => m.predict_row(row),
            Fitted::Forest(f) => f.predict_row(row),
        }
    }

    pub fn predict(&self, ds: &Dataset) -> Result<Predictions> {
        self.check_schema(ds.schema())?;
        let mut unseen = 0;
        let labels = ds
            .records()
            .iter()
            .map(|r| {
                let (row, u) = self.encoder.encode(r);
                unseen += u as usize;
                self.predict_row(&row)
            })
            .collect();
        Ok(Predictions { labels, unseen })
    }

    /// Plain-text view: weights per column, or split lists per tree.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "model {} ({} columns)", self.spec.tag(), self.encoder.width());
        match &self.fitted {
            Fitted::Logistic(m) => {
                let targets: Vec<u32> = if m.classes.len() == 2 {
                    vec![m.classes[1]]
                } else {
                    m.classes.clone()
                };
                for (b, c) in m.models.iter().zip(targets) {
                    let _ = writeln!(
                        s,
                        "class {}: bias {:.6} iterations {} grad_norm {:.3e}",
                        self.label_names[c as usize], b.bias, b.iterations, b.grad_norm
                    );
                    for (name, w) in self.encoder.column_names.iter().zip(&b.weights) {
                        let _ = writeln!(s, "  {name} {w:.6}");
                    }
                }
            }
            Fitted::Forest(f) => {
                for (t, tree) in f.trees.iter().enumerate() {
                    let _ = writeln!(s, "tree {t} depth {}", tree.depth());
                    for n in &tree.nodes {
                        if let Node::Split {
                            column,
                            threshold,
                            samples,
                            ..
                        } = n
                        {
                            let _ = writeln!(
                                s,
                                "  {} <= {threshold:.6} (n={samples})",
                                self.encoder.column_names[*column]
                            );
                        }
                    }
                }
            }
        }
        s
    }
}

const DUMP_MAGIC: &[u8; 4] = b"ICBM";
const DUMP_VERSION: u32 = 1;

/// Write `model` to `path` and its text summary to `path` + `.txt`.
pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    bytes.extend_from_slice(DUMP_MAGIC);
    bytes.extend_from_slice(&DUMP_VERSION.to_le_bytes());
    bytes.extend(serde_json::to_vec(model)?);
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let mut side = path.as_os_str().to_owned();
    side.push(".txt");
    std::fs::write(&side, model.summary()).map_err(|e| Error::io(side, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 || &bytes[..4] != DUMP_MAGIC {
        return Err(Error::InvalidArgument(format!("{} is not a model dump", path.display())));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != DUMP_VERSION {
        return Err(Error::InvalidArgument(format!("unsupported model dump version {version}")));
    }
    Ok(serde_json::from_slice(&bytes[8..])?)
}

/// Unweighted mean of per-class F1 over the classes present in `truth`.
pub fn macro_f1(preds: &[u32], truth: &[u32]) -> Result<f64> {
    if preds.len() != truth.len() {
        return Err(Error::InvalidArgument(format!(
            "prediction and truth lengths differ: {} vs {}",
            preds.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Empty("macro F1 of no predictions".into()));
    }
    let mut classes: Vec<u32> = truth.to_vec();
    classes.sort_unstable();
    classes.dedup();
    let total: f64 = classes
        .iter()
        .map(|&c| {
            let mut tp = 0usize;
            let mut fp = 0usize;
            let mut fneg = 0usize;
            for (&p, &t) in preds.iter().zip(truth) {
                match (p == c, t == c) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fneg += 1,
                    _ => {}
                }
            }
            2.0 * tp as f64 / (2 * tp + fp + fneg) as f64
        })
        .sum();
    Ok(total / classes.len() as f64)
}

/// Forest importances per schema feature (indicator columns summed into
/// their feature); features the model never saw get 0.
pub fn mdi_importance(model: &TrainedModel) -> Result<Vec<(String, f64)>> {
    let Fitted::Forest(f) = &model.fitted else {
        return Err(Error::InvalidArgument("MDI needs a random forest".into()));
    };
    let mut out: Vec<(String, f64)> = model.feature_names.iter().map(|n| (n.clone(), 0.0)).collect();
    for (c, v) in f.column_importances().into_iter().enumerate() {
        out[model.encoder.columns[c].feature()].1 += v;
    }
    Ok(out)
}

/// Metrics of one trained model on real data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedEval {
    pub seed: u64,
    pub macro_f1: f64,
    pub spd_d: f64,
    pub eo_d: f64,
    pub eod_d: f64,
    /// Summed MDI of the schema's protected features (forests only).
    pub protected_mdi: Option<f64>,
    pub mdi: Option<Vec<(String, f64)>>,
    pub unseen: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(xs: impl Iterator<Item = f64>) -> MeanStd {
        let v: Vec<f64> = xs.collect();
        let (mean, std) = mean_std(&v);
        MeanStd { mean, std }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub macro_f1: MeanStd,
    pub spd_d: MeanStd,
    pub eo_d: MeanStd,
    pub eod_d: MeanStd,
    pub protected_mdi: Option<MeanStd>,
    /// Mean importance per feature across seeds.
    pub mdi: Option<Vec<(String, f64)>>,
    pub per_seed: Vec<SeedEval>,
}

/// Score a trained model on `test`.
pub fn evaluate_model(model: &TrainedModel, test: &Dataset, sub: &Subgroup, seed: u64) -> Result<SeedEval> {
    if test.is_empty() {
        return Err(Error::Empty("empty evaluation data".into()));
    }
    let p = model.predict(test)?;
    let truth: Vec<u32> = test.records().iter().map(|r| r.label).collect();
    let unpriv = sub.mask(test.records());
    let mut counts = GroupCounts::default();
    for (&l, &u) in p.labels.iter().zip(&unpriv) {
        let fav = sub.is_favorable(l) as usize;
        if u {
            counts.unpriv_total += 1;
            counts.unpriv_favorable += fav;
        } else {
            counts.priv_total += 1;
            counts.priv_favorable += fav;
        }
    }
    let pred_fav: Vec<bool> = p.labels.iter().map(|&l| sub.is_favorable(l)).collect();
    let true_fav: Vec<bool> = truth.iter().map(|&l| sub.is_favorable(l)).collect();
    let mdi = match model.fitted {
        Fitted::Forest(_) => Some(mdi_importance(model)?),
        Fitted::Logistic(_) => None,
    };
    let schema = test.schema();
    let protected_mdi = mdi.as_ref().map(|m| {
        schema
            .protected_indices()
            .iter()
            .map(|&j| m[j].1)
            .sum::<f64>()
    });
    Ok(SeedEval {
        seed,
        macro_f1: macro_f1(&p.labels, &truth)?,
        spd_d: counts.spd()?,
        eo_d: eo(&pred_fav, &true_fav, &unpriv)?,
        eod_d: eod(&pred_fav, &true_fav, &unpriv)?,
        protected_mdi,
        mdi,
        unseen: p.unseen,
    })
}

/// Retrain on `data` once per seed and evaluate each model on `test`.
pub fn evaluate_downstream(
    spec: &ClassifierSpec,
    data: &Dataset,
    test: &Dataset,
    sub: &Subgroup,
    seeds: &[u64],
) -> Result<EvalReport> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("at least one seed".into()));
    }
    let per_seed: Vec<SeedEval> = seeds
        .par_iter()
        .map(|&s| evaluate_model(&train(spec, data, sub, s)?, test, sub, s))
        .collect::<Result<_>>()?;
    let mdi = per_seed[0].mdi.as_ref().map(|first| {
        first
            .iter()
            .enumerate()
            .map(|(j, (name, _))| {
                let m = per_seed.iter().map(|e| e.mdi.as_ref().unwrap()[j].1).sum::<f64>() / per_seed.len() as f64;
                (name.clone(), m)
            })
            .collect()
    });
    Ok(EvalReport {
        model: spec.tag(),
        macro_f1: MeanStd::of(per_seed.iter().map(|e| e.macro_f1)),
        spd_d: MeanStd::of(per_seed.iter().map(|e| e.spd_d)),
        eo_d: MeanStd::of(per_seed.iter().map(|e| e.eo_d)),
        eod_d: MeanStd::of(per_seed.iter().map(|e| e.eod_d)),
        protected_mdi: per_seed[0]
            .protected_mdi
            .map(|_| MeanStd::of(per_seed.iter().map(|e| e.protected_mdi.unwrap()))),
        mdi,
        per_seed,
    })
}
