use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column type and domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Categorical {
        support: Vec<String>,
    },
    Numerical {
        range: [f64; 2],
        /// Integer-valued column. Only affects serialization and sampling
        /// (generated values are rounded).
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        integer: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: FeatureKind,
}

impl FeatureSpec {
    pub fn categorical<S: Into<String>>(name: &str, support: impl IntoIterator<Item = S>) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Categorical {
                support: support.into_iter().map(Into::into).collect(),
            },
        }
    }

    pub fn numerical(name: &str, min: f64, max: f64) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Numerical {
                range: [min, max],
                integer: false,
            },
        }
    }

    pub fn integer(name: &str, min: f64, max: f64) -> Self {
        FeatureSpec {
            name: name.to_string(),
            kind: FeatureKind::Numerical {
                range: [min, max],
                integer: true,
            },
        }
    }

    pub fn is_categorical(&self) -> bool {
        matches!(self.kind, FeatureKind::Categorical { .. })
    }

    pub fn support(&self) -> Option<&[String]> {
        match &self.kind {
            FeatureKind::Categorical { support } => Some(support),
            FeatureKind::Numerical { .. } => None,
        }
    }

    pub fn range(&self) -> Option<(f64, f64)> {
        match self.kind {
            FeatureKind::Numerical { range, .. } => Some((range[0], range[1])),
            FeatureKind::Categorical { .. } => None,
        }
    }

    pub fn is_integer(&self) -> bool {
        matches!(self.kind, FeatureKind::Numerical { integer: true, .. })
    }

    /// Index of `value` in the categorical support.
    pub fn category_index(&self, value: &str) -> Option<u32> {
        self.support()?
            .iter()
            .position(|s| s == value)
            .map(|i| i as u32)
    }

    pub fn category_name(&self, index: u32) -> &str {
        &self.support().expect("categorical feature")[index as usize]
    }

    /// Number of categories (0 for numerical features).
    pub fn cardinality(&self) -> usize {
        self.support().map_or(0, |s| s.len())
    }

    fn validate(&self) -> Result<()> {
        if self.name.is_empty() {
            return Err(Error::Schema("feature with empty name".into()));
        }
        match &self.kind {
            FeatureKind::Categorical { support } => {
                if support.is_empty() {
                    return Err(Error::Schema(format!("`{}` has an empty support", self.name)));
                }
                let mut seen = HashSet::new();
                for s in support {
                    if !seen.insert(s.as_str()) {
                        return Err(Error::Schema(format!(
                            "`{}` lists category `{s}` twice",
                            self.name
                        )));
                    }
                }
            }
            FeatureKind::Numerical { range, .. } => {
                if !(range[0].is_finite() && range[1].is_finite()) || range[0] > range[1] {
                    return Err(Error::Schema(format!(
                        "`{}` has invalid range [{}, {}]",
                        self.name, range[0], range[1]
                    )));
                }
            }
        }
        Ok(())
    }
}

/// The protected attribute: one feature or a named intersection of features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Protected {
    pub name: String,
    pub features: Vec<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ProtectedDecl {
    Single(String),
    Named { name: String, features: Vec<String> },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchema {
    features: Vec<FeatureSpec>,
    label: FeatureSpec,
    protected: ProtectedDecl,
}

#[derive(Serialize)]
struct SchemaOut<'a> {
    features: &'a [FeatureSpec],
    label: &'a FeatureSpec,
    protected: &'a Protected,
}

/// Column layout every record obeys. Feature order is the canonical
/// serialization order; the label always comes last.
#[derive(Clone, Debug, PartialEq)]
pub struct Schema {
    features: Vec<FeatureSpec>,
    label: FeatureSpec,
    protected: Protected,
    protected_idx: Vec<usize>,
}

impl Schema {
    pub fn new(features: Vec<FeatureSpec>, label: FeatureSpec, protected: Protected) -> Result<Self> {
        let mut names = HashSet::new();
        for f in &features {
            f.validate()?;
            if !names.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature `{}`", f.name)));
            }
        }
        label.validate()?;
        if !label.is_categorical() {
            return Err(Error::Schema(format!("label `{}` must be categorical", label.name)));
        }
        if names.contains(label.name.as_str()) {
            return Err(Error::Schema(format!(
                "label `{}` collides with a feature name",
                label.name
            )));
        }
        if protected.features.is_empty() {
            return Err(Error::Schema("protected attribute lists no features".into()));
        }
        let mut protected_idx = Vec::with_capacity(protected.features.len());
        for p in &protected.features {
            let idx = features
                .iter()
                .position(|f| &f.name == p)
                .ok_or_else(|| Error::Schema(format!("protected feature `{p}` is not declared")))?;
            if protected_idx.contains(&idx) {
                return Err(Error::Schema(format!("protected feature `{p}` listed twice")));
            }
            protected_idx.push(idx);
        }
        Ok(Schema {
            features,
            label,
            protected,
            protected_idx,
        })
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawSchema = serde_json::from_str(text)?;
        let protected = match raw.protected {
            ProtectedDecl::Single(name) => Protected {
                features: vec![name.clone()],
                name,
            },
            ProtectedDecl::Named { name, features } => Protected { name, features },
        };
        Schema::new(raw.features, raw.label, protected)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Schema::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&SchemaOut {
            features: &self.features,
            label: &self.label,
            protected: &self.protected,
        })
        .expect("schema serializes")
    }

    pub fn features(&self) -> &[FeatureSpec] {
        &self.features
    }

    pub fn feature(&self, index: usize) -> &FeatureSpec {
        &self.features[index]
    }

    pub fn n_features(&self) -> usize {
        self.features.len()
    }

    pub fn label(&self) -> &FeatureSpec {
        &self.label
    }

    pub fn n_labels(&self) -> usize {
        self.label.cardinality()
    }

    pub fn label_index(&self, value: &str) -> Option<u32> {
        self.label.category_index(value)
    }

    pub fn label_name(&self, index: u32) -> &str {
        self.label.category_name(index)
    }

    pub fn protected(&self) -> &Protected {
        &self.protected
    }

    /// Feature indices of the protected attribute, in declaration order.
    pub fn protected_indices(&self) -> &[usize] {
        &self.protected_idx
    }

    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn require_feature(&self, name: &str) -> Result<usize> {
        self.feature_index(name)
            .ok_or_else(|| Error::Schema(format!("unknown feature `{name}`")))
    }

    /// Column names in serialization order: features, then the label.
    pub fn key_order(&self) -> Vec<&str> {
        self.features
            .iter()
            .map(|f| f.name.as_str())
            .chain(std::iter::once(self.label.name.as_str()))
            .collect()
    }
}
