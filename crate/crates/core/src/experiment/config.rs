use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::data::{load_dataset, Conjunct, Dataset, Schema, SubgroupSpec};
use crate::downstream::{ClassifierSpec, FeaturePolicy, ModelKind};
use crate::error::{Error, Result};
use crate::fixtures::Fixture;
use crate::generate::{AnchorSpec, EndpointConfig, DEFAULT_TAU};
use crate::mitigation::{KStar, MitigationConfig, Strategy};
use crate::prompt::{adversarial_preset, AlignmentRule, BiasSpec, GroupPair, TemplateId};

/// Where the real data comes from: a bundled fixture or a CSV plus schema.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    #[serde(default)]
    pub fixture: Option<String>,
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub schema: Option<PathBuf>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub split_seed: u64,
}

fn default_train_fraction() -> f64 {
    0.8
}

impl DatasetConfig {
    pub fn fixture(f: Fixture) -> Self {
        DatasetConfig {
            fixture: Some(f.as_str().into()),
            path: None,
            schema: None,
            train_fraction: default_train_fraction(),
            split_seed: 0,
        }
    }

    pub fn as_fixture(&self) -> Result<Option<Fixture>> {
        self.fixture.as_deref().map(str::parse).transpose()
    }

    /// Relative paths resolve against `base`.
    pub fn load(&self, base: &Path) -> Result<Dataset> {
        match (self.as_fixture()?, &self.path, &self.schema) {
            (Some(f), None, None) => Ok(f.load()),
            (None, Some(path), Some(schema)) => {
                let schema = Arc::new(Schema::from_json_file(base.join(schema))?);
                load_dataset(base.join(path), schema)
            }
            _ => Err(Error::Config(
                "dataset needs either `fixture` or both `path` and `schema`".into(),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorConfig {
    Simulated {
        #[serde(default = "default_tau")]
        tau: f64,
        /// Declared anchor; fitted to the training split when absent.
        #[serde(default)]
        anchor: Option<AnchorSpec>,
    },
    Endpoint(EndpointConfig),
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig::Simulated {
            tau: DEFAULT_TAU,
            anchor: None,
        }
    }
}

impl GeneratorConfig {
    pub fn tag(&self) -> String {
        match self {
            GeneratorConfig::Simulated { .. } => "simulated".into(),
            GeneratorConfig::Endpoint(e) => format!("endpoint:{}", e.model),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateConfig {
    #[serde(default = "default_template")]
    pub id: TemplateId,
    #[serde(default = "default_domain")]
    pub domain: String,
    /// Subgroup pair named by the balanced template.
    #[serde(default)]
    pub pair: Option<GroupPair>,
}

fn default_template() -> TemplateId {
    TemplateId::Unconstrained
}
fn default_domain() -> String {
    "tabular".into()
}

impl Default for TemplateConfig {
    fn default() -> Self {
        TemplateConfig {
            id: default_template(),
            domain: default_domain(),
            pair: None,
        }
    }
}

/// Feature-aligned attack; unset fields come from the fixture preset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackConfig {
    #[serde(default)]
    pub target: Option<Vec<Conjunct>>,
    #[serde(default)]
    pub target_label: Option<String>,
    #[serde(default)]
    pub rules: Option<Vec<AlignmentRule>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MitigationSweep {
    #[serde(default = "default_strategies")]
    pub strategies: Vec<Strategy>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_drop_fraction")]
    pub drop_fraction: f64,
    #[serde(default)]
    pub k_star: KStar,
}

fn default_strategies() -> Vec<Strategy> {
    Strategy::ALL.to_vec()
}
fn default_epsilon() -> f64 {
    MitigationConfig::default().epsilon
}
fn default_drop_fraction() -> f64 {
    MitigationConfig::default().drop_fraction
}

impl Default for MitigationSweep {
    fn default() -> Self {
        MitigationSweep {
            strategies: default_strategies(),
            epsilon: default_epsilon(),
            drop_fraction: default_drop_fraction(),
            k_star: KStar::default(),
        }
    }
}

impl MitigationSweep {
    pub fn config(&self, strategy: Strategy) -> MitigationConfig {
        MitigationConfig {
            strategy,
            epsilon: self.epsilon,
            drop_fraction: self.drop_fraction,
            k_star: self.k_star,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    pub dataset: DatasetConfig,
    /// Defaults to the fixture's preset subgroup.
    #[serde(default)]
    pub subgroup: Option<SubgroupSpec>,
    #[serde(default)]
    pub generator: GeneratorConfig,
    #[serde(default)]
    pub template: TemplateConfig,
    #[serde(default = "default_k_grid")]
    pub k_grid: Vec<usize>,
    #[serde(default = "default_pi_grid")]
    pub pi_grid: Vec<f64>,
    #[serde(default = "default_n_synthetic")]
    pub n_synthetic: usize,
    #[serde(default = "default_batch")]
    pub batch: usize,
    #[serde(default = "default_refresh")]
    pub refresh_period: usize,
    /// Contiguous blocks for the SPD_S mean and std.
    #[serde(default = "default_blocks")]
    pub blocks: usize,
    /// Propagation bias; its `pi` is replaced by each grid value.
    #[serde(default)]
    pub bias: Option<BiasSpec>,
    #[serde(default)]
    pub attack: AttackConfig,
    /// Prompt size of the k-shot anchor reference; the grid point's `k`
    /// when unset.
    #[serde(default)]
    pub reference_k: Option<usize>,
    #[serde(default)]
    pub mitigation: MitigationSweep,
    #[serde(default = "default_classifiers")]
    pub classifiers: Vec<ClassifierSpec>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_k_grid() -> Vec<usize> {
    vec![20, 40, 60, 80]
}
fn default_pi_grid() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 1.0]
}
fn default_n_synthetic() -> usize {
    5000
}
fn default_batch() -> usize {
    2
}
fn default_refresh() -> usize {
    10
}
fn default_blocks() -> usize {
    5
}
fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}
fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_classifiers() -> Vec<ClassifierSpec> {
    let mut out = Vec::new();
    for kind in [ModelKind::LogisticRegression, ModelKind::RandomForest] {
        for policy in [FeaturePolicy::AttributeAware, FeaturePolicy::AttributeBlind] {
            out.push(ClassifierSpec::new(kind, policy));
        }
    }
    out
}

impl ExperimentConfig {
    /// Defaults everywhere except the dataset.
    pub fn new(id: &str, dataset: DatasetConfig) -> Self {
        ExperimentConfig {
            id: id.into(),
            dataset,
            subgroup: None,
            generator: GeneratorConfig::default(),
            template: TemplateConfig::default(),
            k_grid: default_k_grid(),
            pi_grid: default_pi_grid(),
            n_synthetic: default_n_synthetic(),
            batch: default_batch(),
            refresh_period: default_refresh(),
            blocks: default_blocks(),
            bias: None,
            attack: AttackConfig::default(),
            reference_k: None,
            mitigation: MitigationSweep::default(),
            classifiers: default_classifiers(),
            seeds: default_seeds(),
            out_dir: default_out_dir(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Parse a config file. A relative `out_dir` stays relative to the
    /// working directory; dataset paths resolve against the file's folder.
    pub fn from_file(path: impl AsRef<Path>) -> Result<(Self, PathBuf)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::from_toml_str(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.id.is_empty() {
            return bad("`id` must not be empty".into());
        }
        if self.k_grid.is_empty() {
            return bad("`k_grid` must not be empty".into());
        }
        if self.pi_grid.is_empty() {
            return bad("`pi_grid` must not be empty".into());
        }
        if let Some(pi) = self.pi_grid.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return bad(format!("pi {pi} outside [0, 1]"));
        }
        if self.seeds.is_empty() {
            return bad("`seeds` must not be empty".into());
        }
        if self.blocks == 0 {
            return bad("`blocks` must be positive".into());
        }
        if self.n_synthetic < self.blocks {
            return bad(format!(
                "n_synthetic = {} is smaller than blocks = {}",
                self.n_synthetic, self.blocks
            ));
        }
        if self.batch == 0 || self.refresh_period == 0 {
            return bad("`batch` and `refresh_period` must be positive".into());
        }
        if !(self.dataset.train_fraction > 0.0 && self.dataset.train_fraction < 1.0) {
            return bad(format!("train_fraction {} outside (0, 1)", self.dataset.train_fraction));
        }
        if self.reference_k == Some(0) {
            return bad("`reference_k` must be positive".into());
        }
        match &self.generator {
            GeneratorConfig::Simulated { tau, .. } if !(*tau > 0.0 && tau.is_finite()) => {
                return bad(format!("tau must be positive, got {tau}"));
            }
            GeneratorConfig::Endpoint(e) => e.validate()?,
            _ => {}
        }
        self.dataset.as_fixture()?;
        for s in &self.mitigation.strategies {
            self.mitigation.config(*s).validate()?;
        }
        Ok(())
    }

    pub fn subgroup_spec(&self) -> Result<SubgroupSpec> {
        if let Some(s) = &self.subgroup {
            return Ok(s.clone());
        }
        match self.dataset.as_fixture()? {
            Some(f) => Ok(f.subgroup()),
            None => Err(Error::Config("`subgroup` is required for a dataset given by path".into())),
        }
    }

    /// Attack bias at intensity `pi`, filling gaps from the preset.
    pub fn attack_spec(&self, pi: f64) -> Result<BiasSpec> {
        let preset = match self.dataset.as_fixture()? {
            Some(f) => Some(adversarial_preset(f.as_str())?),
            None => None,
        };
        let target = match (&self.attack.target, &self.subgroup) {
            (Some(t), _) => t.clone(),
            (None, Some(s)) => s.unprivileged.clone(),
            (None, None) => self.subgroup_spec()?.unprivileged,
        };
        let label = match (&self.attack.target_label, &preset) {
            (Some(l), _) => l.clone(),
            (None, Some(p)) => p.target_label.to_string(),
            (None, None) => return Err(Error::Config("attack needs `target_label`".into())),
        };
        let rules = match (&self.attack.rules, &preset) {
            (Some(r), _) => r.clone(),
            (None, Some(p)) => p.rules.clone(),
            (None, None) => return Err(Error::Config("attack needs alignment `rules`".into())),
        };
        Ok(BiasSpec::adversarial(target, &label, rules, pi))
    }
}
