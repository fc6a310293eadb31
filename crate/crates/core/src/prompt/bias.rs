use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{uniform_in, Conjunct, FeatureKind, Predicate, Record, Schema, Value};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasMode {
    Marginal,
    Conditional,
    Intersectional,
    Adversarial,
}

impl BiasMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BiasMode::Marginal => "marginal",
            BiasMode::Conditional => "conditional",
            BiasMode::Intersectional => "intersectional",
            BiasMode::Adversarial => "adversarial",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
}

/// One intersectional cell and which way its positive rate is pushed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellTarget {
    pub cell: Vec<Conjunct>,
    pub direction: Direction,
}

/// How an aligned feature's value is produced.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleGenerator {
    /// Uniform integer in `[lo, hi]`.
    UniformInt([i64; 2]),
    /// Uniform real in `[lo, hi]`.
    UniformReal([f64; 2]),
    Fixed(String),
    Choice(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignmentRule {
    pub feature: String,
    #[serde(flatten)]
    pub generator: RuleGenerator,
}

impl AlignmentRule {
    pub fn uniform_int(feature: &str, lo: i64, hi: i64) -> Self {
        AlignmentRule {
            feature: feature.into(),
            generator: RuleGenerator::UniformInt([lo, hi]),
        }
    }

    pub fn uniform_real(feature: &str, lo: f64, hi: f64) -> Self {
        AlignmentRule {
            feature: feature.into(),
            generator: RuleGenerator::UniformReal([lo, hi]),
        }
    }

    pub fn fixed(feature: &str, value: &str) -> Self {
        AlignmentRule {
            feature: feature.into(),
            generator: RuleGenerator::Fixed(value.into()),
        }
    }

    pub fn choice(feature: &str, values: &[&str]) -> Self {
        AlignmentRule {
            feature: feature.into(),
            generator: RuleGenerator::Choice(values.iter().map(|v| v.to_string()).collect()),
        }
    }

    /// Whether `value` is one the rule can produce.
    pub fn admits(&self, schema: &Schema, value: Value) -> bool {
        let Some(idx) = schema.feature_index(&self.feature) else {
            return false;
        };
        let spec = schema.feature(idx);
        match (&self.generator, value) {
            (RuleGenerator::UniformInt([lo, hi]), Value::Number(x)) => {
                x >= *lo as f64 && x <= *hi as f64
            }
            (RuleGenerator::UniformReal([lo, hi]), Value::Number(x)) => x >= *lo && x <= *hi,
            (RuleGenerator::Fixed(v), Value::Category(c)) => spec.category_name(c) == v,
            (RuleGenerator::Fixed(v), Value::Number(x)) => v.parse::<f64>().is_ok_and(|y| y == x),
            (RuleGenerator::Choice(vs), Value::Category(c)) => {
                vs.iter().any(|v| v == spec.category_name(c))
            }
            (RuleGenerator::Choice(vs), Value::Number(x)) => {
                vs.iter().any(|v| v.parse::<f64>().is_ok_and(|y| y == x))
            }
            _ => false,
        }
    }
}

/// Declarative description of an in-context bias injection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasSpec {
    pub mode: BiasMode,
    /// Overridden per grid point in sweeps.
    #[serde(default)]
    pub pi: f64,
    /// Targeted subgroup (marginal, conditional, adversarial).
    #[serde(default)]
    pub target: Vec<Conjunct>,
    /// Label treated as positive (conditional, intersectional) or forced
    /// on crafted records (adversarial).
    #[serde(default)]
    pub target_label: Option<String>,
    #[serde(default = "default_non_target_rate")]
    pub non_target_positive_rate: f64,
    #[serde(default)]
    pub cells: Vec<CellTarget>,
    #[serde(default)]
    pub alignment: Vec<AlignmentRule>,
}

fn default_non_target_rate() -> f64 {
    0.5
}

impl BiasSpec {
    pub fn marginal(target: Vec<Conjunct>, pi: f64) -> Self {
        BiasSpec {
            mode: BiasMode::Marginal,
            pi,
            target,
            target_label: None,
            non_target_positive_rate: 0.5,
            cells: Vec::new(),
            alignment: Vec::new(),
        }
    }

    pub fn conditional(target: Vec<Conjunct>, positive_label: &str, pi: f64) -> Self {
        BiasSpec {
            mode: BiasMode::Conditional,
            target_label: Some(positive_label.into()),
            ..BiasSpec::marginal(target, pi)
        }
    }

    pub fn intersectional(cells: Vec<CellTarget>, positive_label: &str, pi: f64) -> Self {
        BiasSpec {
            mode: BiasMode::Intersectional,
            target_label: Some(positive_label.into()),
            cells,
            ..BiasSpec::marginal(Vec::new(), pi)
        }
    }

    pub fn adversarial(
        target: Vec<Conjunct>,
        target_label: &str,
        alignment: Vec<AlignmentRule>,
        pi: f64,
    ) -> Self {
        BiasSpec {
            mode: BiasMode::Adversarial,
            target_label: Some(target_label.into()),
            alignment,
            ..BiasSpec::marginal(target, pi)
        }
    }

    pub fn with_pi(&self, pi: f64) -> Self {
        BiasSpec { pi, ..self.clone() }
    }

    /// Check the spec against `schema` and resolve names to indices.
    pub fn compile(&self, schema: &Schema) -> Result<CompiledBias> {
        if !(0.0..=1.0).contains(&self.pi) {
            return Err(Error::BiasSpec(format!("pi = {} outside [0, 1]", self.pi)));
        }
        if !(0.0..=1.0).contains(&self.non_target_positive_rate) {
            return Err(Error::BiasSpec(format!(
                "non-target positive rate {} outside [0, 1]",
                self.non_target_positive_rate
            )));
        }
        let label = match &self.target_label {
            Some(l) => Some(schema.label_index(l).ok_or_else(|| {
                Error::BiasSpec(format!("label `{l}` not in label support"))
            })?),
            None => None,
        };
        let need_label = |what: &str| {
            label.ok_or_else(|| Error::BiasSpec(format!("{what} mode needs a target label")))
        };
        let compile_target = || -> Result<Predicate> {
            if self.target.is_empty() {
                return Err(Error::BiasSpec("target subgroup is empty".into()));
            }
            Predicate::compile(&self.target, schema).map_err(|e| Error::BiasSpec(e.to_string()))
        };
        let mut compiled = CompiledBias {
            mode: self.mode,
            pi: self.pi,
            target: None,
            label: None,
            non_target_rate: self.non_target_positive_rate,
            cells: Vec::new(),
            rules: Vec::new(),
        };
        match self.mode {
            BiasMode::Marginal => compiled.target = Some(compile_target()?),
            BiasMode::Conditional => {
                compiled.target = Some(compile_target()?);
                compiled.label = Some(need_label("conditional")?);
            }
            BiasMode::Intersectional => {
                compiled.label = Some(need_label("intersectional")?);
                if self.cells.len() != 4 {
                    return Err(Error::BiasSpec(format!(
                        "intersectional mode needs exactly four cells, got {}",
                        self.cells.len()
                    )));
                }
                let ups = self.cells.iter().filter(|c| c.direction == Direction::Up).count();
                if ups != 2 {
                    return Err(Error::BiasSpec(format!(
                        "intersectional mode needs two up and two down cells, got {ups} up"
                    )));
                }
                for c in &self.cells {
                    let p = Predicate::compile(&c.cell, schema)
                        .map_err(|e| Error::BiasSpec(e.to_string()))?;
                    compiled.cells.push((p, c.direction));
                }
            }
            BiasMode::Adversarial => {
                compiled.target = Some(compile_target()?);
                compiled.label = Some(need_label("adversarial")?);
                for r in &self.alignment {
                    compiled.rules.push(CompiledRule::new(r, schema)?);
                }
            }
        }
        Ok(compiled)
    }
}

/// A [`BiasSpec`] resolved against a schema.
#[derive(Clone, Debug)]
pub struct CompiledBias {
    pub mode: BiasMode,
    pub pi: f64,
    pub target: Option<Predicate>,
    pub label: Option<u32>,
    pub non_target_rate: f64,
    pub cells: Vec<(Predicate, Direction)>,
    pub rules: Vec<CompiledRule>,
}

impl CompiledBias {
    pub(crate) fn target(&self) -> &Predicate {
        self.target.as_ref().expect("mode has a target")
    }

    pub(crate) fn label(&self) -> u32 {
        self.label.expect("mode has a label")
    }
}

#[derive(Clone, Debug)]
pub struct CompiledRule {
    pub feature: usize,
    pub rule: AlignmentRule,
    kind: RuleKind,
}

#[derive(Clone, Debug)]
enum RuleKind {
    Int(i64, i64),
    Real(f64, f64),
    Values(Vec<Value>),
}

impl CompiledRule {
    fn new(rule: &AlignmentRule, schema: &Schema) -> Result<Self> {
        let feature = schema
            .feature_index(&rule.feature)
            .ok_or_else(|| Error::BiasSpec(format!("rule on unknown feature `{}`", rule.feature)))?;
        let spec = schema.feature(feature);
        let bad = |why: String| Error::BiasSpec(format!("rule on `{}`: {why}", rule.feature));
        let value_of = |s: &str| -> Result<Value> {
            match &spec.kind {
                FeatureKind::Categorical { .. } => spec
                    .category_index(s)
                    .map(Value::Category)
                    .ok_or_else(|| bad(format!("`{s}` not in support"))),
                FeatureKind::Numerical { range, .. } => {
                    let x: f64 = s.parse().map_err(|_| bad(format!("`{s}` is not a number")))?;
                    if x < range[0] || x > range[1] {
                        return Err(bad(format!("{x} outside range")));
                    }
                    Ok(Value::Number(x))
                }
            }
        };
        let ranged = matches!(
            rule.generator,
            RuleGenerator::UniformInt(_) | RuleGenerator::UniformReal(_)
        );
        if ranged && spec.is_categorical() {
            return Err(bad("numeric range on a categorical feature".into()));
        }
        let kind = match &rule.generator {
            RuleGenerator::UniformInt([lo, hi]) => {
                let (a, b) = spec.range().expect("numerical");
                if lo > hi || (*lo as f64) < a || (*hi as f64) > b {
                    return Err(bad(format!("[{lo}, {hi}] not inside [{a}, {b}]")));
                }
                RuleKind::Int(*lo, *hi)
            }
            RuleGenerator::UniformReal([lo, hi]) => {
                let (a, b) = spec.range().expect("numerical");
                if !(lo <= hi) || *lo < a || *hi > b {
                    return Err(bad(format!("[{lo}, {hi}] not inside [{a}, {b}]")));
                }
                if spec.is_integer() {
                    return Err(bad("real range on an integer feature".into()));
                }
                RuleKind::Real(*lo, *hi)
            }
            RuleGenerator::Fixed(v) => RuleKind::Values(vec![value_of(v)?]),
            RuleGenerator::Choice(vs) => {
                if vs.is_empty() {
                    return Err(bad("empty choice set".into()));
                }
                RuleKind::Values(vs.iter().map(|v| value_of(v)).collect::<Result<_>>()?)
            }
        };
        Ok(CompiledRule {
            feature,
            rule: rule.clone(),
            kind,
        })
    }

    pub fn apply<R: Rng + ?Sized>(&self, record: &mut Record, rng: &mut R) {
        record.values[self.feature] = match &self.kind {
            RuleKind::Int(lo, hi) => Value::Number(rng.random_range(*lo..=*hi) as f64),
            RuleKind::Real(lo, hi) => Value::Number(uniform_in(*lo, *hi, false, rng)),
            RuleKind::Values(vs) => vs[rng.random_range(0..vs.len())],
        };
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureSpec, Protected};

    fn schema() -> Schema {
        Schema::new(
            vec![
                FeatureSpec::integer("priors", 0.0, 40.0),
                FeatureSpec::categorical("race", ["African-American", "Caucasian"]),
                FeatureSpec::categorical("degree", ["F", "M"]),
                FeatureSpec::numerical("bmi", 10.0, 60.0),
            ],
            FeatureSpec::categorical("y", ["0", "1"]),
            Protected {
                name: "race".into(),
                features: vec!["race".into()],
            },
        )
        .unwrap()
    }

    #[test]
    fn rule_serde_shape() {
        let r: AlignmentRule =
            serde_json::from_str(r#"{"feature":"priors","uniform_int":[3,8]}"#).unwrap();
        assert_eq!(r, AlignmentRule::uniform_int("priors", 3, 8));
        let c: AlignmentRule =
            serde_json::from_str(r#"{"feature":"degree","choice":["M","F"]}"#).unwrap();
        assert_eq!(c, AlignmentRule::choice("degree", &["M", "F"]));
    }

    #[test]
    fn rules_must_fit_schema() {
        let s = schema();
        let target = vec![Conjunct::equals("race", "African-American")];
        let ok = BiasSpec::adversarial(
            target.clone(),
            "1",
            vec![
                AlignmentRule::uniform_int("priors", 3, 8),
                AlignmentRule::choice("degree", &["M", "F"]),
                AlignmentRule::uniform_real("bmi", 27.0, 33.0),
            ],
            0.3,
        );
        assert!(ok.compile(&s).is_ok());
        for bad in [
            AlignmentRule::uniform_int("priors", 3, 80),
            AlignmentRule::choice("degree", &["X"]),
            AlignmentRule::uniform_int("degree", 0, 1),
            AlignmentRule::fixed("nope", "1"),
        ] {
            let spec = BiasSpec::adversarial(target.clone(), "1", vec![bad], 0.3);
            assert!(spec.compile(&s).is_err());
        }
    }

    #[test]
    fn pi_bounds_and_labels() {
        let s = schema();
        let t = vec![Conjunct::equals("race", "African-American")];
        assert!(BiasSpec::marginal(t.clone(), 1.5).compile(&s).is_err());
        assert!(BiasSpec::conditional(t.clone(), "7", 0.5).compile(&s).is_err());
        assert!(BiasSpec::marginal(vec![], 0.5).compile(&s).is_err());
    }

    #[test]
    fn rule_application_stays_in_range() {
        let s = schema();
        let rule = CompiledRule::new(&AlignmentRule::uniform_int("priors", 3, 8), &s).unwrap();
        let mut rng = rand::rng();
        let mut r = Record::from_strs(&s, &["0", "Caucasian", "F", "20", "0"]);
        for _ in 0..100 {
            rule.apply(&mut r, &mut rng);
            assert!(rule.rule.admits(&s, r.values[0]));
            assert_eq!(r.number(0).fract(), 0.0);
        }
    }
}
