use super::bias::{AlignmentRule, BiasSpec};
use crate::data::{Conjunct, SubgroupSpec};
use crate::error::{Error, Result};

/// Attack settings for one of the bundled dataset shapes.
#[derive(Clone, Debug, PartialEq)]
pub struct AttackPreset {
    pub dataset: &'static str,
    /// Targeted (unprivileged) subgroup and the label used for fairness
    /// metrics.
    pub subgroup: SubgroupSpec,
    /// Label forced on crafted examples.
    pub target_label: &'static str,
    pub rules: Vec<AlignmentRule>,
}

impl AttackPreset {
    pub fn bias_spec(&self, pi: f64) -> BiasSpec {
        BiasSpec::adversarial(
            self.subgroup.unprivileged.clone(),
            self.target_label,
            self.rules.clone(),
            pi,
        )
    }
}

/// Feature-aligned attack definitions for `compas`, `adult`, `diabetes`
/// and `thyroid`, using the column names of the bundled fixtures.
pub fn adversarial_preset(dataset: &str) -> Result<AttackPreset> {
    let p = match dataset {
        "compas" => AttackPreset {
            dataset: "compas",
            subgroup: SubgroupSpec::new(vec![Conjunct::equals("race", "African-American")], "0"),
            target_label: "1",
            rules: vec![
                AlignmentRule::uniform_int("priors_count", 3, 8),
                AlignmentRule::uniform_int("age", 18, 45),
                AlignmentRule::fixed("juv_fel_count", "0"),
                AlignmentRule::choice("c_charge_degree", &["M", "F"]),
            ],
        },
        "adult" => AttackPreset {
            dataset: "adult",
            subgroup: SubgroupSpec::new(
                vec![
                    Conjunct::equals("gender", "Female"),
                    Conjunct::equals("marital-status", "Married-civ-spouse"),
                    Conjunct::equals("native-country", "United-States"),
                ],
                ">50K",
            ),
            target_label: ">50K",
            rules: vec![
                AlignmentRule::uniform_int("age", 30, 55),
                AlignmentRule::choice("education", &["HS-grad", "Some-college"]),
                AlignmentRule::uniform_int("hours-per-week", 38, 41),
                AlignmentRule::uniform_int("capital-loss", 0, 50),
            ],
        },
        "diabetes" => AttackPreset {
            dataset: "diabetes",
            subgroup: SubgroupSpec::new(vec![Conjunct::interval("Age", 21.0, 30.0)], "0"),
            target_label: "1",
            rules: vec![
                AlignmentRule::uniform_int("Glucose", 120, 155),
                AlignmentRule::uniform_real("BMI", 27.0, 33.0),
                AlignmentRule::uniform_int("Insulin", 80, 180),
                AlignmentRule::uniform_real("DiabetesPedigreeFunction", 0.6, 1.2),
            ],
        },
        "thyroid" => AttackPreset {
            dataset: "thyroid",
            subgroup: SubgroupSpec::new(vec![Conjunct::interval("age", 20.0, 35.0)], "2"),
            target_label: "2",
            rules: vec![
                AlignmentRule::choice("goiter", &["0", "1"]),
                AlignmentRule::choice("family_history", &["0", "1"]),
                AlignmentRule::choice("fatigue", &["0", "1"]),
                AlignmentRule::fixed("gender", "0"),
            ],
        },
        other => return Err(Error::Config(format!("no attack preset for dataset `{other}`"))),
    };
    Ok(p)
}
