use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{Conjunct, FeatureKind, Record, Schema};
use crate::data::json_cell;
use crate::error::{Error, Result};

const ICL_PLACEHOLDER: &str = "{icl_examples}";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    Unconstrained,
    Balanced,
    IntersectionalBalanced,
    NoMirroring,
}

impl TemplateId {
    pub const ALL: [TemplateId; 4] = [
        TemplateId::Unconstrained,
        TemplateId::Balanced,
        TemplateId::IntersectionalBalanced,
        TemplateId::NoMirroring,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Unconstrained => "unconstrained",
            TemplateId::Balanced => "balanced",
            TemplateId::IntersectionalBalanced => "intersectional_balanced",
            TemplateId::NoMirroring => "no_mirroring",
        }
    }

    fn asset(self) -> &'static str {
        match self {
            TemplateId::Unconstrained => include_str!("../../templates/unconstrained.txt"),
            TemplateId::Balanced => include_str!("../../templates/balanced.txt"),
            TemplateId::IntersectionalBalanced => {
                include_str!("../../templates/intersectional_balanced.txt")
            }
            TemplateId::NoMirroring => include_str!("../../templates/no_mirroring.txt"),
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Template(format!("unknown template `{s}`")))
    }
}

/// A system role plus a user instruction with `{placeholder}` slots.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptTemplate {
    pub id: TemplateId,
    pub role: String,
    pub instruction: String,
}

impl PromptTemplate {
    /// The shipped template text for `id`.
    pub fn builtin(id: TemplateId) -> PromptTemplate {
        PromptTemplate::parse(id, id.asset()).expect("bundled template is well formed")
    }

    /// Parse a template asset made of a `[system]` and a `[user]` section.
    pub fn parse(id: TemplateId, text: &str) -> Result<PromptTemplate> {
        let text = text.replace("\r\n", "\n");
        let rest = text
            .trim_start()
            .strip_prefix("[system]\n")
            .ok_or_else(|| Error::Template("template must start with [system]".into()))?;
        let (role, instruction) = rest
            .split_once("\n[user]\n")
            .ok_or_else(|| Error::Template("template has no [user] section".into()))?;
        let n = instruction.matches(ICL_PLACEHOLDER).count() + role.matches(ICL_PLACEHOLDER).count();
        if n != 1 {
            return Err(Error::Template(format!(
                "template must contain exactly one {ICL_PLACEHOLDER}, found {n}"
            )));
        }
        Ok(PromptTemplate {
            id,
            role: role.trim_end().to_string(),
            instruction: instruction.trim_end().to_string(),
        })
    }

    /// Samples the template asks for per call.
    pub fn samples_per_call(&self, ctx: &TemplateContext) -> usize {
        self.strata(ctx).len()
    }

    /// One entry per requested sample: the conditions that sample must
    /// satisfy. Unconstrained templates request `batch` free samples.
    pub fn strata(&self, ctx: &TemplateContext) -> Vec<Vec<Conjunct>> {
        match self.id {
            TemplateId::Unconstrained | TemplateId::NoMirroring => vec![Vec::new(); ctx.batch],
            TemplateId::Balanced => match &ctx.pair {
                Some(p) => vec![
                    vec![Conjunct::equals(&p.feature, &p.first)],
                    vec![Conjunct::equals(&p.feature, &p.second)],
                ],
                None => vec![Vec::new(); 2],
            },
            TemplateId::IntersectionalBalanced => {
                if ctx.cells.is_empty() {
                    vec![Vec::new(); 4]
                } else {
                    ctx.cells.clone()
                }
            }
        }
    }
}

/// Subgroup pair named by the balanced template, e.g. `race: White, Black`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupPair {
    pub feature: String,
    pub first: String,
    pub second: String,
}

/// Everything besides the examples that a template needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateContext {
    /// Fills "using your knowledge of {domain} data".
    pub domain: String,
    /// Samples per call for the unconstrained templates.
    pub batch: usize,
    #[serde(default)]
    pub pair: Option<GroupPair>,
    /// Intersectional cells, each a list of equality conjuncts.
    #[serde(default)]
    pub cells: Vec<Vec<Conjunct>>,
}

impl TemplateContext {
    pub fn new(domain: &str, batch: usize) -> Self {
        TemplateContext {
            domain: domain.to_string(),
            batch,
            pair: None,
            cells: Vec::new(),
        }
    }

    pub fn with_pair(mut self, feature: &str, first: &str, second: &str) -> Self {
        self.pair = Some(GroupPair {
            feature: feature.into(),
            first: first.into(),
            second: second.into(),
        });
        self
    }

    pub fn with_cells(mut self, cells: Vec<Vec<Conjunct>>) -> Self {
        self.cells = cells;
        self
    }
}

/// A prompt ready to send, with the examples it embeds.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptBundle {
    pub template: TemplateId,
    pub examples: Vec<Record>,
    pub system: String,
    pub user: String,
    pub rendered: String,
    pub k: usize,
    /// Objects the rendered prompt asks for.
    pub samples_per_call: usize,
    pub refresh_counter: usize,
}

/// Render `template` with `examples` serialized in schema key order.
pub fn compose_prompt(
    template: &PromptTemplate,
    examples: &[Record],
    schema: &Schema,
    ctx: &TemplateContext,
) -> PromptBundle {
    let count = template.samples_per_call(ctx);
    let icl = icl_block(examples, schema);
    let fill = |text: &str| {
        let mut out = text
            .replace("{domain}", &ctx.domain)
            .replace("{count_word}", &count_word(count))
            .replace("{key_contract}", &key_contract(schema))
            .replace("{output_example}", &output_example(count));
        if let Some(p) = &ctx.pair {
            out = out
                .replace("{group_feature}", &p.feature)
                .replace("{group_a}", &p.first)
                .replace("{group_b}", &p.second);
        }
        out = out
            .replace("{cell_axes}", &cell_axes(&ctx.cells, schema))
            .replace("{cell_list}", &cell_list(&ctx.cells));
        // examples last so their contents are never treated as placeholders
        out.replace(ICL_PLACEHOLDER, &icl)
    };
    let system = fill(&template.role);
    let user = fill(&template.instruction);
    let rendered = format!("System role:\n{system}\n\nUser instructions:\n{user}\n");
    PromptBundle {
        template: template.id,
        examples: examples.to_vec(),
        system,
        user,
        rendered,
        k: examples.len(),
        samples_per_call: count,
        refresh_counter: 0,
    }
}

/// JSON array with one object per line; empty string when there are no
/// examples.
pub fn icl_block(examples: &[Record], schema: &Schema) -> String {
    if examples.is_empty() {
        return String::new();
    }
    let lines: Vec<String> = examples
        .iter()
        .map(|r| serde_json::to_string(&record_json(r, schema)).expect("record serializes"))
        .collect();
    format!("[\n{}\n]", lines.join(",\n"))
}

/// Record as a JSON object with keys in schema order, label last.
pub fn record_json(r: &Record, schema: &Schema) -> serde_json::Value {
    let mut obj = serde_json::Map::new();
    for (spec, v) in schema.features().iter().zip(&r.values) {
        obj.insert(spec.name.clone(), json_cell(spec, *v));
    }
    obj.insert(
        schema.label().name.clone(),
        serde_json::Value::String(schema.label_name(r.label).to_string()),
    );
    serde_json::Value::Object(obj)
}

fn key_contract(schema: &Schema) -> String {
    let mut lines = vec!["{".to_string()];
    for spec in schema.features().iter().chain(std::iter::once(schema.label())) {
        let ty = match &spec.kind {
            FeatureKind::Categorical { .. } => "string",
            FeatureKind::Numerical { integer: true, .. } => "int",
            FeatureKind::Numerical { .. } => "float",
        };
        lines.push(format!("\"{}\": \"{ty}\",", spec.name));
    }
    lines.push("}".to_string());
    lines.join("\n")
}

fn output_example(count: usize) -> String {
    let items: Vec<String> = (1..=count).map(|i| format!("  {{example {i}}}")).collect();
    format!("[\n{}\n]", items.join(",\n"))
}

fn count_word(n: usize) -> String {
    const WORDS: [&str; 11] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    ];
    WORDS.get(n).map_or_else(|| n.to_string(), |w| w.to_string())
}

fn cell_axes(cells: &[Vec<Conjunct>], schema: &Schema) -> String {
    let Some(first) = cells.first() else {
        return String::new();
    };
    let axes: Vec<String> = first
        .iter()
        .map(|c| {
            let mut values: Vec<String> = Vec::new();
            for cell in cells {
                for d in cell.iter().filter(|d| d.feature == c.feature) {
                    if let crate::data::Condition::Equals(v) = &d.condition {
                        if !values.contains(v) {
                            values.push(v.clone());
                        }
                    }
                }
            }
            if let Some(idx) = schema.feature_index(&c.feature) {
                let spec = schema.feature(idx);
                values.sort_by_key(|v| spec.category_index(v));
            }
            let quoted: Vec<String> = values.iter().map(|v| format!("\"{v}\"")).collect();
            format!("\"{}\" in {{{}}}", c.feature, quoted.join(", "))
        })
        .collect();
    axes.join(" and ")
}

fn cell_list(cells: &[Vec<Conjunct>]) -> String {
    cells
        .iter()
        .map(|cell| {
            let parts: Vec<String> = cell
                .iter()
                .map(|c| match &c.condition {
                    crate::data::Condition::Equals(v) => format!("\"{}\": \"{v}\"", c.feature),
                    crate::data::Condition::Interval([lo, hi]) => {
                        format!("\"{}\": {lo}-{hi}", c.feature)
                    }
                })
                .collect();
            format!("- ({})", parts.join(", "))
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// A new prompt is drawn at call 0 and every `period` calls after.
pub fn refresh_due(call_index: usize, period: usize) -> bool {
    period > 0 && call_index % period == 0
}

/// Refresh rule with the default period of ten calls.
pub fn refresh_policy(call_index: usize) -> bool {
    refresh_due(call_index, 10)
}
