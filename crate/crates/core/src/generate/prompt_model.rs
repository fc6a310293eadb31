use std::sync::Arc;

use rand::RngCore;

use super::cells::CellIndex;
use super::component::Component;
use super::fit::{component_marginal, fit_component, Estimator};
use crate::data::{Conjunct, Predicate, Record, Schema};
use crate::error::{Error, Result};

/// Additive smoothing applied to every categorical table of a prompt model.
pub const LAPLACE_LAMBDA: f64 = 0.5;

/// What the generator takes away from a set of in-context examples:
/// smoothed categorical tables and jittered numerical resampling, with the
/// protected cell and label drawn jointly.
#[derive(Clone, Debug)]
pub struct PromptModel {
    schema: Arc<Schema>,
    cells: CellIndex,
    comp: Component,
    k: usize,
}

/// Build the prompt model for `examples`.
pub fn phi_transform(schema: &Arc<Schema>, examples: &[Record]) -> Result<PromptModel> {
    phi_transform_split(schema, examples, &[])
}

/// [`phi_transform`] with numerical protected features cut at the interval
/// bounds of `split`.
pub fn phi_transform_split(schema: &Arc<Schema>, examples: &[Record], split: &[Conjunct]) -> Result<PromptModel> {
    if examples.is_empty() {
        return Err(Error::Empty("prompt model of an empty prompt".into()));
    }
    let cells = CellIndex::new(schema, split);
    let comp = fit_component(
        examples,
        schema,
        &cells,
        Estimator::Smoothed {
            lambda: LAPLACE_LAMBDA,
        },
    );
    Ok(PromptModel {
        schema: schema.clone(),
        cells,
        comp,
        k: examples.len(),
    })
}

impl PromptModel {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn draw_where(&self, stratum: Option<&Predicate>, rng: &mut dyn RngCore) -> Record {
        self.comp.sample_where(&self.cells, &self.schema, stratum, rng)
    }

    /// Marginal mass of a categorical feature under the model.
    pub fn marginal(&self, feature: usize) -> Vec<f64> {
        component_marginal(&self.comp, &self.schema, &self.cells, feature)
    }

    /// Smoothed label distribution of the protected cell containing `r`.
    pub fn label_mass(&self, r: &Record) -> &[f64] {
        &self.comp.label_mass[self.cells.cell_of(r)]
    }

    /// Smoothed mass of the protected cell containing `r`.
    pub fn cell_mass(&self, r: &Record) -> f64 {
        self.comp.cell_mass[self.cells.cell_of(r)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FeatureSpec, Protected};

    fn schema() -> Arc<Schema> {
        Arc::new(
            Schema::new(
                vec![
                    FeatureSpec::categorical("race", ["Black", "White"]),
                    FeatureSpec::categorical("sex", ["F", "M"]),
                    FeatureSpec::integer("age", 18.0, 80.0),
                ],
                FeatureSpec::categorical("y", ["0", "1"]),
                Protected {
                    name: "race".into(),
                    features: vec!["race".into()],
                },
            )
            .unwrap(),
        )
    }

    #[test]
    fn balanced_prompt_smoothed_marginal() {
        let s = schema();
        let mut ex = Vec::new();
        for i in 0..80 {
            let race = if i % 2 == 0 { "Black" } else { "White" };
            ex.push(Record::from_strs(&s, &[race, "F", "30", "1"]));
        }
        let pm = phi_transform(&s, &ex).unwrap();
        let m = pm.marginal(0);
        assert!((m[0] - 40.5 / 81.0).abs() < 1e-12);
        assert!((m[1] - 40.5 / 81.0).abs() < 1e-12);
    }

    #[test]
    fn unseen_categories_keep_mass() {
        let s = schema();
        let ex = vec![Record::from_strs(&s, &["White", "M", "40", "0"]); 5];
        let pm = phi_transform(&s, &ex).unwrap();
        assert!(pm.marginal(0)[0] > 0.0);
        assert!(pm.marginal(1)[0] > 0.0);
        assert!(pm.label_mass(&ex[0])[1] > 0.0);
    }

    #[test]
    fn conditional_rate_is_smoothed_ratio() {
        let s = schema();
        let mut ex = Vec::new();
        for i in 0..40 {
            let y = if i < 30 { "1" } else { "0" };
            ex.push(Record::from_strs(&s, &["Black", "F", "30", y]));
            ex.push(Record::from_strs(&s, &["White", "F", "30", "0"]));
        }
        let pm = phi_transform(&s, &ex).unwrap();
        let rate = pm.label_mass(&ex[0])[1];
        assert!((rate - 30.5 / 41.0).abs() < 1e-12);
    }
}
