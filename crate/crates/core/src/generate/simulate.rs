use std::sync::Arc;

use rayon::prelude::*;

use super::mixture::{record_rng, MixtureGenerator};
use super::prompt_model::phi_transform_split;
use crate::data::{Conjunct, Dataset, Predicate, Provenance, Record, Schema};
use crate::error::{Error, Result};

/// Shape of a simulated generation run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunShape {
    pub n_total: usize,
    /// Conditions of the samples requested per call; an empty list means an
    /// unconstrained sample.
    pub strata: Vec<Vec<Conjunct>>,
    /// Calls served by one prompt before it is redrawn.
    pub refresh_period: usize,
    /// Interval bounds used to cut numerical protected features into cells.
    pub split: Vec<Conjunct>,
}

impl RunShape {
    pub fn unconstrained(n_total: usize, batch: usize, refresh_period: usize) -> Self {
        RunShape {
            n_total,
            strata: vec![Vec::new(); batch],
            refresh_period,
            split: Vec::new(),
        }
    }

    pub fn per_call(&self) -> usize {
        self.strata.len()
    }

    pub fn n_calls(&self) -> usize {
        self.n_total.div_ceil(self.per_call())
    }

    pub fn n_prompts(&self) -> usize {
        self.n_calls().div_ceil(self.refresh_period)
    }

    fn validate(&self) -> Result<()> {
        if self.n_total == 0 {
            return Err(Error::InvalidArgument("n_total must be at least 1".into()));
        }
        if self.strata.is_empty() {
            return Err(Error::InvalidArgument("at least one sample per call".into()));
        }
        if self.refresh_period == 0 {
            return Err(Error::InvalidArgument("refresh period must be positive".into()));
        }
        Ok(())
    }
}

/// Output of [`simulate_generation`].
#[derive(Clone, Debug)]
pub struct SimulatedRun {
    pub data: Dataset,
    /// The examples of every prompt, in prompt order.
    pub prompts: Vec<Vec<Record>>,
}

impl SimulatedRun {
    /// All prompt examples pooled into one dataset.
    pub fn pooled_prompts(&self) -> Result<Dataset> {
        let all: Vec<Record> = self.prompts.iter().flatten().cloned().collect();
        Dataset::new(self.data.schema().clone(), all, Provenance::Prompt)
    }
}

/// Emulate batched generation: prompt `p` (built by `make_prompt(p)`)
/// serves `refresh_period` calls of `per_call` samples each. Record `i`
/// draws from stream `i` of `seed`, so runs that differ only in their
/// prompts share their randomness record by record.
pub fn simulate_generation<F>(
    gen: &MixtureGenerator,
    schema: &Arc<Schema>,
    shape: &RunShape,
    seed: u64,
    make_prompt: F,
) -> Result<SimulatedRun>
where
    F: Fn(usize) -> Result<Vec<Record>> + Sync,
{
    shape.validate()?;
    let strata: Vec<Option<Predicate>> = shape
        .strata
        .iter()
        .map(|c| {
            if c.is_empty() {
                Ok(None)
            } else {
                Predicate::compile(c, schema).map(Some)
            }
        })
        .collect::<Result<_>>()?;
    let per_call = shape.per_call();
    let per_prompt = per_call * shape.refresh_period;
    let parts: Vec<(Vec<Record>, Vec<Record>)> = (0..shape.n_prompts())
        .into_par_iter()
        .map(|p| {
            let examples = make_prompt(p)?;
            let model = if examples.is_empty() {
                None
            } else {
                Some(phi_transform_split(schema, &examples, &shape.split)?)
            };
            let alpha = gen.alpha(examples.len());
            let start = p * per_prompt;
            let end = (start + per_prompt).min(shape.n_total);
            let records = (start..end)
                .map(|i| {
                    let stratum = strata[i % per_call].as_ref();
                    gen.draw(model.as_ref(), alpha, stratum, &mut record_rng(seed, i))
                })
                .collect();
            Ok((records, examples))
        })
        .collect::<Result<_>>()?;
    let mut records = Vec::with_capacity(shape.n_total);
    let mut prompts = Vec::with_capacity(parts.len());
    for (r, e) in parts {
        records.extend(r);
        prompts.push(e);
    }
    Ok(SimulatedRun {
        data: Dataset::new(schema.clone(), records, Provenance::Synthetic)?,
        prompts,
    })
}
