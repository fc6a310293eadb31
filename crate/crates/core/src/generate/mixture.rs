use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::anchor::AnchorModel;
use super::prompt_model::PromptModel;
use crate::data::{Dataset, Predicate, Provenance, Record};
use crate::error::{Error, Result};

/// Default schedule parameter: `alpha = k / (k + 20)`.
pub const DEFAULT_TAU: f64 = 20.0;

/// Prompt-conditioning strength `k / (k + tau)`.
pub fn alpha_schedule(k: usize, tau: f64) -> Result<f64> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidArgument(format!("tau must be positive, got {tau}")));
    }
    Ok(k as f64 / (k as f64 + tau))
}

/// Two-component generator: the anchor with weight `1 - alpha_k`, the
/// prompt model with weight `alpha_k`.
#[derive(Clone, Debug)]
pub struct MixtureGenerator {
    pub anchor: Arc<AnchorModel>,
    pub tau: f64,
}

impl MixtureGenerator {
    pub fn new(anchor: AnchorModel, tau: f64) -> Result<Self> {
        alpha_schedule(0, tau)?;
        Ok(MixtureGenerator {
            anchor: Arc::new(anchor),
            tau,
        })
    }

    pub fn alpha(&self, k: usize) -> f64 {
        k as f64 / (k as f64 + self.tau)
    }

    /// One record. The component choice consumes the first draw of `rng`,
    /// so records sharing a stream share their component across prompts.
    pub fn draw(
        &self,
        prompt: Option<&PromptModel>,
        alpha: f64,
        stratum: Option<&Predicate>,
        rng: &mut dyn RngCore,
    ) -> Record {
        let u: f64 = rng.random();
        match prompt {
            Some(pm) if u < alpha => pm.draw_where(stratum, rng),
            _ => self.anchor.draw_where(stratum, rng),
        }
    }
}

/// Per-record generator stream: stream `index` of `seed`.
pub(crate) fn record_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// `n` independent draws from the mixture at context size `k`.
pub fn sample_mixture(gen: &MixtureGenerator, prompt: &PromptModel, k: usize, n: usize, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be at least 1".into()));
    }
    let alpha = gen.alpha(k);
    let records: Vec<Record> = (0..n)
        .into_par_iter()
        .map(|i| gen.draw(Some(prompt), alpha, None, &mut record_rng(seed, i)))
        .collect();
    Dataset::new(gen.anchor.schema().clone(), records, Provenance::Synthetic)
}
