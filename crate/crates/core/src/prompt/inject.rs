use rand::seq::{index, SliceRandom};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::bias::{BiasMode, CompiledBias, Direction};
use crate::data::{Dataset, Predicate, Record, Schema};
use crate::error::{Error, Result};

/// Source of whole records, e.g. an anchor model or a benign pool.
pub trait RecordSampler: Sync {
    fn draw(&self, rng: &mut dyn RngCore) -> Record;
}

/// Uniform resampling from a fixed list of records.
#[derive(Clone, Copy, Debug)]
pub struct PoolSampler<'a> {
    pool: &'a [Record],
}

impl<'a> PoolSampler<'a> {
    pub fn new(pool: &'a [Record]) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::Empty("sampler pool is empty".into()));
        }
        Ok(PoolSampler { pool })
    }
}

impl RecordSampler for PoolSampler<'_> {
    fn draw(&self, rng: &mut dyn RngCore) -> Record {
        self.pool[rng.random_range(0..self.pool.len())].clone()
    }
}

/// `round(pi * k)` with halves rounded up.
pub fn injected_count(pi: f64, k: usize) -> usize {
    let x = pi * k as f64;
    // absorb representation error such as 0.35 * 10 = 3.4999999999999996
    let x = (x * 1e9).round() / 1e9;
    ((x + 0.5).floor() as usize).min(k)
}

/// Draw `k` in-context examples: without replacement when the pool is large
/// enough, with replacement otherwise.
pub fn select_icl_examples(train: &Dataset, k: usize, seed: u64) -> Result<Vec<Record>> {
    select_from(train.records(), k, seed)
}

pub(crate) fn select_from(pool: &[Record], k: usize, seed: u64) -> Result<Vec<Record>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    if pool.is_empty() {
        return Err(Error::Empty("cannot draw examples from an empty pool".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if k <= pool.len() {
        Ok(index::sample(&mut rng, pool.len(), k)
            .into_iter()
            .map(|i| pool[i].clone())
            .collect())
    } else {
        Ok((0..k).map(|_| pool[rng.random_range(0..pool.len())].clone()).collect())
    }
}

const MATCH_ATTEMPTS: usize = 200;

/// Draw from `sampler` conditioned on `pred` by rejection; after
/// `MATCH_ATTEMPTS` misses the last draw is forced into the predicate.
pub(crate) fn draw_matching(
    sampler: &dyn RecordSampler,
    pred: &Predicate,
    schema: &Schema,
    rng: &mut dyn RngCore,
) -> Record {
    let mut r = sampler.draw(rng);
    for _ in 1..MATCH_ATTEMPTS {
        if pred.matches(&r) {
            return r;
        }
        r = sampler.draw(rng);
    }
    pred.force(schema, &mut r, rng);
    r
}

fn expect_mode(spec: &CompiledBias, mode: BiasMode) -> Result<()> {
    if spec.mode != mode {
        return Err(Error::BiasSpec(format!(
            "expected a {mode:?} spec, got {:?}",
            spec.mode
        )));
    }
    Ok(())
}

/// Move exactly `round(pi * k)` examples into the target group. Rows
/// outside the target are chosen first; each chosen row is replaced by an
/// anchor draw conditioned on the target. The result is shuffled.
pub fn inject_marginal_bias(
    examples: &[Record],
    schema: &Schema,
    spec: &CompiledBias,
    anchor: &dyn RecordSampler,
    seed: u64,
) -> Result<Vec<Record>> {
    expect_mode(spec, BiasMode::Marginal)?;
    let target = spec.target();
    let k = examples.len();
    let m = injected_count(spec.pi, k);
    let mut out = examples.to_vec();
    if m == 0 {
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut rng);
    order.sort_by_key(|&i| target.matches(&examples[i]));
    for &i in &order[..m] {
        out[i] = draw_matching(anchor, target, schema, &mut rng);
    }
    out.shuffle(&mut rng);
    Ok(out)
}

/// Give exactly `m` of the rows at `idx` the positive label. Rows already
/// positive keep it first; demoted rows get the first other label.
fn assign_labels(out: &mut [Record], idx: &[usize], m: usize, pos: u32, neg: u32, rng: &mut ChaCha8Rng) {
    let mut order = idx.to_vec();
    order.shuffle(rng);
    order.sort_by_key(|&i| out[i].label != pos);
    for (j, &i) in order.iter().enumerate() {
        if j < m {
            out[i].label = pos;
        } else if out[i].label == pos {
            out[i].label = neg;
        }
    }
}

fn negative_label(schema: &Schema, pos: u32) -> u32 {
    (0..schema.n_labels() as u32).find(|&l| l != pos).expect("label support has two values")
}

/// Relabel so that exactly `round(pi * n_target)` target examples and
/// `round(rate * n_other)` other examples carry the positive label.
/// Group membership is untouched.
pub fn inject_conditional_bias(
    examples: &[Record],
    schema: &Schema,
    spec: &CompiledBias,
    seed: u64,
) -> Result<Vec<Record>> {
    expect_mode(spec, BiasMode::Conditional)?;
    let target = spec.target();
    let pos = spec.label();
    let neg = negative_label(schema, pos);
    let (t, n): (Vec<usize>, Vec<usize>) = (0..examples.len()).partition(|&i| target.matches(&examples[i]));
    if t.is_empty() {
        return Err(Error::Degenerate("target subgroup absent from examples".into()));
    }
    if n.is_empty() {
        return Err(Error::Degenerate("non-target subgroup absent from examples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = examples.to_vec();
    assign_labels(&mut out, &t, injected_count(spec.pi, t.len()), pos, neg, &mut rng);
    assign_labels(&mut out, &n, injected_count(spec.non_target_rate, n.len()), pos, neg, &mut rng);
    Ok(out)
}

/// Push up-cells towards an all-positive rate and down-cells towards an
/// all-negative rate, proportionally to `pi`, relative to each cell's
/// current positive rate.
pub fn inject_intersectional_bias(
    examples: &[Record],
    schema: &Schema,
    spec: &CompiledBias,
    seed: u64,
) -> Result<Vec<Record>> {
    expect_mode(spec, BiasMode::Intersectional)?;
    let pos = spec.label();
    let neg = negative_label(schema, pos);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = examples.to_vec();
    for (pred, dir) in &spec.cells {
        let idx: Vec<usize> = (0..examples.len()).filter(|&i| pred.matches(&examples[i])).collect();
        if idx.is_empty() {
            return Err(Error::Degenerate(format!("cell {} absent from examples", pred.label())));
        }
        let base = idx.iter().filter(|&&i| examples[i].label == pos).count() as f64 / idx.len() as f64;
        let rate = match dir {
            Direction::Up => base + spec.pi * (1.0 - base),
            Direction::Down => base - spec.pi * base,
        }
        .clamp(0.0, 1.0);
        assign_labels(&mut out, &idx, injected_count(rate, idx.len()), pos, neg, &mut rng);
    }
    Ok(out)
}

/// Build `n` feature-aligned records: target group and target label forced,
/// aligned features drawn from their rules, everything else taken from a
/// draw of `base`.
pub fn craft_adversarial_examples(
    n: usize,
    schema: &Schema,
    spec: &CompiledBias,
    base: &dyn RecordSampler,
    seed: u64,
) -> Result<Vec<Record>> {
    expect_mode(spec, BiasMode::Adversarial)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = spec.target();
    let label = spec.label();
    Ok((0..n)
        .map(|_| {
            let mut r = base.draw(&mut rng);
            target.force(schema, &mut r, &mut rng);
            r.label = label;
            for rule in &spec.rules {
                rule.apply(&mut r, &mut rng);
            }
            r
        })
        .collect())
}

/// An example list with a per-example adversarial flag.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedPool {
    pub records: Vec<Record>,
    pub adversarial: Vec<bool>,
}

impl MixedPool {
    pub fn benign(records: Vec<Record>) -> Self {
        let adversarial = vec![false; records.len()];
        MixedPool { records, adversarial }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn n_adversarial(&self) -> usize {
        self.adversarial.iter().filter(|a| **a).count()
    }

    /// Keep the rows at `keep` (ascending indices).
    pub fn select(&self, keep: &[usize]) -> MixedPool {
        MixedPool {
            records: keep.iter().map(|&i| self.records[i].clone()).collect(),
            adversarial: keep.iter().map(|&i| self.adversarial[i]).collect(),
        }
    }
}

/// `round(pi * k)` crafted examples plus `k - round(pi * k)` benign ones,
/// shuffled together. Crafted records take their free features from the
/// benign pool.
pub fn mix_adversarial(benign: &Dataset, spec: &CompiledBias, k: usize, seed: u64) -> Result<MixedPool> {
    if k == 0 {
        expect_mode(spec, BiasMode::Adversarial)?;
        return Ok(MixedPool::benign(Vec::new()));
    }
    let pool = PoolSampler::new(benign.records())?;
    mix_adversarial_with(benign, spec, k, &pool, seed)
}

/// [`mix_adversarial`] with an explicit source for the crafted records'
/// free features.
pub fn mix_adversarial_with(
    benign: &Dataset,
    spec: &CompiledBias,
    k: usize,
    base: &dyn RecordSampler,
    seed: u64,
) -> Result<MixedPool> {
    expect_mode(spec, BiasMode::Adversarial)?;
    let m = injected_count(spec.pi, k);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let crafted = craft_adversarial_examples(m, benign.schema(), spec, base, rng.next_u64())?;
    let clean = select_from(benign.records(), k - m, rng.next_u64())?;
    let mut tagged: Vec<(Record, bool)> = crafted
        .into_iter()
        .map(|r| (r, true))
        .chain(clean.into_iter().map(|r| (r, false)))
        .collect();
    tagged.shuffle(&mut rng);
    let (records, adversarial) = tagged.into_iter().unzip();
    Ok(MixedPool { records, adversarial })
}
