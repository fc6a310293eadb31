use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{ExperimentConfig, GeneratorConfig};
use super::report::{AuditEntry, BetaFit, ExperimentReport, ReportRow};
use crate::data::{
    format_number, save_dataset, split_dataset, Conjunct, Dataset, Predicate, Provenance, Record, Schema, Subgroup,
};
use crate::downstream::{evaluate_model, train};
use crate::error::{Error, Result};
use crate::generate::{
    fit_anchor_split, llm_generate, simulate_generation, AnchorModel, EndpointConfig, GenerationLog,
    HttpTransport, MixtureGenerator, RunShape, Transport,
};
use crate::mitigation::{mitigate, Strategy};
use crate::prompt::{
    compose_prompt, inject_conditional_bias, inject_intersectional_bias, inject_marginal_bias, mix_adversarial,
    select_from, select_icl_examples, BiasMode, BiasSpec, CompiledBias, Direction, PromptTemplate,
    TemplateContext, TemplateId,
};
use crate::seed::derive_seed;
use crate::stats::{block_spd, drift_score, ols_fit};

const TAG_PROMPT: u64 = 1;
const TAG_INJECT: u64 = 2;
const TAG_GENERATE: u64 = 3;
const TAG_REF_PROMPT: u64 = 4;
const TAG_MITIGATE: u64 = 6;
const TAG_TRAIN: u64 = 7;

/// Gap in |SPD_S| over the π = 0 baseline that counts as a successful
/// attack.
pub const ATTACK_SUCCESS_GAP: f64 = 0.1;

/// Execution settings that do not change results.
#[derive(Clone, Default)]
pub struct RunOptions {
    /// Dataset paths in the config resolve against this folder.
    pub base_dir: PathBuf,
    /// Worker threads; the rayon default when unset.
    pub workers: Option<usize>,
    /// Persist each run's synthetic CSV here.
    pub artifacts: Option<PathBuf>,
    /// Also write the rendered prompts next to each synthetic CSV.
    pub dump_prompts: bool,
    /// Endpoint transport override; HTTP when unset.
    pub transport: Option<Arc<dyn Transport + Send + Sync>>,
}

impl RunOptions {
    pub fn with_workers(mut self, n: usize) -> Self {
        self.workers = Some(n);
        self
    }

    pub fn with_artifacts(mut self, dir: impl Into<PathBuf>) -> Self {
        self.artifacts = Some(dir.into());
        self
    }
}

enum Engine {
    Simulated(MixtureGenerator),
    Endpoint {
        cfg: EndpointConfig,
        transport: Arc<dyn Transport + Send + Sync>,
    },
}

struct Generated {
    data: Dataset,
    log: Option<GenerationLog>,
}

/// How prompt examples are drawn and distorted.
enum Plan {
    Marginal(CompiledBias),
    /// Balanced selection over `pools` before relabeling.
    Balanced { bias: CompiledBias, pools: Vec<Vec<Record>> },
    Adversarial(CompiledBias),
}

impl Plan {
    fn bias(&self) -> &CompiledBias {
        match self {
            Plan::Marginal(b) | Plan::Balanced { bias: b, .. } | Plan::Adversarial(b) => b,
        }
    }
}

struct Setup {
    cfg: ExperimentConfig,
    schema: Arc<Schema>,
    train: Dataset,
    test: Dataset,
    sub: Subgroup,
    engine: Engine,
    /// The generator's zero-shot distribution.
    zero_shot: Arc<AnchorModel>,
    template: PromptTemplate,
    tctx: TemplateContext,
    shape: RunShape,
    plan: Plan,
}

fn complement_pair(spec: &BiasSpec, schema: &Schema) -> Option<(String, String, String)> {
    let [Conjunct { feature, condition: crate::data::Condition::Equals(v) }] = spec.target.as_slice() else {
        return None;
    };
    let f = schema.feature(schema.feature_index(feature)?);
    let support = f.support()?;
    if support.len() != 2 {
        return None;
    }
    let other = support.iter().find(|s| *s != v)?;
    Some((feature.clone(), v.clone(), other.clone()))
}

impl Setup {
    fn new(cfg: &ExperimentConfig, opts: &RunOptions, bias: &BiasSpec) -> Result<Setup> {
        cfg.validate()?;
        let data = cfg.dataset.load(&opts.base_dir)?;
        let schema = data.schema().clone();
        let split = split_dataset(&data, cfg.dataset.train_fraction, cfg.dataset.split_seed)?;
        if split.degenerate {
            return Err(Error::Degenerate("train/test split left one side empty".into()));
        }
        let sub_spec = cfg.subgroup_spec()?;
        let sub = sub_spec.compile(&schema)?;
        let test_unpriv = split.test.records().iter().filter(|r| sub.is_unprivileged(r)).count();
        if test_unpriv == 0 || test_unpriv == split.test.len() {
            return Err(Error::Degenerate("test split lacks one of the two groups".into()));
        }
        let compiled = bias.compile(&schema)?;

        let mut cut: Vec<Conjunct> = sub_spec.unprivileged.clone();
        cut.extend(bias.target.iter().cloned());
        for c in &bias.cells {
            cut.extend(c.cell.iter().cloned());
        }

        let mut tctx = TemplateContext::new(&cfg.template.domain, cfg.batch);
        if let Some(p) = &cfg.template.pair {
            tctx.pair = Some(p.clone());
        } else if cfg.template.id == TemplateId::Balanced {
            if let Some((f, a, b)) = complement_pair(bias, &schema) {
                tctx = tctx.with_pair(&f, &a, &b);
            }
        }
        if bias.mode == BiasMode::Intersectional {
            tctx = tctx.with_cells(bias.cells.iter().map(|c| c.cell.clone()).collect());
        }
        let template = PromptTemplate::builtin(cfg.template.id);
        let shape = RunShape {
            n_total: cfg.n_synthetic,
            strata: template.strata(&tctx),
            refresh_period: cfg.refresh_period,
            split: cut.clone(),
        };

        let train = split.train;
        let plan = match compiled.mode {
            BiasMode::Marginal => Plan::Marginal(compiled),
            BiasMode::Adversarial => Plan::Adversarial(compiled),
            BiasMode::Conditional => {
                let target = compiled.target.clone().expect("conditional target");
                let pools = match &tctx.pair {
                    Some(p) => {
                        let first = Predicate::compile(&[Conjunct::equals(&p.feature, &p.first)], &schema)?;
                        let second = Predicate::compile(&[Conjunct::equals(&p.feature, &p.second)], &schema)?;
                        vec![filter(&train, |r| first.matches(r)), filter(&train, |r| second.matches(r))]
                    }
                    None => vec![filter(&train, |r| target.matches(r)), filter(&train, |r| !target.matches(r))],
                };
                Plan::Balanced { bias: compiled, pools }
            }
            BiasMode::Intersectional => {
                let pools = compiled.cells.iter().map(|(p, _)| filter(&train, |r| p.matches(r))).collect();
                Plan::Balanced { bias: compiled, pools }
            }
        };

        let (engine, zero_shot) = match &cfg.generator {
            GeneratorConfig::Simulated { tau, anchor } => {
                let anchor = match anchor {
                    Some(spec) => AnchorModel::from_spec(schema.clone(), spec)?,
                    None => fit_anchor_split(&train, &cut)?,
                };
                let gen = MixtureGenerator::new(anchor, *tau)?;
                let zero = gen.anchor.clone();
                (Engine::Simulated(gen), zero)
            }
            GeneratorConfig::Endpoint(e) => {
                let transport: Arc<dyn Transport + Send + Sync> = match &opts.transport {
                    Some(t) => t.clone(),
                    None => Arc::new(HttpTransport::new(e)?),
                };
                // zero-shot pass: empty in-context block
                let empty = compose_prompt(&template, &[], &schema, &tctx);
                let run = llm_generate(e, transport.as_ref(), &schema, cfg.n_synthetic, cfg.refresh_period, |_| {
                    Ok(empty.clone())
                })?;
                let zero = Arc::new(fit_anchor_split(&run.data, &cut)?);
                (
                    Engine::Endpoint {
                        cfg: e.clone(),
                        transport,
                    },
                    zero,
                )
            }
        };

        Ok(Setup {
            cfg: cfg.clone(),
            schema,
            train,
            test: split.test,
            sub,
            engine,
            zero_shot,
            template,
            tctx,
            shape,
            plan,
        })
    }

    fn generator_tag(&self) -> String {
        self.cfg.generator.tag()
    }

    fn generate(&self, prompts: &[Vec<Record>], seed: u64) -> Result<Generated> {
        match &self.engine {
            Engine::Simulated(gen) => {
                let run = simulate_generation(gen, &self.schema, &self.shape, seed, |p| Ok(prompts[p].clone()))?;
                Ok(Generated {
                    data: run.data,
                    log: None,
                })
            }
            Engine::Endpoint { cfg, transport } => {
                let run = llm_generate(
                    cfg,
                    transport.as_ref(),
                    &self.schema,
                    self.shape.n_total,
                    self.shape.refresh_period,
                    |p| Ok(compose_prompt(&self.template, &prompts[p], &self.schema, &self.tctx)),
                )?;
                Ok(Generated {
                    data: run.data,
                    log: Some(run.log),
                })
            }
        }
    }

    /// Examples of prompt `p` at grid point (k, π, seed), with their
    /// adversarial flags.
    fn prompt(&self, k: usize, pi: f64, seed: u64, p: usize) -> Result<(Vec<Record>, Vec<bool>)> {
        let select = derive_seed(seed, &[TAG_PROMPT, k as u64, p as u64]);
        let inject = derive_seed(seed, &[TAG_INJECT, k as u64, p as u64]);
        let mut bias = self.plan.bias().clone();
        bias.pi = pi;
        let records = match &self.plan {
            Plan::Marginal(_) => {
                let ex = select_icl_examples(&self.train, k, select)?;
                inject_marginal_bias(&ex, &self.schema, &bias, self.zero_shot.as_ref(), inject)?
            }
            Plan::Balanced { pools, .. } => {
                let ex = balanced_select(pools, k, select)?;
                match bias.mode {
                    BiasMode::Conditional => inject_conditional_bias(&ex, &self.schema, &bias, inject)?,
                    _ => inject_intersectional_bias(&ex, &self.schema, &bias, inject)?,
                }
            }
            Plan::Adversarial(_) => {
                let mixed = mix_adversarial(&self.train, &bias, k, select)?;
                return Ok((mixed.records, mixed.adversarial));
            }
        };
        let n = records.len();
        Ok((records, vec![false; n]))
    }

    /// The k-shot anchor reference: prompts of zero-shot draws, sampled on
    /// the same generation stream as the grid points.
    fn reference(&self, k: usize, seed: u64) -> Result<Dataset> {
        let k_ref = self.cfg.reference_k.unwrap_or(k);
        let prompts: Vec<Vec<Record>> = (0..self.shape.n_prompts())
            .map(|p| {
                let s = derive_seed(seed, &[TAG_REF_PROMPT, k as u64, p as u64]);
                self.zero_shot.sample(k_ref, s).records().to_vec()
            })
            .collect();
        Ok(self.generate(&prompts, derive_seed(seed, &[TAG_GENERATE]))?.data)
    }

    /// Cells whose positive rates are reported, with the positive label.
    fn cells(&self) -> (Vec<(String, Predicate, bool)>, u32) {
        let b = self.plan.bias();
        match b.mode {
            BiasMode::Intersectional => (
                b.cells
                    .iter()
                    .map(|(p, d)| (p.label(), p.clone(), *d == Direction::Up))
                    .collect(),
                b.label.expect("intersectional label"),
            ),
            _ => {
                let t = b.target.clone().expect("mode has a target");
                let pos = b.label.unwrap_or(self.sub.favorable);
                (vec![(t.label(), t, true)], pos)
            }
        }
    }
}

fn filter(ds: &Dataset, keep: impl Fn(&Record) -> bool) -> Vec<Record> {
    ds.records().iter().filter(|r| keep(r)).cloned().collect()
}

/// `k` examples split as evenly as possible over `pools`, shuffled.
fn balanced_select(pools: &[Vec<Record>], k: usize, seed: u64) -> Result<Vec<Record>> {
    let g = pools.len();
    let mut out = Vec::with_capacity(k);
    for (j, pool) in pools.iter().enumerate() {
        let quota = k / g + usize::from(j < k % g);
        if quota > 0 && pool.is_empty() {
            return Err(Error::Degenerate(format!("balanced group {j} absent from training data")));
        }
        out.extend(select_from(pool, quota, derive_seed(seed, &[j as u64]))?);
    }
    out.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(out)
}

fn rate(records: &[Record], within: impl Fn(&Record) -> bool, hit: impl Fn(&Record) -> bool) -> Option<f64> {
    let (mut n, mut h) = (0usize, 0usize);
    for r in records.iter().filter(|r| within(r)) {
        n += 1;
        h += hit(r) as usize;
    }
    (n > 0).then(|| h as f64 / n as f64)
}

/// Run family: propagation rows measure drift only; attack rows also pass
/// through a mitigation strategy and the downstream classifiers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Family {
    Propagation,
    Attack,
}

#[derive(Clone, Copy, Debug)]
struct Point {
    k: usize,
    pi: f64,
    seed: u64,
    strategy: Strategy,
    /// Baseline points computed only for the attack-success gap.
    emit: bool,
}

struct PointOut {
    point: Point,
    rows: Vec<ReportRow>,
    audit: Vec<AuditEntry>,
    spd_s: Option<f64>,
}

fn artifact_name(cfg: &ExperimentConfig, mode: &str, pt: &Point) -> String {
    format!(
        "{}_{}_{}_k{}_pi{}_s{}",
        cfg.id,
        mode,
        pt.strategy.as_str(),
        pt.k,
        format_number(pt.pi),
        pt.seed
    )
}

fn run_point(setup: &Setup, family: Family, pt: Point, reference: &Result<Dataset>, opts: &RunOptions) -> PointOut {
    let cfg = &setup.cfg;
    let mode = setup.plan.bias().mode.as_str();
    let mut row = ReportRow::empty(&cfg.id, mode, &setup.generator_tag(), pt.k, pt.pi, pt.seed);
    if family == Family::Attack {
        row.mitigation = pt.strategy.as_str().into();
    }
    match point_rows(setup, family, pt, reference, opts, row.clone()) {
        Ok((rows, audit, spd_s)) => PointOut {
            point: pt,
            rows,
            audit,
            spd_s,
        },
        Err(e) => {
            row.add_flag(&format!("error: {e}"));
            PointOut {
                point: pt,
                rows: vec![row],
                audit: Vec::new(),
                spd_s: None,
            }
        }
    }
}

type PointRows = (Vec<ReportRow>, Vec<AuditEntry>, Option<f64>);

fn point_rows(
    setup: &Setup,
    family: Family,
    pt: Point,
    reference: &Result<Dataset>,
    opts: &RunOptions,
    mut row: ReportRow,
) -> Result<PointRows> {
    let cfg = &setup.cfg;
    let schema = &setup.schema;
    let n_prompts = setup.shape.n_prompts();
    let drawn: Vec<(Vec<Record>, Vec<bool>)> = (0..n_prompts)
        .into_par_iter()
        .map(|p| setup.prompt(pt.k, pt.pi, pt.seed, p))
        .collect::<Result<_>>()?;

    let mut audit = Vec::new();
    let prompts: Vec<Vec<Record>> = if family == Family::Attack {
        let mcfg = cfg.mitigation.config(pt.strategy);
        let done: Vec<_> = drawn
            .par_iter()
            .enumerate()
            .map(|(p, (recs, _))| {
                let s = derive_seed(pt.seed, &[TAG_MITIGATE, pt.k as u64, p as u64]);
                mitigate(&mcfg, recs, schema, &setup.sub, s)
            })
            .collect::<Result<_>>()?;
        let mut removed = 0usize;
        let mut adv_removed = 0usize;
        let mut worst: Option<f64> = Some(0.0);
        let mut flagged = 0usize;
        let mut kept = Vec::with_capacity(n_prompts);
        for (p, (m, (recs, adv))) in done.iter().zip(&drawn).enumerate() {
            let a = m.removed.iter().filter(|&&i| adv[i]).count();
            removed += m.removed.len();
            adv_removed += a;
            worst = match (worst, m.in_context_spd) {
                (Some(w), Some(s)) => Some(w.max(s.abs())),
                _ => None,
            };
            flagged += m.flag.is_some() as usize;
            if !m.removed.is_empty() || m.flag.is_some() {
                audit.push(AuditEntry {
                    experiment_id: cfg.id.clone(),
                    mitigation: pt.strategy.as_str().into(),
                    k: pt.k,
                    pi: pt.pi,
                    seed: pt.seed,
                    prompt: p,
                    removed: m.removed.clone(),
                    adversarial_removed: a,
                    flag: m.flag.clone(),
                });
            }
            kept.push(m.select(recs));
        }
        row.dropped = Some(removed as f64 / n_prompts as f64);
        row.adversarial_dropped = Some(adv_removed as f64 / n_prompts as f64);
        row.in_context_spd = worst;
        if worst.is_none() {
            row.add_flag("in-context spd undefined for some prompt");
        }
        if flagged > 0 {
            row.add_flag(&format!("{} flagged in {flagged} prompt(s)", pt.strategy));
        }
        kept
    } else {
        drawn.into_iter().map(|(r, _)| r).collect()
    };

    let gen = setup.generate(&prompts, derive_seed(pt.seed, &[TAG_GENERATE]))?;
    let data = &gen.data;
    let pooled: Vec<Record> = prompts.iter().flatten().cloned().collect();

    match reference {
        Ok(reference) => {
            match Dataset::new(schema.clone(), pooled.clone(), Provenance::Prompt).and_then(|d| drift_score(&d, reference)) {
                Ok(d) => row.drift_prompt = Some(d.total),
                Err(e) => row.add_flag(&format!("drift_prompt: {e}")),
            }
            match drift_score(data, reference) {
                Ok(d) => row.drift_generated = Some(d.total),
                Err(e) => row.add_flag(&format!("drift_generated: {e}")),
            }
        }
        Err(e) => row.add_flag(&format!("reference: {e}")),
    }

    let bias = setup.plan.bias();
    let (cells, pos) = setup.cells();
    let is_pos = |r: &Record| r.label == pos;
    match bias.mode {
        BiasMode::Marginal => {
            let t = &cells[0].1;
            row.prompt_target_prob = rate(&pooled, |_| true, |r| t.matches(r));
            row.target_prob = rate(data.records(), |_| true, |r| t.matches(r));
        }
        BiasMode::Intersectional => {
            let ups: Vec<&Predicate> = cells.iter().filter(|c| c.2).map(|c| &c.1).collect();
            let mean_up = |recs: &[Record]| -> Option<f64> {
                let rs: Vec<f64> = ups.iter().filter_map(|p| rate(recs, |r| p.matches(r), is_pos)).collect();
                (rs.len() == ups.len()).then(|| rs.iter().sum::<f64>() / rs.len() as f64)
            };
            row.prompt_target_prob = mean_up(&pooled);
            row.target_prob = mean_up(data.records());
        }
        BiasMode::Conditional | BiasMode::Adversarial => {
            let t = &cells[0].1;
            row.prompt_target_prob = rate(&pooled, |r| t.matches(r), is_pos);
            row.target_prob = rate(data.records(), |r| t.matches(r), is_pos);
        }
    }
    let mut rates = String::new();
    let mut shown: Vec<(String, Option<f64>)> = cells
        .iter()
        .map(|(name, p, _)| (name.clone(), rate(data.records(), |r| p.matches(r), is_pos)))
        .collect();
    if bias.mode != BiasMode::Intersectional {
        let t = &cells[0].1;
        shown.push(("rest".into(), rate(data.records(), |r| !t.matches(r), is_pos)));
    }
    for (name, r) in shown {
        if !rates.is_empty() {
            rates.push(';');
        }
        match r {
            Some(x) => write!(rates, "{name}={x:.6}").unwrap(),
            None => write!(rates, "{name}=").unwrap(),
        }
    }
    row.cell_rates = rates;

    if let Plan::Adversarial(b) = &setup.plan {
        let t = b.target.as_ref().expect("adversarial target");
        let aligned = |r: &Record| b.rules.iter().all(|rule| rule.rule.admits(schema, r.values[rule.feature]));
        row.aligned_mass_target = rate(data.records(), |r| t.matches(r), aligned);
        row.aligned_mass_other = rate(data.records(), |r| !t.matches(r), aligned);
    }

    let spd_s = match block_spd(data, &setup.sub, cfg.blocks) {
        Ok(b) => {
            row.spd_s = Some(b.mean);
            row.spd_s_std = Some(b.std);
            Some(b.mean)
        }
        Err(e) => {
            row.add_flag(&format!("spd_s: {e}"));
            None
        }
    };

    if pt.emit {
        if let Some(dir) = &opts.artifacts {
            let name = artifact_name(cfg, bias.mode.as_str(), &pt);
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            save_dataset(data, dir.join(format!("{name}.csv")))?;
            if let Some(log) = &gen.log {
                log.write_jsonl(dir.join(format!("{name}.log.jsonl")))?;
            }
            if opts.dump_prompts {
                write_prompts(setup, &prompts, &dir.join(format!("{name}.prompts.txt")))?;
            }
        }
    }

    let mut rows = Vec::new();
    if family == Family::Attack && pt.emit {
        for spec in &cfg.classifiers {
            let mut r = row.clone();
            r.model = spec.tag();
            let eval = train(spec, data, &setup.sub, derive_seed(pt.seed, &[TAG_TRAIN]))
                .and_then(|m| evaluate_model(&m, &setup.test, &setup.sub, pt.seed));
            match eval {
                Ok(e) => {
                    r.f1_r = Some(e.macro_f1);
                    r.spd_d = Some(e.spd_d);
                    r.eo_d = Some(e.eo_d);
                    r.eod_d = Some(e.eod_d);
                    r.mdi_protected = e.protected_mdi;
                    if e.unseen > 0 {
                        r.add_flag(&format!("{} test rows with unseen categories", e.unseen));
                    }
                }
                Err(e) => r.add_flag(&format!("downstream: {e}")),
            }
            rows.push(r);
        }
    }
    if rows.is_empty() {
        rows.push(row);
    }
    Ok((rows, audit, spd_s))
}

fn write_prompts(setup: &Setup, prompts: &[Vec<Record>], path: &Path) -> Result<()> {
    let mut text = String::new();
    for (p, ex) in prompts.iter().enumerate() {
        let b = compose_prompt(&setup.template, ex, &setup.schema, &setup.tctx);
        writeln!(text, "### prompt {p}\n{}\n", b.rendered).unwrap();
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn in_pool<T: Send>(workers: Option<usize>, job: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
            Ok(pool.install(job))
        }
        None => Ok(job()),
    }
}

fn sweep(cfg: &ExperimentConfig, opts: &RunOptions, bias: &BiasSpec, family: Family, strategies: &[Strategy]) -> Result<ExperimentReport> {
    let setup = Setup::new(cfg, opts, bias)?;
    let strategies = if strategies.is_empty() { &[Strategy::None][..] } else { strategies };
    let mut points = Vec::new();
    for &k in &cfg.k_grid {
        for &seed in &cfg.seeds {
            for &strategy in strategies {
                for &pi in &cfg.pi_grid {
                    points.push(Point {
                        k,
                        pi,
                        seed,
                        strategy,
                        emit: true,
                    });
                }
            }
            let has_base = strategies.contains(&Strategy::None) && cfg.pi_grid.contains(&0.0);
            if family == Family::Attack && !has_base {
                points.push(Point {
                    k,
                    pi: 0.0,
                    seed,
                    strategy: Strategy::None,
                    emit: false,
                });
            }
        }
    }
    let keys: Vec<(usize, u64)> = cfg.k_grid.iter().flat_map(|&k| cfg.seeds.iter().map(move |&s| (k, s))).collect();
    let (references, outs) = in_pool(opts.workers, || {
        let references: BTreeMap<(usize, u64), Result<Dataset>> = keys
            .par_iter()
            .map(|&(k, s)| ((k, s), setup.reference(k, s)))
            .collect::<Vec<_>>()
            .into_iter()
            .collect();
        let outs: Vec<PointOut> = points
            .par_iter()
            .map(|&pt| run_point(&setup, family, pt, &references[&(pt.k, pt.seed)], opts))
            .collect();
        (references, outs)
    })?;
    drop(references);

    let mut baseline: BTreeMap<(usize, u64), Option<f64>> = BTreeMap::new();
    for o in &outs {
        if o.point.pi == 0.0 && o.point.strategy == Strategy::None {
            baseline.insert((o.point.k, o.point.seed), o.spd_s);
        }
    }
    let mut report = ExperimentReport::default();
    for o in outs {
        if !o.point.emit {
            continue;
        }
        report.audit.extend(o.audit);
        for mut r in o.rows {
            if family == Family::Attack {
                let base = baseline.get(&(r.k, r.seed)).copied().flatten();
                r.attack_success = match (r.spd_s, base) {
                    (Some(s), Some(b)) => Some(s.abs() - b.abs() > ATTACK_SUCCESS_GAP),
                    _ => None,
                };
            }
            report.rows.push(r);
        }
    }
    if family == Family::Propagation {
        report.fits = beta_fits(&report.rows);
    }
    report.sort();
    Ok(report)
}

/// Per (experiment, k, seed), and per (experiment, k) pooled over seeds:
/// OLS of generated drift on prompt drift over the π grid. Points with a
/// missing drift are skipped; a fit needs two distinct prompt drifts.
pub fn beta_fits(rows: &[ReportRow]) -> Vec<BetaFit> {
    let mut groups: BTreeMap<(String, usize, Option<u64>), (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        if let (Some(x), Some(y)) = (r.drift_prompt, r.drift_generated) {
            for seed in [Some(r.seed), None] {
                let g = groups.entry((r.experiment_id.clone(), r.k, seed)).or_default();
                g.0.push(x);
                g.1.push(y);
            }
        }
    }
    groups
        .into_iter()
        .filter_map(|((id, k, seed), (xs, ys))| {
            let fit = ols_fit(&xs, &ys).ok()?;
            Some(BetaFit {
                experiment_id: id,
                k,
                seed,
                beta: fit.slope,
                intercept: fit.intercept,
                r_squared: fit.r_squared,
                points: xs.len(),
            })
        })
        .collect()
}

/// Drift propagation sweep over (k, π, seed) with the configured bias.
pub fn run_propagation(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentReport> {
    let bias = cfg
        .bias
        .as_ref()
        .ok_or_else(|| Error::Config("propagation needs a `[bias]` table".into()))?;
    sweep(cfg, opts, bias, Family::Propagation, &[])
}

/// Feature-aligned attack sweep with downstream evaluation.
pub fn run_attack(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentReport> {
    sweep(cfg, opts, &cfg.attack_spec(0.0)?, Family::Attack, &[Strategy::None])
}

/// The attack sweep once per configured mitigation strategy.
pub fn run_mitigation(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentReport> {
    if cfg.mitigation.strategies.is_empty() {
        return Err(Error::Config("no mitigation strategies configured".into()));
    }
    sweep(cfg, opts, &cfg.attack_spec(0.0)?, Family::Attack, &cfg.mitigation.strategies)
}

/// Generate and persist synthetic data for every grid point without
/// downstream training: the configured bias when present, else the attack.
pub fn run_generate(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentReport> {
    if opts.artifacts.is_none() {
        return Err(Error::Config("generation needs an output directory".into()));
    }
    let bias = match &cfg.bias {
        Some(b) => b.clone(),
        None => cfg.attack_spec(0.0)?,
    };
    sweep(cfg, opts, &bias, Family::Propagation, &[])
}

/// Check that a persisted synthetic CSV reproduces its row's SPD_S.
pub fn recompute_spd_s(path: impl AsRef<Path>, schema: Arc<Schema>, sub: &Subgroup, blocks: usize) -> Result<f64> {
    let ds = crate::data::load_dataset(path, schema)?;
    Ok(block_spd(&ds, sub, blocks)?.mean)
}
