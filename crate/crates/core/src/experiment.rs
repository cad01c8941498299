//! Batch experiments and JSON-lines reports.
//!
//! A trial pairs two runs that share the seed `r` but use different run
//! nonces. Each run is checked for feasibility, value against the exact
//! optimum and, when its first sample caught every large item, whether its
//! thresholds are equally partitioning. Pair outcomes give the consistency
//! rate. Each trial uses its own seed `seed ‖ trial`.

use std::io::Write;

use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generate::{generate, GeneratorSpec, Profile};
use crate::instance::{partition, KnapsackInstance, Partition, SmallOrder};
use crate::lca::{Branch, LcaConfig, LcaRun, RunParams};
use crate::oracles::{dp_exact, SolveResult, DEFAULT_DP_BUDGET};
use crate::par::map_trials;
use crate::rational::{display, int, parse_rational, to_f64, Epsilon, Rational};
use crate::rquantile::{CodeDistribution, QuantileParams};
use crate::sampling::{derive_stream, RandomnessPlan};

pub const SCHEMA_VERSION: u32 = 1;

/// Default ε grid of the experiment runner.
pub const DEFAULT_EPSILONS: [&str; 4] = ["1/2", "1/3", "1/4", "1/8"];

pub fn trial_seed(seed: &[u8], trial: u64) -> Vec<u8> {
    let mut s = seed.to_vec();
    s.extend_from_slice(&trial.to_le_bytes());
    s
}

/// Three-sigma slack of a binomial proportion with success probability `p`.
pub fn three_sigma(p: f64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    3.0 * (p * (1.0 - p) / n as f64).sqrt()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InstanceSource {
    File { path: String },
    Generated(GeneratorSpec),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source: InstanceSource,
    pub epsilons: Vec<String>,
    pub trials: u64,
    pub seed: Vec<u8>,
    pub domain_bits: u32,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<Vec<Epsilon>> {
        if self.trials == 0 {
            return Err(Error::InvalidParams("trials must be at least 1".into()));
        }
        self.epsilons.iter().map(|e| Epsilon::parse(e)).collect()
    }

    pub fn load_instance(&self) -> Result<(String, KnapsackInstance)> {
        match &self.source {
            InstanceSource::File { path } => Ok((path.clone(), KnapsackInstance::load(path)?)),
            InstanceSource::Generated(spec) => Ok((format!("{}-{}", spec.profile, spec.n), generate(spec)?)),
        }
    }
}

/// Instance data reused by every run: the exact optimum and, per ε, the
/// partition and the efficiency order of the small items.
pub struct InstanceContext<'a> {
    pub name: String,
    pub instance: &'a KnapsackInstance,
    pub opt: Option<SolveResult>,
}

impl<'a> InstanceContext<'a> {
    pub fn new(name: impl Into<String>, instance: &'a KnapsackInstance) -> Self {
        let opt = dp_exact(instance, DEFAULT_DP_BUDGET).ok();
        Self { name: name.into(), instance, opt }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub feasible: bool,
    #[serde(with = "crate::rational::serde_rational")]
    pub value: Rational,
    /// `p(C) ≥ OPT/2 − 6ε`; `None` without an optimum.
    pub approx_ok: Option<bool>,
    pub ratio: Option<f64>,
    pub covers_large: bool,
    pub eps_valid: bool,
    pub samples: u64,
    pub probes: u64,
    pub deficit: bool,
    pub branch: Branch,
    pub empty_sequence: bool,
    pub params: RunParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRecord {
    pub runs: [RunRecord; 2],
    pub consistent: bool,
    pub disagreements: usize,
}

fn evaluate_run(ctx: &InstanceContext<'_>, part: &Partition, order: &SmallOrder, run: &LcaRun<'_>) -> RunRecord {
    let inst = ctx.instance;
    let eps = &part.epsilon;
    let c = run.materialize_indexed(order);
    let feasible = inst.is_feasible(&c);
    let value = inst.profit_of(&c);
    let (approx_ok, ratio) = match &ctx.opt {
        Some(opt) => {
            let bound = &opt.value / int(2) - int(6) * eps.value();
            let ratio = if opt.value.is_zero() { 1.0 } else { (&value / &opt.value).to_f64().unwrap_or(f64::NAN) };
            (Some(value >= bound), Some(ratio))
        }
        None => (None, None),
    };
    let out = run.outcome();
    let covers_large = out.sampled_large == part.large;
    let eps_valid = order.is_eps(inst, &out.sequence).holds;
    RunRecord {
        feasible,
        value,
        approx_ok,
        ratio,
        covers_large,
        eps_valid,
        samples: out.account.samples_drawn,
        probes: out.account.point_probes,
        deficit: out.sample_deficit,
        branch: run.branch(),
        empty_sequence: out.params.q.is_none(),
        params: out.params.clone(),
    }
}

/// Two runs with a shared seed and nonces 0 and 1.
pub fn evaluate_pair(
    ctx: &InstanceContext<'_>,
    part: &Partition,
    order: &SmallOrder,
    config: &LcaConfig,
    seed: &[u8],
) -> Result<PairRecord> {
    let plan = RandomnessPlan::new(seed.to_vec(), 0);
    let a = LcaRun::new(ctx.instance, config, &plan)?;
    let b = LcaRun::new(ctx.instance, config, &plan.with_nonce(1))?;
    let (va, vb) = (a.answers(), b.answers());
    let disagreements = va.iter().zip(&vb).filter(|(x, y)| x != y).count();
    Ok(PairRecord {
        runs: [evaluate_run(ctx, part, order, &a), evaluate_run(ctx, part, order, &b)],
        consistent: disagreements == 0,
        disagreements,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LcaRow {
    pub schema_version: u32,
    pub experiment: String,
    pub instance: String,
    pub n: usize,
    pub epsilon: String,
    pub pairs: u64,
    pub runs: u64,
    pub derived: RunParams,
    pub derived_variants: usize,
    pub consistency_rate: f64,
    pub per_query_disagreement_rate: f64,
    pub approx_success_rate: Option<f64>,
    pub mean_ratio: Option<f64>,
    pub min_ratio: Option<f64>,
    pub feasibility_violations: u64,
    pub eps_verified_runs: u64,
    pub feasibility_violations_under_eps: u64,
    pub covering_runs: u64,
    pub eps_valid_given_cover: u64,
    pub eps_valid_rate: Option<f64>,
    pub samples_per_query: f64,
    pub probes_per_query: f64,
    pub deficit_runs: u64,
    pub singleton_branch_runs: u64,
    pub empty_sequence_runs: u64,
}

pub fn summarize_pairs(experiment: &str, ctx: &InstanceContext<'_>, eps: &Epsilon, pairs: &[PairRecord]) -> LcaRow {
    let runs: Vec<&RunRecord> = pairs.iter().flat_map(|p| p.runs.iter()).collect();
    let nr = runs.len() as u64;
    let np = pairs.len() as u64;
    let count = |f: &dyn Fn(&RunRecord) -> bool| runs.iter().filter(|r| f(r)).count() as u64;
    let mut variants: Vec<&RunParams> = Vec::new();
    for r in &runs {
        if !variants.contains(&&r.params) {
            variants.push(&r.params);
        }
    }
    let ratios: Vec<f64> = runs.iter().filter_map(|r| r.ratio).collect();
    let approx: Vec<bool> = runs.iter().filter_map(|r| r.approx_ok).collect();
    let covering = count(&|r| r.covers_large);
    let eps_cover = count(&|r| r.covers_large && r.eps_valid);
    let total_queries = np as f64 * ctx.instance.len() as f64;
    LcaRow {
        schema_version: SCHEMA_VERSION,
        experiment: experiment.into(),
        instance: ctx.name.clone(),
        n: ctx.instance.len(),
        epsilon: eps.to_string(),
        pairs: np,
        runs: nr,
        derived: runs.first().map(|r| r.params.clone()).expect("at least one run"),
        derived_variants: variants.len(),
        consistency_rate: pairs.iter().filter(|p| p.consistent).count() as f64 / np as f64,
        per_query_disagreement_rate: pairs.iter().map(|p| p.disagreements).sum::<usize>() as f64 / total_queries,
        approx_success_rate: (!approx.is_empty()).then(|| approx.iter().filter(|&&a| a).count() as f64 / approx.len() as f64),
        mean_ratio: (!ratios.is_empty()).then(|| ratios.iter().sum::<f64>() / ratios.len() as f64),
        min_ratio: ratios.iter().copied().reduce(f64::min),
        feasibility_violations: count(&|r| !r.feasible),
        eps_verified_runs: count(&|r| r.eps_valid),
        feasibility_violations_under_eps: count(&|r| r.eps_valid && !r.feasible),
        covering_runs: covering,
        eps_valid_given_cover: eps_cover,
        eps_valid_rate: (covering > 0).then(|| eps_cover as f64 / covering as f64),
        samples_per_query: runs.iter().map(|r| r.samples as f64).sum::<f64>() / nr as f64,
        probes_per_query: runs.iter().map(|r| r.probes as f64).sum::<f64>() / nr as f64,
        deficit_runs: count(&|r| r.deficit),
        singleton_branch_runs: count(&|r| r.branch == Branch::Singleton),
        empty_sequence_runs: count(&|r| r.empty_sequence),
    }
}

/// Paired runs on one instance at one ε.
pub fn run_pairs(ctx: &InstanceContext<'_>, eps: &Epsilon, domain_bits: u32, pairs: u64, seed: &[u8]) -> Result<Vec<PairRecord>> {
    let config = LcaConfig::new(eps.clone()).with_domain_bits(domain_bits);
    let part = partition(ctx.instance, eps);
    let order = SmallOrder::new(ctx.instance, &part);
    map_trials(pairs, |t| evaluate_pair(ctx, &part, &order, &config, &trial_seed(seed, t))).into_iter().collect()
}

pub fn consistency_experiment(config: &ExperimentConfig) -> Result<Vec<LcaRow>> {
    let epsilons = config.validate()?;
    let (name, instance) = config.load_instance()?;
    let ctx = InstanceContext::new(name, &instance);
    epsilons
        .iter()
        .map(|e| {
            let pairs = run_pairs(&ctx, e, config.domain_bits, config.trials, &config.seed)?;
            Ok(summarize_pairs("consistency", &ctx, e, &pairs))
        })
        .collect()
}

/// Single runs per ε; the second run of each pair is skipped.
pub fn approx_experiment(config: &ExperimentConfig) -> Result<Vec<LcaRow>> {
    let epsilons = config.validate()?;
    let (name, instance) = config.load_instance()?;
    let ctx = InstanceContext::new(name, &instance);
    if ctx.opt.is_none() {
        return Err(Error::InvalidParams("instance too large for the exact oracle".into()));
    }
    epsilons
        .iter()
        .map(|e| {
            let lca = LcaConfig::new(e.clone()).with_domain_bits(config.domain_bits);
            let part = partition(&instance, e);
            let order = SmallOrder::new(&instance, &part);
            let runs: Vec<RunRecord> = map_trials(config.trials, |t| {
                let plan = RandomnessPlan::new(trial_seed(&config.seed, t), 0);
                LcaRun::new(&instance, &lca, &plan).map(|run| evaluate_run(&ctx, &part, &order, &run))
            })
            .into_iter()
            .collect::<Result<_>>()?;
            let pairs: Vec<PairRecord> = runs
                .into_iter()
                .map(|r| PairRecord { runs: [r.clone(), r], consistent: true, disagreements: 0 })
                .collect();
            let mut row = summarize_pairs("approx", &ctx, e, &pairs);
            row.runs /= 2;
            Ok(row)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryCountRow {
    pub schema_version: u32,
    pub experiment: String,
    pub n: usize,
    pub epsilon: String,
    pub queries: u64,
    pub m: u64,
    pub a: u64,
    pub expected_samples: u64,
    pub min_samples: u64,
    pub max_samples: u64,
    pub exact: bool,
    pub derived: RunParams,
}

/// Samples per query on all-small instances of growing size.
pub fn querycount_experiment(sizes: &[usize], eps: &Epsilon, queries: u64, seed: &[u8], domain_bits: u32) -> Result<Vec<QueryCountRow>> {
    let config = LcaConfig::new(eps.clone()).with_domain_bits(domain_bits);
    sizes
        .iter()
        .map(|&n| {
            let inst = generate(&GeneratorSpec::new(Profile::ManySmall, n, seed.to_vec()))?;
            let runs: Vec<(RunParams, u64)> = map_trials(queries, |t| {
                let plan = RandomnessPlan::new(seed.to_vec(), t);
                let item = (t as usize).wrapping_mul(7919) % n;
                let answer = crate::lca::answer_query(&inst, item, &config, &plan)?;
                let run = LcaRun::new(&inst, &config, &plan)?;
                Ok((run.outcome().params.clone(), answer.samples_drawn))
            })
            .into_iter()
            .collect::<Result<_>>()?;
            let samples: Vec<u64> = runs.iter().map(|r| r.1).collect();
            let first = runs[0].0.clone();
            let expected = first.m + first.a;
            Ok(QueryCountRow {
                schema_version: SCHEMA_VERSION,
                experiment: "querycount".into(),
                n,
                epsilon: eps.to_string(),
                queries,
                m: first.m,
                a: first.a,
                expected_samples: expected,
                min_samples: *samples.iter().min().unwrap_or(&0),
                max_samples: *samples.iter().max().unwrap_or(&0),
                exact: runs.iter().all(|(p, s)| *s == p.m + p.a && *s == expected),
                derived: first,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionSpec {
    Point { code: u64 },
    Uniform { lo: u64, hi: u64 },
    Atoms { atoms: Vec<(u64, u64)> },
    /// Weight `2^{count−1−k}` at code `k·step`.
    Geometric { step: u64, count: u32 },
    /// `count` distinct random codes with weights in `[1, 100]`.
    Scattered { count: usize, seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkDistribution {
    pub name: String,
    pub p: String,
    #[serde(flatten)]
    pub spec: DistributionSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantileBenchmark {
    pub rho: String,
    pub tau: String,
    pub beta: String,
    pub bits: u32,
    pub distributions: Vec<BenchmarkDistribution>,
}

impl QuantileBenchmark {
    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

impl DistributionSpec {
    pub fn build(&self, bits: u32) -> Result<CodeDistribution> {
        let limit = 1u64 << bits;
        let atoms: Vec<(u64, u64)> = match self {
            Self::Point { code } => vec![(*code, 1)],
            Self::Uniform { lo, hi } => (*lo..=*hi).map(|c| (c, 1)).collect(),
            Self::Atoms { atoms } => atoms.clone(),
            Self::Geometric { step, count } => (0..*count).map(|k| (k as u64 * step, 1u64 << (count - 1 - k))).collect(),
            Self::Scattered { count, seed } => {
                use rand::seq::index::sample;
                use rand::Rng;
                let mut rng = derive_stream("benchmark", &seed.to_le_bytes(), 0);
                let codes = sample(&mut rng, limit as usize, *count);
                codes.iter().map(|c| (c as u64, rng.random_range(1..=100))).collect()
            }
        };
        if atoms.iter().any(|a| a.0 >= limit) {
            return Err(Error::InvalidSpec(format!("code outside the {bits}-bit domain")));
        }
        CodeDistribution::new(atoms)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub schema_version: u32,
    pub experiment: String,
    pub distribution: String,
    pub p: String,
    pub rho: f64,
    pub tau: f64,
    pub beta: f64,
    pub bits: u32,
    pub n_rq: u64,
    pub pairs: u64,
    pub agreement_rate: f64,
    pub accuracy_failures: u64,
    pub accuracy_failure_rate: f64,
    pub agreement_threshold: f64,
    pub accuracy_threshold: f64,
    pub pass: bool,
}

/// Paired runs per benchmark distribution: both runs of a pair share the
/// internal stream and draw fresh samples and coins.
pub fn quantile_benchmark(bench: &QuantileBenchmark, pairs: u64, seed: &[u8]) -> Result<Vec<QuantileRow>> {
    let rho = parse_rational(&bench.rho)?;
    let tau = parse_rational(&bench.tau)?;
    let beta = parse_rational(&bench.beta)?;
    let params = QuantileParams::new(to_f64(&rho), to_f64(&tau), to_f64(&beta), bench.bits)?;
    bench
        .distributions
        .iter()
        .map(|d| {
            let dist = d.spec.build(bench.bits)?;
            let p = parse_rational(&d.p)?;
            let label = format!("{}:{}", d.name, display(&p));
            let outcomes: Vec<(u64, u64)> = map_trials(pairs, |t| {
                let run = |k: u64| {
                    let mut sampling = derive_stream(&label, seed, 2 * t + k);
                    let sample = dist.sample(params.n_rq, &mut sampling);
                    let mut internal = derive_stream("internal", &trial_seed(seed, t), 0);
                    crate::rquantile::r_quantile(&sample, &p, &params, &mut internal, &mut sampling)
                };
                Ok((run(0)?, run(1)?))
            })
            .into_iter()
            .collect::<Result<_>>()?;
            let agree = outcomes.iter().filter(|(a, b)| a == b).count() as f64 / pairs as f64;
            let failures = outcomes
                .iter()
                .flat_map(|(a, b)| [*a, *b])
                .filter(|&v| !dist.is_approx_quantile(v, &p, &tau))
                .count() as u64;
            let runs = 2 * pairs;
            let (rho_f, beta_f) = (to_f64(&rho), to_f64(&beta));
            let agreement_threshold = 1.0 - rho_f - three_sigma(rho_f, pairs);
            let accuracy_threshold = beta_f + three_sigma(beta_f, runs);
            let failure_rate = failures as f64 / runs as f64;
            Ok(QuantileRow {
                schema_version: SCHEMA_VERSION,
                experiment: "rquantile".into(),
                distribution: d.name.clone(),
                p: display(&p),
                rho: rho_f,
                tau: to_f64(&tau),
                beta: beta_f,
                bits: bench.bits,
                n_rq: params.n_rq,
                pairs,
                agreement_rate: agree,
                accuracy_failures: failures,
                accuracy_failure_rate: failure_rate,
                agreement_threshold,
                accuracy_threshold,
                pass: agree >= agreement_threshold && failure_rate <= accuracy_threshold,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub criterion: String,
    pub pass: bool,
    pub observed: f64,
    pub threshold: f64,
    pub detail: String,
}

fn check(criterion: &str, observed: f64, threshold: f64, at_least: bool, detail: String) -> Check {
    let pass = if at_least { observed >= threshold } else { observed <= threshold };
    Check { criterion: criterion.into(), pass, observed, threshold, detail }
}

/// Acceptance thresholds evaluated on one LCA row.
pub fn check_lca_row(row: &LcaRow) -> Vec<Check> {
    let eps = to_f64(&parse_rational(&row.epsilon).expect("row epsilon"));
    let tag = format!("{} eps={}", row.instance, row.epsilon);
    let mut out = vec![
        check(
            "feasibility",
            1.0 - row.feasibility_violations as f64 / row.runs as f64,
            0.999,
            true,
            format!("{tag}: {} violations in {} runs", row.feasibility_violations, row.runs),
        ),
        check(
            "feasibility_under_eps",
            row.feasibility_violations_under_eps as f64,
            0.0,
            false,
            format!("{tag}: {} runs with verified thresholds", row.eps_verified_runs),
        ),
    ];
    if let Some(rate) = row.approx_success_rate {
        out.push(check("approximation", rate, 1.0 - eps - three_sigma(eps, row.runs), true, tag.clone()));
    }
    if row.experiment == "consistency" {
        out.push(check("consistency", row.consistency_rate, 1.0 - eps - three_sigma(eps, row.pairs), true, tag.clone()));
    }
    if let Some(rate) = row.eps_valid_rate {
        let fail = 13.0 * eps / 36.0;
        out.push(check(
            "eps_validity",
            rate,
            1.0 - fail - three_sigma(fail, row.covering_runs),
            true,
            format!("{tag}: {} covering runs", row.covering_runs),
        ));
    }
    out
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ReportRow {
    Lca(LcaRow),
    QueryCount(QueryCountRow),
    Quantile(QuantileRow),
}

/// Appends rows as JSON lines.
pub fn write_jsonl<W: Write, T: Serialize>(mut out: W, rows: &[T]) -> Result<()> {
    for row in rows {
        serde_json::to_writer(&mut out, row)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
