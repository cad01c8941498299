//! The per-query local computation algorithm.
//!
//! A run draws `R` (size `m`) by profit, keeps the distinct items of profit
//! above `ε²` as the sampled large set `L̃`, and if `1 − p(L̃) ≥ ε` draws a
//! second sample `Q` (size `a`) whose non-large efficiencies feed `t`
//! reproducible quantiles at levels `1 − kq`. The surrogate instance `Ĩ`
//! holds `L̃` and `⌊1/ε⌋` representatives `(ε², ε²/ẽ_{k+1})` per bucket. The
//! half-approximate greedy on `Ĩ` is compressed into a [`GreedySummary`],
//! which every item query evaluates locally.

use std::cmp::Ordering;

use num_traits::{One, ToPrimitive, Zero};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::{EfficiencySequence, ItemClass, KnapsackInstance, SmallOrder};
use crate::rational::{ceil_u64, display, floor_u64, int, Epsilon, Rational};
use crate::rquantile::{exact_quantile, quantile_core, CodeDistribution, CodeSample, DiscreteDomain, QuantileParams};
use crate::sampling::{RandomnessPlan, SampleAccount, SamplingOracle};

pub const DEFAULT_DOMAIN_BITS: u32 = 32;
pub const DEFAULT_COUPON_CONSTANT: u64 = 6;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LcaConfig {
    pub epsilon: Epsilon,
    pub domain_bits: u32,
    /// Constant `c` in `m = ⌈c·ε⁻²(ln ε⁻² + 1)⌉ · r`.
    pub coupon_constant: u64,
}

impl LcaConfig {
    pub fn new(epsilon: Epsilon) -> Self {
        Self { epsilon, domain_bits: DEFAULT_DOMAIN_BITS, coupon_constant: DEFAULT_COUPON_CONSTANT }
    }

    pub fn with_domain_bits(mut self, bits: u32) -> Self {
        self.domain_bits = bits;
        self
    }

    /// Repetitions `r`: the least integer with `3^r · ε ≥ 3`, which drives the
    /// coupon-collector failure from 1/6 to at most ε/3.
    pub fn repetitions(&self) -> u64 {
        let eps = self.epsilon.value();
        let mut r = 0u32;
        while int(3u64).pow(r as i32) * eps < int(3) {
            r += 1;
        }
        r as u64
    }

    /// Size of the first sample `R`.
    pub fn sample_size_m(&self) -> u64 {
        let inv_sq = 1.0 / (self.epsilon.as_f64() * self.epsilon.as_f64());
        let per_round = (self.coupon_constant as f64 * inv_sq * (inv_sq.ln() + 1.0)).ceil() as u64;
        per_round * self.repetitions()
    }

    pub fn tau(&self) -> f64 {
        crate::rational::to_f64(self.epsilon.squared()) / 5.0
    }

    pub fn rho(&self) -> f64 {
        crate::rational::to_f64(self.epsilon.squared()) / 18.0
    }

    pub fn beta(&self) -> f64 {
        self.rho() / 2.0
    }

    pub fn quantile_params(&self) -> Result<QuantileParams> {
        QuantileParams::new(self.rho(), self.tau(), self.beta(), self.domain_bits)
    }
}

/// Values derived inside one run from `ε` and the run's sampled large set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunParams {
    #[serde(with = "crate::rational::serde_rational")]
    pub epsilon: Rational,
    pub m: u64,
    pub tau: f64,
    pub rho: f64,
    pub beta: f64,
    pub n_rq: u64,
    #[serde(with = "crate::rational::serde_rational")]
    pub sampled_large_profit: Rational,
    /// `None` when `1 − p(L̃) < ε` and no quantiles are computed.
    #[serde(with = "opt_rational")]
    pub q: Option<Rational>,
    pub t: u64,
    pub t_prime: u64,
    pub a: u64,
}

mod opt_rational {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Option<Rational>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match r {
            Some(r) => s.serialize_some(&display(r)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Rational>, D::Error> {
        let s: Option<String> = Option::deserialize(d)?;
        s.map(|s| crate::rational::parse_rational(&s).map_err(serde::de::Error::custom)).transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Origin {
    Large { index: usize },
    Representative { bucket: usize },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReducedItem {
    pub profit: Rational,
    /// `None` stands for infinite weight (a representative of threshold 0).
    pub weight: Option<Rational>,
    pub origin: Origin,
}

impl ReducedItem {
    pub fn efficiency(&self) -> Rational {
        match &self.weight {
            Some(w) if !w.is_zero() => &self.profit / w,
            _ => Rational::zero(),
        }
    }
}

/// `Ĩ`: sampled large items followed by the bucket representatives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReducedInstance {
    pub items: Vec<ReducedItem>,
    pub capacity: Rational,
}

impl ReducedInstance {
    pub fn large_count(&self) -> usize {
        self.items.iter().filter(|it| matches!(it.origin, Origin::Large { .. })).count()
    }

    pub fn representative_count(&self) -> usize {
        self.items.len() - self.large_count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GreedySummary {
    pub index_large: Vec<usize>,
    #[serde(with = "opt_rational")]
    pub e_small: Option<Rational>,
    pub b_indicator: bool,
    /// 1-based rank of `e_small` in the sequence (`k − 2`).
    pub e_small_rank: Option<usize>,
    pub prefix_len: usize,
    pub k: usize,
}

/// Supplies `ẽ_k` as a domain code.
pub trait QuantileOracle {
    fn quantile(&mut self, call: u64, sample: &CodeSample, level: &Rational, coins: &mut ChaCha20Rng) -> u64;
}

/// The reproducible quantile keyed by the shared seed.
pub struct ReproducibleQuantiles {
    plan: RandomnessPlan,
    params: QuantileParams,
}

impl ReproducibleQuantiles {
    pub fn new(plan: RandomnessPlan, params: QuantileParams) -> Self {
        Self { plan, params }
    }
}

impl QuantileOracle for ReproducibleQuantiles {
    fn quantile(&mut self, call: u64, sample: &CodeSample, level: &Rational, coins: &mut ChaCha20Rng) -> u64 {
        quantile_core(sample, level, &self.params, &mut self.plan.internal_stream(call), coins)
    }
}

/// Exact quantiles of the true non-large efficiency distribution; ignores the
/// sample. Used to replay the construction without estimation error.
pub struct ExactQuantiles {
    dist: Option<CodeDistribution>,
}

impl ExactQuantiles {
    pub fn new(instance: &KnapsackInstance, epsilon: &Epsilon, domain: &DiscreteDomain) -> Self {
        let atoms: Vec<(u64, u64)> = (0..instance.len())
            .filter(|&i| instance.classify(i, epsilon) != ItemClass::Large)
            .map(|i| (domain.encode_item(instance, i), instance.items()[i].profit))
            .collect();
        Self { dist: CodeDistribution::new(atoms).ok() }
    }
}

impl QuantileOracle for ExactQuantiles {
    fn quantile(&mut self, _call: u64, _sample: &CodeSample, level: &Rational, _coins: &mut ChaCha20Rng) -> u64 {
        self.dist.as_ref().map_or(0, |d| exact_quantile(d, level))
    }
}

/// Everything one run produced before answering.
#[derive(Debug, Clone)]
pub struct BuildOutcome {
    pub reduced: ReducedInstance,
    pub sequence: EfficiencySequence,
    /// Codes of `ẽ_1 … ẽ_{t'}`.
    pub sequence_codes: Vec<u64>,
    pub params: RunParams,
    pub account: SampleAccount,
    /// Indices of `L̃`, ascending.
    pub sampled_large: Vec<usize>,
    /// Size of `E` fell below `n_rq`.
    pub sample_deficit: bool,
}

fn cmp_eff(a: &ReducedItem, b: &ReducedItem) -> Ordering {
    match (&a.weight, &b.weight) {
        (None, None) => Ordering::Equal,
        (None, Some(_)) => Ordering::Less,
        (Some(_), None) => Ordering::Greater,
        (Some(wa), Some(wb)) => (&a.profit * wb).cmp(&(&b.profit * wa)),
    }
}

fn origin_rank(o: &Origin) -> (u8, usize) {
    match *o {
        Origin::Large { index } => (0, index),
        Origin::Representative { bucket } => (1, bucket),
    }
}

pub fn build_reduced(instance: &KnapsackInstance, config: &LcaConfig, plan: &RandomnessPlan) -> Result<BuildOutcome> {
    let params = config.quantile_params()?;
    let mut oracle = ReproducibleQuantiles::new(plan.clone(), params);
    build_reduced_with(instance, config, plan, &mut oracle)
}

pub fn build_reduced_with(
    instance: &KnapsackInstance,
    config: &LcaConfig,
    plan: &RandomnessPlan,
    quantiles: &mut dyn QuantileOracle,
) -> Result<BuildOutcome> {
    let eps = &config.epsilon;
    let qp = config.quantile_params()?;
    let domain = DiscreteDomain::for_instance(instance, config.domain_bits)?;
    let mut rng = plan.sampling_stream();
    let mut oracle = SamplingOracle::new(instance);

    let m = config.sample_size_m();
    let r = oracle.sample_multiset(m, &mut rng)?;
    let sampled_large: Vec<usize> =
        r.distinct().filter(|&i| instance.classify(i, eps) == ItemClass::Large).collect();
    let large_profit = instance.profit_of(&sampled_large);
    let slack = Rational::one() - &large_profit;

    let mut run = RunParams {
        epsilon: eps.value().clone(),
        m,
        tau: config.tau(),
        rho: config.rho(),
        beta: config.beta(),
        n_rq: qp.n_rq,
        sampled_large_profit: large_profit,
        q: None,
        t: 0,
        t_prime: 0,
        a: 0,
    };
    let mut codes: Vec<u64> = Vec::new();
    let mut sample_deficit = false;

    if &slack >= eps.value() {
        let q = (eps.value() + eps.squared() / int(2)) / &slack;
        let t = floor_u64(&(Rational::one() / &q));
        let a = ceil_u64(&(int(3u64) * int(qp.n_rq) / (int(2) * &slack)));
        if a >= crate::rquantile::MAX_SAMPLE {
            return Err(Error::InvalidParams(format!("second sample size {a} is too large")));
        }
        let sample_q = oracle.sample_multiset(a, &mut rng)?;
        let e = CodeSample::from_counts(
            sample_q
                .entries()
                .iter()
                .filter(|&&(i, _)| instance.classify(i, eps) != ItemClass::Large)
                .map(|&(i, c)| (domain.encode_item(instance, i), c))
                .collect(),
        );
        sample_deficit = e.len() < qp.n_rq;
        for k in 1..=t {
            let level = Rational::one() - int(k) * &q;
            let code = quantiles.quantile(k, &e, &level, &mut rng);
            let code = codes.last().map_or(code, |&prev: &u64| prev.min(code));
            codes.push(code);
        }
        let mut t_prime = t;
        if let Some(&last) = codes.last() {
            if &domain.decode(last) < eps.squared() {
                t_prime = t - 1;
                codes.pop();
            }
        }
        run.q = Some(q);
        run.t = t;
        run.t_prime = t_prime;
        run.a = a;
    }

    let thresholds: Vec<Rational> = codes.iter().map(|&c| domain.decode(c)).collect();
    let sequence = EfficiencySequence::new(thresholds, eps.clone())?;

    let mut items: Vec<ReducedItem> = sampled_large
        .iter()
        .map(|&i| ReducedItem { profit: instance.profit(i), weight: Some(instance.weight(i)), origin: Origin::Large { index: i } })
        .collect();
    let copies = eps.inverse_floor();
    for (bucket, e) in sequence.thresholds().iter().enumerate() {
        let weight = if e.is_zero() { None } else { Some(eps.squared() / e) };
        for _ in 0..copies {
            items.push(ReducedItem { profit: eps.squared().clone(), weight: weight.clone(), origin: Origin::Representative { bucket } });
        }
    }
    let reduced = ReducedInstance { items, capacity: instance.capacity() };

    Ok(BuildOutcome {
        reduced,
        sequence,
        sequence_codes: codes,
        params: run,
        account: oracle.account(),
        sampled_large,
        sample_deficit,
    })
}

/// The half-approximate greedy on `Ĩ`, compressed into a decision rule.
pub fn convert_greedy(reduced: &ReducedInstance, seq: &EfficiencySequence) -> GreedySummary {
    let mut sorted: Vec<&ReducedItem> = reduced.items.iter().collect();
    sorted.sort_by(|a, b| cmp_eff(b, a).then(origin_rank(&a.origin).cmp(&origin_rank(&b.origin))));

    let mut used = Rational::zero();
    let mut j = 0usize;
    for it in &sorted {
        match &it.weight {
            Some(w) if &used + w <= reduced.capacity => {
                used += w;
                j += 1;
            }
            _ => break,
        }
    }

    let k = if j == 0 {
        0
    } else {
        let ej = sorted[j - 1].efficiency();
        seq.thresholds().iter().filter(|e| **e > ej).count()
    };

    let prefix_profit: Rational = sorted[..j].iter().map(|it| &it.profit).sum();
    let branch_one = j == sorted.len()
        || prefix_profit >= sorted[j].profit
        || matches!(sorted[j].origin, Origin::Representative { .. });

    if branch_one {
        let mut index_large: Vec<usize> = sorted[..j]
            .iter()
            .filter_map(|it| match it.origin {
                Origin::Large { index } => Some(index),
                Origin::Representative { .. } => None,
            })
            .collect();
        index_large.sort_unstable();
        let (e_small, e_small_rank) = if k >= 3 { (seq.get(k - 2).cloned(), Some(k - 2)) } else { (None, None) };
        GreedySummary { index_large, e_small, b_indicator: false, e_small_rank, prefix_len: j, k }
    } else {
        let Origin::Large { index } = sorted[j].origin else { unreachable!() };
        GreedySummary { index_large: vec![index], e_small: None, b_indicator: true, e_small_rank: None, prefix_len: j, k }
    }
}

/// Algorithm-level solution: `Index_large` plus, unless the singleton branch
/// fired, every small item with efficiency `≥ e_small`. Scans all items.
pub fn mapping_greedy(summary: &GreedySummary, instance: &KnapsackInstance, epsilon: &Epsilon) -> Vec<usize> {
    let mut c = summary.index_large.clone();
    if let (false, Some(e)) = (summary.b_indicator, &summary.e_small) {
        c.extend((0..instance.len()).filter(|&i| {
            instance.classify(i, epsilon) == ItemClass::Small && instance.cmp_efficiency_with(i, e) != Ordering::Less
        }));
    }
    c.sort_unstable();
    c.dedup();
    c
}

/// [`mapping_greedy`] over a precomputed efficiency order of `S(I)`.
pub fn mapping_greedy_indexed(summary: &GreedySummary, instance: &KnapsackInstance, order: &SmallOrder) -> Vec<usize> {
    let mut c = summary.index_large.clone();
    if let (false, Some(e)) = (summary.b_indicator, &summary.e_small) {
        c.extend_from_slice(order.at_least(instance, e));
    }
    c.sort_unstable();
    c.dedup();
    c
}

/// One logical copy of the algorithm: a fixed seed and run nonce.
#[derive(Debug, Clone)]
pub struct LcaRun<'a> {
    instance: &'a KnapsackInstance,
    epsilon: Epsilon,
    domain: DiscreteDomain,
    outcome: BuildOutcome,
    summary: GreedySummary,
    e_small_code: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Prefix,
    Singleton,
}

impl<'a> LcaRun<'a> {
    pub fn new(instance: &'a KnapsackInstance, config: &LcaConfig, plan: &RandomnessPlan) -> Result<Self> {
        let params = config.quantile_params()?;
        let mut oracle = ReproducibleQuantiles::new(plan.clone(), params);
        Self::with_oracle(instance, config, plan, &mut oracle)
    }

    pub fn with_oracle(
        instance: &'a KnapsackInstance,
        config: &LcaConfig,
        plan: &RandomnessPlan,
        oracle: &mut dyn QuantileOracle,
    ) -> Result<Self> {
        if instance.is_feasibility_only() {
            return Err(Error::NotSampleable);
        }
        let domain = DiscreteDomain::for_instance(instance, config.domain_bits)?;
        let outcome = build_reduced_with(instance, config, plan, oracle)?;
        let summary = convert_greedy(&outcome.reduced, &outcome.sequence);
        let e_small_code = summary.e_small_rank.map(|r| outcome.sequence_codes[r - 1]);
        Ok(Self { instance, epsilon: config.epsilon.clone(), domain, outcome, summary, e_small_code })
    }

    pub fn summary(&self) -> &GreedySummary {
        &self.summary
    }

    pub fn outcome(&self) -> &BuildOutcome {
        &self.outcome
    }

    pub fn branch(&self) -> Branch {
        if self.summary.b_indicator {
            Branch::Singleton
        } else {
            Branch::Prefix
        }
    }

    /// Decision for item `index` from the run's summary.
    pub fn answer(&self, index: usize) -> Result<bool> {
        self.instance.item(index)?;
        Ok(match self.instance.classify(index, &self.epsilon) {
            ItemClass::Large => self.summary.index_large.binary_search(&index).is_ok(),
            ItemClass::Small => match self.e_small_code {
                Some(code) if !self.summary.b_indicator => self.domain.encode_item(self.instance, index) >= code,
                _ => false,
            },
            ItemClass::Garbage => false,
        })
    }

    pub fn answers(&self) -> Vec<bool> {
        (0..self.instance.len()).map(|i| self.answer(i).expect("in range")).collect()
    }

    pub fn materialize(&self) -> Vec<usize> {
        mapping_greedy(&self.summary, self.instance, &self.epsilon)
    }

    pub fn materialize_indexed(&self, order: &SmallOrder) -> Vec<usize> {
        mapping_greedy_indexed(&self.summary, self.instance, order)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryAnswer {
    pub item: usize,
    pub answer: bool,
    pub samples_drawn: u64,
    pub branch: Branch,
    #[serde(with = "opt_rational")]
    pub e_small: Option<Rational>,
    pub t_prime: u64,
}

/// Stateless query: builds a fresh run and evaluates item `index`.
pub fn answer_query(
    instance: &KnapsackInstance,
    index: usize,
    config: &LcaConfig,
    plan: &RandomnessPlan,
) -> Result<QueryAnswer> {
    instance.item(index)?;
    let run = LcaRun::new(instance, config, plan)?;
    Ok(QueryAnswer {
        item: index,
        answer: run.answer(index)?,
        samples_drawn: run.outcome.account.samples_drawn,
        branch: run.branch(),
        e_small: run.summary.e_small.clone(),
        t_prime: run.outcome.params.t_prime,
    })
}

/// Exact optimum of a reduced instance by enumeration (at most 24 items).
pub fn reduced_optimum(reduced: &ReducedInstance) -> Result<Rational> {
    let n = reduced.items.len();
    if n > 24 {
        return Err(Error::InstanceTooLarge { n, max: 24 });
    }
    let mut best = Rational::zero();
    for mask in 0u32..(1u32 << n) {
        let mut w = Rational::zero();
        let mut p = Rational::zero();
        let mut ok = true;
        for (k, it) in reduced.items.iter().enumerate() {
            if mask >> k & 1 == 1 {
                match &it.weight {
                    Some(x) => w += x,
                    None => {
                        ok = false;
                        break;
                    }
                }
                p += &it.profit;
            }
        }
        if ok && w <= reduced.capacity && p > best {
            best = p;
        }
    }
    Ok(best)
}

/// Builds `Ĩ` from the true large set and a given sequence, without sampling.
pub fn reduced_from_sequence(instance: &KnapsackInstance, seq: &EfficiencySequence, large: &[usize]) -> ReducedInstance {
    let eps = seq.epsilon();
    let mut items: Vec<ReducedItem> = large
        .iter()
        .map(|&i| ReducedItem { profit: instance.profit(i), weight: Some(instance.weight(i)), origin: Origin::Large { index: i } })
        .collect();
    for (bucket, e) in seq.thresholds().iter().enumerate() {
        let weight = if e.is_zero() { None } else { Some(eps.squared() / e) };
        for _ in 0..eps.inverse_floor() {
            items.push(ReducedItem { profit: eps.squared().clone(), weight: weight.clone(), origin: Origin::Representative { bucket } });
        }
    }
    ReducedInstance { items, capacity: instance.capacity() }
}

pub fn ratio_f64(num: &Rational, den: &Rational) -> f64 {
    if den.is_zero() {
        return 1.0;
    }
    (num / den).to_f64().unwrap_or(f64::NAN)
}
