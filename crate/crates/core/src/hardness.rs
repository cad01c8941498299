//! Hard instance families and a probe-budget adversary.
//!
//! * `or_optimal`: items `(x_i, 1)` for `i < n` and `(1/2, 1)` last, `K = 1`.
//!   The last item is optimal iff every `x_i = 0`.
//! * `or_approx`: the same with last profit `β`; the last item alone is an
//!   `α`-approximation (`α > β`) iff every `x_i = 0`.
//! * `maximal_pair`: zero profits, two marked items `i` and `j`, weight `3/4`
//!   for `i` and `1/4` or `3/4` for `j`, all others 0, `K = 1`. Raw weights
//!   are scaled by 4.

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::KnapsackInstance;
use crate::rational::{parse_rational, Rational};
use crate::sampling::{derive_stream, SampleAccount, SamplingOracle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HardFamily {
    OrOptimal,
    OrApprox,
    MaximalPair,
}

impl std::str::FromStr for HardFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "or_optimal" => Ok(Self::OrOptimal),
            "or_approx" => Ok(Self::OrApprox),
            "maximal_pair" => Ok(Self::MaximalPair),
            _ => Err(Error::InvalidSpec(format!("unknown family {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HardInstanceSpec {
    pub family: HardFamily,
    pub n: usize,
    /// Hidden bits of the OR families (length `n − 1`).
    pub x: Vec<bool>,
    /// Last-item profit of `or_approx`.
    pub beta: Rational,
    /// `(i, j)` of `maximal_pair`.
    pub pair: (usize, usize),
    /// `w_j = 3/4` when set, `1/4` otherwise.
    pub heavy: bool,
}

impl HardInstanceSpec {
    pub fn or_optimal(x: Vec<bool>) -> Self {
        Self { family: HardFamily::OrOptimal, n: x.len() + 1, x, beta: parse_rational("1/2").unwrap(), pair: (0, 0), heavy: false }
    }

    pub fn or_approx(x: Vec<bool>, beta: Rational) -> Self {
        Self { family: HardFamily::OrApprox, n: x.len() + 1, x, beta, pair: (0, 0), heavy: false }
    }

    pub fn maximal_pair(n: usize, pair: (usize, usize), heavy: bool) -> Self {
        Self { family: HardFamily::MaximalPair, n, x: Vec::new(), beta: Rational::default(), pair, heavy }
    }

    /// Uniform pair and fair coin for `w_j`, drawn from `rng`.
    pub fn random_pair<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let v = sample(rng, n, 2);
        Self::maximal_pair(n, (v.index(0), v.index(1)), rng.random::<bool>())
    }
}

/// A generated instance plus the raw profit that stands for one unit of value.
#[derive(Debug, Clone)]
pub struct HardInstance {
    pub instance: KnapsackInstance,
    pub profit_unit: u64,
}

pub fn generate(spec: &HardInstanceSpec) -> Result<HardInstance> {
    match spec.family {
        HardFamily::OrOptimal | HardFamily::OrApprox => {
            if spec.n < 1 || spec.x.len() + 1 != spec.n {
                return Err(Error::InvalidSpec("x must have n - 1 bits".into()));
            }
            let beta = if spec.family == HardFamily::OrOptimal { parse_rational("1/2").unwrap() } else { spec.beta.clone() };
            if beta <= Rational::default() || beta >= Rational::from_integer(1.into()) {
                return Err(Error::InvalidSpec("beta must lie in (0, 1)".into()));
            }
            let unit: u64 = beta.denom().try_into().map_err(|_| Error::InvalidSpec("beta denominator too large".into()))?;
            let last: u64 = beta.numer().try_into().map_err(|_| Error::InvalidSpec("beta numerator too large".into()))?;
            let mut raw: Vec<(u64, u64)> = spec.x.iter().map(|&b| (if b { unit } else { 0 }, 1)).collect();
            raw.push((last, 1));
            Ok(HardInstance { instance: KnapsackInstance::normalize(&raw, 1)?, profit_unit: unit })
        }
        HardFamily::MaximalPair => {
            let (i, j) = spec.pair;
            if spec.n < 2 || i >= spec.n || j >= spec.n || i == j {
                return Err(Error::InvalidSpec("pair must be two distinct indices below n".into()));
            }
            let mut w = vec![0u64; spec.n];
            w[i] = 3;
            w[j] = if spec.heavy { 3 } else { 1 };
            Ok(HardInstance { instance: KnapsackInstance::feasibility_only(&w, 4)?, profit_unit: 1 })
        }
    }
}

/// Every maximal feasible set, by enumeration (at most 20 items).
pub fn maximal_solutions(instance: &KnapsackInstance) -> Result<Vec<Vec<usize>>> {
    let n = instance.len();
    if n > 20 {
        return Err(Error::InstanceTooLarge { n, max: 20 });
    }
    let cap = instance.raw_capacity() as u128;
    let w: Vec<u128> = instance.items().iter().map(|it| it.weight as u128).collect();
    let mut out = Vec::new();
    for mask in 0u32..(1 << n) {
        let total: u128 = (0..n).filter(|&k| mask >> k & 1 == 1).map(|k| w[k]).sum();
        if total > cap {
            continue;
        }
        if (0..n).all(|k| mask >> k & 1 == 1 || total + w[k] > cap) {
            out.push((0..n).filter(|&k| mask >> k & 1 == 1).collect());
        }
    }
    Ok(out)
}

/// Whether the given membership answers embed into some maximal solution.
pub fn consistent_with_some_maximal(instance: &KnapsackInstance, answers: &[(usize, bool)]) -> Result<bool> {
    Ok(maximal_solutions(instance)?
        .iter()
        .any(|sol| answers.iter().all(|&(i, a)| sol.binary_search(&i).is_ok() == a)))
}

/// Closed form of [`consistent_with_some_maximal`] for the two marked items
/// of a `maximal_pair` instance.
pub fn pair_answers_correct(spec: &HardInstanceSpec, answer_i: bool, answer_j: bool) -> bool {
    if spec.heavy {
        answer_i != answer_j
    } else {
        answer_i && answer_j
    }
}

/// A stateless membership rule with probe access.
pub trait Strategy: Sync {
    fn name(&self) -> String;
    /// Answers whether `index` belongs to the solution. Probe errors, such as
    /// an exhausted budget, are returned to the harness.
    fn answer(&self, oracle: &mut SamplingOracle<'_>, index: usize, rng: &mut ChaCha20Rng) -> Result<bool>;
}

pub struct AlwaysYes;

impl Strategy for AlwaysYes {
    fn name(&self) -> String {
        "always_yes".into()
    }

    fn answer(&self, _: &mut SamplingOracle<'_>, _: usize, _: &mut ChaCha20Rng) -> Result<bool> {
        Ok(true)
    }
}

/// Reads every weight and answers by the first-fit maximal solution in index
/// order.
pub struct FullScan;

impl Strategy for FullScan {
    fn name(&self) -> String {
        "full_scan".into()
    }

    fn answer(&self, oracle: &mut SamplingOracle<'_>, index: usize, _: &mut ChaCha20Rng) -> Result<bool> {
        let n = oracle.instance().len();
        let cap = oracle.instance().raw_capacity() as u128;
        let mut used = 0u128;
        let mut member = false;
        for k in 0..n {
            let w = oracle.probe(k)?.weight as u128;
            if used + w <= cap {
                used += w;
                if k == index {
                    member = true;
                }
            }
        }
        Ok(member)
    }
}

/// Probes the queried item, then up to `budget − 1` random others looking for
/// a partner of positive weight; answers yes unless a partner is found that
/// cannot share the knapsack and has the smaller index.
pub struct RandomProbe {
    pub budget: u64,
}

impl Strategy for RandomProbe {
    fn name(&self) -> String {
        format!("random_probe({})", self.budget)
    }

    fn answer(&self, oracle: &mut SamplingOracle<'_>, index: usize, rng: &mut ChaCha20Rng) -> Result<bool> {
        let n = oracle.instance().len();
        let cap = oracle.instance().raw_capacity();
        if self.budget == 0 {
            return Ok(true);
        }
        let own = oracle.probe(index)?.weight;
        if own == 0 {
            return Ok(true);
        }
        let others = (self.budget - 1).min(n as u64 - 1) as usize;
        for k in sample(rng, n - 1, others).iter() {
            let k = if k >= index { k + 1 } else { k };
            let w = oracle.probe(k)?.weight;
            if w > 0 {
                return Ok(own + w <= cap || index < k);
            }
        }
        Ok(true)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversaryReport {
    pub strategy: String,
    pub n: usize,
    pub trials: u64,
    pub budget: u64,
    pub errors: u64,
    pub error_rate: f64,
    pub mean_probes: f64,
    pub budget_violations: u64,
}

struct TrialOutcome {
    correct: bool,
    probes: u64,
    violations: u64,
}

fn run_trial(strategy: &dyn Strategy, n: usize, budget: u64, seed: &[u8], trial: u64) -> Result<TrialOutcome> {
    let mut rng = derive_stream("hardness-instance", seed, trial);
    let spec = HardInstanceSpec::random_pair(n, &mut rng);
    let hard = generate(&spec)?;
    let mut probes = 0;
    let mut violations = 0;
    let mut answers = [false; 2];
    for (q, &index) in [spec.pair.0, spec.pair.1].iter().enumerate() {
        let mut oracle = SamplingOracle::with_probe_budget(&hard.instance, budget);
        let mut qrng = derive_stream("hardness-query", seed, trial * 2 + q as u64);
        answers[q] = match strategy.answer(&mut oracle, index, &mut qrng) {
            Ok(a) => a,
            Err(Error::BudgetExceeded { .. }) => {
                violations += 1;
                true
            }
            Err(e) => return Err(e),
        };
        let SampleAccount { point_probes, .. } = oracle.account();
        probes += point_probes;
    }
    Ok(TrialOutcome { correct: pair_answers_correct(&spec, answers[0], answers[1]), probes, violations })
}

/// Two-query experiment on fresh `maximal_pair` instances. A trial errs when
/// the answers for `s_i` and `s_j` fit no maximal solution. A query that
/// exhausts its budget counts as a violation and answers yes.
pub fn run_adversary(
    strategy: &dyn Strategy,
    family: HardFamily,
    n: usize,
    trials: u64,
    budget: u64,
    seed: &[u8],
) -> Result<AdversaryReport> {
    if family != HardFamily::MaximalPair {
        return Err(Error::InvalidSpec("the adversary runs on maximal_pair only".into()));
    }
    if n < 2 || trials == 0 {
        return Err(Error::InvalidSpec("need n >= 2 and at least one trial".into()));
    }
    let outcomes = crate::par::map_trials(trials, |t| run_trial(strategy, n, budget, seed, t));
    let mut errors = 0;
    let mut probes = 0;
    let mut violations = 0;
    for o in outcomes {
        let o = o?;
        errors += (!o.correct) as u64;
        probes += o.probes;
        violations += o.violations;
    }
    Ok(AdversaryReport {
        strategy: strategy.name(),
        n,
        trials,
        budget,
        errors,
        error_rate: errors as f64 / trials as f64,
        mean_probes: probes as f64 / (2 * trials) as f64,
        budget_violations: violations,
    })
}
