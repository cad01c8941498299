//! Knapsack instances, the ε-partition of items and efficiency sequences.
//!
//! Items keep their raw integer profit and weight. The normalized view divides
//! profits by the total raw profit `P` and weights by the total raw weight `W`,
//! so both sum to 1 and the capacity becomes `K / W`. Efficiencies are always
//! taken in the normalized view: `(p / P) / (w / W)`.

use std::cmp::Ordering;
use std::io::{Read, Write};
use std::path::Path;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{cmp_products, cmp_ratio, ratio, Epsilon, Rational};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Item {
    pub index: usize,
    pub profit: u64,
    pub weight: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnapsackInstance {
    items: Vec<Item>,
    capacity: u64,
    profit_total: u64,
    weight_total: u64,
    feasibility_only: bool,
    cumulative_profit: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct RawItem {
    p: u64,
    w: u64,
}

#[derive(Serialize, Deserialize)]
struct RawInstance {
    capacity: u64,
    items: Vec<RawItem>,
}

impl KnapsackInstance {
    /// Builds an instance from raw `(profit, weight)` pairs.
    pub fn normalize(raw: &[(u64, u64)], capacity: u64) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::EmptyInstance);
        }
        if capacity == 0 {
            return Err(Error::ZeroCapacity);
        }
        let mut items = Vec::with_capacity(raw.len());
        let mut profit_total = 0u64;
        let mut weight_total = 0u64;
        for (index, &(profit, weight)) in raw.iter().enumerate() {
            if weight == 0 {
                return Err(Error::ZeroWeight { index });
            }
            if weight > capacity {
                return Err(Error::WeightExceedsCapacity { index, weight, capacity });
            }
            profit_total = profit_total.checked_add(profit).ok_or(Error::Overflow)?;
            weight_total = weight_total.checked_add(weight).ok_or(Error::Overflow)?;
            items.push(Item { index, profit, weight });
        }
        if profit_total == 0 {
            return Err(Error::ZeroTotalProfit);
        }
        let cumulative_profit = items
            .iter()
            .scan(0u64, |acc, it| {
                *acc += it.profit;
                Some(*acc)
            })
            .collect();
        Ok(Self { items, capacity, profit_total, weight_total, feasibility_only: false, cumulative_profit })
    }

    /// Zero-profit instance used only to reason about feasible / maximal
    /// solutions. Zero weights are allowed and profit sampling is disabled.
    pub fn feasibility_only(weights: &[u64], capacity: u64) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyInstance);
        }
        if capacity == 0 {
            return Err(Error::ZeroCapacity);
        }
        let mut weight_total = 0u64;
        let mut items = Vec::with_capacity(weights.len());
        for (index, &weight) in weights.iter().enumerate() {
            if weight > capacity {
                return Err(Error::WeightExceedsCapacity { index, weight, capacity });
            }
            weight_total = weight_total.checked_add(weight).ok_or(Error::Overflow)?;
            items.push(Item { index, profit: 0, weight });
        }
        Ok(Self {
            cumulative_profit: vec![0; items.len()],
            items,
            capacity,
            profit_total: 0,
            weight_total,
            feasibility_only: true,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[Item] {
        &self.items
    }

    pub fn item(&self, index: usize) -> Result<&Item> {
        self.items.get(index).ok_or(Error::IndexOutOfRange { index, len: self.items.len() })
    }

    pub fn is_feasibility_only(&self) -> bool {
        self.feasibility_only
    }

    /// Raw capacity `K`.
    pub fn raw_capacity(&self) -> u64 {
        self.capacity
    }

    /// `P`, the total raw profit; normalized profits are multiples of `1/P`.
    pub fn profit_denominator(&self) -> u64 {
        self.profit_total
    }

    /// `W`, the total raw weight; normalized weights are multiples of `1/W`.
    pub fn weight_denominator(&self) -> u64 {
        self.weight_total
    }

    pub(crate) fn cumulative_profit(&self) -> &[u64] {
        &self.cumulative_profit
    }

    pub fn profit(&self, index: usize) -> Rational {
        if self.profit_total == 0 {
            return Rational::zero();
        }
        ratio(self.items[index].profit, self.profit_total)
    }

    pub fn weight(&self, index: usize) -> Rational {
        if self.weight_total == 0 {
            return Rational::zero();
        }
        ratio(self.items[index].weight, self.weight_total)
    }

    /// Normalized capacity `K / W`.
    pub fn capacity(&self) -> Rational {
        if self.weight_total == 0 {
            return Rational::zero();
        }
        ratio(self.capacity, self.weight_total)
    }

    /// Normalized efficiency `(p/P) / (w/W)`; zero for zero-profit items.
    pub fn efficiency(&self, index: usize) -> Rational {
        let it = &self.items[index];
        if it.profit == 0 {
            return Rational::zero();
        }
        ratio(
            it.profit as u128 * self.weight_total as u128,
            self.profit_total as u128 * it.weight as u128,
        )
    }

    /// Exact efficiency order between two items (zero-profit items compare as 0).
    pub fn cmp_efficiency(&self, a: usize, b: usize) -> Ordering {
        let (x, y) = (&self.items[a], &self.items[b]);
        match (x.profit == 0, y.profit == 0) {
            (true, true) => Ordering::Equal,
            (true, false) => Ordering::Less,
            (false, true) => Ordering::Greater,
            _ => cmp_products(&[x.profit as u128, y.weight as u128], &[y.profit as u128, x.weight as u128]),
        }
    }

    /// Compares item efficiency with a rational threshold.
    pub fn cmp_efficiency_with(&self, index: usize, threshold: &Rational) -> Ordering {
        let it = &self.items[index];
        if it.profit == 0 {
            return Rational::zero().cmp(threshold);
        }
        cmp_ratio(
            &[it.profit as u128, self.weight_total as u128],
            &[self.profit_total as u128, it.weight as u128],
            threshold,
        )
    }

    /// Compares normalized profit with a rational.
    pub fn cmp_profit_with(&self, index: usize, value: &Rational) -> Ordering {
        cmp_ratio(&[self.items[index].profit as u128], &[self.profit_total.max(1) as u128], value)
    }

    pub fn classify(&self, index: usize, epsilon: &Epsilon) -> ItemClass {
        let it = &self.items[index];
        let (n2, d2) = epsilon.squared_parts();
        if it.profit == 0 {
            return ItemClass::Garbage;
        }
        let p = it.profit as u128;
        let pt = self.profit_total as u128;
        if cmp_products(&[p, d2], &[n2, pt]) == Ordering::Greater {
            return ItemClass::Large;
        }
        let eff = cmp_products(&[p, self.weight_total as u128, d2], &[n2, pt, it.weight as u128]);
        if eff == Ordering::Less {
            ItemClass::Garbage
        } else {
            ItemClass::Small
        }
    }

    /// Sum of raw weights of `indices` compared against the capacity.
    pub fn raw_weight_of(&self, indices: &[usize]) -> u128 {
        indices.iter().map(|&i| self.items[i].weight as u128).sum()
    }

    pub fn raw_profit_of(&self, indices: &[usize]) -> u128 {
        indices.iter().map(|&i| self.items[i].profit as u128).sum()
    }

    pub fn is_feasible(&self, indices: &[usize]) -> bool {
        self.raw_weight_of(indices) <= self.capacity as u128
    }

    /// Normalized profit of a set of items.
    pub fn profit_of(&self, indices: &[usize]) -> Rational {
        ratio(self.raw_profit_of(indices), self.profit_total.max(1))
    }

    pub fn to_json(&self) -> Result<String> {
        let raw = RawInstance {
            capacity: self.capacity,
            items: self.items.iter().map(|it| RawItem { p: it.profit, w: it.weight }).collect(),
        };
        Ok(serde_json::to_string(&raw)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawInstance = serde_json::from_str(text)?;
        let pairs: Vec<(u64, u64)> = raw.items.iter().map(|it| (it.p, it.w)).collect();
        Self::normalize(&pairs, raw.capacity)
    }

    pub fn read_from(mut reader: impl Read) -> Result<Self> {
        let mut text = String::new();
        reader.read_to_string(&mut text)?;
        Self::from_json(&text)
    }

    pub fn write_to(&self, mut writer: impl Write) -> Result<()> {
        writer.write_all(self.to_json()?.as_bytes())?;
        writer.write_all(b"\n")?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(std::fs::File::open(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(std::io::BufWriter::new(std::fs::File::create(path)?))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ItemClass {
    Large,
    Small,
    Garbage,
}

/// `L(I)`, `S(I)`, `G(I)` as ascending index lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub epsilon: Epsilon,
    pub large: Vec<usize>,
    pub small: Vec<usize>,
    pub garbage: Vec<usize>,
}

pub fn partition(instance: &KnapsackInstance, epsilon: &Epsilon) -> Partition {
    let mut part = Partition {
        epsilon: epsilon.clone(),
        large: Vec::new(),
        small: Vec::new(),
        garbage: Vec::new(),
    };
    for i in 0..instance.len() {
        match instance.classify(i, epsilon) {
            ItemClass::Large => part.large.push(i),
            ItemClass::Small => part.small.push(i),
            ItemClass::Garbage => part.garbage.push(i),
        }
    }
    part
}

/// Non-increasing thresholds `e_1 ≥ … ≥ e_t` with `t ≤ ⌊1/ε⌋`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EfficiencySequence {
    thresholds: Vec<Rational>,
    epsilon: Epsilon,
}

impl EfficiencySequence {
    pub fn new(thresholds: Vec<Rational>, epsilon: Epsilon) -> Result<Self> {
        if thresholds.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::NonMonotoneSequence);
        }
        if thresholds.iter().any(|e| e < &Rational::zero()) {
            return Err(Error::InvalidParams("negative efficiency threshold".into()));
        }
        if thresholds.len() as u64 > epsilon.inverse_floor() {
            return Err(Error::InvalidParams(format!(
                "sequence length {} exceeds floor(1/epsilon) = {}",
                thresholds.len(),
                epsilon.inverse_floor()
            )));
        }
        Ok(Self { thresholds, epsilon })
    }

    pub fn empty(epsilon: Epsilon) -> Self {
        Self { thresholds: Vec::new(), epsilon }
    }

    pub fn thresholds(&self) -> &[Rational] {
        &self.thresholds
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    pub fn epsilon(&self) -> &Epsilon {
        &self.epsilon
    }

    /// `e_k` with 1-based `k`.
    pub fn get(&self, k: usize) -> Option<&Rational> {
        k.checked_sub(1).and_then(|i| self.thresholds.get(i))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpsReport {
    pub holds: bool,
    pub bucket_profits: Vec<Rational>,
}

/// `S(I)` sorted by efficiency (non-increasing, ties by index) with raw
/// prefix sums, so threshold queries cost a binary search.
#[derive(Debug, Clone)]
pub struct SmallOrder {
    order: Vec<usize>,
    prefix_profit: Vec<u128>,
    prefix_weight: Vec<u128>,
    profit_total: u64,
}

impl SmallOrder {
    pub fn new(instance: &KnapsackInstance, partition: &Partition) -> Self {
        let mut order = partition.small.clone();
        order.sort_by(|&a, &b| instance.cmp_efficiency(b, a).then(a.cmp(&b)));
        let mut prefix_profit = vec![0u128];
        let mut prefix_weight = vec![0u128];
        for &i in &order {
            let it = &instance.items()[i];
            prefix_profit.push(prefix_profit.last().unwrap() + it.profit as u128);
            prefix_weight.push(prefix_weight.last().unwrap() + it.weight as u128);
        }
        Self { order, prefix_profit, prefix_weight, profit_total: instance.profit_denominator() }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Number of small items with efficiency `≥ threshold`.
    pub fn count_at_least(&self, instance: &KnapsackInstance, threshold: &Rational) -> usize {
        self.order.partition_point(|&i| instance.cmp_efficiency_with(i, threshold) != Ordering::Less)
    }

    /// Small items with efficiency `≥ threshold`, best first.
    pub fn at_least(&self, instance: &KnapsackInstance, threshold: &Rational) -> &[usize] {
        &self.order[..self.count_at_least(instance, threshold)]
    }

    /// Raw profit and raw weight of the first `count` items of the order.
    pub fn prefix_totals(&self, count: usize) -> (u128, u128) {
        (self.prefix_profit[count], self.prefix_weight[count])
    }

    fn cuts(&self, instance: &KnapsackInstance, seq: &EfficiencySequence) -> Vec<usize> {
        let mut cuts = vec![0];
        cuts.extend(seq.thresholds().iter().map(|e| self.count_at_least(instance, e)));
        cuts.push(self.order.len());
        cuts
    }

    pub fn bucketize(&self, instance: &KnapsackInstance, seq: &EfficiencySequence) -> Vec<Vec<usize>> {
        let cuts = self.cuts(instance, seq);
        cuts.windows(2)
            .map(|w| {
                let mut bucket = self.order[w[0]..w[1]].to_vec();
                bucket.sort_unstable();
                bucket
            })
            .collect()
    }

    pub fn is_eps(&self, instance: &KnapsackInstance, seq: &EfficiencySequence) -> EpsReport {
        let cuts = self.cuts(instance, seq);
        let raw: Vec<u128> = cuts.windows(2).map(|w| self.prefix_profit[w[1]] - self.prefix_profit[w[0]]).collect();
        eps_report(&raw, self.profit_total, seq.epsilon())
    }
}

fn eps_report(raw_bucket_profits: &[u128], profit_total: u64, epsilon: &Epsilon) -> EpsReport {
    let eps = epsilon.value();
    let upper = eps + epsilon.squared();
    let bucket_profits: Vec<Rational> = raw_bucket_profits.iter().map(|&p| ratio(p, profit_total)).collect();
    let last = bucket_profits.len() - 1;
    let holds = bucket_profits
        .iter()
        .enumerate()
        .all(|(k, p)| p < &upper && (k == last || p >= eps));
    EpsReport { holds, bucket_profits }
}

/// Buckets `A_0(I), …, A_t(I)` of `S(I)`: `A_0` takes efficiency `≥ e_1`,
/// `A_k` takes `e_k > e ≥ e_{k+1}`, `A_t` takes `e < e_t`. With an empty
/// sequence the single bucket holds all of `S(I)`.
pub fn bucketize(instance: &KnapsackInstance, seq: &EfficiencySequence) -> Vec<Vec<usize>> {
    let part = partition(instance, seq.epsilon());
    let mut buckets = vec![Vec::new(); seq.len() + 1];
    for &i in &part.small {
        let k = seq
            .thresholds()
            .iter()
            .filter(|e| instance.cmp_efficiency_with(i, e) == Ordering::Less)
            .count();
        buckets[k].push(i);
    }
    buckets
}

/// Checks the equally-partitioning property: every bucket but the last has
/// profit in `[ε, ε+ε²)`, the last has profit in `[0, ε+ε²)`.
pub fn is_eps(instance: &KnapsackInstance, seq: &EfficiencySequence) -> EpsReport {
    let raw: Vec<u128> = bucketize(instance, seq).iter().map(|b| instance.raw_profit_of(b)).collect();
    eps_report(&raw, instance.profit_denominator(), seq.epsilon())
}
