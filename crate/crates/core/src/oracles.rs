//! Reference solvers: exhaustive search, weight-indexed dynamic programming,
//! the half-approximate greedy and the fractional relaxation.

use std::cmp::Ordering;

use num_traits::Zero;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::KnapsackInstance;
use crate::rational::{ratio, Rational};

pub const BRUTE_FORCE_MAX_ITEMS: usize = 24;
pub const DEFAULT_DP_BUDGET: u128 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveResult {
    pub chosen: Vec<usize>,
    #[serde(with = "crate::rational::serde_rational")]
    pub value: Rational,
    #[serde(with = "crate::rational::serde_rational")]
    pub weight: Rational,
    pub raw_value: u128,
    pub raw_weight: u128,
}

impl SolveResult {
    pub fn from_chosen(instance: &KnapsackInstance, mut chosen: Vec<usize>) -> Self {
        chosen.sort_unstable();
        let raw_value = instance.raw_profit_of(&chosen);
        let raw_weight = instance.raw_weight_of(&chosen);
        Self {
            value: ratio(raw_value, instance.profit_denominator().max(1)),
            weight: ratio(raw_weight, instance.weight_denominator().max(1)),
            chosen,
            raw_value,
            raw_weight,
        }
    }
}

fn mask_indices(mask: u32, n: usize) -> Vec<usize> {
    (0..n).filter(|&k| mask >> k & 1 == 1).collect()
}

/// Exhaustive optimum; among maximizers the lexicographically smallest
/// index list wins.
pub fn brute_force(instance: &KnapsackInstance) -> Result<SolveResult> {
    let n = instance.len();
    if n > BRUTE_FORCE_MAX_ITEMS {
        return Err(Error::InstanceTooLarge { n, max: BRUTE_FORCE_MAX_ITEMS });
    }
    let items = instance.items();
    let cap = instance.raw_capacity() as u128;
    let (mut weight, mut value) = (0u128, 0u128);
    let mut best: (u128, u32) = (0, 0);
    let mut gray = 0u32;
    for step in 1u32..(1u32 << n) {
        let bit = step.trailing_zeros() as usize;
        gray ^= 1 << bit;
        let it = &items[bit];
        if gray >> bit & 1 == 1 {
            weight += it.weight as u128;
            value += it.profit as u128;
        } else {
            weight -= it.weight as u128;
            value -= it.profit as u128;
        }
        if weight > cap {
            continue;
        }
        let better = match value.cmp(&best.0) {
            Ordering::Greater => true,
            Ordering::Equal => mask_indices(gray, n) < mask_indices(best.1, n),
            Ordering::Less => false,
        };
        if better {
            best = (value, gray);
        }
    }
    Ok(SolveResult::from_chosen(instance, mask_indices(best.1, n)))
}

/// Exact optimum over raw integer weights; `n · (K + 1)` cells must fit the
/// budget.
pub fn dp_exact(instance: &KnapsackInstance, budget: u128) -> Result<SolveResult> {
    let n = instance.len();
    let cap = instance.raw_capacity() as usize;
    let cells = n as u128 * (cap as u128 + 1);
    if cells > budget {
        return Err(Error::DpBudgetExceeded { cells, budget });
    }
    let row_words = (cap + 1).div_ceil(64);
    let mut take = vec![0u64; n * row_words];
    let mut best = vec![0u64; cap + 1];
    for (k, it) in instance.items().iter().enumerate() {
        let w = it.weight as usize;
        if w > cap {
            continue;
        }
        let row = &mut take[k * row_words..(k + 1) * row_words];
        for c in (w..=cap).rev() {
            let cand = best[c - w] + it.profit;
            if cand > best[c] {
                best[c] = cand;
                row[c / 64] |= 1 << (c % 64);
            }
        }
    }
    let mut chosen = Vec::new();
    let mut c = cap;
    for k in (0..n).rev() {
        if take[k * row_words + c / 64] >> (c % 64) & 1 == 1 {
            chosen.push(k);
            c -= instance.items()[k].weight as usize;
        }
    }
    Ok(SolveResult::from_chosen(instance, chosen))
}

fn efficiency_order(instance: &KnapsackInstance) -> Vec<usize> {
    let mut order: Vec<usize> = (0..instance.len()).collect();
    order.sort_by(|&a, &b| instance.cmp_efficiency(b, a).then(a.cmp(&b)));
    order
}

/// Greedy by efficiency: the maximal fitting prefix or the first item that
/// does not fit, whichever is worth more. Always at least `OPT / 2`.
pub fn greedy_half(instance: &KnapsackInstance) -> SolveResult {
    let order = efficiency_order(instance);
    let cap = instance.raw_capacity() as u128;
    let mut used = 0u128;
    let mut prefix = Vec::new();
    let mut excluded = None;
    for &i in &order {
        let w = instance.items()[i].weight as u128;
        if used + w <= cap {
            used += w;
            prefix.push(i);
        } else {
            excluded = Some(i);
            break;
        }
    }
    let prefix = SolveResult::from_chosen(instance, prefix);
    match excluded {
        Some(i) if instance.items()[i].profit as u128 > prefix.raw_value => SolveResult::from_chosen(instance, vec![i]),
        _ => prefix,
    }
}

/// Optimal value of the fractional relaxation.
pub fn fractional_greedy_value(instance: &KnapsackInstance) -> Rational {
    let cap = instance.raw_capacity() as u128;
    let mut used = 0u128;
    let mut raw = Rational::zero();
    for i in efficiency_order(instance) {
        let it = &instance.items()[i];
        let w = it.weight as u128;
        if used + w <= cap {
            used += w;
            raw += ratio(it.profit, 1u32);
        } else {
            raw += ratio(it.profit as u128 * (cap - used), w);
            break;
        }
    }
    raw / ratio(instance.profit_denominator().max(1), 1u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OracleKind {
    Brute,
    Dp,
    Greedy,
}

pub fn solve(instance: &KnapsackInstance, kind: OracleKind) -> Result<SolveResult> {
    match kind {
        OracleKind::Brute => brute_force(instance),
        OracleKind::Dp => dp_exact(instance, DEFAULT_DP_BUDGET),
        OracleKind::Greedy => Ok(greedy_half(instance)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, parse_rational};
    use proptest::prelude::*;

    fn q(s: &str) -> Rational {
        parse_rational(s).unwrap()
    }

    fn inst(raw: &[(u64, u64)], cap: u64) -> KnapsackInstance {
        KnapsackInstance::normalize(raw, cap).unwrap()
    }

    // Normalized (0.3, 0.2), (0.4, 0.5), (0.3, 0.6) with K = 1 in raw units.
    fn three_items() -> KnapsackInstance {
        inst(&[(3, 2), (4, 5), (3, 6)], 10)
    }

    #[test]
    fn brute_force_fixture() {
        let r = brute_force(&three_items()).unwrap();
        assert_eq!(r.value, q("0.7"));
        assert_eq!(r.chosen, vec![0, 1]);
        assert_eq!(r.raw_weight, 7);
    }

    #[test]
    fn brute_force_single_item_and_ties() {
        let r = brute_force(&inst(&[(5, 1)], 1)).unwrap();
        assert_eq!(r.chosen, vec![0]);
        // {0,1} and {2} both reach value 2; the former is lexicographically smaller.
        let r = brute_force(&inst(&[(1, 1), (1, 1), (2, 2)], 2)).unwrap();
        assert_eq!(r.chosen, vec![0, 1]);
        let r = brute_force(&inst(&[(2, 2), (1, 1), (1, 1)], 2)).unwrap();
        assert_eq!(r.chosen, vec![0]);
    }

    #[test]
    fn brute_force_refuses_large_instances() {
        let raw = vec![(1, 1); 25];
        assert!(matches!(brute_force(&inst(&raw, 3)), Err(Error::InstanceTooLarge { .. })));
    }

    #[test]
    fn dp_fixture() {
        let i = inst(&[(60, 10), (100, 20), (120, 30)], 50);
        let r = dp_exact(&i, DEFAULT_DP_BUDGET).unwrap();
        assert_eq!(r.raw_value, 220);
        assert_eq!(r.value, q("220/280"));
        assert_eq!(r.chosen, vec![1, 2]);
        assert_eq!(brute_force(&i).unwrap().raw_value, 220);
        assert!(matches!(dp_exact(&i, 10), Err(Error::DpBudgetExceeded { .. })));
    }

    #[test]
    fn dp_handles_duplicates() {
        let i = inst(&[(5, 3), (5, 3), (5, 3)], 6);
        let r = dp_exact(&i, DEFAULT_DP_BUDGET).unwrap();
        assert_eq!(r.raw_value, 10);
        assert_eq!(r.chosen.len(), 2);
    }

    #[test]
    fn greedy_fixtures() {
        let r = greedy_half(&three_items());
        assert_eq!(r.value, q("0.7"));
        // Normalized (0.1, 0.05), (0.9, 1.0) with K = 1: W = 21, K = 20.
        let i = inst(&[(1, 1), (9, 20)], 20);
        let r = greedy_half(&i);
        assert_eq!(r.chosen, vec![1]);
        assert_eq!(r.value, q("0.9"));
        assert_eq!(brute_force(&i).unwrap().value, q("0.9"));
    }

    #[test]
    fn fractional_fixture() {
        assert_eq!(fractional_greedy_value(&three_items()), q("0.85"));
        let exact = inst(&[(2, 1), (1, 1), (1, 2)], 2);
        assert_eq!(fractional_greedy_value(&exact), brute_force(&exact).unwrap().value);
        assert_eq!(fractional_greedy_value(&inst(&[(1, 1)], 5)), int(1));
    }

    fn arb_instance(max_n: usize) -> impl Strategy<Value = KnapsackInstance> {
        (1u64..60, prop::collection::vec((0u64..40, 1u64..60), 1..=max_n)).prop_filter_map("valid", |(cap, raw)| {
            let raw: Vec<(u64, u64)> = raw.into_iter().map(|(p, w)| (p, 1 + (w - 1) % cap)).collect();
            KnapsackInstance::normalize(&raw, cap).ok()
        })
    }

    proptest! {
        #[test]
        fn oracles_agree(i in arb_instance(12)) {
            let b = brute_force(&i).unwrap();
            let d = dp_exact(&i, DEFAULT_DP_BUDGET).unwrap();
            prop_assert_eq!(&b.value, &d.value);
            prop_assert!(i.is_feasible(&b.chosen) && i.is_feasible(&d.chosen));
            let g = greedy_half(&i);
            prop_assert!(i.is_feasible(&g.chosen));
            prop_assert!(&g.value * int(2) >= b.value && g.value <= b.value);
            let f = fractional_greedy_value(&i);
            prop_assert!(f >= b.value && f <= &g.value * int(2));
        }
    }
}
