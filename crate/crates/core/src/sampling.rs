//! Weighted-sampling access: profit-proportional draws, point probes, probe
//! accounting and the derived randomness streams.
//!
//! Every stream is a ChaCha20 generator keyed by
//! `SHA-256("lcakp-stream-v1" ‖ len(label) ‖ label ‖ len(seed) ‖ seed ‖ nonce)`
//! with lengths as little-endian `u32` and the nonce as little-endian `u64`.
//! The `internal` streams (one per quantile call, nonce = call number) depend
//! on the shared seed alone; the `sampling` stream also takes the run nonce.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Binomial, Distribution};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::instance::{Item, KnapsackInstance};

pub const STREAM_DOMAIN: &[u8] = b"lcakp-stream-v1";

pub fn derive_stream(label: &str, seed: &[u8], nonce: u64) -> ChaCha20Rng {
    let mut h = Sha256::new();
    h.update(STREAM_DOMAIN);
    h.update((label.len() as u32).to_le_bytes());
    h.update(label.as_bytes());
    h.update((seed.len() as u32).to_le_bytes());
    h.update(seed);
    h.update(nonce.to_le_bytes());
    ChaCha20Rng::from_seed(h.finalize().into())
}

/// The read-only seed `r` shared by every copy of the algorithm, plus the
/// nonce that separates independent runs.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RandomnessPlan {
    pub seed: Vec<u8>,
    pub run_nonce: u64,
}

impl RandomnessPlan {
    pub fn new(seed: impl Into<Vec<u8>>, run_nonce: u64) -> Self {
        Self { seed: seed.into(), run_nonce }
    }

    pub fn with_nonce(&self, run_nonce: u64) -> Self {
        Self { seed: self.seed.clone(), run_nonce }
    }

    /// Internal randomness of the `call`-th quantile invocation.
    pub fn internal_stream(&self, call: u64) -> ChaCha20Rng {
        derive_stream("internal", &self.seed, call)
    }

    pub fn sampling_stream(&self) -> ChaCha20Rng {
        derive_stream("sampling", &self.seed, self.run_nonce)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct SampleAccount {
    pub samples_drawn: u64,
    pub point_probes: u64,
}

impl std::ops::AddAssign for SampleAccount {
    fn add_assign(&mut self, rhs: Self) {
        self.samples_drawn += rhs.samples_drawn;
        self.point_probes += rhs.point_probes;
    }
}

/// Multiset of item indices as `(index, multiplicity)`, ascending by index.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Multiset {
    entries: Vec<(usize, u64)>,
    total: u64,
}

impl Multiset {
    pub fn from_indices(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        let total = indices.len() as u64;
        let mut entries: Vec<(usize, u64)> = Vec::new();
        for i in indices {
            match entries.last_mut() {
                Some((j, c)) if *j == i => *c += 1,
                _ => entries.push((i, 1)),
            }
        }
        Self { entries, total }
    }

    fn from_counts(entries: Vec<(usize, u64)>) -> Self {
        let total = entries.iter().map(|e| e.1).sum();
        Self { entries, total }
    }

    pub fn entries(&self) -> &[(usize, u64)] {
        &self.entries
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn distinct(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.0)
    }

    pub fn count(&self, index: usize) -> u64 {
        self.entries.binary_search_by_key(&index, |e| e.0).map_or(0, |k| self.entries[k].1)
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }
}

/// `m` draws from the categorical distribution proportional to `weights`,
/// returned as per-category counts. Uses sequential conditional binomials.
pub fn multinomial<R: Rng + ?Sized>(weights: &[u64], m: u64, rng: &mut R) -> Vec<u64> {
    let mut remaining_mass: u128 = weights.iter().map(|&w| w as u128).sum();
    let mut remaining = m;
    let mut counts = vec![0u64; weights.len()];
    for (k, &w) in weights.iter().enumerate() {
        if remaining == 0 || remaining_mass == 0 {
            break;
        }
        if w == 0 {
            continue;
        }
        let c = if w as u128 == remaining_mass {
            remaining
        } else {
            let p = w as f64 / remaining_mass as f64;
            Binomial::new(remaining, p).expect("probability in [0, 1]").sample(rng)
        };
        counts[k] = c;
        remaining -= c;
        remaining_mass -= w as u128;
    }
    counts
}

/// Sampling and probing front-end over one instance for one run.
pub struct SamplingOracle<'a> {
    instance: &'a KnapsackInstance,
    account: SampleAccount,
    probe_budget: Option<u64>,
}

impl<'a> SamplingOracle<'a> {
    pub fn new(instance: &'a KnapsackInstance) -> Self {
        Self { instance, account: SampleAccount::default(), probe_budget: None }
    }

    pub fn with_probe_budget(instance: &'a KnapsackInstance, budget: u64) -> Self {
        Self { instance, account: SampleAccount::default(), probe_budget: Some(budget) }
    }

    pub fn instance(&self) -> &'a KnapsackInstance {
        self.instance
    }

    pub fn account(&self) -> SampleAccount {
        self.account
    }

    fn draw_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let cum = self.instance.cumulative_profit();
        let u = rng.random_range(0..self.instance.profit_denominator());
        cum.partition_point(|&c| c <= u)
    }

    /// One item drawn with probability equal to its normalized profit.
    pub fn weighted_sample<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<&'a Item> {
        if self.instance.is_feasibility_only() {
            return Err(Error::NotSampleable);
        }
        let i = self.draw_index(rng);
        self.account.samples_drawn += 1;
        Ok(&self.instance.items()[i])
    }

    /// `m` independent weighted samples. Small requests are drawn one by one;
    /// requests larger than the instance go through [`multinomial`].
    pub fn sample_multiset<R: Rng + ?Sized>(&mut self, m: u64, rng: &mut R) -> Result<Multiset> {
        if self.instance.is_feasibility_only() {
            return Err(Error::NotSampleable);
        }
        let n = self.instance.len() as u64;
        let set = if m <= n {
            Multiset::from_indices((0..m).map(|_| self.draw_index(rng)).collect())
        } else {
            let weights: Vec<u64> = self.instance.items().iter().map(|it| it.profit).collect();
            let counts = multinomial(&weights, m, rng);
            Multiset::from_counts(counts.into_iter().enumerate().filter(|e| e.1 > 0).collect())
        };
        self.account.samples_drawn += m;
        Ok(set)
    }

    /// Direct lookup of item `index`; counts against the probe budget.
    pub fn probe(&mut self, index: usize) -> Result<&'a Item> {
        if let Some(budget) = self.probe_budget {
            if self.account.point_probes >= budget {
                return Err(Error::BudgetExceeded { budget });
            }
        }
        let item = self.instance.item(index)?;
        self.account.point_probes += 1;
        Ok(item)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    fn inst(raw: &[(u64, u64)]) -> KnapsackInstance {
        let cap = raw.iter().map(|r| r.1).max().unwrap();
        KnapsackInstance::normalize(raw, cap).unwrap()
    }

    #[test]
    fn stream_discipline() {
        let a = RandomnessPlan::new(b"seed".to_vec(), 1);
        let b = a.with_nonce(2);
        let bytes = |mut r: ChaCha20Rng| {
            let mut buf = vec![0u8; 1024];
            r.fill_bytes(&mut buf);
            buf
        };
        assert_eq!(bytes(a.internal_stream(0)), bytes(b.internal_stream(0)));
        assert_ne!(bytes(a.internal_stream(0)), bytes(a.internal_stream(1)));
        assert_ne!(bytes(a.sampling_stream()), bytes(b.sampling_stream()));
        assert_eq!(bytes(a.sampling_stream()), bytes(a.clone().sampling_stream()));
        assert_ne!(bytes(a.internal_stream(1)), bytes(a.with_nonce(1).sampling_stream()));
        let c = RandomnessPlan::new(b"other".to_vec(), 1);
        assert_ne!(bytes(a.internal_stream(0)), bytes(c.internal_stream(0)));
    }

    #[test]
    fn stream_derivation_is_pinned() {
        let mut r = derive_stream("internal", &[0xab, 0xcd], 7);
        let first = r.next_u64();
        let mut r2 = derive_stream("internal", &[0xab, 0xcd], 7);
        assert_eq!(first, r2.next_u64());
        let digest = {
            let mut h = Sha256::new();
            h.update(b"lcakp-stream-v1");
            h.update(8u32.to_le_bytes());
            h.update(b"internal");
            h.update(2u32.to_le_bytes());
            h.update([0xab, 0xcd]);
            h.update(7u64.to_le_bytes());
            h.finalize()
        };
        let mut r3 = ChaCha20Rng::from_seed(digest.into());
        assert_eq!(first, r3.next_u64());
    }

    #[test]
    fn single_item_is_always_drawn() {
        let i = inst(&[(5, 1)]);
        let mut o = SamplingOracle::new(&i);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        assert_eq!(o.weighted_sample(&mut rng).unwrap().index, 0);
        let s = o.sample_multiset(3, &mut rng).unwrap();
        assert_eq!(s.entries(), &[(0, 3)]);
        assert_eq!(o.account().samples_drawn, 4);
        assert!(o.sample_multiset(0, &mut rng).unwrap().is_empty());
        assert_eq!(o.account().samples_drawn, 4);
    }

    #[test]
    fn zero_profit_items_are_never_drawn() {
        let i = inst(&[(0, 1), (3, 1), (0, 1), (1, 1)]);
        let mut o = SamplingOracle::new(&i);
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..2000 {
            let k = o.weighted_sample(&mut rng).unwrap().index;
            assert!(k == 1 || k == 3);
        }
        let s = o.sample_multiset(100_000, &mut rng).unwrap();
        assert_eq!(s.count(0) + s.count(2), 0);
        assert_eq!(s.total(), 100_000);
    }

    fn chi_square(observed: &[u64], probs: &[f64]) -> f64 {
        let n: u64 = observed.iter().sum();
        observed
            .iter()
            .zip(probs)
            .map(|(&o, &p)| {
                let e = n as f64 * p;
                (o as f64 - e).powi(2) / e
            })
            .sum()
    }

    // Upper 1e-3 tail of chi-square with k degrees of freedom
    // (Wilson-Hilferty approximation, z = 3.0902).
    fn chi_square_critical(k: f64) -> f64 {
        let z = 3.0902;
        k * (1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt()).powi(3)
    }

    #[test]
    fn profits_three_items_frequencies() {
        let i = inst(&[(5, 1), (3, 1), (2, 1)]);
        let mut o = SamplingOracle::new(&i);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let mut counts = [0u64; 3];
        for _ in 0..1_000_000 {
            counts[o.weighted_sample(&mut rng).unwrap().index] += 1;
        }
        for (c, p) in counts.iter().zip([0.5f64, 0.3, 0.2]) {
            let sd = (1e6 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - 1e6 * p).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn chi_square_goodness_of_fit() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let raw: Vec<(u64, u64)> = (0..1000).map(|_| (rng.random_range(1..100), 1)).collect();
        let i = inst(&raw);
        let total: u64 = raw.iter().map(|r| r.0).sum();
        let probs: Vec<f64> = raw.iter().map(|r| r.0 as f64 / total as f64).collect();
        let mut o = SamplingOracle::new(&i);
        let mut counts = vec![0u64; 1000];
        for _ in 0..200_000 {
            counts[o.weighted_sample(&mut rng).unwrap().index] += 1;
        }
        assert!(chi_square(&counts, &probs) < chi_square_critical(999.0));
        let s = o.sample_multiset(200_000, &mut rng).unwrap();
        let mut counts = vec![0u64; 1000];
        for &(k, c) in s.entries() {
            counts[k] = c;
        }
        assert!(chi_square(&counts, &probs) < chi_square_critical(999.0));
    }

    #[test]
    fn coupon_collector_bound() {
        // 1/δ equal-profit items with m = ⌈6δ⁻¹(ln δ⁻¹ + 1)⌉: all items seen in
        // at least 5/6 of trials.
        let n = 50u64;
        let m = (6.0 * n as f64 * ((n as f64).ln() + 1.0)).ceil() as u64;
        let raw: Vec<(u64, u64)> = (0..n).map(|_| (1, 1)).collect();
        let i = inst(&raw);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let trials = 2000;
        let mut full = 0;
        for _ in 0..trials {
            let mut o = SamplingOracle::new(&i);
            if o.sample_multiset(m, &mut rng).unwrap().entries().len() as u64 == n {
                full += 1;
            }
        }
        assert!(full as f64 >= trials as f64 * 5.0 / 6.0);
    }

    #[test]
    fn probes_and_budget() {
        let i = inst(&[(1, 1), (2, 2)]);
        let mut o = SamplingOracle::with_probe_budget(&i, 2);
        let a = *o.probe(1).unwrap();
        let b = *o.probe(1).unwrap();
        assert_eq!(a, b);
        assert!(matches!(o.probe(0), Err(Error::BudgetExceeded { budget: 2 })));
        assert_eq!(o.account().point_probes, 2);
        let mut o = SamplingOracle::new(&i);
        assert!(matches!(o.probe(2), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn feasibility_only_probe_reads_zero_weight() {
        let i = KnapsackInstance::feasibility_only(&[3, 0, 1], 4).unwrap();
        let mut o = SamplingOracle::new(&i);
        assert_eq!(o.probe(1).unwrap().weight, 0);
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        assert!(matches!(o.weighted_sample(&mut rng), Err(Error::NotSampleable)));
    }

    #[test]
    fn multinomial_conserves_count() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for m in [0u64, 1, 17, 1 << 40] {
            let c = multinomial(&[3, 0, 5, 1], m, &mut rng);
            assert_eq!(c.iter().sum::<u64>(), m);
            assert_eq!(c[1], 0);
        }
    }
}
