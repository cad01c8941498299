//! Seeded instance profiles.
//!
//! * `uniform`: profits in `[1, 100]`, weights in `[1, max_weight]`.
//! * `many_small`: profits in `[1, 10]`, so every item stays small.
//! * `large_heavy`: five items sharing 85% of the profit over a small tail.
//! * `mixed`: three items of 10% profit each over a small tail.
//!
//! Capacity is a quarter of the total weight, and never below the heaviest
//! item.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::instance::KnapsackInstance;
use crate::sampling::derive_stream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    Uniform,
    ManySmall,
    LargeHeavy,
    Mixed,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "uniform" => Ok(Self::Uniform),
            "many_small" => Ok(Self::ManySmall),
            "large_heavy" => Ok(Self::LargeHeavy),
            "mixed" => Ok(Self::Mixed),
            _ => Err(Error::InvalidSpec(format!("unknown profile {s:?}"))),
        }
    }
}

impl std::fmt::Display for Profile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::ManySmall => "many_small",
            Self::LargeHeavy => "large_heavy",
            Self::Mixed => "mixed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub profile: Profile,
    pub n: usize,
    pub max_weight: u64,
    pub seed: Vec<u8>,
}

impl GeneratorSpec {
    pub fn new(profile: Profile, n: usize, seed: impl Into<Vec<u8>>) -> Self {
        Self { profile, n, max_weight: 100, seed: seed.into() }
    }
}

/// `(heavy items, share of total profit in percent)` per profile.
fn heavy_part(profile: Profile) -> (usize, u64) {
    match profile {
        Profile::LargeHeavy => (5, 85),
        Profile::Mixed => (3, 30),
        Profile::Uniform | Profile::ManySmall => (0, 0),
    }
}

pub fn generate(spec: &GeneratorSpec) -> Result<KnapsackInstance> {
    let (heavy, share) = heavy_part(spec.profile);
    if spec.n <= heavy || spec.max_weight == 0 {
        return Err(Error::InvalidSpec(format!("profile {} needs more than {heavy} items", spec.profile)));
    }
    let mut rng = derive_stream("generate", &spec.seed, spec.n as u64);
    let max_profit = if spec.profile == Profile::Uniform { 100 } else { 10 };
    let tail = spec.n - heavy;
    let mut raw: Vec<(u64, u64)> = (0..tail)
        .map(|_| (rng.random_range(1..=max_profit), rng.random_range(1..=spec.max_weight)))
        .collect();
    if heavy > 0 {
        let tail_profit: u64 = raw.iter().map(|r| r.0).sum();
        // Each heavy item carries share/heavy percent of the final total.
        let each = (tail_profit * share).div_ceil((100 - share) * heavy as u64);
        for _ in 0..heavy {
            raw.push((each, rng.random_range(1..=spec.max_weight)));
        }
        let len = raw.len();
        raw.rotate_right(rng.random_range(0..len));
    }
    let total_weight: u64 = raw.iter().map(|r| r.1).sum();
    let heaviest = raw.iter().map(|r| r.1).max().unwrap_or(1);
    let capacity = heaviest.max(total_weight / 4);
    KnapsackInstance::normalize(&raw, capacity)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instance::partition;
    use crate::rational::{to_f64, Epsilon};

    #[test]
    fn deterministic_bytes() {
        let spec = GeneratorSpec::new(Profile::Mixed, 200, b"g".to_vec());
        assert_eq!(generate(&spec).unwrap().to_json().unwrap(), generate(&spec).unwrap().to_json().unwrap());
        let other = GeneratorSpec::new(Profile::Mixed, 200, b"h".to_vec());
        assert_ne!(generate(&spec).unwrap(), generate(&other).unwrap());
    }

    #[test]
    fn profile_shapes() {
        let e = Epsilon::parse("1/3").unwrap();
        let heavy = generate(&GeneratorSpec::new(Profile::LargeHeavy, 500, b"a".to_vec())).unwrap();
        let part = partition(&heavy, &e);
        assert_eq!(part.large.len(), 5);
        let share = to_f64(&heavy.profit_of(&part.large));
        assert!((0.85..0.86).contains(&share), "{share}");

        let mixed = generate(&GeneratorSpec::new(Profile::Mixed, 500, b"a".to_vec())).unwrap();
        let part = partition(&mixed, &Epsilon::parse("1/4").unwrap());
        assert_eq!(part.large.len(), 3);

        let small = generate(&GeneratorSpec::new(Profile::ManySmall, 500, b"a".to_vec())).unwrap();
        assert!(partition(&small, &e).large.is_empty());
    }

    #[test]
    fn large_uniform_round_trips() {
        let inst = generate(&GeneratorSpec::new(Profile::Uniform, 100_000, b"big".to_vec())).unwrap();
        let text = inst.to_json().unwrap();
        assert_eq!(KnapsackInstance::from_json(&text).unwrap(), inst);
    }
}
