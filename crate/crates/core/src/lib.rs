//! Local computation algorithm (LCA) for 0/1 Knapsack under weighted-sampling
//! access.
//!
//! Every query is answered from scratch: the algorithm samples the instance
//! proportionally to profit, builds a constant-size surrogate instance from
//! the sampled large items plus reproducible efficiency quantiles of the
//! small items, runs the half-approximate greedy on the surrogate, and maps
//! the greedy decision back to the original item. Queries that share the
//! read-only seed agree with each other with high probability even though
//! their samples are independent.
//!
//! Module map:
//!
//! * [`instance`]: instances, normalization, the large/small/garbage split
//!   and equally-partitioning efficiency sequences.
//! * [`sampling`]: profit-proportional sampling, point probes, probe budgets
//!   and the derived randomness streams.
//! * [`rquantile`]: reproducible median / quantile over a finite code domain
//!   and the efficiency-to-code discretization.
//! * [`lca`]: the per-query algorithm, surrogate construction and greedy
//!   conversion.
//! * [`oracles`]: exact and greedy reference solvers.
//! * [`hardness`]: hard-instance families and the probe-budget adversary.
//! * [`generate`], [`experiment`]: instance profiles and the batch harness.

pub mod error;
pub mod experiment;
pub mod generate;
pub mod hardness;
pub mod instance;
pub mod lca;
pub mod oracles;
pub mod par;
pub mod rational;
pub mod rquantile;
pub mod sampling;

pub use error::{Error, Result};
pub use instance::{EfficiencySequence, ItemClass, KnapsackInstance, Partition};
pub use lca::{answer_query, GreedySummary, LcaConfig, LcaRun, ReducedInstance};
pub use rational::Rational;
pub use sampling::RandomnessPlan;
