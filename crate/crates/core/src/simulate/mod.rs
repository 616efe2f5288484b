//! Monte Carlo runs of the elitist (1+1) scheme under a policy.
//!
//! Runs move on fitness levels. Rejected and equal-fitness offspring leave
//! the level unchanged, so the number of evaluations spent on a level is
//! geometric with the level's improvement probability; a run draws that
//! waiting time and then the improving offspring fitness directly.
//! [`run_bitstring`] executes the scheme literally on bit strings for
//! small `n` and serves as a check of the reduction.

pub mod rng;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{HyperScratch, MutationLaw, WeightVector, DP_TAIL_TOLERANCE, MIN_IMPROVEMENT};
use crate::math::CompensatedSum;
use crate::policy::PolicyTable;
use crate::runtime::init_distribution;

pub use rng::{stream_seed, SplitMix64};

/// One run: `(evaluations_used, fitness)` at initialization and at every
/// strict improvement.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub n: usize,
    pub events: Vec<(u64, usize)>,
    /// `None` when the budget ran out first.
    pub hit_optimum_at: Option<u64>,
}

impl RunRecord {
    pub fn final_fitness(&self) -> usize {
        self.events.last().map_or(0, |e| e.1)
    }

    /// Best fitness among events with at most `budget` evaluations.
    pub fn fitness_within(&self, budget: u64) -> usize {
        self.events.iter().take_while(|e| e.0 <= budget).last().map_or(0, |e| e.1)
    }

    /// First evaluation count with fitness at least `target`.
    pub fn hitting_time(&self, target: usize) -> Option<u64> {
        self.events.iter().find(|e| e.1 >= target).map(|e| e.0)
    }
}

/// Statistics at one budget or target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointStats {
    pub point: u64,
    pub mean: f64,
    /// Sample standard deviation; 0 for fewer than two values.
    pub std: f64,
    pub count: usize,
    /// Runs that never reached the target (fixed-target only).
    pub censored: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub points: Vec<PointStats>,
}

fn point_stats(point: u64, values: &[f64], censored: usize) -> PointStats {
    let count = values.len();
    let mean = values.iter().copied().collect::<CompensatedSum>().value() / count as f64;
    let std = if count < 2 {
        0.0
    } else {
        let ss = values.iter().map(|v| (v - mean) * (v - mean)).collect::<CompensatedSum>().value();
        (ss / (count - 1) as f64).sqrt()
    };
    PointStats { point, mean, std, count, censored }
}

/// Default cap on evaluations per run: `100 n ln n`, at least 100.
pub fn default_budget_cap(n: usize) -> u64 {
    let nf = n as f64;
    ((100.0 * nf * nf.ln()).ceil() as u64).max(100)
}

/// Draws a strength from `weights` by inversion.
pub fn sample_strength(weights: &WeightVector, rng: &mut SplitMix64) -> usize {
    let u = rng.next_f64() * weights.total();
    let mut acc = 0.0;
    let mut last = weights.range().0;
    for (k, w) in weights.iter() {
        if w == 0.0 {
            continue;
        }
        acc += w;
        last = k;
        if u < acc {
            return k;
        }
    }
    last
}

/// Draws a strength from `law` at dimension `n`.
pub fn sample_law(law: &MutationLaw, n: usize, rng: &mut SplitMix64) -> Result<usize> {
    let weights = law.weights(n, crate::kernel::DEFAULT_TAIL_EPSILON)?;
    Ok(sample_strength(&weights, rng))
}

/// Improvement probability and conditional distribution of the improving
/// offspring fitness at one level.
#[derive(Clone, Debug)]
struct LevelSampler {
    improve: f64,
    fitness: Vec<usize>,
    cdf: Vec<f64>,
}

impl LevelSampler {
    fn build(scratch: &mut HyperScratch, n: usize, l: usize, weights: &WeightVector) -> Self {
        let mut mass = vec![0.0; n - l];
        for (k, w) in weights.iter() {
            if k == 0 || w == 0.0 {
                continue;
            }
            let terms = scratch.walk(n, l, k, DP_TAIL_TOLERANCE);
            for (i, p) in terms.probs.iter().enumerate() {
                let j = terms.j_lo + i;
                if 2 * j > k {
                    mass[2 * j - k - 1] += w * p;
                }
            }
        }
        let total = weights.total();
        let mut fitness = Vec::new();
        let mut cdf = Vec::new();
        let mut acc = CompensatedSum::new();
        for (i, m) in mass.iter().enumerate() {
            if *m > 0.0 {
                acc.add(m / total);
                fitness.push(l + 1 + i);
                cdf.push(acc.value());
            }
        }
        Self { improve: acc.value(), fitness, cdf }
    }

    fn sample_fitness(&self, rng: &mut SplitMix64) -> usize {
        let u = rng.next_f64() * self.improve;
        let i = self.cdf.partition_point(|&c| c <= u).min(self.fitness.len() - 1);
        self.fitness[i]
    }
}

/// Precomputed per-level samplers for one policy.
#[derive(Clone, Debug)]
pub struct LevelChain {
    n: usize,
    init_cdf: Vec<f64>,
    levels: Vec<LevelSampler>,
}

impl LevelChain {
    pub fn new(policy: &PolicyTable) -> Result<Self> {
        policy.validate()?;
        let n = policy.n;
        let tail = policy.meta.tail_epsilon;
        let levels = (0..n)
            .into_par_iter()
            .map_init(HyperScratch::new, |scratch, l| {
                let weights = policy.law_at(l).weights(n, tail)?;
                Ok(LevelSampler::build(scratch, n, l, &weights))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut acc = CompensatedSum::new();
        let init_cdf = init_distribution(n)?
            .mass
            .iter()
            .map(|m| {
                acc.add(*m);
                acc.value()
            })
            .collect();
        Ok(Self { n, init_cdf, levels })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Improvement probability at level `l`.
    pub fn improvement_probability(&self, l: usize) -> f64 {
        self.levels[l].improve
    }

    /// Draws the offspring fitness at level `l` given that it improves.
    pub fn improving_offspring(&self, l: usize, rng: &mut SplitMix64) -> usize {
        self.levels[l].sample_fitness(rng)
    }

    pub fn run(&self, seed: u64, budget_cap: u64) -> RunRecord {
        let mut rng = SplitMix64::new(seed);
        let u = rng.next_f64();
        let mut fitness = self.init_cdf.partition_point(|&c| c <= u).min(self.n);
        let mut used = 0u64;
        let mut events = vec![(0, fitness)];
        while fitness < self.n {
            let level = &self.levels[fitness];
            if level.improve < MIN_IMPROVEMENT {
                break;
            }
            let wait = if level.improve >= 1.0 {
                1
            } else {
                let u = rng.next_f64_open_closed();
                (u.ln() / (-level.improve).ln_1p()).ceil().max(1.0) as u64
            };
            if wait > budget_cap - used {
                break;
            }
            used += wait;
            fitness = level.sample_fitness(&mut rng);
            events.push((used, fitness));
        }
        let hit_optimum_at = (fitness == self.n).then_some(used);
        RunRecord { seed, n: self.n, events, hit_optimum_at }
    }
}

/// One run of `policy` from `seed`, capped at `budget_cap` evaluations.
pub fn run(policy: &PolicyTable, seed: u64, budget_cap: u64) -> Result<RunRecord> {
    check_cap(budget_cap)?;
    Ok(LevelChain::new(policy)?.run(seed, budget_cap))
}

/// `runs` independent runs; run `i` is seeded with `stream_seed(master_seed, i)`.
pub fn run_batch(policy: &PolicyTable, master_seed: u64, runs: usize, budget_cap: u64) -> Result<Vec<RunRecord>> {
    check_cap(budget_cap)?;
    let chain = LevelChain::new(policy)?;
    Ok((0..runs as u64)
        .into_par_iter()
        .map(|i| chain.run(stream_seed(master_seed, i), budget_cap))
        .collect())
}

fn check_cap(budget_cap: u64) -> Result<()> {
    if budget_cap < 1 {
        return Err(Error::Domain("budget cap must be at least 1".into()));
    }
    Ok(())
}

/// Largest dimension of [`run_bitstring`].
pub const MAX_BITSTRING_N: usize = 64;

/// Mask of `k` distinct positions out of `n <= 64`, uniformly at random
/// (Floyd's sampling).
pub fn random_flip_mask(n: usize, k: usize, rng: &mut SplitMix64) -> u64 {
    assert!(k <= n && n <= MAX_BITSTRING_N);
    let mut mask = 0u64;
    for j in (n - k)..n {
        let t = rng.below(j as u64 + 1) as usize;
        let pos = if mask >> t & 1 == 1 { j } else { t };
        mask |= 1 << pos;
    }
    mask
}

/// Runs the scheme on explicit bit strings: draw `k`, flip `k` distinct
/// uniformly chosen bits, keep the offspring if it is not worse.
pub fn run_bitstring(policy: &PolicyTable, seed: u64, budget_cap: u64) -> Result<RunRecord> {
    check_cap(budget_cap)?;
    policy.validate()?;
    let n = policy.n;
    if n > MAX_BITSTRING_N {
        return Err(Error::Capacity { what: "bit-string simulation", max: MAX_BITSTRING_N, n });
    }
    let weights = (0..n)
        .map(|l| policy.law_at(l).weights(n, policy.meta.tail_epsilon))
        .collect::<Result<Vec<_>>>()?;
    let mask = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
    let mut rng = SplitMix64::new(seed);
    let mut x = rng.next_u64() & mask;
    let mut fitness = x.count_ones() as usize;
    let mut events = vec![(0, fitness)];
    let mut used = 0u64;
    while fitness < n && used < budget_cap {
        let k = sample_strength(&weights[fitness], &mut rng);
        used += 1;
        let y = x ^ random_flip_mask(n, k, &mut rng);
        let fy = y.count_ones() as usize;
        if fy >= fitness {
            x = y;
            if fy > fitness {
                fitness = fy;
                events.push((used, fitness));
            }
        }
    }
    let hit_optimum_at = (fitness == n).then_some(used);
    Ok(RunRecord { seed, n, events, hit_optimum_at })
}

/// Fitness reached within each budget (counted in offspring evaluations).
pub fn fixed_budget(records: &[RunRecord], budgets: &[u64]) -> Result<AggregateStats> {
    if records.is_empty() {
        return Err(Error::Domain("no runs to aggregate".into()));
    }
    if let Some(b) = budgets.iter().find(|&&b| b < 1) {
        return Err(Error::Domain(format!("budget {b} < 1")));
    }
    let points = budgets
        .iter()
        .map(|&b| {
            let values: Vec<f64> = records.iter().map(|r| r.fitness_within(b) as f64).collect();
            point_stats(b, &values, 0)
        })
        .collect();
    Ok(AggregateStats { points })
}

/// Evaluations needed to first reach each target; runs that never reach a
/// target are left out of its statistics and counted as censored.
pub fn fixed_target(records: &[RunRecord], targets: &[usize]) -> Result<AggregateStats> {
    let Some(first) = records.first() else {
        return Err(Error::Domain("no runs to aggregate".into()));
    };
    let n = first.n;
    if let Some(t) = targets.iter().find(|&&t| t > n) {
        return Err(Error::Domain(format!("target {t} outside [0, {n}]")));
    }
    let points = targets
        .iter()
        .map(|&t| {
            let hits: Vec<f64> = records.iter().filter_map(|r| r.hitting_time(t)).map(|h| h as f64).collect();
            point_stats(t as u64, &hits, records.len() - hits.len())
        })
        .collect();
    Ok(AggregateStats { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{k_opt_table, RateFamily};

    #[test]
    fn flip_all_from_zero() {
        let mut ks = vec![1; 4];
        ks[0] = 4;
        let policy = PolicyTable {
            values: crate::policy::PolicyValues::Strengths(ks),
            ..PolicyTable::static_strength(4, 1).unwrap()
        };
        let chain = LevelChain::new(&policy).unwrap();
        assert_eq!(chain.improvement_probability(0), 1.0);
        for seed in 0..200 {
            let r = chain.run(seed, 10_000);
            if r.events[0].1 == 0 {
                assert_eq!(r.events[1], (1, 4));
                return;
            }
        }
        panic!("no run started at fitness 0");
    }

    #[test]
    fn three_bit_runs_improve_strictly() {
        let (policy, _) = k_opt_table(3).unwrap();
        let records = run_batch(&policy, 9, 200, 1_000).unwrap();
        for r in &records {
            assert!(r.events.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1));
            assert_eq!(r.final_fitness(), 3);
            assert_eq!(r.hit_optimum_at, Some(r.events.last().unwrap().0));
        }
    }

    #[test]
    fn strength_sampling() {
        let mut rng = SplitMix64::new(3);
        for _ in 0..100 {
            assert_eq!(sample_law(&MutationLaw::Deterministic(5), 10, &mut rng).unwrap(), 5);
            assert_eq!(sample_law(&MutationLaw::ConditionalBinomial(0.0), 10, &mut rng).unwrap(), 1);
            assert_eq!(sample_law(&MutationLaw::Binomial(1.0), 3, &mut rng).unwrap(), 3);
        }
    }

    #[test]
    fn budget_cap_is_respected() {
        let policy = PolicyTable::static_rate(50, RateFamily::Binomial, 0.02).unwrap();
        let chain = LevelChain::new(&policy).unwrap();
        let r = chain.run(1, 5);
        assert!(r.events.last().unwrap().0 <= 5);
        assert_eq!(r.hit_optimum_at, None);
        assert!(run(&policy, 1, 0).is_err());
    }

    #[test]
    fn aggregation_edge_cases() {
        let (policy, _) = k_opt_table(20).unwrap();
        let records = run_batch(&policy, 5, 50, 100_000).unwrap();
        let fb = fixed_budget(&records, &[1_000_000]).unwrap();
        assert_eq!(fb.points[0].mean, 20.0);
        assert_eq!(fb.points[0].std, 0.0);
        let ft = fixed_target(&records, &[0]).unwrap();
        assert_eq!(ft.points[0].mean, 0.0);
        assert_eq!(ft.points[0].count, 50);
        assert!(fixed_budget(&records, &[0]).is_err());
        assert!(fixed_target(&records, &[21]).is_err());
        assert!(fixed_target(&[], &[1]).is_err());
    }

    #[test]
    fn bitstring_capacity() {
        let policy = PolicyTable::static_strength(65, 1).unwrap();
        assert!(matches!(run_bitstring(&policy, 0, 10), Err(Error::Capacity { .. })));
    }
}
