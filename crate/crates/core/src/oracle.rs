//! Exact rational reference computations for small dimensions.
//!
//! Nothing in here shares code with the floating-point kernel: transitions
//! come from explicit enumeration of flip sets, remaining times from exact
//! recurrences, and the bit-string chain from an exact linear solve over all
//! `2^n` states.

use std::collections::hash_map::Entry;
use std::collections::{BTreeMap, HashMap};

use num::{BigInt, BigRational, One, Zero};

use crate::error::{Error, Result};
use crate::kernel::MutationLaw;
use crate::policy::{PolicyTable, PolicyValues};

pub type Rational = BigRational;

const MAX_TRANSITION_N: usize = 20;
const MAX_TIMES_N: usize = 16;
const MAX_EXHAUSTIVE_N: usize = 6;
const MAX_CHAIN_N: usize = 10;

fn capacity(what: &'static str, max: usize, n: usize) -> Result<()> {
    if n > max || n == 0 {
        return Err(Error::Capacity { what, max, n });
    }
    Ok(())
}

fn int(v: u64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

fn binomial(n: usize, k: usize) -> BigInt {
    let mut acc = BigInt::one();
    for i in 0..k {
        acc = acc * BigInt::from(n - i) / BigInt::from(i + 1);
    }
    acc
}

/// All `k`-subsets of `n` positions as bit masks.
fn subsets(n: usize, k: usize) -> impl Iterator<Item = u32> {
    let limit: u64 = 1u64 << n;
    let start: u64 = if k == 0 { 0 } else { (1u64 << k) - 1 };
    let mut next = Some(start);
    std::iter::from_fn(move || {
        let x = next?;
        next = if x == 0 {
            None
        } else {
            // Gosper's hack
            let c = x & x.wrapping_neg();
            let r = x + c;
            let y = (((r ^ x) >> 2) / c) | r;
            (y < limit).then_some(y)
        };
        Some(x as u32)
    })
}

/// Offspring fitness distribution of flipping exactly `k` bits, by counting
/// all `C(n, k)` flip sets applied to a parent with `l` one-bits.
pub fn exact_transition(n: usize, l: usize, k: usize) -> Result<BTreeMap<usize, Rational>> {
    capacity("exact_transition", MAX_TRANSITION_N, n)?;
    if l > n || k > n {
        return Err(Error::Domain(format!("(l={l}, k={k}) outside [0, {n}]")));
    }
    let parent: u32 = if l == 0 { 0 } else { (1u32 << l) - 1 };
    let mut counts: BTreeMap<usize, u64> = BTreeMap::new();
    let mut total = 0u64;
    for mask in subsets(n, k) {
        *counts.entry((parent ^ mask).count_ones() as usize).or_default() += 1;
        total += 1;
    }
    Ok(counts
        .into_iter()
        .map(|(f, c)| (f, Rational::new(BigInt::from(c), BigInt::from(total))))
        .collect())
}

/// Exact strength weights of a mutation law; index `k` in `[0, n]`.
pub fn exact_weights(n: usize, law: &ExactLaw) -> Vec<Rational> {
    let mut w = vec![Rational::zero(); n + 1];
    match law {
        ExactLaw::Strength(k) => w[*k] = Rational::one(),
        ExactLaw::Binomial(p) | ExactLaw::ConditionalBinomial(p) => {
            let conditional = matches!(law, ExactLaw::ConditionalBinomial(_));
            if conditional && p.is_zero() {
                w[1] = Rational::one();
                return w;
            }
            let q = Rational::one() - p;
            for (k, slot) in w.iter_mut().enumerate() {
                *slot = Rational::from_integer(binomial(n, k))
                    * num::pow(p.clone(), k)
                    * num::pow(q.clone(), n - k);
            }
            if conditional {
                let norm = Rational::one() - num::pow(q, n);
                w[0] = Rational::zero();
                for slot in w.iter_mut() {
                    *slot = &*slot / &norm;
                }
            }
        }
    }
    w
}

/// A mutation law with exact parameters.
#[derive(Clone, Debug, PartialEq)]
pub enum ExactLaw {
    Strength(usize),
    Binomial(Rational),
    ConditionalBinomial(Rational),
}

impl ExactLaw {
    /// Exact image of a floating-point law; every finite `f64` is a dyadic rational.
    pub fn from_law(law: &MutationLaw) -> Self {
        let exact = |p: f64| Rational::from_float(p).expect("finite rate");
        match *law {
            MutationLaw::Deterministic(k) => ExactLaw::Strength(k),
            MutationLaw::Binomial(p) => ExactLaw::Binomial(exact(p)),
            MutationLaw::ConditionalBinomial(p) => ExactLaw::ConditionalBinomial(exact(p)),
        }
    }
}

/// One exact law per fitness level `0..n`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactPolicy {
    pub laws: Vec<ExactLaw>,
}

impl ExactPolicy {
    pub fn strengths(ks: &[usize]) -> Self {
        Self { laws: ks.iter().map(|&k| ExactLaw::Strength(k)).collect() }
    }

    pub fn from_table(table: &PolicyTable) -> Self {
        let laws = match &table.values {
            PolicyValues::Strengths(ks) => ks.iter().map(|&k| ExactLaw::Strength(k)).collect(),
            PolicyValues::Rates(_) => (0..table.n)
                .map(|l| ExactLaw::from_law(&table.law_at(l)))
                .collect(),
        };
        Self { laws }
    }
}

/// Level-`l` offspring distribution under a law, indexed by fitness.
fn level_transition(n: usize, l: usize, law: &ExactLaw, cache: &mut TransitionCache) -> Result<Vec<Rational>> {
    let weights = exact_weights(n, law);
    let mut q = vec![Rational::zero(); n + 1];
    for (k, w) in weights.iter().enumerate() {
        if w.is_zero() {
            continue;
        }
        for (f, p) in cache.get(n, l, k)? {
            q[*f] += w * p;
        }
    }
    Ok(q)
}

#[derive(Default)]
struct TransitionCache {
    map: HashMap<(usize, usize, usize), Vec<(usize, Rational)>>,
}

impl TransitionCache {
    fn get(&mut self, n: usize, l: usize, k: usize) -> Result<&[(usize, Rational)]> {
        Ok(match self.map.entry((n, l, k)) {
            Entry::Occupied(e) => e.into_mut(),
            Entry::Vacant(e) => e.insert(exact_transition(n, l, k)?.into_iter().collect()),
        })
    }
}

/// Self-loop-resolved time at level `l` given exact times above it; `None`
/// when no improvement is possible.
fn resolve_level(l: usize, q: &[Rational], times: &[Rational]) -> Option<Rational> {
    let n = q.len() - 1;
    let improve: Rational = q[l + 1..].iter().sum();
    if improve.is_zero() {
        return None;
    }
    let mut numer = Rational::one();
    for i in l + 1..n {
        numer += &q[i] * &times[i];
    }
    Some(numer / improve)
}

/// Exact expected remaining optimization times `E[T(l)]`, `l` in `[0, n]`.
pub fn exact_remaining_times(n: usize, policy: &ExactPolicy) -> Result<Vec<Rational>> {
    capacity("exact_remaining_times", MAX_TIMES_N, n)?;
    if policy.laws.len() != n {
        return Err(Error::Domain(format!("policy has {} levels, expected {n}", policy.laws.len())));
    }
    let mut cache = TransitionCache::default();
    let mut times = vec![Rational::zero(); n + 1];
    for l in (0..n).rev() {
        let q = level_transition(n, l, &policy.laws[l], &mut cache)?;
        times[l] = resolve_level(l, &q, &times).ok_or(Error::ZeroImprovement { level: l, probability: 0.0 })?;
    }
    Ok(times)
}

/// `C(n, l) / 2^n` for `l` in `[0, n]`.
pub fn exact_init_distribution(n: usize) -> Vec<Rational> {
    let denom = BigInt::one() << n;
    (0..=n).map(|l| Rational::new(binomial(n, l), denom.clone())).collect()
}

/// `sum_l p0(l) E[T(l)]`.
pub fn exact_total_time(times: &[Rational]) -> Rational {
    let n = times.len() - 1;
    exact_init_distribution(n)
        .iter()
        .zip(times)
        .map(|(p, t)| p * t)
        .sum()
}

/// Globally optimal deterministic strengths policy, found by evaluating all
/// `n^n` tables exactly. Returns the lexicographically smallest optimum.
pub fn exhaustive_optimal_policy(n: usize) -> Result<(Vec<usize>, Rational)> {
    capacity("exhaustive_optimal_policy", MAX_EXHAUSTIVE_N, n)?;
    // q[l][k] over offspring fitness
    let mut cache = TransitionCache::default();
    let mut q: Vec<Vec<Vec<Rational>>> = Vec::with_capacity(n);
    for l in 0..n {
        let mut row = vec![Vec::new()];
        for k in 1..=n {
            row.push(level_transition(n, l, &ExactLaw::Strength(k), &mut cache)?);
        }
        q.push(row);
    }
    let p0 = exact_init_distribution(n);

    // mixed-radix enumeration, level 0 is the fastest digit; after a carry
    // into level m only levels m..=0 need recomputation
    let mut digits = vec![1usize; n];
    let mut times = vec![Rational::zero(); n + 1];
    let mut valid = vec![true; n + 1];
    let mut dirty_from = n - 1;
    let mut best: Option<(Vec<usize>, Rational)> = None;
    loop {
        for l in (0..=dirty_from).rev() {
            let resolved = if valid[l + 1..].iter().all(|&v| v) {
                resolve_level(l, &q[l][digits[l]], &times)
            } else {
                None
            };
            valid[l] = resolved.is_some();
            times[l] = resolved.unwrap_or_else(Rational::zero);
        }
        if valid[0] {
            let total: Rational = p0.iter().zip(&times).map(|(p, t)| p * t).sum();
            if best.as_ref().is_none_or(|(_, b)| total < *b) {
                best = Some((digits.clone(), total));
            }
        }
        let mut pos = 0;
        loop {
            if pos == n {
                return Ok(best.expect("the flip-one policy is always valid"));
            }
            if digits[pos] < n {
                digits[pos] += 1;
                break;
            }
            digits[pos] = 1;
            pos += 1;
        }
        dirty_from = pos;
    }
}

/// Expected hitting times of the all-ones string for every one of the `2^n`
/// bit strings, solving the full elitist chain exactly level by level.
pub fn full_state_chain_state_times(n: usize, policy: &ExactPolicy) -> Result<Vec<Rational>> {
    capacity("full_state_chain_times", MAX_CHAIN_N, n)?;
    if policy.laws.len() != n {
        return Err(Error::Domain(format!("policy has {} levels, expected {n}", policy.laws.len())));
    }
    let states = 1usize << n;
    let mut by_level: Vec<Vec<usize>> = vec![Vec::new(); n + 1];
    for x in 0..states {
        by_level[x.count_ones() as usize].push(x);
    }
    // probability of one particular flip set of size d
    let per_mask: Vec<Vec<Rational>> = (0..n)
        .map(|l| {
            exact_weights(n, &policy.laws[l])
                .into_iter()
                .enumerate()
                .map(|(d, w)| w / Rational::from_integer(binomial(n, d)))
                .collect()
        })
        .collect();

    let mut times = vec![Rational::zero(); states];
    for l in (0..n).rev() {
        let members = &by_level[l];
        let index: HashMap<usize, usize> = members.iter().enumerate().map(|(i, &x)| (x, i)).collect();
        let m = members.len();
        let mut rows: Vec<BTreeMap<usize, Rational>> = vec![BTreeMap::new(); m];
        let mut rhs = vec![Rational::one(); m];
        for (row, &x) in members.iter().enumerate() {
            let mut leave = Rational::zero();
            for y in 0..states {
                if y == x {
                    continue;
                }
                let fy = y.count_ones() as usize;
                if fy < l {
                    continue;
                }
                let pr = &per_mask[l][(x ^ y).count_ones() as usize];
                if pr.is_zero() {
                    continue;
                }
                leave += pr;
                if fy > l {
                    rhs[row] += pr * &times[y];
                } else {
                    *rows[row].entry(index[&y]).or_insert_with(Rational::zero) -= pr;
                }
            }
            if leave.is_zero() {
                return Err(Error::ZeroImprovement { level: l, probability: 0.0 });
            }
            rows[row].insert(row, leave);
        }
        let solution = solve_sparse(rows, rhs).ok_or(Error::ZeroImprovement { level: l, probability: 0.0 })?;
        for (i, &x) in members.iter().enumerate() {
            times[x] = solution[i].clone();
        }
    }
    Ok(times)
}

/// Full-chain hitting times averaged over the strings of each fitness level.
pub fn full_state_chain_times(n: usize, policy: &ExactPolicy) -> Result<Vec<Rational>> {
    let per_state = full_state_chain_state_times(n, policy)?;
    let mut sums = vec![Rational::zero(); n + 1];
    let mut counts = vec![0u64; n + 1];
    for (x, t) in per_state.iter().enumerate() {
        let f = x.count_ones() as usize;
        sums[f] += t;
        counts[f] += 1;
    }
    Ok(sums.into_iter().zip(counts).map(|(s, c)| s / int(c)).collect())
}

/// Gaussian elimination over sparse rational rows. `None` if singular.
fn solve_sparse(mut rows: Vec<BTreeMap<usize, Rational>>, mut rhs: Vec<Rational>) -> Option<Vec<Rational>> {
    let m = rows.len();
    for col in 0..m {
        let pivot = (col..m).find(|&r| rows[r].get(&col).is_some_and(|v| !v.is_zero()))?;
        rows.swap(col, pivot);
        rhs.swap(col, pivot);
        let (head, tail) = rows.split_at_mut(col + 1);
        let prow = &head[col];
        let pval = prow[&col].clone();
        for (offset, row) in tail.iter_mut().enumerate() {
            let Some(factor) = row.get(&col).cloned() else { continue };
            if factor.is_zero() {
                row.remove(&col);
                continue;
            }
            let f = factor / &pval;
            for (&c, v) in prow.iter() {
                let e = row.entry(c).or_insert_with(Rational::zero);
                *e -= &f * v;
            }
            row.retain(|_, v| !v.is_zero());
            let r = col + 1 + offset;
            let delta = &f * &rhs[col];
            rhs[r] -= delta;
        }
    }
    let mut x = vec![Rational::zero(); m];
    for r in (0..m).rev() {
        let mut acc = rhs[r].clone();
        for (&c, v) in rows[r].range(r + 1..) {
            acc -= v * &x[c];
        }
        let diag = &rows[r][&r];
        if diag.is_zero() {
            return None;
        }
        x[r] = acc / diag;
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn r(a: i64, b: i64) -> Rational {
        Rational::new(BigInt::from(a), BigInt::from(b))
    }

    #[test]
    fn transition_examples() {
        let t = exact_transition(3, 1, 2).unwrap();
        assert_eq!(t[&3], r(1, 3));
        assert_eq!(t[&1], r(2, 3));
        let t = exact_transition(3, 1, 1).unwrap();
        assert_eq!(t[&2], r(2, 3));
        assert_eq!(t[&0], r(1, 3));
        let t = exact_transition(4, 2, 2).unwrap();
        assert_eq!((t[&4].clone(), t[&2].clone(), t[&0].clone()), (r(1, 6), r(2, 3), r(1, 6)));
        assert!(exact_transition(21, 1, 1).is_err());
    }

    #[test]
    fn transitions_sum_to_one() {
        for n in 1..=8 {
            for l in 0..=n {
                for k in 0..=n {
                    let total: Rational = exact_transition(n, l, k).unwrap().values().sum();
                    assert_eq!(total, Rational::one());
                }
            }
        }
    }

    #[test]
    fn remaining_times_for_n3() {
        let t = exact_remaining_times(3, &ExactPolicy::strengths(&[3, 2, 1])).unwrap();
        assert_eq!(&t[..3], &[int(1), int(3), int(3)]);
        assert_eq!(exact_total_time(&t), r(19, 8));
        let t = exact_remaining_times(3, &ExactPolicy::strengths(&[1, 1, 1])).unwrap();
        assert_eq!(t[2], int(3));
        let res = ExactPolicy {
            laws: vec![
                ExactLaw::ConditionalBinomial(int(1)),
                ExactLaw::ConditionalBinomial(r(3, 4)),
                ExactLaw::ConditionalBinomial(int(0)),
            ],
        };
        let t = exact_remaining_times(3, &res).unwrap();
        assert_eq!(t[1], r(27, 7));
    }

    #[test]
    fn zero_improvement_is_reported() {
        let err = exact_remaining_times(3, &ExactPolicy::strengths(&[3, 2, 2])).unwrap_err();
        assert!(matches!(err, Error::ZeroImprovement { level: 2, .. }));
    }

    #[test]
    fn exhaustive_small_cases() {
        let (p, total) = exhaustive_optimal_policy(1).unwrap();
        assert_eq!((p, total), (vec![1], r(1, 2)));
        let (p, total) = exhaustive_optimal_policy(3).unwrap();
        assert_eq!((p, total), (vec![3, 2, 1], r(19, 8)));
        // n = 2: level 1 must flip one bit (time 2); level 0 flips both (time 1)
        let (p, total) = exhaustive_optimal_policy(2).unwrap();
        assert_eq!((p, total), (vec![2, 1], r(5, 4)));
    }

    #[test]
    fn full_chain_small_cases() {
        let t = full_state_chain_times(1, &ExactPolicy::strengths(&[1])).unwrap();
        assert_eq!(t[0], int(1));
        let t = full_state_chain_times(2, &ExactPolicy::strengths(&[1, 1])).unwrap();
        assert_eq!(t[1], int(2));
        let policy = ExactPolicy::strengths(&[3, 2, 1]);
        assert_eq!(
            full_state_chain_times(3, &policy).unwrap(),
            exact_remaining_times(3, &policy).unwrap()
        );
    }
}
