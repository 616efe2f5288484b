//! Transition kernels of unbiased mutation on OneMax fitness levels.
//!
//! Flipping `k` distinct positions of a string with `l` one-bits moves it to
//! fitness `l + 2j - k`, where `j` (the number of flipped zero-bits) is
//! hypergeometric: `C(n-l, j) C(l, k-j) / C(n, k)`. Everything here is built
//! on that law and on binomial mixtures of it.
//!
//! Distributions are generated by ratio recurrences walking outward from the
//! mode and renormalized by their compensated sum, so they stay finite and
//! normalized for `n` in the tens of thousands.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::math::{ln_binomial, prob_at_least_one, sum_ascending, CompensatedSum};

/// Default truncation threshold for binomial strength weights.
pub const DEFAULT_TAIL_EPSILON: f64 = 1e-15;

/// Relative tail mass dropped by the hot-path kernel walks in the dynamic
/// programs.
pub(crate) const DP_TAIL_TOLERANCE: f64 = 1e-20;

/// OneMax value of a search point together with the dimension.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FitnessLevel {
    value: usize,
    n: usize,
}

impl FitnessLevel {
    pub fn new(value: usize, n: usize) -> Result<Self> {
        if n == 0 {
            return domain("dimension must be positive");
        }
        if value > n {
            return domain(format!("fitness {value} outside [0, {n}]"));
        }
        Ok(Self { value, n })
    }

    pub fn value(&self) -> usize {
        self.value
    }

    pub fn n(&self) -> usize {
        self.n
    }
}

/// Distribution of the number of bits flipped by one mutation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum MutationLaw {
    /// Flip exactly `k` bits.
    Deterministic(usize),
    /// Standard bit mutation: `k ~ Bin(n, p)`.
    Binomial(f64),
    /// Standard bit mutation conditioned on `k >= 1`. `p = 0` means flip one bit.
    ConditionalBinomial(f64),
}

impl MutationLaw {
    pub fn validate(&self, n: usize) -> Result<()> {
        match *self {
            MutationLaw::Deterministic(k) if k > n => {
                domain(format!("strength {k} outside [0, {n}]"))
            }
            MutationLaw::Binomial(p) | MutationLaw::ConditionalBinomial(p)
                if !(0.0..=1.0).contains(&p) =>
            {
                domain(format!("rate {p} outside [0, 1]"))
            }
            _ => Ok(()),
        }
    }

    /// Strength weights of this law in dimension `n`.
    pub fn weights(&self, n: usize, tail_epsilon: f64) -> Result<WeightVector> {
        self.validate(n)?;
        match *self {
            MutationLaw::Deterministic(k) => Ok(WeightVector::point(k)),
            MutationLaw::Binomial(p) => binomial_weights(n, p, tail_epsilon),
            MutationLaw::ConditionalBinomial(p) => conditional_binomial_weights(n, p, tail_epsilon),
        }
    }
}

/// Probabilities of flipping exactly `k` bits on a contiguous range of `k`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightVector {
    first: usize,
    weights: Vec<f64>,
    tail_epsilon: f64,
}

impl WeightVector {
    pub fn point(k: usize) -> Self {
        Self { first: k, weights: vec![1.0], tail_epsilon: 0.0 }
    }

    /// Builds a weight vector from explicit `(k, weight)` pairs.
    pub fn from_pairs(pairs: &[(usize, f64)]) -> Result<Self> {
        if pairs.is_empty() {
            return domain("empty weight vector");
        }
        let lo = pairs.iter().map(|&(k, _)| k).min().unwrap();
        let hi = pairs.iter().map(|&(k, _)| k).max().unwrap();
        let mut weights = vec![0.0; hi - lo + 1];
        for &(k, w) in pairs {
            if !(w >= 0.0) {
                return domain(format!("negative weight {w} at k={k}"));
            }
            weights[k - lo] += w;
        }
        Ok(Self { first: lo, weights, tail_epsilon: 0.0 })
    }

    pub fn tail_epsilon(&self) -> f64 {
        self.tail_epsilon
    }

    /// Smallest and largest `k` held.
    pub fn range(&self) -> (usize, usize) {
        (self.first, self.first + self.weights.len() - 1)
    }

    pub fn get(&self, k: usize) -> f64 {
        k.checked_sub(self.first)
            .and_then(|i| self.weights.get(i))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights.iter().enumerate().map(move |(i, &w)| (self.first + i, w))
    }

    pub fn total(&self) -> f64 {
        sum_ascending(&self.weights)
    }
}

/// Probability mass over offspring fitness values for a fixed parent level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionDistribution {
    parent: FitnessLevel,
    first: usize,
    mass: Vec<f64>,
}

impl TransitionDistribution {
    pub fn parent(&self) -> FitnessLevel {
        self.parent
    }

    pub fn mass(&self, fitness: usize) -> f64 {
        fitness
            .checked_sub(self.first)
            .and_then(|i| self.mass.get(i))
            .copied()
            .unwrap_or(0.0)
    }

    /// `(fitness, probability)` for every fitness with nonzero mass, ascending.
    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.mass
            .iter()
            .enumerate()
            .filter(|(_, &m)| m > 0.0)
            .map(move |(i, &m)| (self.first + i, m))
    }

    pub fn total(&self) -> f64 {
        sum_ascending(&self.mass)
    }
}

/// Hypergeometric terms for `j` flipped zero-bits, normalized, on `[j_lo, j_lo + len)`.
pub(crate) struct HyperTerms<'a> {
    pub j_lo: usize,
    pub probs: &'a [f64],
}

/// Reusable buffers for walking hypergeometric laws.
#[derive(Default)]
pub(crate) struct HyperScratch {
    down: Vec<f64>,
    up: Vec<f64>,
    terms: Vec<f64>,
}

impl HyperScratch {
    pub fn new() -> Self {
        Self::default()
    }

    /// Walks the law of `j` for `(n, l, k)` outward from its mode. With
    /// `tolerance > 0` a side is abandoned once a geometric bound on its
    /// remaining mass drops below `tolerance` times the mass seen so far.
    pub fn walk(&mut self, n: usize, l: usize, k: usize, tolerance: f64) -> HyperTerms<'_> {
        debug_assert!(l <= n && k <= n);
        let zeros = n - l;
        let j_min = k.saturating_sub(l);
        let j_max = k.min(zeros);
        let mode = (((k + 1) as u128 * (zeros + 1) as u128) / (n + 2) as u128) as usize;
        let mode = mode.clamp(j_min, j_max);

        let (lf, kf, zf) = (l as f64, k as f64, zeros as f64);
        self.down.clear();
        self.up.clear();
        let mut seen = 1.0;

        // upward: t(j+1)/t(j) = (zeros-j)(k-j) / ((j+1)(l-k+j+1))
        let mut t = 1.0;
        let mut j = mode;
        while j < j_max {
            let jf = j as f64;
            let r = (zf - jf) * (kf - jf) / ((jf + 1.0) * (lf - kf + jf + 1.0));
            if tolerance > 0.0 && r < 1.0 && t * r / (1.0 - r) <= tolerance * seen {
                break;
            }
            t *= r;
            if t == 0.0 {
                break;
            }
            self.up.push(t);
            seen += t;
            j += 1;
        }

        // downward: t(j-1)/t(j) = j(l-k+j) / ((zeros-j+1)(k-j+1))
        let mut t = 1.0;
        let mut j = mode;
        while j > j_min {
            let jf = j as f64;
            let r = jf * (lf - kf + jf) / ((zf - jf + 1.0) * (kf - jf + 1.0));
            if tolerance > 0.0 && r < 1.0 && t * r / (1.0 - r) <= tolerance * seen {
                break;
            }
            t *= r;
            if t == 0.0 {
                break;
            }
            self.down.push(t);
            seen += t;
            j -= 1;
        }

        self.terms.clear();
        self.terms.extend(self.down.iter().rev());
        self.terms.push(1.0);
        self.terms.extend(self.up.iter());
        let total = sum_unimodal(&self.terms);
        for x in self.terms.iter_mut() {
            *x /= total;
        }
        HyperTerms { j_lo: mode - self.down.len(), probs: &self.terms }
    }
}

/// Compensated sum of a unimodal sequence, smallest terms first.
fn sum_unimodal(values: &[f64]) -> f64 {
    let mut acc = CompensatedSum::new();
    let (mut lo, mut hi) = (0usize, values.len());
    while lo < hi {
        if values[lo] <= values[hi - 1] {
            acc.add(values[lo]);
            lo += 1;
        } else {
            acc.add(values[hi - 1]);
            hi -= 1;
        }
    }
    acc.value()
}

fn check_level(n: usize, l: usize) -> Result<FitnessLevel> {
    FitnessLevel::new(l, n)
}

fn check_strength(n: usize, k: usize) -> Result<()> {
    if k > n {
        return domain(format!("strength {k} outside [0, {n}]"));
    }
    Ok(())
}

fn check_rate(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return domain(format!("rate {p} outside [0, 1]"));
    }
    Ok(())
}

/// Offspring fitness distribution when flipping exactly `k` of `n` bits of a
/// parent with fitness `l`.
pub fn hypergeometric_transition(n: usize, l: usize, k: usize) -> Result<TransitionDistribution> {
    let parent = check_level(n, l)?;
    check_strength(n, k)?;
    let mut scratch = HyperScratch::new();
    let terms = scratch.walk(n, l, k, 0.0);
    let first = l + 2 * terms.j_lo - k;
    let mut mass = vec![0.0; 2 * terms.probs.len() - 1];
    for (i, &p) in terms.probs.iter().enumerate() {
        mass[2 * i] = p;
    }
    Ok(TransitionDistribution { parent, first, mass })
}

/// Expected fitness gain `E[max(f(y) - f(x), 0)]` of flipping exactly `k` bits,
/// evaluated from the closed-form hypergeometric sum in log space.
pub fn drift_fixed_k(n: usize, l: usize, k: usize) -> Result<f64> {
    check_level(n, l)?;
    if k == 0 || k > n {
        return domain(format!("strength {k} outside [1, {n}]"));
    }
    let zeros = n - l;
    let ln_total = ln_binomial(n, k);
    let terms: Vec<f64> = (k.div_ceil(2)..=k.min(zeros))
        .filter(|&i| 2 * i > k && k - i <= l)
        .map(|i| {
            let ln_p = ln_binomial(zeros, i) + ln_binomial(l, k - i) - ln_total;
            (2 * i - k) as f64 * ln_p.exp()
        })
        .collect();
    Ok(sum_ascending(&terms))
}

/// Binomial strength weights, truncated to a contiguous range around the mode
/// whose omitted mass is at most `tail_epsilon`.
pub fn binomial_weights(n: usize, p: f64, tail_epsilon: f64) -> Result<WeightVector> {
    check_rate(p)?;
    check_tail(tail_epsilon)?;
    if p == 0.0 {
        return Ok(WeightVector::point(0));
    }
    if p == 1.0 {
        return Ok(WeightVector::point(n));
    }
    let (first, weights) = binomial_walk(n, p, tail_epsilon / 2.0);
    Ok(WeightVector { first, weights, tail_epsilon })
}

/// Binomial strength weights conditioned on flipping at least one bit.
/// `p = 0` yields the flip-one law.
pub fn conditional_binomial_weights(n: usize, p: f64, tail_epsilon: f64) -> Result<WeightVector> {
    check_rate(p)?;
    check_tail(tail_epsilon)?;
    if n == 0 {
        return domain("dimension must be positive");
    }
    if p == 0.0 {
        return Ok(WeightVector::point(1));
    }
    if p == 1.0 {
        return Ok(WeightVector::point(n));
    }
    let normalizer = prob_at_least_one(n, p);
    let (mut first, mut weights) = binomial_walk(n, p, tail_epsilon / 2.0 * normalizer);
    if first == 0 {
        weights.remove(0);
        first = 1;
    }
    if weights.is_empty() {
        // all mass sat at k = 0 after truncation; keep the k = 1 term
        let ln_w1 = (n as f64).ln() + p.ln() + (n - 1) as f64 * libm::log1p(-p);
        weights.push(ln_w1.exp());
    }
    for w in weights.iter_mut() {
        *w /= normalizer;
    }
    Ok(WeightVector { first, weights, tail_epsilon })
}

fn check_tail(tail_epsilon: f64) -> Result<()> {
    if !(0.0..=1e-9).contains(&tail_epsilon) {
        return domain(format!("tail epsilon {tail_epsilon} outside [0, 1e-9]"));
    }
    Ok(())
}

/// Absolute binomial probabilities around the mode, `0 < p < 1`. Each side
/// stops once its remaining mass is provably at most `side_epsilon`.
fn binomial_walk(n: usize, p: f64, side_epsilon: f64) -> (usize, Vec<f64>) {
    let mode = (((n + 1) as f64 * p).floor() as usize).min(n);
    let ln_q = libm::log1p(-p);
    let anchor = (ln_binomial(n, mode) + mode as f64 * p.ln() + (n - mode) as f64 * ln_q).exp();
    let odds = p / (1.0 - p);
    let truncate = side_epsilon > 0.0;
    let nf = n as f64;

    let mut up = Vec::new();
    let mut t = anchor;
    let mut k = mode;
    while k < n {
        let kf = k as f64;
        let r = (nf - kf) / (kf + 1.0) * odds;
        if truncate && r < 1.0 && t * r / (1.0 - r) <= side_epsilon {
            break;
        }
        t *= r;
        up.push(t);
        k += 1;
    }

    let mut down = Vec::new();
    let mut t = anchor;
    let mut k = mode;
    while k > 0 {
        let kf = k as f64;
        let r = kf / (nf - kf + 1.0) / odds;
        if truncate && r < 1.0 && t * r / (1.0 - r) <= side_epsilon {
            break;
        }
        t *= r;
        down.push(t);
        k -= 1;
    }

    let first = mode - down.len();
    let mut weights: Vec<f64> = down.into_iter().rev().collect();
    weights.push(anchor);
    weights.extend(up);
    // the log-gamma anchor carries a relative error growing with n; the
    // retained terms hold all but at most 2 * side_epsilon of the mass
    let total = weights.iter().copied().collect::<CompensatedSum>().value();
    for w in weights.iter_mut() {
        *w /= total;
    }
    (first, weights)
}

/// Offspring distribution when the strength is drawn from `weights`.
/// Truncated weight vectors are renormalized.
pub fn mixed_transition(n: usize, l: usize, weights: &WeightVector) -> Result<TransitionDistribution> {
    let parent = check_level(n, l)?;
    let (_, k_hi) = weights.range();
    check_strength(n, k_hi)?;
    let mut cells = vec![CompensatedSum::new(); n + 1];
    let mut scratch = HyperScratch::new();
    for (k, w) in weights.iter() {
        if w == 0.0 {
            continue;
        }
        let terms = scratch.walk(n, l, k, 0.0);
        for (i, &p) in terms.probs.iter().enumerate() {
            cells[l + 2 * (terms.j_lo + i) - k].add(w * p);
        }
    }
    let total = weights.total();
    let mass: Vec<f64> = cells.iter().map(|c| c.value() / total).collect();
    Ok(TransitionDistribution { parent, first: 0, mass })
}

/// Expected fitness gain when the strength is drawn from `weights`.
pub fn drift_mixture(n: usize, l: usize, weights: &WeightVector) -> Result<f64> {
    check_level(n, l)?;
    let (_, k_hi) = weights.range();
    check_strength(n, k_hi)?;
    let mut terms = Vec::new();
    for (k, w) in weights.iter() {
        if k == 0 || w == 0.0 {
            continue;
        }
        terms.push(w * drift_fixed_k(n, l, k)?);
    }
    Ok(sum_ascending(&terms) / weights.total())
}

/// Probability that the offspring is strictly better than the parent.
pub fn improvement_probability(d: &TransitionDistribution) -> f64 {
    let parent = d.parent.value();
    let above: Vec<f64> = d.iter().filter(|&(i, _)| i > parent).map(|(_, m)| m).collect();
    sum_ascending(&above).min(1.0)
}

/// Improvement statistics of one strength at one level, used by the
/// dynamic programs.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct StrengthStats {
    /// Probability of a strictly better offspring.
    pub improve: f64,
    /// `sum_{i > l} P(i) * times[i]`.
    pub weighted_time: f64,
    /// Expected positive gain.
    pub drift: f64,
}

/// Improvement statistics for flipping `k` bits at level `l`. `times` is
/// indexed by fitness and only read above `l`; pass `None` to skip the
/// time-weighted sum.
pub(crate) fn strength_stats(
    scratch: &mut HyperScratch,
    n: usize,
    l: usize,
    k: usize,
    times: Option<&[f64]>,
) -> StrengthStats {
    if k == 0 {
        return StrengthStats::default();
    }
    let terms = scratch.walk(n, l, k, DP_TAIL_TOLERANCE);
    // offspring fitness l + 2j - k > l  <=>  2j > k
    let j_first = (k / 2 + 1).max(terms.j_lo);
    let mut improve = CompensatedSum::new();
    let mut weighted = CompensatedSum::new();
    let mut drift = CompensatedSum::new();
    let j_end = terms.j_lo + terms.probs.len();
    // ascending fitness above the mode is descending mass; accumulate from the top
    for j in (j_first..j_end).rev() {
        let p = terms.probs[j - terms.j_lo];
        let fitness = l + 2 * j - k;
        improve.add(p);
        drift.add(p * (2 * j - k) as f64);
        if let Some(times) = times {
            weighted.add(p * times[fitness]);
        }
    }
    StrengthStats {
        improve: improve.value(),
        weighted_time: weighted.value(),
        drift: drift.value(),
    }
}

/// Improvement probabilities below this are treated as zero by the
/// self-loop-resolved time recurrence.
pub(crate) const MIN_IMPROVEMENT: f64 = 1e-300;

/// Strength statistics averaged over a weight vector (unnormalized sums).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct MixtureStats {
    pub weight: f64,
    pub improve: f64,
    pub weighted_time: f64,
    pub drift: f64,
}

impl MixtureStats {
    /// `(1 + sum_{i>l} q_i T(i)) / sum_{i>l} q_i` with `q` renormalized.
    pub fn remaining_time(&self) -> Option<f64> {
        let improve = self.improve / self.weight;
        if !(improve >= MIN_IMPROVEMENT) {
            return None;
        }
        Some((self.weight + self.weighted_time) / self.improve)
    }

    pub fn improvement_probability(&self) -> f64 {
        self.improve / self.weight
    }

    pub fn drift(&self) -> f64 {
        self.drift / self.weight
    }
}

/// Mixes per-strength statistics (indexed by `k`) with `weights`.
pub(crate) fn combine(profile: &[StrengthStats], weights: &WeightVector) -> MixtureStats {
    let mut weight = CompensatedSum::new();
    let mut improve = CompensatedSum::new();
    let mut weighted = CompensatedSum::new();
    let mut drift = CompensatedSum::new();
    for (k, w) in weights.iter() {
        let s = &profile[k];
        weight.add(w);
        improve.add(w * s.improve);
        weighted.add(w * s.weighted_time);
        drift.add(w * s.drift);
    }
    MixtureStats {
        weight: weight.value(),
        improve: improve.value(),
        weighted_time: weighted.value(),
        drift: drift.value(),
    }
}

/// Mixture statistics at level `l`, walking only the strengths in `weights`.
pub(crate) fn mixture_stats(
    scratch: &mut HyperScratch,
    n: usize,
    l: usize,
    weights: &WeightVector,
    times: Option<&[f64]>,
) -> MixtureStats {
    let mut weight = CompensatedSum::new();
    let mut improve = CompensatedSum::new();
    let mut weighted = CompensatedSum::new();
    let mut drift = CompensatedSum::new();
    for (k, w) in weights.iter() {
        weight.add(w);
        if w == 0.0 {
            continue;
        }
        let s = strength_stats(scratch, n, l, k, times);
        improve.add(w * s.improve);
        weighted.add(w * s.weighted_time);
        drift.add(w * s.drift);
    }
    MixtureStats {
        weight: weight.value(),
        improve: improve.value(),
        weighted_time: weighted.value(),
        drift: drift.value(),
    }
}
