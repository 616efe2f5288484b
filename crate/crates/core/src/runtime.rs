//! Expected remaining and total optimization times of a policy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{mixture_stats, HyperScratch, MutationLaw, WeightVector};
use crate::math::{ln_binomial, CompensatedSum};
use crate::policy::{PolicyMeta, PolicyTable};

/// `times[l]` is the expected number of offspring evaluations needed from
/// fitness `l`; `times[n] = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemainingTimeTable {
    pub n: usize,
    pub times: Vec<f64>,
    pub policy_meta: PolicyMeta,
}

impl RemainingTimeTable {
    pub fn new(n: usize, times: Vec<f64>, policy_meta: PolicyMeta) -> Result<Self> {
        if times.len() != n + 1 {
            return Err(Error::Domain(format!("{} remaining times for n = {n}", times.len())));
        }
        if times[n] != 0.0 {
            return Err(Error::Domain(format!("remaining time at the optimum is {}", times[n])));
        }
        if let Some((l, t)) = times.iter().enumerate().find(|(_, t)| !(t.is_finite() && **t >= 0.0)) {
            return Err(Error::Domain(format!("remaining time {t} at level {l}")));
        }
        Ok(Self { n, times, policy_meta })
    }
}

/// Fitness distribution of a uniformly random initial bit string.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialDistribution {
    pub n: usize,
    pub mass: Vec<f64>,
}

/// Largest `n` whose binomial coefficients are exact in 53 bits.
const EXACT_INIT_MAX_N: usize = 50;

pub fn init_distribution(n: usize) -> Result<InitialDistribution> {
    if n == 0 {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    if n <= EXACT_INIT_MAX_N {
        // integer binomials scaled by a power of two are exact
        let scale = 0.5f64.powi(n as i32);
        let mut c = 1u64;
        let mass = (0..=n)
            .map(|l| {
                let m = c as f64 * scale;
                c = c * (n - l) as u64 / (l + 1) as u64;
                m
            })
            .collect();
        return Ok(InitialDistribution { n, mass });
    }
    let ln_half = -(n as f64) * std::f64::consts::LN_2;
    let mut mass: Vec<f64> = (0..=n).map(|l| (ln_binomial(n, l) + ln_half).exp()).collect();
    // make the two halves exact mirrors before normalizing
    for l in 0..=n / 2 {
        let m = 0.5 * (mass[l] + mass[n - l]);
        mass[l] = m;
        mass[n - l] = m;
    }
    let total: f64 = mass.iter().copied().collect::<CompensatedSum>().value();
    mass.iter_mut().for_each(|m| *m /= total);
    Ok(InitialDistribution { n, mass })
}

/// Remaining times of `policy`, computed backward from level `n - 1`.
/// Times above the current level are read from `downstream` when given.
pub fn remaining_times(
    n: usize,
    policy: &PolicyTable,
    downstream: Option<&RemainingTimeTable>,
) -> Result<RemainingTimeTable> {
    policy.validate()?;
    if policy.n != n {
        return Err(Error::Domain(format!("policy for n = {} used with n = {n}", policy.n)));
    }
    if let Some(d) = downstream {
        if d.n != n {
            return Err(Error::Domain(format!("downstream table for n = {} used with n = {n}", d.n)));
        }
    }
    let tail = policy.meta.tail_epsilon;
    let mut scratch = HyperScratch::new();
    let mut cached: Option<(MutationLaw, WeightVector)> = None;
    let mut times = vec![0.0; n + 1];
    for l in (0..n).rev() {
        let law = policy.law_at(l);
        if cached.as_ref().is_none_or(|(c, _)| *c != law) {
            cached = Some((law, law.weights(n, tail)?));
        }
        let weights = &cached.as_ref().expect("filled above").1;
        let upper = downstream.map_or(&times[..], |d| &d.times[..]);
        let m = mixture_stats(&mut scratch, n, l, weights, Some(upper));
        times[l] = m.remaining_time().ok_or(Error::ZeroImprovement {
            level: l,
            probability: m.improvement_probability(),
        })?;
    }
    RemainingTimeTable::new(n, times, policy.meta)
}

/// Expected optimization time from a uniformly random start.
pub fn total_expected_time(rt: &RemainingTimeTable) -> f64 {
    let init = init_distribution(rt.n).expect("tables have positive dimension");
    init.mass.iter().zip(&rt.times).map(|(p, t)| p * t).collect::<CompensatedSum>().value()
}

/// `t / (n ln n)`.
pub fn normalized_time(t: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::Domain(format!("normalization needs n >= 2, got {n}")));
    }
    let nf = n as f64;
    Ok(t / (nf * nf.ln()))
}

/// `times[l] - times[l - 1]` for `l` in `1..=n`; element `i` belongs to
/// level `i + 1`.
pub fn remaining_time_gradient(rt: &RemainingTimeTable) -> Vec<f64> {
    rt.times.windows(2).map(|w| w[1] - w[0]).collect()
}
