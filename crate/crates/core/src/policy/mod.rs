//! Fitness-dependent mutation strengths and rates.
//!
//! Drift-maximizing tables choose, level by level, the parameter with the
//! largest expected one-step gain. Time-optimal tables are computed backward
//! from level `n - 1`: once the optimal remaining times above `l` are known,
//! the parameter at `l` is the one minimizing the self-loop-resolved
//! remaining time.

pub mod scalar;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{combine, strength_stats, HyperScratch, MutationLaw, StrengthStats, DEFAULT_TAIL_EPSILON};
use crate::runtime::{remaining_times, total_expected_time, RemainingTimeTable};

pub use scalar::{log_grid, minimize_on_grid, minimize_scalar, Objective, OptimizerConfig};

/// Relative slack under which two candidate values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Smallest rate searched when no positive lower bound applies.
pub const RATE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// Randomized local search: deterministic strengths.
    Rls,
    /// (1+1) EA: binomial strengths.
    Ea,
    /// (1+1) EA with resampling: binomial strengths conditioned on `k >= 1`.
    EaRes,
}

impl Algorithm {
    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Rls => "rls",
            Algorithm::Ea => "ea",
            Algorithm::EaRes => "ea-res",
        }
    }

    pub fn rate_family(&self) -> Option<RateFamily> {
        match self {
            Algorithm::Rls => None,
            Algorithm::Ea => Some(RateFamily::Binomial),
            Algorithm::EaRes => Some(RateFamily::ConditionalBinomial),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Drift,
    Opt,
    Static,
    Back,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Drift => "drift",
            Mode::Opt => "opt",
            Mode::Static => "static",
            Mode::Back => "back",
        }
    }
}

/// Which of several (near-)equal optimal parameters to keep.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    #[default]
    Min,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RateFamily {
    Binomial,
    ConditionalBinomial,
}

impl RateFamily {
    pub fn law(&self, p: f64) -> MutationLaw {
        match self {
            RateFamily::Binomial => MutationLaw::Binomial(p),
            RateFamily::ConditionalBinomial => MutationLaw::ConditionalBinomial(p),
        }
    }

    pub fn algorithm(&self) -> Algorithm {
        match self {
            RateFamily::Binomial => Algorithm::Ea,
            RateFamily::ConditionalBinomial => Algorithm::EaRes,
        }
    }
}

/// Provenance of a policy table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyMeta {
    pub algorithm: Algorithm,
    pub mode: Mode,
    pub p_min: f64,
    pub tail_epsilon: f64,
    pub grid_points: usize,
    pub refine_tolerance: f64,
    pub tie_break: TieBreak,
}

impl PolicyMeta {
    fn new(algorithm: Algorithm, mode: Mode) -> Self {
        let cfg = OptimizerConfig::default();
        Self {
            algorithm,
            mode,
            p_min: 0.0,
            tail_epsilon: DEFAULT_TAIL_EPSILON,
            grid_points: cfg.grid_points,
            refine_tolerance: cfg.refine_tolerance,
            tie_break: TieBreak::Min,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyValues {
    Strengths(Vec<usize>),
    Rates(Vec<f64>),
}

/// Parameter per fitness level `0..n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    pub n: usize,
    pub values: PolicyValues,
    pub meta: PolicyMeta,
}

impl PolicyTable {
    /// Flip `k` bits at every level.
    pub fn static_strength(n: usize, k: usize) -> Result<Self> {
        let table = Self {
            n,
            values: PolicyValues::Strengths(vec![k; n]),
            meta: PolicyMeta::new(Algorithm::Rls, Mode::Static),
        };
        table.validate()?;
        Ok(table)
    }

    /// Use rate `p` at every level.
    pub fn static_rate(n: usize, family: RateFamily, p: f64) -> Result<Self> {
        let mut meta = PolicyMeta::new(family.algorithm(), Mode::Static);
        if family == RateFamily::ConditionalBinomial {
            meta.p_min = p;
        }
        let table = Self { n, values: PolicyValues::Rates(vec![p; n]), meta };
        table.validate()?;
        Ok(table)
    }

    pub fn is_strengths(&self) -> bool {
        matches!(self.values, PolicyValues::Strengths(_))
    }

    /// Parameter at level `l` as a real number.
    pub fn value(&self, l: usize) -> f64 {
        match &self.values {
            PolicyValues::Strengths(ks) => ks[l] as f64,
            PolicyValues::Rates(ps) => ps[l],
        }
    }

    /// Mutation law used at level `l`.
    pub fn law_at(&self, l: usize) -> MutationLaw {
        match &self.values {
            PolicyValues::Strengths(ks) => MutationLaw::Deterministic(ks[l]),
            PolicyValues::Rates(ps) => match self.meta.algorithm {
                Algorithm::EaRes => MutationLaw::ConditionalBinomial(ps[l]),
                _ => MutationLaw::Binomial(ps[l]),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Domain(msg));
        if self.n == 0 {
            return bad("dimension must be positive".into());
        }
        match &self.values {
            PolicyValues::Strengths(ks) => {
                if ks.len() != self.n {
                    return bad(format!("{} strengths for n = {}", ks.len(), self.n));
                }
                if let Some((l, k)) = ks.iter().enumerate().find(|(_, &k)| k == 0 || k > self.n) {
                    return bad(format!("strength {k} at level {l} outside [1, {}]", self.n));
                }
            }
            PolicyValues::Rates(ps) => {
                if ps.len() != self.n {
                    return bad(format!("{} rates for n = {}", ps.len(), self.n));
                }
                let lo = self.meta.p_min.max(0.0);
                if let Some((l, p)) = ps.iter().enumerate().find(|(_, &p)| !(p >= lo && p <= 1.0)) {
                    return bad(format!("rate {p} at level {l} outside [{lo}, 1]"));
                }
            }
        }
        Ok(())
    }
}

/// Statistics of every strength `k` in `[0, n]` at level `l`.
fn level_profile(n: usize, l: usize, times: Option<&[f64]>) -> Vec<StrengthStats> {
    (0..=n)
        .into_par_iter()
        .map_init(HyperScratch::new, |scratch, k| strength_stats(scratch, n, l, k, times))
        .collect()
}

/// Picks the best `(index, value)`; among candidates within relative
/// [`TIE_TOLERANCE`] of the optimum the smallest or largest index wins.
fn select(candidates: impl Iterator<Item = (usize, f64)>, maximize: bool, tie: TieBreak) -> Option<(usize, f64)> {
    let candidates: Vec<(usize, f64)> = candidates.filter(|(_, v)| v.is_finite()).collect();
    let best = candidates
        .iter()
        .map(|&(_, v)| v)
        .reduce(|a, b| if (b > a) == maximize && b != a { b } else { a })?;
    let slack = TIE_TOLERANCE * best.abs();
    let near = candidates.into_iter().filter(|&(_, v)| (v - best).abs() <= slack);
    match tie {
        TieBreak::Min => near.min_by_key(|&(k, _)| k),
        TieBreak::Max => near.max_by_key(|&(k, _)| k),
    }
}

fn strength_time(s: &StrengthStats) -> f64 {
    if s.improve >= crate::kernel::MIN_IMPROVEMENT {
        (1.0 + s.weighted_time) / s.improve
    } else {
        f64::INFINITY
    }
}

/// Drift-maximizing strengths, ties broken toward the smallest strength.
pub fn k_drift_table(n: usize) -> Result<PolicyTable> {
    k_drift_table_with(n, TieBreak::Min)
}

pub fn k_drift_table_with(n: usize, tie: TieBreak) -> Result<PolicyTable> {
    if n == 0 {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    let ks = (0..n)
        .map(|l| {
            let profile = level_profile(n, l, None);
            let (k, _) = select((1..=n).map(|k| (k, profile[k].drift)), true, tie)
                .expect("flipping one bit has positive drift below the optimum");
            k
        })
        .collect();
    let mut meta = PolicyMeta::new(Algorithm::Rls, Mode::Drift);
    meta.tie_break = tie;
    Ok(PolicyTable { n, values: PolicyValues::Strengths(ks), meta })
}

/// Time-optimal strengths together with their remaining times.
pub fn k_opt_table(n: usize) -> Result<(PolicyTable, RemainingTimeTable)> {
    k_opt_table_with(n, TieBreak::Min)
}

pub fn k_opt_table_with(n: usize, tie: TieBreak) -> Result<(PolicyTable, RemainingTimeTable)> {
    if n == 0 {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    let mut times = vec![0.0; n + 1];
    let mut ks = vec![0usize; n];
    for l in (0..n).rev() {
        let profile = level_profile(n, l, Some(&times));
        let (k, t) = select((1..=n).map(|k| (k, strength_time(&profile[k]))), false, tie)
            .ok_or(Error::ZeroImprovement { level: l, probability: 0.0 })?;
        ks[l] = k;
        times[l] = t;
    }
    let mut meta = PolicyMeta::new(Algorithm::Rls, Mode::Opt);
    meta.tie_break = tie;
    let table = PolicyTable { n, values: PolicyValues::Strengths(ks), meta };
    let rt = RemainingTimeTable::new(n, times, meta)?;
    Ok((table, rt))
}

/// Settings of a per-level rate search.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateSearch {
    pub family: RateFamily,
    /// Lower bound on the rate; only honored for the conditional family.
    pub p_min: f64,
    pub tail_epsilon: f64,
    pub cfg: OptimizerConfig,
}

impl RateSearch {
    pub fn new(family: RateFamily, p_min: f64, cfg: OptimizerConfig) -> Self {
        Self { family, p_min, tail_epsilon: DEFAULT_TAIL_EPSILON, cfg }
    }

    pub fn with_tail_epsilon(self, tail_epsilon: f64) -> Self {
        Self { tail_epsilon, ..self }
    }

    fn validate(&self) -> Result<()> {
        self.cfg.validate()?;
        if !(0.0..1.0).contains(&self.p_min) {
            return Err(Error::Domain(format!("p_min {} outside [0, 1)", self.p_min)));
        }
        if !(0.0..=1e-9).contains(&self.tail_epsilon) {
            return Err(Error::Domain(format!("tail epsilon {} outside [0, 1e-9]", self.tail_epsilon)));
        }
        Ok(())
    }

    /// Effective lower bound recorded in the table metadata.
    fn effective_p_min(&self) -> f64 {
        match self.family {
            RateFamily::Binomial => 0.0,
            RateFamily::ConditionalBinomial => self.p_min,
        }
    }

    fn meta(&self, mode: Mode) -> PolicyMeta {
        PolicyMeta {
            algorithm: self.family.algorithm(),
            mode,
            p_min: self.effective_p_min(),
            tail_epsilon: self.tail_epsilon,
            grid_points: self.cfg.grid_points,
            refine_tolerance: self.cfg.refine_tolerance,
            tie_break: TieBreak::Min,
        }
    }

    /// Objective value of rate `p` at one level; smaller is better.
    fn evaluate(&self, n: usize, profile: &[StrengthStats], p: f64, objective: Objective) -> f64 {
        let weights = match self.family.law(p).weights(n, self.tail_epsilon) {
            Ok(w) => w,
            Err(_) => return f64::INFINITY,
        };
        let m = combine(profile, &weights);
        match objective {
            Objective::MaximizeDrift => -m.drift(),
            Objective::MinimizeRemainingTime => m.remaining_time().unwrap_or(f64::INFINITY),
        }
    }

    /// Best rate at level `l` given the strength profile there.
    fn optimize_level(&self, n: usize, l: usize, profile: &[StrengthStats], objective: Objective) -> Result<(f64, f64)> {
        let lo = self.effective_p_min().max(RATE_FLOOR);
        let mut grid = if lo < 1.0 { log_grid(lo, 1.0, self.cfg.grid_points) } else { vec![1.0] };
        let mut seeds = Vec::new();
        if let Some((k, _)) = select((1..=n).map(|k| (k, profile[k].drift)), true, TieBreak::Min) {
            seeds.push(k as f64 / n as f64);
        }
        if objective == Objective::MinimizeRemainingTime {
            if let Some((k, _)) = select((1..=n).map(|k| (k, strength_time(&profile[k]))), false, TieBreak::Min) {
                seeds.push(k as f64 / n as f64);
            }
        }
        for s in seeds {
            if s > lo && s < 1.0 && !grid.contains(&s) {
                grid.push(s);
            }
        }
        grid.sort_by(f64::total_cmp);

        let eval = |p: f64| self.evaluate(n, profile, p, objective);
        let (mut p, mut value) =
            minimize_on_grid(eval, &grid, self.cfg.refine_tolerance).map_err(|e| e.at_level(l))?;
        if self.family == RateFamily::ConditionalBinomial && self.p_min == 0.0 {
            let endpoint = self.evaluate(n, profile, 0.0, objective);
            if endpoint <= value + TIE_TOLERANCE * value.abs() {
                p = 0.0;
                value = endpoint;
            }
        }
        if !value.is_finite() {
            return Err(Error::ZeroImprovement { level: l, probability: 0.0 });
        }
        Ok((p, value))
    }

    fn drift_rate(&self, n: usize, l: usize) -> Result<f64> {
        let profile = level_profile(n, l, None);
        Ok(self.optimize_level(n, l, &profile, Objective::MaximizeDrift)?.0)
    }

    /// Drift-maximizing rate per level.
    pub fn drift_table(&self, n: usize) -> Result<PolicyTable> {
        self.validate()?;
        check_dimension(n)?;
        let rates = (0..n).map(|l| self.drift_rate(n, l)).collect::<Result<Vec<_>>>()?;
        Ok(PolicyTable { n, values: PolicyValues::Rates(rates), meta: self.meta(Mode::Drift) })
    }

    /// Time-optimal rate per level, computed backward, with the optimal
    /// remaining times.
    pub fn opt_table(&self, n: usize) -> Result<(PolicyTable, RemainingTimeTable)> {
        self.validate()?;
        check_dimension(n)?;
        let mut times = vec![0.0; n + 1];
        let mut rates = vec![0.0; n];
        for l in (0..n).rev() {
            let profile = level_profile(n, l, Some(&times));
            let (p, t) = self.optimize_level(n, l, &profile, Objective::MinimizeRemainingTime)?;
            rates[l] = p;
            times[l] = t;
        }
        let meta = self.meta(Mode::Opt);
        let table = PolicyTable { n, values: PolicyValues::Rates(rates), meta };
        let rt = RemainingTimeTable::new(n, times, meta)?;
        Ok((table, rt))
    }

    /// [`back_table`] with this search's settings for the lower half.
    pub fn back_table(&self, n: usize) -> Result<PolicyTable> {
        self.validate()?;
        if n < 2 {
            return Err(Error::Domain(format!("Bäck's rule needs n >= 2, got {n}")));
        }
        let search = RateSearch { family: RateFamily::Binomial, p_min: 0.0, ..*self };
        let rates = (0..n)
            .map(|l| if 2 * l >= n { Ok(1.0 / (2 * l + 2 - n) as f64) } else { search.drift_rate(n, l) })
            .collect::<Result<Vec<_>>>()?;
        Ok(PolicyTable { n, values: PolicyValues::Rates(rates), meta: search.meta(Mode::Back) })
    }

    /// Static rate with this search's settings.
    pub fn static_table(&self, n: usize, p: f64) -> Result<PolicyTable> {
        let mut table = PolicyTable::static_rate(n, self.family, p)?;
        table.meta.tail_epsilon = self.tail_epsilon;
        table.meta.grid_points = self.cfg.grid_points;
        table.meta.refine_tolerance = self.cfg.refine_tolerance;
        Ok(table)
    }

    /// See [`static_opt_rate`]. The search is seeded around `1/n`.
    pub fn static_opt(&self, n: usize) -> Result<(f64, f64)> {
        self.validate()?;
        check_dimension(n)?;
        let nf = n as f64;
        let total_at = |p: f64| -> f64 {
            self.static_table(n, p)
                .and_then(|t| remaining_times(n, &t, None))
                .map(|rt| total_expected_time(&rt))
                .unwrap_or(f64::INFINITY)
        };
        let lo = self.effective_p_min().max(0.05 / nf).min(1.0);
        let hi = (20.0 / nf).max(10.0 * lo).min(1.0);
        let (mut p, mut value) = if lo < hi {
            let mut grid = log_grid(lo, hi, self.cfg.grid_points);
            let seed = 1.0 / nf;
            if seed > lo && seed < hi {
                grid.push(seed);
                grid.sort_by(f64::total_cmp);
            }
            minimize_on_grid(total_at, &grid, self.cfg.refine_tolerance)?
        } else {
            (lo, total_at(lo))
        };
        if self.family == RateFamily::ConditionalBinomial && self.p_min == 0.0 {
            let endpoint = total_at(0.0);
            if endpoint <= value + TIE_TOLERANCE * value.abs() {
                p = 0.0;
                value = endpoint;
            }
        }
        if !value.is_finite() {
            return Err(Error::ZeroImprovement { level: n - 1, probability: 0.0 });
        }
        Ok((p, value))
    }

    pub fn static_opt_table(&self, n: usize) -> Result<PolicyTable> {
        let (p, _) = self.static_opt(n)?;
        let mut table = self.static_table(n, p)?;
        table.meta.p_min = self.effective_p_min();
        Ok(table)
    }
}

fn check_dimension(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Domain("dimension must be positive".into()));
    }
    Ok(())
}

/// Drift-maximizing rates. `p_min` only applies to the conditional family.
pub fn p_drift_table(n: usize, family: RateFamily, p_min: f64, cfg: &OptimizerConfig) -> Result<PolicyTable> {
    RateSearch::new(family, p_min, *cfg).drift_table(n)
}

/// Time-optimal rates and their remaining times.
pub fn p_opt_table(
    n: usize,
    family: RateFamily,
    p_min: f64,
    cfg: &OptimizerConfig,
) -> Result<(PolicyTable, RemainingTimeTable)> {
    RateSearch::new(family, p_min, *cfg).opt_table(n)
}

/// Bäck's fitness-dependent rate `1 / (2l + 2 - n)` for `l >= n/2`, and the
/// drift-maximizing standard-bit-mutation rate below `n/2`.
pub fn back_table(n: usize) -> Result<PolicyTable> {
    RateSearch::new(RateFamily::Binomial, 0.0, OptimizerConfig::default()).back_table(n)
}

/// Best single rate used at every level, and the resulting expected
/// optimization time.
pub fn static_opt_rate(n: usize, family: RateFamily, p_min: f64, cfg: &OptimizerConfig) -> Result<(f64, f64)> {
    RateSearch::new(family, p_min, *cfg).static_opt(n)
}

/// Table for [`static_opt_rate`].
pub fn static_opt_table(n: usize, family: RateFamily, p_min: f64, cfg: &OptimizerConfig) -> Result<PolicyTable> {
    RateSearch::new(family, p_min, *cfg).static_opt_table(n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strengths(t: &PolicyTable) -> Vec<usize> {
        match &t.values {
            PolicyValues::Strengths(ks) => ks.clone(),
            _ => panic!("expected strengths"),
        }
    }

    fn rates(t: &PolicyTable) -> Vec<f64> {
        match &t.values {
            PolicyValues::Rates(ps) => ps.clone(),
            _ => panic!("expected rates"),
        }
    }

    #[test]
    fn k_tables_for_three_bits() {
        assert_eq!(strengths(&k_drift_table(3).unwrap()), vec![3, 3, 1]);
        let (t, rt) = k_opt_table(3).unwrap();
        assert_eq!(strengths(&t), vec![3, 2, 1]);
        for (got, want) in rt.times.iter().zip([1.0, 3.0, 3.0, 0.0]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn candidate_times_at_level_one_of_three() {
        let times = [0.0, 0.0, 3.0, 0.0];
        let profile = level_profile(3, 1, Some(&times));
        let cand: Vec<f64> = (1..=3).map(|k| strength_time(&profile[k])).collect();
        assert!((cand[0] - 4.5).abs() < 1e-12);
        assert!((cand[1] - 3.0).abs() < 1e-12);
        assert!((cand[2] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rate_tables_for_three_bits() {
        let cfg = OptimizerConfig::default();
        let d = rates(&p_drift_table(3, RateFamily::Binomial, 0.0, &cfg).unwrap());
        for (got, want) in d.iter().zip([1.0, 1.0, 1.0 / 3.0]) {
            assert!((got - want).abs() < 1e-9, "{d:?}");
        }
        let d = rates(&p_drift_table(3, RateFamily::ConditionalBinomial, 0.0, &cfg).unwrap());
        assert_eq!(d[2], 0.0);
        assert!((d[0] - 1.0).abs() < 1e-9 && (d[1] - 1.0).abs() < 1e-9);

        let (t, rt) = p_opt_table(3, RateFamily::Binomial, 0.0, &cfg).unwrap();
        let o = rates(&t);
        for (got, want) in o.iter().zip([1.0, 2.0 / 3.0, 1.0 / 3.0]) {
            assert!((got - want).abs() < 1e-6, "{o:?}");
        }
        assert!((total_expected_time(&rt) - 5.1875).abs() < 1e-9);

        let (t, rt) = p_opt_table(3, RateFamily::ConditionalBinomial, 0.0, &cfg).unwrap();
        let o = rates(&t);
        assert_eq!(o[2], 0.0);
        assert!((o[1] - 0.75).abs() < 1e-6, "{o:?}");
        assert!((rt.times[1] - 27.0 / 7.0).abs() < 1e-9);
    }

    #[test]
    fn back_rule_closed_form() {
        let t = back_table(10).unwrap();
        let ps = rates(&t);
        assert_eq!(ps[5], 1.0 / 2.0);
        assert_eq!(ps[9], 1.0 / 10.0);
        assert!(back_table(1).is_err());
    }

    #[test]
    fn tie_break_switch() {
        // level 1 of n = 3: strengths 1 and 2 have equal drift 2/3 and 3 wins
        let c = [(1usize, 2.0 / 3.0), (2, 2.0 / 3.0), (3, 0.5)];
        assert_eq!(select(c.into_iter(), true, TieBreak::Min).unwrap().0, 1);
        assert_eq!(select(c.into_iter(), true, TieBreak::Max).unwrap().0, 2);
        assert_eq!(select(c.into_iter(), false, TieBreak::Min).unwrap().0, 3);
    }

    #[test]
    fn table_validation() {
        assert!(PolicyTable::static_strength(3, 0).is_err());
        assert!(PolicyTable::static_strength(3, 4).is_err());
        assert!(PolicyTable::static_rate(3, RateFamily::Binomial, 1.5).is_err());
        let mut t = PolicyTable::static_rate(3, RateFamily::ConditionalBinomial, 0.1).unwrap();
        if let PolicyValues::Rates(ps) = &mut t.values {
            ps[0] = 0.05;
        }
        assert!(t.validate().is_err());
        assert!(p_drift_table(3, RateFamily::ConditionalBinomial, 1.0, &OptimizerConfig::default()).is_err());
    }
}
