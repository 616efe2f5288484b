//! Command-line front end: policies, runtime tables, simulations and the
//! cross-variant summary table.

pub mod cache;
pub mod format;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use crate::error::{Error, Result};
use crate::kernel::DEFAULT_TAIL_EPSILON;
use crate::policy::{
    k_drift_table_with, k_opt_table_with, Algorithm, Mode, OptimizerConfig, PolicyTable, RateSearch, TieBreak,
};
use crate::runtime::{normalized_time, remaining_time_gradient, remaining_times, total_expected_time};
use crate::simulate::{default_budget_cap, fixed_budget, fixed_target, run_batch, AggregateStats, RunRecord};

use cache::{Cache, CacheParams, CachePayload};
use format::{csv, g17};

#[derive(Debug, Parser)]
#[command(name = "onemax", version, about = "Fitness-dependent mutation policies on OneMax")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute a policy table and write it as CSV plus a JSON sidecar.
    Policy(PolicyCmd),
    /// Expected optimization times for one variant across dimensions.
    Runtime(RuntimeCmd),
    /// Monte Carlo runs with fixed-budget and fixed-target statistics.
    Simulate(SimulateCmd),
    /// Expected optimization times of several variants as a wide table.
    Table(TableCmd),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AlgoArg {
    Rls,
    Ea,
    EaRes,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    Drift,
    Opt,
    Back,
    Static,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TieArg {
    Min,
    Max,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    #[arg(long, value_enum)]
    pub algo: AlgoArg,
    #[arg(long, value_enum)]
    pub mode: ModeArg,
    /// Lower rate bound for ea-res: 0, 1/2n, 1/n or a number.
    #[arg(long)]
    pub p_min: Option<String>,
    /// Static rate for ea and ea-res: opt, 1/n, 1/2n or a number.
    #[arg(long)]
    pub rate: Option<String>,
    /// Static strength for rls.
    #[arg(long)]
    pub strength: Option<usize>,
    #[arg(long, value_enum)]
    pub tie_break: Option<TieArg>,
    #[arg(long)]
    pub tail_eps: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CacheArgs {
    /// Cache directory (default: $ONEMAX_CACHE_DIR, then ./cache).
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
    /// Fail instead of computing when a policy is not cached.
    #[arg(long)]
    pub no_compute: bool,
}

#[derive(Debug, Args)]
pub struct PolicyCmd {
    #[command(flatten)]
    pub select: SelectArgs,
    #[arg(long)]
    pub n: usize,
    /// CSV path; the sidecar gets the same name with a `.json` extension.
    /// Without it the CSV goes to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub cache: CacheArgs,
}

#[derive(Debug, Args)]
pub struct RuntimeCmd {
    #[command(flatten)]
    pub select: SelectArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    pub dims: Vec<usize>,
    /// Fill the normalized_time column with `T / (n ln n)`.
    #[arg(long)]
    pub normalize: bool,
    /// Add a gradient column to the per-level files.
    #[arg(long)]
    pub gradient: bool,
    /// Write per-level remaining times for each dimension here.
    #[arg(long)]
    pub levels_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub cache: CacheArgs,
}

#[derive(Debug, Args)]
pub struct SimulateCmd {
    #[command(flatten)]
    pub select: SelectArgs,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',')]
    pub budgets: Vec<u64>,
    /// Defaults to `n` when neither budgets nor targets are given.
    #[arg(long, value_delimiter = ',')]
    pub targets: Vec<usize>,
    /// Evaluation cap per run (default `100 n ln n`).
    #[arg(long)]
    pub budget_cap: Option<u64>,
    /// Also write every run's events.
    #[arg(long)]
    pub raw: bool,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub cache: CacheArgs,
}

#[derive(Debug, Args)]
pub struct TableCmd {
    #[arg(long, value_delimiter = ',', required = true)]
    pub dims: Vec<usize>,
    /// Comma-separated variant ids such as `rls:opt`, `ea:static:p=1/n`
    /// or `ea-res:opt:pmin=1/2n`.
    #[arg(long, default_value = "")]
    pub algos: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub cache: CacheArgs,
}

/// A number given either directly or as a multiple of `1/n`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scaled {
    Value(f64),
    PerN(f64),
}

impl Scaled {
    pub fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::Usage(format!("cannot parse '{s}' as a number, 1/n or 1/2n"));
        if let Some((num, den)) = s.split_once('/') {
            let den = den.strip_suffix('n').ok_or_else(bad)?;
            let num: f64 = num.parse().map_err(|_| bad())?;
            let den: f64 = if den.is_empty() { 1.0 } else { den.parse().map_err(|_| bad())? };
            if !(num.is_finite() && den > 0.0) {
                return Err(bad());
            }
            return Ok(Scaled::PerN(num / den));
        }
        let v: f64 = s.parse().map_err(|_| bad())?;
        if !v.is_finite() {
            return Err(bad());
        }
        Ok(Scaled::Value(v))
    }

    pub fn resolve(&self, n: usize) -> f64 {
        match *self {
            Scaled::Value(v) => v,
            Scaled::PerN(c) => c / n as f64,
        }
    }
}

impl fmt::Display for Scaled {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Scaled::Value(v) => f.write_str(&g17(v)),
            Scaled::PerN(1.0) => f.write_str("1/n"),
            Scaled::PerN(0.5) => f.write_str("1/2n"),
            Scaled::PerN(c) => write!(f, "{}/n", g17(c)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StaticRate {
    Opt,
    Fixed(Scaled),
}

impl StaticRate {
    fn parse(s: &str) -> Result<Self> {
        if s.trim() == "opt" {
            Ok(StaticRate::Opt)
        } else {
            Ok(StaticRate::Fixed(Scaled::parse(s)?))
        }
    }
}

/// A fully validated algorithm variant, independent of `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub algorithm: Algorithm,
    pub mode: Mode,
    /// Only for ea-res.
    pub p_min: Option<Scaled>,
    /// Only for static ea and ea-res.
    pub rate: Option<StaticRate>,
    /// Only for static rls.
    pub strength: Option<usize>,
    pub tie_break: TieBreak,
    pub tail_epsilon: f64,
}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}

impl Variant {
    fn build(
        algorithm: Algorithm,
        mode: Mode,
        p_min: Option<Scaled>,
        rate: Option<StaticRate>,
        strength: Option<usize>,
        tie_break: Option<TieBreak>,
        tail_epsilon: Option<f64>,
    ) -> Result<Self> {
        let algo = algorithm.as_str();
        if mode == Mode::Back && algorithm != Algorithm::Ea {
            return usage(format!("mode back is only defined for ea, not {algo}"));
        }
        if p_min.is_some() && algorithm != Algorithm::EaRes {
            return usage(format!("--p-min only applies to ea-res, not {algo}"));
        }
        if rate.is_some() && !(mode == Mode::Static && algorithm != Algorithm::Rls) {
            return usage("--rate only applies to static ea and ea-res");
        }
        if strength.is_some() && !(mode == Mode::Static && algorithm == Algorithm::Rls) {
            return usage("--strength only applies to static rls");
        }
        if tie_break.is_some() && !(algorithm == Algorithm::Rls && matches!(mode, Mode::Drift | Mode::Opt)) {
            return usage("--tie-break only applies to rls drift and opt");
        }
        let tail_epsilon = tail_epsilon.unwrap_or(DEFAULT_TAIL_EPSILON);
        if !(0.0..=1e-9).contains(&tail_epsilon) {
            return usage(format!("--tail-eps {tail_epsilon} outside [0, 1e-9]"));
        }
        let mut rate = rate;
        let mut strength = strength;
        let mut p_min = p_min;
        if mode == Mode::Static {
            match algorithm {
                Algorithm::Rls => {
                    strength.get_or_insert(1);
                }
                _ => {
                    let r = rate.get_or_insert(StaticRate::Fixed(Scaled::PerN(1.0)));
                    if matches!(r, StaticRate::Fixed(_)) && p_min.is_some() {
                        return usage("--p-min only applies to the optimized static rate");
                    }
                }
            }
        }
        if algorithm == Algorithm::EaRes && !matches!(rate, Some(StaticRate::Fixed(_))) {
            p_min.get_or_insert(Scaled::Value(0.0));
        }
        Ok(Self {
            algorithm,
            mode,
            p_min,
            rate,
            strength,
            tie_break: tie_break.unwrap_or_default(),
            tail_epsilon,
        })
    }

    pub fn from_args(a: &SelectArgs) -> Result<Self> {
        let algorithm = match a.algo {
            AlgoArg::Rls => Algorithm::Rls,
            AlgoArg::Ea => Algorithm::Ea,
            AlgoArg::EaRes => Algorithm::EaRes,
        };
        let mode = match a.mode {
            ModeArg::Drift => Mode::Drift,
            ModeArg::Opt => Mode::Opt,
            ModeArg::Back => Mode::Back,
            ModeArg::Static => Mode::Static,
        };
        let tie = a.tie_break.map(|t| match t {
            TieArg::Min => TieBreak::Min,
            TieArg::Max => TieBreak::Max,
        });
        Self::build(
            algorithm,
            mode,
            a.p_min.as_deref().map(Scaled::parse).transpose()?,
            a.rate.as_deref().map(StaticRate::parse).transpose()?,
            a.strength,
            tie,
            a.tail_eps,
        )
    }

    /// Parses ids of the form `algo:mode[:pmin=X][:p=X][:k=K][:tie=max][:tail=E]`.
    pub fn parse_id(id: &str) -> Result<Self> {
        let mut parts = id.trim().split(':');
        let algorithm = match parts.next() {
            Some("rls") => Algorithm::Rls,
            Some("ea") => Algorithm::Ea,
            Some("ea-res") => Algorithm::EaRes,
            _ => return usage(format!("unknown algorithm in variant '{id}'")),
        };
        let mode = match parts.next() {
            Some("drift") => Mode::Drift,
            Some("opt") => Mode::Opt,
            Some("back") => Mode::Back,
            Some("static") => Mode::Static,
            _ => return usage(format!("unknown mode in variant '{id}'")),
        };
        let (mut p_min, mut rate, mut strength, mut tie, mut tail) = (None, None, None, None, None);
        for part in parts {
            let Some((key, value)) = part.split_once('=') else {
                return usage(format!("malformed option '{part}' in variant '{id}'"));
            };
            match key {
                "pmin" => p_min = Some(Scaled::parse(value)?),
                "p" => rate = Some(StaticRate::parse(value)?),
                "k" => strength = Some(value.parse().map_err(|_| Error::Usage(format!("bad strength '{value}'")))?),
                "tie" => {
                    tie = Some(match value {
                        "min" => TieBreak::Min,
                        "max" => TieBreak::Max,
                        _ => return usage(format!("bad tie-break '{value}'")),
                    })
                }
                "tail" => tail = Some(value.parse().map_err(|_| Error::Usage(format!("bad tail '{value}'")))?),
                _ => return usage(format!("unknown option '{key}' in variant '{id}'")),
            }
        }
        Self::build(algorithm, mode, p_min, rate, strength, tie, tail)
    }

    /// Canonical id; [`Variant::parse_id`] inverts it.
    pub fn id(&self) -> String {
        let mut id = format!("{}:{}", self.algorithm.as_str(), self.mode.as_str());
        if let Some(p) = self.p_min {
            if p != Scaled::Value(0.0) {
                id.push_str(&format!(":pmin={p}"));
            }
        }
        match self.rate {
            Some(StaticRate::Opt) => id.push_str(":p=opt"),
            Some(StaticRate::Fixed(p)) => id.push_str(&format!(":p={p}")),
            None => {}
        }
        if let Some(k) = self.strength {
            if k != 1 {
                id.push_str(&format!(":k={k}"));
            }
        }
        if self.tie_break == TieBreak::Max {
            id.push_str(":tie=max");
        }
        if self.tail_epsilon != DEFAULT_TAIL_EPSILON {
            id.push_str(&format!(":tail={}", g17(self.tail_epsilon)));
        }
        id
    }

    fn p_min_at(&self, n: usize) -> f64 {
        self.p_min.map_or(0.0, |p| p.resolve(n))
    }

    fn search(&self, n: usize) -> RateSearch {
        let family = self.algorithm.rate_family().expect("rate variant");
        RateSearch::new(family, self.p_min_at(n), OptimizerConfig::default()).with_tail_epsilon(self.tail_epsilon)
    }

    pub fn cache_params(&self, n: usize) -> CacheParams {
        let cfg = OptimizerConfig::default();
        let static_value = match (self.rate, self.strength) {
            (Some(StaticRate::Fixed(p)), _) => Some(p.resolve(n)),
            (_, Some(k)) => Some(k as f64),
            _ => None,
        };
        CacheParams {
            algorithm: self.algorithm,
            mode: self.mode,
            n,
            p_min: self.p_min_at(n),
            tail_epsilon: self.tail_epsilon,
            grid_points: cfg.grid_points,
            refine_tolerance: cfg.refine_tolerance,
            tie_break: self.tie_break,
            static_value,
        }
    }

    /// Computes the policy and its remaining times at dimension `n`.
    pub fn compute(&self, n: usize) -> Result<CachePayload> {
        let with_times = |policy: PolicyTable| -> Result<CachePayload> {
            let times = remaining_times(n, &policy, None)?;
            Ok(CachePayload { policy, times })
        };
        match (self.algorithm, self.mode) {
            (Algorithm::Rls, Mode::Drift) => with_times(k_drift_table_with(n, self.tie_break)?),
            (Algorithm::Rls, Mode::Opt) => {
                let (policy, times) = k_opt_table_with(n, self.tie_break)?;
                Ok(CachePayload { policy, times })
            }
            (Algorithm::Rls, Mode::Static) => {
                let mut policy = PolicyTable::static_strength(n, self.strength.unwrap_or(1))?;
                policy.meta.tail_epsilon = self.tail_epsilon;
                with_times(policy)
            }
            (Algorithm::Rls, Mode::Back) => usage("mode back is only defined for ea"),
            (_, Mode::Drift) => with_times(self.search(n).drift_table(n)?),
            (_, Mode::Opt) => {
                let (policy, times) = self.search(n).opt_table(n)?;
                Ok(CachePayload { policy, times })
            }
            (_, Mode::Back) => with_times(self.search(n).back_table(n)?),
            (_, Mode::Static) => {
                let search = self.search(n);
                let policy = match self.rate.unwrap_or(StaticRate::Fixed(Scaled::PerN(1.0))) {
                    StaticRate::Opt => search.static_opt_table(n)?,
                    StaticRate::Fixed(p) => search.static_table(n, p.resolve(n))?,
                };
                with_times(policy)
            }
        }
    }

    fn needs_cache(&self) -> bool {
        !matches!(
            (self.mode, self.rate),
            (Mode::Static, Some(StaticRate::Fixed(_))) | (Mode::Static, None)
        )
    }

    /// Cached result, computed and stored on a miss. Returns `None` on a
    /// miss when `no_compute` is set; trivially cheap static variants are
    /// always computed.
    pub fn lookup(&self, n: usize, cache: &Cache, no_compute: bool) -> Result<Option<CachePayload>> {
        if n == 0 {
            return Err(Error::Domain("dimension must be positive".into()));
        }
        if !self.needs_cache() {
            return self.compute(n).map(Some);
        }
        let params = self.cache_params(n);
        if let Some(payload) = cache.load(&params)? {
            return Ok(Some(payload));
        }
        if no_compute {
            return Ok(None);
        }
        let payload = self.compute(n)?;
        cache.store(&params, &payload)?;
        Ok(Some(payload))
    }

    fn require(&self, n: usize, cache: &Cache, no_compute: bool) -> Result<CachePayload> {
        self.lookup(n, cache, no_compute)?.ok_or_else(|| {
            Error::Cache(format!("no cached entry for {} at n = {n} in {}", self.id(), cache.dir().display()))
        })
    }

    /// File-name-safe form of the id.
    fn slug(&self) -> String {
        self.id().replace(':', "_").replace(['/', '='], "-")
    }
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(path) => {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(path, text)?;
        }
        None => print!("{text}"),
    }
    Ok(())
}

pub fn policy_csv(policy: &PolicyTable) -> String {
    csv(&["level", "value"], (0..policy.n).map(|l| vec![l.to_string(), g17(policy.value(l))]))
}

fn cmd_policy(cmd: &PolicyCmd) -> Result<()> {
    let variant = Variant::from_args(&cmd.select)?;
    let cache = Cache::resolve(cmd.cache.cache_dir.as_deref());
    let payload = variant.require(cmd.n, &cache, cmd.cache.no_compute)?;
    let policy = &payload.policy;
    write_output(cmd.out.as_deref(), &policy_csv(policy))?;
    if let Some(out) = &cmd.out {
        let meta = &policy.meta;
        let sidecar = json!({
            "variant": variant.id(),
            "n": policy.n,
            "algorithm": meta.algorithm,
            "mode": meta.mode,
            "values": if policy.is_strengths() { "strengths" } else { "rates" },
            "p_min": meta.p_min,
            "tail_epsilon": meta.tail_epsilon,
            "grid_points": meta.grid_points,
            "refine_tolerance": meta.refine_tolerance,
            "tie_break": meta.tie_break,
            "expected_time": total_expected_time(&payload.times),
            "cache_key": variant.cache_params(cmd.n).key(),
        });
        fs::write(out.with_extension("json"), serde_json::to_string_pretty(&sidecar)? + "\n")?;
    }
    Ok(())
}

fn cmd_runtime(cmd: &RuntimeCmd) -> Result<()> {
    let variant = Variant::from_args(&cmd.select)?;
    if cmd.gradient && cmd.levels_dir.is_none() {
        return usage("--gradient needs --levels-dir");
    }
    let cache = Cache::resolve(cmd.cache.cache_dir.as_deref());
    let mut rows = Vec::new();
    for &n in &cmd.dims {
        let payload = variant.require(n, &cache, cmd.cache.no_compute)?;
        let total = total_expected_time(&payload.times);
        let normalized = if cmd.normalize { g17(normalized_time(total, n)?) } else { String::new() };
        let p_min = variant.p_min.map_or(String::new(), |p| g17(p.resolve(n)));
        rows.push(vec![
            variant.algorithm.as_str().to_string(),
            variant.mode.as_str().to_string(),
            p_min,
            n.to_string(),
            g17(total),
            normalized,
        ]);
        if let Some(dir) = &cmd.levels_dir {
            fs::create_dir_all(dir)?;
            let times = &payload.times.times;
            let gradient = remaining_time_gradient(&payload.times);
            let text = if cmd.gradient {
                csv(
                    &["level", "remaining_time", "gradient"],
                    (0..=n).map(|l| {
                        let g = if l == 0 { String::new() } else { g17(gradient[l - 1]) };
                        vec![l.to_string(), g17(times[l]), g]
                    }),
                )
            } else {
                csv(&["level", "remaining_time"], (0..=n).map(|l| vec![l.to_string(), g17(times[l])]))
            };
            fs::write(dir.join(format!("{}_n{n}.csv", variant.slug())), text)?;
        }
    }
    let header = ["algorithm", "mode", "p_min", "n", "expected_time", "normalized_time"];
    write_output(cmd.out.as_deref(), &csv(&header, rows))
}

fn stats_csv(stats: &AggregateStats, censored: bool) -> String {
    let mut header = vec!["point", "mean", "std", "count"];
    if censored {
        header.push("censored");
    }
    csv(
        &header,
        stats.points.iter().map(|p| {
            let (mean, std) = if p.count == 0 { (String::new(), String::new()) } else { (g17(p.mean), g17(p.std)) };
            let mut row = vec![p.point.to_string(), mean, std, p.count.to_string()];
            if censored {
                row.push(p.censored.to_string());
            }
            row
        }),
    )
}

pub fn runs_csv(records: &[RunRecord]) -> String {
    csv(
        &["run", "seed", "evals", "fitness"],
        records.iter().enumerate().flat_map(|(i, r)| {
            r.events
                .iter()
                .map(move |(evals, fitness)| vec![i.to_string(), r.seed.to_string(), evals.to_string(), fitness.to_string()])
        }),
    )
}

fn cmd_simulate(cmd: &SimulateCmd) -> Result<()> {
    let variant = Variant::from_args(&cmd.select)?;
    if cmd.runs < 1 {
        return usage("--runs must be at least 1");
    }
    if cmd.budget_cap == Some(0) {
        return usage("--budget-cap must be at least 1");
    }
    let cache = Cache::resolve(cmd.cache.cache_dir.as_deref());
    let payload = variant.require(cmd.n, &cache, cmd.cache.no_compute)?;
    let cap = cmd.budget_cap.unwrap_or_else(|| default_budget_cap(cmd.n));
    let records = run_batch(&payload.policy, cmd.seed, cmd.runs, cap)?;
    let targets = if cmd.budgets.is_empty() && cmd.targets.is_empty() { vec![cmd.n] } else { cmd.targets.clone() };
    fs::create_dir_all(&cmd.out_dir)?;
    if !cmd.budgets.is_empty() {
        let stats = fixed_budget(&records, &cmd.budgets)?;
        fs::write(cmd.out_dir.join("fixed_budget.csv"), stats_csv(&stats, false))?;
    }
    if !targets.is_empty() {
        let stats = fixed_target(&records, &targets)?;
        fs::write(cmd.out_dir.join("fixed_target.csv"), stats_csv(&stats, true))?;
    }
    if cmd.raw {
        fs::write(cmd.out_dir.join("runs.csv"), runs_csv(&records))?;
    }
    Ok(())
}

fn cmd_table(cmd: &TableCmd) -> Result<()> {
    let variants = cmd
        .algos
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(Variant::parse_id)
        .collect::<Result<Vec<_>>>()?;
    let cache = Cache::resolve(cmd.cache.cache_dir.as_deref());
    let dims: Vec<String> = cmd.dims.iter().map(|n| n.to_string()).collect();
    let mut header = vec!["algorithm"];
    header.extend(dims.iter().map(String::as_str));
    let mut rows = Vec::new();
    for v in &variants {
        let mut row = vec![v.id()];
        for &n in &cmd.dims {
            let cell = v
                .lookup(n, &cache, cmd.cache.no_compute)?
                .map_or(String::new(), |p| g17(total_expected_time(&p.times)));
            row.push(cell);
        }
        rows.push(row);
    }
    write_output(cmd.out.as_deref(), &csv(&header, rows))
}

pub fn execute(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Policy(c) => cmd_policy(c),
        Command::Runtime(c) => cmd_runtime(c),
        Command::Simulate(c) => cmd_simulate(c),
        Command::Table(c) => cmd_table(c),
    }
}
