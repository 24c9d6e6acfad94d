//! Correlated-wager benchmark: sampling, problem assembly, Monte Carlo
//! experiments, sequential timing and a brute-force grid reference.

use std::collections::BTreeMap;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use ddcc_core::conic::{solve, ConicProgram, LinearRow, Sense, Status, ToleranceSettings};
use ddcc_core::schedules::{self, general_constant};
use ddcc_core::surrogate::{build_fixed_delta, build_known, build_plugin, build_thm1, ChanceSpec, SurrogateBlocks};
use ddcc_core::{CovarianceMode, MomentState, SupportSet};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::fmt_num;

/// Which return counts as a violation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    /// Violation when `aᵀx < −β`: losing more than `β` of the bankroll.
    LossBeta,
    /// Violation when `aᵀx < β`.
    LiteralPaper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BettingConfig {
    pub rho: Vec<f64>,
    pub abar: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub mode: ThresholdMode,
    pub games: usize,
    pub wagers_per_game: usize,
}

impl Default for BettingConfig {
    fn default() -> Self {
        Self {
            rho: vec![0.75, 0.6, 0.7, 0.4],
            abar: vec![0.5, 0.95, 0.6, 2.1],
            alpha: 0.2,
            beta: 0.1,
            mode: ThresholdMode::LossBeta,
            games: 2,
            wagers_per_game: 2,
        }
    }
}

impl BettingConfig {
    pub fn validate(&self) -> Result<()> {
        let dim = self.games * self.wagers_per_game;
        if dim == 0 || self.rho.len() != dim || self.abar.len() != dim {
            return Err(Error::Config(format!(
                "rho and abar need games * wagers_per_game = {dim} entries, got {} and {}",
                self.rho.len(),
                self.abar.len()
            )));
        }
        if self.rho.iter().any(|r| !(*r > 0.0 && *r < 1.0)) {
            return Err(Error::Config("rho entries must lie in (0, 1)".into()));
        }
        if self.abar.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(Error::Config("abar entries must be positive".into()));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.games * self.wagers_per_game
    }

    /// `d` in `−aᵀx + d ≤ 0`.
    pub fn offset(&self) -> f64 {
        match self.mode {
            ThresholdMode::LossBeta => -self.beta,
            ThresholdMode::LiteralPaper => self.beta,
        }
    }

    /// `z = −x`, so the constraint reads `aᵀz + d ≤ 0`.
    pub fn spec(&self) -> Result<ChanceSpec> {
        let n = self.dim();
        Ok(ChanceSpec::new(-DMatrix::identity(n, n), self.offset(), self.alpha)?)
    }

    /// Exact outcome range `[−1, ā]`.
    pub fn support(&self) -> Result<SupportSet> {
        Ok(SupportSet::boxed(&vec![-1.0; self.dim()], &self.abar)?)
    }

    pub fn is_violation(&self, ret: f64) -> bool {
        match self.mode {
            ThresholdMode::LossBeta => ret < -self.beta,
            ThresholdMode::LiteralPaper => ret < self.beta,
        }
    }
}

/// `ā` when `u ≥ 1 − ρ`, otherwise `−1`.
pub fn wager_outcome(u: f64, rho: f64, abar: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&u) {
        return Err(Error::Config(format!("u must lie in [0, 1], got {u}")));
    }
    Ok(if u >= 1.0 - rho { abar } else { -1.0 })
}

fn outcome_row(cfg: &BettingConfig, us: &[f64]) -> Vec<f64> {
    let w = cfg.wagers_per_game;
    (0..cfg.dim()).map(|k| if us[k / w] >= 1.0 - cfg.rho[k] { cfg.abar[k] } else { -1.0 }).collect()
}

/// `count` rows; each game draws one uniform shared by its wagers.
pub fn sample_batch(cfg: &BettingConfig, seed: u64, count: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut us = vec![0.0; cfg.games];
    (0..count)
        .map(|_| {
            us.iter_mut().for_each(|u| *u = rng.gen::<f64>());
            outcome_row(cfg, &us)
        })
        .collect()
}

/// Exact mean and covariance by integrating the piecewise-constant outcome
/// map over the breakpoints `1 − ρ_k` of each game.
pub fn true_moments(cfg: &BettingConfig) -> Result<(DVector<f64>, DMatrix<f64>)> {
    cfg.validate()?;
    let n = cfg.dim();
    let w = cfg.wagers_per_game;
    let mut mu = DVector::<f64>::zeros(n);
    let mut sigma = DMatrix::zeros(n, n);
    for g in 0..cfg.games {
        let cols = g * w..(g + 1) * w;
        let mut cuts: Vec<f64> = cols.clone().map(|k| 1.0 - cfg.rho[k]).collect();
        cuts.extend([0.0, 1.0]);
        cuts.sort_by(f64::total_cmp);
        cuts.dedup();
        let mut second = DMatrix::<f64>::zeros(w, w);
        for pair in cuts.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let u = 0.5 * (lo + hi);
            let a: Vec<f64> = cols.clone().map(|k| if u >= 1.0 - cfg.rho[k] { cfg.abar[k] } else { -1.0 }).collect();
            for i in 0..w {
                mu[g * w + i] += (hi - lo) * a[i];
                for j in 0..w {
                    second[(i, j)] += (hi - lo) * a[i] * a[j];
                }
            }
        }
        for i in 0..w {
            for j in 0..w {
                sigma[(g * w + i, g * w + j)] = second[(i, j)] - mu[g * w + i] * mu[g * w + j];
            }
        }
    }
    Ok((mu, sigma))
}

/// `max objᵀx` subject to the surrogate rows, `1ᵀx ≤ 1` and `x ≥ 0`.
pub fn assemble_problem(blocks: &SurrogateBlocks, objective: &[f64]) -> Result<ConicProgram> {
    let n = blocks.decision_dim();
    if objective.len() != n {
        return Err(Error::Config(format!("objective has {} entries, expected {n}", objective.len())));
    }
    let mut prog = ConicProgram::new(n);
    prog.set_objective(Sense::Maximize, objective.to_vec());
    (0..n).for_each(|i| prog.set_lower_bound(i, 0.0));
    prog.add_linear(LinearRow::less_eq(vec![1.0; n], -1.0));
    blocks.append_to(&mut prog)?;
    Ok(prog)
}

/// Test samples collapsed to distinct rows with multiplicities.
#[derive(Debug, Clone)]
pub struct TestSet {
    rows: Vec<(Vec<f64>, u64)>,
    size: u64,
}

impl TestSet {
    pub fn new(samples: &[Vec<f64>]) -> Self {
        let mut counts: BTreeMap<Vec<u64>, u64> = BTreeMap::new();
        for s in samples {
            *counts.entry(s.iter().map(|v| v.to_bits()).collect()).or_default() += 1;
        }
        let rows = counts.into_iter().map(|(k, c)| (k.into_iter().map(f64::from_bits).collect(), c)).collect();
        Self { rows, size: samples.len() as u64 }
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    /// `(mean of aᵀx, frequency of the violation event)`.
    pub fn evaluate(&self, x: &[f64], cfg: &BettingConfig) -> (f64, f64) {
        let mut reward = 0.0;
        let mut violations = 0;
        for (a, c) in &self.rows {
            let ret: f64 = a.iter().zip(x).map(|(ai, xi)| ai * xi).sum();
            reward += ret * *c as f64;
            if cfg.is_violation(ret) {
                violations += c;
            }
        }
        (reward / self.size as f64, violations as f64 / self.size as f64)
    }
}

pub fn evaluate(x: &[f64], samples: &[Vec<f64>], cfg: &BettingConfig) -> (f64, f64) {
    TestSet::new(samples).evaluate(x, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BenchMethod {
    Plugin,
    Cor1,
    Thm1 { p: f64 },
    FixedDelta { delta: f64 },
    Oracle,
}

impl BenchMethod {
    pub fn tag(&self) -> String {
        match self {
            BenchMethod::Plugin => "plugin".into(),
            BenchMethod::Cor1 => "cor1".into(),
            BenchMethod::Thm1 { p } => format!("thm1:{p}"),
            BenchMethod::FixedDelta { delta } => format!("fixed_delta:{delta}"),
            BenchMethod::Oracle => "oracle".into(),
        }
    }

    /// Desk-scale method set.
    pub fn defaults() -> Vec<BenchMethod> {
        vec![
            BenchMethod::Plugin,
            BenchMethod::Cor1,
            BenchMethod::Thm1 { p: 2.1 },
            BenchMethod::Thm1 { p: 3.0 },
            BenchMethod::Thm1 { p: 5.0 },
            BenchMethod::Oracle,
        ]
    }
}

impl FromStr for BenchMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, arg) = match s.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (s, None),
        };
        let num = |what: &str| -> Result<f64> {
            arg.ok_or_else(|| Error::Config(format!("{name} needs a {what}, e.g. {name}:3")))?
                .parse::<f64>()
                .map_err(|e| Error::Config(format!("{s}: {e}")))
        };
        match name {
            "plugin" if arg.is_none() => Ok(BenchMethod::Plugin),
            "cor1" if arg.is_none() => Ok(BenchMethod::Cor1),
            "oracle" if arg.is_none() => Ok(BenchMethod::Oracle),
            "thm1" => Ok(BenchMethod::Thm1 { p: num("p")? }),
            "fixed_delta" => Ok(BenchMethod::FixedDelta { delta: num("delta")? }),
            _ => Err(Error::Config(format!("unknown method {s:?}"))),
        }
    }
}

/// Exact moments and the derived problem data shared by all trials.
#[derive(Debug, Clone)]
pub struct Instance {
    pub cfg: BettingConfig,
    pub spec: ChanceSpec,
    pub support: SupportSet,
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

impl Instance {
    pub fn new(cfg: &BettingConfig) -> Result<Self> {
        cfg.validate()?;
        let (mu, sigma) = true_moments(cfg)?;
        Ok(Self { cfg: cfg.clone(), spec: cfg.spec()?, support: cfg.support()?, mu, sigma })
    }

    pub fn blocks(&self, method: BenchMethod, state: Option<&MomentState>) -> Result<SurrogateBlocks> {
        let state = match (method, state) {
            (BenchMethod::Oracle, _) => {
                return Ok(build_known(self.mu.as_slice(), &self.sigma, &self.spec)?);
            }
            (_, Some(s)) => s,
            (_, None) => return Err(Error::Config(format!("{} needs samples", method.tag()))),
        };
        let (n, alpha) = (state.count(), self.cfg.alpha);
        Ok(match method {
            BenchMethod::Plugin => build_plugin(state, &self.spec)?,
            BenchMethod::Cor1 => build_thm1(state, &self.support, &self.spec, &schedules::cor1(n, alpha)?)?,
            BenchMethod::Thm1 { p } => build_thm1(state, &self.support, &self.spec, &schedules::thm1(n, alpha, p)?)?,
            BenchMethod::FixedDelta { delta } => build_fixed_delta(state, &self.support, &self.spec, delta, false)?,
            BenchMethod::Oracle => unreachable!(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialStatus {
    Optimal,
    Infeasible,
    NotEnoughSamples,
    IterationLimit,
    NumericalFailure,
    Error,
}

impl TrialStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            TrialStatus::Optimal => "optimal",
            TrialStatus::Infeasible => "infeasible",
            TrialStatus::NotEnoughSamples => "not_enough_samples",
            TrialStatus::IterationLimit => "iteration_limit",
            TrialStatus::NumericalFailure => "numerical_failure",
            TrialStatus::Error => "error",
        }
    }
}

/// Solves one instance; anything but an optimal solve falls back to `x = 0`.
fn decide(inst: &Instance, method: BenchMethod, state: Option<&MomentState>) -> (TrialStatus, Vec<f64>) {
    let n = inst.cfg.dim();
    let blocks = match inst.blocks(method, state) {
        Ok(b) => b,
        Err(Error::Core(ddcc_core::Error::NotEnoughSamples(_))) => return (TrialStatus::NotEnoughSamples, vec![0.0; n]),
        Err(_) => return (TrialStatus::Error, vec![0.0; n]),
    };
    let objective: Vec<f64> = match (method, state) {
        (BenchMethod::Oracle, _) | (_, None) => inst.mu.iter().copied().collect(),
        (_, Some(s)) => s.mean().iter().copied().collect(),
    };
    let solved = assemble_problem(&blocks, &objective).map(|p| solve(&p, &ToleranceSettings::default()));
    match solved {
        Ok(Ok(sol)) => match sol.status {
            Status::Optimal => (TrialStatus::Optimal, sol.x[..n].to_vec()),
            Status::Infeasible => (TrialStatus::Infeasible, vec![0.0; n]),
            Status::IterationLimit => (TrialStatus::IterationLimit, vec![0.0; n]),
            Status::NumericalFailure => (TrialStatus::NumericalFailure, vec![0.0; n]),
        },
        _ => (TrialStatus::Error, vec![0.0; n]),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialResult {
    pub method: String,
    pub n: u64,
    pub trial: usize,
    pub seed: u64,
    pub status: TrialStatus,
    pub x: Vec<f64>,
    pub reward: f64,
    pub violation: f64,
    /// Moment update, surrogate build and solve.
    pub time_ms: f64,
}

impl TrialResult {
    pub fn flagged(&self) -> bool {
        self.status != TrialStatus::Optimal
    }
}

fn hash_seed(parts: &str) -> u64 {
    let digest = Sha256::digest(parts.as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

pub fn trial_seed(master: u64, method: &str, n: u64, trial: usize) -> u64 {
    hash_seed(&format!("trial|{master}|{method}|{n}|{trial}"))
}

pub fn test_seed(master: u64) -> u64 {
    hash_seed(&format!("test|{master}"))
}

fn sequential_seed(master: u64, step: usize) -> u64 {
    hash_seed(&format!("sequential|{master}|{step}"))
}

pub fn run_trial(inst: &Instance, method: BenchMethod, n: u64, trial: usize, master: u64, test: &TestSet) -> TrialResult {
    let tag = method.tag();
    let seed = trial_seed(master, &tag, n, trial);
    let samples = match method {
        BenchMethod::Oracle => Vec::new(),
        _ => sample_batch(&inst.cfg, seed, n as usize),
    };
    let start = Instant::now();
    let (status, x) = if method == BenchMethod::Oracle {
        decide(inst, method, None)
    } else {
        let mut state = MomentState::new(inst.cfg.dim(), CovarianceMode::Full).expect("positive dimension");
        match state.extend(samples.iter().map(|s| s.as_slice())) {
            Ok(()) => decide(inst, method, Some(&state)),
            Err(_) => (TrialStatus::Error, vec![0.0; inst.cfg.dim()]),
        }
    };
    let time_ms = start.elapsed().as_secs_f64() * 1e3;
    let (reward, violation) = test.evaluate(&x, &inst.cfg);
    TrialResult { method: tag, n, trial, seed, status, x, reward, violation, time_ms }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub methods: Vec<BenchMethod>,
    pub n_grid: Vec<u64>,
    pub trials_per_n: usize,
    pub test_size: usize,
    pub master_seed: u64,
}

impl ExperimentConfig {
    pub fn desk_scale(master_seed: u64) -> Self {
        Self {
            methods: BenchMethod::defaults(),
            n_grid: vec![50, 100, 200, 1_000, 10_000],
            trials_per_n: 200,
            test_size: 100_000,
            master_seed,
        }
    }

    pub fn full_scale(master_seed: u64) -> Self {
        Self { trials_per_n: 1_000, test_size: 1_000_000, ..Self::desk_scale(master_seed) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub method: String,
    pub n: u64,
    pub avg_reward: f64,
    /// Standard error of `avg_reward` across trials.
    pub reward_se: f64,
    pub max_violation: f64,
    pub feasible_fraction: f64,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub trials: Vec<TrialResult>,
    pub aggregates: Vec<Aggregate>,
}

impl Experiment {
    pub fn aggregate(&self, method: &str, n: u64) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.method == method && a.n == n)
    }
}

pub fn aggregate(trials: &[TrialResult]) -> Vec<Aggregate> {
    let mut groups: Vec<((String, u64), Vec<&TrialResult>)> = Vec::new();
    for t in trials {
        let key = (t.method.clone(), t.n);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(t),
            None => groups.push((key, vec![t])),
        }
    }
    groups
        .into_iter()
        .map(|((method, n), ts)| {
            let k = ts.len() as f64;
            let avg = ts.iter().map(|t| t.reward).sum::<f64>() / k;
            let var = if ts.len() > 1 { ts.iter().map(|t| (t.reward - avg).powi(2)).sum::<f64>() / (k - 1.0) } else { 0.0 };
            Aggregate {
                method,
                n,
                avg_reward: avg,
                reward_se: (var / k).sqrt(),
                max_violation: ts.iter().map(|t| t.violation).fold(0.0, f64::max),
                feasible_fraction: ts.iter().filter(|t| !t.flagged()).count() as f64 / k,
            }
        })
        .collect()
}

pub fn run_experiment(cfg: &BettingConfig, exp: &ExperimentConfig) -> Result<Experiment> {
    let inst = Instance::new(cfg)?;
    if exp.test_size == 0 || exp.trials_per_n == 0 || exp.n_grid.contains(&0) {
        return Err(Error::Config("test size, trial count and every N must be positive".into()));
    }
    let test = TestSet::new(&sample_batch(cfg, test_seed(exp.master_seed), exp.test_size));
    let jobs: Vec<(BenchMethod, u64, usize)> = exp
        .methods
        .iter()
        .flat_map(|m| exp.n_grid.iter().flat_map(move |&n| (0..exp.trials_per_n).map(move |t| (*m, n, t))))
        .collect();
    let trials: Vec<TrialResult> =
        jobs.par_iter().map(|&(m, n, t)| run_trial(&inst, m, n, t, exp.master_seed, &test)).collect();
    let aggregates = aggregate(&trials);
    Ok(Experiment { trials, aggregates })
}

pub const TRIALS_HEADER: &str = "method,N,trial,seed,status,reward,violation,time_ms";

/// `timing = false` leaves `time_ms` empty, the only field that differs
/// between reruns with the same seed.
pub fn write_trials_csv<W: Write>(out: W, trials: &[TrialResult], timing: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let dim = trials.first().map_or(4, |t| t.x.len());
    let mut header: Vec<String> = TRIALS_HEADER.split(',').map(String::from).collect();
    header.extend((1..=dim).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for t in trials {
        let mut rec = vec![
            t.method.clone(),
            t.n.to_string(),
            t.trial.to_string(),
            t.seed.to_string(),
            t.status.as_str().to_string(),
            fmt_num(t.reward),
            fmt_num(t.violation),
            if timing { fmt_num(t.time_ms) } else { String::new() },
        ];
        rec.extend(t.x.iter().map(|v| fmt_num(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub const AGGREGATE_HEADER: &str = "method,N,avg_reward,max_violation,feasible_fraction";

pub fn write_aggregate_csv<W: Write>(out: W, aggs: &[Aggregate]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_HEADER.split(','))?;
    for a in aggs {
        w.write_record([
            a.method.clone(),
            a.n.to_string(),
            fmt_num(a.avg_reward),
            fmt_num(a.max_violation),
            fmt_num(a.feasible_fraction),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequentialStep {
    /// 1-based.
    pub step: usize,
    pub count: u64,
    /// Median over runs of update, build and solve time.
    pub time_ms: f64,
    pub status: TrialStatus,
    pub x: Vec<f64>,
}

/// Streams `samples_per_step` new samples per step into one persistent
/// moment state and re-solves. The whole sequence is repeated `runs` times
/// on identical data; each step reports the median time.
pub fn run_sequential(
    cfg: &BettingConfig,
    method: BenchMethod,
    steps: usize,
    samples_per_step: usize,
    master_seed: u64,
    runs: usize,
) -> Result<Vec<SequentialStep>> {
    if steps < 2 || samples_per_step == 0 || runs == 0 {
        return Err(Error::Config("need steps >= 2, samples_per_step >= 1 and runs >= 1".into()));
    }
    if method == BenchMethod::Oracle {
        return Err(Error::Config("the oracle method has no sample stream".into()));
    }
    let inst = Instance::new(cfg)?;
    let batches: Vec<Vec<Vec<f64>>> =
        (1..=steps).map(|k| sample_batch(cfg, sequential_seed(master_seed, k), samples_per_step)).collect();
    let mut times = vec![Vec::with_capacity(runs); steps];
    let mut outcomes = Vec::with_capacity(steps);
    for run in 0..runs {
        let mut state = MomentState::new(cfg.dim(), CovarianceMode::Full)?;
        for (k, batch) in batches.iter().enumerate() {
            let start = Instant::now();
            state.extend(batch.iter().map(|s| s.as_slice()))?;
            let (status, x) = decide(&inst, method, Some(&state));
            times[k].push(start.elapsed().as_secs_f64() * 1e3);
            if run == 0 {
                outcomes.push((state.count(), status, x));
            }
        }
    }
    Ok(outcomes
        .into_iter()
        .zip(times)
        .enumerate()
        .map(|(k, ((count, status, x), mut t))| {
            t.sort_by(f64::total_cmp);
            SequentialStep { step: k + 1, count, time_ms: t[t.len() / 2], status, x }
        })
        .collect())
}

pub fn write_sequential_csv<W: Write>(out: W, steps: &[SequentialStep]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let dim = steps.first().map_or(4, |s| s.x.len());
    let mut header: Vec<String> = ["step", "count", "time_ms", "status"].map(String::from).to_vec();
    header.extend((1..=dim).map(|i| format!("x{i}")));
    w.write_record(&header)?;
    for s in steps {
        let mut rec = vec![s.step.to_string(), s.count.to_string(), fmt_num(s.time_ms), s.status.as_str().into()];
        rec.extend(s.x.iter().map(|v| fmt_num(*v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Constraint evaluated by the grid reference:
/// `μᵀz + d + φr(z) + κ√((1−α)/α)·√(zᵀΣz + 2φr(z)²) ≤ 0` with `z = −x`
/// and `r` the box radius of `[−1, ā]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceKind {
    /// `κ = 1`, `φ = 0`.
    Known,
    Thm1 { kappa: f64, phi: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub x: Vec<f64>,
    pub objective: f64,
    /// False when no grid point satisfies the constraint; `x` is then zero.
    pub feasible: bool,
}

/// Left-hand side of the reference constraint; feasible iff `≤ 0`.
pub fn reference_value(cfg: &BettingConfig, kind: ReferenceKind, mu: &[f64], sigma: &DMatrix<f64>, x: &[f64]) -> f64 {
    let (kappa, phi) = match kind {
        ReferenceKind::Known => (1.0, 0.0),
        ReferenceKind::Thm1 { kappa, phi } => (kappa, phi),
    };
    let n = x.len();
    let r = 0.5 * x.iter().zip(&cfg.abar).map(|(xi, a)| xi.abs() * (a + 1.0)).sum::<f64>();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += x[i] * sigma[(i, j)] * x[j];
        }
    }
    let mean: f64 = -mu.iter().zip(x).map(|(m, xi)| m * xi).sum::<f64>();
    mean + cfg.offset() + phi * r + kappa * general_constant(cfg.alpha) * (quad.max(0.0) + 2.0 * phi * r * r).sqrt()
}

/// Best point of the simplex grid `{x ≥ 0, 1ᵀx ≤ 1}` with spacing `step`
/// under the constraint above, maximising `μᵀx`.
pub fn solve_reference(
    cfg: &BettingConfig,
    kind: ReferenceKind,
    mu: &[f64],
    sigma: &DMatrix<f64>,
    step: f64,
) -> Result<Reference> {
    cfg.validate()?;
    let n = cfg.dim();
    if mu.len() != n || sigma.nrows() != n || sigma.ncols() != n {
        return Err(Error::Config(format!("moments must have dimension {n}")));
    }
    let k = (1.0 / step).round() as usize;
    if !(step > 0.0) || k == 0 || (k as f64 * step - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("grid step must divide 1, got {step}")));
    }
    // best (objective, grid indices) among points whose first index is i0
    let slice_best = |i0: usize| -> Option<(f64, Vec<usize>)> {
        let mut idx = vec![0usize; n];
        idx[0] = i0;
        let mut x = vec![0.0; n];
        let mut best: Option<(f64, Vec<usize>)> = None;
        // odometer over the remaining coordinates with Σ idx ≤ k
        loop {
            for (xi, ii) in x.iter_mut().zip(&idx) {
                *xi = *ii as f64 * step;
            }
            if reference_value(cfg, kind, mu, sigma, &x) <= 0.0 {
                let obj: f64 = mu.iter().zip(&x).map(|(m, xi)| m * xi).sum();
                if best.as_ref().map_or(true, |(b, _)| obj > *b) {
                    best = Some((obj, idx.clone()));
                }
            }
            let mut pos = n - 1;
            loop {
                if pos == 0 {
                    return best;
                }
                idx[pos] += 1;
                if idx.iter().sum::<usize>() <= k {
                    break;
                }
                idx[pos] = 0;
                pos -= 1;
            }
        }
    };
    let slices: Vec<Option<(f64, Vec<usize>)>> = (0..=k).into_par_iter().map(slice_best).collect();
    let mut best: Option<(f64, Vec<usize>)> = None;
    for s in slices.into_iter().flatten() {
        if best.as_ref().map_or(true, |(b, _)| s.0 > *b) {
            best = Some(s);
        }
    }
    Ok(match best {
        Some((objective, idx)) => {
            Reference { x: idx.iter().map(|i| *i as f64 * step).collect(), objective, feasible: true }
        }
        None => Reference { x: vec![0.0; n], objective: 0.0, feasible: false },
    })
}
