//! Command-line front end. Settings come from built-in defaults, then an
//! optional JSON config file, then flags.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ddcc_core::conic::{solve, ConicProgram, LinearRow, Sense, Status, ToleranceSettings};
use ddcc_core::schedules::{comparison_constants, Method};
use ddcc_core::surrogate::{
    best_of_both, build_fixed_delta, build_ind_mean, build_ind_var, build_plugin, build_thm1, ChanceSpec,
    SurrogateBlocks,
};
use ddcc_core::{schedules, CovarianceMode, MomentState};
use serde::Deserialize;
use serde_json::json;

use crate::bench::{self, BenchMethod, BettingConfig, ExperimentConfig, ThresholdMode};
use crate::dump::{blocks_json, program_json};
use crate::error::{Error, Result};
use crate::io::{fmt_num, fmt_opt, read_samples_file, read_support, sniff_dim};

#[derive(Debug, Parser)]
#[command(name = "ddcc", version, about = "Data-driven distributionally robust chance constraints")]
pub struct Cli {
    /// Master seed for every random draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// 1000 trials per N and 10⁶ test samples instead of 200 and 10⁵.
    #[arg(long, global = true)]
    pub full_scale: bool,
    /// Violation event of the betting benchmark.
    #[arg(long, global = true, value_enum)]
    pub mode: Option<ModeArg>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeArg {
    LossBeta,
    LiteralPaper,
}

impl From<ModeArg> for ThresholdMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::LossBeta => ThresholdMode::LossBeta,
            ModeArg::LiteralPaper => ThresholdMode::LiteralPaper,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Coefficient schedules over a grid of sample sizes.
    Schedules(SchedulesArgs),
    /// Deterministic-equivalent constants over a grid of α.
    Constants(ConstantsArgs),
    /// One data-driven chance-constrained solve from a sample file.
    Solve(SolveArgs),
    /// Monte Carlo betting benchmark.
    Bench(BenchArgs),
    /// Sequential re-solve timing on the betting benchmark.
    Sequential(SequentialArgs),
}

#[derive(Debug, Args)]
pub struct SchedulesArgs {
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Comma list of cor1, cor2, cor3, thm1:P, prop2:P, prop3:P.
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    /// Single method; combined with --p for thm1, prop2 and prop3.
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub p: Option<f64>,
    /// `lo:hi:K` for K linearly spaced sizes or `lo:hi:Klog` for log spacing.
    #[arg(long, default_value = "10:1e8:50log")]
    pub n_grid: String,
}

#[derive(Debug, Args)]
pub struct ConstantsArgs {
    /// `lo:hi:K`, K linearly spaced values of α.
    #[arg(long, default_value = "0.01:0.99:99")]
    pub alpha_grid: String,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// CSV with one sample of the random vector per row.
    #[arg(long)]
    pub samples: PathBuf,
    /// JSON support set: {"box":..}, {"polytope":..} or {"ellipsoid":..}.
    #[arg(long)]
    pub support: Option<PathBuf>,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// `d` in `Pr(aᵀx + d ≤ 0) ≥ 1 − α`.
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub offset: f64,
    /// plugin, cor1, thm1:P, fixed_delta:DELTA, cor2, cor3 or best_of_both.
    #[arg(long, default_value = "cor1")]
    pub method: String,
    /// Comma list of objective coefficients.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
    pub objective: Vec<f64>,
    #[arg(long)]
    pub maximize: bool,
    /// Adds `x ≥ 0` and `1ᵀx ≤ BUDGET`.
    #[arg(long)]
    pub budget: Option<f64>,
    /// Also write blocks.json and program.json.
    #[arg(long)]
    pub dump: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Comma list of plugin, cor1, thm1:P, fixed_delta:DELTA, oracle.
    #[arg(long, value_delimiter = ',')]
    pub methods: Vec<String>,
    /// Comma list of training sizes.
    #[arg(long, value_delimiter = ',')]
    pub n_grid: Vec<u64>,
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long)]
    pub test_size: Option<usize>,
    /// Leave time_ms empty so reruns are byte-identical.
    #[arg(long)]
    pub omit_timing: bool,
}

#[derive(Debug, Args)]
pub struct SequentialArgs {
    #[arg(long)]
    pub method: Option<String>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub samples_per_step: Option<usize>,
    /// Repeat the sequence and report median step times.
    #[arg(long)]
    pub runs: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub full_scale: Option<bool>,
    pub betting: Option<BettingConfig>,
    pub bench: BenchFile,
    pub sequential: SequentialFile,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchFile {
    pub methods: Option<Vec<String>>,
    pub n_grid: Option<Vec<u64>>,
    pub trials_per_n: Option<usize>,
    pub test_size: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SequentialFile {
    pub method: Option<String>,
    pub steps: Option<usize>,
    pub samples_per_step: Option<usize>,
    pub runs: Option<usize>,
}

/// Settings shared by every command after merging file and flags.
struct Common {
    seed: u64,
    out: PathBuf,
    full_scale: bool,
    betting: BettingConfig,
    file: FileConfig,
}

impl Common {
    fn resolve(cli: &Cli) -> Result<Self> {
        let file: FileConfig = match &cli.config {
            Some(p) => serde_json::from_reader(File::open(p)?)?,
            None => FileConfig::default(),
        };
        let mut betting = file.betting.clone().unwrap_or_default();
        if let Some(m) = cli.mode {
            betting.mode = m.into();
        }
        betting.validate()?;
        Ok(Self {
            seed: cli.seed.or(file.seed).unwrap_or(0),
            out: cli.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| PathBuf::from(".")),
            full_scale: cli.full_scale || file.full_scale.unwrap_or(false),
            betting,
            file,
        })
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        std::fs::create_dir_all(&self.out)?;
        Ok(BufWriter::new(File::create(self.out.join(name))?))
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let common = Common::resolve(cli)?;
    match &cli.command {
        Command::Schedules(a) => cmd_schedules(&common, a),
        Command::Constants(a) => cmd_constants(&common, a),
        Command::Solve(a) => cmd_solve(&common, a),
        Command::Bench(a) => cmd_bench(&common, a),
        Command::Sequential(a) => cmd_sequential(&common, a),
    }
}

/// `lo:hi:K` or `lo:hi:Klog`.
pub fn parse_grid(spec: &str) -> Result<(f64, f64, usize, bool)> {
    let bad = || Error::Config(format!("grid {spec:?} is not lo:hi:K or lo:hi:Klog"));
    let parts: Vec<&str> = spec.split(':').collect();
    let [lo, hi, k] = parts[..] else { return Err(bad()) };
    let (k, log) = match k.strip_suffix("log") {
        Some(k) => (k, true),
        None => (k, false),
    };
    let lo: f64 = lo.parse().map_err(|_| bad())?;
    let hi: f64 = hi.parse().map_err(|_| bad())?;
    let k: usize = k.parse().map_err(|_| bad())?;
    if k == 0 || !(lo <= hi) || (log && lo <= 0.0) || (k == 1 && lo != hi) {
        return Err(bad());
    }
    Ok((lo, hi, k, log))
}

pub fn grid_points(spec: &str) -> Result<Vec<f64>> {
    let (lo, hi, k, log) = parse_grid(spec)?;
    if k == 1 {
        return Ok(vec![lo]);
    }
    Ok((0..k)
        .map(|i| {
            let t = i as f64 / (k - 1) as f64;
            if log {
                (lo.ln() + (hi.ln() - lo.ln()) * t).exp()
            } else {
                lo + (hi - lo) * t
            }
        })
        .collect())
}

pub fn parse_schedule_method(s: &str) -> Result<Method> {
    let (name, arg) = match s.split_once(':') {
        Some((n, a)) => (n, Some(a)),
        None => (s, None),
    };
    let p = || -> Result<f64> {
        arg.ok_or_else(|| Error::Config(format!("{name} needs p, e.g. {name}:3")))?
            .parse()
            .map_err(|_| Error::Config(format!("bad p in {s:?}")))
    };
    match (name, arg) {
        ("cor1", None) => Ok(Method::Cor1),
        ("cor2", None) => Ok(Method::Cor2),
        ("cor3", None) => Ok(Method::Cor3),
        ("thm1", _) => Ok(Method::Thm1 { p: p()? }),
        ("prop2", _) => Ok(Method::Prop2 { p: p()? }),
        ("prop3", _) => Ok(Method::Prop3 { p: p()? }),
        _ => Err(Error::Config(format!("unknown schedule method {s:?}"))),
    }
}

fn cmd_schedules(common: &Common, a: &SchedulesArgs) -> Result<()> {
    let mut tags = a.methods.clone();
    if let Some(m) = &a.method {
        tags.push(match a.p {
            Some(p) => format!("{m}:{p}"),
            None => m.clone(),
        });
    }
    if tags.is_empty() {
        tags.push("cor1".into());
    }
    let methods: Vec<(String, Method)> =
        tags.iter().map(|t| parse_schedule_method(t).map(|m| (t.clone(), m))).collect::<Result<_>>()?;
    let grid: Vec<u64> = grid_points(&a.n_grid)?.into_iter().map(|n| n.round().max(1.0) as u64).collect();
    let mut w = csv::Writer::from_writer(common.create("schedules.csv")?);
    w.write_record(["method", "N", "kappa", "phi", "nu", "feasible", "kappa_sqrt_phi"])?;
    for (tag, m) in &methods {
        for &n in &grid {
            let r = m.evaluate(n, a.alpha)?;
            w.write_record([
                tag.clone(),
                n.to_string(),
                fmt_opt(r.kappa),
                fmt_num(r.phi),
                fmt_opt(r.nu),
                r.feasible.to_string(),
                fmt_opt(r.kappa_sqrt_phi()),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_constants(common: &Common, a: &ConstantsArgs) -> Result<()> {
    let mut w = csv::Writer::from_writer(common.create("constants.csv")?);
    w.write_record(["alpha", "general", "independent", "gaussian"])?;
    for alpha in grid_points(&a.alpha_grid)? {
        let c = comparison_constants(alpha)?;
        w.write_record([fmt_num(alpha), fmt_num(c.general), fmt_num(c.independent), fmt_num(c.gaussian)])?;
    }
    w.flush()?;
    Ok(())
}

fn surrogate_for(
    method: &str,
    state: &MomentState,
    support: Option<&ddcc_core::SupportSet>,
    spec: &ChanceSpec,
) -> Result<SurrogateBlocks> {
    let need = || support.ok_or_else(|| Error::Config(format!("method {method} needs --support")));
    let (n, alpha) = (state.count(), spec.alpha());
    let (name, arg) = method.split_once(':').map_or((method, None), |(a, b)| (a, Some(b)));
    let num = || -> Result<f64> {
        arg.ok_or_else(|| Error::Config(format!("{name} needs a parameter")))?
            .parse()
            .map_err(|_| Error::Config(format!("bad parameter in {method:?}")))
    };
    Ok(match (name, arg) {
        ("plugin", None) => build_plugin(state, spec)?,
        ("cor1", None) => build_thm1(state, need()?, spec, &schedules::cor1(n, alpha)?)?,
        ("thm1", _) => build_thm1(state, need()?, spec, &schedules::thm1(n, alpha, num()?)?)?,
        ("fixed_delta", _) => build_fixed_delta(state, need()?, spec, num()?, false)?,
        ("cor2", None) => build_ind_mean(state, need()?, spec, &schedules::cor2(n, alpha)?)?,
        ("cor3", None) => build_ind_var(state, need()?, spec, &schedules::cor3(n, alpha)?)?,
        _ => return Err(Error::Config(format!("unknown solve method {method:?}"))),
    })
}

fn cmd_solve(common: &Common, a: &SolveArgs) -> Result<()> {
    let dim = sniff_dim(&a.samples)?;
    let samples = read_samples_file(&a.samples, dim)?;
    if a.objective.len() != dim {
        return Err(Error::Config(format!("objective has {} entries, samples have {dim} columns", a.objective.len())));
    }
    let support = a.support.as_deref().map(read_support).transpose()?;
    let spec = ChanceSpec::identity(dim, a.offset, a.alpha)?;
    let mut state = MomentState::new(dim, CovarianceMode::Full)?;
    state.extend(samples.iter().map(|s| s.as_slice()))?;

    let mut base = ConicProgram::new(dim);
    let sense = if a.maximize { Sense::Maximize } else { Sense::Minimize };
    base.set_objective(sense, a.objective.clone());
    if let Some(b) = a.budget {
        (0..dim).for_each(|i| base.set_lower_bound(i, 0.0));
        base.add_linear(LinearRow::less_eq(vec![1.0; dim], -b));
    }
    let tol = ToleranceSettings::default();
    let (blocks, sol) = if a.method == "best_of_both" {
        let s = support.as_ref().ok_or_else(|| Error::Config("best_of_both needs --support".into()))?;
        let best = best_of_both(&state, s, &spec, &base, &tol)?;
        (best.blocks, best.solution)
    } else {
        let blocks = surrogate_for(&a.method, &state, support.as_ref(), &spec)?;
        let mut prog = base.clone();
        blocks.append_to(&mut prog)?;
        (blocks, solve(&prog, &tol)?)
    };
    if a.dump {
        let mut prog = base;
        blocks.append_to(&mut prog)?;
        serde_json::to_writer_pretty(common.create("blocks.json")?, &blocks_json(&blocks))?;
        serde_json::to_writer_pretty(common.create("program.json")?, &program_json(&prog))?;
    }
    let status = format!("{:?}", sol.status).to_lowercase();
    let out = json!({
        "method": a.method,
        "samples": state.count(),
        "status": status,
        "objective": sol.objective,
        "x": &sol.x[..dim],
        "constraint_value": blocks.scalar_value(&sol.x[..dim])?,
        "iterations": sol.iterations,
    });
    serde_json::to_writer_pretty(common.create("solution.json")?, &out)?;
    match sol.status {
        Status::Optimal | Status::Infeasible => Ok(()),
        other => Err(Error::Solver(format!("{other:?} after {} iterations", sol.iterations))),
    }
}

fn parse_methods(tags: &[String]) -> Result<Vec<BenchMethod>> {
    tags.iter().map(|t| t.parse()).collect()
}

pub fn experiment_config(common_seed: u64, full_scale: bool, file: &BenchFile, a: &BenchArgs) -> Result<ExperimentConfig> {
    let mut exp = if full_scale { ExperimentConfig::full_scale(common_seed) } else { ExperimentConfig::desk_scale(common_seed) };
    if let Some(m) = &file.methods {
        exp.methods = parse_methods(m)?;
    }
    if !a.methods.is_empty() {
        exp.methods = parse_methods(&a.methods)?;
    }
    if let Some(g) = &file.n_grid {
        exp.n_grid = g.clone();
    }
    if !a.n_grid.is_empty() {
        exp.n_grid = a.n_grid.clone();
    }
    exp.trials_per_n = a.trials.or(file.trials_per_n).unwrap_or(exp.trials_per_n);
    exp.test_size = a.test_size.or(file.test_size).unwrap_or(exp.test_size);
    Ok(exp)
}

fn cmd_bench(common: &Common, a: &BenchArgs) -> Result<()> {
    let exp = experiment_config(common.seed, common.full_scale, &common.file.bench, a)?;
    let result = bench::run_experiment(&common.betting, &exp)?;
    bench::write_trials_csv(common.create("trials.csv")?, &result.trials, !a.omit_timing)?;
    bench::write_aggregate_csv(common.create("aggregate.csv")?, &result.aggregates)?;
    for agg in &result.aggregates {
        println!(
            "{:<14} N={:<6} reward={} max_violation={} feasible={}",
            agg.method,
            agg.n,
            fmt_num(agg.avg_reward),
            fmt_num(agg.max_violation),
            fmt_num(agg.feasible_fraction)
        );
    }
    Ok(())
}

fn cmd_sequential(common: &Common, a: &SequentialArgs) -> Result<()> {
    let f = &common.file.sequential;
    let method: BenchMethod = a.method.clone().or_else(|| f.method.clone()).unwrap_or_else(|| "cor1".into()).parse()?;
    let steps = a.steps.or(f.steps).unwrap_or(100);
    let per_step = a.samples_per_step.or(f.samples_per_step).unwrap_or(100);
    let runs = a.runs.or(f.runs).unwrap_or(1);
    let result = bench::run_sequential(&common.betting, method, steps, per_step, common.seed, runs)?;
    bench::write_sequential_csv(common.create("sequential.csv")?, &result)?;
    Ok(())
}
