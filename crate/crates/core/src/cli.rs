//! The `fblab` command line.
//!
//! Every JSON document has the shape `{"config": RunConfig, "result": ...}`.
//! CSV output carries only the fixed header and rows; when written to a file
//! the config goes to `<file>.config.json` next to it. DOT output starts with
//! a `// config:` comment line.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::belief::ProbabilityMode;
use crate::bounds::{self, SimplexMethod};
use crate::channel::{ArithmeticMode, ChannelMode, ChannelParams};
use crate::dp::{self, CurveTarget};
use crate::error::{Error, Result};
use crate::montecarlo;
use crate::octopus::{self, SeriesVariant};
use crate::strategy::{StrategyRule, TiePolicy};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_RESOURCE: i32 = 3;
pub const EXIT_CHECK: i32 = 4;
pub const EXIT_IO: i32 = 5;

pub const WORKERS_ENV: &str = "FBLAB_WORKERS";

#[derive(Debug, Parser)]
#[command(name = "fblab", version, about = "Three-message feedback coding over BSC(p)")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModeArg {
    Rational,
    Float,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FormatArg {
    Json,
    Csv,
    Dot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LawArg {
    Bayes,
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieArg {
    Uniform,
    LowestIndex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantArg {
    Restricted,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodArg {
    BlockSum,
    Enumeration,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Crossover probability, e.g. `1/10` or `0.1`; comma-separated for `bounds` CSV sweeps.
    #[arg(long)]
    pub p: String,
    /// Arithmetic: exact rationals or log-domain floats.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long, value_enum)]
    pub format: Option<FormatArg>,
    /// Write to this file instead of standard output.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct StrategyArgs {
    /// `max-posterior`, `fixed:J`, `round-robin` or `table:PATH`.
    #[arg(long, default_value = "max-posterior")]
    pub strategy: String,
    #[arg(long, value_enum, default_value = "uniform")]
    pub tie: TieArg,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exponents, upper and lower bounds, and the a0 root.
    Bounds {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        /// CSV sweeps cover `n_min..=n_max`.
        #[arg(long)]
        n_min: Option<usize>,
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// Error probability of a strategy by forward dynamic programming.
    Exact {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        strategy: StrategyArgs,
    },
    /// Optimal error over all metric-state strategies.
    Bellman {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value = "bayes")]
        probability_mode: LawArg,
    },
    /// Compares max-posterior queries with the optimal ones state by state.
    VerifyTheorem2 {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: usize,
    },
    /// The decoder-state chain: transitions, DOT export and table verification.
    Octopus {
        #[command(flatten)]
        common: Common,
        /// Largest state depth kept.
        #[arg(long, default_value_t = 3)]
        depth: u32,
        #[arg(long)]
        verify: bool,
    },
    /// Return probability to (0,0,0) and the path-series lower bounds.
    Paths {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value = "restricted")]
        variant: VariantArg,
    },
    /// Monte Carlo estimate of the error probability.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        strategy: StrategyArgs,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Worker threads; defaults to FBLAB_WORKERS, then the available parallelism.
        #[arg(long)]
        workers: Option<usize>,
        /// Write the first N trajectories as JSON lines.
        #[arg(long, default_value_t = 0)]
        dump: u64,
        #[arg(long)]
        dump_path: Option<PathBuf>,
    },
    /// Equidistance event of the three-word simplex code.
    Simplex {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value = "block-sum")]
        method: MethodArg,
    },
    /// Error curve over `n = 1..=n_max`.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n_max: usize,
        #[command(flatten)]
        strategy: StrategyArgs,
        /// Use the Bellman optimum instead of the strategy.
        #[arg(long)]
        optimal: bool,
    },
}

/// The validated run parameters, embedded in every output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub subcommand: &'static str,
    pub p: String,
    pub n: Option<usize>,
    pub n_min: Option<usize>,
    pub n_max: Option<usize>,
    pub mode: ModeArg,
    pub strategy: Option<String>,
    pub tie: Option<TieArg>,
    pub probability_mode: Option<LawArg>,
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub workers: Option<usize>,
    pub output: Option<PathBuf>,
    pub format: FormatArg,
    pub depth: Option<u32>,
    pub verify: Option<bool>,
    pub variant: Option<VariantArg>,
    pub method: Option<MethodArg>,
    pub optimal: Option<bool>,
    pub dump: Option<u64>,
}

impl RunConfig {
    fn base(subcommand: &'static str, common: &Common, default_mode: ModeArg, default_format: FormatArg) -> Self {
        RunConfig {
            subcommand,
            p: common.p.trim().to_string(),
            n: None,
            n_min: None,
            n_max: None,
            mode: common.mode.unwrap_or(default_mode),
            strategy: None,
            tie: None,
            probability_mode: None,
            seed: None,
            trials: None,
            workers: None,
            output: common.output.clone(),
            format: common.format.unwrap_or(default_format),
            depth: None,
            verify: None,
            variant: None,
            method: None,
            optimal: None,
            dump: None,
        }
    }

    fn channel_mode(&self) -> ChannelMode {
        match self.mode {
            ModeArg::Rational => ChannelMode::Rational,
            ModeArg::Float => ChannelMode::Float,
        }
    }

    fn arithmetic(&self) -> ArithmeticMode {
        match self.mode {
            ModeArg::Rational => ArithmeticMode::Rational,
            ModeArg::Float => ArithmeticMode::LogFloat,
        }
    }

    fn channel(&self) -> Result<ChannelParams> {
        ChannelParams::new(&self.p, self.channel_mode())
    }

    fn channels(&self) -> Result<Vec<ChannelParams>> {
        self.p.split(',').map(|p| ChannelParams::new(p, self.channel_mode())).collect()
    }

    fn rule(&self) -> Result<StrategyRule> {
        let tie = match self.tie.unwrap_or(TieArg::Uniform) {
            TieArg::Uniform => TiePolicy::UniformRandom,
            TieArg::LowestIndex => TiePolicy::LowestIndex,
        };
        StrategyRule::parse(self.strategy.as_deref().unwrap_or("max-posterior"), tie)
    }

    fn require_format(&self, allowed: &[FormatArg]) -> Result<()> {
        if allowed.contains(&self.format) {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "{} does not support format {:?}",
                self.subcommand,
                serde_json::to_value(self.format)?
            )))
        }
    }
}

fn default_workers() -> usize {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&w| w > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Builds and validates the run configuration.
pub fn configure(cmd: &Command) -> Result<RunConfig> {
    use FormatArg::*;
    use ModeArg::*;
    let cfg = match cmd {
        Command::Bounds { common, n, n_min, n_max } => {
            let mut c = RunConfig::base("bounds", common, Float, Json);
            c.n = *n;
            c.n_min = *n_min;
            c.n_max = *n_max;
            c.require_format(&[Json, Csv])?;
            if c.format == Csv && n_max.is_none() {
                return Err(Error::InvalidArgument("a CSV bounds sweep needs --n-max".into()));
            }
            if c.format == Json && c.p.contains(',') {
                return Err(Error::InvalidArgument("several p values need --format csv".into()));
            }
            c
        }
        Command::Exact { common, n, strategy } => {
            let mut c = RunConfig::base("exact", common, Rational, Json);
            c.n = Some(*n);
            c.strategy = Some(strategy.strategy.clone());
            c.tie = Some(strategy.tie);
            c.require_format(&[Json])?;
            c
        }
        Command::Bellman { common, n, probability_mode } => {
            let mut c = RunConfig::base("bellman", common, Rational, Json);
            c.n = Some(*n);
            c.probability_mode = Some(*probability_mode);
            c.require_format(&[Json])?;
            c
        }
        Command::VerifyTheorem2 { common, n } => {
            let mut c = RunConfig::base("verify-theorem2", common, Rational, Json);
            c.n = Some(*n);
            c.require_format(&[Json])?;
            c
        }
        Command::Octopus { common, depth, verify } => {
            let mut c = RunConfig::base("octopus", common, Rational, Json);
            c.depth = Some(*depth);
            c.verify = Some(*verify);
            c.require_format(if *verify { &[Json] } else { &[Json, Dot] })?;
            c
        }
        Command::Paths { common, n, variant } => {
            let mut c = RunConfig::base("paths", common, Rational, Json);
            c.n = Some(*n);
            c.variant = Some(*variant);
            c.require_format(&[Json])?;
            c
        }
        Command::Simulate { common, n, strategy, trials, seed, workers, dump, .. } => {
            let mut c = RunConfig::base("simulate", common, Float, Json);
            c.n = Some(*n);
            c.strategy = Some(strategy.strategy.clone());
            c.tie = Some(strategy.tie);
            c.trials = Some(*trials);
            c.seed = Some(*seed);
            c.workers = Some(workers.unwrap_or_else(default_workers));
            c.dump = Some(*dump);
            c.require_format(&[Json])?;
            if *trials == 0 {
                return Err(Error::InvalidArgument("--trials must be at least 1".into()));
            }
            if c.workers == Some(0) {
                return Err(Error::InvalidArgument("--workers must be at least 1".into()));
            }
            c
        }
        Command::Simplex { common, n, method } => {
            let mut c = RunConfig::base("simplex", common, Rational, Json);
            c.n = Some(*n);
            c.method = Some(*method);
            c.require_format(&[Json])?;
            c
        }
        Command::Sweep { common, n_max, strategy, optimal } => {
            let mut c = RunConfig::base("sweep", common, Float, Csv);
            c.n_min = Some(1);
            c.n_max = Some(*n_max);
            c.optimal = Some(*optimal);
            if !optimal {
                c.strategy = Some(strategy.strategy.clone());
                c.tie = Some(strategy.tie);
            }
            c.require_format(&[Json, Csv])?;
            c
        }
    };
    // every subcommand needs a valid channel; fail before doing any work
    cfg.channels()?;
    Ok(cfg)
}

/// What a run produced: the document body and, when a check failed, why.
#[derive(Debug)]
pub struct Outcome {
    pub body: String,
    pub check_failure: Option<String>,
}

fn document(cfg: &RunConfig, result: impl Serialize) -> Result<String> {
    let doc = json!({ "config": cfg, "result": result });
    Ok(serde_json::to_string_pretty(&doc)? + "\n")
}

fn passed(body: String) -> Outcome {
    Outcome { body, check_failure: None }
}

/// Runs one validated configuration.
pub fn dispatch(cmd: &Command, cfg: &RunConfig) -> Result<Outcome> {
    let mode = cfg.arithmetic();
    Ok(match cmd {
        Command::Bounds { .. } => {
            if cfg.format == FormatArg::Csv {
                let lo = cfg.n_min.unwrap_or(1);
                let ns: Vec<usize> = (lo..=cfg.n_max.unwrap()).collect();
                passed(bounds::bounds_sweep_csv(&cfg.channels()?, &ns)?)
            } else {
                passed(document(cfg, bounds::bound_report(&cfg.channel()?, cfg.n)?)?)
            }
        }
        Command::Exact { n, .. } => {
            let r = dp::forward_error_prob(*n, &cfg.channel()?, &cfg.rule()?, mode)?;
            passed(document(cfg, r)?)
        }
        Command::Bellman { n, .. } => {
            let law = match cfg.probability_mode {
                Some(LawArg::Paper) => ProbabilityMode::Paper,
                _ => ProbabilityMode::Bayes,
            };
            let (pe, table) = dp::bellman_optimum(*n, &cfg.channel()?, mode, law)?;
            let ln_pe = table.optimal_ln_error(*n);
            passed(document(cfg, json!({ "pe": pe, "ln_pe": ln_pe, "table": table.summary() }))?)
        }
        Command::VerifyTheorem2 { n, .. } => passed(document(cfg, dp::verify_theorem2(*n, &cfg.channel()?, mode)?)?),
        Command::Octopus { depth, verify, .. } => {
            let ch = cfg.channel()?;
            if *verify {
                let v = octopus::verify_paper_transitions(&ch)?;
                let failure = (!v.all_match).then(|| {
                    let bad: Vec<&str> = v
                        .groups
                        .iter()
                        .filter(|g| g.verdict != octopus::Verdict::Match)
                        .map(|g| g.source.as_str())
                        .collect();
                    format!("transition groups differ from the reference table: {}", bad.join(", "))
                });
                Outcome { body: document(cfg, v)?, check_failure: failure }
            } else {
                let table = octopus::derive_transitions(&ch, *depth)?;
                match cfg.format {
                    FormatArg::Dot => {
                        let cfg_line = serde_json::to_string(cfg)?;
                        passed(format!("// config: {cfg_line}\n{}", octopus::export_dot(&table)))
                    }
                    _ => passed(document(cfg, octopus::table_to_json(&table))?),
                }
            }
        }
        Command::Paths { n, variant, .. } => {
            let ch = cfg.channel()?;
            let variant = match variant {
                VariantArg::Restricted => SeriesVariant::Restricted,
                VariantArg::ClosedForm => SeriesVariant::ClosedForm,
            };
            let reach = octopus::reach_prob(*n, &ch, mode, None)?;
            let basic = octopus::series_basic(*n, &ch, variant, mode)?;
            let loops = octopus::series_with_loops(*n, &ch, variant, mode)?;
            passed(document(cfg, json!({ "reach_prob": reach, "basic": basic, "with_loops": loops }))?)
        }
        Command::Simulate { n, dump_path, .. } => {
            let ch = cfg.channel()?;
            let rule = cfg.rule()?;
            let seed = cfg.seed.unwrap();
            let stats = montecarlo::run_trials(*n, &ch, &rule, cfg.trials.unwrap(), seed, cfg.workers.unwrap())?;
            let dump = cfg.dump.unwrap_or(0);
            if dump > 0 {
                let path = dump_path
                    .clone()
                    .or_else(|| cfg.output.as_ref().map(|o| sidecar(o, "trajectories.jsonl")))
                    .ok_or_else(|| Error::InvalidArgument("--dump needs --dump-path or --output".into()))?;
                fs::write(path, montecarlo::trajectory_dump(*n, &ch, &rule, seed, dump)?)?;
            }
            let failure = match stats.invariant_violations {
                Some(v) if v > 0 => Some(format!("{v} trajectory invariant violations")),
                _ => None,
            };
            Outcome { body: document(cfg, &stats)?, check_failure: failure }
        }
        Command::Simplex { n, method, .. } => {
            let ch = cfg.channel()?;
            let method = match method {
                MethodArg::BlockSum => SimplexMethod::BlockSum,
                MethodArg::Enumeration => SimplexMethod::Enumeration,
            };
            let event = bounds::simplex_event_prob(*n, &ch, method, ch.is_exact())?;
            let asymptote = if ch.is_degenerate() { None } else { Some(bounds::simplex_asymptote(&ch)?) };
            passed(document(cfg, json!({ "event": event, "asymptote": asymptote }))?)
        }
        Command::Sweep { n_max, optimal, .. } => {
            let ch = cfg.channel()?;
            let target = if *optimal { CurveTarget::Optimal } else { CurveTarget::Rule(cfg.rule()?) };
            let rows = dp::error_curve(&ch, &target, *n_max, mode)?;
            match cfg.format {
                FormatArg::Csv => passed(dp::curve_csv(&ch, &rows)),
                _ => passed(document(cfg, rows)?),
            }
        }
    })
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".");
    s.push(suffix);
    PathBuf::from(s)
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::ResourceCap { .. } => EXIT_RESOURCE,
        Error::CheckFailed(_) => EXIT_CHECK,
        Error::Io(_) => EXIT_IO,
        Error::Json(_) => EXIT_INTERNAL,
        _ => EXIT_USAGE,
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::BadProbability { .. } => "bad-probability",
        Error::ProbabilityOutOfRange(_) => "probability-out-of-range",
        Error::SamplingExactChannel => "sampling-exact-channel",
        Error::NotRational => "not-rational",
        Error::TiedLeader(_) => "tied-leader",
        Error::MissingTableEntry(_) => "missing-table-entry",
        Error::BadTable(_) => "bad-table",
        Error::ResourceCap { .. } => "resource-cap",
        Error::DepthTooShallow { .. } => "depth-too-shallow",
        Error::NotDivisibleBy3(_) => "not-divisible-by-3",
        Error::InvalidArgument(_) => "invalid-argument",
        Error::CheckFailed(_) => "check-failed",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    }
}

/// One-line JSON diagnostic for standard error.
pub fn diagnostic(kind: &str, message: &str, code: i32) -> String {
    json!({ "error": { "kind": kind, "message": message, "exit_code": code } }).to_string()
}

/// Result of a complete invocation.
#[derive(Debug)]
pub struct Execution {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

fn emit(cfg: &RunConfig, body: &str) -> Result<String> {
    match &cfg.output {
        None => Ok(body.to_string()),
        Some(path) => {
            fs::write(path, body)?;
            if cfg.format == FormatArg::Csv {
                fs::write(sidecar(path, "config.json"), serde_json::to_string_pretty(cfg)? + "\n")?;
            }
            Ok(String::new())
        }
    }
}

/// Parses arguments, runs the command and writes any output files.
pub fn execute<I, T>(args: I) -> Execution
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            let rendered = e.render().to_string();
            return if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                Execution { code: EXIT_OK, stdout: rendered, stderr: String::new() }
            } else {
                let diag = diagnostic("usage", rendered.lines().next().unwrap_or("usage error"), EXIT_USAGE);
                Execution { code: EXIT_USAGE, stdout: String::new(), stderr: format!("{diag}\n{rendered}") }
            };
        }
    };
    let fail = |e: Error| {
        let code = exit_code(&e);
        Execution { code, stdout: String::new(), stderr: diagnostic(error_kind(&e), &e.to_string(), code) + "\n" }
    };
    let cfg = match configure(&cli.command) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let outcome = match dispatch(&cli.command, &cfg) {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    let stdout = match emit(&cfg, &outcome.body) {
        Ok(s) => s,
        Err(e) => return fail(e),
    };
    match outcome.check_failure {
        None => Execution { code: EXIT_OK, stdout, stderr: String::new() },
        Some(msg) => Execution { code: EXIT_CHECK, stdout, stderr: diagnostic("check-failed", &msg, EXIT_CHECK) + "\n" },
    }
}

/// Reads a JSON document and renders it again in the form the CLI writes.
pub fn reserialize_json(text: &str) -> Result<String> {
    let v: Value = serde_json::from_str(text)?;
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(args: &[&str]) -> Execution {
        execute(std::iter::once("fblab").chain(args.iter().copied()))
    }

    #[test]
    fn exact_one_step() {
        let e = run(&["exact", "--p", "1/10", "--n", "1", "--strategy", "max-posterior", "--mode", "rational"]);
        assert_eq!(e.code, EXIT_OK, "{}", e.stderr);
        let v: Value = serde_json::from_str(&e.stdout).unwrap();
        assert_eq!(v["result"]["pe"], json!({"num": "2", "den": "5"}));
        assert_eq!(v["config"]["subcommand"], "exact");
    }

    #[test]
    fn bad_probability_is_a_usage_error() {
        let e = run(&["bounds", "--p", "0.7"]);
        assert_eq!(e.code, EXIT_USAGE);
        let d: Value = serde_json::from_str(e.stderr.trim()).unwrap();
        assert_eq!(d["error"]["kind"], "probability-out-of-range");
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        let e = run(&["bounds", "--p", "1/10", "--bogus"]);
        assert_eq!(e.code, EXIT_USAGE);
        assert!(e.stderr.starts_with("{\"error\""));
    }

    #[test]
    fn resource_cap_has_its_own_code() {
        let e = run(&["octopus", "--p", "1/10", "--format", "csv"]);
        assert_eq!(e.code, EXIT_USAGE);
        let e = run(&["bellman", "--p", "1/10", "--n", "2000"]);
        assert_eq!(e.code, EXIT_RESOURCE);
    }

    #[test]
    fn rational_simulation_is_rejected() {
        let e = run(&["simulate", "--p", "1/10", "--n", "3", "--mode", "rational", "--trials", "10"]);
        assert_eq!(e.code, EXIT_USAGE);
        assert!(e.stderr.contains("sampling-exact-channel"));
    }

    #[test]
    fn sidecar_names() {
        assert_eq!(sidecar(Path::new("out/curve.csv"), "config.json"), PathBuf::from("out/curve.csv.config.json"));
    }
}
