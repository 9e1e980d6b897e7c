//! The `edfeas` command line: `check`, `gen` and `bench`.
//!
//! Everything is driven through [`run`], which takes the argument vector and
//! two sinks and returns the process exit code, so the binary is a thin
//! wrapper and the tests can call the same path in-process.
//!
//! Exit codes: 0 feasible, 1 infeasible, 2 unknown, 64 usage error, 65 bad
//! input or parameters, 70 internal limit or inconsistency, 74 I/O error.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use edf_bench::{
    aggregate, cell_summaries, emit_csv, materialize, run_records, write_csv, write_set_log, BenchError, Experiment,
    ExperimentConfig, DEFAULT_PD_CAP,
};
use edf_core::feasibility::{test_all_approx, test_dynamic, test_processor_demand, test_superpos};
use edf_core::generator::{gen_taskset, GenError, GenParams, PeriodDistribution};
use edf_core::rational::{self, to_f64, Rational};
use edf_core::{parse_taskset, test_devi, test_liu_layland, AnalysisError, Outcome, TaskSet, Ticks, Verdict};
use edf_oracle::{oracle_dbf_scan, oracle_edf_sim, oracle_horizon, OracleError};
use serde::{Deserialize, Serialize};

pub const EXIT_FEASIBLE: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 1;
pub const EXIT_UNKNOWN: i32 = 2;
pub const EXIT_USAGE: i32 = 64;
pub const EXIT_DATA: i32 = 65;
pub const EXIT_SOFTWARE: i32 = 70;
pub const EXIT_IO: i32 = 74;

/// `check --test all` skips the oracles above this simulated window.
pub const ORACLE_WINDOW_LIMIT: Ticks = 10_000_000;

const AFTER_HELP: &str = "\
Exit codes: 0 feasible, 1 infeasible, 2 unknown, 64 usage error, 65 bad input or
parameters, 70 internal limit or inconsistency, 74 I/O error.

Random sets: ChaCha8 (rand_chacha 0.3) keyed with seed_from_u64(seed), stream
number = set index. Set <seed>-<index> is reproducible on any platform.";

#[derive(Debug, Parser)]
#[command(name = "edfeas", version, about = "Exact feasibility analysis for uniprocessor EDF", after_help = AFTER_HELP)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyze one task file.
    Check(CheckArgs),
    /// Generate random task files.
    Gen(GenArgs),
    /// Run an iteration-count experiment and write CSV.
    Bench(BenchArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TestName {
    /// Utilization bound (implicit deadlines only).
    Ll,
    /// Devi's sufficient test.
    Devi,
    /// Superposition at a fixed level (see --level).
    Superpos,
    /// Superposition at level 1.
    Superpos1,
    /// Processor demand test.
    Pd,
    /// Dynamic error test (see --level-cap).
    Dynamic,
    /// All approximated test.
    Allapprox,
    /// Brute-force demand scan to hyperperiod + max deadline.
    OracleScan,
    /// EDF simulation to hyperperiod + max deadline.
    OracleSim,
    /// Every applicable test plus a consistency check.
    All,
}

impl TestName {
    pub fn name(self) -> &'static str {
        match self {
            TestName::Ll => "ll",
            TestName::Devi => "devi",
            TestName::Superpos => "superpos",
            TestName::Superpos1 => "superpos1",
            TestName::Pd => "pd",
            TestName::Dynamic => "dynamic",
            TestName::Allapprox => "allapprox",
            TestName::OracleScan => "oracle-scan",
            TestName::OracleSim => "oracle-sim",
            TestName::All => "all",
        }
    }

    fn is_exact(self) -> bool {
        matches!(self, TestName::Pd | TestName::Dynamic | TestName::Allapprox)
    }

    fn is_oracle(self) -> bool {
        matches!(self, TestName::OracleScan | TestName::OracleSim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    /// Task file (JSON: {"name": ..., "tasks": [{"c": .., "d": .., "t": ..}]}).
    pub file: PathBuf,
    #[arg(long = "test", value_enum, default_value_t = TestName::Pd)]
    pub test: TestName,
    /// Approximation level for --test superpos (default 1).
    #[arg(long)]
    pub level: Option<u64>,
    /// Highest level --test dynamic may reach (default: unbounded).
    #[arg(long = "level-cap")]
    pub level_cap: Option<u64>,
    /// Print intervals_checked, level_reached, revisions and horizon_used.
    #[arg(long)]
    pub stats: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

fn parse_rational(text: &str) -> Result<Rational, String> {
    rational::parse(text).ok_or_else(|| format!("not a number or fraction: {text:?}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Periods {
    LogUniform,
    Uniform,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 1)]
    pub count: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "n-min", default_value_t = 5)]
    pub n_min: usize,
    #[arg(long = "n-max", default_value_t = 100)]
    pub n_max: usize,
    /// Lowest target utilization, decimal or fraction.
    #[arg(long = "u-min", default_value = "0.90", value_parser = parse_rational)]
    pub u_min: Rational,
    /// Highest target utilization, decimal or fraction.
    #[arg(long = "u-max", default_value = "0.99", value_parser = parse_rational)]
    pub u_max: Rational,
    /// Mean relative gap (T - D) / T; per-task gaps are uniform on [0, 2 * gap].
    #[arg(long, default_value_t = 0.2)]
    pub gap: f64,
    /// Draw each set's mean gap uniformly from [gap, gap-max].
    #[arg(long = "gap-max")]
    pub gap_max: Option<f64>,
    #[arg(long = "t-min", default_value_t = 1_000)]
    pub t_min: Ticks,
    #[arg(long = "t-max", default_value_t = 1_000_000)]
    pub t_max: Ticks,
    #[arg(long, value_enum, default_value_t = Periods::LogUniform)]
    pub periods: Periods,
    /// Re-create one set of a bench experiment instead (needs --index).
    #[arg(long, requires = "index")]
    pub experiment: Option<String>,
    /// Set index within the experiment given by --experiment.
    #[arg(long, requires = "experiment")]
    pub index: Option<u64>,
    #[arg(long = "out-dir", default_value = ".")]
    pub out_dir: PathBuf,
}

impl GenArgs {
    pub fn params(&self) -> GenParams {
        GenParams {
            n_min: self.n_min,
            n_max: self.n_max,
            u_min: self.u_min.clone(),
            u_max: self.u_max.clone(),
            gap_avg: self.gap,
            gap_avg_max: self.gap_max,
            t_min: self.t_min,
            t_max: self.t_max,
            periods: match self.periods {
                Periods::LogUniform => PeriodDistribution::LogUniform,
                Periods::Uniform => PeriodDistribution::Uniform,
            },
            seed: self.seed,
            count: self.count,
        }
    }
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// utilization or period-ratio.
    #[arg(long)]
    pub experiment: String,
    /// Sets per cell (default 600 for utilization, 200 for period-ratio).
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..=1_000_000))]
    pub sets: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// CSV destination; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads (default: available parallelism). Output does not depend on it.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: Option<u64>,
    /// Stop processor demand after this many intervals and exclude the set
    /// (default 100000000 for period-ratio, none for utilization).
    #[arg(long = "pd-iteration-cap")]
    pub pd_iteration_cap: Option<u64>,
    /// Add oracle-scan and oracle-sim rows.
    #[arg(long)]
    pub oracles: bool,
    /// Also write the per-set results as CSV.
    #[arg(long = "set-log")]
    pub set_log: Option<PathBuf>,
}

/// Machine-readable result of one test, as printed by `check --format json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckReport {
    pub test: TestName,
    #[serde(flatten)]
    pub verdict: Verdict,
}

/// Result of `check --test all`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub results: Vec<CheckReport>,
    /// Tests that could not run, with the reason.
    pub skipped: Vec<(TestName, String)>,
    pub consistent: bool,
    pub problems: Vec<String>,
}

/// A failure with its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<AnalysisError> for Failure {
    fn from(e: AnalysisError) -> Self {
        let code = match e {
            AnalysisError::DeadlineNotPeriod { .. } => EXIT_DATA,
            AnalysisError::InvalidLevel => EXIT_USAGE,
            AnalysisError::Horizon(_) | AnalysisError::HorizonTooLarge => EXIT_SOFTWARE,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        Failure::new(EXIT_SOFTWARE, e.to_string())
    }
}

impl From<GenError> for Failure {
    fn from(e: GenError) -> Self {
        Failure::new(EXIT_DATA, e.to_string())
    }
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        let code = match e {
            BenchError::Io { .. } | BenchError::Csv { .. } => EXIT_IO,
            BenchError::EmptyRows | BenchError::Pool(_) => EXIT_SOFTWARE,
            BenchError::SetsPerCell(_) | BenchError::UnknownExperiment(_) => EXIT_USAGE,
            BenchError::UnknownIndex(_) | BenchError::Generator(_) => EXIT_DATA,
        };
        Failure::new(code, e.to_string())
    }
}

fn outcome_code(outcome: Outcome) -> i32 {
    match outcome {
        Outcome::Feasible => EXIT_FEASIBLE,
        Outcome::Infeasible => EXIT_INFEASIBLE,
        Outcome::Unknown => EXIT_UNKNOWN,
    }
}

/// Runs one named test (not `all`).
pub fn run_test(ts: &TaskSet, test: TestName, level: Option<u64>, level_cap: Option<u64>) -> Result<Verdict, Failure> {
    Ok(match test {
        TestName::Ll => test_liu_layland(ts)?,
        TestName::Devi => test_devi(ts),
        TestName::Superpos => test_superpos(ts, level.unwrap_or(1))?,
        TestName::Superpos1 => test_superpos(ts, 1)?,
        TestName::Pd => test_processor_demand(ts)?,
        TestName::Dynamic => test_dynamic(ts, level_cap)?,
        TestName::Allapprox => test_all_approx(ts)?,
        TestName::OracleScan => oracle_dbf_scan(ts)?,
        TestName::OracleSim => oracle_edf_sim(ts)?,
        TestName::All => return Err(Failure::new(EXIT_USAGE, "`all` is not a single test")),
    })
}

/// Runs every applicable test and cross-checks the verdicts.
pub fn check_all(ts: &TaskSet) -> ConsistencyReport {
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    let oracle_window = oracle_horizon(ts);
    for test in [
        TestName::Ll,
        TestName::Devi,
        TestName::Superpos1,
        TestName::Pd,
        TestName::Dynamic,
        TestName::Allapprox,
        TestName::OracleScan,
        TestName::OracleSim,
    ] {
        if test.is_oracle() {
            match oracle_window {
                Ok(w) if w <= ORACLE_WINDOW_LIMIT => {}
                Ok(w) => {
                    skipped.push((test, format!("window {w} above {ORACLE_WINDOW_LIMIT}")));
                    continue;
                }
                Err(ref e) => {
                    skipped.push((test, e.to_string()));
                    continue;
                }
            }
        }
        match run_test(ts, test, None, None) {
            Ok(verdict) => results.push(CheckReport { test, verdict }),
            Err(f) => skipped.push((test, f.message)),
        }
    }

    let mut problems = Vec::new();
    let exact: Vec<&CheckReport> = results.iter().filter(|r| r.test.is_exact()).collect();
    let reference = exact.first().map(|r| &r.verdict);
    if let Some(reference) = reference {
        for r in &results {
            let v = &r.verdict;
            if r.test.is_exact() || r.test == TestName::OracleScan {
                if (v.outcome, v.witness) != (reference.outcome, reference.witness) {
                    problems.push(format!("{} gives {v}, {} gives {reference}", r.test.name(), exact[0].test.name()));
                }
            } else if r.test == TestName::OracleSim {
                if v.outcome != reference.outcome || v.witness.zip(reference.witness).is_some_and(|(m, w)| m > w) {
                    problems.push(format!("oracle-sim gives {v}, {} gives {reference}", exact[0].test.name()));
                }
            } else if v.is_feasible() && !reference.is_feasible() {
                problems.push(format!("{} accepts a set the exact tests reject", r.test.name()));
            } else if v.is_infeasible() && !reference.is_infeasible() {
                problems.push(format!("{} rejects a set the exact tests accept", r.test.name()));
            }
        }
    } else {
        problems.push("no exact test could run".to_string());
    }
    let find = |t: TestName| results.iter().find(|r| r.test == t).map(|r| r.verdict.outcome);
    if find(TestName::Devi) == Some(Outcome::Feasible) && find(TestName::Superpos1) != Some(Outcome::Feasible) {
        problems.push("devi accepts a set superpos1 does not".to_string());
    }
    ConsistencyReport { consistent: problems.is_empty(), results, skipped, problems }
}

fn stats_lines(v: &Verdict) -> String {
    let s = &v.stats;
    let horizon = s.horizon_used.map_or("none".to_string(), |h| h.to_string());
    let mut out = format!(
        "intervals_checked={}\nlevel_reached={}\nrevisions={}\nhorizon_used={horizon}\n",
        s.intervals_checked, s.level_reached, s.revisions
    );
    if s.truncated {
        out.push_str("truncated=true\n");
    }
    out
}

fn read_taskset(path: &Path) -> Result<TaskSet, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::new(EXIT_IO, format!("{}: {e}", path.display())))?;
    parse_taskset(&text).map_err(|e| Failure::new(EXIT_DATA, format!("{}: {e}", path.display())))
}

pub fn cmd_check(args: &CheckArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    if args.level.is_some() && args.test != TestName::Superpos {
        return Err(Failure::new(EXIT_USAGE, "--level is only valid with --test superpos"));
    }
    if args.level_cap.is_some() && args.test != TestName::Dynamic {
        return Err(Failure::new(EXIT_USAGE, "--level-cap is only valid with --test dynamic"));
    }
    if args.level == Some(0) || args.level_cap == Some(0) {
        return Err(Failure::new(EXIT_USAGE, "approximation levels start at 1"));
    }
    let ts = read_taskset(&args.file)?;
    let io = |e: std::io::Error| Failure::new(EXIT_IO, e.to_string());

    if args.test == TestName::All {
        let report = check_all(&ts);
        match args.format {
            Format::Json => {
                writeln!(out, "{}", serde_json::to_string(&report).expect("report serializes")).map_err(io)?
            }
            Format::Text => {
                let mut text = String::new();
                for r in &report.results {
                    let s = &r.verdict.stats;
                    let witness = r.verdict.witness.map_or("-".to_string(), |w| w.to_string());
                    text += &format!(
                        "{:<12} {:<10} witness={:<8} intervals_checked={} level_reached={} revisions={}\n",
                        r.test.name(),
                        r.verdict.outcome.to_string(),
                        witness,
                        s.intervals_checked,
                        s.level_reached,
                        s.revisions
                    );
                }
                for (test, why) in &report.skipped {
                    text += &format!("{:<12} skipped    {why}\n", test.name());
                }
                for p in &report.problems {
                    text += &format!("inconsistent: {p}\n");
                }
                text += if report.consistent { "consistent: yes\n" } else { "consistent: no\n" };
                out.write_all(text.as_bytes()).map_err(io)?;
            }
        }
        if !report.consistent {
            return Ok(EXIT_SOFTWARE);
        }
        let exact = report.results.iter().find(|r| r.test.is_exact()).expect("consistent implies an exact verdict");
        return Ok(outcome_code(exact.verdict.outcome));
    }

    let verdict = run_test(&ts, args.test, args.level, args.level_cap)?;
    let code = outcome_code(verdict.outcome);
    match args.format {
        Format::Json => {
            let report = CheckReport { test: args.test, verdict };
            writeln!(out, "{}", serde_json::to_string(&report).expect("report serializes")).map_err(io)?;
        }
        Format::Text => {
            let mut text = format!("{}: {verdict}\n", args.test.name());
            if args.stats {
                text += &stats_lines(&verdict);
            }
            out.write_all(text.as_bytes()).map_err(io)?;
        }
    }
    Ok(code)
}

pub fn cmd_gen(args: &GenArgs, out: &mut dyn Write) -> Result<i32, Failure> {
    let io_at = |path: &Path| {
        let path = path.display().to_string();
        move |e: std::io::Error| Failure::new(EXIT_IO, format!("{path}: {e}"))
    };
    let sets: Vec<TaskSet> = match (&args.experiment, args.index) {
        (Some(name), Some(index)) => {
            vec![materialize(Experiment::parse(name)?, args.seed, index)?.with_name(format!("{}-{}", args.seed, index))]
        }
        _ => {
            let params = args.params();
            params.validate()?;
            (0..args.count).map(|i| gen_taskset(&params, i).map(|g| g.taskset)).collect::<Result<_, _>>()?
        }
    };
    fs::create_dir_all(&args.out_dir).map_err(io_at(&args.out_dir))?;
    let mut utilizations = Vec::with_capacity(sets.len());
    for ts in &sets {
        let path = args.out_dir.join(format!("{}.json", ts.name().expect("generated sets are named")));
        fs::write(&path, ts.to_json_pretty() + "\n").map_err(io_at(&path))?;
        utilizations.push(to_f64(&ts.utilization()));
    }
    if !utilizations.is_empty() {
        let min = utilizations.iter().copied().fold(f64::INFINITY, f64::min);
        let max = utilizations.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mean = utilizations.iter().sum::<f64>() / utilizations.len() as f64;
        writeln!(
            out,
            "wrote {} sets to {}; realized utilization min={min:.6} mean={mean:.6} max={max:.6}",
            sets.len(),
            args.out_dir.display()
        )
        .map_err(io_at(&args.out_dir))?;
    }
    Ok(0)
}

pub fn cmd_bench(args: &BenchArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let experiment = Experiment::parse(&args.experiment)?;
    let default_sets = match experiment {
        Experiment::Utilization => 600,
        Experiment::PeriodRatio => 200,
    };
    let default_cap = match experiment {
        Experiment::Utilization => None,
        Experiment::PeriodRatio => Some(DEFAULT_PD_CAP),
    };
    let cfg = ExperimentConfig {
        jobs: args.jobs.map(|j| j as usize),
        pd_iteration_cap: args.pd_iteration_cap.or(default_cap),
        oracles: args.oracles,
        ..ExperimentConfig::new(args.sets.unwrap_or(default_sets), args.seed)
    };
    let records = run_records(experiment, &cfg)?;
    if let Some(path) = &args.set_log {
        write_set_log(&records, path)?;
    }
    let rows = aggregate(&records);
    let io = |e: std::io::Error| Failure::new(EXIT_IO, e.to_string());
    let summary: &mut dyn Write = match &args.out {
        Some(path) => {
            emit_csv(&rows, path)?;
            out
        }
        None => {
            write_csv(&rows, &mut *out).map_err(|e| Failure::new(EXIT_IO, e.to_string()))?;
            err
        }
    };
    for line in cell_summaries(&rows) {
        writeln!(summary, "{line}").map_err(io)?;
    }
    Ok(0)
}

/// Parses `argv` (including the program name), runs the command and returns
/// the exit code. Diagnostics go to `err`.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { err.write_all(text.as_bytes()) } else { out.write_all(text.as_bytes()) };
            return code;
        }
    };
    let result = match &cli.command {
        Command::Check(args) => cmd_check(args, out),
        Command::Gen(args) => cmd_gen(args, out),
        Command::Bench(args) => cmd_bench(args, out, err),
    };
    match result {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "edfeas: {}", f.message);
            f.code
        }
    }
}
