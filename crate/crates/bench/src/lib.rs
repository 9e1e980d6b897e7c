//! Iteration-count experiments over random task sets.
//!
//! Two sweeps are provided. The utilization experiment varies the average
//! deadline gap at high load; the period-ratio experiment varies
//! `t_max / t_min` over four orders of magnitude. Every set is run through
//! each algorithm, and the per-set results are reduced into one
//! [`ExperimentRow`] per (cell, algorithm).
//!
//! Set `i` of cell `c` is generator index `c * 1_000_000 + i` of that cell's
//! parameter block, so any outlier can be re-created with [`materialize`].
//! Work is spread over a rayon pool; results are collected in index order, so
//! the output does not depend on the number of threads.

use std::fmt;
use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use edf_core::feasibility::{test_all_approx_with, test_dynamic_with, test_processor_demand_with, test_superpos_with};
use edf_core::generator::{gen_taskset, GenError, GenParams};
use edf_core::rational::{ratio, to_f64};
use edf_core::{test_devi, Options, Outcome, TaskSet, Ticks, Verdict};
use edf_oracle::{oracle_dbf_scan, oracle_edf_sim, oracle_horizon};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CSV_HEADER: [&str; 9] = [
    "experiment",
    "param",
    "algorithm",
    "sets",
    "avg_iterations",
    "max_iterations",
    "accept_rate",
    "infeasible_rate",
    "excluded",
];

/// Sets per cell are addressed as `cell * INDEX_STRIDE + i`.
pub const INDEX_STRIDE: u64 = 1_000_000;

pub const UTILIZATION_GAPS: [f64; 3] = [0.2, 0.3, 0.4];
pub const PERIOD_RATIOS: [u64; 5] = [100, 1_000, 10_000, 100_000, 1_000_000];

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("no rows to write")]
    EmptyRows,
    #[error("sets per cell must lie in 1..={INDEX_STRIDE}, got {0}")]
    SetsPerCell(u64),
    #[error("unknown experiment {0:?} (expected utilization or period-ratio)")]
    UnknownExperiment(String),
    #[error("set index {0} is outside the experiment's cells")]
    UnknownIndex(u64),
    #[error(transparent)]
    Generator(#[from] GenError),
    #[error("thread pool: {0}")]
    Pool(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Experiment {
    #[serde(rename = "utilization")]
    Utilization,
    #[serde(rename = "period-ratio")]
    PeriodRatio,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Utilization => "utilization",
            Experiment::PeriodRatio => "period-ratio",
        }
    }

    pub fn parse(name: &str) -> Result<Self, BenchError> {
        match name {
            "utilization" => Ok(Experiment::Utilization),
            "period-ratio" => Ok(Experiment::PeriodRatio),
            other => Err(BenchError::UnknownExperiment(other.to_string())),
        }
    }

    pub fn cells(self) -> usize {
        match self {
            Experiment::Utilization => UTILIZATION_GAPS.len(),
            Experiment::PeriodRatio => PERIOD_RATIOS.len(),
        }
    }

    /// Sweep value of a cell as it appears in the `param` column.
    pub fn param(self, cell: usize) -> String {
        match self {
            Experiment::Utilization => format!("{:.2}", UTILIZATION_GAPS[cell]),
            Experiment::PeriodRatio => PERIOD_RATIOS[cell].to_string(),
        }
    }

    /// Generator parameters of a cell; `count` is left at 1.
    pub fn cell_params(self, cell: usize, seed: u64) -> GenParams {
        let base = GenParams { n_min: 5, n_max: 100, seed, count: 1, ..GenParams::default() };
        match self {
            Experiment::Utilization => GenParams {
                u_min: ratio(90, 100),
                u_max: ratio(99, 100),
                gap_avg: UTILIZATION_GAPS[cell],
                t_min: UTILIZATION_T_MIN,
                t_max: UTILIZATION_T_MAX,
                ..base
            },
            Experiment::PeriodRatio => GenParams {
                u_min: ratio(90, 100),
                u_max: ratio(1, 1),
                gap_avg: 0.1,
                gap_avg_max: Some(0.5),
                t_min: RATIO_T_MIN,
                t_max: RATIO_T_MIN * PERIOD_RATIOS[cell],
                ..base
            },
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Period range of the utilization sweep.
pub const UTILIZATION_T_MIN: Ticks = 1_000;
pub const UTILIZATION_T_MAX: Ticks = 1_000_000;
/// Shortest period of the ratio sweep; the longest is this times the ratio.
pub const RATIO_T_MIN: Ticks = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "devi")]
    Devi,
    #[serde(rename = "superpos1")]
    SuperPos1,
    #[serde(rename = "pd")]
    ProcessorDemand,
    #[serde(rename = "dynamic")]
    Dynamic,
    #[serde(rename = "allapprox")]
    AllApprox,
    #[serde(rename = "oracle-scan")]
    OracleScan,
    #[serde(rename = "oracle-sim")]
    OracleSim,
}

impl Algorithm {
    pub const ANALYTIC: [Algorithm; 5] =
        [Algorithm::Devi, Algorithm::SuperPos1, Algorithm::ProcessorDemand, Algorithm::Dynamic, Algorithm::AllApprox];
    pub const ORACLES: [Algorithm; 2] = [Algorithm::OracleScan, Algorithm::OracleSim];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Devi => "devi",
            Algorithm::SuperPos1 => "superpos1",
            Algorithm::ProcessorDemand => "pd",
            Algorithm::Dynamic => "dynamic",
            Algorithm::AllApprox => "allapprox",
            Algorithm::OracleScan => "oracle-scan",
            Algorithm::OracleSim => "oracle-sim",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ANALYTIC.into_iter().chain(Self::ORACLES).find(|a| a.name() == name)
    }

    pub fn is_exact(self) -> bool {
        !matches!(self, Algorithm::Devi | Algorithm::SuperPos1)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub sets_per_cell: u64,
    pub seed: u64,
    /// Worker threads; `None` uses rayon's default (available parallelism).
    pub jobs: Option<usize>,
    /// Processor demand stops after this many intervals; the set is excluded.
    pub pd_iteration_cap: Option<u64>,
    /// Also run both oracles on sets whose oracle window fits the limit.
    pub oracles: bool,
    pub oracle_horizon_limit: Ticks,
}

impl ExperimentConfig {
    pub fn new(sets_per_cell: u64, seed: u64) -> Self {
        Self {
            sets_per_cell,
            seed,
            jobs: None,
            pd_iteration_cap: None,
            oracles: false,
            oracle_horizon_limit: 1_000_000,
        }
    }

    fn algorithms(&self) -> Vec<Algorithm> {
        let mut algs = Algorithm::ANALYTIC.to_vec();
        if self.oracles {
            algs.extend(Algorithm::ORACLES);
        }
        algs
    }
}

/// Default processor demand cap of the period-ratio sweep.
pub const DEFAULT_PD_CAP: u64 = 100_000_000;

/// Result of one algorithm on one set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetRecord {
    pub experiment: Experiment,
    pub param: String,
    pub index: u64,
    pub tasks: usize,
    pub algorithm: Algorithm,
    /// `None` when the algorithm produced no verdict (error or cap).
    pub outcome: Option<Outcome>,
    pub iterations: u64,
    pub truncated: bool,
}

impl SetRecord {
    pub fn excluded(&self) -> bool {
        self.outcome.is_none()
    }
}

/// One aggregated line of the experiment CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRow {
    pub experiment: String,
    pub param: String,
    pub algorithm: String,
    /// Sets with a verdict; excluded sets are not counted.
    pub sets: u64,
    pub avg_iterations: f64,
    pub max_iterations: u64,
    pub accept_rate: f64,
    pub infeasible_rate: f64,
    /// Sets without a verdict: horizon unavailable, oracle window too large,
    /// or an iteration cap reached.
    pub excluded: u64,
}

impl ExperimentRow {
    pub fn csv_fields(&self) -> [String; 9] {
        [
            self.experiment.clone(),
            self.param.clone(),
            self.algorithm.clone(),
            self.sets.to_string(),
            format!("{:.6}", self.avg_iterations),
            self.max_iterations.to_string(),
            format!("{:.6}", self.accept_rate),
            format!("{:.6}", self.infeasible_rate),
            self.excluded.to_string(),
        ]
    }
}

/// Runs one algorithm; `None` outcome means no verdict.
pub fn run_algorithm(alg: Algorithm, ts: &TaskSet, cfg: &ExperimentConfig) -> (Option<Outcome>, u64, bool) {
    let opts = Options { pd_iteration_cap: cfg.pd_iteration_cap, ..Options::default() };
    let oracle_fits = || oracle_horizon(ts).is_ok_and(|h| h <= cfg.oracle_horizon_limit);
    let verdict: Option<Verdict> = match alg {
        Algorithm::Devi => Some(test_devi(ts)),
        Algorithm::SuperPos1 => test_superpos_with(ts, 1, &opts).ok(),
        Algorithm::ProcessorDemand => test_processor_demand_with(ts, &opts).ok(),
        Algorithm::Dynamic => test_dynamic_with(ts, None, &opts).ok(),
        Algorithm::AllApprox => test_all_approx_with(ts, &opts).ok(),
        Algorithm::OracleScan => oracle_fits().then(|| oracle_dbf_scan(ts).ok()).flatten(),
        Algorithm::OracleSim => oracle_fits().then(|| oracle_edf_sim(ts).ok()).flatten(),
    };
    match verdict {
        Some(v) if v.stats.truncated => (None, v.stats.intervals_checked, true),
        Some(v) => (Some(v.outcome), v.stats.intervals_checked, false),
        None => (None, 0, false),
    }
}

/// Re-creates set `index` of an experiment.
pub fn materialize(experiment: Experiment, seed: u64, index: u64) -> Result<TaskSet, BenchError> {
    let cell = (index / INDEX_STRIDE) as usize;
    if cell >= experiment.cells() {
        return Err(BenchError::UnknownIndex(index));
    }
    Ok(gen_taskset(&experiment.cell_params(cell, seed), index)?.taskset)
}

/// Runs every set of every cell and returns the per-set records in
/// generation order (cell, set, algorithm).
pub fn run_records(experiment: Experiment, cfg: &ExperimentConfig) -> Result<Vec<SetRecord>, BenchError> {
    if cfg.sets_per_cell == 0 || cfg.sets_per_cell > INDEX_STRIDE {
        return Err(BenchError::SetsPerCell(cfg.sets_per_cell));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(jobs) = cfg.jobs {
        pool = pool.num_threads(jobs.max(1));
    }
    let pool = pool.build().map_err(|e| BenchError::Pool(e.to_string()))?;
    let algorithms = cfg.algorithms();
    let work: Vec<(usize, u64)> =
        (0..experiment.cells()).flat_map(|c| (0..cfg.sets_per_cell).map(move |i| (c, i))).collect();

    let per_set: Result<Vec<Vec<SetRecord>>, BenchError> = pool.install(|| {
        work.par_iter()
            .map(|&(cell, i)| {
                let params = experiment.cell_params(cell, cfg.seed);
                let index = cell as u64 * INDEX_STRIDE + i;
                let set = gen_taskset(&params, index)?;
                let param = experiment.param(cell);
                Ok(algorithms
                    .iter()
                    .map(|&alg| {
                        let (outcome, iterations, truncated) = run_algorithm(alg, &set.taskset, cfg);
                        SetRecord {
                            experiment,
                            param: param.clone(),
                            index,
                            tasks: set.taskset.len(),
                            algorithm: alg,
                            outcome,
                            iterations,
                            truncated,
                        }
                    })
                    .collect())
            })
            .collect()
    });
    Ok(per_set?.into_iter().flatten().collect())
}

/// Reduces per-set records to one row per (cell, algorithm), in order of
/// first appearance.
pub fn aggregate(records: &[SetRecord]) -> Vec<ExperimentRow> {
    let mut keys: Vec<(Experiment, &str, Algorithm)> = Vec::new();
    for r in records {
        let key = (r.experiment, r.param.as_str(), r.algorithm);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(experiment, param, algorithm)| {
            let group =
                records.iter().filter(|r| r.experiment == experiment && r.param == param && r.algorithm == algorithm);
            let (mut sets, mut total, mut max, mut accepted, mut rejected, mut excluded) =
                (0u64, 0u128, 0u64, 0u64, 0u64, 0u64);
            for r in group {
                match r.outcome {
                    None => excluded += 1,
                    Some(outcome) => {
                        sets += 1;
                        total += r.iterations as u128;
                        max = max.max(r.iterations);
                        accepted += (outcome == Outcome::Feasible) as u64;
                        rejected += (outcome == Outcome::Infeasible) as u64;
                    }
                }
            }
            let rate = |k: u64| if sets == 0 { 0.0 } else { k as f64 / sets as f64 };
            ExperimentRow {
                experiment: experiment.name().to_string(),
                param: param.to_string(),
                algorithm: algorithm.name().to_string(),
                sets,
                avg_iterations: if sets == 0 { 0.0 } else { total as f64 / sets as f64 },
                max_iterations: max,
                accept_rate: rate(accepted),
                infeasible_rate: rate(rejected),
                excluded,
            }
        })
        .collect()
}

pub fn run_experiment(experiment: Experiment, cfg: &ExperimentConfig) -> Result<Vec<ExperimentRow>, BenchError> {
    Ok(aggregate(&run_records(experiment, cfg)?))
}

/// Utilization sweep with default settings.
pub fn run_experiment_utilization(sets_per_cell: u64, seed: u64) -> Result<Vec<ExperimentRow>, BenchError> {
    run_experiment(Experiment::Utilization, &ExperimentConfig::new(sets_per_cell, seed))
}

/// Period-ratio sweep with default settings, including the processor demand cap.
pub fn run_experiment_period_ratio(sets_per_cell: u64, seed: u64) -> Result<Vec<ExperimentRow>, BenchError> {
    let cfg = ExperimentConfig { pd_iteration_cap: Some(DEFAULT_PD_CAP), ..ExperimentConfig::new(sets_per_cell, seed) };
    run_experiment(Experiment::PeriodRatio, &cfg)
}

/// Writes the CSV (header first) to any sink.
pub fn write_csv<W: Write>(rows: &[ExperimentRow], sink: W) -> Result<(), csv::Error> {
    let mut out = csv::Writer::from_writer(sink);
    out.write_record(CSV_HEADER)?;
    for row in rows {
        out.write_record(row.csv_fields())?;
    }
    out.flush()?;
    Ok(())
}

/// Writes the CSV to `path`. Empty input is an error and creates no file.
pub fn emit_csv(rows: &[ExperimentRow], path: &Path) -> Result<(), BenchError> {
    if rows.is_empty() {
        return Err(BenchError::EmptyRows);
    }
    let file = File::create(path).map_err(|source| BenchError::Io { path: path.to_path_buf(), source })?;
    write_csv(rows, io::BufWriter::new(file)).map_err(|source| BenchError::Csv { path: path.to_path_buf(), source })
}

/// Dumps per-set records as CSV for post-mortem and re-aggregation.
pub fn write_set_log(records: &[SetRecord], path: &Path) -> Result<(), BenchError> {
    let csv_err = |source| BenchError::Csv { path: path.to_path_buf(), source };
    let mut out = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in records {
        out.serialize(r).map_err(csv_err)?;
    }
    out.flush().map_err(|source| BenchError::Io { path: path.to_path_buf(), source })
}

pub fn read_set_log(path: &Path) -> Result<Vec<SetRecord>, BenchError> {
    let csv_err = |source| BenchError::Csv { path: path.to_path_buf(), source };
    let mut input = csv::Reader::from_path(path).map_err(csv_err)?;
    input.deserialize().collect::<Result<_, _>>().map_err(csv_err)
}

/// One line per cell comparing the exact tests, for console progress.
pub fn cell_summaries(rows: &[ExperimentRow]) -> Vec<String> {
    let mut params: Vec<&str> = Vec::new();
    for r in rows {
        if !params.contains(&r.param.as_str()) {
            params.push(&r.param);
        }
    }
    params
        .into_iter()
        .map(|param| {
            let cell: Vec<&ExperimentRow> = rows.iter().filter(|r| r.param == param).collect();
            let parts: Vec<String> = cell
                .iter()
                .map(|r| {
                    let flag = if r.excluded > 0 { format!(" excluded={}", r.excluded) } else { String::new() };
                    format!("{}={:.1}/{}{flag}", r.algorithm, r.avg_iterations, r.max_iterations)
                })
                .collect();
            let sets = cell.iter().map(|r| r.sets + r.excluded).max().unwrap_or(0);
            format!("{} {param}: sets={sets} avg/max {}", cell[0].experiment, parts.join(" "))
        })
        .collect()
}

/// Mean realized utilization of a cell, for reporting.
pub fn mean_utilization(experiment: Experiment, cell: usize, cfg: &ExperimentConfig) -> Result<f64, BenchError> {
    let params = experiment.cell_params(cell, cfg.seed);
    let mut total = 0.0;
    for i in 0..cfg.sets_per_cell {
        total += to_f64(&gen_taskset(&params, cell as u64 * INDEX_STRIDE + i)?.utilization);
    }
    Ok(total / cfg.sets_per_cell as f64)
}
