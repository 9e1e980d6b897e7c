//! The sporadic task model and the JSON task-file format.
//!
//! Tasks are released synchronously at time 0; there is no phase field.
//! All timing parameters are positive integer ticks.

use std::fmt;

use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rational::Rational;

/// Time instants and durations, in integer ticks.
pub type Ticks = u64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("empty set")]
    EmptySet,
    #[error("{field} must be positive at index {index}")]
    NonPositive { index: usize, field: &'static str },
    #[error("{field} does not fit in 64-bit ticks at index {index}")]
    TooLarge { index: usize, field: &'static str },
    #[error("wcet > period at index {index}")]
    WcetExceedsPeriod { index: usize },
    #[error("hyperperiod overflows 64-bit ticks")]
    HyperperiodOverflow,
}

/// One sporadic task `(C, D, T)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Task {
    /// Worst-case execution time `C`.
    #[serde(rename = "c")]
    pub wcet: Ticks,
    /// Relative deadline `D`; may be smaller than, equal to or larger than the period.
    #[serde(rename = "d")]
    pub deadline: Ticks,
    /// Minimal inter-release distance `T`.
    #[serde(rename = "t")]
    pub period: Ticks,
}

impl Task {
    pub const fn new(wcet: Ticks, deadline: Ticks, period: Ticks) -> Self {
        Self { wcet, deadline, period }
    }

    /// Specific utilization `C/T`.
    pub fn utilization(&self) -> Rational {
        Rational::new(self.wcet.into(), self.period.into())
    }

    fn validate(&self, index: usize) -> Result<(), ModelError> {
        for (field, value) in [("wcet", self.wcet), ("deadline", self.deadline), ("period", self.period)] {
            if value == 0 {
                return Err(ModelError::NonPositive { index, field });
            }
        }
        if self.wcet > self.period {
            return Err(ModelError::WcetExceedsPeriod { index });
        }
        Ok(())
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.wcet, self.deadline, self.period)
    }
}

/// A validated, non-empty, ordered collection of tasks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskSet {
    name: Option<String>,
    tasks: Vec<Task>,
}

impl TaskSet {
    pub fn new(tasks: Vec<Task>) -> Result<Self, ModelError> {
        if tasks.is_empty() {
            return Err(ModelError::EmptySet);
        }
        for (index, task) in tasks.iter().enumerate() {
            task.validate(index)?;
        }
        Ok(Self { name: None, tasks })
    }

    /// Shorthand for tests and examples: `TaskSet::from_triples(&[(c, d, t), ...])`.
    pub fn from_triples(triples: &[(Ticks, Ticks, Ticks)]) -> Result<Self, ModelError> {
        Self::new(triples.iter().map(|&(c, d, t)| Task::new(c, d, t)).collect())
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Task> {
        self.tasks.iter()
    }

    /// `U = Σ C_i/T_i`, exact.
    pub fn utilization(&self) -> Rational {
        self.tasks.iter().fold(Rational::zero(), |acc, t| acc + t.utilization())
    }

    /// Least common multiple of all periods.
    pub fn hyperperiod(&self) -> Result<Ticks, ModelError> {
        self.tasks.iter().try_fold(1u64, |acc, t| {
            let g = num_integer::gcd(acc, t.period);
            (acc / g).checked_mul(t.period).ok_or(ModelError::HyperperiodOverflow)
        })
    }

    pub fn max_deadline(&self) -> Ticks {
        self.tasks.iter().map(|t| t.deadline).max().unwrap_or(0)
    }

    pub fn all_implicit_deadlines(&self) -> bool {
        self.tasks.iter().all(|t| t.deadline == t.period)
    }

    /// Canonical task-file text.
    pub fn to_json(&self) -> String {
        let file = TaskFileRef { name: self.name.as_deref(), tasks: &self.tasks };
        serde_json::to_string(&file).expect("task file serialization cannot fail")
    }

    pub fn to_json_pretty(&self) -> String {
        let file = TaskFileRef { name: self.name.as_deref(), tasks: &self.tasks };
        serde_json::to_string_pretty(&file).expect("task file serialization cannot fail")
    }
}

impl<'a> IntoIterator for &'a TaskSet {
    type Item = &'a Task;
    type IntoIter = std::slice::Iter<'a, Task>;

    fn into_iter(self) -> Self::IntoIter {
        self.tasks.iter()
    }
}

#[derive(Serialize)]
struct TaskFileRef<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<&'a str>,
    tasks: &'a [Task],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTaskFile {
    #[serde(default)]
    name: Option<String>,
    tasks: Vec<RawTask>,
}

// Signed so that negative fields become validation errors with an index
// rather than opaque syntax errors.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTask {
    c: i128,
    d: i128,
    t: i128,
}

/// Parses and validates a task file.
pub fn parse_taskset(text: &str) -> Result<TaskSet, ModelError> {
    let raw: RawTaskFile = serde_json::from_str(text).map_err(|e| ModelError::Syntax(e.to_string()))?;
    if raw.tasks.is_empty() {
        return Err(ModelError::EmptySet);
    }
    let mut tasks = Vec::with_capacity(raw.tasks.len());
    for (index, t) in raw.tasks.iter().enumerate() {
        let field = |field: &'static str, value: i128| -> Result<Ticks, ModelError> {
            if value <= 0 {
                return Err(ModelError::NonPositive { index, field });
            }
            Ticks::try_from(value).map_err(|_| ModelError::TooLarge { index, field })
        };
        tasks.push(Task::new(field("wcet", t.c)?, field("deadline", t.d)?, field("period", t.t)?));
    }
    let set = TaskSet::new(tasks)?;
    Ok(match raw.name {
        Some(name) => set.with_name(name),
        None => set,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Feasible,
    Infeasible,
    Unknown,
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Outcome::Feasible => "feasible",
            Outcome::Infeasible => "infeasible",
            Outcome::Unknown => "unknown",
        })
    }
}

/// Work counters reported with every verdict.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationStats {
    /// Test intervals evaluated (the comparison metric between tests).
    pub intervals_checked: u64,
    /// Highest approximation level used; 1 for tests without levels.
    pub level_reached: u64,
    /// Approximations withdrawn.
    pub revisions: u64,
    /// Events strictly below this tick were in scope, when a horizon was used.
    pub horizon_used: Option<Ticks>,
    /// Set when an iteration cap stopped the test early.
    #[serde(default)]
    pub truncated: bool,
}

impl Default for IterationStats {
    fn default() -> Self {
        Self { intervals_checked: 0, level_reached: 1, revisions: 0, horizon_used: None, truncated: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub outcome: Outcome,
    /// First interval with demand above capacity; present iff infeasible
    /// was established by an interval check.
    pub witness: Option<Ticks>,
    pub stats: IterationStats,
}

impl Verdict {
    pub fn feasible(stats: IterationStats) -> Self {
        Self { outcome: Outcome::Feasible, witness: None, stats }
    }

    pub fn infeasible(witness: Option<Ticks>, stats: IterationStats) -> Self {
        Self { outcome: Outcome::Infeasible, witness, stats }
    }

    pub fn unknown(stats: IterationStats) -> Self {
        Self { outcome: Outcome::Unknown, witness: None, stats }
    }

    pub fn is_feasible(&self) -> bool {
        self.outcome == Outcome::Feasible
    }

    pub fn is_infeasible(&self) -> bool {
        self.outcome == Outcome::Infeasible
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.outcome)?;
        if let Some(w) = self.witness {
            write!(f, " witness={w}")?;
        }
        Ok(())
    }
}
