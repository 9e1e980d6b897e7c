//! Brute-force EDF feasibility oracles for small task sets.
//!
//! Nothing here calls into the demand algebra or the analytic tests of
//! `edf-core`; only the data model is shared. Both oracles walk the whole
//! synchronous schedule up to `hyperperiod + max deadline`, so they are meant
//! for sets whose hyperperiod is small.
//!
//! * [`oracle_dbf_scan`] evaluates the demand bound at every absolute
//!   deadline, recomputing the demand from scratch at each one.
//! * [`oracle_edf_sim`] simulates preemptive EDF on one processor and reports
//!   the first deadline miss.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use edf_core::{IterationStats, Task, TaskSet, Ticks, Verdict};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("hyperperiod exceeds the tick range")]
    HyperperiodOverflow,
}

/// Outcome of one simulation run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimTrace {
    /// Time and task index of the first job still unfinished at its deadline.
    pub first_miss: Option<(Ticks, usize)>,
    /// End of the simulated window.
    pub horizon: Ticks,
    /// Jobs released inside the window.
    pub jobs_released: u64,
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Least common multiple of the periods, computed without the model helpers.
pub fn hyperperiod(ts: &TaskSet) -> Result<Ticks, OracleError> {
    ts.iter().try_fold(1u64, |acc, task| {
        (acc / gcd(acc, task.period)).checked_mul(task.period).ok_or(OracleError::HyperperiodOverflow)
    })
}

/// `hyperperiod + max deadline`, the end of the window both oracles cover.
pub fn oracle_horizon(ts: &TaskSet) -> Result<Ticks, OracleError> {
    let dmax = ts.iter().map(|t| t.deadline).max().unwrap_or(0);
    hyperperiod(ts)?.checked_add(dmax).ok_or(OracleError::HyperperiodOverflow)
}

/// `Σ C/T > 1`, decided on reduced u128 fractions, falling back to the
/// model's exact sum when an intermediate does not fit.
fn exceeds_one(ts: &TaskSet) -> bool {
    let mut num: u128 = 0;
    let mut den: u128 = 1;
    for task in ts {
        let (c, t) = (task.wcet as u128, task.period as u128);
        let next =
            num.checked_mul(t).and_then(|a| c.checked_mul(den).and_then(|b| a.checked_add(b))).zip(den.checked_mul(t));
        match next {
            Some((n, d)) => {
                let g = gcd_u128(n, d);
                (num, den) = (n / g, d / g);
            }
            None => return ts.utilization() > edf_core::rational::ratio(1, 1),
        }
    }
    num > den
}

fn gcd_u128(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

fn overloaded_verdict() -> Verdict {
    Verdict::infeasible(None, IterationStats { intervals_checked: 1, ..IterationStats::default() })
}

/// Jobs of `task` released in `[0, interval]` that are also due by `interval`.
fn jobs_due_by(task: &Task, interval: Ticks) -> u64 {
    if interval < task.deadline {
        0
    } else {
        (interval - task.deadline) / task.period + 1
    }
}

/// Checks `demand(I) ≤ I` at every absolute deadline `I < hyperperiod + max D`.
///
/// The window end itself needs no check: the demand there is the demand at
/// `max D` plus `U·hyperperiod`, and `max D` is a deadline inside the window.
/// The witness is the smallest deadline with demand above capacity.
pub fn oracle_dbf_scan(ts: &TaskSet) -> Result<Verdict, OracleError> {
    if exceeds_one(ts) {
        return Ok(overloaded_verdict());
    }
    let horizon = oracle_horizon(ts)?;
    let mut stats = IterationStats { horizon_used: Some(horizon), ..IterationStats::default() };

    // Absolute deadlines in increasing order, one cursor per task.
    let mut heap: BinaryHeap<Reverse<(Ticks, usize)>> =
        ts.iter().enumerate().map(|(i, t)| Reverse((t.deadline, i))).collect();
    let mut last = None;
    while let Some(Reverse((deadline, i))) = heap.pop() {
        if deadline >= horizon {
            break;
        }
        let period = ts.tasks()[i].period;
        if let Some(next) = deadline.checked_add(period) {
            heap.push(Reverse((next, i)));
        }
        if last == Some(deadline) {
            continue;
        }
        last = Some(deadline);
        stats.intervals_checked += 1;
        let demand: u128 = ts.iter().map(|t| jobs_due_by(t, deadline) as u128 * t.wcet as u128).sum();
        if demand > deadline as u128 {
            return Ok(Verdict::infeasible(Some(deadline), stats));
        }
    }
    Ok(Verdict::feasible(stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Job {
    deadline: Ticks,
    release: Ticks,
    task: usize,
}

/// Simulates preemptive EDF from a synchronous release over
/// `[0, hyperperiod + max D)`.
///
/// Ties on the absolute deadline go to the earlier release, then to the lower
/// task index. Time advances from event to event (release, completion or
/// deadline), which is equivalent to running the schedule tick by tick since
/// every parameter is an integer.
pub fn simulate(ts: &TaskSet) -> Result<SimTrace, OracleError> {
    let horizon = oracle_horizon(ts)?;
    let tasks = ts.tasks();
    let mut next_release: Vec<Ticks> = vec![0; tasks.len()];
    let mut pending: BinaryHeap<Reverse<(Job, Ticks)>> = BinaryHeap::new();
    let mut jobs_released = 0u64;
    let mut now: Ticks = 0;

    while now < horizon {
        for (i, task) in tasks.iter().enumerate() {
            while next_release[i] <= now && next_release[i] < horizon {
                let release = next_release[i];
                let job = Job { deadline: release.saturating_add(task.deadline), release, task: i };
                pending.push(Reverse((job, task.wcet)));
                jobs_released += 1;
                next_release[i] = release.saturating_add(task.period);
            }
        }
        let upcoming = next_release.iter().copied().filter(|&r| r < horizon).min();

        let Some(Reverse((job, remaining))) = pending.pop() else {
            match upcoming {
                Some(r) => {
                    now = r;
                    continue;
                }
                None => break,
            }
        };
        let finish = now + remaining;
        let stop = upcoming.map_or(finish, |r| finish.min(r));
        if job.deadline < stop {
            return Ok(SimTrace { first_miss: Some((job.deadline, job.task)), horizon, jobs_released });
        }
        if stop < finish {
            pending.push(Reverse((job, finish - stop)));
        }
        now = stop;
    }
    Ok(SimTrace { first_miss: None, horizon, jobs_released })
}

/// Simulation-based verdict; the witness is the time of the first miss.
pub fn oracle_edf_sim(ts: &TaskSet) -> Result<Verdict, OracleError> {
    if exceeds_one(ts) {
        return Ok(overloaded_verdict());
    }
    let trace = simulate(ts)?;
    let stats = IterationStats {
        intervals_checked: trace.jobs_released,
        horizon_used: Some(trace.horizon),
        ..IterationStats::default()
    };
    Ok(match trace.first_miss {
        Some((time, _)) => Verdict::infeasible(Some(time), stats),
        None => Verdict::feasible(stats),
    })
}
