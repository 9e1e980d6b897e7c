//! Feasibility tests for synchronous sporadic task sets under preemptive EDF.
//!
//! Sufficient tests: [`test_liu_layland`] (implicit deadlines only, exact
//! there), [`test_devi`] and [`test_superpos`]. Exact tests:
//! [`test_processor_demand`], [`test_dynamic`] and [`test_all_approx`].
//!
//! The two approximating tests walk deadline events in ascending order and
//! keep a running value of the approximated demand. A task that has been
//! approximated contributes its utilization as slope instead of queueing its
//! further deadlines. When the approximated demand exceeds the interval,
//! approximations are withdrawn: the overestimate `frac((I − D)/T)·C` of each
//! withdrawn task is subtracted and its next exact deadline is queued. If the
//! demand still exceeds the interval with nothing left to withdraw, the
//! exact demand does, and the set is infeasible at that interval.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::demand::{self, DemandError, Horizon};
use crate::model::{IterationStats, Task, TaskSet, Ticks, Verdict};
use crate::rational::{self, Rational};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("test not applicable: deadline ≠ period at index {index}")]
    DeadlineNotPeriod { index: usize },
    #[error("approximation level must be at least 1")]
    InvalidLevel,
    #[error(transparent)]
    Horizon(#[from] DemandError),
    #[error("horizon exceeds the 64-bit tick range")]
    HorizonTooLarge,
}

/// Order in which the all-approximated test withdraws approximations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Withdrawal {
    /// Oldest approximation first.
    #[default]
    Fifo,
    /// Task with the largest overestimate at the failing interval first.
    LargestCost,
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub withdrawal: Withdrawal,
    /// Stop the processor demand test after this many events and report
    /// `Unknown` with `truncated` set.
    pub pd_iteration_cap: Option<u64>,
    /// Re-derive the exact demand at every processed interval and assert
    /// that the running value minus the outstanding overestimates matches.
    /// Expensive; meant for tests.
    pub check_ledger: bool,
}

/// A pending test interval: the `interval` is a synchronous deadline of the
/// task at `task_index`. Ordered by interval, then by task index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct TestEvent {
    pub interval: Ticks,
    pub task_index: usize,
}

fn utilization_check(ts: &TaskSet) -> std::cmp::Ordering {
    ts.utilization().cmp(&rational::ratio(1, 1))
}

fn precheck_stats() -> IterationStats {
    IterationStats { intervals_checked: 1, ..IterationStats::default() }
}

/// Liu & Layland: with `D_i = T_i` for every task, feasible iff `U ≤ 1`.
pub fn test_liu_layland(ts: &TaskSet) -> Result<Verdict, AnalysisError> {
    if let Some(index) = ts.iter().position(|t| t.deadline != t.period) {
        return Err(AnalysisError::DeadlineNotPeriod { index });
    }
    Ok(match utilization_check(ts) {
        std::cmp::Ordering::Greater => Verdict::infeasible(None, precheck_stats()),
        _ => Verdict::feasible(precheck_stats()),
    })
}

/// Devi's sufficient test. Tasks are taken in order of non-decreasing
/// deadline; for every prefix `k`,
/// `Σ_{i≤k} C_i/T_i + (1/D_k)·Σ_{i≤k} ((T_i − min(T_i, D_i))/T_i)·C_i ≤ 1`.
pub fn test_devi(ts: &TaskSet) -> Verdict {
    if utilization_check(ts).is_gt() {
        return Verdict::infeasible(None, precheck_stats());
    }
    let mut order: Vec<&Task> = ts.iter().collect();
    order.sort_by_key(|t| t.deadline);

    let one = rational::ratio(1, 1);
    let mut u_prefix = Rational::zero();
    let mut slack_prefix = Rational::zero();
    let mut stats = IterationStats::default();
    for task in order {
        stats.intervals_checked += 1;
        u_prefix += task.utilization();
        let slack = task.period - task.period.min(task.deadline);
        slack_prefix += Rational::new((u128::from(slack) * u128::from(task.wcet)).into(), task.period.into());
        let load = &u_prefix + &slack_prefix / rational::from_ticks(task.deadline);
        if load > one {
            return Verdict::unknown(stats);
        }
    }
    Verdict::feasible(stats)
}

/// All distinct synchronous deadlines `k·T_i + D_i` strictly below `horizon`,
/// ascending.
pub fn deadline_events(ts: &TaskSet, horizon: &Rational) -> Vec<Ticks> {
    let Some(limit) = rational::ceil_ticks(horizon) else {
        panic!("horizon {horizon} exceeds the tick range");
    };
    DeadlineEvents::new(ts).take_while(|&(i, _)| i < limit).map(|(i, _)| i).collect()
}

/// Merges the deadline sequences of all tasks. Yields each distinct
/// deadline once with the demand of the jobs due exactly there.
struct DeadlineEvents<'a> {
    tasks: &'a [Task],
    heap: BinaryHeap<Reverse<(Ticks, usize)>>,
}

impl<'a> DeadlineEvents<'a> {
    fn new(ts: &'a TaskSet) -> Self {
        let heap = ts.iter().enumerate().map(|(i, t)| Reverse((t.deadline, i))).collect();
        Self { tasks: ts.tasks(), heap }
    }

    fn advance(&mut self, interval: Ticks, index: usize) -> u128 {
        let task = &self.tasks[index];
        if let Some(next) = interval.checked_add(task.period) {
            self.heap.push(Reverse((next, index)));
        }
        u128::from(task.wcet)
    }
}

impl Iterator for DeadlineEvents<'_> {
    type Item = (Ticks, u128);

    fn next(&mut self) -> Option<Self::Item> {
        let Reverse((interval, index)) = self.heap.pop()?;
        let mut added = self.advance(interval, index);
        while let Some(&Reverse((next, other))) = self.heap.peek() {
            if next != interval {
                break;
            }
            self.heap.pop();
            added += self.advance(interval, other);
        }
        Some((interval, added))
    }
}

fn horizon_limit(horizon: &Horizon) -> Result<Ticks, AnalysisError> {
    horizon.limit().ok_or(AnalysisError::HorizonTooLarge)
}

/// Processor demand test: `dbf(I) ≤ I` at every deadline event below the
/// horizon. The earliest deadline is always checked, so at least one
/// interval is evaluated even when the horizon is 0.
pub fn test_processor_demand(ts: &TaskSet) -> Result<Verdict, AnalysisError> {
    test_processor_demand_with(ts, &Options::default())
}

pub fn test_processor_demand_with(ts: &TaskSet, options: &Options) -> Result<Verdict, AnalysisError> {
    if utilization_check(ts).is_gt() {
        return Ok(Verdict::infeasible(None, precheck_stats()));
    }
    let horizon = demand::test_horizon(ts)?;
    let limit = horizon_limit(&horizon)?;
    let mut stats = IterationStats { horizon_used: Some(limit), ..IterationStats::default() };
    let mut demand: u128 = 0;
    for (interval, added) in DeadlineEvents::new(ts) {
        if interval >= limit && stats.intervals_checked > 0 {
            break;
        }
        if options.pd_iteration_cap.is_some_and(|cap| stats.intervals_checked >= cap) {
            stats.truncated = true;
            return Ok(Verdict::unknown(stats));
        }
        stats.intervals_checked += 1;
        demand += added;
        if demand > u128::from(interval) {
            return Ok(Verdict::infeasible(Some(interval), stats));
        }
    }
    Ok(Verdict::feasible(stats))
}

/// Shared state of the approximating tests.
struct AnalysisState<'a> {
    tasks: &'a [Task],
    queue: BinaryHeap<Reverse<TestEvent>>,
    /// Approximated tasks, oldest first.
    approx: VecDeque<usize>,
    /// Σ C/T over `approx`.
    u_ready: Rational,
    /// Approximated demand at the last processed interval.
    dbf_acc: Rational,
    i_old: Ticks,
    stats: IterationStats,
    check_ledger: bool,
}

impl<'a> AnalysisState<'a> {
    fn new(ts: &'a TaskSet, check_ledger: bool) -> Self {
        let queue = ts
            .iter()
            .enumerate()
            .map(|(task_index, t)| Reverse(TestEvent { interval: t.deadline, task_index }))
            .collect();
        Self {
            tasks: ts.tasks(),
            queue,
            approx: VecDeque::new(),
            u_ready: Rational::zero(),
            dbf_acc: Rational::zero(),
            i_old: 0,
            stats: IterationStats::default(),
            check_ledger,
        }
    }

    /// Pops the next event and advances the running demand to it.
    fn pop(&mut self) -> Option<TestEvent> {
        let Reverse(event) = self.queue.pop()?;
        self.stats.intervals_checked += 1;
        let task = &self.tasks[event.task_index];
        let elapsed = event.interval - self.i_old;
        self.dbf_acc += rational::from_ticks(task.wcet);
        if elapsed > 0 && !self.u_ready.is_zero() {
            self.dbf_acc += &self.u_ready * rational::from_ticks(elapsed);
        }
        self.i_old = event.interval;
        Some(event)
    }

    fn exceeds(&self, interval: Ticks) -> bool {
        self.dbf_acc > rational::from_ticks(interval)
    }

    fn approximate(&mut self, index: usize) {
        self.u_ready += self.tasks[index].utilization();
        self.approx.push_back(index);
    }

    fn push_next(&mut self, index: usize, interval: Ticks) {
        let next = demand::next_int(interval, &self.tasks[index])
            .expect("queued task has a deadline at or before the interval");
        self.queue.push(Reverse(TestEvent { interval: next, task_index: index }));
    }

    /// Withdraws the approximation at position `pos` of the approx list.
    fn withdraw_at(&mut self, pos: usize, interval: Ticks) {
        let index = self.approx.remove(pos).expect("position within approx list");
        let task = &self.tasks[index];
        self.u_ready -= task.utilization();
        self.dbf_acc -= demand::app_cost(interval, task).expect("approximated task is past its first deadline");
        self.stats.revisions += 1;
        self.push_next(index, interval);
    }

    fn head_interval(&self) -> Option<Ticks> {
        self.queue.peek().map(|Reverse(e)| e.interval)
    }

    /// Once every event at `interval` has been popped, the running value minus
    /// the outstanding overestimates must equal the exact demand.
    fn verify_ledger(&self, interval: Ticks) {
        if !self.check_ledger || self.head_interval() == Some(interval) {
            return;
        }
        let outstanding = self.approx.iter().fold(Rational::zero(), |acc, &i| {
            acc + demand::app_cost(interval, &self.tasks[i]).expect("approximated task is past its first deadline")
        });
        let exact: u128 = self.tasks.iter().map(|t| demand::dbf_task(interval, t)).sum();
        assert_eq!(
            &self.dbf_acc - outstanding,
            rational::from_u128(exact),
            "demand ledger diverged at interval {interval}"
        );
        assert!(!self.u_ready.is_negative());
    }
}

/// Level schedule for the dynamic engine.
#[derive(Debug, Clone, Copy)]
struct Levels {
    start: u64,
    cap: Option<u64>,
}

impl Levels {
    /// Doubling, clamped to the cap. `None` once the cap is reached.
    fn raise(&self, current: u64) -> Option<u64> {
        let doubled = current.saturating_mul(2);
        match self.cap {
            Some(cap) if current >= cap => None,
            Some(cap) => Some(doubled.min(cap)),
            None => Some(doubled),
        }
    }
}

enum EngineResult {
    Feasible,
    Infeasible(Ticks),
    LevelCapReached,
}

fn run_dynamic_engine(
    ts: &TaskSet,
    levels: Levels,
    horizon: Ticks,
    check_ledger: bool,
) -> (EngineResult, IterationStats) {
    let mut state = AnalysisState::new(ts, check_ledger);
    let mut level = levels.start;
    state.stats.level_reached = level;
    state.stats.horizon_used = Some(horizon);

    let result = loop {
        let Some(event) = state.pop() else { break EngineResult::Feasible };
        let interval = event.interval;

        while state.exceeds(interval) {
            if state.approx.is_empty() {
                state.verify_ledger_on_failure(interval);
                return (EngineResult::Infeasible(interval), state.stats);
            }
            let Some(next_level) = levels.raise(level) else {
                return (EngineResult::LevelCapReached, state.stats);
            };
            level = next_level;
            state.stats.level_reached = state.stats.level_reached.max(level);
            // Withdraw every approximated task that still has exact
            // deadlines to examine under the new level.
            let mut pos = 0;
            while pos < state.approx.len() {
                let task = &state.tasks[state.approx[pos]];
                let next = demand::next_int(interval, task).expect("approximated task is past its first deadline");
                if next <= demand::im_level(task, level) {
                    state.withdraw_at(pos, interval);
                } else {
                    pos += 1;
                }
            }
        }

        let task = &state.tasks[event.task_index];
        if interval < demand::im_level(task, level) {
            state.push_next(event.task_index, interval);
        } else {
            state.approximate(event.task_index);
        }
        state.verify_ledger(interval);

        match state.head_interval() {
            Some(next) if next < horizon => {}
            _ => break EngineResult::Feasible,
        }
    };
    (result, state.stats)
}

impl AnalysisState<'_> {
    fn verify_ledger_on_failure(&self, interval: Ticks) {
        if !self.check_ledger {
            return;
        }
        // Jobs of later-popped tasks at this interval may still be queued,
        // so the running value can only be below the exact demand.
        let exact: u128 = self.tasks.iter().map(|t| demand::dbf_task(interval, t)).sum();
        assert!(self.dbf_acc <= rational::from_u128(exact));
        assert!(self.dbf_acc > rational::from_ticks(interval));
    }
}

/// Superposition test at a fixed level `x`: the first `x` jobs of every task
/// are examined exactly, later ones through the linear approximation.
/// Sufficient only: a demand excess yields `Unknown`.
pub fn test_superpos(ts: &TaskSet, level: u64) -> Result<Verdict, AnalysisError> {
    test_superpos_with(ts, level, &Options::default())
}

pub fn test_superpos_with(ts: &TaskSet, level: u64, options: &Options) -> Result<Verdict, AnalysisError> {
    if level == 0 {
        return Err(AnalysisError::InvalidLevel);
    }
    if utilization_check(ts).is_gt() {
        return Ok(Verdict::infeasible(None, precheck_stats()));
    }
    let limit = horizon_limit(&demand::test_horizon(ts)?)?;
    let levels = Levels { start: level, cap: Some(level) };
    let (result, stats) = run_dynamic_engine(ts, levels, limit, options.check_ledger);
    Ok(match result {
        EngineResult::Feasible => Verdict::feasible(stats),
        EngineResult::Infeasible(_) | EngineResult::LevelCapReached => Verdict::unknown(stats),
    })
}

/// Dynamic error test: starts at level 1 and doubles the level whenever the
/// approximation is too coarse. Exact without a cap; with `level_cap` it
/// answers `Unknown` when the cap would have to be exceeded.
pub fn test_dynamic(ts: &TaskSet, level_cap: Option<u64>) -> Result<Verdict, AnalysisError> {
    test_dynamic_with(ts, level_cap, &Options::default())
}

pub fn test_dynamic_with(ts: &TaskSet, level_cap: Option<u64>, options: &Options) -> Result<Verdict, AnalysisError> {
    if level_cap == Some(0) {
        return Err(AnalysisError::InvalidLevel);
    }
    if utilization_check(ts).is_gt() {
        return Ok(Verdict::infeasible(None, precheck_stats()));
    }
    let limit = horizon_limit(&demand::test_horizon(ts)?)?;
    let levels = Levels { start: 1, cap: level_cap };
    let (result, stats) = run_dynamic_engine(ts, levels, limit, options.check_ledger);
    Ok(match result {
        EngineResult::Feasible => Verdict::feasible(stats),
        EngineResult::Infeasible(witness) => Verdict::infeasible(Some(witness), stats),
        EngineResult::LevelCapReached => Verdict::unknown(stats),
    })
}

/// All-approximated test: every task is approximated right after its
/// current exact deadline, and approximations are withdrawn one at a time
/// only where the approximated demand exceeds the interval. Terminates when
/// the queue runs empty; no explicit horizon is needed for `U < 1`. At
/// `U = 1` the walk stops at hyperperiod + largest deadline.
pub fn test_all_approx(ts: &TaskSet) -> Result<Verdict, AnalysisError> {
    test_all_approx_with(ts, &Options::default())
}

pub fn test_all_approx_with(ts: &TaskSet, options: &Options) -> Result<Verdict, AnalysisError> {
    let full_load = match utilization_check(ts) {
        std::cmp::Ordering::Greater => return Ok(Verdict::infeasible(None, precheck_stats())),
        std::cmp::Ordering::Equal => true,
        std::cmp::Ordering::Less => false,
    };
    let mut state = AnalysisState::new(ts, options.check_ledger);
    while let Some(event) = state.pop() {
        let interval = event.interval;
        while state.exceeds(interval) {
            if state.approx.is_empty() {
                state.verify_ledger_on_failure(interval);
                return Ok(Verdict::infeasible(Some(interval), state.stats));
            }
            let pos = match options.withdrawal {
                Withdrawal::Fifo => 0,
                Withdrawal::LargestCost => largest_cost_position(&state, interval),
            };
            state.withdraw_at(pos, interval);
        }
        state.approximate(event.task_index);
        state.verify_ledger(interval);

        // At U = 1 the queue need not run empty. A violation at or beyond the
        // hyperperiod H would show up one H earlier, so the walk ends at
        // H + D_max, past every first deadline. Computed only when needed.
        if full_load {
            if let Some(next) = state.head_interval() {
                let cutoff = match state.stats.horizon_used {
                    Some(c) => c,
                    None => {
                        let h = ts.hyperperiod().map_err(DemandError::from)?;
                        let c = h.checked_add(ts.max_deadline()).ok_or(AnalysisError::HorizonTooLarge)?;
                        state.stats.horizon_used = Some(c);
                        c
                    }
                };
                if next >= cutoff {
                    break;
                }
            }
        }
    }
    Ok(Verdict::feasible(state.stats))
}

fn largest_cost_position(state: &AnalysisState<'_>, interval: Ticks) -> usize {
    let mut best: Option<(usize, Rational)> = None;
    for (pos, &index) in state.approx.iter().enumerate() {
        let cost =
            demand::app_cost(interval, &state.tasks[index]).expect("approximated task is past its first deadline");
        if best.as_ref().is_none_or(|(_, b)| cost > *b) {
            best = Some((pos, cost));
        }
    }
    best.map(|(pos, _)| pos).unwrap_or(0)
}
