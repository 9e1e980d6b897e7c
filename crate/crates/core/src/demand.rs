//! Demand bound algebra: the exact demand bound function, its superposition
//! approximation, the approximation error, and feasibility bounds.
//!
//! For a task `(C, D, T)` released synchronously, the jobs whose release and
//! deadline both fall inside `[0, I]` number `⌊(I − D)/T⌋ + 1` once `I ≥ D`.
//! The approximated demand follows the exact step function up to a chosen
//! interval `Im` and continues linearly with slope `C/T` afterwards; the
//! vertical distance between the two at `I` is `frac((I − D)/T)·C`.

use std::fmt;

use num_traits::{Signed, Zero};
use thiserror::Error;

use crate::model::{ModelError, Task, TaskSet, Ticks};
use crate::rational::{self, Rational};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DemandError {
    #[error("interval {interval} lies before the first deadline {deadline}")]
    BeforeFirstDeadline { interval: Ticks, deadline: Ticks },
    #[error("utilization {0} is not below 1; bound unavailable")]
    UtilizationNotBelowOne(Rational),
    #[error("horizon unavailable: {0}")]
    HorizonUnavailable(#[from] ModelError),
}

/// Number of jobs of `task` with deadline `≤ interval`.
fn jobs_due(interval: Ticks, task: &Task) -> u64 {
    if interval < task.deadline {
        0
    } else {
        (interval - task.deadline) / task.period + 1
    }
}

/// Exact demand of a single task in a window of length `interval`.
pub fn dbf_task(interval: Ticks, task: &Task) -> u128 {
    u128::from(jobs_due(interval, task)) * u128::from(task.wcet)
}

/// Exact demand of the whole set.
pub fn dbf(interval: Ticks, ts: &TaskSet) -> u128 {
    ts.iter().map(|t| dbf_task(interval, t)).sum()
}

/// Deadline of job number `level` (1-based) in the synchronous pattern:
/// `(level − 1)·T + D`. Jobs up to this deadline are treated exactly at the
/// given approximation level. Saturates instead of overflowing.
pub fn im_level(task: &Task, level: u64) -> Ticks {
    debug_assert!(level >= 1);
    level.saturating_sub(1).saturating_mul(task.period).saturating_add(task.deadline)
}

/// Approximated demand of one task: exact up to `im`, then linear with the
/// task's utilization as slope.
pub fn dbf_star_task(interval: Ticks, task: &Task, im: Ticks) -> Rational {
    if interval <= im {
        return rational::from_u128(dbf_task(interval, task));
    }
    rational::from_u128(dbf_task(im, task)) + task.utilization() * rational::from_ticks(interval - im)
}

fn require_deadline_passed(interval: Ticks, task: &Task) -> Result<(), DemandError> {
    if interval < task.deadline {
        Err(DemandError::BeforeFirstDeadline { interval, deadline: task.deadline })
    } else {
        Ok(())
    }
}

/// First synchronous deadline of `task` strictly after `interval`.
pub fn next_int(interval: Ticks, task: &Task) -> Result<Ticks, DemandError> {
    require_deadline_passed(interval, task)?;
    let k = (interval - task.deadline) / task.period + 1;
    Ok(k.saturating_mul(task.period).saturating_add(task.deadline))
}

/// Overestimation of the linear approximation at `interval`:
/// `frac((I − D)/T)·C`, always in `[0, C)`.
pub fn app_cost(interval: Ticks, task: &Task) -> Result<Rational, DemandError> {
    require_deadline_passed(interval, task)?;
    let remainder = (interval - task.deadline) % task.period;
    Ok(Rational::new((u128::from(remainder) * u128::from(task.wcet)).into(), task.period.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HorizonSource {
    Baruah,
    George,
    Superposition,
    Hyperperiod,
    Combined,
}

impl fmt::Display for HorizonSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HorizonSource::Baruah => "baruah",
            HorizonSource::George => "george",
            HorizonSource::Superposition => "superposition",
            HorizonSource::Hyperperiod => "hyperperiod",
            HorizonSource::Combined => "combined",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum HorizonValue {
    Bounded(Rational),
    Unbounded,
}

/// Upper limit for intervals that need checking. Only deadline events
/// strictly below a bounded value are in scope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Horizon {
    pub value: HorizonValue,
    pub source: HorizonSource,
}

impl Horizon {
    fn bounded(value: Rational, source: HorizonSource) -> Self {
        let value = if value.is_negative() { Rational::zero() } else { value };
        Self { value: HorizonValue::Bounded(value), source }
    }

    pub fn value(&self) -> Option<&Rational> {
        match &self.value {
            HorizonValue::Bounded(v) => Some(v),
            HorizonValue::Unbounded => None,
        }
    }

    /// Smallest integer tick `L` such that "event `I` is in scope" is
    /// equivalent to `I < L`. `None` when unbounded or too large for ticks.
    pub fn limit(&self) -> Option<Ticks> {
        self.value().and_then(rational::ceil_ticks)
    }
}

/// Σ `(1 − D_i/T_i)·C_i` over the tasks selected by `include`. Terms for
/// tasks with `D > T` are negative.
fn slack_sum(ts: &TaskSet, include: impl Fn(&Task) -> bool) -> Rational {
    ts.iter().filter(|t| include(t)).fold(Rational::zero(), |acc, t| {
        let slack = i128::from(t.period) - i128::from(t.deadline);
        acc + Rational::new((slack * i128::from(t.wcet)).into(), t.period.into())
    })
}

fn headroom(ts: &TaskSet) -> Result<(Rational, Rational), DemandError> {
    let u = ts.utilization();
    let headroom = rational::ratio(1, 1) - &u;
    if headroom.is_positive() {
        Ok((u, headroom))
    } else {
        Err(DemandError::UtilizationNotBelowOne(u))
    }
}

/// `(U/(1 − U))·max(T_i − D_i)`, or 0 when no task has `D < T`.
pub fn bound_baruah(ts: &TaskSet) -> Result<Horizon, DemandError> {
    let (u, headroom) = headroom(ts)?;
    let max_gap = ts.iter().map(|t| i128::from(t.period) - i128::from(t.deadline)).max().unwrap_or(0);
    if max_gap <= 0 {
        return Ok(Horizon::bounded(Rational::zero(), HorizonSource::Baruah));
    }
    Ok(Horizon::bounded(u / headroom * rational::ratio(max_gap, 1), HorizonSource::Baruah))
}

/// `Σ_{D_i ≤ T_i} (1 − D_i/T_i)·C_i / (1 − U)`.
pub fn bound_george(ts: &TaskSet) -> Result<Horizon, DemandError> {
    let (_, headroom) = headroom(ts)?;
    let sum = slack_sum(ts, |t| t.deadline <= t.period);
    Ok(Horizon::bounded(sum / headroom, HorizonSource::George))
}

/// `max(D_max, Σ_all (1 − D_i/T_i)·C_i / (1 − U))`.
///
/// The linear bound `dbf(I) ≤ U·I + Σ (1 − D_i/T_i)·C_i` only holds from
/// `D_max` on, so the horizon never drops below `D_max`.
pub fn bound_superposition(ts: &TaskSet) -> Result<Horizon, DemandError> {
    let (_, headroom) = headroom(ts)?;
    let formula = slack_sum(ts, |_| true) / headroom;
    let d_max = rational::from_ticks(ts.max_deadline());
    Ok(Horizon::bounded(formula.max(d_max), HorizonSource::Superposition))
}

/// Horizon used by the exact tests.
///
/// `U < 1`: the smallest of the three analytic bounds. `U = 1`: the
/// hyperperiod, which is exact for synchronous release. `U > 1`: unbounded;
/// callers reject such sets before asking.
pub fn test_horizon(ts: &TaskSet) -> Result<Horizon, DemandError> {
    let u = ts.utilization();
    let one = rational::ratio(1, 1);
    if u > one {
        return Ok(Horizon { value: HorizonValue::Unbounded, source: HorizonSource::Combined });
    }
    if u == one {
        let h = ts.hyperperiod()?;
        return Ok(Horizon::bounded(rational::from_ticks(h), HorizonSource::Hyperperiod));
    }
    let value = [bound_baruah(ts)?, bound_george(ts)?, bound_superposition(ts)?]
        .into_iter()
        .filter_map(|h| h.value().cloned())
        .min()
        .expect("three bounded horizons");
    Ok(Horizon::bounded(value, HorizonSource::Combined))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;
    use proptest::prelude::*;

    const T1: Task = Task::new(1, 2, 4);
    const T2: Task = Task::new(2, 4, 6);

    fn gamma_a() -> TaskSet {
        TaskSet::from_triples(&[(1, 2, 4), (2, 4, 6)]).unwrap()
    }

    fn gamma_b() -> TaskSet {
        TaskSet::from_triples(&[(1, 1, 2), (2, 2, 5)]).unwrap()
    }

    fn int(v: i128) -> Rational {
        ratio(v, 1)
    }

    /// Counts jobs by listing them: job k is released at k·T and due at k·T + D.
    fn enumerated_demand(interval: Ticks, task: &Task) -> u128 {
        (0..)
            .map(|k| k * task.period + task.deadline)
            .take_while(|&due| due <= interval)
            .map(|_| u128::from(task.wcet))
            .sum()
    }

    #[test]
    fn dbf_task_examples() {
        assert_eq!(dbf_task(1, &T1), 0);
        assert_eq!(dbf_task(6, &T1), 2);
        assert_eq!(dbf_task(6, &T2), 2);
        for i in 0..40 {
            assert_eq!(dbf_task(i, &T1), enumerated_demand(i, &T1));
        }
    }

    #[test]
    fn dbf_examples() {
        assert_eq!(dbf(2, &gamma_a()), 1);
        assert_eq!(dbf(6, &gamma_a()), 4);
        assert_eq!(dbf(2, &gamma_b()), 3);
    }

    #[test]
    fn im_level_examples() {
        assert_eq!(im_level(&T1, 1), 2);
        assert_eq!(im_level(&T1, 3), 10);
        assert_eq!(im_level(&T2, 2), 10);
        assert_eq!(im_level(&T1, u64::MAX), Ticks::MAX);
    }

    #[test]
    fn dbf_star_examples() {
        assert_eq!(dbf_star_task(6, &T1, 2), int(2));
        assert_eq!(dbf_star_task(5, &T1, 2), ratio(7, 4));
        assert_eq!(dbf_star_task(2, &T1, 2), int(1));
    }

    #[test]
    fn next_int_examples() {
        assert_eq!(next_int(2, &T1), Ok(6));
        assert_eq!(next_int(5, &T1), Ok(6));
        assert_eq!(next_int(6, &T1), Ok(10));
        assert_eq!(next_int(1, &T1), Err(DemandError::BeforeFirstDeadline { interval: 1, deadline: 2 }));
    }

    #[test]
    fn app_cost_examples() {
        assert_eq!(app_cost(5, &T1), Ok(ratio(3, 4)));
        assert_eq!(app_cost(6, &T1), Ok(int(0)));
        assert_eq!(app_cost(4, &T2), Ok(int(0)));
        assert!(app_cost(3, &T2).is_err());
    }

    #[test]
    fn baruah_examples() {
        assert_eq!(bound_baruah(&gamma_a()).unwrap().value(), Some(&ratio(14, 5)));
        assert_eq!(bound_baruah(&gamma_b()).unwrap().value(), Some(&int(27)));
        let implicit = TaskSet::from_triples(&[(1, 4, 4), (2, 6, 6)]).unwrap();
        assert_eq!(bound_baruah(&implicit).unwrap().value(), Some(&int(0)));
    }

    #[test]
    fn george_examples() {
        assert_eq!(bound_george(&gamma_a()).unwrap().value(), Some(&ratio(14, 5)));
        assert_eq!(bound_george(&gamma_b()).unwrap().value(), Some(&int(17)));
        let implicit = TaskSet::from_triples(&[(1, 4, 4), (2, 6, 6)]).unwrap();
        assert_eq!(bound_george(&implicit).unwrap().value(), Some(&int(0)));
    }

    #[test]
    fn superposition_examples() {
        assert_eq!(bound_superposition(&gamma_a()).unwrap().value(), Some(&int(4)));
        let single = TaskSet::from_triples(&[(1, 3, 3)]).unwrap();
        assert_eq!(bound_superposition(&single).unwrap().value(), Some(&int(3)));
        // The D > T task makes the formula negative (−2/5); D_max wins.
        let mixed = TaskSet::from_triples(&[(1, 2, 4), (1, 5, 3)]).unwrap();
        assert_eq!(slack_sum(&mixed, |_| true) / ratio(5, 12), ratio(-2, 5));
        assert_eq!(bound_superposition(&mixed).unwrap().value(), Some(&int(5)));
    }

    #[test]
    fn bounds_refuse_full_utilization() {
        let full = TaskSet::from_triples(&[(1, 1, 2), (1, 1, 2)]).unwrap();
        assert!(matches!(bound_baruah(&full), Err(DemandError::UtilizationNotBelowOne(_))));
        assert!(matches!(bound_george(&full), Err(DemandError::UtilizationNotBelowOne(_))));
        assert!(matches!(bound_superposition(&full), Err(DemandError::UtilizationNotBelowOne(_))));
    }

    #[test]
    fn test_horizon_examples() {
        let h = test_horizon(&gamma_a()).unwrap();
        assert_eq!((h.value(), h.source), (Some(&ratio(14, 5)), HorizonSource::Combined));
        assert_eq!(h.limit(), Some(3));
        let h = test_horizon(&gamma_b()).unwrap();
        assert_eq!((h.value(), h.source), (Some(&int(17)), HorizonSource::Combined));
        let full = TaskSet::from_triples(&[(1, 1, 2), (1, 1, 2)]).unwrap();
        let h = test_horizon(&full).unwrap();
        assert_eq!((h.value(), h.source), (Some(&int(2)), HorizonSource::Hyperperiod));
        let over = TaskSet::from_triples(&[(2, 2, 2), (1, 2, 2)]).unwrap();
        assert_eq!(test_horizon(&over).unwrap().value, HorizonValue::Unbounded);
    }

    #[test]
    fn test_horizon_reports_hyperperiod_overflow_at_full_utilization() {
        let (p1, p2, p3) = (4_194_301u64, 4_194_287u64, 4_194_277u64);
        let full = TaskSet::from_triples(&[
            (5_864_034_052_795, p1 * p2, p1 * p2),
            (2_197_007, p2 * p3, p2 * p3),
            (11_728_037_946_571, p1 * p3, p1 * p3),
        ])
        .unwrap();
        assert_eq!(full.utilization(), int(1));
        assert_eq!(test_horizon(&full), Err(DemandError::HorizonUnavailable(ModelError::HyperperiodOverflow)));
    }

    fn task_strategy() -> impl Strategy<Value = Task> {
        (1u64..40, 1u64..80).prop_flat_map(|(t, d)| (1..=t).prop_map(move |c| Task::new(c, d, t)))
    }

    fn taskset_strategy() -> impl Strategy<Value = TaskSet> {
        prop::collection::vec(task_strategy(), 1..6).prop_map(|v| TaskSet::new(v).unwrap())
    }

    proptest! {
        #[test]
        fn dbf_is_a_nondecreasing_step_function(ts in taskset_strategy()) {
            let deadlines: std::collections::BTreeSet<Ticks> = ts
                .iter()
                .flat_map(|t| (0..).map(move |k| k * t.period + t.deadline).take_while(|&d| d <= 200))
                .collect();
            let mut prev = dbf(0, &ts);
            for i in 1..=200 {
                let cur = dbf(i, &ts);
                prop_assert!(cur >= prev);
                if cur != prev {
                    prop_assert!(deadlines.contains(&i));
                }
                prev = cur;
            }
        }

        #[test]
        fn dbf_star_bounds_dbf_and_refines_with_level(
            task in task_strategy(), level in 1u64..6, extra in 1u64..4, i in 0u64..400,
        ) {
            let exact = rational::from_u128(dbf_task(i, &task));
            let coarse = dbf_star_task(i, &task, im_level(&task, level));
            let fine = dbf_star_task(i, &task, im_level(&task, level + extra));
            prop_assert!(coarse >= exact);
            prop_assert!(fine >= exact);
            prop_assert!(fine <= coarse);
        }

        #[test]
        fn approximation_error_equals_app_cost(task in task_strategy(), level in 1u64..8, offset in 1u64..400) {
            let im = im_level(&task, level);
            let i = im + offset.min(10 * task.period);
            let gap = dbf_star_task(i, &task, im) - rational::from_u128(dbf_task(i, &task));
            prop_assert_eq!(gap, app_cost(i, &task).unwrap());
        }

        #[test]
        fn app_cost_is_below_wcet(task in task_strategy(), offset in 0u64..500) {
            let cost = app_cost(task.deadline + offset, &task).unwrap();
            prop_assert!(!cost.is_negative());
            prop_assert!(cost < rational::from_ticks(task.wcet));
        }

        #[test]
        fn next_int_is_the_following_deadline(task in task_strategy(), offset in 0u64..500) {
            let i = task.deadline + offset;
            let next = next_int(i, &task).unwrap();
            prop_assert!(next > i);
            prop_assert_eq!((next - task.deadline) % task.period, 0);
            let between = (i + 1..next).any(|x| x >= task.deadline && (x - task.deadline) % task.period == 0);
            prop_assert!(!between);
        }

        #[test]
        fn linear_dominance(ts in taskset_strategy()) {
            let u = ts.utilization();
            let slack = slack_sum(&ts, |_| true);
            let d_max = ts.max_deadline();
            for i in d_max..d_max + 300 {
                let bound = &u * rational::from_ticks(i) + &slack;
                prop_assert!(rational::from_u128(dbf(i, &ts)) <= bound);
            }
            for t in ts.iter().filter(|t| t.deadline <= t.period) {
                let slack = Rational::new(((t.period - t.deadline) * t.wcet).into(), t.period.into());
                for i in 0..300 {
                    let bound = t.utilization() * rational::from_ticks(i) + &slack;
                    prop_assert!(rational::from_u128(dbf_task(i, t)) <= bound);
                }
            }
        }

        #[test]
        fn george_equals_superposition_sum_for_constrained_deadlines(
            raw in prop::collection::vec((1u64..40, 1u64..40, 1u64..40), 1..6),
        ) {
            // (c, d, t) clamped into c ≤ t and d ≤ t
            let ts = TaskSet::new(
                raw.iter().map(|&(c, d, t)| Task::new(c.min(t), d.min(t), t)).collect(),
            ).unwrap();
            prop_assert_eq!(slack_sum(&ts, |t| t.deadline <= t.period), slack_sum(&ts, |_| true));
        }
    }
}
