//! Reproducible random task sets.
//!
//! Set number `index` of a parameter block is a pure function of
//! `(params, index)`: its random stream is ChaCha8 keyed by
//! `seed_from_u64(seed)` with the stream number set to `index`, so sets can
//! be generated in any order or in parallel and re-materialized one by one.
//!
//! Per-task utilizations follow UUniFast. UUniFast runs in `f64`; the floats
//! are converted exactly and rescaled so they sum to the target exactly. The
//! integer task parameters derived from them are the artifact, and the set's
//! realized utilization is recomputed from those integers.

use num_bigint::BigInt;
use num_traits::{ToPrimitive, Zero};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{Task, TaskSet, Ticks};
use crate::rational::{self, Rational};

/// Identity of the pseudo-random generator, for documentation and `--help`.
pub const PRNG_DESCRIPTION: &str = "ChaCha8 (rand_chacha 0.3), key = seed_from_u64(seed), stream = set index";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenError {
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PeriodDistribution {
    /// Uniform in `ln T`; fills every decade of a wide range evenly.
    #[default]
    LogUniform,
    /// Uniform in `T`.
    Uniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    pub n_min: usize,
    pub n_max: usize,
    pub u_min: Rational,
    pub u_max: Rational,
    /// Mean relative gap `(T − D)/T`. Per-task gaps are uniform on `[0, 2·gap_avg]`.
    pub gap_avg: f64,
    /// When set, each set draws its own mean gap uniformly from `[gap_avg, gap_avg_max]`.
    pub gap_avg_max: Option<f64>,
    pub t_min: Ticks,
    pub t_max: Ticks,
    pub periods: PeriodDistribution,
    pub seed: u64,
    pub count: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            n_min: 5,
            n_max: 100,
            u_min: rational::ratio(90, 100),
            u_max: rational::ratio(99, 100),
            gap_avg: 0.2,
            gap_avg_max: None,
            t_min: 1_000,
            t_max: 1_000_000,
            periods: PeriodDistribution::LogUniform,
            seed: 0,
            count: 1,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<(), GenError> {
        let fail = |msg: String| Err(GenError::InvalidParams(msg));
        if self.n_min < 1 {
            return fail("n_min must be at least 1".into());
        }
        if self.n_min > self.n_max {
            return fail(format!("n_min {} exceeds n_max {}", self.n_min, self.n_max));
        }
        if self.t_min < 2 {
            return fail("t_min must be at least 2".into());
        }
        if self.t_min > self.t_max {
            return fail(format!("t_min {} exceeds t_max {}", self.t_min, self.t_max));
        }
        let one = rational::ratio(1, 1);
        if self.u_min <= Rational::zero() || self.u_max > one {
            return fail("utilization range must lie in (0, 1]".into());
        }
        if self.u_min > self.u_max {
            return fail(format!("u_min {} exceeds u_max {}", self.u_min, self.u_max));
        }
        let gap_ok = |g: f64| g.is_finite() && (0.0..1.0).contains(&g);
        if !gap_ok(self.gap_avg) {
            return fail(format!("gap {} must lie in [0, 1)", self.gap_avg));
        }
        if let Some(max) = self.gap_avg_max {
            if !gap_ok(max) || max < self.gap_avg {
                return fail(format!("gap range [{}, {max}] must lie in [0, 1)", self.gap_avg));
            }
        }
        Ok(())
    }

    pub fn rng_for(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }
}

/// A generated set together with the numbers it was drawn from.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedSet {
    pub index: u64,
    pub taskset: TaskSet,
    pub target_utilization: Rational,
    /// Exact utilization of the integer task parameters.
    pub utilization: Rational,
    pub gap_avg: f64,
}

/// UUniFast: `n` utilizations, uniform over the simplex, summing to `u_target`.
pub fn uunifast<R: Rng + ?Sized>(n: usize, u_target: &Rational, rng: &mut R) -> Vec<Rational> {
    assert!(n >= 1, "uunifast needs at least one task");
    if n == 1 {
        return vec![u_target.clone()];
    }
    let mut remaining = rational::to_f64(u_target);
    let mut floats = Vec::with_capacity(n);
    for i in 1..n {
        let next = remaining * rng.gen::<f64>().powf(1.0 / (n - i) as f64);
        floats.push(remaining - next);
        remaining = next;
    }
    floats.push(remaining);

    let exact: Vec<Rational> =
        floats.iter().map(|&f| Rational::from_float(f.max(0.0)).unwrap_or_else(Rational::zero)).collect();
    let total = exact.iter().fold(Rational::zero(), |acc, x| acc + x);
    if total.is_zero() {
        let share = u_target / rational::from_ticks(n as u64);
        return vec![share; n];
    }
    let scale = u_target / total;
    exact.into_iter().map(|x| x * &scale).collect()
}

fn draw_period<R: Rng + ?Sized>(p: &GenParams, rng: &mut R) -> Ticks {
    let t = match p.periods {
        PeriodDistribution::Uniform => return rng.gen_range(p.t_min..=p.t_max),
        PeriodDistribution::LogUniform => {
            let (lo, hi) = ((p.t_min as f64).ln(), (p.t_max as f64).ln());
            (lo + rng.gen::<f64>() * (hi - lo)).exp().round()
        }
    };
    (t as Ticks).clamp(p.t_min, p.t_max)
}

fn draw_target<R: Rng + ?Sized>(p: &GenParams, rng: &mut R) -> Rational {
    let k: u32 = rng.gen();
    let span = &p.u_max - &p.u_min;
    &p.u_min + span * Rational::new(BigInt::from(k), BigInt::from(1u64 << 32))
}

/// Set number `index` of the parameter block.
pub fn gen_taskset(p: &GenParams, index: u64) -> Result<GeneratedSet, GenError> {
    p.validate()?;
    let mut rng = p.rng_for(index);
    let n = rng.gen_range(p.n_min..=p.n_max);
    let target = draw_target(p, &mut rng);
    let gap_avg = match p.gap_avg_max {
        Some(max) if max > p.gap_avg => rng.gen_range(p.gap_avg..=max),
        _ => p.gap_avg,
    };
    let shares = uunifast(n, &target, &mut rng);

    let mut tasks = Vec::with_capacity(n);
    for share in &shares {
        let task = loop {
            let period = draw_period(p, &mut rng);
            let wcet =
                rational::round_half_up(&(share * rational::from_ticks(period))).to_u64().unwrap_or(Ticks::MAX).max(1);
            if wcet > period {
                continue;
            }
            let gap = if gap_avg > 0.0 { rng.gen_range(0.0..=2.0 * gap_avg).min(1.0 - f64::EPSILON) } else { 0.0 };
            let deadline = ((period as f64 * (1.0 - gap)).round() as Ticks).max(wcet);
            break Task::new(wcet, deadline, period);
        };
        tasks.push(task);
    }
    let taskset = TaskSet::new(tasks)
        .expect("generated tasks satisfy the model invariants")
        .with_name(format!("{}-{}", p.seed, index));
    let utilization = taskset.utilization();
    Ok(GeneratedSet { index, taskset, target_utilization: target, utilization, gap_avg })
}

/// Sets `0..count` of the parameter block.
pub fn generate(p: &GenParams) -> Result<Vec<GeneratedSet>, GenError> {
    p.validate()?;
    (0..p.count).map(|i| gen_taskset(p, i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::ratio;

    fn params() -> GenParams {
        GenParams { seed: 42, ..GenParams::default() }
    }

    #[test]
    fn uunifast_single_task_takes_everything() {
        let mut rng = params().rng_for(0);
        assert_eq!(uunifast(1, &ratio(7, 10), &mut rng), vec![ratio(7, 10)]);
    }

    #[test]
    fn uunifast_sums_exactly() {
        let mut rng = params().rng_for(3);
        for n in [2, 3, 10, 100] {
            let shares = uunifast(n, &ratio(19, 20), &mut rng);
            assert_eq!(shares.len(), n);
            assert!(shares.iter().all(|s| *s >= Rational::zero()));
            assert_eq!(shares.iter().fold(Rational::zero(), |a, b| a + b), ratio(19, 20));
        }
    }

    #[test]
    fn uunifast_is_deterministic_per_seed() {
        let a = uunifast(2, &ratio(1, 2), &mut params().rng_for(0));
        let b = uunifast(2, &ratio(1, 2), &mut params().rng_for(0));
        assert_eq!(a, b);
    }

    #[test]
    fn same_seed_and_index_give_the_same_set() {
        let p = params();
        assert_eq!(gen_taskset(&p, 17).unwrap(), gen_taskset(&p, 17).unwrap());
        assert_ne!(gen_taskset(&p, 17).unwrap().taskset, gen_taskset(&p, 18).unwrap().taskset);
        assert_eq!(gen_taskset(&p, 17).unwrap().taskset.name(), Some("42-17"));
    }

    #[test]
    fn zero_gap_gives_implicit_deadlines() {
        let p = GenParams { gap_avg: 0.0, count: 50, ..params() };
        for set in generate(&p).unwrap() {
            assert!(set.taskset.all_implicit_deadlines());
        }
    }

    #[test]
    fn generated_sets_are_valid() {
        let p = GenParams { gap_avg: 0.45, t_min: 2, t_max: 30, n_min: 1, n_max: 8, count: 300, ..params() };
        for set in generate(&p).unwrap() {
            assert!((p.n_min..=p.n_max).contains(&set.taskset.len()));
            for t in set.taskset.iter() {
                assert!(t.wcet >= 1 && t.wcet <= t.period && t.deadline >= t.wcet);
                assert!((p.t_min..=p.t_max).contains(&t.period));
            }
            assert_eq!(set.utilization, set.taskset.utilization());
        }
    }

    #[test]
    fn rejects_bad_parameters() {
        let bad = [
            GenParams { t_min: 10, t_max: 5, ..params() },
            GenParams { t_min: 1, ..params() },
            GenParams { n_min: 0, ..params() },
            GenParams { n_min: 9, n_max: 8, ..params() },
            GenParams { u_min: ratio(0, 1), ..params() },
            GenParams { u_max: ratio(11, 10), ..params() },
            GenParams { u_min: ratio(9, 10), u_max: ratio(8, 10), ..params() },
            GenParams { gap_avg: 1.0, ..params() },
            GenParams { gap_avg: 0.3, gap_avg_max: Some(0.2), ..params() },
        ];
        for p in bad {
            assert!(matches!(gen_taskset(&p, 0), Err(GenError::InvalidParams(_))), "{p:?}");
        }
    }

    #[test]
    fn gap_range_draws_per_set() {
        let p = GenParams { gap_avg: 0.1, gap_avg_max: Some(0.5), count: 200, ..params() };
        let gaps: Vec<f64> = generate(&p).unwrap().iter().map(|s| s.gap_avg).collect();
        assert!(gaps.iter().all(|g| (0.1..=0.5).contains(g)));
        assert!(gaps.iter().any(|&g| g < 0.2) && gaps.iter().any(|&g| g > 0.4));
    }

    #[test]
    fn targets_stay_inside_the_window() {
        let p = GenParams { count: 500, ..params() };
        for set in generate(&p).unwrap() {
            assert!(set.target_utilization >= p.u_min && set.target_utilization < p.u_max);
        }
    }
}
