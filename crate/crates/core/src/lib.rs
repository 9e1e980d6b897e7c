//! Exact feasibility analysis for uniprocessor EDF.
//!
//! The crate covers the synchronous sporadic task model ([`model`]), exact
//! rational arithmetic ([`rational`]), demand bound algebra and feasibility
//! bounds ([`demand`]), the sufficient and exact feasibility tests
//! ([`feasibility`]), and reproducible random task-set generation
//! ([`generator`]). No floating point value takes part in a feasibility
//! decision.

pub mod demand;
pub mod feasibility;
pub mod generator;
pub mod model;
pub mod rational;

pub use feasibility::{
    deadline_events, test_all_approx, test_devi, test_dynamic, test_liu_layland, test_processor_demand, test_superpos,
    AnalysisError, Options, Withdrawal,
};
pub use model::{parse_taskset, IterationStats, ModelError, Outcome, Task, TaskSet, Ticks, Verdict};
pub use rational::Rational;
