//! Fixtures shared by the benchmarks.

use pffc_core::experiment::ExperimentConfig;
use pffc_core::{Control, Problem};

/// Example 1 geometry on an `n x n` mesh with `steps` time steps.
pub fn example1(n: usize, steps: usize) -> Problem {
    let mut c = ExperimentConfig::preset("example1").expect("built-in preset");
    c.mesh = n;
    c.steps = steps;
    c.build_problem().expect("valid configuration")
}

/// The control used by the verification checks, `q_d (1 + x)`.
pub fn ramp(problem: &Problem) -> Control {
    let q_d = problem.cost.q_d.as_slice()[0];
    Control::from_fn(problem.disc.mesh(), |x| q_d * (1.0 + x))
}
