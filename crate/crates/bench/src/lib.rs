//! Fixtures shared by the benchmarks.

use newsvendor_core::{q, ProblemInstance};

/// Unit-capacity instance with `mu = 1/2`, `b = 1` and an empty start.
pub fn unit(horizon: usize) -> ProblemInstance {
    ProblemInstance::new(q(1, 2), q(1, 1), q(1, 1), horizon, q(0, 1)).expect("valid fixture")
}

/// Same as [`unit`] with a less regular backorder cost.
pub fn skewed(horizon: usize) -> ProblemInstance {
    ProblemInstance::new(q(2, 7), q(1, 1), q(5, 2), horizon, q(0, 1)).expect("valid fixture")
}
