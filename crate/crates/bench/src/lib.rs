//! Benchmark fixtures shared by the criterion targets.

use instablab::spectrum::{build_linearized, LinearizedOperator};
use instablab::steady::{critical_bubble, SteadyStateProfile};
use instablab::{ProblemSpec, RadialGrid};

/// The quintic bubble in three dimensions on `[0, r_max]`.
pub fn bubble(r_max: f64, nodes: usize) -> (ProblemSpec, SteadyStateProfile, LinearizedOperator) {
    let grid = RadialGrid::uniform(r_max, nodes).expect("valid grid");
    let spec = ProblemSpec::power(3, 5.0).expect("valid spec");
    let profile = critical_bubble(3, 1.0, &grid).expect("bubble");
    let op = build_linearized(&spec, &profile, &grid).expect("operator");
    (spec, profile, op)
}
