//! Inputs shared by the benchmarks.

use aemod_core::planner::{loops_of, solve_routing, PhaseResult};
use aemod_core::scenario::fig2_table1;
use aemod_core::{Scenario, TripGraph, VehicleLoop};

pub fn fixture() -> Scenario {
    fig2_table1().to_scenario(None).expect("bundled fixture is valid")
}

/// Phase-1 solution of the fixture with its trip graph and loops.
pub fn routed() -> (Scenario, PhaseResult, TripGraph, Vec<VehicleLoop>) {
    let sc = fixture();
    let p1 = solve_routing(&sc).expect("fixture routes");
    let (graph, loops) = loops_of(&sc, &p1.solution).expect("fixture decomposes");
    (sc, p1, graph, loops)
}
