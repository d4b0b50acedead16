use crate::error::{Error, Result};
use crate::network::{PiecewiseTravelTime, RoadNetwork};

use super::solution::FlowSolution;
use super::QuadraticProgram;

fn check_dims(network: &RoadNetwork, solution: &FlowSolution) -> Result<()> {
    if solution.x.len() != network.num_roads() {
        return Err(Error::Config(format!(
            "solution has {} roads, network has {}",
            solution.x.len(),
            network.num_roads()
        )));
    }
    Ok(())
}

/// `Σ t(x) u + w_r r` with the BPR travel time.
pub fn exact_objective(network: &RoadNetwork, solution: &FlowSolution, w_r: f64) -> Result<f64> {
    check_dims(network, solution)?;
    let mut total = 0.0;
    for (e, road) in network.roads().iter().enumerate() {
        total += road.bpr_travel_time(solution.x[e])? * solution.u[e] + w_r * solution.r[e];
    }
    Ok(total)
}

/// Same sum with the piecewise-affine travel time.
pub fn approx_objective(
    network: &RoadNetwork,
    pwa: &[PiecewiseTravelTime],
    solution: &FlowSolution,
    w_r: f64,
) -> Result<f64> {
    check_dims(network, solution)?;
    let mut total = 0.0;
    for (e, road) in network.roads().iter().enumerate() {
        total += pwa[e].travel_time(road.free_flow_time, solution.x[e])? * solution.u[e] + w_r * solution.r[e];
    }
    Ok(total)
}

/// `½ vᵀ P v + qᵀ v` of the assembled program.
pub fn qp_objective(program: &QuadraticProgram, v: &[f64]) -> f64 {
    program.quadratic.iter().zip(&program.linear).zip(v).map(|((p, q), x)| 0.5 * p * x * x + q * x).sum()
}
