//! Congestion-aware routing, rebalancing and charging planner for electric
//! mobility-on-demand fleets.

#![allow(clippy::needless_range_loop)]

pub mod demand;
pub mod energy;
pub mod error;
pub mod loops;
pub mod model;
pub mod network;
pub mod planner;
pub mod scenario;
pub mod scheduler;
pub mod solver;

pub use demand::{DemandSet, TravelDemand};
pub use energy::{edge_energy, soc_after_charging, trip_energy_max, BatteryModel, EnergyCurve};
pub use error::{Error, Phase, Result};
pub use loops::{build_trip_graph, recover_loops, Trip, TripGraph, TripKind, VehicleLoop};
pub use model::{
    approx_objective, build_rerouting_problem, build_routing_problem, exact_objective, extract_solution, qp_objective,
    FlowSolution, QuadraticProgram, VariableLayout,
};
pub use network::{NodeId, PiecewiseTravelTime, PwaConfig, Road, RoadNetwork};
pub use planner::{plan, plan_with_log, PlanOptions, PlanReport, Scenario};
pub use scenario::ScenarioFile;
pub use scheduler::{merge_schedules, schedule_charging, ChargingSchedule, ScheduleSet};
pub use solver::{
    kkt_residuals, solve_qp, solve_qp_with_log, IterationRecord, SolverResult, SolverSettings, SolverStatus,
};
