//! End-to-end pipeline: routing, loops, charging schedule, re-routing and
//! energy verification, plus the congestion-unaware baseline.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::demand::DemandSet;
use crate::energy::{BatteryModel, EnergyCurve};
use crate::error::{Error, Phase, Result};
use crate::loops::{build_trip_graph, recover_loops, Trip, TripGraph, VehicleLoop};
use crate::model::{build_problem, exact_objective, extract_solution, qp_objective, FlowSolution, ModelOptions};
use crate::network::{fit_piecewise, NodeId, PiecewiseTravelTime, PwaConfig, RoadNetwork};
use crate::scheduler::{schedule_charging, verify_loops, ChargingSchedule, LoopVerdict, ScheduleSet};
use crate::solver::{solve_qp_with_log, IterationRecord, SolverSettings, SolverStatus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineSettings {
    /// Schedule / re-route / verify passes; the first pass is the plain method.
    pub max_rounds: usize,
    pub prune_rebalancing: bool,
}

impl Default for PipelineSettings {
    fn default() -> Self {
        PipelineSettings { max_rounds: 3, prune_rebalancing: true }
    }
}

impl PipelineSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_rounds == 0 {
            return Err(Error::Config("pipeline.max_rounds must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub network: RoadNetwork,
    pub demands: DemandSet,
    pub w_r: f64,
    pub pwa: PwaConfig,
    pub curve: EnergyCurve,
    pub battery: BatteryModel,
    pub solver: SolverSettings,
    pub pipeline: PipelineSettings,
    /// Optional drawing coordinates.
    pub positions: BTreeMap<NodeId, (f64, f64)>,
}

impl Scenario {
    pub fn piecewise(&self) -> Result<Vec<PiecewiseTravelTime>> {
        self.network.roads().iter().map(|r| fit_piecewise(r, &self.pwa)).collect()
    }

    /// Scale used by flow tolerances.
    pub fn flow_scale(&self) -> f64 {
        self.demands.max_rate().max(1.0)
    }

    fn model_options(&self) -> ModelOptions {
        ModelOptions { prune_rebalancing: self.pipeline.prune_rebalancing }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CongestionSummary {
    /// `x / capacity` per road.
    pub ratios: Vec<f64>,
    pub max: f64,
    pub mean: f64,
}

pub fn congestion_summary(solution: &FlowSolution, network: &RoadNetwork) -> CongestionSummary {
    let ratios: Vec<f64> = network.roads().iter().zip(&solution.x).map(|(r, &x)| r.congestion_ratio(x)).collect();
    let max = ratios.iter().copied().fold(0.0, f64::max);
    let mean = if ratios.is_empty() { 0.0 } else { ratios.iter().sum::<f64>() / ratios.len() as f64 };
    CongestionSummary { ratios, max, mean }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub status: SolverStatus,
    pub iterations: usize,
    pub polished: bool,
    pub rho_updates: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub variables: usize,
    pub equality_rows: usize,
    pub inequality_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseResult {
    pub solution: FlowSolution,
    /// Cost with BPR travel times.
    pub exact_objective: f64,
    /// Value of the convex program that was solved.
    pub qp_objective: f64,
    pub congestion: CongestionSummary,
    /// Largest flow-requirement residual, checked on the road flows.
    pub conservation_residual: f64,
    pub solver: SolverStats,
}

fn solve_phase(
    scenario: &Scenario,
    pwa: &[PiecewiseTravelTime],
    schedules: &[ChargingSchedule],
    phase: Phase,
    log: &mut dyn FnMut(Phase, &IterationRecord),
) -> Result<PhaseResult> {
    let (qp, layout) =
        build_problem(&scenario.network, &scenario.demands, scenario.w_r, pwa, schedules, scenario.model_options())?;
    let problem = qp.to_standard_form()?;
    let res = solve_qp_with_log(&problem, &scenario.solver, &mut |r| log(phase, r))?;
    log::info!("{phase} solve: {:?} after {} iterations (polished: {})", res.status, res.iterations, res.polished);
    if !res.status.has_solution() {
        return Err(Error::Solver { phase, status: res.status });
    }
    let tol = scenario.solver.eps_abs + scenario.solver.eps_rel * scenario.flow_scale();
    let solution = extract_solution(&layout, &res.x, tol)?;
    let conservation = solution.conservation(&scenario.network, &scenario.demands, schedules);
    Ok(PhaseResult {
        exact_objective: exact_objective(&scenario.network, &solution, scenario.w_r)?,
        qp_objective: qp_objective(&qp, &res.x),
        congestion: congestion_summary(&solution, &scenario.network),
        conservation_residual: conservation.max_residual,
        solver: SolverStats {
            status: res.status,
            iterations: res.iterations,
            polished: res.polished,
            rho_updates: res.rho_updates,
            primal_residual: res.primal_residual,
            dual_residual: res.dual_residual,
            variables: layout.num_vars(),
            equality_rows: qp.eq.nrows,
            inequality_rows: qp.ineq.nrows,
        },
        solution,
    })
}

/// Routing with free-flow travel times: every slope is zero, so the program
/// is linear in the same variables.
pub fn baseline_congestion_unaware(scenario: &Scenario) -> Result<PhaseResult> {
    baseline_with_log(scenario, &mut |_, _| {})
}

fn baseline_with_log(scenario: &Scenario, log: &mut dyn FnMut(Phase, &IterationRecord)) -> Result<PhaseResult> {
    let flat: Vec<PiecewiseTravelTime> =
        scenario.piecewise()?.into_iter().map(|p| PiecewiseTravelTime { a: 0.0, b: 0.0, ..p }).collect();
    solve_phase(scenario, &flat, &[], Phase::Baseline, log)
}

/// Routing with the congestion-aware convex program.
pub fn solve_routing(scenario: &Scenario) -> Result<PhaseResult> {
    solve_phase(scenario, &scenario.piecewise()?, &[], Phase::Routing, &mut |_, _| {})
}

pub fn solve_rerouting(scenario: &Scenario, schedules: &ScheduleSet) -> Result<PhaseResult> {
    solve_phase(scenario, &scenario.piecewise()?, schedules.as_slice(), Phase::Rerouting, &mut |_, _| {})
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopSet {
    pub trips: Vec<Trip>,
    pub loops: Vec<VehicleLoop>,
}

impl LoopSet {
    pub fn graph(&self) -> TripGraph {
        TripGraph::new(self.trips.clone())
    }
}

/// Trip graph and loops of a solved phase.
pub fn loops_of(scenario: &Scenario, solution: &FlowSolution) -> Result<(TripGraph, Vec<VehicleLoop>)> {
    let tol = 1e-6 * scenario.flow_scale();
    let graph = build_trip_graph(&scenario.network, &scenario.demands, solution, tol)?;
    let loops = recover_loops(&graph)?;
    Ok((graph, loops))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyVerdict {
    pub feasible: bool,
    pub loops: Vec<LoopVerdict>,
}

/// Recovers loops from `solution` and replays each against `schedules`.
pub fn verify_energy_feasibility(
    scenario: &Scenario,
    solution: &FlowSolution,
    schedules: &ScheduleSet,
) -> Result<(LoopSet, EnergyVerdict)> {
    let (graph, loops) = loops_of(scenario, solution)?;
    let verdicts =
        verify_loops(&graph, &loops, schedules, &scenario.network, &solution.x, &scenario.curve, &scenario.battery);
    let feasible = verdicts.iter().all(|v| v.feasible);
    Ok((LoopSet { trips: graph.trips, loops }, EnergyVerdict { feasible, loops: verdicts }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub schedules: ScheduleSet,
    pub exact_objective: f64,
    pub feasible: bool,
    pub infeasible_loops: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanOptions {
    pub baseline: bool,
    pub routing: bool,
    pub charging: bool,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions { baseline: true, routing: true, charging: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeInfo {
    pub from: NodeId,
    pub to: NodeId,
    pub t0: f64,
    pub gamma: f64,
    pub length: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkInfo {
    pub nodes: Vec<NodeId>,
    pub charging_stations: Vec<NodeId>,
    pub edges: Vec<EdgeInfo>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub positions: BTreeMap<NodeId, (f64, f64)>,
}

impl NetworkInfo {
    pub fn of(scenario: &Scenario) -> Self {
        let net = &scenario.network;
        NetworkInfo {
            nodes: net.nodes().to_vec(),
            charging_stations: net.charging_stations().iter().copied().collect(),
            edges: net
                .roads()
                .iter()
                .map(|r| EdgeInfo {
                    from: r.from,
                    to: r.to,
                    t0: r.free_flow_time,
                    gamma: r.capacity,
                    length: r.length,
                    p: r.private_flow,
                })
                .collect(),
            positions: scenario.positions.clone(),
        }
    }
}

/// Everything a planning run produced. Absent phases were not requested.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub network: NetworkInfo,
    pub w_r: f64,
    pub baseline: Option<PhaseResult>,
    pub phase1: Option<PhaseResult>,
    /// Loops recovered from the routing solution.
    pub loops: Option<LoopSet>,
    /// Schedules behind the final re-routing solution.
    pub schedules: Option<ScheduleSet>,
    pub phase2: Option<PhaseResult>,
    /// Loops of the final re-routing solution, as verified.
    pub verified_loops: Option<LoopSet>,
    pub verdict: Option<EnergyVerdict>,
    pub rounds: Vec<RoundRecord>,
    /// Set when a single trip cannot be driven even on a full battery; the
    /// verdict then replays the routing loops without charging.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infeasible_trip: Option<String>,
}

impl PlanReport {
    pub fn phase(&self, name: &str) -> Option<&PhaseResult> {
        match name {
            "baseline" => self.baseline.as_ref(),
            "p1" | "phase1" => self.phase1.as_ref(),
            "p2" | "phase2" => self.phase2.as_ref(),
            _ => None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Runs the requested stages in order. Charging needs routing.
pub fn plan(scenario: &Scenario, options: PlanOptions) -> Result<PlanReport> {
    plan_with_log(scenario, options, &mut |_, _| {})
}

/// Like [`plan`], forwarding every solver iteration record to `log`.
pub fn plan_with_log(
    scenario: &Scenario,
    options: PlanOptions,
    log: &mut dyn FnMut(Phase, &IterationRecord),
) -> Result<PlanReport> {
    let pwa = scenario.piecewise()?;
    let mut report = PlanReport {
        network: NetworkInfo::of(scenario),
        w_r: scenario.w_r,
        baseline: None,
        phase1: None,
        loops: None,
        schedules: None,
        phase2: None,
        verified_loops: None,
        verdict: None,
        rounds: Vec::new(),
        infeasible_trip: None,
    };
    if options.baseline {
        report.baseline = Some(baseline_with_log(scenario, log)?);
    }
    if !options.routing {
        return Ok(report);
    }
    let phase1 = solve_phase(scenario, &pwa, &[], Phase::Routing, log)?;
    let (graph, loops) = loops_of(scenario, &phase1.solution)?;
    report.loops = Some(LoopSet { trips: graph.trips.clone(), loops: loops.clone() });
    if !options.charging {
        report.phase1 = Some(phase1);
        return Ok(report);
    }

    let (mut graph, mut loops, mut x) = (graph, loops, phase1.solution.x.clone());
    report.phase1 = Some(phase1);
    for round in 1..=scenario.pipeline.max_rounds {
        let schedules =
            match schedule_charging(&graph, &loops, &scenario.network, &x, &scenario.curve, &scenario.battery) {
                Ok(s) => s,
                Err(e @ Error::InfeasibleTrip { .. }) => {
                    log::warn!("{e}");
                    report.infeasible_trip = Some(e.to_string());
                    if round > 1 {
                        // the last verdict already failed
                        return Ok(report);
                    }
                    let verdicts = verify_loops(
                        &graph,
                        &loops,
                        &ScheduleSet::default(),
                        &scenario.network,
                        &x,
                        &scenario.curve,
                        &scenario.battery,
                    );
                    report.verdict = Some(EnergyVerdict { feasible: false, loops: verdicts });
                    return Ok(report);
                }
                Err(e) => return Err(e),
            };
        let phase2 = solve_phase(scenario, &pwa, schedules.as_slice(), Phase::Rerouting, log)?;
        let (checked, verdict) = verify_energy_feasibility(scenario, &phase2.solution, &schedules)?;
        log::info!(
            "round {round}: {} schedules, {} of {} loops feasible",
            schedules.len(),
            verdict.loops.iter().filter(|v| v.feasible).count(),
            verdict.loops.len()
        );
        report.rounds.push(RoundRecord {
            round,
            schedules: schedules.clone(),
            exact_objective: phase2.exact_objective,
            feasible: verdict.feasible,
            infeasible_loops: verdict.loops.iter().filter(|v| !v.feasible).count(),
        });
        let done = verdict.feasible;
        graph = checked.graph();
        loops = checked.loops.clone();
        x = phase2.solution.x.clone();
        report.schedules = Some(schedules);
        report.phase2 = Some(phase2);
        report.verified_loops = Some(checked);
        report.verdict = Some(verdict);
        if done {
            break;
        }
    }
    Ok(report)
}
