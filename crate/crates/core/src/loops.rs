//! Trip-level multigraph and greedy loop recovery.
//!
//! Nodes are trip endpoints; every customer demand and every rebalancing pair
//! with positive flow is one edge. Loops are closed walks over these trips.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::demand::DemandSet;
use crate::error::{Error, Result};
use crate::model::{CommodityKind, FlowSolution};
use crate::network::NodeId;

/// Residual trip flows below this are treated as exhausted.
pub const FLOW_QUANTUM: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TripKind {
    /// Demand with this id.
    Customer {
        demand: usize,
    },
    Rebalance,
}

impl TripKind {
    pub fn is_rebalance(&self) -> bool {
        matches!(self, TripKind::Rebalance)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trip {
    pub kind: TripKind,
    pub origin: NodeId,
    pub destination: NodeId,
    pub flow: f64,
    /// Road flows of this trip's commodity.
    #[serde(skip)]
    pub road_subflow: Vec<f64>,
}

impl Trip {
    pub fn label(&self) -> String {
        match self.kind {
            TripKind::Customer { demand } => {
                format!("customer {} ({} -> {})", demand, self.origin, self.destination)
            }
            TripKind::Rebalance => format!("rebalance ({} -> {})", self.origin, self.destination),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TripGraph {
    pub trips: Vec<Trip>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleLoop {
    /// Indices into [`TripGraph::trips`], in driving order.
    pub trips: Vec<usize>,
    pub flow: f64,
}

impl TripGraph {
    pub fn new(trips: Vec<Trip>) -> Self {
        TripGraph { trips }
    }

    /// Incoming minus outgoing trip flow per endpoint.
    pub fn imbalance(&self) -> BTreeMap<NodeId, f64> {
        let mut b = BTreeMap::new();
        for t in &self.trips {
            *b.entry(t.destination).or_insert(0.0) += t.flow;
            *b.entry(t.origin).or_insert(0.0) -= t.flow;
        }
        b
    }

    pub fn total_flow(&self) -> f64 {
        self.trips.iter().map(|t| t.flow).sum()
    }
}

/// One customer trip per demand and one rebalancing trip per pair whose
/// departure rate exceeds `tol`. Node imbalances up to `tol` are repaired by
/// rescaling rebalancing trips; larger ones are an error.
pub fn build_trip_graph(
    network: &crate::network::RoadNetwork,
    demands: &DemandSet,
    solution: &FlowSolution,
    tol: f64,
) -> Result<TripGraph> {
    let mut trips = Vec::new();
    for (m, d) in demands.demands().iter().enumerate() {
        let flows = solution
            .flows_of(&CommodityKind::Customer { demand: m })
            .ok_or_else(|| Error::Algorithm(format!("solution lacks customer commodity {}", d.id)))?;
        trips.push(Trip {
            kind: TripKind::Customer { demand: d.id },
            origin: d.origin,
            destination: d.destination,
            flow: d.rate,
            road_subflow: flows.to_vec(),
        });
    }
    for c in &solution.commodities {
        let CommodityKind::Rebalance { from, to } = c.commodity else { continue };
        if from == to {
            continue;
        }
        let flow: f64 = network.outgoing(from).iter().map(|&e| c.flows[e]).sum();
        if flow > tol {
            trips.push(Trip {
                kind: TripKind::Rebalance,
                origin: from,
                destination: to,
                flow,
                road_subflow: c.flows.clone(),
            });
        }
    }
    let mut graph = TripGraph::new(trips);
    for (&node, &imb) in &graph.imbalance() {
        if imb.abs() > tol {
            return Err(Error::Inconsistent { node, imbalance: imb });
        }
    }
    repair_balance(&mut graph, demands);
    Ok(graph)
}

/// Alternating row/column rescaling of rebalancing trips so that departures
/// and arrivals match the net rebalancing flows.
fn repair_balance(graph: &mut TripGraph, demands: &DemandSet) {
    for _ in 0..50 {
        let mut out: BTreeMap<NodeId, f64> = BTreeMap::new();
        for t in graph.trips.iter().filter(|t| t.kind.is_rebalance()) {
            *out.entry(t.origin).or_insert(0.0) += t.flow;
        }
        for t in graph.trips.iter_mut().filter(|t| t.kind.is_rebalance()) {
            let want = demands.net_rebalancing_flow(t.origin).max(0.0);
            if out[&t.origin] > 0.0 {
                t.flow *= want / out[&t.origin];
            }
        }
        let mut inn: BTreeMap<NodeId, f64> = BTreeMap::new();
        for t in graph.trips.iter().filter(|t| t.kind.is_rebalance()) {
            *inn.entry(t.destination).or_insert(0.0) += t.flow;
        }
        for t in graph.trips.iter_mut().filter(|t| t.kind.is_rebalance()) {
            let want = (-demands.net_rebalancing_flow(t.destination)).max(0.0);
            if inn[&t.destination] > 0.0 {
                t.flow *= want / inn[&t.destination];
            }
        }
        let worst = graph.imbalance().values().fold(0.0f64, |m, v| m.max(v.abs()));
        if worst <= 1e-12 * demands.max_rate().max(1.0) {
            break;
        }
    }
}

/// Greedy walk: from the lowest node with unlooped flow, follow the trip with
/// the largest residual flow (ties: lowest destination, then lowest index)
/// until a node repeats, then peel off that cycle.
pub fn recover_loops(graph: &TripGraph) -> Result<Vec<VehicleLoop>> {
    let mut residual: Vec<f64> = graph.trips.iter().map(|t| if t.flow < FLOW_QUANTUM { 0.0 } else { t.flow }).collect();
    let mut by_origin: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
    for (i, t) in graph.trips.iter().enumerate() {
        by_origin.entry(t.origin).or_default().push(i);
    }
    let max_extractions = graph.trips.len() + 1;
    let max_steps = graph.imbalance().len() + 1;
    let mut loops = Vec::new();

    for _ in 0..=max_extractions {
        let start = by_origin.iter().find(|(_, ts)| ts.iter().any(|&i| residual[i] > 0.0)).map(|(&n, _)| n);
        let Some(start) = start else { return Ok(loops) };

        let mut nodes = vec![start];
        let mut walk: Vec<usize> = Vec::new();
        loop {
            if walk.len() > max_steps {
                return Err(Error::Algorithm(format!("loop walk from node {start} did not close")));
            }
            let v = *nodes.last().unwrap();
            let next = by_origin.get(&v).and_then(|ts| {
                ts.iter().copied().filter(|&i| residual[i] > 0.0).max_by(|&i, &j| {
                    residual[i]
                        .total_cmp(&residual[j])
                        .then(graph.trips[j].destination.cmp(&graph.trips[i].destination))
                        .then(j.cmp(&i))
                })
            });
            let Some(i) = next else {
                // dead end: only float dust can lead here
                let last = *walk.last().expect("start node has outgoing flow");
                if residual[last] > 1e-6 * graph.trips[last].flow.max(1.0) {
                    return Err(Error::Inconsistent { node: v, imbalance: residual[last] });
                }
                residual[last] = 0.0;
                break;
            };
            walk.push(i);
            let w = graph.trips[i].destination;
            if let Some(p) = nodes.iter().position(|&n| n == w) {
                let cycle = walk[p..].to_vec();
                let flow = cycle.iter().map(|&k| residual[k]).fold(f64::INFINITY, f64::min);
                for &k in &cycle {
                    residual[k] -= flow;
                    if residual[k] < FLOW_QUANTUM {
                        residual[k] = 0.0;
                    }
                }
                loops.push(VehicleLoop { trips: cycle, flow });
                break;
            }
            nodes.push(w);
        }
    }
    Err(Error::Algorithm(format!("loop recovery exceeded {max_extractions} extractions with flow remaining")))
}

/// Total loop flow assigned to each trip.
pub fn loop_coverage(graph: &TripGraph, loops: &[VehicleLoop]) -> Vec<f64> {
    let mut cover = vec![0.0; graph.trips.len()];
    for l in loops {
        for &t in &l.trips {
            cover[t] += l.flow;
        }
    }
    cover
}
