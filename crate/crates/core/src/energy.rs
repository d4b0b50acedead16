//! Edge energy, worst-case trip energy and state of charge after charging.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loops::{Trip, TripKind};
use crate::network::{NodeId, Road, RoadNetwork};

/// Consumption in kWh/km as a piecewise-linear function of speed in km/h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EnergyCurve {
    /// `(speed, consumption)` pairs with strictly increasing speed.
    pub points: Vec<(f64, f64)>,
}

impl Default for EnergyCurve {
    fn default() -> Self {
        EnergyCurve { points: vec![(10.0, 0.22), (30.0, 0.15), (50.0, 0.16), (80.0, 0.24)] }
    }
}

impl EnergyCurve {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        let c = EnergyCurve { points };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::Config("energy curve needs at least one point".into()));
        }
        for w in self.points.windows(2) {
            if w[1].0.partial_cmp(&w[0].0) != Some(std::cmp::Ordering::Greater) {
                return Err(Error::Config(format!("energy curve speeds must increase ({} then {})", w[0].0, w[1].0)));
            }
        }
        for &(s, c) in &self.points {
            if !(s.is_finite() && s > 0.0 && c.is_finite() && c >= 0.0) {
                return Err(Error::Config(format!("energy curve point ({s}, {c}) is invalid")));
            }
        }
        Ok(())
    }

    /// Consumption at `speed`, and whether the value was clamped to an end point.
    pub fn consumption(&self, speed: f64) -> (f64, bool) {
        let pts = &self.points;
        let (first, last) = (pts[0], pts[pts.len() - 1]);
        if speed < first.0 {
            return (first.1, true);
        }
        if speed > last.0 {
            return (last.1, true);
        }
        if pts.len() == 1 {
            return (first.1, false);
        }
        let k = pts.partition_point(|p| p.0 <= speed).min(pts.len() - 1);
        let (a, b) = (pts[k - 1], pts[k]);
        let t = (speed - a.0) / (b.0 - a.0);
        (a.1 + t * (b.1 - a.1), false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BatteryModel {
    pub capacity_kwh: f64,
    /// Minimum state of charge, as a fraction of capacity.
    pub reserve: f64,
}

impl Default for BatteryModel {
    fn default() -> Self {
        BatteryModel { capacity_kwh: 50.0, reserve: 0.1 }
    }
}

impl BatteryModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.capacity_kwh > 0.0 && self.capacity_kwh.is_finite()) {
            return Err(Error::Config(format!("battery capacity must be positive, got {}", self.capacity_kwh)));
        }
        if !(self.reserve > 0.0 && self.reserve < 1.0) {
            return Err(Error::Config(format!("battery reserve must lie in (0, 1), got {}", self.reserve)));
        }
        Ok(())
    }

    pub fn fraction(&self, kwh: f64) -> f64 {
        kwh / self.capacity_kwh
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeEnergy {
    pub kwh: f64,
    pub speed: f64,
    /// Speed fell outside the sampled curve.
    pub extrapolated: bool,
}

/// `s · E_f(s / t(x))` with the BPR travel time.
pub fn edge_energy(road: &Road, x: f64, curve: &EnergyCurve) -> Result<EdgeEnergy> {
    let t = road.bpr_travel_time(x)?;
    let speed = road.length / t;
    let (c, extrapolated) = curve.consumption(speed);
    Ok(EdgeEnergy { kwh: road.length * c, speed, extrapolated })
}

/// Arc of a flow subgraph: `(from, to, flow, energy)`.
pub type FlowArc = (NodeId, NodeId, f64, f64);

/// Largest summed energy over origin-to-destination paths of a flow subgraph.
///
/// Arcs with flow at or below `min_flow` are ignored. When origin and
/// destination coincide, the origin is split into a source and a sink copy.
/// Remaining directed cycles are cancelled by their smallest flow.
pub fn max_path_energy(origin: NodeId, destination: NodeId, arcs: &[FlowArc], min_flow: f64) -> Result<f64> {
    // node indices: 0 = source copy of origin, 1 = sink copy (or origin when distinct)
    let mut index: BTreeMap<NodeId, usize> = BTreeMap::new();
    let split = origin == destination;
    let src = 0usize;
    let dst = if split { 1 } else { 0 };
    let mut n = if split { 2 } else { 1 };
    index.insert(origin, 0);
    let mut id = |v: NodeId, index: &mut BTreeMap<NodeId, usize>| -> usize {
        *index.entry(v).or_insert_with(|| {
            n += 1;
            n - 1
        })
    };
    let dst = if split { dst } else { id(destination, &mut index) };

    let mut edges: Vec<(usize, usize, f64, f64)> = Vec::new();
    for &(a, b, f, e) in arcs {
        if f <= min_flow {
            continue;
        }
        let ia = id(a, &mut index);
        let mut ib = id(b, &mut index);
        if split && b == origin {
            ib = dst;
        }
        edges.push((ia, ib, f, e));
    }
    let n = n;

    cancel_cycles(n, &mut edges, min_flow);

    let mut indeg = vec![0usize; n];
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, &(a, b, _, _)) in edges.iter().enumerate() {
        adj[a].push(k);
        indeg[b] += 1;
    }
    let mut best = vec![f64::NEG_INFINITY; n];
    best[src] = 0.0;
    let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    while let Some(v) = queue.pop_front() {
        for &k in &adj[v] {
            let (_, w, _, e) = edges[k];
            if best[v] > f64::NEG_INFINITY {
                best[w] = best[w].max(best[v] + e);
            }
            indeg[w] -= 1;
            if indeg[w] == 0 {
                queue.push_back(w);
            }
        }
    }
    if best[dst] == f64::NEG_INFINITY {
        return Err(Error::Algorithm(format!(
            "destination {destination} is not reachable from {origin} in the trip flow"
        )));
    }
    Ok(best[dst])
}

/// Removes directed cycles by subtracting each cycle's minimum flow. Detours to a
/// charging station and back are the usual source.
fn cancel_cycles(n: usize, edges: &mut Vec<(usize, usize, f64, f64)>, min_flow: f64) {
    while let Some(cycle) = find_cycle(n, edges) {
        let f = cycle.iter().map(|&k| edges[k].2).fold(f64::INFINITY, f64::min);
        log::debug!("cancelling a directed cycle of {} arcs carrying {f:e} in a trip flow", cycle.len());
        for &k in &cycle {
            edges[k].2 -= f;
        }
        edges.retain(|e| e.2 > min_flow);
    }
}

fn find_cycle(n: usize, edges: &[(usize, usize, f64, f64)]) -> Option<Vec<usize>> {
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, e) in edges.iter().enumerate() {
        adj[e.0].push(k);
    }
    // 0 = new, 1 = on stack, 2 = done
    let mut state = vec![0u8; n];
    let mut via: Vec<usize> = vec![usize::MAX; n];
    for root in 0..n {
        if state[root] != 0 {
            continue;
        }
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        state[root] = 1;
        while let Some(&mut (v, ref mut pos)) = stack.last_mut() {
            if *pos < adj[v].len() {
                let k = adj[v][*pos];
                *pos += 1;
                let w = edges[k].1;
                if state[w] == 1 {
                    let mut cycle = vec![k];
                    let mut u = v;
                    while u != w {
                        cycle.push(via[u]);
                        u = edges[via[u]].0;
                    }
                    cycle.reverse();
                    return Some(cycle);
                }
                if state[w] == 0 {
                    state[w] = 1;
                    via[w] = k;
                    stack.push((w, 0));
                }
            } else {
                state[v] = 2;
                stack.pop();
            }
        }
    }
    None
}

/// Worst-case energy in kWh over the paths the trip's flow uses, with every
/// road evaluated at total flow `x`.
pub fn trip_energy_max(trip: &Trip, network: &RoadNetwork, x: &[f64], curve: &EnergyCurve) -> Result<f64> {
    let min_flow = 1e-6 * trip.flow.max(1.0);
    let mut arcs = Vec::new();
    for (e, road) in network.roads().iter().enumerate() {
        let f = trip.road_subflow.get(e).copied().unwrap_or(0.0);
        if f > min_flow {
            arcs.push((road.from, road.to, f, edge_energy(road, x[e], curve)?.kwh));
        }
    }
    max_path_energy(trip.origin, trip.destination, &arcs, min_flow)
}

/// Estimated state of charge at the end of a trip that charged on the way.
///
/// `energy` is the trip energy as a fraction of capacity.
pub fn soc_after_charging(
    kind: TripKind,
    origin: NodeId,
    destination: NodeId,
    energy: f64,
    stations: &BTreeSet<NodeId>,
) -> Result<f64> {
    if !(0.0..1.0).contains(&energy) {
        return Err(Error::Domain(format!("trip energy fraction must lie in [0, 1), got {energy}")));
    }
    let soc = match kind {
        TripKind::Rebalance if stations.contains(&destination) => 1.0,
        TripKind::Rebalance if stations.contains(&origin) => 1.0 - energy,
        TripKind::Rebalance => 0.9,
        TripKind::Customer { .. } if stations.contains(&destination) => 1.0 - energy,
        TripKind::Customer { .. } => 0.9 - energy,
    };
    if soc < 0.0 {
        return Err(Error::InfeasibleTrip { trip: format!("{origin} -> {destination}"), soc });
    }
    Ok(soc)
}
