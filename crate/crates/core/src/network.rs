//! Road graph, BPR volume-delay evaluation and the three-segment
//! piecewise-affine travel time used by the convex model.
//!
//! Units are hours, kilometres and vehicles per hour throughout.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = u32;

/// Index of a road inside [`RoadNetwork::roads`].
pub type EdgeId = usize;

/// BPR coefficient on the fourth-power congestion term.
pub const BPR_ALPHA: f64 = 0.15;
pub const BPR_POWER: i32 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Road {
    pub from: NodeId,
    pub to: NodeId,
    /// Free-flow travel time in hours.
    pub free_flow_time: f64,
    /// Capacity in vehicles per hour.
    pub capacity: f64,
    /// Length in kilometres.
    pub length: f64,
    /// Exogenous private-vehicle flow, constant.
    pub private_flow: f64,
}

fn check_flow(x: f64) -> Result<()> {
    if x.is_finite() && x >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("flow must be finite and non-negative, got {x}")))
    }
}

impl Road {
    pub fn new(
        from: NodeId,
        to: NodeId,
        free_flow_time: f64,
        capacity: f64,
        length: f64,
        private_flow: f64,
    ) -> Result<Self> {
        let road = Road { from, to, free_flow_time, capacity, length, private_flow };
        let issues = road.issues();
        if issues.is_empty() {
            Ok(road)
        } else {
            Err(Error::Validation(issues))
        }
    }

    fn issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        let tag = format!("road {}->{}", self.from, self.to);
        if self.from == self.to {
            out.push(format!("{tag}: self-loop"));
        }
        if !(self.free_flow_time > 0.0 && self.free_flow_time.is_finite()) {
            out.push(format!("{tag}: free-flow time must be positive"));
        }
        if !(self.capacity > 0.0 && self.capacity.is_finite()) {
            out.push(format!("{tag}: capacity must be positive"));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            out.push(format!("{tag}: length must be positive"));
        }
        if !(self.private_flow >= 0.0 && self.private_flow.is_finite()) {
            out.push(format!("{tag}: private flow must be non-negative"));
        }
        out
    }

    /// BPR travel time `t0 * (1 + 0.15 (x / capacity)^4)`.
    pub fn bpr_travel_time(&self, x: f64) -> Result<f64> {
        check_flow(x)?;
        Ok(self.bpr_unchecked(x))
    }

    pub(crate) fn bpr_unchecked(&self, x: f64) -> f64 {
        self.free_flow_time * (1.0 + BPR_ALPHA * (x / self.capacity).powi(BPR_POWER))
    }

    pub fn congestion_ratio(&self, x: f64) -> f64 {
        x / self.capacity
    }

    /// Free-flow speed in km/h.
    pub fn free_flow_speed(&self) -> f64 {
        self.length / self.free_flow_time
    }
}

/// Directed road graph with a non-empty set of charging-station nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoadNetwork {
    nodes: Vec<NodeId>,
    roads: Vec<Road>,
    charging_stations: BTreeSet<NodeId>,
    #[serde(skip)]
    index: BTreeMap<NodeId, usize>,
    #[serde(skip)]
    outgoing: Vec<Vec<EdgeId>>,
    #[serde(skip)]
    incoming: Vec<Vec<EdgeId>>,
}

impl RoadNetwork {
    /// Validates and indexes the graph. Every problem found is reported at once.
    pub fn new(
        nodes: impl IntoIterator<Item = NodeId>,
        roads: Vec<Road>,
        charging_stations: impl IntoIterator<Item = NodeId>,
    ) -> Result<Self> {
        let mut issues = Vec::new();
        let mut node_set = BTreeSet::new();
        for n in nodes {
            if !node_set.insert(n) {
                issues.push(format!("duplicate node {n}"));
            }
        }
        let nodes: Vec<NodeId> = node_set.iter().copied().collect();
        let index: BTreeMap<NodeId, usize> = nodes.iter().enumerate().map(|(i, &n)| (n, i)).collect();

        let mut seen = BTreeSet::new();
        for road in &roads {
            issues.extend(road.issues());
            for end in [road.from, road.to] {
                if !index.contains_key(&end) {
                    issues.push(format!("road {}->{} references unknown node {end}", road.from, road.to));
                }
            }
            if !seen.insert((road.from, road.to)) {
                issues.push(format!("duplicate road {}->{}", road.from, road.to));
            }
        }

        let charging_stations: BTreeSet<NodeId> = charging_stations.into_iter().collect();
        if charging_stations.is_empty() {
            issues.push(
                "no charging stations: every vehicle must be able to reach a charger on its reserve, so at least one is required"
                    .to_string(),
            );
        }
        for c in &charging_stations {
            if !index.contains_key(c) {
                issues.push(format!("charging station {c} is not a node"));
            }
        }
        if !issues.is_empty() {
            return Err(Error::Validation(issues));
        }

        let mut outgoing = vec![Vec::new(); nodes.len()];
        let mut incoming = vec![Vec::new(); nodes.len()];
        for (e, road) in roads.iter().enumerate() {
            outgoing[index[&road.from]].push(e);
            incoming[index[&road.to]].push(e);
        }
        Ok(RoadNetwork { nodes, roads, charging_stations, index, outgoing, incoming })
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn roads(&self) -> &[Road] {
        &self.roads
    }

    pub fn road(&self, e: EdgeId) -> &Road {
        &self.roads[e]
    }

    pub fn num_roads(&self) -> usize {
        self.roads.len()
    }

    pub fn charging_stations(&self) -> &BTreeSet<NodeId> {
        &self.charging_stations
    }

    pub fn is_station(&self, n: NodeId) -> bool {
        self.charging_stations.contains(&n)
    }

    pub fn contains(&self, n: NodeId) -> bool {
        self.index.contains_key(&n)
    }

    pub fn outgoing(&self, n: NodeId) -> &[EdgeId] {
        self.index.get(&n).map_or(&[], |&i| &self.outgoing[i])
    }

    pub fn incoming(&self, n: NodeId) -> &[EdgeId] {
        self.index.get(&n).map_or(&[], |&i| &self.incoming[i])
    }

    /// Nodes reachable from `start` along directed roads, `start` included.
    pub fn reachable_from(&self, start: NodeId) -> BTreeSet<NodeId> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![start];
        while let Some(n) = stack.pop() {
            if !seen.insert(n) {
                continue;
            }
            for &e in self.outgoing(n) {
                stack.push(self.roads[e].to);
            }
        }
        seen
    }

    /// Copy of the network with every road's private flow replaced.
    pub fn with_private_flows(&self, flows: &[f64]) -> Result<Self> {
        if flows.len() != self.roads.len() {
            return Err(Error::Domain("private flow vector length mismatch".into()));
        }
        let mut out = self.clone();
        for (road, &p) in out.roads.iter_mut().zip(flows) {
            check_flow(p)?;
            road.private_flow = p;
        }
        Ok(out)
    }
}

/// Dimensionless description of the three-segment approximation, shared by all roads.
///
/// Thresholds are fractions of capacity and slopes are in units of `t0` per unit
/// of `x / capacity`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PwaConfig {
    pub f1: f64,
    pub f2: f64,
    pub l1: f64,
    pub l2: f64,
}

impl Default for PwaConfig {
    fn default() -> Self {
        // max relative error against BPR on [0, 2γ] is about 5.5%
        PwaConfig { f1: 0.7, f2: 1.4, l1: 0.7, l2: 2.9 }
    }
}

impl PwaConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [self.f1, self.f2, self.l1, self.l2].iter().all(|v| v.is_finite());
        if !finite || !(self.f1 > 0.0 && self.f1 < self.f2) {
            return Err(Error::Config(format!(
                "thresholds must satisfy 0 < f1 < f2 (got f1={}, f2={})",
                self.f1, self.f2
            )));
        }
        if !(self.l1 > 0.0 && self.l1 < self.l2) {
            return Err(Error::Config(format!("slopes must satisfy 0 < l1 < l2 (got l1={}, l2={})", self.l1, self.l2)));
        }
        Ok(())
    }
}

/// Per-road three-segment travel time: flat up to `x_th1`, slope `a t0` up to
/// `x_th2`, slope `b t0` afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseTravelTime {
    pub x_th1: f64,
    pub x_th2: f64,
    pub a: f64,
    pub b: f64,
}

pub fn fit_piecewise(road: &Road, config: &PwaConfig) -> Result<PiecewiseTravelTime> {
    config.validate()?;
    let gamma = road.capacity;
    Ok(PiecewiseTravelTime {
        x_th1: config.f1 * gamma,
        x_th2: config.f2 * gamma,
        a: config.l1 / gamma,
        b: config.l2 / gamma,
    })
}

impl PiecewiseTravelTime {
    /// Flat approximation used by the congestion-unaware baseline.
    pub fn is_flat(&self) -> bool {
        self.a == 0.0 && self.b == 0.0
    }

    /// Excess flows `(ε1, ε2)` over the two thresholds.
    pub fn slacks(&self, x: f64) -> (f64, f64) {
        let e2 = (x - self.x_th2).max(0.0);
        let e1 = (x - self.x_th1 - e2).max(0.0);
        (e1, e2)
    }

    pub fn travel_time(&self, t0: f64, x: f64) -> Result<f64> {
        check_flow(x)?;
        let t = if x < self.x_th1 {
            t0
        } else if x < self.x_th2 {
            t0 * (1.0 + self.a * (x - self.x_th1))
        } else {
            t0 * (1.0 + self.a * (self.x_th2 - self.x_th1) + self.b * (x - self.x_th2))
        };
        Ok(t)
    }

    /// Same value as [`travel_time`](Self::travel_time), written through the slacks.
    pub fn travel_time_from_slacks(&self, t0: f64, x: f64) -> Result<f64> {
        check_flow(x)?;
        let (e1, e2) = self.slacks(x);
        Ok(t0 * (1.0 + self.a * e1 + self.b * e2))
    }
}

pub fn compute_slacks(pwa: &PiecewiseTravelTime, x: f64) -> Result<(f64, f64)> {
    check_flow(x)?;
    Ok(pwa.slacks(x))
}

pub fn bpr_travel_time(road: &Road, x: f64) -> Result<f64> {
    road.bpr_travel_time(x)
}

pub fn pwa_travel_time(pwa: &PiecewiseTravelTime, t0: f64, x: f64) -> Result<f64> {
    pwa.travel_time(t0, x)
}

pub fn congestion_ratio(road: &Road, x: f64) -> f64 {
    road.congestion_ratio(x)
}
