use serde::{Deserialize, Serialize};

use crate::demand::DemandSet;
use crate::error::{Error, Result};
use crate::network::{NodeId, RoadNetwork};
use crate::scheduler::ChargingSchedule;

use super::layout::{CommodityKind, VariableLayout};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommodityFlow {
    pub commodity: CommodityKind,
    /// Flow per road.
    pub flows: Vec<f64>,
}

/// Per-commodity road flows plus slacks and the derived totals `u`, `r`, `x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSolution {
    pub commodities: Vec<CommodityFlow>,
    pub eps1: Vec<f64>,
    pub eps2: Vec<f64>,
    pub u: Vec<f64>,
    pub r: Vec<f64>,
    pub p: Vec<f64>,
    pub x: Vec<f64>,
}

/// Worst conservation residual found by [`FlowSolution::conservation`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConservationReport {
    pub max_residual: f64,
    pub worst: String,
}

/// Splits a raw variable vector. Entries in `[-10 tol, 0)` are clamped to zero.
pub fn extract_solution(layout: &VariableLayout, raw: &[f64], tol: f64) -> Result<FlowSolution> {
    if raw.len() != layout.num_vars() {
        return Err(Error::SolutionQuality(format!(
            "vector has {} entries, layout expects {}",
            raw.len(),
            layout.num_vars()
        )));
    }
    if let Some((i, v)) = raw.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < -10.0 * tol) {
        return Err(Error::SolutionQuality(format!("variable {i} is {v}, below -10·{tol}")));
    }
    let v: Vec<f64> = raw.iter().map(|x| x.max(0.0)).collect();
    let ne = layout.num_edges();
    let mut u = vec![0.0; ne];
    let mut r = vec![0.0; ne];
    let mut commodities = Vec::with_capacity(layout.commodities().len());
    for (k, kind) in layout.commodities().iter().enumerate() {
        let flows: Vec<f64> = (0..ne).map(|e| v[layout.flow(k, e)]).collect();
        let total = if kind.is_customer() { &mut u } else { &mut r };
        for (t, f) in total.iter_mut().zip(&flows) {
            *t += f;
        }
        commodities.push(CommodityFlow { commodity: *kind, flows });
    }
    let p = layout.private_flow().to_vec();
    let x = (0..ne).map(|e| u[e] + r[e] + p[e]).collect();
    Ok(FlowSolution {
        commodities,
        eps1: (0..ne).map(|e| v[layout.slack1(e)]).collect(),
        eps2: (0..ne).map(|e| v[layout.slack2(e)]).collect(),
        u,
        r,
        p,
        x,
    })
}

impl FlowSolution {
    pub fn num_roads(&self) -> usize {
        self.x.len()
    }

    pub fn flows_of(&self, kind: &CommodityKind) -> Option<&[f64]> {
        self.commodities.iter().find(|c| &c.commodity == kind).map(|c| c.flows.as_slice())
    }

    /// Sum of AMoD plus private flow over all roads.
    pub fn total_flow(&self) -> f64 {
        self.x.iter().sum()
    }

    /// Flattens back into the layout's variable order.
    pub fn to_vector(&self, layout: &VariableLayout) -> Vec<f64> {
        let mut v = vec![0.0; layout.num_vars()];
        for (k, c) in self.commodities.iter().enumerate() {
            for (e, f) in c.flows.iter().enumerate() {
                v[layout.flow(k, e)] = *f;
            }
        }
        for e in 0..layout.num_edges() {
            v[layout.slack1(e)] = self.eps1[e];
            v[layout.slack2(e)] = self.eps2[e];
        }
        v
    }

    /// Checks every flow requirement directly on the road flows, without the
    /// assembled constraint matrix. Charging rows are included for `schedules`.
    pub fn conservation(
        &self,
        network: &RoadNetwork,
        demands: &DemandSet,
        schedules: &[ChargingSchedule],
    ) -> ConservationReport {
        let mut worst = (0.0f64, String::from("none"));
        let mut note = |res: f64, what: &dyn Fn() -> String| {
            if res > worst.0 {
                worst = (res, what());
            }
        };
        let zeros = vec![0.0; self.num_roads()];
        let out = |f: &[f64], n: NodeId| network.outgoing(n).iter().map(|&e| f[e]).sum::<f64>();
        let inn = |f: &[f64], n: NodeId| network.incoming(n).iter().map(|&e| f[e]).sum::<f64>();

        for (m, d) in demands.demands().iter().enumerate() {
            let f = self.flows_of(&CommodityKind::Customer { demand: m }).unwrap_or(&zeros);
            note((out(f, d.origin) - d.rate).abs(), &|| format!("demand {} departure", d.id));
            note((inn(f, d.destination) - d.rate).abs(), &|| format!("demand {} arrival", d.id));
            if d.origin != d.destination {
                note(inn(f, d.origin), &|| format!("demand {} re-entering its origin", d.id));
                note(out(f, d.destination), &|| format!("demand {} leaving its destination", d.id));
            }
            for &j in network.nodes() {
                if j != d.origin && j != d.destination {
                    note((inn(f, j) - out(f, j)).abs(), &|| format!("demand {} at node {j}", d.id));
                }
            }
        }

        let rebalance: Vec<(NodeId, NodeId, &[f64])> = self
            .commodities
            .iter()
            .filter_map(|c| match c.commodity {
                CommodityKind::Rebalance { from, to } => Some((from, to, c.flows.as_slice())),
                _ => None,
            })
            .collect();
        for &b in &demands.origins() {
            let net = demands.net_rebalancing_flow(b);
            let want = if net > 0.0 { 0.0 } else { -net };
            let arrive: f64 = rebalance.iter().filter(|r| r.1 == b).map(|r| inn(r.2, b)).sum();
            note((arrive - want).abs(), &|| format!("rebalancing arrivals at {b}"));
            let leave: f64 = rebalance.iter().filter(|r| r.1 == b).map(|r| out(r.2, b)).sum();
            note(leave.abs(), &|| format!("rebalancing leaving origin {b}"));
        }
        for &a in &demands.destinations() {
            let net = demands.net_rebalancing_flow(a);
            let want = if net > 0.0 { net } else { 0.0 };
            let depart: f64 = rebalance.iter().filter(|r| r.0 == a).map(|r| out(r.2, a)).sum();
            note((depart - want).abs(), &|| format!("rebalancing departures at {a}"));
            let enter: f64 = rebalance.iter().filter(|r| r.0 == a).map(|r| inn(r.2, a)).sum();
            note(enter.abs(), &|| format!("rebalancing entering destination {a}"));
        }
        for &(a, b, f) in &rebalance {
            for &j in network.nodes() {
                if j != a && j != b {
                    note((inn(f, j) - out(f, j)).abs(), &|| format!("rebalancing ({a}, {b}) at node {j}"));
                }
            }
        }

        let station_inflow = |f: &[f64]| network.charging_stations().iter().map(|&c| inn(f, c)).sum::<f64>();
        for s in schedules {
            if s.origin == s.destination {
                let a = s.origin;
                let total: f64 = schedules.iter().filter(|t| t.origin == a && t.destination == a).map(|t| t.flow).sum();
                let f = self.flows_of(&CommodityKind::ChargeLoop { node: a }).unwrap_or(&zeros);
                note((out(f, a) - total).abs(), &|| format!("charging loop at {a} departure"));
                note((inn(f, a) - total).abs(), &|| format!("charging loop at {a} return"));
                for &j in network.nodes() {
                    if j != a {
                        note((inn(f, j) - out(f, j)).abs(), &|| format!("charging loop at {a}, node {j}"));
                    }
                }
                note((total - station_inflow(f)).max(0.0), &|| format!("charging loop at {a} station visit"));
            } else {
                let f =
                    self.flows_of(&CommodityKind::Rebalance { from: s.origin, to: s.destination }).unwrap_or(&zeros);
                let mut visit = station_inflow(f);
                if network.is_station(s.origin) {
                    visit += out(f, s.origin);
                }
                note((s.flow - visit).max(0.0), &|| {
                    format!("rebalancing ({}, {}) station visit", s.origin, s.destination)
                });
            }
        }
        let (max_residual, worst) = worst;
        ConservationReport { max_residual, worst }
    }
}
