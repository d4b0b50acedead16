//! Convex quadratic routing/rebalancing program and its re-routing variant.
//!
//! Per road the cost is the quadratic upper bound of the piecewise-affine
//! travel-time objective:
//!
//! ```text
//! t0 u + a t0 ε1 (ε1 + x_th1 - p) + b t0 ε2 (ε2 + x_th2 - p)
//!      + a t0 (x_th2 - x_th1) ε2 + w_r r
//! ```
//!
//! subject to customer and rebalancing flow conservation, the net
//! rebalancing requirements, optional charging-visit constraints and the slack
//! inequalities `ε1 + ε2 >= x - x_th1`, `ε2 >= x - x_th2`.

mod layout;
mod objective;
mod solution;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use layout::{CommodityKind, VariableLayout};
pub use objective::{approx_objective, exact_objective, qp_objective};
pub use solution::{extract_solution, CommodityFlow, ConservationReport, FlowSolution};

use crate::demand::DemandSet;
use crate::error::{Error, Result};
use crate::network::{NodeId, PiecewiseTravelTime, RoadNetwork};
use crate::scheduler::ChargingSchedule;
use crate::solver::{CscMatrix, QpProblem};

/// Provenance of a constraint row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "row", rename_all = "snake_case")]
pub enum RowKind {
    CustomerDeparture { demand: usize },
    CustomerArrival { demand: usize },
    CustomerConservation { demand: usize, node: NodeId },
    RebalanceArrivals { node: NodeId },
    RebalanceDepartures { node: NodeId },
    NoRebalanceLeavingOrigin { node: NodeId },
    NoRebalanceEnteringDestination { node: NodeId },
    RebalanceConservation { from: NodeId, to: NodeId, node: NodeId },
    ChargeDeparture { node: NodeId },
    ChargeReturn { node: NodeId },
    ChargeConservation { at: NodeId, node: NodeId },
    ChargeVisit { node: NodeId },
    RebalanceChargeVisit { from: NodeId, to: NodeId },
    SlackFirst { edge: usize },
    SlackSecond { edge: usize },
}

impl RowKind {
    pub fn is_charging(&self) -> bool {
        matches!(
            self,
            RowKind::ChargeDeparture { .. }
                | RowKind::ChargeReturn { .. }
                | RowKind::ChargeConservation { .. }
                | RowKind::ChargeVisit { .. }
                | RowKind::RebalanceChargeVisit { .. }
        )
    }
}

/// Sparse QP in modelling form. The quadratic term is diagonal and only
/// touches slack variables.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    /// Diagonal of `P` in `½ vᵀ P v + qᵀ v`.
    pub quadratic: Vec<f64>,
    pub linear: Vec<f64>,
    pub eq: CscMatrix,
    pub eq_rhs: Vec<f64>,
    pub eq_rows: Vec<RowKind>,
    pub ineq: CscMatrix,
    pub ineq_lower: Vec<f64>,
    pub ineq_upper: Vec<f64>,
    pub ineq_rows: Vec<RowKind>,
    pub var_lower: Vec<f64>,
    pub var_upper: Vec<f64>,
}

impl QuadraticProgram {
    pub fn num_vars(&self) -> usize {
        self.linear.len()
    }

    /// Stacks equalities, inequalities and variable bounds into `l <= A v <= u`.
    pub fn to_standard_form(&self) -> Result<QpProblem> {
        let n = self.num_vars();
        let me = self.eq.nrows;
        let mi = self.ineq.nrows;
        let mut t: Vec<(usize, usize, f64)> = self.eq.triplets().collect();
        t.extend(self.ineq.triplets().map(|(r, c, v)| (me + r, c, v)));
        t.extend((0..n).map(|j| (me + mi + j, j, 1.0)));
        let a = CscMatrix::from_triplets(me + mi + n, n, t);
        let mut l = self.eq_rhs.clone();
        l.extend_from_slice(&self.ineq_lower);
        l.extend_from_slice(&self.var_lower);
        let mut u = self.eq_rhs.clone();
        u.extend_from_slice(&self.ineq_upper);
        u.extend_from_slice(&self.var_upper);
        QpProblem::new(CscMatrix::diagonal(&self.quadratic), self.linear.clone(), a, l, u)
    }

    /// Largest violation over equality rows, inequality rows and bounds.
    pub fn constraint_violation(&self, v: &[f64]) -> f64 {
        let mut eq = vec![0.0; self.eq.nrows];
        self.eq.mul_vec(v, &mut eq);
        let e = eq.iter().zip(&self.eq_rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        let mut iq = vec![0.0; self.ineq.nrows];
        self.ineq.mul_vec(v, &mut iq);
        let i = (0..iq.len())
            .map(|k| (self.ineq_lower[k] - iq[k]).max(iq[k] - self.ineq_upper[k]).max(0.0))
            .fold(0.0, f64::max);
        let b =
            (0..v.len()).map(|k| (self.var_lower[k] - v[k]).max(v[k] - self.var_upper[k]).max(0.0)).fold(0.0, f64::max);
        e.max(i).max(b)
    }

    /// Largest equality-row residual restricted to rows matching `filter`.
    pub fn equality_residual(&self, v: &[f64], filter: impl Fn(&RowKind) -> bool) -> f64 {
        let mut eq = vec![0.0; self.eq.nrows];
        self.eq.mul_vec(v, &mut eq);
        (0..eq.len()).filter(|&k| filter(&self.eq_rows[k])).map(|k| (eq[k] - self.eq_rhs[k]).abs()).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelOptions {
    /// Drop rebalancing pairs `(a, b)` that the net-flow rows force to zero.
    pub prune_rebalancing: bool,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions { prune_rebalancing: true }
    }
}

pub fn build_routing_problem(
    network: &RoadNetwork,
    demands: &DemandSet,
    w_r: f64,
    pwa: &[PiecewiseTravelTime],
) -> Result<(QuadraticProgram, VariableLayout)> {
    build_problem(network, demands, w_r, pwa, &[], ModelOptions::default())
}

pub fn build_rerouting_problem(
    network: &RoadNetwork,
    demands: &DemandSet,
    w_r: f64,
    pwa: &[PiecewiseTravelTime],
    schedules: &[ChargingSchedule],
) -> Result<(QuadraticProgram, VariableLayout)> {
    build_problem(network, demands, w_r, pwa, schedules, ModelOptions::default())
}

/// Rebalancing pairs `(a, b)` with `a` a destination and `b` an origin, sorted.
pub fn rebalancing_pairs(demands: &DemandSet, prune: bool) -> Vec<(NodeId, NodeId)> {
    let origins = demands.origins();
    let mut out = Vec::new();
    for &a in &demands.destinations() {
        for &b in &origins {
            if prune && !(demands.net_rebalancing_flow(a) > 0.0 && demands.net_rebalancing_flow(b) < 0.0) {
                continue;
            }
            out.push((a, b));
        }
    }
    out
}

struct Rows {
    triplets: Vec<(usize, usize, f64)>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    kinds: Vec<RowKind>,
}

impl Rows {
    fn new() -> Self {
        Rows { triplets: Vec::new(), lower: Vec::new(), upper: Vec::new(), kinds: Vec::new() }
    }

    fn push(&mut self, kind: RowKind, coeffs: &[(usize, f64)], lower: f64, upper: f64) {
        let r = self.kinds.len();
        self.triplets.extend(coeffs.iter().map(|&(c, v)| (r, c, v)));
        self.lower.push(lower);
        self.upper.push(upper);
        self.kinds.push(kind);
    }

    fn matrix(self, ncols: usize) -> (CscMatrix, Vec<f64>, Vec<f64>, Vec<RowKind>) {
        let n = self.kinds.len();
        (CscMatrix::from_triplets(n, ncols, self.triplets), self.lower, self.upper, self.kinds)
    }
}

fn check_structure(
    network: &RoadNetwork,
    demands: &DemandSet,
    pairs: &[(NodeId, NodeId)],
    schedules: &[ChargingSchedule],
) -> Result<()> {
    let reach: BTreeMap<NodeId, BTreeSet<NodeId>> =
        network.nodes().iter().map(|&n| (n, network.reachable_from(n))).collect();

    for d in demands.demands() {
        if network.outgoing(d.origin).is_empty() {
            return Err(Error::Structural(format!("demand {}: origin {} has no outgoing road", d.id, d.origin)));
        }
        if !reach[&d.origin].contains(&d.destination) {
            return Err(Error::Structural(format!(
                "demand {}: destination {} is unreachable from origin {}",
                d.id, d.destination, d.origin
            )));
        }
    }

    // transportation feasibility of the net rebalancing requirement over reachable pairs
    let supply: Vec<(NodeId, f64)> = demands
        .endpoints()
        .into_iter()
        .map(|j| (j, demands.net_rebalancing_flow(j)))
        .filter(|&(_, v)| v > 0.0)
        .collect();
    let deficit: Vec<(NodeId, f64)> = demands
        .endpoints()
        .into_iter()
        .map(|j| (j, -demands.net_rebalancing_flow(j)))
        .filter(|&(_, v)| v > 0.0)
        .collect();
    let arcs: Vec<(usize, usize)> = pairs
        .iter()
        .filter(|(a, b)| reach[a].contains(b))
        .filter_map(|(a, b)| {
            let i = supply.iter().position(|s| s.0 == *a)?;
            let j = deficit.iter().position(|s| s.0 == *b)?;
            Some((i, j))
        })
        .collect();
    let moved = bipartite_max_flow(
        &supply.iter().map(|s| s.1).collect::<Vec<_>>(),
        &deficit.iter().map(|s| s.1).collect::<Vec<_>>(),
        &arcs,
    );
    let need: f64 = supply.iter().map(|s| s.1).sum();
    if moved < need - 1e-9 * need.max(1.0) {
        return Err(Error::Structural(format!(
            "rebalancing can move only {moved} of the required {need}: some destination has no road path back to an origin"
        )));
    }

    for s in schedules {
        for n in [s.origin, s.destination] {
            if !network.contains(n) {
                return Err(Error::Structural(format!("charging schedule references unknown node {n}")));
            }
        }
        let via_station = network.charging_stations().iter().any(|c| {
            if s.origin == s.destination {
                if *c == s.origin {
                    network.outgoing(s.origin).iter().any(|&e| reach[&network.road(e).to].contains(&s.origin))
                } else {
                    reach[&s.origin].contains(c) && reach[c].contains(&s.origin)
                }
            } else {
                reach[&s.origin].contains(c) && reach[c].contains(&s.destination)
            }
        });
        if !via_station {
            return Err(Error::Structural(format!(
                "charging schedule ({}, {}) has no route through a charging station",
                s.origin, s.destination
            )));
        }
    }
    Ok(())
}

/// Max flow from supplies to deficits over unbounded arcs (dense Edmonds-Karp).
fn bipartite_max_flow(supply: &[f64], deficit: &[f64], arcs: &[(usize, usize)]) -> f64 {
    let (ns, nd) = (supply.len(), deficit.len());
    let n = ns + nd + 2;
    let (src, sink) = (n - 2, n - 1);
    let mut cap = vec![vec![0.0f64; n]; n];
    for (i, &s) in supply.iter().enumerate() {
        cap[src][i] = s;
    }
    for (j, &d) in deficit.iter().enumerate() {
        cap[ns + j][sink] = d;
    }
    for &(i, j) in arcs {
        cap[i][ns + j] = f64::INFINITY;
    }
    let mut total = 0.0;
    loop {
        let mut prev = vec![usize::MAX; n];
        prev[src] = src;
        let mut queue = std::collections::VecDeque::from([src]);
        while let Some(v) = queue.pop_front() {
            for w in 0..n {
                if prev[w] == usize::MAX && cap[v][w] > 1e-12 {
                    prev[w] = v;
                    queue.push_back(w);
                }
            }
        }
        if prev[sink] == usize::MAX {
            return total;
        }
        let mut push = f64::INFINITY;
        let mut w = sink;
        while w != src {
            push = push.min(cap[prev[w]][w]);
            w = prev[w];
        }
        let mut w = sink;
        while w != src {
            let v = prev[w];
            cap[v][w] -= push;
            cap[w][v] += push;
            w = v;
        }
        total += push;
    }
}

/// Assembles the program. An empty schedule set yields the routing problem.
pub fn build_problem(
    network: &RoadNetwork,
    demands: &DemandSet,
    w_r: f64,
    pwa: &[PiecewiseTravelTime],
    schedules: &[ChargingSchedule],
    options: ModelOptions,
) -> Result<(QuadraticProgram, VariableLayout)> {
    if !(w_r > 0.0 && w_r.is_finite()) {
        return Err(Error::Config(format!("rebalancing weight must be positive, got {w_r}")));
    }
    if pwa.len() != network.num_roads() {
        return Err(Error::Config("one piecewise travel time per road is required".into()));
    }
    let pairs = rebalancing_pairs(demands, options.prune_rebalancing);
    check_structure(network, demands, &pairs, schedules)?;

    let mut commodities: Vec<CommodityKind> =
        (0..demands.len()).map(|demand| CommodityKind::Customer { demand }).collect();
    commodities.extend(pairs.iter().map(|&(from, to)| CommodityKind::Rebalance { from, to }));
    let mut loop_nodes = BTreeMap::new();
    let mut visits = Vec::new();
    for s in schedules {
        if !(s.flow > 0.0 && s.flow.is_finite()) {
            return Err(Error::Config(format!(
                "charging schedule ({}, {}) has non-positive flow",
                s.origin, s.destination
            )));
        }
        if s.origin == s.destination {
            *loop_nodes.entry(s.origin).or_insert(0.0) += s.flow;
        } else {
            visits.push(*s);
        }
    }
    commodities.extend(loop_nodes.keys().map(|&node| CommodityKind::ChargeLoop { node }));

    let private: Vec<f64> = network.roads().iter().map(|r| r.private_flow).collect();
    let layout = VariableLayout::new(commodities, private);
    let n = layout.num_vars();
    let n_edges = network.num_roads();

    // objective
    let mut quadratic = vec![0.0; n];
    let mut linear = vec![0.0; n];
    for (e, road) in network.roads().iter().enumerate() {
        let t0 = road.free_flow_time;
        let pw = &pwa[e];
        for (k, kind) in layout.commodities().iter().enumerate() {
            linear[layout.flow(k, e)] = if kind.is_customer() { t0 } else { w_r };
        }
        let (s1, s2) = (layout.slack1(e), layout.slack2(e));
        quadratic[s1] = 2.0 * pw.a * t0;
        quadratic[s2] = 2.0 * pw.b * t0;
        linear[s1] = pw.a * t0 * (pw.x_th1 - road.private_flow);
        linear[s2] = pw.b * t0 * (pw.x_th2 - road.private_flow) + pw.a * t0 * (pw.x_th2 - pw.x_th1);
    }

    let out_terms = |k: usize, node: NodeId| -> Vec<(usize, f64)> {
        network.outgoing(node).iter().map(|&e| (layout.flow(k, e), 1.0)).collect()
    };
    let in_terms = |k: usize, node: NodeId| -> Vec<(usize, f64)> {
        network.incoming(node).iter().map(|&e| (layout.flow(k, e), 1.0)).collect()
    };
    let balance_terms = |k: usize, node: NodeId| -> Vec<(usize, f64)> {
        let mut t = in_terms(k, node);
        t.extend(out_terms(k, node).into_iter().map(|(c, v)| (c, -v)));
        t
    };

    let mut eq = Rows::new();
    let push_eq = |rows: &mut Rows, kind: RowKind, coeffs: Vec<(usize, f64)>, rhs: f64| -> Result<()> {
        if coeffs.is_empty() {
            if rhs.abs() > 0.0 {
                return Err(Error::Structural(format!("{kind:?} requires {rhs} but has no roads")));
            }
            return Ok(());
        }
        rows.push(kind, &coeffs, rhs, rhs);
        Ok(())
    };

    for (m, d) in demands.demands().iter().enumerate() {
        let k = m;
        for &j in network.nodes() {
            if j == d.origin {
                push_eq(&mut eq, RowKind::CustomerDeparture { demand: d.id }, out_terms(k, j), d.rate)?;
            } else if j == d.destination {
                push_eq(&mut eq, RowKind::CustomerArrival { demand: d.id }, in_terms(k, j), d.rate)?;
            } else {
                push_eq(&mut eq, RowKind::CustomerConservation { demand: d.id, node: j }, balance_terms(k, j), 0.0)?;
            }
        }
    }

    let rebalance_index: Vec<(usize, NodeId, NodeId)> = layout
        .commodities()
        .iter()
        .enumerate()
        .filter_map(|(k, c)| match *c {
            CommodityKind::Rebalance { from, to } => Some((k, from, to)),
            _ => None,
        })
        .collect();

    for &b in &demands.origins() {
        let net = demands.net_rebalancing_flow(b);
        let arrive: Vec<(usize, f64)> =
            rebalance_index.iter().filter(|r| r.2 == b).flat_map(|r| in_terms(r.0, b)).collect();
        push_eq(&mut eq, RowKind::RebalanceArrivals { node: b }, arrive, if net > 0.0 { 0.0 } else { -net })?;
    }
    for &a in &demands.destinations() {
        let net = demands.net_rebalancing_flow(a);
        let depart: Vec<(usize, f64)> =
            rebalance_index.iter().filter(|r| r.1 == a).flat_map(|r| out_terms(r.0, a)).collect();
        push_eq(&mut eq, RowKind::RebalanceDepartures { node: a }, depart, if net > 0.0 { net } else { 0.0 })?;
    }
    for &b in &demands.origins() {
        let leave: Vec<(usize, f64)> =
            rebalance_index.iter().filter(|r| r.2 == b).flat_map(|r| out_terms(r.0, b)).collect();
        push_eq(&mut eq, RowKind::NoRebalanceLeavingOrigin { node: b }, leave, 0.0)?;
    }
    for &a in &demands.destinations() {
        let enter: Vec<(usize, f64)> =
            rebalance_index.iter().filter(|r| r.1 == a).flat_map(|r| in_terms(r.0, a)).collect();
        push_eq(&mut eq, RowKind::NoRebalanceEnteringDestination { node: a }, enter, 0.0)?;
    }
    for &(k, a, b) in &rebalance_index {
        for &j in network.nodes() {
            if j != a && j != b {
                push_eq(&mut eq, RowKind::RebalanceConservation { from: a, to: b, node: j }, balance_terms(k, j), 0.0)?;
            }
        }
    }

    let mut ineq = Rows::new();
    let station_inflow =
        |k: usize| -> Vec<(usize, f64)> { network.charging_stations().iter().flat_map(|&c| in_terms(k, c)).collect() };
    for (k, kind) in layout.commodities().iter().enumerate() {
        let CommodityKind::ChargeLoop { node: a } = *kind else { continue };
        let x_cs = loop_nodes[&a];
        push_eq(&mut eq, RowKind::ChargeDeparture { node: a }, out_terms(k, a), x_cs)?;
        push_eq(&mut eq, RowKind::ChargeReturn { node: a }, in_terms(k, a), x_cs)?;
        for &j in network.nodes() {
            if j != a {
                push_eq(&mut eq, RowKind::ChargeConservation { at: a, node: j }, balance_terms(k, j), 0.0)?;
            }
        }
        ineq.push(RowKind::ChargeVisit { node: a }, &station_inflow(k), x_cs, f64::INFINITY);
    }
    for s in &visits {
        let kind = CommodityKind::Rebalance { from: s.origin, to: s.destination };
        let Some(k) = layout.position(&kind) else {
            return Err(Error::Structural(format!(
                "charging schedule ({}, {}) names a rebalancing pair that carries no flow in the model",
                s.origin, s.destination
            )));
        };
        // leaving a station origin counts as a visit: the vehicles charge before departing
        let mut visit = station_inflow(k);
        if network.is_station(s.origin) {
            visit.extend(out_terms(k, s.origin));
        }
        ineq.push(RowKind::RebalanceChargeVisit { from: s.origin, to: s.destination }, &visit, s.flow, f64::INFINITY);
    }

    for (e, road) in network.roads().iter().enumerate() {
        let pw = &pwa[e];
        let mut first: Vec<(usize, f64)> = vec![(layout.slack1(e), 1.0), (layout.slack2(e), 1.0)];
        let mut second: Vec<(usize, f64)> = vec![(layout.slack2(e), 1.0)];
        for k in 0..layout.commodities().len() {
            first.push((layout.flow(k, e), -1.0));
            second.push((layout.flow(k, e), -1.0));
        }
        ineq.push(RowKind::SlackFirst { edge: e }, &first, road.private_flow - pw.x_th1, f64::INFINITY);
        ineq.push(RowKind::SlackSecond { edge: e }, &second, road.private_flow - pw.x_th2, f64::INFINITY);
    }

    let mut var_lower = vec![0.0; n];
    let mut var_upper = vec![f64::INFINITY; n];
    for (e, pw) in pwa.iter().enumerate().take(n_edges) {
        var_lower[layout.slack1(e)] = 0.0;
        var_upper[layout.slack1(e)] = if pw.is_flat() { f64::INFINITY } else { pw.x_th2 - pw.x_th1 };
    }
    // a customer never re-enters its origin or leaves its destination; without
    // this, cycles through either end would satisfy the departure and arrival
    // rows without carrying the demand across
    for (k, d) in demands.demands().iter().enumerate() {
        if d.origin == d.destination {
            continue;
        }
        for &e in network.incoming(d.origin).iter().chain(network.outgoing(d.destination)) {
            var_upper[layout.flow(k, e)] = 0.0;
        }
    }

    let (eq_m, eq_rhs, _, eq_rows) = eq.matrix(n);
    let (ineq_m, ineq_lower, ineq_upper, ineq_rows) = ineq.matrix(n);
    Ok((
        QuadraticProgram {
            quadratic,
            linear,
            eq: eq_m,
            eq_rhs,
            eq_rows,
            ineq: ineq_m,
            ineq_lower,
            ineq_upper,
            ineq_rows,
            var_lower,
            var_upper,
        },
        layout,
    ))
}
