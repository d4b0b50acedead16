//! Oracles and generators shared by the integration tests.
#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::BTreeMap;

use aemod_core::model::{CommodityKind, VariableLayout};
use aemod_core::network::{compute_slacks, fit_piecewise, PiecewiseTravelTime};
use aemod_core::solver::{CscMatrix, QpProblem};
use aemod_core::{DemandSet, NodeId, PwaConfig, Road, RoadNetwork};
use nalgebra::{DMatrix, DVector};
use petgraph::graph::{DiGraph, NodeIndex};
use rand::seq::SliceRandom;
use rand::Rng;

/// A routing instance: network, demands, rebalancing weight and PWA curves.
pub struct Instance {
    pub name: &'static str,
    pub network: RoadNetwork,
    pub demands: DemandSet,
    pub w_r: f64,
    pub pwa: Vec<PiecewiseTravelTime>,
}

fn two_way(pairs: &[(NodeId, NodeId)], rng: &mut impl Rng) -> Vec<Road> {
    let mut roads = Vec::new();
    for &(a, b) in pairs {
        for (f, t) in [(a, b), (b, a)] {
            let length = rng.random_range(0.5..3.0);
            let speed = rng.random_range(20.0..50.0);
            let gamma = rng.random_range(10.0..40.0);
            let p = rng.random_range(0.0..gamma);
            roads.push(Road::new(f, t, length / speed, gamma, length, p).unwrap());
        }
    }
    roads
}

pub fn instance(name: &'static str, network: RoadNetwork, demands: DemandSet, w_r: f64) -> Instance {
    let pwa = network.roads().iter().map(|r| fit_piecewise(r, &PwaConfig::default()).unwrap()).collect();
    Instance { name, network, demands, w_r, pwa }
}

/// Six-node two-way ring with random demands.
pub fn ring_instance(rng: &mut impl Rng) -> Instance {
    let pairs: Vec<(NodeId, NodeId)> = (1..=6).map(|i| (i, i % 6 + 1)).collect();
    let net = RoadNetwork::new(1..=6, two_way(&pairs, rng), [2, 5]).unwrap();
    let demands = random_demands(&net, 4, 40.0, rng);
    instance("ring", net, demands, 0.1)
}

/// 3 x 3 two-way grid with random demands.
pub fn grid_instance(rng: &mut impl Rng) -> Instance {
    let mut pairs = Vec::new();
    for r in 0..3 {
        for c in 0..3 {
            let v = r * 3 + c + 1;
            if c < 2 {
                pairs.push((v, v + 1));
            }
            if r < 2 {
                pairs.push((v, v + 3));
            }
        }
    }
    let net = RoadNetwork::new(1..=9, two_way(&pairs, rng), [5]).unwrap();
    let demands = random_demands(&net, 6, 30.0, rng);
    instance("grid", net, demands, 0.05)
}

fn random_demands(net: &RoadNetwork, count: usize, max_rate: f64, rng: &mut impl Rng) -> DemandSet {
    let nodes = net.nodes();
    let mut triples = Vec::new();
    while triples.len() < count {
        let o = nodes[rng.random_range(0..nodes.len())];
        let d = nodes[rng.random_range(0..nodes.len())];
        if o != d {
            triples.push((o, d, rng.random_range(1.0..max_rate)));
        }
    }
    DemandSet::from_triples(triples)
}

/// Shortest path under random edge weights, as road indices.
pub fn random_path(net: &RoadNetwork, from: NodeId, to: NodeId, rng: &mut impl Rng) -> Vec<usize> {
    let mut g: DiGraph<NodeId, (usize, f64)> = DiGraph::new();
    let idx: BTreeMap<NodeId, NodeIndex> = net.nodes().iter().map(|&v| (v, g.add_node(v))).collect();
    for (e, r) in net.roads().iter().enumerate() {
        g.add_edge(idx[&r.from], idx[&r.to], (e, rng.random_range(1.0..3.0)));
    }
    let goal = idx[&to];
    let (_, nodes) =
        petgraph::algo::astar(&g, idx[&from], |n| n == goal, |e| e.weight().1, |_| 0.0).expect("destination reachable");
    nodes
        .windows(2)
        .map(|w| {
            g.edges_connecting(w[0], w[1]).min_by(|a, b| a.weight().1.total_cmp(&b.weight().1)).unwrap().weight().0
        })
        .collect()
}

/// A point satisfying every constraint of the routing program: each commodity
/// is spread over a few random simple paths, rebalancing follows a random
/// transport plan, and slacks are the excess flows.
pub fn random_feasible_point<R: Rng>(inst: &Instance, layout: &VariableLayout, rng: &mut R) -> Vec<f64> {
    let net = &inst.network;
    let mut v = vec![0.0; layout.num_vars()];
    let route = |k: usize, from: NodeId, to: NodeId, amount: f64, v: &mut Vec<f64>, rng: &mut R| {
        if amount <= 0.0 {
            return;
        }
        let parts = rng.random_range(1..=3);
        let w: Vec<f64> = (0..parts).map(|_| rng.random_range(0.1..1.0)).collect();
        let total: f64 = w.iter().sum();
        for wi in w {
            for e in random_path(net, from, to, rng) {
                v[layout.flow(k, e)] += amount * wi / total;
            }
        }
    };
    let plan = transport_plan(&inst.demands, rng);
    for (k, c) in layout.commodities().iter().enumerate() {
        match *c {
            CommodityKind::Customer { demand } => {
                let d = &inst.demands.demands()[demand];
                route(k, d.origin, d.destination, d.rate, &mut v, rng);
            }
            CommodityKind::Rebalance { from, to } => {
                let amount = plan.get(&(from, to)).copied().unwrap_or(0.0);
                route(k, from, to, amount, &mut v, rng);
            }
            CommodityKind::ChargeLoop { .. } => unreachable!("routing instances have no charging"),
        }
    }
    for e in 0..net.num_roads() {
        let x =
            net.roads()[e].private_flow + (0..layout.commodities().len()).map(|k| v[layout.flow(k, e)]).sum::<f64>();
        let (a, b) = compute_slacks(&inst.pwa[e], x).unwrap();
        v[layout.slack1(e)] = a;
        v[layout.slack2(e)] = b;
    }
    v
}

/// Mix of the proportional plan and a random north-west-corner plan.
fn transport_plan(demands: &DemandSet, rng: &mut impl Rng) -> BTreeMap<(NodeId, NodeId), f64> {
    let nodes = demands.endpoints();
    let mut supply: Vec<(NodeId, f64)> = Vec::new();
    let mut sink: Vec<(NodeId, f64)> = Vec::new();
    for &n in &nodes {
        let net = demands.net_rebalancing_flow(n);
        if net > 0.0 {
            supply.push((n, net));
        } else if net < 0.0 {
            sink.push((n, -net));
        }
    }
    let total: f64 = supply.iter().map(|s| s.1).sum();
    let mut plan: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
    let lambda: f64 = rng.random_range(0.0..1.0);
    for &(a, sa) in &supply {
        for &(b, db) in &sink {
            *plan.entry((a, b)).or_default() += lambda * sa * db / total;
        }
    }
    supply.shuffle(rng);
    sink.shuffle(rng);
    let (mut i, mut j) = (0, 0);
    let (mut s, mut d) = (supply.clone(), sink.clone());
    while i < s.len() && j < d.len() {
        let m = s[i].1.min(d[j].1);
        *plan.entry((s[i].0, d[j].0)).or_default() += (1.0 - lambda) * m;
        s[i].1 -= m;
        d[j].1 -= m;
        if s[i].1 <= 1e-12 * total {
            i += 1;
        }
        if d[j].1 <= 1e-12 * total {
            j += 1;
        }
    }
    plan
}

/// Minimum of `a ε1 + b ε2` over the slack polygon, by vertex enumeration.
pub fn slack_lp_oracle(pwa: &PiecewiseTravelTime, x: f64) -> (f64, f64) {
    // lines c1 ε1 + c2 ε2 = r
    let lines = [
        (1.0, 1.0, x - pwa.x_th1),
        (0.0, 1.0, x - pwa.x_th2),
        (1.0, 0.0, 0.0),
        (1.0, 0.0, pwa.x_th2 - pwa.x_th1),
        (0.0, 1.0, 0.0),
    ];
    let tol = 1e-9 * x.abs().max(pwa.x_th2).max(1.0);
    let feasible = |e1: f64, e2: f64| {
        e1 + e2 >= x - pwa.x_th1 - tol
            && e2 >= x - pwa.x_th2 - tol
            && e1 >= -tol
            && e1 <= pwa.x_th2 - pwa.x_th1 + tol
            && e2 >= -tol
    };
    let mut best: Option<(f64, (f64, f64))> = None;
    for i in 0..lines.len() {
        for j in i + 1..lines.len() {
            let (a1, b1, r1) = lines[i];
            let (a2, b2, r2) = lines[j];
            let det = a1 * b2 - a2 * b1;
            if det == 0.0 {
                continue;
            }
            let e1 = (r1 * b2 - r2 * b1) / det;
            let e2 = (a1 * r2 - a2 * r1) / det;
            if feasible(e1, e2) {
                let obj = pwa.a * e1 + pwa.b * e2;
                if best.is_none_or(|(o, _)| obj < o) {
                    best = Some((obj, (e1, e2)));
                }
            }
        }
    }
    best.expect("polygon is non-empty").1
}

/// Random strictly convex QP with at most `n` variables and `m` rows, built
/// around a known feasible point.
pub fn random_qp(rng: &mut impl Rng, max_n: usize, max_m: usize) -> QpProblem {
    let n = rng.random_range(1..=max_n);
    let m = rng.random_range(1..=max_m);
    let mat = DMatrix::<f64>::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let p = &mat * mat.transpose() + DMatrix::<f64>::identity(n, n) * 0.1;
    let mut tp = Vec::new();
    for c in 0..n {
        for r in 0..=c {
            tp.push((r, c, p[(r, c)]));
        }
    }
    let q: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
    let x0: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let mut ta = Vec::new();
    let (mut l, mut u) = (Vec::new(), Vec::new());
    for r in 0..m {
        let mut ax = 0.0;
        for c in 0..n {
            if rng.random_bool(0.7) {
                let v = rng.random_range(-1.0..1.0);
                ta.push((r, c, v));
                ax += v * x0[c];
            }
        }
        match rng.random_range(0..4) {
            0 => {
                l.push(ax);
                u.push(ax);
            }
            1 => {
                l.push(ax - rng.random_range(0.0..1.0));
                u.push(f64::INFINITY);
            }
            2 => {
                l.push(f64::NEG_INFINITY);
                u.push(ax + rng.random_range(0.0..1.0));
            }
            _ => {
                l.push(ax - rng.random_range(0.0..1.0));
                u.push(ax + rng.random_range(0.0..1.0));
            }
        }
    }
    QpProblem::new(CscMatrix::from_triplets(n, n, tp), q, CscMatrix::from_triplets(m, n, ta), l, u).unwrap()
}

/// Exact optimum of a small strictly convex QP: every row is tried inactive,
/// at its lower bound or at its upper bound, and the best feasible stationary
/// point wins.
pub fn qp_oracle(qp: &QpProblem) -> (Vec<f64>, f64) {
    let n = qp.num_vars();
    let m = qp.num_rows();
    let p = {
        let d = qp.p.to_dense();
        DMatrix::from_fn(n, n, |r, c| if r <= c { d[r][c] } else { d[c][r] })
    };
    let a = {
        let d = qp.a.to_dense();
        DMatrix::from_fn(m, n, |r, c| d[r][c])
    };
    let q = DVector::from_column_slice(&qp.q);
    let mut best: Option<(Vec<f64>, f64)> = None;
    for code in 0..3usize.pow(m as u32) {
        let mut rows = Vec::new();
        let mut c = code;
        let mut ok = true;
        for i in 0..m {
            let s = c % 3;
            c /= 3;
            let equality = qp.l[i] == qp.u[i];
            match s {
                0 if equality => ok = false,
                1 if qp.l[i].is_finite() => rows.push((i, qp.l[i])),
                2 if qp.u[i].is_finite() && !equality => rows.push((i, qp.u[i])),
                0 => {}
                _ => ok = false,
            }
        }
        if !ok {
            continue;
        }
        let k = rows.len();
        let mut kkt = DMatrix::<f64>::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p);
        let mut rhs = DVector::<f64>::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(-&q));
        for (j, &(i, b)) in rows.iter().enumerate() {
            for col in 0..n {
                kkt[(n + j, col)] = a[(i, col)];
                kkt[(col, n + j)] = a[(i, col)];
            }
            rhs[n + j] = b;
        }
        let Ok(sol) = kkt.clone().svd(true, true).solve(&rhs, 1e-12) else { continue };
        if (&kkt * &sol - &rhs).amax() > 1e-8 {
            continue;
        }
        let x = sol.rows(0, n).into_owned();
        let ax = &a * &x;
        let feasible = (0..m).all(|i| ax[i] >= qp.l[i] - 1e-9 && ax[i] <= qp.u[i] + 1e-9);
        if !feasible {
            continue;
        }
        let obj = 0.5 * x.dot(&(&p * &x)) + q.dot(&x);
        if best.as_ref().is_none_or(|b| obj < b.1) {
            best = Some((x.as_slice().to_vec(), obj));
        }
    }
    best.expect("the QP is feasible by construction")
}
