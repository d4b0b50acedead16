//! Acceptance suite: prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

mod common;

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::Instant;

use aemod_core::model::{approx_objective, build_routing_problem, extract_solution, qp_objective};
use aemod_core::network::compute_slacks;
use aemod_core::planner::{plan, PlanReport};
use aemod_core::scenario::fig2_table1;
use aemod_core::solver::solve_qp;
use aemod_core::{
    edge_energy, recover_loops, soc_after_charging, trip_energy_max, EnergyCurve, Error, NodeId, PiecewiseTravelTime,
    PlanOptions, Road, RoadNetwork, Scenario, SolverSettings, SolverStatus, Trip, TripGraph, TripKind, VehicleLoop,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn scenario() -> Scenario {
    fig2_table1().to_scenario(None).expect("fixture is valid")
}

struct Fixture {
    scenario: Scenario,
    report: PlanReport,
    seconds: f64,
}

fn run_fixture() -> Result<Fixture, String> {
    let sc = scenario();
    let start = Instant::now();
    let report = plan(&sc, PlanOptions::default()).map_err(|e| e.to_string())?;
    Ok(Fixture { scenario: sc, report, seconds: start.elapsed().as_secs_f64() })
}

fn ensure(ok: bool, pass: String, fail: String) -> Check {
    if ok {
        Ok(pass)
    } else {
        Err(fail)
    }
}

fn c1(f: &Fixture) -> Check {
    let (Some(b), Some(p1)) = (&f.report.baseline, &f.report.phase1) else { return Err("phases missing".into()) };
    let msg = format!(
        "baseline max ratio {:.3} vs aware {:.3}; exact cost {:.2} vs {:.2}; {:.2} s",
        b.congestion.max, p1.congestion.max, b.exact_objective, p1.exact_objective, f.seconds
    );
    let ok = b.congestion.max > p1.congestion.max && b.exact_objective >= p1.exact_objective && f.seconds < 60.0;
    ensure(ok, msg.clone(), msg)
}

fn c2(f: &Fixture) -> Check {
    let b = f.report.baseline.as_ref().ok_or("baseline missing")?;
    let tol = 1e-6 * f.scenario.flow_scale();
    let dead: Vec<usize> =
        (0..b.solution.u.len()).filter(|&e| b.solution.u[e] + b.solution.r[e] <= tol).map(|e| e + 1).collect();
    ensure(
        !dead.is_empty(),
        format!("roads without fleet flow in the baseline: {dead:?}"),
        "every road carries fleet flow in the baseline".into(),
    )
}

fn c3(f: &Fixture) -> Check {
    let (Some(p1), Some(p2)) = (&f.report.phase1, &f.report.phase2) else { return Err("phases missing".into()) };
    let (t1, t2): (f64, f64) = (p1.solution.x.iter().sum(), p2.solution.x.iter().sum());
    let up = (0..p1.congestion.ratios.len()).filter(|&e| p2.congestion.ratios[e] > p1.congestion.ratios[e]).count();
    let msg = format!("total flow {t1:.1} -> {t2:.1}; {up} roads more congested");
    ensure(t2 >= t1 && up > 0, msg.clone(), msg)
}

fn c4(f: &Fixture) -> Check {
    let v = f.report.verdict.as_ref().ok_or("no verdict")?;
    let rounds = f.report.rounds.len();
    let bad = v.loops.iter().filter(|l| !l.feasible).count();
    let msg = format!("{} loops, {bad} infeasible, {rounds} round(s)", v.loops.len());
    ensure(v.feasible && rounds <= 3 && f.report.infeasible_trip.is_none(), msg.clone(), msg)
}

fn c5() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sc = scenario();
    let instances = vec![
        common::instance("fixture", sc.network.clone(), sc.demands.clone(), sc.w_r),
        common::ring_instance(&mut rng),
        common::grid_instance(&mut rng),
    ];
    let mut worst = f64::INFINITY;
    for inst in &instances {
        let (qp, layout) =
            build_routing_problem(&inst.network, &inst.demands, inst.w_r, &inst.pwa).map_err(|e| e.to_string())?;
        for i in 0..100 {
            let v = common::random_feasible_point(inst, &layout, &mut rng);
            let viol = qp.constraint_violation(&v);
            let scale = inst.demands.max_rate().max(1.0);
            if viol > 1e-9 * scale {
                return Err(format!("{} sample {i}: generator produced violation {viol:e}", inst.name));
            }
            let sol = extract_solution(&layout, &v, 1e-9).map_err(|e| e.to_string())?;
            let upper = qp_objective(&qp, &v);
            let approx = approx_objective(&inst.network, &inst.pwa, &sol, inst.w_r).map_err(|e| e.to_string())?;
            if upper < approx - 1e-9 * approx.abs() {
                return Err(format!("{} sample {i}: quadratic {upper} below approximation {approx}", inst.name));
            }
            worst = worst.min((upper - approx) / approx.abs().max(1e-12));
        }
    }
    Ok(format!("300 feasible points on 3 networks; smallest relative gap {worst:.3e}"))
}

fn c6(f: &Fixture) -> Check {
    let tol = 1e-6 * f.scenario.demands.max_rate().max(1.0);
    let mut worst = Vec::new();
    for (name, phase, schedules) in [
        ("phase 1", f.report.phase1.as_ref(), Vec::new()),
        ("phase 2", f.report.phase2.as_ref(), f.report.schedules.clone().unwrap_or_default().as_slice().to_vec()),
    ] {
        let p = phase.ok_or(format!("{name} missing"))?;
        let rep = p.solution.conservation(&f.scenario.network, &f.scenario.demands, &schedules);
        if rep.max_residual > tol {
            return Err(format!("{name}: residual {:e} at {} exceeds {tol:e}", rep.max_residual, rep.worst));
        }
        worst.push(format!("{name} {:.1e}", rep.max_residual));
    }
    Ok(format!("residuals {} within {tol:.1e}", worst.join(", ")))
}

/// Largest relative gap between a trip's flow and the flow of loops through it;
/// also checks each loop is a closed chain.
fn partition_error(graph: &TripGraph, loops: &[VehicleLoop]) -> Result<f64, String> {
    let mut covered = vec![0.0; graph.trips.len()];
    for (i, l) in loops.iter().enumerate() {
        if l.trips.is_empty() || l.flow <= 0.0 {
            return Err(format!("loop {i} is empty"));
        }
        for (k, &t) in l.trips.iter().enumerate() {
            let next = l.trips[(k + 1) % l.trips.len()];
            if graph.trips[t].destination != graph.trips[next].origin {
                return Err(format!("loop {i} is not closed at trip {t}"));
            }
            covered[t] += l.flow;
        }
    }
    Ok(graph.trips.iter().zip(&covered).map(|(t, c)| (t.flow - c).abs() / t.flow.max(1.0)).fold(0.0, f64::max))
}

fn random_trip_graph(rng: &mut impl Rng) -> TripGraph {
    let n: NodeId = rng.random_range(2..=8);
    let mut trips = Vec::new();
    for _ in 0..rng.random_range(1..=6) {
        let len = rng.random_range(2..=5);
        let mut cycle: Vec<NodeId> = vec![rng.random_range(1..=n)];
        while cycle.len() < len {
            let v = rng.random_range(1..=n);
            if v != *cycle.last().unwrap() {
                cycle.push(v);
            }
        }
        if cycle[0] == *cycle.last().unwrap() {
            cycle.pop();
        }
        let flow = rng.random_range(0.1..50.0);
        for k in 0..cycle.len() {
            let kind =
                if rng.random_bool(0.5) { TripKind::Customer { demand: trips.len() + 1 } } else { TripKind::Rebalance };
            trips.push(Trip {
                kind,
                origin: cycle[k],
                destination: cycle[(k + 1) % cycle.len()],
                flow,
                road_subflow: Vec::new(),
            });
        }
    }
    TripGraph::new(trips)
}

fn c7(f: &Fixture) -> Check {
    let mut worst = 0.0f64;
    for set in [f.report.loops.as_ref(), f.report.verified_loops.as_ref()] {
        let set = set.ok_or("fixture loops missing")?;
        worst = worst.max(partition_error(&set.graph(), &set.loops)?);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for i in 0..50 {
        let g = random_trip_graph(&mut rng);
        let loops = recover_loops(&g).map_err(|e| format!("graph {i}: {e}"))?;
        worst = worst.max(partition_error(&g, &loops).map_err(|e| format!("graph {i}: {e}"))?);
    }
    ensure(worst <= 1e-9, format!("fixture and 50 random graphs; worst gap {worst:.1e}"), format!("gap {worst:e}"))
}

/// Random DAG flow from the first to the last node of a random order.
fn random_dag_trip(rng: &mut impl Rng) -> (RoadNetwork, Trip, Vec<f64>) {
    let n = rng.random_range(2..=12);
    let mut order: Vec<NodeId> = (1..=n as NodeId).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut arcs: BTreeSet<(usize, usize)> = BTreeSet::new();
    for i in 0..n - 1 {
        arcs.insert((i, i + 1));
        for j in i + 2..n {
            if rng.random_bool(0.35) {
                arcs.insert((i, j));
            }
        }
    }
    let arcs: Vec<(usize, usize)> = arcs.into_iter().collect();
    let mut roads = Vec::new();
    let mut x = Vec::new();
    for &(i, j) in &arcs {
        let length = rng.random_range(0.2..4.0);
        let speed = rng.random_range(8.0..90.0);
        let gamma = rng.random_range(5.0..50.0);
        roads.push(Road::new(order[i], order[j], length / speed, gamma, length, 0.0).unwrap());
        x.push(rng.random_range(0.0..2.0 * gamma));
    }
    // every position can reach the last one through its successor in the order
    let mut subflow = vec![0.0; arcs.len()];
    let mut total = 0.0;
    for _ in 0..rng.random_range(1..=4) {
        let f = rng.random_range(0.5..10.0);
        total += f;
        let mut at = 0;
        while at != n - 1 {
            let out: Vec<usize> = (0..arcs.len()).filter(|&k| arcs[k].0 == at).collect();
            let k = out[rng.random_range(0..out.len())];
            subflow[k] += f;
            at = arcs[k].1;
        }
    }
    let net = RoadNetwork::new(order.clone(), roads, [order[0]]).unwrap();
    let trip = Trip {
        kind: TripKind::Rebalance,
        origin: order[0],
        destination: order[n - 1],
        flow: total,
        road_subflow: subflow,
    };
    (net, trip, x)
}

fn enumerate_max(net: &RoadNetwork, trip: &Trip, kwh: &[f64]) -> f64 {
    fn walk(net: &RoadNetwork, trip: &Trip, kwh: &[f64], at: NodeId, sum: f64, best: &mut f64) {
        if at == trip.destination {
            *best = best.max(sum);
            return;
        }
        for &e in net.outgoing(at) {
            if trip.road_subflow[e] > 0.0 {
                walk(net, trip, kwh, net.road(e).to, sum + kwh[e], best);
            }
        }
    }
    let mut best = f64::NEG_INFINITY;
    walk(net, trip, kwh, trip.origin, 0.0, &mut best);
    best
}

fn c8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let curve = EnergyCurve::default();
    for i in 0..200 {
        let (net, trip, x) = random_dag_trip(&mut rng);
        let kwh: Vec<f64> = net.roads().iter().zip(&x).map(|(r, &x)| edge_energy(r, x, &curve).unwrap().kwh).collect();
        let got = trip_energy_max(&trip, &net, &x, &curve).map_err(|e| format!("dag {i}: {e}"))?;
        let want = enumerate_max(&net, &trip, &kwh);
        if got != want {
            return Err(format!("dag {i}: {got} vs enumerated {want}"));
        }
    }
    Ok("200 random DAG flows match path enumeration exactly".into())
}

fn c9() -> Check {
    let st: BTreeSet<NodeId> = [1].into();
    let r = TripKind::Rebalance;
    let c = TripKind::Customer { demand: 1 };
    let cases = [
        ("rebalance into a station", r, 2, 1, 0.20, 1.00),
        ("rebalance out of a station", r, 1, 2, 0.20, 0.80),
        ("rebalance elsewhere", r, 2, 3, 0.20, 0.90),
        ("customer into a station", c, 2, 1, 0.15, 0.85),
        ("customer elsewhere", c, 2, 3, 0.15, 0.75),
    ];
    for (name, kind, o, d, e, want) in cases {
        let got = soc_after_charging(kind, o, d, e, &st).map_err(|e| format!("{name}: {e}"))?;
        if (got - want).abs() > 1e-12 {
            return Err(format!("{name}: {got} vs {want}"));
        }
    }
    match soc_after_charging(c, 2, 3, 0.95, &st) {
        Err(Error::InfeasibleTrip { .. }) => Ok("five branches and the negative-charge error".into()),
        other => Err(format!("customer trip of 95% gave {other:?}")),
    }
}

fn c10() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let settings = SolverSettings::default();
    let mut worst = 0.0f64;
    for i in 0..50 {
        let qp = common::random_qp(&mut rng, 8, 6);
        let (_, want) = common::qp_oracle(&qp);
        let res = solve_qp(&qp, &settings).map_err(|e| format!("qp {i}: {e}"))?;
        if res.status != SolverStatus::Solved {
            return Err(format!("qp {i}: status {:?}", res.status));
        }
        let rel = (res.objective - want).abs() / want.abs().max(1.0);
        worst = worst.max(rel);
        if rel > 1e-5 {
            return Err(format!("qp {i}: objective {} vs oracle {want}", res.objective));
        }
    }
    Ok(format!("50 random QPs; worst relative objective gap {worst:.1e}"))
}

fn c11() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for i in 0..1000 {
        let x_th1 = rng.random_range(1.0..100.0);
        let a = rng.random_range(1e-3..1.0);
        let pwa = PiecewiseTravelTime {
            x_th1,
            x_th2: x_th1 + rng.random_range(1.0..100.0),
            a,
            b: a * rng.random_range(1.01..5.0),
        };
        let x = match i % 4 {
            0 => pwa.x_th1,
            1 => pwa.x_th2,
            _ => rng.random_range(0.0..2.0 * pwa.x_th2),
        };
        let got = compute_slacks(&pwa, x).map_err(|e| e.to_string())?;
        let want = common::slack_lp_oracle(&pwa, x);
        let tol = 1e-9 * x.max(1.0);
        if (got.0 - want.0).abs() > tol || (got.1 - want.1).abs() > tol {
            return Err(format!("pair {i} (x = {x}): {got:?} vs {want:?}"));
        }
    }
    Ok("1000 random (curve, flow) pairs match the LP vertex oracle".into())
}

fn c12(f: &Fixture) -> Check {
    let again = plan(&scenario(), PlanOptions::default()).map_err(|e| e.to_string())?;
    let (a, b) = (f.report.to_json(), again.to_json());
    ensure(a == b, format!("{} bytes, identical", a.len()), "report.json differs between runs".into())
}

fn main() -> ExitCode {
    let fixture = run_fixture();
    let with_fixture = |c: fn(&Fixture) -> Check| -> Check {
        match &fixture {
            Ok(f) => c(f),
            Err(e) => Err(format!("pipeline failed: {e}")),
        }
    };
    let results: Vec<(&str, Check)> = vec![
        ("baseline congestion exceeds congestion-aware routing", with_fixture(c1)),
        ("baseline leaves a road without fleet flow", with_fixture(c2)),
        ("charging trips add flow", with_fixture(c3)),
        ("phase-2 loops are energy feasible", with_fixture(c4)),
        ("quadratic cost bounds the approximation", c5()),
        ("flow requirements hold", with_fixture(c6)),
        ("loops partition trip flow", with_fixture(c7)),
        ("trip energy matches path enumeration", c8()),
        ("state of charge table", c9()),
        ("solver matches the active-set oracle", c10()),
        ("slacks are minimal", c11()),
        ("report is deterministic", with_fixture(c12)),
    ];
    let mut failed = 0;
    for (i, (name, res)) in results.iter().enumerate() {
        match res {
            Ok(m) => println!("criterion {:>2} PASS  {name}: {m}", i + 1),
            Err(m) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {m}", i + 1);
            }
        }
    }
    if let Ok(f) = &fixture {
        if let Some(p) = &f.report.phase1 {
            println!("phase-1 program: {} variables", p.solver.variables);
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
