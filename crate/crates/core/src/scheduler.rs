//! Charging schedules from recovered loops.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::energy::{soc_after_charging, trip_energy_max, BatteryModel, EnergyCurve};
use crate::error::{Error, Result};
use crate::loops::{Trip, TripGraph, VehicleLoop};
use crate::network::{NodeId, RoadNetwork};

/// `origin == destination` means "charge before the customer trip leaving
/// `origin`"; otherwise the rebalancing trip `origin -> destination` charges
/// on the way.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargingSchedule {
    pub origin: NodeId,
    pub destination: NodeId,
    pub flow: f64,
}

impl ChargingSchedule {
    pub fn key(&self) -> (NodeId, NodeId) {
        (self.origin, self.destination)
    }
}

/// Schedules with unique `(origin, destination)` keys, sorted by key.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScheduleSet {
    pub schedules: Vec<ChargingSchedule>,
}

impl ScheduleSet {
    pub fn is_empty(&self) -> bool {
        self.schedules.is_empty()
    }

    pub fn len(&self) -> usize {
        self.schedules.len()
    }

    pub fn contains(&self, key: (NodeId, NodeId)) -> bool {
        self.schedules.iter().any(|s| s.key() == key)
    }

    pub fn as_slice(&self) -> &[ChargingSchedule] {
        &self.schedules
    }
}

/// Groups by key and sums flows.
pub fn merge_schedules(raw: &[ChargingSchedule]) -> ScheduleSet {
    let mut acc: BTreeMap<(NodeId, NodeId), f64> = BTreeMap::new();
    for s in raw {
        *acc.entry(s.key()).or_insert(0.0) += s.flow;
    }
    ScheduleSet {
        schedules: acc
            .into_iter()
            .map(|((origin, destination), flow)| ChargingSchedule { origin, destination, flow })
            .collect(),
    }
}

/// Schedule key a trip charges under.
pub fn charging_key(trip: &Trip) -> (NodeId, NodeId) {
    if trip.kind.is_rebalance() {
        (trip.origin, trip.destination)
    } else {
        (trip.origin, trip.origin)
    }
}

/// Position the loop starts from: its first rebalancing trip, else its first trip.
pub fn loop_start(graph: &TripGraph, l: &VehicleLoop) -> usize {
    l.trips.iter().position(|&t| graph.trips[t].kind.is_rebalance()).unwrap_or(0)
}

/// Trip energies as capacity fractions, checked against the usable window.
pub fn trip_energies(
    graph: &TripGraph,
    network: &RoadNetwork,
    x: &[f64],
    curve: &EnergyCurve,
    battery: &BatteryModel,
) -> Result<Vec<f64>> {
    graph
        .trips
        .iter()
        .map(|t| {
            let e = battery.fraction(trip_energy_max(t, network, x, curve)?);
            if e >= 1.0 - battery.reserve {
                return Err(Error::InfeasibleTrip { trip: t.label(), soc: 1.0 - e });
            }
            Ok(e)
        })
        .collect()
}

fn charge(trip: &Trip, energy: f64, network: &RoadNetwork, battery: &BatteryModel) -> Result<f64> {
    let soc = soc_after_charging(trip.kind, trip.origin, trip.destination, energy, network.charging_stations())
        .map_err(|_| Error::InfeasibleTrip { trip: trip.label(), soc: 0.0 })?;
    if soc < battery.reserve {
        return Err(Error::InfeasibleTrip { trip: trip.label(), soc });
    }
    Ok(soc)
}

/// Walks each loop from its start trip, charging at the start and whenever
/// the battery would fall below the reserve.
pub fn schedule_charging(
    graph: &TripGraph,
    loops: &[VehicleLoop],
    network: &RoadNetwork,
    x: &[f64],
    curve: &EnergyCurve,
    battery: &BatteryModel,
) -> Result<ScheduleSet> {
    let energy = trip_energies(graph, network, x, curve, battery)?;
    let mut raw = Vec::new();
    for l in loops {
        let start = loop_start(graph, l);
        let n = l.trips.len();
        let mut soc = 0.0;
        for step in 0..n {
            let t = l.trips[(start + step) % n];
            let trip = &graph.trips[t];
            let e = energy[t];
            if step == 0 || soc - e < battery.reserve {
                let (origin, destination) = charging_key(trip);
                raw.push(ChargingSchedule { origin, destination, flow: l.flow });
                soc = charge(trip, e, network, battery)?;
            } else {
                soc -= e;
            }
        }
    }
    Ok(merge_schedules(&raw))
}

/// Outcome of replaying a loop against a fixed schedule set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopVerdict {
    pub feasible: bool,
    /// Lowest state of charge seen at a trip boundary.
    pub min_soc: f64,
    pub charges: usize,
    /// Trip that could not be driven, when infeasible.
    pub failing_trip: Option<String>,
}

/// Replays each loop, charging only at trips whose key is in `schedules` and
/// only when the next trip would cross the reserve.
pub fn verify_loops(
    graph: &TripGraph,
    loops: &[VehicleLoop],
    schedules: &ScheduleSet,
    network: &RoadNetwork,
    x: &[f64],
    curve: &EnergyCurve,
    battery: &BatteryModel,
) -> Vec<LoopVerdict> {
    let energy: Vec<Option<f64>> =
        graph.trips.iter().map(|t| trip_energy_max(t, network, x, curve).ok().map(|k| battery.fraction(k))).collect();
    loops.iter().map(|l| verify_one(graph, l, schedules, network, &energy, battery)).collect()
}

fn verify_one(
    graph: &TripGraph,
    l: &VehicleLoop,
    schedules: &ScheduleSet,
    network: &RoadNetwork,
    energy: &[Option<f64>],
    battery: &BatteryModel,
) -> LoopVerdict {
    let fail = |trip: &Trip, min_soc: f64, charges| LoopVerdict {
        feasible: false,
        min_soc,
        charges,
        failing_trip: Some(trip.label()),
    };
    let n = l.trips.len();
    let scheduled = |t: usize| schedules.contains(charging_key(&graph.trips[t]));
    let preferred = loop_start(graph, l);
    let start = if scheduled(l.trips[preferred]) { Some(preferred) } else { (0..n).find(|&k| scheduled(l.trips[k])) };
    let Some(start) = start else {
        return fail(&graph.trips[l.trips[preferred]], 0.0, 0);
    };
    let mut soc = 0.0;
    let mut min_soc = f64::INFINITY;
    let mut charges = 0;
    for step in 0..n {
        let t = l.trips[(start + step) % n];
        let trip = &graph.trips[t];
        let Some(e) = energy[t].filter(|e| *e < 1.0) else {
            return fail(trip, min_soc.min(soc), charges);
        };
        if step == 0 || soc - e < battery.reserve {
            if !scheduled(t) {
                return fail(trip, min_soc.min(soc - e), charges);
            }
            match soc_after_charging(trip.kind, trip.origin, trip.destination, e, network.charging_stations()) {
                Ok(s) if s >= battery.reserve => soc = s,
                Ok(s) => return fail(trip, min_soc.min(s), charges),
                Err(_) => return fail(trip, min_soc.min(0.0), charges),
            }
            charges += 1;
        } else {
            soc -= e;
        }
        min_soc = min_soc.min(soc);
    }
    LoopVerdict { feasible: true, min_soc, charges, failing_trip: None }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::loops::TripKind;
    use crate::network::Road;

    #[test]
    fn merge_sums_equal_keys() {
        let s = |o, d, f| ChargingSchedule { origin: o, destination: d, flow: f };
        let m = merge_schedules(&[s(1, 1, 2.0), s(1, 1, 3.0)]);
        assert_eq!(m.schedules, vec![s(1, 1, 5.0)]);
        let m = merge_schedules(&[s(1, 2, 2.0), s(2, 1, 2.0)]);
        assert_eq!(m.len(), 2);
        assert!(merge_schedules(&[]).is_empty());
    }

    /// Line 1 - 2 - 3 with both directions and a charger at 3. Each road is 10 km.
    fn line() -> RoadNetwork {
        let mut roads = Vec::new();
        for (a, b) in [(1, 2), (2, 3)] {
            roads.push(Road::new(a, b, 10.0 / 30.0, 1000.0, 10.0, 0.0).unwrap());
            roads.push(Road::new(b, a, 10.0 / 30.0, 1000.0, 10.0, 0.0).unwrap());
        }
        RoadNetwork::new([1, 2, 3], roads, [3]).unwrap()
    }

    fn trip(net: &RoadNetwork, kind: TripKind, o: NodeId, d: NodeId, path: &[(NodeId, NodeId)], flow: f64) -> Trip {
        let mut sub = vec![0.0; net.num_roads()];
        for &(a, b) in path {
            let e = net.roads().iter().position(|r| r.from == a && r.to == b).unwrap();
            sub[e] = flow;
        }
        Trip { kind, origin: o, destination: d, flow, road_subflow: sub }
    }

    #[test]
    fn rebalancing_trip_goes_first() {
        let net = line();
        let g = TripGraph::new(vec![
            trip(&net, TripKind::Customer { demand: 1 }, 1, 2, &[(1, 2)], 4.0),
            trip(&net, TripKind::Rebalance, 2, 1, &[(2, 1)], 4.0),
        ]);
        let loops = vec![VehicleLoop { trips: vec![0, 1], flow: 4.0 }];
        let x = vec![0.0; 4];
        let s = schedule_charging(&g, &loops, &net, &x, &EnergyCurve::default(), &BatteryModel::default()).unwrap();
        assert_eq!(s.schedules, vec![ChargingSchedule { origin: 2, destination: 1, flow: 4.0 }]);
        let v = verify_loops(&g, &loops, &s, &net, &x, &EnergyCurve::default(), &BatteryModel::default());
        assert!(v[0].feasible);
    }

    #[test]
    fn customer_only_loop_charges_at_first_origin() {
        let net = line();
        let c = |d| TripKind::Customer { demand: d };
        let g = TripGraph::new(vec![trip(&net, c(1), 1, 2, &[(1, 2)], 2.0), trip(&net, c(2), 2, 1, &[(2, 1)], 2.0)]);
        let loops = vec![VehicleLoop { trips: vec![0, 1], flow: 2.0 }];
        let s =
            schedule_charging(&g, &loops, &net, &[0.0; 4], &EnergyCurve::default(), &BatteryModel::default()).unwrap();
        assert_eq!(s.schedules, vec![ChargingSchedule { origin: 1, destination: 1, flow: 2.0 }]);
    }

    #[test]
    fn second_charge_when_reserve_would_be_crossed() {
        // each 10 km road costs 1.5 kWh at 30 km/h; a 5 kWh battery makes a
        // one-road trip 0.3 of capacity
        let net = line();
        let c = |d| TripKind::Customer { demand: d };
        let g = TripGraph::new(vec![
            trip(&net, c(1), 1, 2, &[(1, 2)], 1.0),
            trip(&net, c(2), 2, 3, &[(2, 3)], 1.0),
            trip(&net, c(3), 3, 1, &[(3, 2), (2, 1)], 1.0),
        ]);
        let loops = vec![VehicleLoop { trips: vec![0, 1, 2], flow: 1.0 }];
        let battery = BatteryModel { capacity_kwh: 5.0, reserve: 0.1 };
        let s = schedule_charging(&g, &loops, &net, &[0.0; 4], &EnergyCurve::default(), &battery).unwrap();
        // start at 1: 0.9 - 0.3 = 0.6; trip 2 -> 3: 0.6 - 0.3 = 0.3; trip 3 -> 1 needs 0.6 so charge at 3
        assert_eq!(
            s.schedules,
            vec![
                ChargingSchedule { origin: 1, destination: 1, flow: 1.0 },
                ChargingSchedule { origin: 3, destination: 3, flow: 1.0 },
            ]
        );
        let ok = verify_loops(&g, &loops, &s, &net, &[0.0; 4], &EnergyCurve::default(), &battery);
        assert!(ok[0].feasible);
        let only_first = merge_schedules(&s.schedules[..1]);
        let bad = verify_loops(&g, &loops, &only_first, &net, &[0.0; 4], &EnergyCurve::default(), &battery);
        assert!(!bad[0].feasible);
        assert_eq!(bad[0].failing_trip.as_deref(), Some("customer 3 (3 -> 1)"));
    }

    #[test]
    fn oversized_trip_is_rejected() {
        let net = line();
        let g = TripGraph::new(vec![
            trip(&net, TripKind::Customer { demand: 1 }, 1, 3, &[(1, 2), (2, 3)], 1.0),
            trip(&net, TripKind::Rebalance, 3, 1, &[(3, 2), (2, 1)], 1.0),
        ]);
        let loops = vec![VehicleLoop { trips: vec![0, 1], flow: 1.0 }];
        let battery = BatteryModel { capacity_kwh: 3.0, reserve: 0.1 };
        let err = schedule_charging(&g, &loops, &net, &[0.0; 4], &EnergyCurve::default(), &battery).unwrap_err();
        assert!(matches!(err, Error::InfeasibleTrip { .. }));
    }
}
