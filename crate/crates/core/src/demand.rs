//! Travel demands and the per-node net rebalancing requirement.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{NodeId, RoadNetwork};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravelDemand {
    pub id: usize,
    pub origin: NodeId,
    pub destination: NodeId,
    /// Customers per hour.
    pub rate: f64,
}

/// Ordered list of demands. Duplicate OD pairs stay separate commodities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandSet {
    demands: Vec<TravelDemand>,
}

impl DemandSet {
    /// Builds a set from `(origin, destination, rate)` triples, numbering them from 1.
    pub fn from_triples(triples: impl IntoIterator<Item = (NodeId, NodeId, f64)>) -> Self {
        let demands = triples
            .into_iter()
            .enumerate()
            .map(|(i, (origin, destination, rate))| TravelDemand { id: i + 1, origin, destination, rate })
            .collect();
        DemandSet { demands }
    }

    pub fn new(demands: Vec<TravelDemand>) -> Self {
        DemandSet { demands }
    }

    pub fn demands(&self) -> &[TravelDemand] {
        &self.demands
    }

    pub fn len(&self) -> usize {
        self.demands.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demands.is_empty()
    }

    pub fn origins(&self) -> BTreeSet<NodeId> {
        self.demands.iter().map(|d| d.origin).collect()
    }

    pub fn destinations(&self) -> BTreeSet<NodeId> {
        self.demands.iter().map(|d| d.destination).collect()
    }

    /// Origins and destinations together, sorted.
    pub fn endpoints(&self) -> BTreeSet<NodeId> {
        let mut s = self.origins();
        s.extend(self.destinations());
        s
    }

    pub fn max_rate(&self) -> f64 {
        self.demands.iter().map(|d| d.rate).fold(0.0, f64::max)
    }

    /// Arrivals minus departures of customer flow at `node`. Positive values
    /// must be carried away by rebalancing, negative values must be supplied.
    pub fn net_rebalancing_flow(&self, node: NodeId) -> f64 {
        self.demands.iter().fold(0.0, |acc, d| {
            let mut v = acc;
            if d.destination == node {
                v += d.rate;
            }
            if d.origin == node {
                v -= d.rate;
            }
            v
        })
    }

    pub fn scaled(&self, factor: f64) -> Self {
        DemandSet {
            demands: self.demands.iter().map(|d| TravelDemand { rate: d.rate * factor, ..d.clone() }).collect(),
        }
    }

    /// Reports every violation, tagged with the demand id.
    pub fn validate(&self, network: &RoadNetwork) -> Result<()> {
        let mut issues = Vec::new();
        if self.demands.is_empty() {
            issues.push("demand set is empty".to_string());
        }
        for d in &self.demands {
            let tag = format!("demand {}", d.id);
            if !(d.rate > 0.0 && d.rate.is_finite()) {
                issues.push(format!("{tag}: rate must be positive, got {}", d.rate));
            }
            if d.origin == d.destination {
                issues.push(format!("{tag}: origin equals destination ({})", d.origin));
            }
            for (role, n) in [("origin", d.origin), ("destination", d.destination)] {
                if !network.contains(n) {
                    issues.push(format!("{tag}: {role} {n} is not a network node"));
                }
            }
        }
        let total: f64 = self.endpoints().iter().map(|&j| self.net_rebalancing_flow(j)).sum();
        let scale = self.demands.iter().map(|d| d.rate.abs()).sum::<f64>().max(1.0);
        if total.abs() > 1e-9 * scale {
            issues.push(format!("net rebalancing flows do not sum to zero ({total:e})"));
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(issues))
        }
    }
}

pub fn net_rebalancing_flow(demands: &DemandSet, node: NodeId) -> f64 {
    demands.net_rebalancing_flow(node)
}

pub fn validate_demands(demands: &DemandSet, network: &RoadNetwork) -> Result<()> {
    demands.validate(network)
}

#[cfg(test)]
pub(crate) fn table1() -> DemandSet {
    DemandSet::from_triples([
        (1, 6, 6.0),
        (7, 2, 5.0),
        (5, 3, 2.0),
        (2, 7, 4.0),
        (6, 5, 5.0),
        (7, 3, 3.0),
        (8, 6, 6.0),
        (4, 2, 2.0),
        (1, 2, 2.0),
        (2, 4, 4.0),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Road;
    use proptest::prelude::*;

    fn complete(n: u32) -> RoadNetwork {
        let mut roads = Vec::new();
        for i in 1..=n {
            for j in 1..=n {
                if i != j {
                    roads.push(Road::new(i, j, 0.1, 10.0, 1.0, 0.0).unwrap());
                }
            }
        }
        RoadNetwork::new(1..=n, roads, [1]).unwrap()
    }

    #[test]
    fn table1_net_flows() {
        let d = table1();
        assert_eq!(d.net_rebalancing_flow(1), -8.0);
        assert_eq!(d.net_rebalancing_flow(6), 7.0);
        let all: Vec<f64> = (1..=8).map(|j| d.net_rebalancing_flow(j)).collect();
        assert_eq!(all, vec![-8.0, 1.0, 5.0, 2.0, 3.0, 7.0, -4.0, -6.0]);
        assert_eq!(d.origins().len(), 7);
        assert_eq!(d.destinations().len(), 6);
    }

    #[test]
    fn single_demand() {
        let d = DemandSet::from_triples([(1, 2, 5.0)]);
        assert_eq!(d.net_rebalancing_flow(1), -5.0);
        assert_eq!(d.net_rebalancing_flow(2), 5.0);
        assert_eq!(d.net_rebalancing_flow(3), 0.0);
    }

    #[test]
    fn validation() {
        let net = complete(8);
        assert!(table1().validate(&net).is_ok());

        let zero = DemandSet::from_triples([(1, 2, 0.0)]);
        assert!(matches!(zero.validate(&net), Err(Error::Validation(v)) if v[0].contains("demand 1")));
        let same = DemandSet::from_triples([(1, 2, 1.0), (3, 3, 1.0)]);
        assert!(matches!(same.validate(&net), Err(Error::Validation(v)) if v[0].contains("demand 2")));
        let unknown = DemandSet::from_triples([(1, 99, 1.0)]);
        assert!(matches!(unknown.validate(&net), Err(Error::Validation(v)) if v[0].contains("99")));
    }

    proptest! {
        #[test]
        fn zero_sum_and_linear(
            triples in prop::collection::vec((1u32..9, 1u32..9, 0.1..20.0f64), 1..15),
            c in 0.1..10.0f64,
        ) {
            let d = DemandSet::from_triples(triples);
            let total: f64 = (1..9).map(|j| d.net_rebalancing_flow(j)).sum();
            prop_assert!(total.abs() < 1e-9);
            let s = d.scaled(c);
            for j in 1..9 {
                let lhs = s.net_rebalancing_flow(j);
                let rhs = c * d.net_rebalancing_flow(j);
                prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs.abs()));
            }
        }
    }
}
