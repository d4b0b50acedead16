//! Scenario file format.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::demand::{DemandSet, TravelDemand};
use crate::energy::{BatteryModel, EnergyCurve};
use crate::error::{Error, Result};
use crate::network::{NodeId, PwaConfig, Road, RoadNetwork};
use crate::planner::{PipelineSettings, Scenario};
use crate::solver::SolverSettings;

/// Bundled 8-node, 22-road scenario with the ten-demand table.
pub const FIG2_TABLE1: &str = include_str!("../fixtures/fig2_table1.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeSpec {
    pub id: NodeId,
    #[serde(default)]
    pub charging: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomFlow {
    pub min: f64,
    pub max: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeSpec {
    pub from: NodeId,
    pub to: NodeId,
    /// Free-flow time in hours.
    pub t0: f64,
    /// Capacity in vehicles per hour.
    pub gamma: f64,
    /// Length in km.
    pub length: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_random: Option<RandomFlow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSpec {
    pub o: NodeId,
    pub d: NodeId,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Weights {
    /// Cost of one unit of rebalancing flow per road, in hours.
    pub w_r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    pub nodes: Vec<NodeSpec>,
    pub edges: Vec<EdgeSpec>,
    pub demands: Vec<DemandSpec>,
    /// Multiplies every `alpha`.
    #[serde(default = "one")]
    pub demand_scale: f64,
    pub weights: Weights,
    #[serde(default)]
    pub pwa: PwaConfig,
    #[serde(default)]
    pub energy_curve: EnergyCurve,
    #[serde(default)]
    pub battery: BatteryModel,
    #[serde(default)]
    pub solver: SolverSettings,
    #[serde(default)]
    pub pipeline: PipelineSettings,
}

fn one() -> f64 {
    1.0
}

impl ScenarioFile {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Scenario(format!("line {}, column {}: {e}", e.line(), e.column())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// Private flow per edge; `seed` replaces every `p_random` seed.
    pub fn private_flows(&self, seed: Option<u64>) -> Result<Vec<f64>> {
        self.edges
            .iter()
            .enumerate()
            .map(|(i, e)| match (e.p, e.p_random) {
                (Some(p), None) => Ok(p),
                (None, Some(r)) => {
                    if !(r.min >= 0.0 && r.max >= r.min && r.max.is_finite()) {
                        return Err(Error::Scenario(format!(
                            "edge {}->{}: p_random range [{}, {}] is invalid",
                            e.from, e.to, r.min, r.max
                        )));
                    }
                    let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(r.seed).wrapping_add(i as u64));
                    Ok(if r.max > r.min { rng.random_range(r.min..r.max) } else { r.min })
                }
                (None, None) => Ok(0.0),
                (Some(_), Some(_)) => {
                    Err(Error::Scenario(format!("edge {}->{}: give either p or p_random, not both", e.from, e.to)))
                }
            })
            .collect()
    }

    /// Builds and validates the in-memory scenario, reporting every problem found.
    pub fn to_scenario(&self, seed: Option<u64>) -> Result<Scenario> {
        let p = self.private_flows(seed)?;
        let mut issues = Vec::new();
        let roads: Vec<Road> = self
            .edges
            .iter()
            .zip(&p)
            .map(|(e, &p)| Road {
                from: e.from,
                to: e.to,
                free_flow_time: e.t0,
                capacity: e.gamma,
                length: e.length,
                private_flow: p,
            })
            .collect();
        let network = RoadNetwork::new(
            self.nodes.iter().map(|n| n.id),
            roads,
            self.nodes.iter().filter(|n| n.charging).map(|n| n.id),
        );
        let network = match network {
            Ok(n) => Some(n),
            Err(Error::Validation(v)) => {
                issues.extend(v);
                None
            }
            Err(e) => return Err(e),
        };
        if !(self.demand_scale > 0.0 && self.demand_scale.is_finite()) {
            issues.push(format!("demand_scale must be positive, got {}", self.demand_scale));
        }
        let demands = DemandSet::new(
            self.demands
                .iter()
                .enumerate()
                .map(|(i, d)| TravelDemand {
                    id: i + 1,
                    origin: d.o,
                    destination: d.d,
                    rate: d.alpha * self.demand_scale,
                })
                .collect(),
        );
        if let Some(net) = &network {
            if let Err(Error::Validation(v)) = demands.validate(net) {
                issues.extend(v);
            }
        } else {
            let ids: std::collections::BTreeSet<NodeId> = self.nodes.iter().map(|n| n.id).collect();
            for (i, d) in self.demands.iter().enumerate() {
                for (role, n) in [("origin", d.o), ("destination", d.d)] {
                    if !ids.contains(&n) {
                        issues.push(format!("demand {}: {role} {n} is not a network node", i + 1));
                    }
                }
            }
        }
        if !(self.weights.w_r > 0.0 && self.weights.w_r.is_finite()) {
            issues.push(format!("w_r must be positive, got {}", self.weights.w_r));
        }
        let checks = [
            self.pwa.validate(),
            self.energy_curve.validate(),
            self.battery.validate(),
            self.solver.validate(),
            self.pipeline.validate(),
        ];
        for c in checks {
            match c {
                Ok(()) => {}
                Err(Error::Validation(v)) => issues.extend(v),
                Err(e) => issues.push(e.to_string()),
            }
        }
        if !issues.is_empty() {
            return Err(Error::Validation(issues));
        }
        let positions: BTreeMap<NodeId, (f64, f64)> =
            self.nodes.iter().filter_map(|n| Some((n.id, (n.x?, n.y?)))).collect();
        Ok(Scenario {
            network: network.expect("validated"),
            demands,
            w_r: self.weights.w_r,
            pwa: self.pwa,
            curve: self.energy_curve.clone(),
            battery: self.battery,
            solver: self.solver.clone(),
            pipeline: self.pipeline,
            positions,
        })
    }
}

pub fn fig2_table1() -> ScenarioFile {
    ScenarioFile::from_json(FIG2_TABLE1).expect("bundled fixture parses")
}
