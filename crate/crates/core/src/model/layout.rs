use serde::{Deserialize, Serialize};

use crate::network::{EdgeId, NodeId};

/// What a block of per-edge flow variables carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CommodityKind {
    /// Customers of demand `demand` (index into the demand list).
    Customer { demand: usize },
    /// Empty vehicles moving from destination node `from` to origin node `to`.
    Rebalance { from: NodeId, to: NodeId },
    /// Vehicles leaving `node` to visit a charger and returning to `node`.
    ChargeLoop { node: NodeId },
}

impl CommodityKind {
    pub fn is_customer(&self) -> bool {
        matches!(self, CommodityKind::Customer { .. })
    }
}

/// Canonical variable ordering: all flow blocks commodity-major, then one
/// `(ε1, ε2)` pair per road.
#[derive(Debug, Clone, PartialEq)]
pub struct VariableLayout {
    commodities: Vec<CommodityKind>,
    num_edges: usize,
    private_flow: Vec<f64>,
}

impl VariableLayout {
    pub(crate) fn new(commodities: Vec<CommodityKind>, private_flow: Vec<f64>) -> Self {
        VariableLayout { num_edges: private_flow.len(), commodities, private_flow }
    }

    pub fn commodities(&self) -> &[CommodityKind] {
        &self.commodities
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn private_flow(&self) -> &[f64] {
        &self.private_flow
    }

    pub fn flow(&self, commodity: usize, edge: EdgeId) -> usize {
        commodity * self.num_edges + edge
    }

    pub fn slack1(&self, edge: EdgeId) -> usize {
        self.commodities.len() * self.num_edges + 2 * edge
    }

    pub fn slack2(&self, edge: EdgeId) -> usize {
        self.slack1(edge) + 1
    }

    pub fn num_flow_vars(&self) -> usize {
        self.commodities.len() * self.num_edges
    }

    pub fn num_vars(&self) -> usize {
        self.num_flow_vars() + 2 * self.num_edges
    }

    pub fn position(&self, kind: &CommodityKind) -> Option<usize> {
        self.commodities.iter().position(|k| k == kind)
    }
}
