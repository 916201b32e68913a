//! Expansion of an architecture tree into a thermal physics graph.

use std::collections::BTreeMap;

use serde::Serialize;

use super::PhysicsParams;
use crate::config::{ConfigGraph, FlowMap, FlowSource, ROOT};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    TankFluid,
    CphxFluid,
    CphxWall,
    LlhxPrimary,
    LlhxWall,
    LlhxSecondary,
    SinkBoundary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhysicsNode {
    pub kind: NodeKind,
    /// Device label for cold-plate nodes.
    pub label: Option<u32>,
    /// Heat capacitance in J/K; zero for the sink boundary.
    pub capacitance: f64,
}

/// Which mass flow drives an advective edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowRef {
    Pump,
    /// Index into the split-branch flow vector `[m_indp; m_dp]`.
    Branch(usize),
    Sink,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum EdgeKind {
    /// Coolant carried from `tail` into `head`.
    Advection { flow: FlowRef },
    /// Wall/fluid exchange with conductance `ha` (W/K), symmetric.
    Convection { ha: f64 },
    /// Sink stream exchanging with the heat exchanger secondary side.
    BidirAdvection { flow: FlowRef },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhysicsEdge {
    pub tail: usize,
    pub head: usize,
    pub kind: EdgeKind,
}

/// Node/edge graph of temperatures and power flows.
///
/// Node order is: tank, cold-plate fluids (label order), cold-plate walls
/// (label order), heat exchanger primary, wall, secondary, and finally the
/// sink boundary. All nodes but the sink are states.
#[derive(Debug, Clone, Serialize)]
pub struct PhysicsGraph {
    pub nodes: Vec<PhysicsNode>,
    pub edges: Vec<PhysicsEdge>,
    /// Device label to wall node index.
    pub heat_load_map: BTreeMap<u32, usize>,
    /// Device label to fluid node index.
    pub fluid_map: BTreeMap<u32, usize>,
    /// Device labels in state order.
    pub labels: Vec<u32>,
    /// Heat loads (W) aligned with `labels`.
    pub loads: Vec<f64>,
    pub params: PhysicsParams,
    #[serde(skip)]
    pub flow_map: FlowMap,
    #[serde(skip)]
    pub config: ConfigGraph,
}

impl PhysicsGraph {
    pub const TANK: usize = 0;

    pub fn n_states(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn sink(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn llhx_primary(&self) -> usize {
        self.nodes.len() - 4
    }

    pub fn llhx_wall(&self) -> usize {
        self.nodes.len() - 3
    }

    pub fn llhx_secondary(&self) -> usize {
        self.nodes.len() - 2
    }

    pub fn advection_edges(&self) -> impl Iterator<Item = &PhysicsEdge> {
        self.edges.iter().filter(|e| matches!(e.kind, EdgeKind::Advection { .. }))
    }

    /// Initial temperatures: walls and cold-plate coolant at their initial
    /// values, tank and heat exchanger at the loop value.
    pub fn initial_temperatures(&self) -> Vec<f64> {
        self.nodes[..self.n_states()]
            .iter()
            .map(|n| match n.kind {
                NodeKind::CphxWall => self.params.t_wall_init,
                NodeKind::CphxFluid => self.params.t_fluid_init,
                _ => self.params.t_loop_init,
            })
            .collect()
    }
}

/// Builds the physics graph of `graph` with heat loads in W keyed by label.
pub fn build_physics_graph(
    graph: &ConfigGraph,
    loads: &BTreeMap<u32, f64>,
    params: &PhysicsParams,
) -> Result<PhysicsGraph> {
    params.validate()?;
    let labels: Vec<u32> = graph.labels().collect();
    let mut load_vec = Vec::with_capacity(labels.len());
    for &l in &labels {
        let p = *loads.get(&l).ok_or(Error::MissingLoad(l))?;
        if !p.is_finite() {
            return Err(Error::Validation(format!("heat load of device {l} is not finite")));
        }
        load_vec.push(p);
    }
    let n = labels.len();
    let fluid_c = params.cphx_fluid_mass * params.cp_fluid;
    let wall_c = params.cphx_wall_mass * params.cp_wall;

    let mut nodes = vec![PhysicsNode {
        kind: NodeKind::TankFluid,
        label: None,
        capacitance: params.tank_fluid_mass * params.cp_fluid,
    }];
    let mut fluid_map = BTreeMap::new();
    let mut heat_load_map = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        fluid_map.insert(l, 1 + i);
        nodes.push(PhysicsNode { kind: NodeKind::CphxFluid, label: Some(l), capacitance: fluid_c });
    }
    for (i, &l) in labels.iter().enumerate() {
        heat_load_map.insert(l, 1 + n + i);
        nodes.push(PhysicsNode { kind: NodeKind::CphxWall, label: Some(l), capacitance: wall_c });
    }
    let llhx_p = nodes.len();
    nodes.push(PhysicsNode {
        kind: NodeKind::LlhxPrimary,
        label: None,
        capacitance: params.llhx_primary_mass * params.cp_fluid,
    });
    let llhx_w = nodes.len();
    nodes.push(PhysicsNode {
        kind: NodeKind::LlhxWall,
        label: None,
        capacitance: params.llhx_wall_mass * params.cp_wall,
    });
    let llhx_s = nodes.len();
    nodes.push(PhysicsNode {
        kind: NodeKind::LlhxSecondary,
        label: None,
        capacitance: params.llhx_secondary_mass * params.cp_fluid,
    });
    let sink = nodes.len();
    nodes.push(PhysicsNode { kind: NodeKind::SinkBoundary, label: None, capacitance: 0.0 });

    let flow_map = FlowMap::new(graph, params.pump_flow);
    let flow_of = |src: FlowSource| match src {
        FlowSource::Pump => FlowRef::Pump,
        FlowSource::Branch(j) => FlowRef::Branch(j),
    };
    let node_of = |label: u32| if label == ROOT { PhysicsGraph::TANK } else { fluid_map[&label] };

    let mut edges = Vec::new();
    let mut inflow_of_leaf = BTreeMap::new();
    for (&(p, c), &src) in flow_map.branch_edges.iter().zip(&flow_map.edge_sources) {
        edges.push(PhysicsEdge {
            tail: node_of(p),
            head: node_of(c),
            kind: EdgeKind::Advection { flow: flow_of(src) },
        });
        inflow_of_leaf.insert(c, src);
    }
    for leaf in graph.leaves() {
        edges.push(PhysicsEdge {
            tail: node_of(leaf),
            head: llhx_p,
            kind: EdgeKind::Advection { flow: flow_of(inflow_of_leaf[&leaf]) },
        });
    }
    edges.push(PhysicsEdge {
        tail: llhx_p,
        head: PhysicsGraph::TANK,
        kind: EdgeKind::Advection { flow: FlowRef::Pump },
    });
    for &l in &labels {
        edges.push(PhysicsEdge {
            tail: heat_load_map[&l],
            head: fluid_map[&l],
            kind: EdgeKind::Convection { ha: params.ha_cphx },
        });
    }
    edges.push(PhysicsEdge {
        tail: llhx_w,
        head: llhx_p,
        kind: EdgeKind::Convection { ha: params.ha_llhx_primary },
    });
    edges.push(PhysicsEdge {
        tail: llhx_w,
        head: llhx_s,
        kind: EdgeKind::Convection { ha: params.ha_llhx_secondary },
    });
    edges.push(PhysicsEdge { tail: sink, head: llhx_s, kind: EdgeKind::BidirAdvection { flow: FlowRef::Sink } });

    Ok(PhysicsGraph {
        nodes,
        edges,
        heat_load_map,
        fluid_map,
        labels,
        loads: load_vec,
        params: params.clone(),
        flow_map,
        config: graph.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loads(g: &ConfigGraph, w: f64) -> BTreeMap<u32, f64> {
        g.labels().map(|l| (l, w)).collect()
    }

    #[test]
    fn smallest_system() {
        let g = ConfigGraph::parse("0 (1)").unwrap();
        let pg = build_physics_graph(&g, &loads(&g, 1000.0), &PhysicsParams::default()).unwrap();
        let kinds: Vec<NodeKind> = pg.nodes.iter().map(|n| n.kind).collect();
        assert_eq!(
            kinds,
            vec![
                NodeKind::TankFluid,
                NodeKind::CphxFluid,
                NodeKind::CphxWall,
                NodeKind::LlhxPrimary,
                NodeKind::LlhxWall,
                NodeKind::LlhxSecondary,
                NodeKind::SinkBoundary
            ]
        );
        let adv: Vec<(usize, usize)> = pg.advection_edges().map(|e| (e.tail, e.head)).collect();
        assert_eq!(adv, vec![(0, 1), (1, 3), (3, 0)]);
        let conv: Vec<(usize, usize)> = pg
            .edges
            .iter()
            .filter(|e| matches!(e.kind, EdgeKind::Convection { .. }))
            .map(|e| (e.tail, e.head))
            .collect();
        assert_eq!(conv, vec![(2, 1), (4, 3), (4, 5)]);
        let bidir: Vec<(usize, usize)> = pg
            .edges
            .iter()
            .filter(|e| matches!(e.kind, EdgeKind::BidirAdvection { .. }))
            .map(|e| (e.tail, e.head))
            .collect();
        assert_eq!(bidir, vec![(6, 5)]);
    }

    #[test]
    fn counts_follow_construction_rules() {
        let g = ConfigGraph::parse("0 (1,2) (3)").unwrap();
        let pg = build_physics_graph(&g, &loads(&g, 1.0), &PhysicsParams::default()).unwrap();
        assert_eq!(pg.n_states(), 10);
        assert_eq!(pg.advection_edges().count(), 3 + 2 + 1);
        assert_eq!(pg.heat_load_map[&2], 5);
    }

    #[test]
    fn missing_load_is_named() {
        let g = ConfigGraph::parse("0 (1,2)").unwrap();
        let mut l = BTreeMap::new();
        l.insert(1, 5.0);
        assert!(matches!(
            build_physics_graph(&g, &l, &PhysicsParams::default()),
            Err(Error::MissingLoad(2))
        ));
    }
}
