#![allow(dead_code)]

use std::collections::BTreeMap;
pub mod physics;


use rand::seq::SliceRandom;
use rand::Rng;
use thermoforge_core::thermal::{build_physics_graph, PhysicsParams, ThermalModel};
use thermoforge_core::ConfigGraph;

/// Random tree over devices `1..=n`: devices are attached in random order,
/// each to the tank or an earlier device.
pub fn random_tree(rng: &mut impl Rng, n: usize) -> ConfigGraph {
    let mut order: Vec<u32> = (1..=n as u32).collect();
    order.shuffle(rng);
    let mut edges = Vec::with_capacity(n);
    for (i, &d) in order.iter().enumerate() {
        let p = rng.random_range(0..=i);
        edges.push((if p == 0 { 0 } else { order[p - 1] }, d));
    }
    ConfigGraph::from_edges(edges).unwrap()
}

pub fn model(g: &ConfigGraph, loads_w: &[f64], params: &PhysicsParams) -> ThermalModel {
    let loads: BTreeMap<u32, f64> = g.labels().zip(loads_w.iter().copied()).collect();
    ThermalModel::assemble(build_physics_graph(g, &loads, params).unwrap()).unwrap()
}

/// Random split fractions at every node; returns the flow on every tree
/// edge keyed by `(parent, child)`.
pub fn random_edge_flows(rng: &mut impl Rng, g: &ConfigGraph, pump: f64) -> BTreeMap<(u32, u32), f64> {
    let mut out = BTreeMap::new();
    let mut stack = vec![(0u32, pump)];
    while let Some((node, inflow)) = stack.pop() {
        let kids = g.children(node);
        let w: Vec<f64> = kids.iter().map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = w.iter().sum();
        for (&c, wi) in kids.iter().zip(&w) {
            let q = inflow * wi / total;
            out.insert((node, c), q);
            stack.push((c, q));
        }
    }
    out
}

/// `[m_indp; m_dp]` in the model's ordering for the given edge flows.
pub fn branch_vector(m: &ThermalModel, flows: &BTreeMap<(u32, u32), f64>) -> Vec<f64> {
    let fm = &m.graph.flow_map;
    fm.independent.iter().chain(&fm.dependent).map(|e| flows[e]).collect()
}
