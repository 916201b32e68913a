//! Independent/dependent decomposition of the branch flows of a tree.

use std::collections::BTreeMap;

use super::{ConfigGraph, ROOT};

/// Where the mass flow of a tree edge comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowSource {
    /// The full pump flow (no split upstream on the path from the tank).
    Pump,
    /// Entry of the split-branch flow vector `[independent; dependent]`.
    Branch(usize),
}

/// Edge flow as an affine function of the independent flows:
/// `pump * m_p + sum(coeff_j * m_indp[j])`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeFlow {
    pub pump: f64,
    pub coeffs: Vec<(usize, f64)>,
}

impl EdgeFlow {
    pub fn eval(&self, pump_rate: f64, indep: &[f64]) -> f64 {
        self.pump * pump_rate + self.coeffs.iter().map(|&(j, a)| a * indep[j]).sum::<f64>()
    }

    fn minus(&self, other: &EdgeFlow) -> EdgeFlow {
        let mut acc: BTreeMap<usize, f64> = self.coeffs.iter().copied().collect();
        for &(j, a) in &other.coeffs {
            *acc.entry(j).or_insert(0.0) -= a;
        }
        EdgeFlow {
            pump: self.pump - other.pump,
            coeffs: acc.into_iter().filter(|&(_, a)| a != 0.0).collect(),
        }
    }
}

/// Mass flow structure of a configuration.
///
/// At a node with `k >= 2` outgoing edges the first `k - 1` edges (canonical
/// order) carry independent, valve-controlled flows and the last carries the
/// remainder. Nodes with a single outgoing edge pass their inflow through.
#[derive(Debug, Clone)]
pub struct FlowMap {
    pub pump_rate: f64,
    /// All tree edges, canonical depth-first order.
    pub branch_edges: Vec<(u32, u32)>,
    /// Affine flow expression of each entry of `branch_edges`.
    pub edge_flows: Vec<EdgeFlow>,
    /// Source of each entry of `branch_edges` in terms of the split flows.
    pub edge_sources: Vec<FlowSource>,
    pub independent: Vec<(u32, u32)>,
    pub dependent: Vec<(u32, u32)>,
    /// Dependent flows: `m_dp = m_matrix * m_indp + dep_offset`.
    pub m_matrix: Vec<Vec<f64>>,
    pub dep_offset: Vec<f64>,
}

impl FlowMap {
    pub fn new(graph: &ConfigGraph, pump_rate: f64) -> Self {
        assert!(pump_rate > 0.0, "pump rate must be positive");
        // First pass: number the independent edges so that they come first.
        let mut independent = Vec::new();
        let mut dependent = Vec::new();
        for node in graph.split_nodes() {
            let kids = graph.children(node);
            for &c in &kids[..kids.len() - 1] {
                independent.push((node, c));
            }
            dependent.push((node, kids[kids.len() - 1]));
        }
        let n_f = independent.len();
        let indep_index: BTreeMap<(u32, u32), usize> =
            independent.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let dep_index: BTreeMap<(u32, u32), usize> =
            dependent.iter().enumerate().map(|(i, &e)| (e, n_f + i)).collect();

        let mut expr: BTreeMap<(u32, u32), EdgeFlow> = BTreeMap::new();
        let mut source: BTreeMap<(u32, u32), FlowSource> = BTreeMap::new();
        let mut stack = vec![(ROOT, EdgeFlow { pump: 1.0, coeffs: vec![] }, FlowSource::Pump)];
        while let Some((node, inflow, in_source)) = stack.pop() {
            let kids = graph.children(node);
            if kids.len() == 1 {
                let e = (node, kids[0]);
                expr.insert(e, inflow.clone());
                source.insert(e, in_source);
                stack.push((kids[0], inflow, in_source));
                continue;
            }
            let mut rest = inflow.clone();
            for &c in kids {
                let e = (node, c);
                let (flow, src) = if let Some(&j) = indep_index.get(&e) {
                    let f = EdgeFlow { pump: 0.0, coeffs: vec![(j, 1.0)] };
                    rest = rest.minus(&f);
                    (f, FlowSource::Branch(j))
                } else {
                    (rest.clone(), FlowSource::Branch(dep_index[&e]))
                };
                expr.insert(e, flow.clone());
                source.insert(e, src);
                stack.push((c, flow, src));
            }
        }

        let branch_edges = graph.edges();
        let edge_flows: Vec<EdgeFlow> = branch_edges.iter().map(|e| expr[e].clone()).collect();
        let edge_sources = branch_edges.iter().map(|e| source[e]).collect();
        let mut m_matrix = vec![vec![0.0; n_f]; dependent.len()];
        let mut dep_offset = vec![0.0; dependent.len()];
        for (i, e) in dependent.iter().enumerate() {
            for &(j, a) in &expr[e].coeffs {
                m_matrix[i][j] = a;
            }
            dep_offset[i] = expr[e].pump * pump_rate;
        }
        Self {
            pump_rate,
            branch_edges,
            edge_flows,
            edge_sources,
            independent,
            dependent,
            m_matrix,
            dep_offset,
        }
    }

    /// Number of independent (controlled) flows, `N_f`.
    pub fn n_independent(&self) -> usize {
        self.independent.len()
    }

    pub fn n_dependent(&self) -> usize {
        self.dependent.len()
    }

    pub fn dependent_flows(&self, indep: &[f64]) -> Vec<f64> {
        self.m_matrix
            .iter()
            .zip(&self.dep_offset)
            .map(|(row, off)| off + row.iter().zip(indep).map(|(a, m)| a * m).sum::<f64>())
            .collect()
    }

    /// Split-branch flow vector `[m_indp; m_dp]`.
    pub fn branch_flows(&self, indep: &[f64]) -> Vec<f64> {
        let mut out = indep.to_vec();
        out.extend(self.dependent_flows(indep));
        out
    }

    /// Flow on every tree edge, aligned with `branch_edges`.
    pub fn edge_flow_values(&self, indep: &[f64]) -> Vec<f64> {
        self.edge_flows.iter().map(|f| f.eval(self.pump_rate, indep)).collect()
    }

    /// Independent flows that split every junction's inflow equally.
    pub fn equal_split(&self, graph: &ConfigGraph) -> Vec<f64> {
        let mut out = vec![0.0; self.n_independent()];
        let mut stack = vec![(ROOT, self.pump_rate)];
        while let Some((node, inflow)) = stack.pop() {
            let kids = graph.children(node);
            let share = inflow / kids.len() as f64;
            for &c in kids {
                if let Some(j) = self.independent.iter().position(|&e| e == (node, c)) {
                    out[j] = share;
                }
                stack.push((c, share));
            }
        }
        out
    }

    /// Largest node-wise conservation residual `|inflow - sum(outflows)|` over
    /// devices with children (leaves drain to the heat exchanger).
    pub fn conservation_residual(&self, indep: &[f64]) -> f64 {
        let flows = self.edge_flow_values(indep);
        let mut inflow: BTreeMap<u32, f64> = BTreeMap::new();
        let mut outflow: BTreeMap<u32, f64> = BTreeMap::new();
        inflow.insert(ROOT, self.pump_rate);
        for (&(p, c), &q) in self.branch_edges.iter().zip(&flows) {
            *outflow.entry(p).or_insert(0.0) += q;
            *inflow.entry(c).or_insert(0.0) += q;
        }
        outflow
            .iter()
            .map(|(n, out)| (inflow[n] - out).abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(s: &str) -> FlowMap {
        FlowMap::new(&ConfigGraph::parse(s).unwrap(), 0.4)
    }

    #[test]
    fn three_way_root_split() {
        let fm = map("0 (1) (2) (3)");
        assert_eq!(fm.n_independent(), 2);
        assert_eq!(fm.independent, vec![(0, 1), (0, 2)]);
        assert_eq!(fm.dependent, vec![(0, 3)]);
        assert_eq!(fm.m_matrix, vec![vec![-1.0, -1.0]]);
        assert_eq!(fm.dep_offset, vec![0.4]);
        let dep = fm.dependent_flows(&[0.1, 0.05]);
        assert!((dep[0] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn pure_series_has_no_controls() {
        let fm = map("0 (1,2,3)");
        assert_eq!(fm.n_independent(), 0);
        assert_eq!(fm.n_dependent(), 0);
        assert_eq!(fm.edge_flow_values(&[]), vec![0.4; 3]);
        assert!(fm.edge_sources.iter().all(|s| *s == FlowSource::Pump));
    }

    #[test]
    fn split_below_a_device() {
        let fm = map("0 (1 (2) (3))");
        assert_eq!(fm.n_independent(), 1);
        assert_eq!(fm.independent, vec![(1, 2)]);
        assert_eq!(fm.dependent, vec![(1, 3)]);
        // Node 1 receives the full pump flow, so its dependent branch is 0.4 - m.
        let flows = fm.edge_flow_values(&[0.15]);
        assert_eq!(fm.branch_edges, vec![(0, 1), (1, 2), (1, 3)]);
        assert!((flows[0] - 0.4).abs() < 1e-15);
        assert!((flows[1] - 0.15).abs() < 1e-15);
        assert!((flows[2] - 0.25).abs() < 1e-15);
        assert!(fm.conservation_residual(&[0.15]) < 1e-15);
    }

    #[test]
    fn nested_dependent_flow_sees_upstream_controls() {
        let fm = map("0 (1 (2) (3)) (4)");
        // indep: (0,1), (1,2); dep: (0,4), (1,3)
        assert_eq!(fm.independent, vec![(0, 1), (1, 2)]);
        assert_eq!(fm.dependent, vec![(0, 4), (1, 3)]);
        assert_eq!(fm.m_matrix, vec![vec![-1.0, 0.0], vec![1.0, -1.0]]);
        assert_eq!(fm.dep_offset, vec![0.4, 0.0]);
        let eq = fm.equal_split(&ConfigGraph::parse("0 (1 (2) (3)) (4)").unwrap());
        assert_eq!(eq, vec![0.2, 0.1]);
        assert_eq!(fm.branch_flows(&eq), vec![0.2, 0.1, 0.2, 0.1]);
    }
}
