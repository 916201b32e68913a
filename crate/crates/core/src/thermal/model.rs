//! Matrix form of the bilinear state equation
//!
//! ```text
//! dT/dt = A [T; T_sink] + B1 diag(Z [m_p; m_f; m_t]) B2 [T; T_sink] + C^-1 D P
//! ```
//!
//! `A` carries convection, `B2` forms the temperature difference across each
//! advective edge (tail minus head), `Z` selects the mass flow driving that
//! edge, and `B1` injects `m c_p (T_tail - T_head)` into the head node scaled
//! by its capacitance. `m_f` is the split-branch flow vector, independent
//! flows first.

use nalgebra::{DMatrix, DVector};

use super::physics::{EdgeKind, FlowRef, PhysicsGraph};
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct ThermalModel {
    /// Convection dynamics, `n x (n + 1)`, 1/s.
    pub a: DMatrix<f64>,
    /// Edge power to node rate, `n x e`.
    pub b1: DMatrix<f64>,
    /// Advective incidence, `e x (n + 1)`.
    pub b2: DMatrix<f64>,
    /// Flow selection, `e x (n_branch + 2)`.
    pub z: DMatrix<f64>,
    /// Diagonal of the capacitance matrix, J/K.
    pub capacitance: DVector<f64>,
    /// Load injection, `n x N`.
    pub d: DMatrix<f64>,
    pub t_sink: f64,
    pub graph: PhysicsGraph,
}

impl ThermalModel {
    pub fn assemble(graph: PhysicsGraph) -> Result<Self> {
        let n = graph.n_states();
        let sink = graph.sink();
        let cap: Vec<f64> = graph.nodes[..n].iter().map(|node| node.capacitance).collect();
        if let Some(i) = cap.iter().position(|c| !(c.is_finite() && *c > 0.0)) {
            return Err(Error::Structural(format!("node {i} has non-positive capacitance {}", cap[i])));
        }
        let n_branch = graph.flow_map.n_independent() + graph.flow_map.n_dependent();
        let n_q = n_branch + 2;
        let adv: Vec<_> = graph
            .edges
            .iter()
            .filter_map(|e| match e.kind {
                EdgeKind::Advection { flow } | EdgeKind::BidirAdvection { flow } => Some((e, flow)),
                EdgeKind::Convection { .. } => None,
            })
            .collect();
        let n_e = adv.len();

        let mut a = DMatrix::zeros(n, n + 1);
        for e in &graph.edges {
            if let EdgeKind::Convection { ha } = e.kind {
                if e.tail == sink || e.head == sink {
                    return Err(Error::Structural("convection to the sink boundary".into()));
                }
                for (me, other) in [(e.tail, e.head), (e.head, e.tail)] {
                    a[(me, other)] += ha / cap[me];
                    a[(me, me)] -= ha / cap[me];
                }
            }
        }

        let cp = graph.params.cp_fluid;
        let mut b1 = DMatrix::zeros(n, n_e);
        let mut b2 = DMatrix::zeros(n_e, n + 1);
        let mut z = DMatrix::zeros(n_e, n_q);
        for (k, (e, flow)) in adv.iter().enumerate() {
            if e.head == sink {
                return Err(Error::Structural("advection into the sink boundary".into()));
            }
            b1[(e.head, k)] = cp / cap[e.head];
            b2[(k, e.tail)] += 1.0;
            b2[(k, e.head)] -= 1.0;
            let col = match flow {
                FlowRef::Pump => 0,
                FlowRef::Branch(j) => 1 + j,
                FlowRef::Sink => n_q - 1,
            };
            z[(k, col)] = 1.0;
        }

        let mut d = DMatrix::zeros(n, graph.labels.len());
        for (i, l) in graph.labels.iter().enumerate() {
            d[(graph.heat_load_map[l], i)] = 1.0;
        }
        Ok(Self {
            a,
            b1,
            b2,
            z,
            capacitance: DVector::from_vec(cap),
            d,
            t_sink: graph.params.t_sink,
            graph,
        })
    }

    pub fn n_states(&self) -> usize {
        self.a.nrows()
    }

    pub fn n_devices(&self) -> usize {
        self.d.ncols()
    }

    pub fn n_independent(&self) -> usize {
        self.graph.flow_map.n_independent()
    }

    /// `[m_p; m_f; m_t]` for the given split-branch flows.
    pub fn flow_vector(&self, branch_flows: &[f64]) -> DVector<f64> {
        let p = &self.graph.params;
        let mut q = Vec::with_capacity(branch_flows.len() + 2);
        q.push(p.pump_flow);
        q.extend_from_slice(branch_flows);
        q.push(p.sink_flow);
        DVector::from_vec(q)
    }

    /// Temperature derivative in K/s.
    ///
    /// `branch_flows` is the full split-branch vector `[m_indp; m_dp]` (kg/s)
    /// and `loads` are the device heat loads in W, in label order.
    pub fn rhs(&self, temps: &[f64], branch_flows: &[f64], loads: &[f64]) -> Result<Vec<f64>> {
        let n = self.n_states();
        if temps.len() != n || loads.len() != self.n_devices() || branch_flows.len() + 2 != self.z.ncols() {
            return Err(Error::Validation(format!(
                "dimension mismatch: {} temps (want {n}), {} flows (want {}), {} loads (want {})",
                temps.len(),
                branch_flows.len(),
                self.z.ncols() - 2,
                loads.len(),
                self.n_devices()
            )));
        }
        if temps.iter().chain(branch_flows).chain(loads).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("non-finite input to the state equation".into()));
        }
        if let Some(q) = branch_flows.iter().find(|&&q| q < -1e-12) {
            return Err(Error::Validation(format!("negative branch flow {q}")));
        }
        let mut x = DVector::zeros(n + 1);
        x.rows_mut(0, n).copy_from_slice(temps);
        x[n] = self.t_sink;
        let q = self.flow_vector(branch_flows);
        let edge_flows = &self.z * q;
        let dt_edges = &self.b2 * &x;
        let adv_power = edge_flows.component_mul(&dt_edges);
        let p = DVector::from_column_slice(loads);
        let src = (&self.d * p).component_div(&self.capacitance);
        let out = &self.a * &x + &self.b1 * adv_power + src;
        Ok(out.as_slice().to_vec())
    }

    /// As [`rhs`](Self::rhs) with only the independent flows given.
    pub fn rhs_indep(&self, temps: &[f64], indep: &[f64], loads: &[f64]) -> Result<Vec<f64>> {
        if indep.len() != self.n_independent() {
            return Err(Error::Validation(format!(
                "{} independent flows given, model has {}",
                indep.len(),
                self.n_independent()
            )));
        }
        self.rhs(temps, &self.graph.flow_map.branch_flows(indep), loads)
    }

    /// Net power entering the loop from the sink stream, W.
    pub fn sink_power(&self, temps: &[f64]) -> f64 {
        let p = &self.graph.params;
        p.sink_flow * p.cp_fluid * (self.t_sink - temps[self.graph.llhx_secondary()])
    }
}
