//! Scaled, compact form of the optimal flow-control problem.
//!
//! Temperatures are scaled as `T = t_off + t_scale * theta` so that the upper
//! bound sits at `theta = 1`; flows are scaled by the pump rate and controls
//! by their rate limit. In these units the node dynamics read
//!
//! ```text
//! dtheta_i/dt = sum_j L_ij theta_j + b_i + sum_e k_e w_e (theta_tail - theta_i)
//! ```
//!
//! where `w = [mu; delta]` are the scaled independent and dependent branch
//! flows and the sum runs over flow-controlled edges entering node `i`.

use crate::error::{Error, Result};
use crate::thermal::{state_names, EdgeKind, FlowRef, LoadSchedule, ThermalModel};

use super::OlocOptions;

/// Flow-controlled advection into `head`, rate `k * w[var] * (theta_tail - theta_head)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bilinear {
    pub head: usize,
    pub tail: usize,
    pub var: usize,
    pub k: f64,
}

#[derive(Debug, Clone)]
pub struct OlocProblem {
    pub model: ThermalModel,
    pub loads: LoadSchedule,
    pub options: OlocOptions,
    /// Temperature states.
    pub n: usize,
    /// Independent flows `N_f`.
    pub nf: usize,
    pub nd: usize,
    pub t_off: f64,
    pub t_scale: f64,
    pub theta_init: Vec<f64>,
    /// Linear part, row-wise sparse, 1/s.
    pub lin: Vec<Vec<(usize, f64)>>,
    /// Load-independent constant part, 1/s.
    pub bconst: Vec<f64>,
    /// `(state, device index, gain)`: load `P` (W) adds `gain * P`.
    pub load_gain: Vec<(usize, usize, f64)>,
    pub bil: Vec<Bilinear>,
    /// Dependent flows, scaled: `delta = m_rows * mu + offset`.
    pub m_rows: Vec<Vec<f64>>,
    pub offset: Vec<f64>,
    /// Scaled flow rate per unit scaled control, 1/s.
    pub beta: f64,
    /// Equal-split independent flows, scaled.
    pub mu_equal: Vec<f64>,
    /// Penalty weight `lambda` in s/(kg/s^2)^2 per unit time.
    pub lambda: f64,
}

impl OlocProblem {
    /// Differential states per grid point: temperatures and independent flows.
    pub fn state_dim(&self) -> usize {
        self.n + self.nf
    }

    /// Scaled penalty weight on `sum(v^2)`.
    pub fn rho(&self) -> f64 {
        self.lambda * self.options.u_max * self.options.u_max
    }

    pub fn pump_flow(&self) -> f64 {
        self.model.graph.params.pump_flow
    }

    /// Scaled load term of every state at time `t`.
    pub fn load_term(&self, t: f64) -> Vec<f64> {
        let p = self.loads.at(t);
        let mut b = self.bconst.clone();
        for &(i, d, g) in &self.load_gain {
            b[i] += g * p[d];
        }
        b
    }

    /// Scaled temperature derivative.
    pub fn theta_rate(&self, theta: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = b.to_vec();
        for (i, row) in self.lin.iter().enumerate() {
            out[i] += row.iter().map(|&(j, a)| a * theta[j]).sum::<f64>();
        }
        for e in &self.bil {
            out[e.head] += e.k * w[e.var] * (theta[e.tail] - theta[e.head]);
        }
        out
    }

    pub fn to_theta(&self, t: f64) -> f64 {
        (t - self.t_off) / self.t_scale
    }

    pub fn to_celsius(&self, theta: f64) -> f64 {
        self.t_off + self.t_scale * theta
    }
}

/// Builds the control problem for `model` under `loads`.
///
/// With no split anywhere (`N_f = 0`) the problem has no controls and
/// reduces to locating the first bound crossing.
pub fn formulate(model: &ThermalModel, loads: &LoadSchedule, options: &OlocOptions) -> Result<OlocProblem> {
    options.validate()?;
    let n = model.n_states();
    let nd_dev = model.n_devices();
    if loads.values.iter().any(|v| v.len() != nd_dev) {
        return Err(Error::Validation(format!("load schedule must give {nd_dev} loads per interval")));
    }
    if loads.breaks.len() + 1 != loads.values.len() || loads.breaks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation("load breakpoints must be increasing, one fewer than load sets".into()));
    }
    if loads.values.iter().flatten().any(|p| !p.is_finite()) {
        return Err(Error::Validation("loads must be finite".into()));
    }
    let g = &model.graph;
    let t_init = g.initial_temperatures();
    let names = state_names(model);
    for (i, &t) in t_init.iter().enumerate() {
        if t >= options.t_max {
            return Err(Error::Validation(format!(
                "infeasible start: initial temperature of {} is {t} °C, at or above the {} °C bound",
                names[i], options.t_max
            )));
        }
    }
    let t_scale = 30.0;
    let t_off = options.t_max - t_scale;
    let cap: Vec<f64> = model.capacitance.iter().copied().collect();
    let fm = &g.flow_map;
    let nf = fm.n_independent();
    let nd = fm.n_dependent();
    let mp = g.params.pump_flow;
    let cp = g.params.cp_fluid;
    let t_sink = model.t_sink;

    let mut dense = vec![vec![0.0; n]; n];
    let mut bconst = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            dense[i][j] = model.a[(i, j)];
        }
        let row_sum: f64 = (0..n).map(|j| model.a[(i, j)]).sum();
        bconst[i] = (t_off * row_sum + model.a[(i, n)] * t_sink) / t_scale;
    }
    let sink = g.sink();
    let mut bil = Vec::new();
    for e in &g.edges {
        let flow = match e.kind {
            EdgeKind::Advection { flow } | EdgeKind::BidirAdvection { flow } => flow,
            EdgeKind::Convection { .. } => continue,
        };
        let k = cp / cap[e.head];
        let q = match flow {
            FlowRef::Pump => mp,
            FlowRef::Sink => g.params.sink_flow,
            FlowRef::Branch(j) => {
                if e.tail == sink {
                    return Err(Error::Structural("controlled flow from the sink boundary".into()));
                }
                bil.push(Bilinear { head: e.head, tail: e.tail, var: j, k: k * mp });
                continue;
            }
        };
        dense[e.head][e.head] -= k * q;
        if e.tail == sink {
            bconst[e.head] += k * q * (t_sink - t_off) / t_scale;
        } else {
            dense[e.head][e.tail] += k * q;
        }
    }
    let lin = dense
        .iter()
        .map(|row| row.iter().enumerate().filter(|(_, a)| **a != 0.0).map(|(j, &a)| (j, a)).collect())
        .collect();
    let load_gain = g
        .labels
        .iter()
        .enumerate()
        .map(|(d, l)| {
            let i = g.heat_load_map[l];
            (i, d, 1.0 / (t_scale * cap[i]))
        })
        .collect();
    let mu_equal = fm.equal_split(&g.config).iter().map(|m| m / mp).collect();
    let lambda = if nf == 0 { 0.0 } else { options.penalty_scale / (nf as f64 * options.u_max * options.u_max) };
    Ok(OlocProblem {
        model: model.clone(),
        loads: loads.clone(),
        options: options.clone(),
        n,
        nf,
        nd,
        t_off,
        t_scale,
        theta_init: t_init.iter().map(|t| (t - t_off) / t_scale).collect(),
        lin,
        bconst,
        load_gain,
        bil,
        m_rows: fm.m_matrix.clone(),
        offset: fm.dep_offset.iter().map(|o| o / mp).collect(),
        beta: options.u_max / mp,
        mu_equal,
        lambda,
    })
}
