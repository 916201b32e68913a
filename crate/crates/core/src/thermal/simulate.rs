//! Forward simulation of a thermal model under prescribed flows and loads.

use std::fmt::Write as _;

use super::ode::{integrate, OdeOptions, OdeSolution};
use super::ThermalModel;
use crate::error::{Error, Result};

/// Independent-flow schedule (kg/s).
#[derive(Debug, Clone, PartialEq)]
pub enum FlowSchedule {
    Constant(Vec<f64>),
    /// Linear interpolation between knots, held constant outside them.
    PiecewiseLinear { times: Vec<f64>, values: Vec<Vec<f64>> },
}

impl FlowSchedule {
    pub fn at(&self, t: f64) -> Vec<f64> {
        match self {
            FlowSchedule::Constant(v) => v.clone(),
            FlowSchedule::PiecewiseLinear { times, values } => {
                if t <= times[0] {
                    return values[0].clone();
                }
                if t >= *times.last().expect("knots") {
                    return values.last().expect("knots").clone();
                }
                let i = times.partition_point(|&x| x <= t) - 1;
                let w = (t - times[i]) / (times[i + 1] - times[i]);
                values[i].iter().zip(&values[i + 1]).map(|(a, b)| a + w * (b - a)).collect()
            }
        }
    }
}

/// Piecewise-constant heat loads (W, label order). `values[i]` applies on
/// `[breaks[i-1], breaks[i])`, with `values.len() == breaks.len() + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadSchedule {
    pub breaks: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

impl LoadSchedule {
    pub fn constant(loads: Vec<f64>) -> Self {
        Self { breaks: vec![], values: vec![loads] }
    }

    pub fn at(&self, t: f64) -> &[f64] {
        &self.values[self.breaks.partition_point(|&b| b <= t)]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            breaks: self.breaks.clone(),
            values: self.values.iter().map(|v| v.iter().map(|p| p * factor).collect()).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().flatten().all(|p| *p == 0.0)
    }
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub tol: f64,
    /// Upper temperature bound per state; integration stops at the first
    /// crossing of any of them.
    pub bounds: Option<Vec<f64>>,
    /// Output sampling interval; accepted steps are reported when `None`.
    pub output_dt: Option<f64>,
    pub h_max: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { tol: 1e-8, bounds: None, output_dt: None, h_max: f64::INFINITY }
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    /// Node temperatures, °C.
    pub temps: Vec<Vec<f64>>,
    /// Split-branch flows `[m_indp; m_dp]` at each sample, kg/s.
    pub branch_flows: Vec<Vec<f64>>,
    /// First bound crossing: time and state index.
    pub event: Option<(f64, usize)>,
    pub solution: OdeSolution,
}

impl Trajectory {
    pub fn final_temps(&self) -> &[f64] {
        self.temps.last().expect("nonempty")
    }

    /// CSV with time, node temperatures and split-branch flows.
    pub fn to_csv(&self, model: &ThermalModel) -> String {
        let mut out = String::from("t");
        for name in state_names(model) {
            out.push(',');
            out.push_str(&name);
        }
        for name in branch_flow_names(model) {
            out.push(',');
            out.push_str(&name);
        }
        out.push('\n');
        for ((t, temps), flows) in self.times.iter().zip(&self.temps).zip(&self.branch_flows) {
            write!(out, "{t:.9e}").expect("string write");
            for v in temps.iter().chain(flows) {
                write!(out, ",{v:.9e}").expect("string write");
            }
            out.push('\n');
        }
        out
    }
}

/// Column names for the temperature states, e.g. `T_tank`, `T_f3`, `T_w3`.
pub fn state_names(model: &ThermalModel) -> Vec<String> {
    use super::physics::NodeKind::*;
    model.graph.nodes[..model.n_states()]
        .iter()
        .map(|n| match (n.kind, n.label) {
            (TankFluid, _) => "T_tank".to_string(),
            (CphxFluid, Some(l)) => format!("T_f{l}"),
            (CphxWall, Some(l)) => format!("T_w{l}"),
            (LlhxPrimary, _) => "T_llhx_p".to_string(),
            (LlhxWall, _) => "T_llhx_w".to_string(),
            (LlhxSecondary, _) => "T_llhx_s".to_string(),
            _ => "T_?".to_string(),
        })
        .collect()
}

/// Column names for split-branch flows, e.g. `m_0_1`.
pub fn branch_flow_names(model: &ThermalModel) -> Vec<String> {
    let fm = &model.graph.flow_map;
    fm.independent.iter().chain(&fm.dependent).map(|(p, c)| format!("m_{p}_{c}")).collect()
}

/// Integrates the state equation from `t0_temps` over `[0, t_end]`.
pub fn simulate(
    model: &ThermalModel,
    t0_temps: &[f64],
    flows: &FlowSchedule,
    loads: &LoadSchedule,
    t_end: f64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    let n = model.n_states();
    if t0_temps.len() != n {
        return Err(Error::Validation(format!("{} initial temperatures for {n} states", t0_temps.len())));
    }
    if !(t_end > 0.0) {
        return Err(Error::Validation("t_end must be positive".into()));
    }
    if let Some(b) = &opts.bounds {
        if b.len() != n {
            return Err(Error::Validation(format!("{} bounds for {n} states", b.len())));
        }
    }
    let fm = &model.graph.flow_map;
    let mut failure: Option<Error> = None;
    // Dependent flows computed from a prescribed schedule may dip below zero
    // by round-off.
    let branch = |t: f64| -> Vec<f64> {
        fm.branch_flows(&flows.at(t)).into_iter().map(|q| if q > -1e-6 { q.max(0.0) } else { q }).collect()
    };
    let rhs = |t: f64, y: &[f64], dy: &mut [f64]| {
        let q = branch(t);
        match model.rhs(y, &q, loads.at(t)) {
            Ok(v) => dy.copy_from_slice(&v),
            Err(e) => {
                dy.iter_mut().for_each(|d| *d = f64::NAN);
                failure.get_or_insert(e);
            }
        }
    };
    let ode = OdeOptions { h_max: opts.h_max, ..OdeOptions::with_tol(opts.tol) };
    let sol = match &opts.bounds {
        Some(b) => integrate(
            rhs,
            0.0,
            t0_temps,
            t_end,
            &ode,
            Some(|_: f64, y: &[f64]| y.iter().zip(b).map(|(v, ub)| v - ub).fold(f64::NEG_INFINITY, f64::max)),
        ),
        None => integrate(rhs, 0.0, t0_temps, t_end, &ode, None::<fn(f64, &[f64]) -> f64>),
    };
    if let Some(e) = failure {
        return Err(e);
    }
    let sol = sol?;

    let event = sol.event_time.map(|te| {
        let y = sol.final_state();
        let b = opts.bounds.as_ref().expect("event implies bounds");
        let idx = (0..n).max_by(|&i, &j| (y[i] - b[i]).total_cmp(&(y[j] - b[j]))).expect("states");
        (te, idx)
    });
    let (times, temps) = match opts.output_dt {
        Some(dt) if dt > 0.0 => {
            let end = sol.final_time();
            let mut ts: Vec<f64> = (0..).map(|i| i as f64 * dt).take_while(|&t| t < end).collect();
            ts.push(end);
            let ys = ts.iter().map(|&t| sol.at(t)).collect();
            (ts, ys)
        }
        _ => (sol.times.clone(), sol.states.clone()),
    };
    let branch_flows = times.iter().map(|&t| branch(t)).collect();
    Ok(Trajectory { times, temps, branch_flows, event, solution: sol })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::config::ConfigGraph;
    use crate::thermal::{build_physics_graph, PhysicsParams};

    fn model(s: &str, w: f64) -> ThermalModel {
        let g = ConfigGraph::parse(s).unwrap();
        let loads: BTreeMap<u32, f64> = g.labels().map(|l| (l, w)).collect();
        ThermalModel::assemble(build_physics_graph(&g, &loads, &PhysicsParams::default()).unwrap()).unwrap()
    }

    #[test]
    fn walls_relax_toward_fluid_without_flow_or_load() {
        // Pure wall/fluid exchange: switch off advection by zero pump and sink flow.
        let g = ConfigGraph::parse("0 (1)").unwrap();
        let p = PhysicsParams { pump_flow: 1e-300, sink_flow: 1e-300, ..Default::default() };
        let loads: BTreeMap<u32, f64> = [(1, 0.0)].into();
        let m = ThermalModel::assemble(build_physics_graph(&g, &loads, &p).unwrap()).unwrap();
        let t0 = m.graph.initial_temperatures();
        let mut t0 = t0;
        t0[1] = 15.0; // fluid colder than the 20 °C wall
        let traj = simulate(
            &m,
            &t0,
            &FlowSchedule::Constant(vec![]),
            &LoadSchedule::constant(vec![0.0]),
            20.0,
            &SimOptions { output_dt: Some(0.5), tol: 1e-11, ..Default::default() },
        )
        .unwrap();
        let wall = m.graph.heat_load_map[&1];
        let w: Vec<f64> = traj.temps.iter().map(|y| y[wall]).collect();
        assert!(w.windows(2).all(|p| p[1] <= p[0] + 1e-9), "{w:?}");
        let fluid: Vec<f64> = traj.temps.iter().map(|y| y[1]).collect();
        let last = traj.temps.len() - 1;
        assert!((w[last] - fluid[last]).abs() < 1e-3);
    }

    #[test]
    fn heated_device_reaches_the_bound() {
        let m = model("0 (1,2) (3)", 5000.0);
        let t0 = m.graph.initial_temperatures();
        let traj = simulate(
            &m,
            &t0,
            &FlowSchedule::Constant(vec![0.2]),
            &LoadSchedule::constant(vec![5000.0; 3]),
            1000.0,
            &SimOptions { bounds: Some(vec![45.0; m.n_states()]), ..Default::default() },
        )
        .unwrap();
        let (te, idx) = traj.event.expect("bound reached");
        assert!(te > 0.0 && te < 1000.0);
        assert!((traj.final_temps()[idx] - 45.0).abs() < 1e-6);
        assert!(matches!(m.graph.nodes[idx].kind, crate::thermal::NodeKind::CphxWall));
        let csv = traj.to_csv(&m);
        assert!(csv.starts_with("t,T_tank,T_f1,T_f2,T_f3,T_w1,T_w2,T_w3,T_llhx_p,T_llhx_w,T_llhx_s,m_0_1,m_0_3\n"));
    }

    #[test]
    fn schedules() {
        let s = FlowSchedule::PiecewiseLinear { times: vec![0.0, 2.0], values: vec![vec![0.0], vec![1.0]] };
        assert_eq!(s.at(-1.0), vec![0.0]);
        assert_eq!(s.at(1.0), vec![0.5]);
        assert_eq!(s.at(3.0), vec![1.0]);
        let l = LoadSchedule { breaks: vec![1.0], values: vec![vec![1.0], vec![2.0]] };
        assert_eq!(l.at(0.5), &[1.0]);
        assert_eq!(l.at(1.0), &[2.0]);
    }
}
