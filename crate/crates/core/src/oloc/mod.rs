//! Variable-horizon optimal flow control: maximize the time until the first
//! temperature bound is reached, steering the independent branch flows
//! through their rate of change.

mod problem;
mod transcription;

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

pub use problem::{formulate, Bilinear, OlocProblem};
pub use transcription::{Scheme, Transcription};

use crate::error::{Error, Result};
use crate::nlp::{self, IpmOptions, IpmStatus, Nlp, WarmStart};
use crate::thermal::{
    branch_flow_names, simulate, state_names, FlowSchedule, LoadSchedule, NodeKind, SimOptions, ThermalModel,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OlocOptions {
    pub segments: usize,
    pub scheme: Scheme,
    /// Scaled optimality tolerance.
    pub tol: f64,
    /// Constraint violation tolerance, scaled units.
    pub constr_viol_tol: f64,
    pub max_iter: usize,
    /// Final-time bounds, s.
    pub t_f_min: f64,
    pub t_f_max: f64,
    /// Upper temperature bound on every node, °C.
    pub t_max: f64,
    /// Flow-rate derivative limit, kg/s^2.
    pub u_max: f64,
    /// Penalty weight numerator: `lambda = penalty_scale / (N_f * u_max^2)`.
    pub penalty_scale: f64,
    /// Pin the initial independent flows to the equal split.
    pub fix_initial_flows: bool,
    /// Relative endurance change accepted between mesh doublings.
    pub refine_tol: f64,
    /// Mesh doublings after the first solve.
    pub max_refinements: usize,
}

impl Default for OlocOptions {
    fn default() -> Self {
        Self {
            segments: 50,
            scheme: Scheme::Trapezoidal,
            tol: 1e-6,
            constr_viol_tol: 1e-6,
            max_iter: 500,
            t_f_min: 1.0,
            t_f_max: 10_000.0,
            t_max: 45.0,
            u_max: 0.05,
            penalty_scale: 0.01,
            fix_initial_flows: false,
            refine_tol: 0.002,
            max_refinements: 2,
        }
    }
}

impl OlocOptions {
    pub fn validate(&self) -> Result<()> {
        if self.segments < 2 {
            return Err(Error::Validation("at least 2 segments are required".into()));
        }
        if !(self.t_f_min > 0.0 && self.t_f_max > self.t_f_min && self.t_f_max.is_finite()) {
            return Err(Error::Validation("final-time bounds must satisfy 0 < t_f_min < t_f_max".into()));
        }
        for (name, v) in [
            ("tol", self.tol),
            ("constr_viol_tol", self.constr_viol_tol),
            ("u_max", self.u_max),
            ("penalty_scale", self.penalty_scale),
            ("refine_tol", self.refine_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Validation(format!("{name} must be positive")));
            }
        }
        if !self.t_max.is_finite() {
            return Err(Error::Validation("t_max must be finite".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let o: Self = serde_json::from_str(text)?;
        o.validate()?;
        Ok(o)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    Acceptable,
    /// No bound is reached before the final-time cap.
    UnboundedAtCap,
    Failed(String),
}

impl SolveStatus {
    pub fn is_accepted(&self) -> bool {
        !matches!(self, SolveStatus::Failed(_))
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolveStatus::Optimal => f.write_str("optimal"),
            SolveStatus::Acceptable => f.write_str("acceptable"),
            SolveStatus::UnboundedAtCap => f.write_str("endurance unbounded at cap"),
            SolveStatus::Failed(why) => write!(f, "failed: {why}"),
        }
    }
}

impl Serialize for SolveStatus {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OlocSolution {
    pub config: String,
    pub status: SolveStatus,
    /// Thermal endurance, s.
    pub t_end: f64,
    /// `t_end` minus the control penalty, s.
    pub objective: f64,
    pub penalty: f64,
    pub lambda: f64,
    pub segments: usize,
    pub scheme: Scheme,
    pub iterations: usize,
    /// `(segments, t_end)` of every mesh solved.
    pub mesh_history: Vec<(usize, f64)>,
    /// Largest `|T_w(t_end) - T_max|` over walls carrying load, K.
    pub wall_arrival_spread: f64,
    /// Largest final-temperature gap between the optimizer and a forward
    /// simulation under the optimal flows, K.
    pub resim_error: f64,
    /// Largest constraint or bound violation, scaled units.
    pub max_violation: f64,
    #[serde(skip)]
    pub times: Vec<f64>,
    #[serde(skip)]
    pub temps: Vec<Vec<f64>>,
    /// Split-branch flows `[m_indp; m_dp]`, kg/s.
    #[serde(skip)]
    pub branch_flows: Vec<Vec<f64>>,
    /// Independent flow rates of change, kg/s^2.
    #[serde(skip)]
    pub controls: Vec<Vec<f64>>,
    #[serde(skip)]
    columns: Vec<String>,
    #[serde(skip)]
    tau: Vec<f64>,
    #[serde(skip)]
    x: Vec<f64>,
}

impl OlocSolution {
    pub fn is_accepted(&self) -> bool {
        self.status.is_accepted()
    }

    pub fn final_temps(&self) -> &[f64] {
        self.temps.last().map(Vec::as_slice).unwrap_or(&[])
    }

    /// JSON summary of the solve.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("serializable")
    }

    /// Trajectories on the collocation grid.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for k in 0..self.times.len() {
            write!(out, "{:.9e}", self.times[k]).expect("string write");
            for v in self.temps[k].iter().chain(&self.branch_flows[k]).chain(&self.controls[k]) {
                write!(out, ",{v:.9e}").expect("string write");
            }
            out.push('\n');
        }
        out
    }
}

/// Forward simulation under the equal split, stopped at the first bound
/// crossing or at the final-time cap.
fn guess_horizon(p: &OlocProblem) -> Result<crate::thermal::Trajectory> {
    let model = &p.model;
    let indep: Vec<f64> = p.mu_equal.iter().map(|m| m * p.pump_flow()).collect();
    let t0 = model.graph.initial_temperatures();
    simulate(
        model,
        &t0,
        &FlowSchedule::Constant(indep),
        &p.loads,
        p.options.t_f_max,
        &SimOptions { tol: 1e-9, bounds: Some(vec![p.options.t_max; p.n]), ..Default::default() },
    )
}

/// Decision vector sampled from the equal-split simulation.
pub fn initial_guess(tr: &Transcription<'_>, sim: &crate::thermal::Trajectory) -> Vec<f64> {
    let p = tr.problem;
    let t_f = sim.solution.final_time().clamp(p.options.t_f_min, p.options.t_f_max);
    let indep: Vec<f64> = p.mu_equal.iter().map(|m| m * p.pump_flow()).collect();
    let temps: Vec<Vec<f64>> = tr.tau.iter().map(|t| sim.solution.at(t * sim.solution.final_time())).collect();
    tr.pack(&temps, &vec![indep; tr.n_points()], t_f)
}

fn ipm_options(o: &OlocOptions) -> IpmOptions {
    IpmOptions { tol: o.tol, constr_viol_tol: o.constr_viol_tol, max_iter: o.max_iter, ..Default::default() }
}

/// Solves a transcription from its initial guess.
pub fn solve(tr: &Transcription<'_>) -> OlocSolution {
    solve_with(tr, &WarmStart::default())
}

pub fn solve_with(tr: &Transcription<'_>, warm: &WarmStart) -> OlocSolution {
    let r = nlp::solve(tr, &ipm_options(&tr.problem.options), warm);
    let mut sol = extract(tr, &r.x, r.iterations);
    sol.status = match r.status {
        IpmStatus::Converged => SolveStatus::Optimal,
        IpmStatus::Acceptable => SolveStatus::Acceptable,
        s => SolveStatus::Failed(s.to_string()),
    };
    let o = &tr.problem.options;
    if sol.status.is_accepted() && sol.t_end >= o.t_f_max * (1.0 - 1e-4) {
        sol.status = SolveStatus::UnboundedAtCap;
    }
    sol
}

fn extract(tr: &Transcription<'_>, x: &[f64], iterations: usize) -> OlocSolution {
    let p = tr.problem;
    let (n, nf, nd) = (p.n, p.nf, p.nd);
    let mp = p.pump_flow();
    let tf = x[tr.tf_index()];
    let t_end = tf * tr.t_ref;
    let penalty = tr.t_ref * tf * tr.penalty_density(x);
    let mut times = Vec::new();
    let mut temps = Vec::new();
    let mut flows = Vec::new();
    let mut controls = Vec::new();
    for (k, &t) in tr.tau.iter().enumerate() {
        let z = &x[k * tr.np..(k + 1) * tr.np];
        times.push(t * t_end);
        temps.push(z[..n].iter().map(|th| p.to_celsius(*th)).collect::<Vec<_>>());
        flows.push(z[n..n + nf + nd].iter().map(|w| w * mp).collect::<Vec<_>>());
        controls.push(z[n + nf + nd..].iter().map(|v| v * p.options.u_max).collect::<Vec<_>>());
    }

    let g = &p.model.graph;
    let final_loads = p.loads.at(t_end);
    let last = temps.last().expect("grid");
    let wall_arrival_spread = g
        .labels
        .iter()
        .enumerate()
        .filter(|(d, _)| final_loads[*d] > 0.0)
        .map(|(_, l)| (last[g.heat_load_map[l]] - p.options.t_max).abs())
        .fold(0.0, f64::max);

    let mut c = vec![0.0; tr.n_cons()];
    tr.constraints(x, &mut c);
    let (lo, hi) = tr.bounds();
    let bound_viol = x
        .iter()
        .zip(lo.iter().zip(&hi))
        .map(|(v, (l, h))| (l - v).max(v - h).max(0.0))
        .fold(0.0, f64::max);
    let max_violation = c.iter().fold(bound_viol, |m, v| m.max(v.abs()));

    let resim_error = resimulate(p, &times, &flows, last).unwrap_or(f64::INFINITY);

    let mut columns = state_names(&p.model);
    columns.extend(branch_flow_names(&p.model));
    columns.extend(g.flow_map.independent.iter().map(|(a, b)| format!("u_{a}_{b}")));
    OlocSolution {
        config: g.config.to_notation(),
        status: SolveStatus::Optimal,
        t_end,
        objective: t_end - penalty,
        penalty,
        lambda: p.lambda,
        segments: tr.segments,
        scheme: tr.scheme,
        iterations,
        mesh_history: vec![(tr.segments, t_end)],
        wall_arrival_spread,
        resim_error,
        max_violation,
        times,
        temps,
        branch_flows: flows,
        controls,
        columns,
        tau: tr.tau.clone(),
        x: x.to_vec(),
    }
}

/// Integrates the model under the optimizer's flows (linear between grid
/// points, that is a zero-order hold on the control) and returns the largest
/// final-temperature gap.
fn resimulate(p: &OlocProblem, times: &[f64], flows: &[Vec<f64>], final_temps: &[f64]) -> Result<f64> {
    let mp = p.pump_flow();
    let indep: Vec<Vec<f64>> = flows.iter().map(|f| f[..p.nf].iter().map(|m| m.clamp(0.0, mp)).collect()).collect();
    let schedule = if p.nf == 0 {
        FlowSchedule::Constant(vec![])
    } else {
        FlowSchedule::PiecewiseLinear { times: times.to_vec(), values: indep }
    };
    let t_end = *times.last().expect("grid");
    let sim = simulate(
        &p.model,
        &p.model.graph.initial_temperatures(),
        &schedule,
        &p.loads,
        t_end,
        &SimOptions { tol: 1e-10, ..Default::default() },
    )?;
    Ok(sim.final_temps().iter().zip(final_temps).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
}

fn wrap(config: &str, e: Error) -> Error {
    match e {
        Error::Solver { .. } => e,
        other => Error::Solver { config: config.to_string(), msg: other.to_string() },
    }
}

/// Formulates, transcribes and solves, doubling the mesh until the
/// endurance settles.
pub fn evaluate_endurance(model: &ThermalModel, loads: &LoadSchedule, options: &OlocOptions) -> Result<OlocSolution> {
    let config = model.graph.config.to_notation();
    let problem = formulate(model, loads, options).map_err(|e| wrap(&config, e))?;
    let sim = guess_horizon(&problem).map_err(|e| wrap(&config, e))?;
    let t_ref = sim.solution.final_time().clamp(options.t_f_min, options.t_f_max);
    if sim.event.is_none() {
        // The equal split already stays below every bound up to the cap, so
        // the optimum sits at the cap too.
        let mut tr = Transcription::new(&problem, options.segments, options.scheme, t_ref);
        tr.set_initial_guess(initial_guess(&tr, &sim));
        let mut sol = extract(&tr, &tr.initial_point(), 0);
        sol.status = SolveStatus::UnboundedAtCap;
        return Ok(sol);
    }
    let mut sol = solve_problem(&problem, t_ref, options.segments, Guess::Simulation(&sim));
    if sol.is_accepted() && sol.penalty >= 0.01 * sol.t_end {
        let mut softer = problem.clone();
        softer.lambda /= 10.0;
        sol = solve_problem(&softer, t_ref, options.segments, Guess::Simulation(&sim));
    }
    let mut history = sol.mesh_history.clone();
    let mut iterations = sol.iterations;
    let mut segments = options.segments;
    for _ in 0..options.max_refinements {
        if !sol.is_accepted() || sol.status == SolveStatus::UnboundedAtCap {
            break;
        }
        segments *= 2;
        let refined = solve_problem(&problem_for(&problem, sol.lambda), t_ref, segments, Guess::Previous(&sol));
        iterations += refined.iterations;
        if !refined.is_accepted() {
            break;
        }
        history.push((segments, refined.t_end));
        let change = (refined.t_end - sol.t_end).abs() / sol.t_end;
        sol = refined;
        if change < options.refine_tol {
            break;
        }
    }
    sol.mesh_history = history;
    sol.iterations = iterations;
    Ok(sol)
}

fn problem_for(p: &OlocProblem, lambda: f64) -> OlocProblem {
    let mut q = p.clone();
    q.lambda = lambda;
    q
}

enum Guess<'a> {
    Simulation(&'a crate::thermal::Trajectory),
    Previous(&'a OlocSolution),
}

fn solve_problem(p: &OlocProblem, t_ref: f64, segments: usize, guess: Guess<'_>) -> OlocSolution {
    let mut tr = Transcription::new(p, segments, p.options.scheme, t_ref);
    match guess {
        Guess::Simulation(sim) => {
            let x = initial_guess(&tr, sim);
            tr.set_initial_guess(x);
            solve(&tr)
        }
        Guess::Previous(prev) => {
            let x = tr.interpolate(&prev.tau, &prev.x);
            tr.set_initial_guess(x);
            let warm = solve_with(&tr, &WarmStart { mu: Some(1e-3), ..Default::default() });
            if warm.is_accepted() {
                warm
            } else {
                solve(&tr)
            }
        }
    }
}

/// Node kinds at or above the bound at the end of a solution.
pub fn active_bounds(sol: &OlocSolution, model: &ThermalModel, t_max: f64, tol: f64) -> Vec<(usize, NodeKind)> {
    sol.final_temps()
        .iter()
        .enumerate()
        .filter(|(_, t)| **t >= t_max - tol)
        .map(|(i, _)| (i, model.graph.nodes[i].kind))
        .collect()
}
