use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thermoforge_core::thermal::{simulate, EdgeKind, FlowRef, FlowSchedule, LoadSchedule, PhysicsParams, SimOptions, ThermalModel};
use thermoforge_core::ConfigGraph;

use super::{branch_vector, model, random_edge_flows, random_tree};

/// Node-by-node energy balance written directly from the tree, returning
/// each rate and the sum of absolute term sizes for a relative tolerance.
pub fn node_balance(
    g: &ConfigGraph,
    p: &PhysicsParams,
    t: &[f64],
    flows: &BTreeMap<(u32, u32), f64>,
    loads: &BTreeMap<u32, f64>,
) -> Vec<(f64, f64)> {
    let labels: Vec<u32> = g.labels().collect();
    let n = labels.len();
    let (tank, lp, lw, ls) = (0, 2 * n + 1, 2 * n + 2, 2 * n + 3);
    let fluid = |l: u32| 1 + labels.iter().position(|&x| x == l).unwrap();
    let wall = |l: u32| fluid(l) + n;
    let (cf, cw) = (p.cphx_fluid_mass * p.cp_fluid, p.cphx_wall_mass * p.cp_wall);
    let mut terms: Vec<Vec<f64>> = vec![Vec::new(); 2 * n + 4];
    terms[tank].push(p.pump_flow * p.cp_fluid * (t[lp] - t[tank]) / (p.tank_fluid_mass * p.cp_fluid));
    for &l in &labels {
        let parent = g.parent(l).unwrap();
        let up = if parent == 0 { tank } else { fluid(parent) };
        let q = flows[&(parent, l)];
        let (f, w) = (fluid(l), wall(l));
        terms[f].push(q * p.cp_fluid * (t[up] - t[f]) / cf);
        terms[f].push(p.ha_cphx * (t[w] - t[f]) / cf);
        terms[w].push(p.ha_cphx * (t[f] - t[w]) / cw);
        terms[w].push(loads[&l] / cw);
        if g.is_leaf(l) {
            terms[lp].push(q * p.cp_fluid * (t[f] - t[lp]) / (p.llhx_primary_mass * p.cp_fluid));
        }
    }
    let (cp_, cw_, cs_) = (p.llhx_primary_mass * p.cp_fluid, p.llhx_wall_mass * p.cp_wall, p.llhx_secondary_mass * p.cp_fluid);
    terms[lp].push(p.ha_llhx_primary * (t[lw] - t[lp]) / cp_);
    terms[lw].push(p.ha_llhx_primary * (t[lp] - t[lw]) / cw_);
    terms[lw].push(p.ha_llhx_secondary * (t[ls] - t[lw]) / cw_);
    terms[ls].push(p.ha_llhx_secondary * (t[lw] - t[ls]) / cs_);
    terms[ls].push(p.sink_flow * p.cp_fluid * (p.t_sink - t[ls]) / cs_);
    terms.iter().map(|v| (v.iter().sum(), v.iter().map(|x| x.abs()).sum())).collect()
}

fn random_params(rng: &mut impl Rng) -> PhysicsParams {
    PhysicsParams {
        ha_cphx: rng.random_range(100.0..2000.0),
        ha_llhx_primary: rng.random_range(100.0..3000.0),
        ha_llhx_secondary: rng.random_range(100.0..3000.0),
        cphx_fluid_mass: rng.random_range(0.05..0.5),
        pump_flow: rng.random_range(0.1..1.0),
        sink_flow: rng.random_range(0.05..0.5),
        t_sink: rng.random_range(5.0..25.0),
        ..Default::default()
    }
}

pub struct Instance {
    g: ConfigGraph,
    params: PhysicsParams,
    model: ThermalModel,
    temps: Vec<f64>,
    flows: BTreeMap<(u32, u32), f64>,
    loads: BTreeMap<u32, f64>,
}

pub fn instance(rng: &mut ChaCha8Rng) -> Instance {
    let n = rng.random_range(1..=9);
    let g = random_tree(rng, n);
    let params = random_params(rng);
    let loads: BTreeMap<u32, f64> = g.labels().map(|l| (l, rng.random_range(0.0..15_000.0))).collect();
    let model = model(&g, &loads.values().copied().collect::<Vec<_>>(), &params);
    let temps = (0..model.n_states()).map(|_| rng.random_range(10.0..60.0)).collect();
    let flows = random_edge_flows(rng, &g, params.pump_flow);
    Instance { g, params, model, temps, flows, loads }
}

/// Worst `|matrix - balance| / sum|terms|` over `count` random instances.
pub fn rhs_vs_node_balance(seed: u64, count: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let s = instance(&mut rng);
        let got = s.model.rhs(&s.temps, &branch_vector(&s.model, &s.flows), &s.model.graph.loads).unwrap();
        let want = node_balance(&s.g, &s.params, &s.temps, &s.flows, &s.loads);
        for (a, (b, scale)) in got.iter().zip(&want) {
            worst = worst.max((a - b).abs() / scale.max(1e-300));
        }
    }
    worst
}

/// Worst net power, W, carried by advection edges inside the loop.
pub fn internal_advection_power(seed: u64, count: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let s = instance(&mut rng);
        let m = &s.model;
        let n = m.n_states();
        let q = m.flow_vector(&branch_vector(m, &s.flows));
        let x = DVector::from_column_slice(&s.temps).insert_row(n, m.t_sink);
        let edge_power = (&m.z * q).component_mul(&(&m.b2 * &x));
        let internal: Vec<usize> = m
            .graph
            .edges
            .iter()
            .filter_map(|e| match e.kind {
                EdgeKind::Advection { flow } | EdgeKind::BidirAdvection { flow } => Some(flow),
                EdgeKind::Convection { .. } => None,
            })
            .enumerate()
            .filter(|(_, f)| *f != FlowRef::Sink)
            .map(|(k, _)| k)
            .collect();
        let mut total = 0.0;
        for i in 0..n {
            for &k in &internal {
                total += m.capacitance[i] * m.b1[(i, k)] * edge_power[k];
            }
        }
        worst = worst.max(total.abs());
    }
    worst
}

/// Worst gap, W, between stored power and loads plus sink exchange.
pub fn energy_audit(seed: u64, count: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..count {
        let s = instance(&mut rng);
        let m = &s.model;
        let rate = m.rhs(&s.temps, &branch_vector(m, &s.flows), &m.graph.loads).unwrap();
        let stored: f64 = rate.iter().zip(m.capacitance.iter()).map(|(r, c)| r * c).sum();
        let inflow = m.graph.loads.iter().sum::<f64>() + m.sink_power(&s.temps);
        worst = worst.max((stored - inflow).abs());
    }
    worst
}

/// Worst relative gap between a simulated single device and the matrix
/// exponential of its affine system.
pub fn single_device_vs_expm() -> f64 {
    let params = PhysicsParams::default();
    let g = ConfigGraph::parse("0 (1)").unwrap();
    let m = model(&g, &[3000.0], &params);
    let n = m.n_states();
    let loads = m.graph.loads.clone();
    // The system is affine: recover `dT/dt = M T + c` column by column.
    let zero = vec![0.0; n];
    let c = m.rhs(&zero, &[], &loads).unwrap();
    let mut aug = DMatrix::zeros(n + 1, n + 1);
    for j in 0..n {
        let mut e = zero.clone();
        e[j] = 1.0;
        let col = m.rhs(&e, &[], &loads).unwrap();
        for i in 0..n {
            aug[(i, j)] = col[i] - c[i];
        }
    }
    for i in 0..n {
        aug[(i, n)] = c[i];
    }
    let t0 = m.graph.initial_temperatures();
    let x0 = DVector::from_column_slice(&t0).insert_row(n, 1.0);
    let sim = simulate(
        &m,
        &t0,
        &FlowSchedule::Constant(vec![]),
        &LoadSchedule::constant(loads),
        120.0,
        &SimOptions { tol: 1e-12, ..Default::default() },
    )
    .unwrap();
    let mut worst = 0.0f64;
    for t in [0.5, 3.0, 17.0, 60.0, 120.0] {
        let exact = (&aug * t).exp() * &x0;
        let got = sim.solution.at(t);
        for i in 0..n {
            worst = worst.max((got[i] - exact[i]).abs() / exact[i].abs());
        }
    }
    worst
}
