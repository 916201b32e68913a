//! Browser bindings for the demo page.
//!
//! Each export takes plain strings and numbers and returns a JSON string.
//! The `*_json` functions hold the logic so they can be tested natively.

use serde::Serialize;
use serde_json::json;
use thermoforge_core::enumeration::{count_multi_split, count_single_split, generate_level_graphs, SubEnumerator, COUNT_CAP};
use thermoforge_core::harness::build_model;
use thermoforge_core::oloc::{evaluate_endurance, OlocOptions};
use thermoforge_core::spatial::{build_supernode_tree, ClusterOptions, DeviceLayout};
use thermoforge_core::thermal::{
    simulate, state_names, FlowSchedule, LoadSchedule, PhysicsParams, SimOptions, Trajectory,
};
use thermoforge_core::ConfigGraph;
use wasm_bindgen::prelude::*;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Canonical form, structure and flow bookkeeping of a notation string,
/// with population counts for its device count.
pub fn explore_json(notation: &str) -> Result<String, String> {
    let g = ConfigGraph::parse(notation).map_err(err)?;
    let n = g.device_count();
    let fm = thermoforge_core::FlowMap::new(&g, 1.0);
    let counts = if n <= COUNT_CAP {
        json!({
            "single_split": count_single_split(n).to_string(),
            "one_junction": count_multi_split(n, 1).to_string(),
            "two_junctions": count_multi_split(n, 2).to_string(),
        })
    } else {
        json!(null)
    };
    let v = json!({
        "canonical": g.to_notation(),
        "devices": n,
        "edges": g.edges(),
        "splits": g.split_nodes(),
        "leaves": g.leaves(),
        "single_split": g.is_single_split(),
        "independent_flows": fm.n_independent(),
        "dependent_flows": fm.n_dependent(),
        "counts": counts,
    });
    Ok(v.to_string())
}

#[derive(Serialize)]
struct ClusterView {
    levels: Vec<Vec<Group>>,
    population: Vec<String>,
}

#[derive(Serialize)]
struct Group {
    junction: u32,
    members: Vec<u32>,
    centroid: [f64; 3],
}

/// Super-node tree of a layout and the configurations at its deepest level.
pub fn cluster_json(layout: &str, levels: usize, seed: u64) -> Result<String, String> {
    let layout: DeviceLayout = serde_json::from_str(layout).map_err(err)?;
    let tree = build_supernode_tree(&layout, levels, ClusterOptions { seed, ..Default::default() }).map_err(err)?;
    let pop = generate_level_graphs(&tree, tree.depth(), SubEnumerator::SingleSplit).map_err(err)?;
    let view = ClusterView {
        levels: tree.levels[1..]
            .iter()
            .map(|level| {
                level
                    .iter()
                    .map(|sn| {
                        let mut c = [0.0; 3];
                        for &m in &sn.members {
                            let p = layout.position(m);
                            (0..3).for_each(|i| c[i] += p[i] / sn.members.len() as f64);
                        }
                        Group { junction: sn.junction.unwrap_or(0), members: sn.members.clone(), centroid: c }
                    })
                    .collect()
            })
            .collect(),
        population: pop.notations(),
    };
    serde_json::to_string(&view).map_err(err)
}

fn parse_loads(text: &str) -> Result<Vec<f64>, String> {
    text.split([',', ' '])
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("bad load '{s}'")))
        .collect()
}

/// Temperature curves of a configuration. With `optimize` the flows come
/// from the endurance optimum, otherwise from an equal split held until the
/// first bound crossing or `horizon` seconds.
pub fn simulate_json(notation: &str, loads_kw: &str, horizon: f64, optimize: bool) -> Result<String, String> {
    let g = ConfigGraph::parse(notation).map_err(err)?;
    let loads = parse_loads(loads_kw)?;
    let model = build_model(&g, &loads, &PhysicsParams::default()).map_err(err)?;
    let schedule = LoadSchedule::constant(model.graph.loads.clone());
    let names = state_names(&model);
    if optimize {
        let o = OlocOptions { segments: 30, max_refinements: 0, ..Default::default() };
        let sol = evaluate_endurance(&model, &schedule, &o).map_err(err)?;
        let v = json!({
            "names": names,
            "times": sol.times,
            "temps": sol.temps,
            "flows": sol.branch_flows,
            "t_end": sol.t_end,
            "status": sol.status.to_string(),
        });
        return Ok(v.to_string());
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err("horizon must be positive".into());
    }
    let fm = &model.graph.flow_map;
    let indep = fm.equal_split(&g);
    let opts = SimOptions { bounds: Some(vec![45.0; model.n_states()]), output_dt: Some(horizon / 200.0), ..Default::default() };
    let t0 = model.graph.initial_temperatures();
    let traj: Trajectory =
        simulate(&model, &t0, &FlowSchedule::Constant(indep), &schedule, horizon, &opts).map_err(err)?;
    let v = json!({
        "names": names,
        "times": traj.times,
        "temps": traj.temps,
        "flows": traj.branch_flows,
        "t_end": traj.event.map(|e| e.0),
        "status": if traj.event.is_some() { "bound reached" } else { "below bound at horizon" },
    });
    Ok(v.to_string())
}

#[wasm_bindgen]
pub fn explore(notation: &str) -> Result<String, JsValue> {
    explore_json(notation).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn cluster(layout: &str, levels: usize, seed: u32) -> Result<String, JsValue> {
    cluster_json(layout, levels, seed as u64).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = simulateConfig)]
pub fn simulate_config(notation: &str, loads_kw: &str, horizon: f64, optimize: bool) -> Result<String, JsValue> {
    simulate_json(notation, loads_kw, horizon, optimize).map_err(|e| JsValue::from_str(&e))
}
