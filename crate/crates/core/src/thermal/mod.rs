//! Lumped-capacitance thermal model of a pumped cooling loop.

mod model;
pub mod ode;
mod params;
mod physics;
mod simulate;

pub use model::ThermalModel;
pub use params::PhysicsParams;
pub use physics::{build_physics_graph, EdgeKind, FlowRef, NodeKind, PhysicsEdge, PhysicsGraph, PhysicsNode};
pub use simulate::{
    branch_flow_names, simulate, state_names, FlowSchedule, LoadSchedule, SimOptions, Trajectory,
};
