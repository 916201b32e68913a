mod common;

use common::physics::{energy_audit, internal_advection_power, rhs_vs_node_balance, single_device_vs_expm};

#[test]
fn matrix_form_matches_node_balance() {
    let worst = rhs_vs_node_balance(2024, 200);
    assert!(worst <= 1e-12, "{worst}");
}

#[test]
fn internal_advection_telescopes() {
    let worst = internal_advection_power(7, 200);
    assert!(worst <= 1e-9, "{worst} W");
}

#[test]
fn stored_power_equals_loads_plus_sink_exchange() {
    let worst = energy_audit(99, 200);
    assert!(worst <= 1e-9, "{worst} W");
}

#[test]
fn single_device_matches_matrix_exponential() {
    let worst = single_device_vs_expm();
    assert!(worst <= 1e-8, "{worst}");
}
