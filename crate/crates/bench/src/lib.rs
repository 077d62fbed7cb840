//! Shared fixtures for the benchmarks.

use fluxmech_core::{MechanicalParams, Model, QubitParams, SystemState};

/// Blue-detuned model just above the instability threshold.
pub fn blue_model(g: f64) -> Model {
    let qubit = QubitParams {
        gamma1: 0.002,
        gamma2: 0.002,
        sigma_z_eq: -1.0,
    };
    let (delta, delta_n): (f64, f64) = (-0.05, 0.08);
    let omega_m = delta.hypot(delta_n);
    let mech = MechanicalParams {
        omega_m,
        gamma_m: omega_m / 1e4,
        g,
    };
    Model::new(delta, delta_n, qubit, mech).expect("valid benchmark model")
}

/// Generic off-equilibrium state.
pub fn probe_state() -> SystemState {
    SystemState::from_array(&[0.1, -0.2, -0.7, 0.3, 0.05])
}
