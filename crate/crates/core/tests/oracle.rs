//! Values frozen from an independent scipy implementation of the mean-field
//! equations (own right-hand side, fsolve plus Newton, brentq on the leading
//! eigenvalue) and from `scipy.special`.

use approx::assert_relative_eq;
use fluxmech_core::bifurcation::{equilibrium, hopf_threshold};
use fluxmech_core::response::renormalized_model;
use fluxmech_core::special::bessel_jn;
use fluxmech_core::validation::bessel_zeros;
use fluxmech_core::{MechanicalParams, Model, QubitParams};

const HOPF_G: f64 = 3.146451471510543e-4;
const EQUILIBRIUM: [f64; 5] = [
    0.22461809683000927,
    -0.008984728646001996,
    -0.2812217083198402,
    1.4069094108289467e-4,
    7.034547054144733e-9,
];
const MECH_EIGENVALUE: (f64, f64) = (-4.291548331782774e-6, 0.09433980680921783);

fn model(g: f64) -> Model {
    let (delta, delta_n): (f64, f64) = (-0.05, 0.08);
    let omega_m = delta.hypot(delta_n);
    let qubit = QubitParams {
        gamma1: 0.002,
        gamma2: 0.002,
        sigma_z_eq: -1.0,
    };
    let mech = MechanicalParams {
        omega_m,
        gamma_m: omega_m / 1e4,
        g,
    };
    Model::new(delta, delta_n, qubit, mech).unwrap()
}

#[test]
fn hopf_threshold_matches_oracle() {
    let h = hopf_threshold(&model(0.0), (1e-5, 1e-2)).unwrap();
    assert_relative_eq!(h.g_c, HOPF_G, max_relative = 1e-6);
}

#[test]
fn equilibrium_matches_oracle() {
    let eq = equilibrium(&model(0.3 * HOPF_G)).unwrap();
    let y = eq.state.to_array();
    for (got, want) in y.iter().zip(EQUILIBRIUM) {
        assert_relative_eq!(*got, want, epsilon = 1e-12, max_relative = 1e-8);
    }
    assert!(eq.stable);
}

#[test]
fn mechanical_eigenvalue_matches_oracle() {
    let m = model(0.3 * HOPF_G);
    let eq = equilibrium(&m).unwrap();
    let mech = eq
        .eigenvalues
        .iter()
        .find(|z| z.im > 0.0 && (z.im - m.mech.omega_m).abs() < 0.2 * m.mech.omega_m && z.re.abs() < 1e-4)
        .expect("mechanical mode");
    // The oracle Jacobian is a central difference, good to about 1e-9.
    assert_relative_eq!(mech.re, MECH_EIGENVALUE.0, epsilon = 1e-8);
    assert_relative_eq!(mech.im, MECH_EIGENVALUE.1, epsilon = 1e-8);
    // Linear response predicts the same mode up to higher orders in g.
    let r = renormalized_model(&m).unwrap();
    assert_relative_eq!(0.5 * r.gamma_m_tilde, -MECH_EIGENVALUE.0, max_relative = 0.02);
}

#[test]
fn bessel_values_match_scipy() {
    let cases = [
        (0, 2.5, -0.04838377646819792),
        (1, 7.3, 0.08257043049325793),
        (3, 0.4, 0.001320053214983959),
        (5, 11.0, -0.23828585178317885),
    ];
    for (n, x, want) in cases {
        assert_relative_eq!(bessel_jn(n, x).unwrap(), want, max_relative = 1e-12, epsilon = 1e-15);
    }
}

#[test]
fn bessel_zeros_match_scipy() {
    let reference = [
        [2.4048255576957724, 5.520078110286311, 8.653727912911013],
        [3.8317059702075125, 7.015586669815619, 10.173468135062722],
        [5.135622301840683, 8.417244140399866, 11.61984117214906],
        [6.380161895923984, 9.76102312998167, 13.015200721698434],
    ];
    for (n, want) in reference.iter().enumerate() {
        let zeros = bessel_zeros(n as u32, 13.5);
        assert!(zeros.len() >= 3, "order {n}: {zeros:?}");
        for (z, w) in zeros.iter().zip(want) {
            assert_relative_eq!(*z, *w, max_relative = 1e-10);
        }
    }
}
