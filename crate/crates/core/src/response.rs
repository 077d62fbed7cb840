//! Linear response of the qubit population to a small mechanical displacement
//! and the resulting renormalization of the mechanical damping and frequency.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bifurcation::equilibrium;
use crate::model::{DerivedParams, MechanicalParams, Model};
use crate::ode::{self, SampleGrid, SolverOptions, Tolerance};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseResult {
    /// `chi_z(-i omega_m)`.
    pub chi: Complex64,
    pub gamma_m_tilde: f64,
    pub omega_m_tilde: f64,
}

/// Factored response function
/// `-2 Omega G (2 gamma2 - i w) / ((gamma1n - i w)(gamma2n - i(w - Omega))(gamma2n - i(w + Omega)))`.
pub fn chi_z(omega: f64, d: &DerivedParams) -> Result<Complex64> {
    let i = Complex64::i();
    let om = d.omega_rabi;
    let den = (d.gamma1n - i * omega)
        * (d.gamma2n - i * (omega - om))
        * (d.gamma2n - i * (omega + om));
    if den == Complex64::new(0.0, 0.0) {
        return Err(Error::Singular);
    }
    Ok(-2.0 * om * d.g_interaction * (2.0 * d.gamma2 - i * omega) / den)
}

/// Stokes / anti-Stokes form: two Lorentzian sidebands at `w = -+ Omega`.
pub fn chi_z_sas(omega: f64, d: &DerivedParams) -> Complex64 {
    let g2 = d.gamma2n;
    let plus = omega + d.omega_rabi;
    let minus = omega - d.omega_rabi;
    let lp = g2 * g2 + plus * plus;
    let lm = g2 * g2 + minus * minus;
    let im = if d.omega_rabi == 0.0 {
        0.0
    } else {
        d.g_interaction * (g2 / lp - g2 / lm)
    };
    let re = d.g_interaction * (plus / lp + minus / lm);
    Complex64::new(re, im)
}

/// `gamma_m~ = gamma_m - g Im chi`, `omega_m~ = omega_m + (g/2) Re chi`, with `chi` at `omega_m`.
pub fn renormalized_mech(d: &DerivedParams, mech: &MechanicalParams) -> Result<ResponseResult> {
    let chi = chi_z(mech.omega_m, d)?;
    Ok(ResponseResult {
        chi,
        gamma_m_tilde: mech.gamma_m - mech.g * chi.im,
        omega_m_tilde: mech.omega_m + 0.5 * mech.g * chi.re,
    })
}

/// [`chi_z`] for the qubit parameters of `model`.
pub fn chi_z_model(omega: f64, model: &Model) -> Result<Complex64> {
    chi_z(omega, &model.derived()?)
}

pub fn renormalized_model(model: &Model) -> Result<ResponseResult> {
    renormalized_mech(&model.derived()?, &model.mech)
}

/// Settings for [`chi_z_numeric`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumericResponseOptions {
    /// Drive amplitude; `None` selects `1e-4 Delta_n / |g|` clipped to `[1e-8, 1e-2]`.
    pub alpha0: Option<f64>,
    /// Total number of drive cycles; `None` picks enough for 20 qubit decay times
    /// before the projection window (at least 30).
    pub cycles: Option<usize>,
    pub tol: Tolerance,
    /// Largest allowed relative disagreement between the two halves of the window.
    pub window_agreement: f64,
}

impl Default for NumericResponseOptions {
    fn default() -> Self {
        Self {
            alpha0: None,
            cycles: None,
            tol: Tolerance::new(1e-10, 1e-12),
            window_agreement: 0.01,
        }
    }
}

pub fn default_alpha0(model: &Model) -> f64 {
    if model.mech.g == 0.0 {
        return 1e-2;
    }
    (1e-4 * model.delta_n.abs() / model.mech.g.abs()).clamp(1e-8, 1e-2)
}

/// Number of drive cycles so the discarded leading third covers 20 decay times
/// of the slowest qubit mode.
pub fn default_cycles(model: &Model, omega: f64) -> Result<usize> {
    let d = model.derived()?;
    let slowest = d.gamma1n.min(d.gamma2n);
    if !(slowest > 0.0) {
        return Err(Error::invalid("qubit", "numeric response needs nonzero decay rates"));
    }
    let period = TAU / omega;
    Ok(((3.0 * 20.0 / slowest) / period).ceil().max(30.0) as usize)
}

/// Numerical response: drives the qubit equations alone with the prescribed
/// displacement `alpha(t) = alpha_eq + alpha0 exp(-i omega t)` about the
/// coupled equilibrium and projects `s_z` on `exp(-i omega t)`.
///
/// Only the deviation from equilibrium is integrated so tolerances act on the
/// small response itself. The projection covers the trailing two thirds of
/// the run in whole cycles; its two halves must agree to `window_agreement`.
pub fn chi_z_numeric(model: &Model, omega: f64, opts: &NumericResponseOptions) -> Result<Complex64> {
    if !(omega > 0.0 && omega.is_finite()) {
        return Err(Error::invalid("omega", "must be positive"));
    }
    let alpha0 = opts.alpha0.unwrap_or_else(|| default_alpha0(model));
    if !(alpha0 > 0.0 && alpha0.is_finite()) {
        return Err(Error::invalid("alpha0", "must be positive"));
    }
    let cycles = match opts.cycles {
        Some(c) => c,
        None => default_cycles(model, omega)?,
    };
    if cycles < 6 {
        return Err(Error::invalid("cycles", "need at least 6 drive cycles"));
    }

    let eq = equilibrium(model)?;
    let [xe, ye, _, pe, _] = eq.state.to_array();
    let g = model.mech.g;
    let dn = model.delta_n;
    let gamma1 = model.qubit.gamma1;
    let gamma2 = model.qubit.gamma2;
    let d_eq = model.delta + 2.0 * g * pe;
    let eps_amp = 2.0 * g * alpha0;

    let period = TAU / omega;
    let rabi = model.rabi_magnitude().max(d_eq.abs());
    let per_cycle = ((32.0 * rabi / omega).ceil() as usize).max(32);
    let dt = period / per_cycle as f64;
    let window_cycles = (2 * cycles / 3) & !1;
    let half = window_cycles / 2 * per_cycle;
    let t_end = cycles as f64 * period;
    let t_start = (cycles - window_cycles) as f64 * period;
    let grid = SampleGrid {
        start: t_start,
        dt,
        count: 2 * half,
    };

    let sys = move |t: f64, v: &[f64; 3], dv: &mut [f64; 3]| {
        let eps = eps_amp * (omega * t).cos();
        let [x, y, z] = *v;
        dv[0] = -gamma2 * x + d_eq * y + eps * (ye + y);
        dv[1] = -gamma2 * y - d_eq * x - eps * (xe + x) + 0.5 * dn * z;
        dv[2] = -gamma1 * z - 2.0 * dn * y;
    };
    let scale = eps_amp.abs() * (xe.hypot(ye) + 1e-3);
    let solver = SolverOptions {
        tol: Tolerance::new(opts.tol.rel, (opts.tol.abs * scale).max(1e-300)),
        max_steps: 500_000_000,
        ..SolverOptions::default()
    };
    let mut sums = [Complex64::new(0.0, 0.0); 2];
    let mut k = 0usize;
    ode::integrate_sampled(&sys, 0.0, &[0.0; 3], t_end, &grid, &solver, |t, v| {
        sums[k / half] += v[2] * Complex64::from_polar(1.0, omega * (t - t_start));
        k += 1;
    })
    .map_err(|f| Error::Convergence(format!("forced qubit integration failed at t = {}: {}", f.t, f.reason)))?;

    // Phases were taken relative to t_start, a whole number of periods.
    let c1 = sums[0] / half as f64;
    let c2 = sums[1] / half as f64;
    let c = 0.5 * (c1 + c2);
    let floor = 1e-13 * alpha0;
    if (c1 - c2).norm() > opts.window_agreement * c.norm() + floor {
        return Err(Error::Convergence(format!(
            "projection differs by {:.3e} between window halves",
            (c1 - c2).norm() / c.norm()
        )));
    }
    Ok(c / alpha0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseRow {
    pub omega: f64,
    pub chi: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseCurves {
    pub rows: Vec<ResponseRow>,
    /// Frequencies of interior local maxima of `|Im chi|`.
    pub im_maxima: Vec<f64>,
}

pub fn response_curves(omega_grid: &[f64], d: &DerivedParams) -> Result<ResponseCurves> {
    if omega_grid.is_empty() {
        return Err(Error::invalid("omega_grid", "must not be empty"));
    }
    let rows = omega_grid
        .iter()
        .map(|&w| Ok(ResponseRow { omega: w, chi: chi_z(w, d)? }))
        .collect::<Result<Vec<_>>>()?;
    let mut im_maxima = Vec::new();
    for k in 1..rows.len().saturating_sub(1) {
        let (a, b, c) = (rows[k - 1].chi.im.abs(), rows[k].chi.im.abs(), rows[k + 1].chi.im.abs());
        if b > a && b >= c && b > 0.0 {
            im_maxima.push(rows[k].omega);
        }
    }
    Ok(ResponseCurves { rows, im_maxima })
}

/// Whether `omega` lies within three linewidths of a resonance of the
/// factored response: `|omega - |Omega|| <= 3 gamma2n` or `|omega - gamma1n| <= 3 gamma1n`.
pub fn near_pole(omega: f64, d: &DerivedParams) -> bool {
    (omega - d.omega_rabi.abs()).abs() <= 3.0 * d.gamma2n || (omega - d.gamma1n).abs() <= 3.0 * d.gamma1n
}
