//! Parameters, rotating-frame derivation and the semiclassical equations of motion.
//!
//! State vectors use the real layout `(Re s_-, Im s_-, s_z, Re alpha, Im alpha)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::Matrix5;
use crate::special::bessel_jn;
use crate::{Error, Result};

/// Reduced Planck constant in J s, used only by [`coupling_from_physical`].
pub const HBAR_SI: f64 = 1.054_571_817e-34;

/// Flux drive and qubit gap. All entries are angular frequencies (`epsilon_0 phi / hbar`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveParams {
    /// DC flux bias `epsilon_0 phi_e0 / hbar`.
    pub eps0_phi_e0: f64,
    /// AC flux amplitude `epsilon_0 phi_e1 / hbar`.
    pub eps0_phi_e1: f64,
    pub omega_drive: f64,
    /// Multi-photon resonance index.
    pub n_photon: u32,
    /// Qubit gap at the degeneracy point.
    pub delta_gap: f64,
}

impl DriveParams {
    pub fn validate(&self) -> Result<()> {
        finite("drive.eps0_phi_e0", self.eps0_phi_e0)?;
        finite("drive.eps0_phi_e1", self.eps0_phi_e1)?;
        if !(self.omega_drive > 0.0 && self.omega_drive.is_finite()) {
            return Err(Error::invalid("drive.omega_drive", "must be positive"));
        }
        if !(self.delta_gap >= 0.0 && self.delta_gap.is_finite()) {
            return Err(Error::invalid("drive.delta_gap", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitParams {
    /// Energy relaxation rate.
    pub gamma1: f64,
    /// Transverse decay rate (includes pure dephasing).
    pub gamma2: f64,
    /// Thermal equilibrium value of `s_z`.
    pub sigma_z_eq: f64,
}

impl QubitParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma1 >= 0.0 && self.gamma1.is_finite()) {
            return Err(Error::invalid("qubit.gamma1", "must be non-negative"));
        }
        if !(self.gamma2 >= 0.5 * self.gamma1 && self.gamma2.is_finite()) {
            return Err(Error::invalid("qubit.gamma2", "must satisfy gamma2 >= gamma1 / 2"));
        }
        if !(self.sigma_z_eq.abs() <= 1.0) {
            return Err(Error::invalid("qubit.sigma_z_eq", "must lie in [-1, 1]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MechanicalParams {
    pub omega_m: f64,
    pub gamma_m: f64,
    /// Qubit-oscillator coupling; the sign is meaningful.
    pub g: f64,
}

impl MechanicalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_m > 0.0 && self.omega_m.is_finite()) {
            return Err(Error::invalid("mech.omega_m", "must be positive"));
        }
        if !(self.gamma_m >= 0.0 && self.gamma_m.is_finite()) {
            return Err(Error::invalid("mech.gamma_m", "must be non-negative"));
        }
        finite("mech.g", self.g)
    }

    pub fn quality_factor(&self) -> f64 {
        self.omega_m / self.gamma_m
    }
}

/// Beam and SQUID quantities entering the coupling constant, in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalCouplingParams {
    /// Magnetic field (T).
    pub b_field: f64,
    /// Effective length of the suspended beam (m).
    pub length_eff: f64,
    /// Circulating current magnitude (A).
    pub i_cc: f64,
    /// Effective mass of the mechanical mode (kg).
    pub mass_eff: f64,
    /// Mechanical angular frequency (rad/s).
    pub omega_m: f64,
}

/// Coupling `g = B l I_cc / sqrt(2 hbar m omega_m)` in rad/s.
pub fn coupling_from_physical(p: &PhysicalCouplingParams) -> Result<f64> {
    let fields = [
        ("b_field", p.b_field),
        ("length_eff", p.length_eff),
        ("i_cc", p.i_cc),
        ("mass_eff", p.mass_eff),
        ("omega_m", p.omega_m),
    ];
    for (name, v) in fields {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    Ok(p.b_field * p.length_eff * p.i_cc / (2.0 * HBAR_SI * p.mass_eff * p.omega_m).sqrt())
}

/// Detuning `delta = eps0 phi_e0 - n omega_d` and dressed gap `Delta_n = Delta J_n(eps0 phi_e1 / omega_d)`.
pub fn derive_rotating_frame(drive: &DriveParams) -> Result<(f64, f64)> {
    drive.validate()?;
    let delta = drive.eps0_phi_e0 - f64::from(drive.n_photon) * drive.omega_drive;
    let delta_n =
        drive.delta_gap * bessel_jn(drive.n_photon, drive.eps0_phi_e1 / drive.omega_drive)?;
    Ok((delta, delta_n))
}

/// Secondary quantities consumed by the analytic formulas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub delta: f64,
    pub delta_n: f64,
    /// Rabi frequency carrying the sign of `delta` (`+` at `delta = 0`).
    pub omega_rabi: f64,
    pub gamma1n: f64,
    pub gamma2n: f64,
    /// Bare transverse rate, needed by the response numerator.
    pub gamma2: f64,
    /// Interaction coefficient `G`; positive in the blue-detuned regime for `g > 0`.
    pub g_interaction: f64,
    /// Equilibrium population projected on the dressed axis.
    pub s_z_eq_bar: f64,
    /// Mechanical detuning from the Rabi frequency, `omega_m - |Omega_R|`.
    pub sigma_detune: f64,
}

impl DerivedParams {
    /// Cosine of the tilt between the dressed axis and the lab `z` axis,
    /// `delta / |Omega_R|`: lab `s_z` components equal this times the dressed ones.
    pub fn dressed_z_projection(&self) -> f64 {
        self.delta / self.omega_rabi.abs()
    }
}

pub fn derive_secondary(
    delta: f64,
    delta_n: f64,
    qubit: &QubitParams,
    mech: &MechanicalParams,
) -> Result<DerivedParams> {
    finite("delta", delta)?;
    finite("delta_n", delta_n)?;
    if delta == 0.0 && delta_n == 0.0 {
        return Err(Error::DegenerateParameters);
    }
    let QubitParams {
        gamma1,
        gamma2,
        sigma_z_eq,
    } = *qubit;
    let sign = if delta < 0.0 { -1.0 } else { 1.0 };
    let omega_rabi = sign * delta.hypot(delta_n);
    let or2 = omega_rabi * omega_rabi;
    let dn2 = delta_n * delta_n;

    let gamma1n = (delta * delta * gamma1 + dn2 * gamma2) / or2;
    let gamma2n = gamma2 - dn2 / (2.0 * or2) * (gamma2 - gamma1);
    let (g_interaction, s_z_eq_bar) = if gamma1n == 0.0 {
        (0.0, 0.0)
    } else {
        (
            -delta * gamma1 * dn2 * sigma_z_eq * mech.g / (2.0 * or2 * omega_rabi * gamma1n),
            delta * gamma1 * sigma_z_eq / (omega_rabi.abs() * gamma1n),
        )
    };
    Ok(DerivedParams {
        delta,
        delta_n,
        omega_rabi,
        gamma1n,
        gamma2n,
        gamma2,
        g_interaction,
        s_z_eq_bar,
        sigma_detune: mech.omega_m - omega_rabi.abs(),
    })
}

/// Mean values of the qubit and oscillator operators.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SystemState {
    pub s_minus: Complex64,
    pub s_z: f64,
    pub alpha: Complex64,
}

impl SystemState {
    pub fn new(s_minus: Complex64, s_z: f64, alpha: Complex64) -> Self {
        Self {
            s_minus,
            s_z,
            alpha,
        }
    }

    pub fn to_array(&self) -> [f64; 5] {
        [
            self.s_minus.re,
            self.s_minus.im,
            self.s_z,
            self.alpha.re,
            self.alpha.im,
        ]
    }

    pub fn from_array(v: &[f64; 5]) -> Self {
        Self {
            s_minus: Complex64::new(v[0], v[1]),
            s_z: v[2],
            alpha: Complex64::new(v[3], v[4]),
        }
    }

    #[inline]
    pub fn s_plus(&self) -> Complex64 {
        self.s_minus.conj()
    }

    /// `4 |s_-|^2 + s_z^2`, equal to one on the Bloch sphere.
    pub fn bloch_norm(&self) -> f64 {
        4.0 * self.s_minus.norm_sqr() + self.s_z * self.s_z
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Full parameter set of a run as read from a config file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub drive: DriveParams,
    pub qubit: QubitParams,
    pub mech: MechanicalParams,
    /// Angular frequency that all rates and frequencies are expressed in
    /// (the drive frequency by default). Informational; no rescaling is applied.
    #[serde(default = "unit_frequency")]
    pub frequency_unit: f64,
}

fn unit_frequency() -> f64 {
    1.0
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.drive.validate()?;
        self.qubit.validate()?;
        self.mech.validate()?;
        if !(self.frequency_unit > 0.0 && self.frequency_unit.is_finite()) {
            return Err(Error::invalid("frequency_unit", "must be positive"));
        }
        Ok(())
    }
}

/// Rotating-frame model: everything the equations of motion need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub delta: f64,
    pub delta_n: f64,
    pub qubit: QubitParams,
    pub mech: MechanicalParams,
}

impl Model {
    pub fn new(delta: f64, delta_n: f64, qubit: QubitParams, mech: MechanicalParams) -> Result<Self> {
        finite("delta", delta)?;
        finite("delta_n", delta_n)?;
        qubit.validate()?;
        mech.validate()?;
        Ok(Self {
            delta,
            delta_n,
            qubit,
            mech,
        })
    }

    pub fn from_config(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let (delta, delta_n) = derive_rotating_frame(&cfg.drive)?;
        Self::new(delta, delta_n, cfg.qubit, cfg.mech)
    }

    pub fn derived(&self) -> Result<DerivedParams> {
        derive_secondary(self.delta, self.delta_n, &self.qubit, &self.mech)
    }

    pub fn with_g(mut self, g: f64) -> Self {
        self.mech.g = g;
        self
    }

    pub fn with_delta(mut self, delta: f64) -> Self {
        self.delta = delta;
        self
    }

    pub fn with_omega_m(mut self, omega_m: f64) -> Self {
        self.mech.omega_m = omega_m;
        self
    }

    /// `|Omega_R| = sqrt(delta^2 + Delta_n^2)`.
    pub fn rabi_magnitude(&self) -> f64 {
        self.delta.hypot(self.delta_n)
    }

    /// Steady state of the Bloch equations at effective detuning `detuning`.
    pub fn bloch_steady_state(&self, detuning: f64) -> (Complex64, f64) {
        let QubitParams {
            gamma1,
            gamma2,
            sigma_z_eq,
        } = self.qubit;
        let dn = self.delta_n;
        let lorentz = gamma2 * gamma2 + detuning * detuning;
        let denom = gamma1 * lorentz + dn * dn * gamma2;
        let s_z = if denom == 0.0 {
            sigma_z_eq
        } else {
            gamma1 * sigma_z_eq * lorentz / denom
        };
        let s_minus = if lorentz == 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(0.0, 0.5 * dn * s_z) / Complex64::new(gamma2, detuning)
        };
        (s_minus, s_z)
    }

    /// Mechanical amplitude balancing the static force of a given `s_z`.
    pub fn alpha_for(&self, s_z: f64) -> Complex64 {
        -self.mech.g * s_z / Complex64::new(2.0 * self.mech.omega_m, -self.mech.gamma_m)
    }

    /// Equilibrium of the decoupled problem, a good Newton starting point.
    pub fn initial_guess(&self) -> SystemState {
        let (s_minus, s_z) = self.bloch_steady_state(self.delta);
        SystemState::new(s_minus, s_z, self.alpha_for(s_z))
    }

    #[inline]
    pub fn rhs(&self, state: &SystemState) -> SystemState {
        eom_rhs(state, self)
    }

    #[inline]
    pub fn jacobian(&self, state: &SystemState) -> Matrix5 {
        eom_jacobian(state, self)
    }

    /// Right-hand side on the real layout, used by the integrators.
    #[inline]
    pub fn rhs_real(&self, y: &[f64; 5], dy: &mut [f64; 5]) {
        let [x, yy, z, p, q] = *y;
        let QubitParams {
            gamma1,
            gamma2,
            sigma_z_eq,
        } = self.qubit;
        let MechanicalParams {
            omega_m,
            gamma_m,
            g,
        } = self.mech;
        let dn = self.delta_n;
        let detuning = self.delta + 2.0 * g * p;
        dy[0] = -gamma2 * x + detuning * yy;
        dy[1] = -gamma2 * yy - detuning * x + 0.5 * dn * z;
        dy[2] = -gamma1 * (z - sigma_z_eq) - 2.0 * dn * yy;
        dy[3] = -0.5 * gamma_m * p + omega_m * q;
        dy[4] = -0.5 * gamma_m * q - omega_m * p - 0.5 * g * z;
    }
}

/// Time derivative of the state under the semiclassical equations of motion.
pub fn eom_rhs(state: &SystemState, model: &Model) -> SystemState {
    let i = Complex64::i();
    let QubitParams {
        gamma1,
        gamma2,
        sigma_z_eq,
    } = model.qubit;
    let MechanicalParams {
        omega_m,
        gamma_m,
        g,
    } = model.mech;
    let SystemState {
        s_minus,
        s_z,
        alpha,
    } = *state;
    let u = alpha + alpha.conj();

    let ds = -gamma2 * s_minus - i * model.delta * s_minus + i * 0.5 * model.delta_n * s_z
        - i * g * u * s_minus;
    let dz = -gamma1 * (s_z - sigma_z_eq) + i * model.delta_n * (s_minus - state.s_plus());
    let da = -i * omega_m * alpha - 0.5 * gamma_m * alpha - i * 0.5 * g * s_z;
    SystemState::new(ds, dz.re, da)
}

/// Analytic Jacobian of [`eom_rhs`] in the real layout.
pub fn eom_jacobian(state: &SystemState, model: &Model) -> Matrix5 {
    let [x, y, _, p, _] = state.to_array();
    let QubitParams { gamma1, gamma2, .. } = model.qubit;
    let MechanicalParams {
        omega_m,
        gamma_m,
        g,
    } = model.mech;
    let dn = model.delta_n;
    let detuning = model.delta + 2.0 * g * p;
    let hm = 0.5 * gamma_m;
    [
        [-gamma2, detuning, 0.0, 2.0 * g * y, 0.0],
        [-detuning, -gamma2, 0.5 * dn, -2.0 * g * x, 0.0],
        [0.0, -2.0 * dn, -gamma1, 0.0, 0.0],
        [0.0, 0.0, 0.0, -hm, omega_m],
        [0.0, 0.0, -0.5 * g, -omega_m, -hm],
    ]
}

fn finite(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(name, "must be finite"))
    }
}
