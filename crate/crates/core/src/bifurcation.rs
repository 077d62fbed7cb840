//! Equilibria and their stability, the Hopf threshold in the coupling `g`,
//! closed-form limit-cycle predictions and continuation of the equilibrium
//! branch with simulated limit cycles.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{steady_state, LimitCycleMeasurement, SteadyState, SteadyStateBudget};
use crate::linalg::{eigenvalues, solve};
use crate::model::{DerivedParams, MechanicalParams, Model, SystemState};
use crate::{Error, Result};

/// Residual (max-norm of the right-hand side) accepted as an equilibrium.
pub const RESIDUAL_TOL: f64 = 1e-12;
const MAX_NEWTON_ITERATIONS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumPoint {
    pub state: SystemState,
    pub residual_norm: f64,
    /// Jacobian eigenvalues, sorted by decreasing real part.
    pub eigenvalues: [Complex64; 5],
    pub stable: bool,
    pub iterations: usize,
}

impl EquilibriumPoint {
    pub fn leading(&self) -> Complex64 {
        self.eigenvalues[0]
    }
}

fn residual(model: &Model, y: &[f64; 5]) -> ([f64; 5], f64) {
    let mut f = [0.0; 5];
    model.rhs_real(y, &mut f);
    let n = f.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    (f, n)
}

/// Damped Newton iteration on the right-hand side with the analytic Jacobian.
pub fn find_equilibrium(model: &Model, guess: &SystemState) -> Result<EquilibriumPoint> {
    if !guess.is_finite() {
        return Err(Error::invalid("guess", "must be finite"));
    }
    let mut y = guess.to_array();
    let (mut f, mut norm) = residual(model, &y);
    let mut iterations = 0;
    while norm > RESIDUAL_TOL {
        if iterations == MAX_NEWTON_ITERATIONS {
            return Err(Error::Newton {
                iterations,
                residual: norm,
                best: SystemState::from_array(&y),
            });
        }
        iterations += 1;
        let j = model.jacobian(&SystemState::from_array(&y));
        let neg_f = f.map(|v| -v);
        let step = solve(&j, &neg_f).ok_or_else(|| Error::Newton {
            iterations,
            residual: norm,
            best: SystemState::from_array(&y),
        })?;
        let mut lambda = 1.0;
        loop {
            let mut trial = y;
            for (t, s) in trial.iter_mut().zip(&step) {
                *t += lambda * s;
            }
            let (ft, nt) = residual(model, &trial);
            if nt < norm || lambda < 1e-10 {
                if !(nt < norm) && nt > RESIDUAL_TOL {
                    return Err(Error::Newton {
                        iterations,
                        residual: norm,
                        best: SystemState::from_array(&y),
                    });
                }
                y = trial;
                f = ft;
                norm = nt;
                break;
            }
            lambda *= 0.5;
        }
    }
    let state = SystemState::from_array(&y);
    let eig = eigenvalues(&model.jacobian(&state))?;
    Ok(EquilibriumPoint {
        state,
        residual_norm: norm,
        stable: eig.iter().all(|z| z.re < 0.0),
        eigenvalues: eig,
        iterations,
    })
}

/// Starting point from the self-consistent static displacement: iterates
/// `detuning -> s_z -> alpha -> detuning` a few times.
pub fn static_guess(model: &Model) -> SystemState {
    let mut state = model.initial_guess();
    for _ in 0..50 {
        let detuning = model.delta + 2.0 * model.mech.g * state.alpha.re;
        let (s_minus, s_z) = model.bloch_steady_state(detuning);
        let next = SystemState::new(s_minus, s_z, model.alpha_for(s_z));
        let change = (next.s_z - state.s_z).abs();
        state = next;
        if change < 1e-15 {
            break;
        }
    }
    state
}

/// Equilibrium reached from [`static_guess`].
pub fn equilibrium(model: &Model) -> Result<EquilibriumPoint> {
    find_equilibrium(model, &static_guess(model))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HopfPoint {
    pub g_c: f64,
    /// `|Im lambda|` of the leading pair at threshold.
    pub omega_hopf: f64,
    /// `d(max Re lambda)/dg` across the threshold.
    pub crossing_slope: f64,
    pub bisection_steps: usize,
}

fn leading_real(model: &Model, g: f64, warm: Option<&SystemState>) -> Result<EquilibriumPoint> {
    let m = model.with_g(g);
    match warm {
        Some(s) => find_equilibrium(&m, s).or_else(|_| equilibrium(&m)),
        None => equilibrium(&m),
    }
}

/// Bisects the coupling at which the leading equilibrium eigenvalue crosses
/// the imaginary axis. The lower end of `g_range` must be stable
/// (`max Re lambda <= 0`) and the upper end unstable.
pub fn hopf_threshold(model: &Model, g_range: (f64, f64)) -> Result<HopfPoint> {
    let (mut lo, mut hi) = g_range;
    if !(lo.is_finite() && hi.is_finite() && hi > lo) {
        return Err(Error::invalid("g_range", "requires finite lo < hi"));
    }
    let not_found = || Error::HopfNotFound { lo: g_range.0, hi: g_range.1 };
    let e_lo = leading_real(model, lo, None)?;
    let e_hi = leading_real(model, hi, None)?;
    if !(e_lo.leading().re <= 0.0 && e_hi.leading().re > 0.0) {
        return Err(not_found());
    }
    let mut warm = e_lo.state;
    let mut steps = 0;
    while hi - lo > 1e-7 * hi.abs().max(lo.abs()) && steps < 200 {
        let mid = 0.5 * (lo + hi);
        let e = leading_real(model, mid, Some(&warm))?;
        if e.leading().re <= 0.0 {
            lo = mid;
            warm = e.state;
        } else {
            hi = mid;
        }
        steps += 1;
    }
    let g_c = 0.5 * (lo + hi);
    let at = leading_real(model, g_c, Some(&warm))?;
    let h = 1e-3 * g_c.abs().max(1e-12);
    let a = leading_real(model, g_c - h, Some(&at.state))?;
    let b = leading_real(model, g_c + h, Some(&at.state))?;
    Ok(HopfPoint {
        g_c,
        omega_hopf: at.leading().im.abs(),
        crossing_slope: (b.leading().re - a.leading().re) / (2.0 * h),
        bisection_steps: steps,
    })
}

/// `g_crit = sqrt(2 gamma_m Omega^2 (gamma2n^2 + sigma^2) / (s_bar gamma2n Delta_n^2))`.
pub fn g_crit_analytic(d: &DerivedParams, mech: &MechanicalParams) -> Result<f64> {
    if !(d.s_z_eq_bar > 0.0) {
        return Err(Error::NoInstability {
            s_z_eq_bar: d.s_z_eq_bar,
        });
    }
    if d.delta_n == 0.0 || d.gamma2n == 0.0 {
        return Err(Error::Domain("threshold undefined for Delta_n = 0 or gamma2n = 0".into()));
    }
    let or2 = d.omega_rabi * d.omega_rabi;
    let sigma = d.sigma_detune;
    Ok((2.0 * mech.gamma_m * or2 * (d.gamma2n * d.gamma2n + sigma * sigma)
        / (d.s_z_eq_bar * d.gamma2n * d.delta_n * d.delta_n))
        .sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitCyclePrediction {
    pub g_crit: f64,
    pub r_s: f64,
    pub r_a: f64,
    pub s_cz: f64,
    pub omega_a: f64,
    pub f_sigma: f64,
    pub above_threshold: bool,
}

/// Closed-form limit cycle in the diagonal basis of the linearized system.
/// Below threshold the amplitudes and `s_cz` are zero and `above_threshold` is false.
pub fn limit_cycle_prediction(d: &DerivedParams, mech: &MechanicalParams, g: f64) -> Result<LimitCyclePrediction> {
    if g == 0.0 || !g.is_finite() {
        return Err(Error::invalid("g", "must be finite and nonzero"));
    }
    let g_crit = g_crit_analytic(d, mech)?;
    let sigma = d.sigma_detune;
    let omega_a = mech.gamma_m * sigma / (2.0 * d.gamma2n + mech.gamma_m);
    let f_sigma = (2.0 * sigma / (2.0 * d.gamma2n + mech.gamma_m)).atan();
    let ratio2 = g * g / (g_crit * g_crit);
    if ratio2 < 1.0 {
        return Ok(LimitCyclePrediction {
            g_crit,
            r_s: 0.0,
            r_a: 0.0,
            s_cz: 0.0,
            omega_a,
            f_sigma,
            above_threshold: false,
        });
    }
    let excess = (ratio2 - 1.0).sqrt();
    let sbar = d.s_z_eq_bar;
    Ok(LimitCyclePrediction {
        g_crit,
        r_a: (d.gamma1n * sbar / (2.0 * mech.gamma_m)).sqrt() * (g_crit / g.abs()) * excess,
        r_s: 0.5 * sbar * (d.gamma1n / d.gamma2n).sqrt() / ratio2 * excess,
        s_cz: sbar * (1.0 / ratio2 - 1.0),
        omega_a,
        f_sigma,
        above_threshold: true,
    })
}

/// Which branch points get a simulated long-time state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleMode {
    None,
    /// Only points past the first loss of stability.
    BeyondHopf,
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    pub g: f64,
    pub equilibrium: EquilibriumPoint,
    pub steady: Option<SteadyState>,
}

impl BranchPoint {
    pub fn cycle(&self) -> Option<&LimitCycleMeasurement> {
        match &self.steady {
            Some(SteadyState::LimitCycle(m)) => Some(m),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchData {
    pub points: Vec<BranchPoint>,
    /// Index of the first unstable point following a stable one.
    pub hopf_index: Option<usize>,
    /// Set when Newton failed and the branch was cut short.
    pub truncated: Option<String>,
}

impl BranchData {
    pub fn stability_changes(&self) -> usize {
        self.points
            .windows(2)
            .filter(|w| w[0].equilibrium.stable != w[1].equilibrium.stable)
            .count()
    }

    pub const CSV_HEADER: [&'static str; 24] = [
        "g",
        "stable",
        "re_s_minus",
        "im_s_minus",
        "s_z",
        "re_alpha",
        "im_alpha",
        "ev0_re",
        "ev0_im",
        "ev1_re",
        "ev1_im",
        "ev2_re",
        "ev2_im",
        "ev3_re",
        "ev3_im",
        "ev4_re",
        "ev4_im",
        "cycle",
        "cycle_s_z_min",
        "cycle_s_z_max",
        "cycle_abs_alpha_min",
        "cycle_abs_alpha_max",
        "cycle_amp_alpha",
        "cycle_freq",
    ];

    /// One row per point; cycle columns are NaN when no cycle was found.
    /// `cycle` is 1 for a limit cycle, 0 for a fixed point, -1 when
    /// undetermined and NaN when not simulated.
    pub fn csv_rows(&self) -> Vec<Vec<f64>> {
        self.points
            .iter()
            .map(|p| {
                let mut row = vec![p.g, if p.equilibrium.stable { 1.0 } else { 0.0 }];
                row.extend(p.equilibrium.state.to_array());
                for e in &p.equilibrium.eigenvalues {
                    row.push(e.re);
                    row.push(e.im);
                }
                let flag = match &p.steady {
                    Some(SteadyState::LimitCycle(_)) => 1.0,
                    Some(SteadyState::FixedPoint(_)) => 0.0,
                    Some(SteadyState::Undetermined { .. }) => -1.0,
                    None => f64::NAN,
                };
                row.push(flag);
                match p.cycle() {
                    Some(c) => row.extend([
                        c.extrema.s_z_min,
                        c.extrema.s_z_max,
                        c.extrema.abs_alpha_min,
                        c.extrema.abs_alpha_max,
                        c.amp_alpha,
                        c.freq,
                    ]),
                    None => row.extend([f64::NAN; 6]),
                }
                row
            })
            .collect()
    }
}

/// Size of the kick applied to `alpha` before simulating a branch point.
pub const BRANCH_PERTURBATION: f64 = 1e-3;

/// Natural-parameter continuation in `g`: equilibria are found sequentially
/// with warm starts, then the selected points are simulated in parallel from
/// the equilibrium displaced by [`BRANCH_PERTURBATION`] in `alpha`.
pub fn continuation_sweep(
    model: &Model,
    g_grid: &[f64],
    mode: CycleMode,
    budget: Option<SteadyStateBudget>,
) -> Result<BranchData> {
    if g_grid.is_empty() {
        return Err(Error::invalid("g_grid", "must not be empty"));
    }
    if g_grid.windows(2).any(|w| !(w[1] > w[0])) || g_grid.iter().any(|g| !g.is_finite()) {
        return Err(Error::invalid("g_grid", "must be finite and strictly increasing"));
    }
    let mut points: Vec<BranchPoint> = Vec::with_capacity(g_grid.len());
    let mut truncated = None;
    let mut warm: Option<SystemState> = None;
    for &g in g_grid {
        let m = model.with_g(g);
        let found = match warm {
            Some(s) => find_equilibrium(&m, &s).or_else(|_| equilibrium(&m)),
            None => equilibrium(&m),
        };
        match found {
            Ok(eq) => {
                warm = Some(eq.state);
                points.push(BranchPoint {
                    g,
                    equilibrium: eq,
                    steady: None,
                });
            }
            Err(e) => {
                truncated = Some(format!("Newton failed at g = {g}: {e}"));
                break;
            }
        }
    }
    let hopf_index = points
        .windows(2)
        .position(|w| w[0].equilibrium.stable && !w[1].equilibrium.stable)
        .map(|i| i + 1);

    let selected: Vec<usize> = match mode {
        CycleMode::None => Vec::new(),
        CycleMode::All => (0..points.len()).collect(),
        CycleMode::BeyondHopf => match hopf_index {
            Some(h) => (h..points.len()).collect(),
            None => Vec::new(),
        },
    };
    let results: Vec<Result<SteadyState>> = selected
        .par_iter()
        .map(|&i| {
            let p = &points[i];
            let m = model.with_g(p.g);
            let b = budget.unwrap_or_else(|| SteadyStateBudget::for_model(&m));
            let mut start = p.equilibrium.state;
            start.alpha += BRANCH_PERTURBATION;
            steady_state(&m, &start, &b)
        })
        .collect();
    for (i, r) in selected.into_iter().zip(results) {
        points[i].steady = Some(r?);
    }
    Ok(BranchData {
        points,
        hopf_index,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::QubitParams;
    use proptest::prelude::*;

    fn model(delta: f64, delta_n: f64, g: f64, gamma_m: f64) -> Model {
        Model::new(
            delta,
            delta_n,
            QubitParams {
                gamma1: 0.001,
                gamma2: 0.001,
                sigma_z_eq: -1.0,
            },
            MechanicalParams {
                omega_m: delta.hypot(delta_n),
                gamma_m,
                g,
            },
        )
        .unwrap()
    }

    #[test]
    fn uncoupled_equilibrium_is_bloch_steady_state() {
        let m = model(-0.1, 0.1, 0.0, 1e-4);
        let eq = equilibrium(&m).unwrap();
        let (s, z) = m.bloch_steady_state(-0.1);
        assert!((eq.state.s_minus - s).norm() < 1e-14);
        assert!((eq.state.s_z - z).abs() < 1e-14);
        assert_eq!(eq.state.alpha, Complex64::new(0.0, 0.0));
        assert!(eq.stable);
    }

    #[test]
    fn closed_form_without_gap() {
        let m = model(-0.1, 0.0, 0.02, 1e-4);
        let eq = find_equilibrium(&m, &SystemState::new(Complex64::new(0.01, 0.0), -0.5, Complex64::new(0.0, 0.0)))
            .unwrap();
        let expected = -0.02 * -1.0 / Complex64::new(2.0 * 0.1, -1e-4);
        assert!((eq.state.alpha - expected).norm() < 1e-12);
        assert!((eq.state.s_z + 1.0).abs() < 1e-12);
        assert!(eq.state.s_minus.norm() < 1e-12);
    }

    #[test]
    fn coupled_equilibrium_residual() {
        let m = model(-0.1, 0.1, 0.003, 1e-4);
        let eq = equilibrium(&m).unwrap();
        assert!(eq.residual_norm < RESIDUAL_TOL);
        let mut f = [0.0; 5];
        m.rhs_real(&eq.state.to_array(), &mut f);
        assert!(f.iter().all(|v| v.abs() < RESIDUAL_TOL));
    }

    #[test]
    fn newton_failure_carries_best_iterate() {
        // Without any decay the equilibria form a continuum and the Jacobian is singular.
        let m = Model::new(
            0.0,
            0.0,
            QubitParams {
                gamma1: 0.0,
                gamma2: 0.0,
                sigma_z_eq: -1.0,
            },
            MechanicalParams {
                omega_m: 0.1,
                gamma_m: 0.0,
                g: 0.0,
            },
        )
        .unwrap();
        let guess = SystemState::new(Complex64::new(0.1, 0.1), 0.3, Complex64::new(0.2, 0.0));
        assert!(matches!(find_equilibrium(&m, &guess), Err(Error::Newton { .. })));
    }

    #[test]
    fn hopf_at_zero_without_mechanical_damping() {
        let m = model(-0.1, 0.1, 0.0, 0.0);
        let h = hopf_threshold(&m, (0.0, 0.01)).unwrap();
        assert!(h.g_c.abs() < 1e-8, "{h:?}");
    }

    #[test]
    fn hopf_matches_analytic_threshold() {
        let m = model(-0.1, 0.1, 0.0, 1e-5);
        let gc = g_crit_analytic(&m.derived().unwrap(), &m.mech).unwrap();
        let h = hopf_threshold(&m, (0.2 * gc, 3.0 * gc)).unwrap();
        assert!((h.g_c / gc - 1.0).abs() < 0.05, "{} vs {gc}", h.g_c);
        assert!(h.crossing_slope > 0.0);
        assert!((h.omega_hopf - m.mech.omega_m).abs() < 0.01 * m.mech.omega_m);
    }

    #[test]
    fn red_detuned_has_no_hopf() {
        let m = model(0.1, 0.1, 0.0, 1e-5);
        assert!(matches!(hopf_threshold(&m, (1e-5, 0.05)), Err(Error::HopfNotFound { .. })));
        assert!(matches!(
            g_crit_analytic(&m.derived().unwrap(), &m.mech),
            Err(Error::NoInstability { .. })
        ));
    }

    #[test]
    fn threshold_limits() {
        let m = model(-0.1, 0.1, 0.002, 0.0);
        let d = m.derived().unwrap();
        assert_eq!(g_crit_analytic(&d, &m.mech).unwrap(), 0.0);

        let m = model(-0.1, 0.1, 0.002, 1e-4);
        let d = m.derived().unwrap();
        let gc = g_crit_analytic(&d, &m.mech).unwrap();
        let p = limit_cycle_prediction(&d, &m.mech, gc * (1.0 + 1e-12)).unwrap();
        assert!(p.above_threshold);
        assert!(p.r_a < 1e-5 && p.r_s < 1e-5 && p.s_cz.abs() < 1e-10);
        // Resonant: sigma = 0.
        assert!(p.omega_a.abs() < 1e-15 && p.f_sigma.abs() < 1e-12);
        let below = limit_cycle_prediction(&d, &m.mech, 0.5 * gc).unwrap();
        assert!(!below.above_threshold);
        assert_eq!((below.r_a, below.r_s, below.s_cz), (0.0, 0.0, 0.0));
        assert!(limit_cycle_prediction(&d, &m.mech, 0.0).is_err());
    }

    #[test]
    fn continuation_below_threshold_is_all_stable() {
        let m = model(-0.1, 0.1, 0.0, 1e-4);
        let gc = g_crit_analytic(&m.derived().unwrap(), &m.mech).unwrap();
        let grid: Vec<f64> = (1..=8).map(|k| gc * 0.1 * k as f64).collect();
        let b = continuation_sweep(&m, &grid, CycleMode::BeyondHopf, None).unwrap();
        assert!(b.points.iter().all(|p| p.equilibrium.stable));
        assert!(b.hopf_index.is_none());
        assert!(b.points.iter().all(|p| p.steady.is_none()));
        assert_eq!(b.csv_rows().len(), 8);
    }

    #[test]
    fn continuation_rejects_unsorted_grid() {
        let m = model(-0.1, 0.1, 0.0, 1e-4);
        assert!(continuation_sweep(&m, &[0.1, 0.05], CycleMode::None, None).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn spectrum_is_closed_under_conjugation(delta in -0.2f64..0.2, dn in 0.02f64..0.2, g in 0.0f64..0.01) {
            prop_assume!(delta.abs() > 1e-3);
            let m = model(delta, dn, g, 1e-4);
            let eq = equilibrium(&m).unwrap();
            for z in &eq.eigenvalues {
                let partner = eq.eigenvalues.iter().any(|w| (w - z.conj()).norm() <= 1e-9 * (1.0 + z.norm()));
                prop_assert!(partner);
            }
            prop_assert_eq!(eq.stable, eq.eigenvalues.iter().all(|z| z.re < 0.0));
        }

        #[test]
        fn sigma_zero_minimizes_threshold(delta in -0.2f64..-0.01, dn in 0.02f64..0.2, s in 1e-4f64..0.05) {
            let base = model(delta, dn, 0.001, 1e-4);
            let d0 = base.derived().unwrap();
            let gc0 = g_crit_analytic(&d0, &base.mech).unwrap();
            for sign in [-1.0, 1.0] {
                let m = base.with_omega_m(base.mech.omega_m + sign * s);
                let gc = g_crit_analytic(&m.derived().unwrap(), &m.mech).unwrap();
                prop_assert!(gc > gc0);
            }
        }
    }
}
