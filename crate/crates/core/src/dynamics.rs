//! Time integration of the equations of motion and estimators that turn
//! trajectories into damping rates, frequencies and limit-cycle measurements.

use std::f64::consts::{PI, TAU};
use std::io::{self, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::export::CsvWriter;
use crate::fit::linear_fit;
use crate::model::{Model, SystemState};
use crate::ode::{self, SampleGrid, SolverOptions, Tolerance};
use crate::{Error, Result};

/// Minimum number of samples per shortest oscillation period.
pub const SAMPLES_PER_PERIOD: f64 = 32.0;
/// Default fraction of a trajectory discarded as transient.
pub const DEFAULT_TRANSIENT_FRACTION: f64 = 0.5;
/// Minimum number of periods a ring-down must span.
pub const MIN_RINGDOWN_PERIODS: f64 = 50.0;
/// Minimum number of cycles in a window for a converged limit-cycle measurement.
pub const MIN_CYCLES: usize = 100;
/// Maximum cycle-to-cycle amplitude variation of a converged limit cycle.
pub const CYCLE_VARIATION_TOL: f64 = 0.01;

pub const CSV_HEADER: [&str; 6] = ["t", "re_s_minus", "im_s_minus", "s_z", "re_alpha", "im_alpha"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStats {
    pub accepted: u64,
    pub rejected: u64,
    pub rhs_evals: u64,
    pub tol: Tolerance,
}

/// Uniformly sampled solution of the equations of motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<SystemState>,
    pub stats: TrajectoryStats,
    /// Time reached by the integrator (the end of the span on success).
    pub end_time: f64,
    /// State at `end_time`, whether or not it lies on the sample grid.
    pub end_state: SystemState,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn alpha(&self) -> Vec<Complex64> {
        self.states.iter().map(|s| s.alpha).collect()
    }

    pub fn write_csv<W: Write>(&self, out: W, comment: Option<&str>) -> io::Result<W> {
        let mut w = CsvWriter::new(out, comment, &CSV_HEADER)?;
        for (t, s) in self.times.iter().zip(&self.states) {
            let [a, b, c, d, e] = s.to_array();
            w.row(&[*t, a, b, c, d, e])?;
        }
        w.into_inner()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrateOptions {
    pub tol: Tolerance,
    pub sample_dt: f64,
    /// Samples before this time are not stored (defaults to the span start).
    pub record_from: Option<f64>,
    pub max_steps: u64,
}

impl IntegrateOptions {
    pub fn new(tol: Tolerance, sample_dt: f64) -> Self {
        Self {
            tol,
            sample_dt,
            record_from: None,
            max_steps: SolverOptions::default().max_steps,
        }
    }

    pub fn record_from(mut self, t: f64) -> Self {
        self.record_from = Some(t);
        self
    }
}

/// Sampling interval giving [`SAMPLES_PER_PERIOD`] samples per period of the
/// faster of the mechanical and Rabi oscillations.
pub fn recommended_sample_dt(model: &Model) -> f64 {
    let fastest = model.mech.omega_m.max(model.rabi_magnitude());
    TAU / (SAMPLES_PER_PERIOD * fastest)
}

/// Integrates from `state0` over `t_span`, sampled every `sample_dt`.
pub fn integrate(
    model: &Model,
    state0: &SystemState,
    t_span: (f64, f64),
    tol: Tolerance,
    sample_dt: f64,
) -> Result<Trajectory> {
    integrate_with(model, state0, t_span, &IntegrateOptions::new(tol, sample_dt))
}

pub fn integrate_with(
    model: &Model,
    state0: &SystemState,
    t_span: (f64, f64),
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    let (t0, t1) = t_span;
    if !(t0.is_finite() && t1.is_finite() && t1 > t0) {
        return Err(Error::invalid("t_span", "requires finite t1 > t0"));
    }
    for (name, v) in [("tol.rel", opts.tol.rel), ("tol.abs", opts.tol.abs)] {
        if !(v > 0.0 && v <= 1e-2) {
            return Err(Error::invalid(name, format!("must lie in (0, 1e-2], got {v}")));
        }
    }
    if !(opts.sample_dt > 0.0 && opts.sample_dt.is_finite()) {
        return Err(Error::invalid("sample_dt", "must be positive"));
    }
    if !state0.is_finite() {
        return Err(Error::invalid("state0", "must be finite"));
    }

    let from = opts.record_from.unwrap_or(t0).max(t0);
    let grid = SampleGrid::covering(t0, t1, opts.sample_dt, from);
    let mut times = Vec::with_capacity(grid.count);
    let mut states = Vec::with_capacity(grid.count);
    let solver = SolverOptions {
        tol: opts.tol,
        max_steps: opts.max_steps,
        ..SolverOptions::default()
    };
    let sys = |_t: f64, y: &[f64; 5], dy: &mut [f64; 5]| model.rhs_real(y, dy);
    let result = ode::integrate_sampled(&sys, t0, &state0.to_array(), t1, &grid, &solver, |t, y| {
        times.push(t);
        states.push(SystemState::from_array(y));
    });
    match result {
        Ok((y, st)) => Ok(Trajectory {
            times,
            states,
            stats: TrajectoryStats {
                accepted: st.accepted,
                rejected: st.rejected,
                rhs_evals: st.rhs_evals,
                tol: opts.tol,
            },
            end_time: t1,
            end_state: SystemState::from_array(&y),
        }),
        Err(fail) => {
            // Keep only finite samples in the partial result.
            let keep = states.iter().take_while(|s| s.is_finite()).count();
            times.truncate(keep);
            states.truncate(keep);
            let partial = Trajectory {
                times,
                states,
                stats: TrajectoryStats {
                    accepted: fail.stats.accepted,
                    rejected: fail.stats.rejected,
                    rhs_evals: fail.stats.rhs_evals,
                    tol: opts.tol,
                },
                end_time: fail.t,
                end_state: SystemState::from_array(&fail.y),
            };
            Err(Error::Integration {
                t: fail.t,
                reason: fail.reason,
                partial: Box::new(partial),
            })
        }
    }
}

/// Effective damping and frequency of a freely evolving oscillation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RingdownFit {
    /// Energy decay rate: `|alpha - centre|` decays as `exp(-gamma_eff t / 2)`.
    pub gamma_eff: f64,
    /// Rotation rate for `alpha ~ exp(-i omega_eff t)`.
    pub omega_eff: f64,
    /// RMS residual of the log-envelope line fit.
    pub residual: f64,
    /// Centre the oscillation winds around.
    pub centre: Complex64,
}

pub fn ringdown_fit(traj: &Trajectory) -> Result<RingdownFit> {
    ringdown_fit_series(&traj.times, &traj.alpha())
}

/// Fits `alpha(t) = c + A exp((-gamma/2 - i omega) t)` to uniformly sampled data.
///
/// The centre `c` comes from a one-pole linear prediction, `omega` from a
/// regression of the unwrapped phase and `gamma` from a regression of the log
/// of the envelope obtained by demodulating at `omega` and averaging over
/// one-period blocks.
pub fn ringdown_fit_series(times: &[f64], alpha: &[Complex64]) -> Result<RingdownFit> {
    let n = times.len();
    if n != alpha.len() || n < 16 {
        return Err(Error::Estimation(format!("need at least 16 samples, got {n}")));
    }
    let dt = uniform_step(times)?;

    let centre = one_pole_centre(alpha)
        .ok_or_else(|| Error::Estimation("signal is not oscillatory".into()))?;
    let z: Vec<Complex64> = alpha.iter().map(|a| a - centre.0).collect();
    let rough = -centre.1.arg() / dt;
    let span = times[n - 1] - times[0];
    if !(rough.abs() * dt < 0.9 * PI) {
        return Err(Error::Estimation("oscillation is undersampled".into()));
    }
    let periods = rough.abs() * span / TAU;
    if periods < MIN_RINGDOWN_PERIODS {
        return Err(Error::Estimation(format!(
            "trajectory spans {periods:.1} periods, need {MIN_RINGDOWN_PERIODS}"
        )));
    }
    if z.iter().any(|v| v.norm() == 0.0 || !v.is_finite()) {
        return Err(Error::Estimation("signal passes through its centre".into()));
    }

    let phase = unwrap_phase(&z);
    let pfit = linear_fit(times, &phase)
        .ok_or_else(|| Error::Estimation("degenerate phase regression".into()))?;
    let omega = -pfit.slope;

    let block = ((TAU / (omega.abs() * dt)).round() as usize).max(1);
    let blocks = n / block;
    if blocks < 3 {
        return Err(Error::Estimation("too few demodulation blocks".into()));
    }
    let mut tc = Vec::with_capacity(blocks);
    let mut log_env = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let range = b * block..(b + 1) * block;
        let t0 = times[range.start];
        let mut acc = Complex64::new(0.0, 0.0);
        let mut tsum = 0.0;
        for k in range {
            let rel = times[k] - t0;
            acc += z[k] * Complex64::from_polar(1.0, omega * rel);
            tsum += times[k];
        }
        let env = acc.norm() / block as f64;
        if !(env > 0.0) {
            return Err(Error::Estimation("envelope vanished".into()));
        }
        tc.push(tsum / block as f64);
        log_env.push(env.ln());
    }
    let efit = linear_fit(&tc, &log_env)
        .ok_or_else(|| Error::Estimation("degenerate envelope regression".into()))?;
    Ok(RingdownFit {
        gamma_eff: -2.0 * efit.slope,
        omega_eff: omega,
        residual: efit.rms,
        centre: centre.0,
    })
}

fn uniform_step(times: &[f64]) -> Result<f64> {
    let n = times.len();
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    if !(dt > 0.0) {
        return Err(Error::Estimation("times must be increasing".into()));
    }
    for w in times.windows(2) {
        if ((w[1] - w[0]) - dt).abs() > 1e-6 * dt {
            return Err(Error::Estimation("samples must be uniformly spaced".into()));
        }
    }
    Ok(dt)
}

/// Least-squares fit of `x_{k+1} = a x_k + b`; returns the fixed point
/// `b / (1 - a)` and the pole `a`.
fn one_pole_centre(x: &[Complex64]) -> Option<(Complex64, Complex64)> {
    let n = x.len();
    let mean = x.iter().sum::<Complex64>() / n as f64;
    let (mut sxx, mut sx, mut sxy, mut sy) = (0.0, Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    for k in 0..n - 1 {
        let u = x[k] - mean;
        let v = x[k + 1] - mean;
        sxx += u.norm_sqr();
        sx += u;
        sxy += u.conj() * v;
        sy += v;
    }
    let m = (n - 1) as f64;
    // [sxx  conj(sx)] [a]   [sxy]
    // [sx   m       ] [b] = [sy ]
    let det = sxx * m - sx.norm_sqr();
    if !(det > 0.0) {
        return None;
    }
    let a = (sxy * m - sx.conj() * sy) / det;
    let b = (sy * sxx - sx * sxy) / det;
    let one_minus = Complex64::new(1.0, 0.0) - a;
    if !(one_minus.norm() > 1e-12) || !a.is_finite() {
        return None;
    }
    Some((mean + b / one_minus, a))
}

fn unwrap_phase(z: &[Complex64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(z.len());
    let mut acc = z[0].arg();
    out.push(acc);
    for w in z.windows(2) {
        acc += (w[1] * w[0].conj()).arg();
        out.push(acc);
    }
    out
}

/// Extremes of the observables over a measured window.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CycleExtrema {
    pub s_z_min: f64,
    pub s_z_max: f64,
    pub abs_alpha_min: f64,
    pub abs_alpha_max: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitCycleMeasurement {
    /// RMS radius of `alpha` about its cycle mean, averaged over cycles.
    pub amp_alpha: f64,
    /// Same for `s_-`.
    pub amp_s_minus: f64,
    pub mean_s_z: f64,
    pub mean_alpha: Complex64,
    /// Positive rotation rate of `alpha` about its mean.
    pub freq: f64,
    /// Number of complete cycles in the measured window.
    pub cycles: usize,
    /// `(max - min) / mean` of the per-cycle amplitudes.
    pub amp_variation: f64,
    pub extrema: CycleExtrema,
    pub converged: bool,
}

/// Measures the oscillation left after discarding the leading
/// `transient_fraction` of the samples.
///
/// Cycles are delimited by upward zero crossings of `Re(alpha - mean)`. Each
/// cycle contributes the RMS radius of `alpha` about the window mean, which
/// equals the radius for a circular orbit regardless of where the centre lies.
/// An orbit that has collapsed onto its centre counts as converged with zero
/// amplitude.
pub fn limit_cycle_measure(traj: &Trajectory, transient_fraction: f64) -> Result<LimitCycleMeasurement> {
    if !(0.0..1.0).contains(&transient_fraction) {
        return Err(Error::invalid("transient_fraction", "must lie in [0, 1)"));
    }
    let start = ((traj.len() as f64) * transient_fraction).ceil() as usize;
    let times = &traj.times[start.min(traj.len())..];
    let states = &traj.states[start.min(traj.len())..];
    if times.len() < 8 {
        return Err(Error::Estimation("measurement window holds fewer than 8 samples".into()));
    }
    uniform_step(times)?;

    let mut extrema = CycleExtrema {
        s_z_min: f64::INFINITY,
        s_z_max: f64::NEG_INFINITY,
        abs_alpha_min: f64::INFINITY,
        abs_alpha_max: f64::NEG_INFINITY,
    };
    for s in states {
        extrema.s_z_min = extrema.s_z_min.min(s.s_z);
        extrema.s_z_max = extrema.s_z_max.max(s.s_z);
        extrema.abs_alpha_min = extrema.abs_alpha_min.min(s.alpha.norm());
        extrema.abs_alpha_max = extrema.abs_alpha_max.max(s.alpha.norm());
    }

    let window_mean = states.iter().map(|s| s.alpha).sum::<Complex64>() / states.len() as f64;
    let crossings = upward_crossings(times, states, window_mean);

    let (lo, hi) = if crossings.len() >= 2 {
        (crossings[0].0, crossings[crossings.len() - 1].0)
    } else {
        (0, states.len())
    };
    let body = &states[lo..hi];
    let nb = body.len() as f64;
    let mean_alpha = body.iter().map(|s| s.alpha).sum::<Complex64>() / nb;
    let mean_s = body.iter().map(|s| s.s_minus).sum::<Complex64>() / nb;
    let mean_s_z = body.iter().map(|s| s.s_z).sum::<f64>() / nb;

    let max_dev = states
        .iter()
        .map(|s| (s.alpha - mean_alpha).norm())
        .fold(0.0, f64::max);
    let floor = 1e-9 * (1.0 + mean_alpha.norm());

    let rms = |xs: &[SystemState], f: &dyn Fn(&SystemState) -> f64| -> f64 {
        (xs.iter().map(|s| f(s).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
    };

    let freq_guess = if crossings.len() >= 2 {
        TAU * (crossings.len() - 1) as f64 / (crossings[crossings.len() - 1].1 - crossings[0].1)
    } else {
        0.0
    };
    let phase_freq = {
        let z: Vec<Complex64> = body.iter().map(|s| s.alpha - mean_alpha).collect();
        if z.len() >= 2 && z.iter().all(|v| v.norm() > 0.0) {
            linear_fit(&times[lo..hi], &unwrap_phase(&z)).map(|f| f.slope.abs())
        } else {
            None
        }
    };
    let freq = match phase_freq {
        Some(f) if freq_guess == 0.0 || (f - freq_guess).abs() <= 0.1 * freq_guess => f,
        _ => freq_guess,
    };

    if max_dev <= floor {
        return Ok(LimitCycleMeasurement {
            amp_alpha: rms(body, &|s| (s.alpha - mean_alpha).norm()),
            amp_s_minus: rms(body, &|s| (s.s_minus - mean_s).norm()),
            mean_s_z,
            mean_alpha,
            freq,
            cycles: crossings.len().saturating_sub(1),
            amp_variation: 0.0,
            extrema,
            converged: true,
        });
    }

    if crossings.len() < 2 {
        return Ok(LimitCycleMeasurement {
            amp_alpha: rms(body, &|s| (s.alpha - mean_alpha).norm()),
            amp_s_minus: rms(body, &|s| (s.s_minus - mean_s).norm()),
            mean_s_z,
            mean_alpha,
            freq,
            cycles: 0,
            amp_variation: f64::INFINITY,
            extrema,
            converged: false,
        });
    }

    let mut amps = Vec::with_capacity(crossings.len() - 1);
    let mut s_amps = Vec::with_capacity(crossings.len() - 1);
    for w in crossings.windows(2) {
        let cyc = &states[w[0].0..w[1].0];
        amps.push(rms(cyc, &|s| (s.alpha - mean_alpha).norm()));
        s_amps.push(rms(cyc, &|s| (s.s_minus - mean_s).norm()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let amp_alpha = mean(&amps);
    let (amin, amax) = amps
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let amp_variation = (amax - amin) / amp_alpha;
    let cycles = amps.len();
    Ok(LimitCycleMeasurement {
        amp_alpha,
        amp_s_minus: mean(&s_amps),
        mean_s_z,
        mean_alpha,
        freq,
        cycles,
        amp_variation,
        extrema,
        converged: cycles >= MIN_CYCLES && amp_variation < CYCLE_VARIATION_TOL,
    })
}

/// Indices and interpolated times where `Re(alpha - centre)` crosses zero upwards.
fn upward_crossings(times: &[f64], states: &[SystemState], centre: Complex64) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    for k in 1..states.len() {
        let a = states[k - 1].alpha.re - centre.re;
        let b = states[k].alpha.re - centre.re;
        if a < 0.0 && b >= 0.0 {
            let frac = -a / (b - a);
            out.push((k, times[k - 1] + frac * (times[k] - times[k - 1])));
        }
    }
    out
}

/// Settings for [`steady_state`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateBudget {
    /// Length of one observation window.
    pub window: f64,
    pub max_windows: usize,
    pub tol: Tolerance,
    pub sample_dt: f64,
    /// RMS state variation below which a window counts as stationary.
    pub fixed_point_floor: f64,
    /// Relative window-to-window change below which a variation has plateaued.
    pub plateau_tol: f64,
}

impl SteadyStateBudget {
    /// Windows of at least 200 mechanical periods and two damping times.
    pub fn for_model(model: &Model) -> Self {
        let periods = 200.0 * TAU / model.mech.omega_m;
        let damping = if model.mech.gamma_m > 0.0 {
            2.0 / model.mech.gamma_m
        } else {
            0.0
        };
        Self {
            window: periods.max(damping),
            max_windows: 400,
            tol: Tolerance::new(1e-10, 1e-12),
            sample_dt: recommended_sample_dt(model),
            fixed_point_floor: 1e-9,
            plateau_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SteadyState {
    FixedPoint(SystemState),
    LimitCycle(LimitCycleMeasurement),
    Undetermined { windows: usize, last_variation: f64 },
}

/// Integrates window by window until the state either stops moving or settles
/// on an oscillation of constant size.
///
/// Each window is summarized by the RMS distance of the state from the window
/// mean. A sequence of these variations that shrinks geometrically towards
/// zero (Aitken extrapolation) marks a fixed point; one whose relative change
/// stays below `plateau_tol` for three windows marks a limit cycle, which is
/// then measured on the last window.
pub fn steady_state(model: &Model, state0: &SystemState, budget: &SteadyStateBudget) -> Result<SteadyState> {
    if !state0.is_finite() {
        return Err(Error::invalid("state0", "must be finite"));
    }
    if !(budget.window > 0.0 && budget.max_windows > 0) {
        return Err(Error::invalid("budget", "window and max_windows must be positive"));
    }
    let opts = IntegrateOptions::new(budget.tol, budget.sample_dt);
    let mut state = *state0;
    let mut t = 0.0;
    let mut history: Vec<f64> = Vec::new();
    let mut plateau_run = 0usize;

    for w in 0..budget.max_windows {
        let traj = integrate_with(model, &state, (t, t + budget.window), &opts)?;
        state = traj.end_state;
        t += budget.window;
        let v = window_variation(&traj.states);
        if v <= budget.fixed_point_floor {
            return Ok(SteadyState::FixedPoint(state));
        }
        history.push(v);
        let k = history.len();
        if k >= 3 {
            let (v0, v1, v2) = (history[k - 3], history[k - 2], history[k - 1]);
            let d1 = v1 - v0;
            let d2 = v2 - v1;
            // Aitken limit of a geometrically converging sequence.
            if d1 < 0.0 && d2 < 0.0 && d2 > d1 {
                let q = d2 / d1;
                let limit = v2 + d2 * q / (1.0 - q);
                if limit.abs() < 0.01 * v2 {
                    return Ok(SteadyState::FixedPoint(state));
                }
            }
            if d2.abs() < budget.plateau_tol * v2 {
                plateau_run += 1;
            } else {
                plateau_run = 0;
            }
            if plateau_run >= 3 {
                let m = limit_cycle_measure(&traj, 0.0)?;
                if m.converged {
                    return Ok(SteadyState::LimitCycle(m));
                }
            }
        }
        if w + 1 == budget.max_windows {
            return Ok(SteadyState::Undetermined {
                windows: budget.max_windows,
                last_variation: v,
            });
        }
    }
    unreachable!("loop returns on the last window")
}

fn window_variation(states: &[SystemState]) -> f64 {
    if states.is_empty() {
        return 0.0;
    }
    let n = states.len() as f64;
    let mut mean = [0.0; 5];
    for s in states {
        for (m, v) in mean.iter_mut().zip(s.to_array()) {
            *m += v / n;
        }
    }
    let ss: f64 = states
        .iter()
        .map(|s| {
            s.to_array()
                .iter()
                .zip(&mean)
                .map(|(v, m)| (v - m).powi(2))
                .sum::<f64>()
        })
        .sum();
    (ss / n).sqrt()
}
