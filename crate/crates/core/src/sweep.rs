//! Large-grid data products: the flux-space map of the damping correction
//! summed over multi-photon resonances, and the `(delta, omega)` response surface.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::export::{csv_string, Sidecar};
use crate::model::{derive_rotating_frame, derive_secondary, DriveParams, Model, ModelConfig};
use crate::response::chi_z;
use crate::{Complex64, Error, Result};

/// Evenly spaced axis `lo + i (hi - lo) / (count - 1)`. Refining by
/// `count -> 2 count - 1` reproduces every shared coordinate bit for bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisSpec {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

impl AxisSpec {
    pub fn new(lo: f64, hi: f64, count: usize) -> Self {
        Self { lo, hi, count }
    }

    pub fn validate(&self, name: &'static str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.hi > self.lo) {
            return Err(Error::invalid(name, "range must be finite with lo < hi"));
        }
        if self.count < 2 {
            return Err(Error::invalid(name, "count must be at least 2"));
        }
        Ok(())
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / (self.count - 1) as f64
    }

    pub fn value(&self, i: usize) -> f64 {
        if i + 1 == self.count {
            self.hi
        } else {
            self.lo + i as f64 * self.step()
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.value(i)).collect()
    }
}

/// Flux-space grid: DC bias on `x`, AC amplitude on `y`, both as angular frequencies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxGridSpec {
    pub phi_e0: AxisSpec,
    pub phi_e1: AxisSpec,
    /// Highest multi-photon index included.
    pub n_max: u32,
}

impl FluxGridSpec {
    pub fn validate(&self) -> Result<()> {
        self.phi_e0.validate("phi_e0")?;
        self.phi_e1.validate("phi_e1")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub name: String,
    /// Row-major with `y` outer: index `iy * nx + ix`.
    pub values: Vec<f64>,
}

/// Extremal values of one layer, for presentation scaling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub min: f64,
    pub max: f64,
    pub max_abs: f64,
}

impl Normalization {
    fn of(values: &[f64]) -> Self {
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for &v in values.iter().filter(|v| v.is_finite()) {
            min = min.min(v);
            max = max.max(v);
        }
        if min > max {
            (min, max) = (f64::NAN, f64::NAN);
        }
        Self {
            min,
            max,
            max_abs: min.abs().max(max.abs()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapTile {
    pub x_name: String,
    pub x: Vec<f64>,
    pub y_name: String,
    pub y: Vec<f64>,
    pub layers: Vec<Layer>,
    pub normalization: Vec<Normalization>,
}

/// Axis and normalization metadata for the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TileMeta<P: Serialize> {
    pub x_name: String,
    pub x_count: usize,
    pub x_first: f64,
    pub x_last: f64,
    pub y_name: String,
    pub y_count: usize,
    pub y_first: f64,
    pub y_last: f64,
    pub layers: Vec<String>,
    pub normalization: Vec<Normalization>,
    pub parameters: P,
}

impl MapTile {
    fn assemble(x_name: &str, x: Vec<f64>, y_name: &str, y: Vec<f64>, names: &[&str], rows: Vec<Vec<Vec<f64>>>) -> Self {
        let nx = x.len();
        let mut layers: Vec<Layer> = names
            .iter()
            .map(|n| Layer {
                name: (*n).to_owned(),
                values: Vec::with_capacity(nx * y.len()),
            })
            .collect();
        for row in rows {
            for point in row {
                for (layer, v) in layers.iter_mut().zip(point) {
                    layer.values.push(v);
                }
            }
        }
        let normalization = layers.iter().map(|l| Normalization::of(&l.values)).collect();
        Self {
            x_name: x_name.to_owned(),
            x,
            y_name: y_name.to_owned(),
            y,
            layers,
            normalization,
        }
    }

    pub fn nx(&self) -> usize {
        self.x.len()
    }

    pub fn ny(&self) -> usize {
        self.y.len()
    }

    pub fn layer(&self, name: &str) -> Option<&Layer> {
        self.layers.iter().find(|l| l.name == name)
    }

    pub fn at(&self, layer: usize, ix: usize, iy: usize) -> f64 {
        self.layers[layer].values[iy * self.nx() + ix]
    }

    pub fn header(&self) -> Vec<&str> {
        let mut h = vec![self.x_name.as_str(), self.y_name.as_str()];
        h.extend(self.layers.iter().map(|l| l.name.as_str()));
        h
    }

    /// Long-format CSV: one row per grid point, `x` fastest.
    pub fn to_csv(&self, comment: Option<&str>) -> String {
        let mut rows = Vec::with_capacity(self.nx() * self.ny());
        for (iy, &y) in self.y.iter().enumerate() {
            for (ix, &x) in self.x.iter().enumerate() {
                let mut r = vec![x, y];
                r.extend(self.layers.iter().map(|l| l.values[iy * self.nx() + ix]));
                rows.push(r);
            }
        }
        csv_string(comment, &self.header(), &rows)
    }

    pub fn meta<P: Serialize>(&self, parameters: P) -> TileMeta<P> {
        TileMeta {
            x_name: self.x_name.clone(),
            x_count: self.nx(),
            x_first: self.x[0],
            x_last: self.x[self.nx() - 1],
            y_name: self.y_name.clone(),
            y_count: self.ny(),
            y_first: self.y[0],
            y_last: self.y[self.ny() - 1],
            layers: self.layers.iter().map(|l| l.name.clone()).collect(),
            normalization: self.normalization.clone(),
            parameters,
        }
    }

    pub fn sidecar<P: Serialize>(&self, kind: &str, data_file: &str, csv: &str, parameters: P) -> Sidecar<TileMeta<P>> {
        Sidecar::new(kind, data_file, csv.as_bytes(), self.meta(parameters))
    }
}

/// Resonance window containing the DC bias: the `n` with
/// `|eps0_phi_e0 - n omega_d| <= omega_d / 2`, ties going to the lower `n`.
pub fn resonance_window(eps0_phi_e0: f64, omega_drive: f64, n_max: u32) -> Option<u32> {
    let u = eps0_phi_e0 / omega_drive;
    if !(u >= -0.5) {
        return None;
    }
    let n = (u - 0.5).ceil().max(0.0);
    if n > f64::from(n_max) {
        None
    } else {
        Some(n as u32)
    }
}

/// Damping correction `gamma_m~ - gamma_m = -g Im chi_z(omega_m)` at one flux
/// point, using only the `n`-photon term whose window contains the bias.
/// Returns `(correction, window)`; the correction is zero outside every window
/// and when the qubit is fully degenerate (`delta_n = Delta_n = 0`).
pub fn damping_correction(eps0_phi_e0: f64, eps0_phi_e1: f64, base: &ModelConfig, n_max: u32) -> Result<(f64, Option<u32>)> {
    let Some(n) = resonance_window(eps0_phi_e0, base.drive.omega_drive, n_max) else {
        return Ok((0.0, None));
    };
    let drive = DriveParams {
        eps0_phi_e0,
        eps0_phi_e1,
        n_photon: n,
        ..base.drive
    };
    let (delta, delta_n) = derive_rotating_frame(&drive)?;
    if delta == 0.0 && delta_n == 0.0 {
        return Ok((0.0, Some(n)));
    }
    let d = derive_secondary(delta, delta_n, &base.qubit, &base.mech)?;
    let chi = chi_z(base.mech.omega_m, &d)?;
    // Adding +0 clears the signed zero at the window centre.
    Ok((-base.mech.g * chi.im + 0.0, Some(n)))
}

/// Layer names of [`damping_map`].
pub const DAMPING_LAYERS: [&str; 2] = ["delta_gamma_m", "window_n"];

/// Damping-correction map over the flux grid. `window_n` is the multi-photon
/// index used at each point (`-1` outside every window).
pub fn damping_map(spec: &FluxGridSpec, base: &ModelConfig) -> Result<MapTile> {
    spec.validate()?;
    base.validate()?;
    let xs = spec.phi_e0.values();
    let ys = spec.phi_e1.values();
    let rows: Vec<Vec<Vec<f64>>> = ys
        .par_iter()
        .map(|&y| {
            xs.iter()
                .map(|&x| {
                    let (v, n) = damping_correction(x, y, base, spec.n_max)?;
                    Ok(vec![v, n.map_or(-1.0, f64::from)])
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(MapTile::assemble("eps0_phi_e0", xs, "eps0_phi_e1", ys, &DAMPING_LAYERS, rows))
}

/// Layer names of [`response_surface`].
pub const RESPONSE_LAYERS: [&str; 4] = ["abs_chi", "arg_chi", "re_chi", "im_chi"];

/// `chi_z(omega)` tabulated over detuning (`x`) and probe frequency (`y`) for the
/// qubit of `base`; `base.delta` is replaced by each grid detuning.
pub fn response_surface(base: &Model, deltas: &[f64], omegas: &[f64]) -> Result<MapTile> {
    if deltas.is_empty() || omegas.is_empty() {
        return Err(Error::invalid("grid", "axes must not be empty"));
    }
    if deltas.iter().chain(omegas).any(|v| !v.is_finite()) {
        return Err(Error::invalid("grid", "axes must be finite"));
    }
    let rows: Vec<Vec<Vec<f64>>> = omegas
        .par_iter()
        .map(|&w| {
            deltas
                .iter()
                .map(|&delta| {
                    if delta == 0.0 && base.delta_n == 0.0 {
                        return Ok(vec![0.0; 4]);
                    }
                    let d = derive_secondary(delta, base.delta_n, &base.qubit, &base.mech)?;
                    // Adding +0 clears signed zeros so that arg(0) = 0.
                    let c = chi_z(w, &d)?;
                    let c = Complex64::new(c.re + 0.0, c.im + 0.0);
                    Ok(vec![c.norm(), c.arg(), c.re, c.im])
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(MapTile::assemble("delta", deltas.to_vec(), "omega", omegas.to_vec(), &RESPONSE_LAYERS, rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MechanicalParams, QubitParams};
    use proptest::prelude::*;

    fn fig4_config() -> ModelConfig {
        ModelConfig {
            drive: DriveParams {
                eps0_phi_e0: 0.0,
                eps0_phi_e1: 0.0,
                omega_drive: 1.0,
                n_photon: 0,
                delta_gap: 0.1,
            },
            qubit: QubitParams {
                gamma1: 0.014,
                gamma2: 0.714,
                sigma_z_eq: -1.0,
            },
            mech: MechanicalParams {
                omega_m: 0.128,
                gamma_m: 0.128e-5,
                g: 0.0018,
            },
            frequency_unit: 1.0,
        }
    }

    fn small_spec() -> FluxGridSpec {
        FluxGridSpec {
            phi_e0: AxisSpec::new(-0.5, 2.5, 25),
            phi_e1: AxisSpec::new(0.0, 6.0, 13),
            n_max: 3,
        }
    }

    #[test]
    fn windows_partition_the_axis() {
        assert_eq!(resonance_window(0.0, 1.0, 3), Some(0));
        assert_eq!(resonance_window(-0.5, 1.0, 3), Some(0));
        assert_eq!(resonance_window(-0.5000001, 1.0, 3), None);
        assert_eq!(resonance_window(0.5, 1.0, 3), Some(0));
        assert_eq!(resonance_window(0.5000001, 1.0, 3), Some(1));
        assert_eq!(resonance_window(1.5, 1.0, 3), Some(1));
        assert_eq!(resonance_window(3.5, 1.0, 3), Some(3));
        assert_eq!(resonance_window(3.6, 1.0, 3), None);
        assert_eq!(resonance_window(1.0, 2.0, 3), Some(0));
    }

    #[test]
    fn zero_ac_amplitude_keeps_only_static_term() {
        let cfg = fig4_config();
        for x in [0.6, 1.0, 1.3, 2.2] {
            assert_eq!(damping_correction(x, 0.0, &cfg, 3).unwrap().0, 0.0);
        }
        let (v, n) = damping_correction(-0.05, 0.0, &cfg, 3).unwrap();
        assert_eq!(n, Some(0));
        assert!(v != 0.0);
    }

    #[test]
    fn corrections_flip_sign_across_each_resonance() {
        let cfg = fig4_config();
        for n in 0..=3 {
            for &(dx, y) in &[(0.03, 1.0), (0.1, 2.0), (0.2, 4.5)] {
                let c = f64::from(n);
                let (a, _) = damping_correction(c - dx, y, &cfg, 3).unwrap();
                let (b, _) = damping_correction(c + dx, y, &cfg, 3).unwrap();
                if n == 0 || a != 0.0 {
                    assert!((a + b).abs() <= 1e-12 * a.abs(), "n={n} {a} {b}");
                }
            }
        }
        // Anti-damping just below a resonance line (delta_n < 0).
        let (below, _) = damping_correction(0.95, 1.0, &cfg, 3).unwrap();
        assert!(below < 0.0);
    }

    #[test]
    fn map_is_independent_of_thread_count() {
        let cfg = fig4_config();
        let spec = small_spec();
        let a = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap().install(|| damping_map(&spec, &cfg).unwrap());
        let b = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap().install(|| damping_map(&spec, &cfg).unwrap());
        assert_eq!(a.to_csv(None), b.to_csv(None));
    }

    #[test]
    fn refinement_keeps_shared_points() {
        let cfg = fig4_config();
        let coarse = small_spec();
        let fine = FluxGridSpec {
            phi_e0: AxisSpec::new(-0.5, 2.5, 49),
            phi_e1: AxisSpec::new(0.0, 6.0, 25),
            n_max: 3,
        };
        let a = damping_map(&coarse, &cfg).unwrap();
        let b = damping_map(&fine, &cfg).unwrap();
        for iy in 0..a.ny() {
            for ix in 0..a.nx() {
                assert_eq!(a.x[ix], b.x[2 * ix]);
                assert_eq!(a.y[iy], b.y[2 * iy]);
                assert_eq!(a.at(0, ix, iy), b.at(0, 2 * ix, 2 * iy));
            }
        }
    }

    #[test]
    fn tile_csv_and_sidecar() {
        let cfg = fig4_config();
        let spec = FluxGridSpec {
            phi_e0: AxisSpec::new(-0.5, 0.5, 3),
            phi_e1: AxisSpec::new(0.0, 1.0, 2),
            n_max: 0,
        };
        let tile = damping_map(&spec, &cfg).unwrap();
        let csv = tile.to_csv(Some("run=x"));
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[1], "eps0_phi_e0,eps0_phi_e1,delta_gamma_m,window_n");
        assert_eq!(lines.len(), 2 + 6);
        let side = tile.sidecar("damping_map", "map.csv", &csv, &spec).to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&side).unwrap();
        assert_eq!(v["payload"]["x_count"], 3);
        assert_eq!(v["sha256"].as_str().unwrap().len(), 64);
        let n = tile.normalization[0];
        assert!(n.min <= n.max && n.max_abs >= n.max.abs());
    }

    fn surface_model(g: f64) -> Model {
        Model::new(
            -0.1,
            0.1,
            QubitParams {
                gamma1: 0.001,
                gamma2: 0.01,
                sigma_z_eq: -1.0,
            },
            MechanicalParams {
                omega_m: 0.15,
                gamma_m: 1e-4,
                g,
            },
        )
        .unwrap()
    }

    #[test]
    fn surface_zero_without_coupling() {
        let t = response_surface(&surface_model(0.0), &[-0.1, 0.1], &[0.05, 0.1]).unwrap();
        assert!(t.layers.iter().all(|l| l.values.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn surface_phase_positive_for_blue_detuning() {
        let deltas: Vec<f64> = (1..=10).map(|k| -0.02 * k as f64).collect();
        let omegas: Vec<f64> = (1..=30).map(|k| 0.01 * k as f64).collect();
        let t = response_surface(&surface_model(0.001), &deltas, &omegas).unwrap();
        let arg = &t.layer("arg_chi").unwrap().values;
        assert!(arg.iter().all(|a| *a > 0.0));
    }

    #[test]
    fn surface_has_secondary_ridge_at_gamma1n() {
        let m = surface_model(0.001);
        let d = m.derived().unwrap();
        let omegas: Vec<f64> = (1..400).map(|k| 1e-5 * k as f64 * d.gamma1n * 1e3 / 2.0).collect();
        let t = response_surface(&m, &[m.delta], &omegas).unwrap();
        let im = &t.layer("im_chi").unwrap().values;
        let k = (1..im.len() - 1).find(|&k| im[k] > im[k - 1] && im[k] >= im[k + 1]).unwrap();
        assert!((omegas[k] / d.gamma1n - 1.0).abs() < 0.05, "{} vs {}", omegas[k], d.gamma1n);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn evaluation_order_does_not_matter(x in -0.5f64..3.5, y in 0.0f64..12.0) {
            let cfg = fig4_config();
            let single = damping_correction(x, y, &cfg, 3).unwrap();
            let again = damping_correction(x, y, &cfg, 3).unwrap();
            prop_assert_eq!(single, again);
            let n = single.1.unwrap();
            prop_assert!((x - f64::from(n)).abs() <= 0.5 + 1e-12);
        }
    }
}
