//! Echo-path geometry, the per-RE effective channel and received-grid synthesis.
//!
//! Targets are groups of reflection centers. Each visible center produces
//! one echo path with round-trip delay `2R/c`, Doppler `2v/lambda` and
//! radar-equation amplitude `sqrt(Gt Gr lambda^2 sigma / ((4 pi)^3 R^4))`.
//! Doppler is positive for closing targets.

use crate::error::{Error, Result};
use crate::geometry::{wrap_angle, Vec2};
use crate::prs::OfdmGrid;
use crate::waveform::{WaveformMeta, SPEED_OF_LIGHT};
use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

pub const BOLTZMANN: f64 = 1.380_649e-23;
pub const REFERENCE_TEMPERATURE_K: f64 = 290.0;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm - 30.0)
}

/// Thermal noise per resource element for a receiver of the given noise figure.
///
/// Total noise `k T (N_sc df) NF` spread over `N_sc` subcarriers.
pub fn thermal_noise_per_re(delta_f: f64, noise_figure_db: f64) -> f64 {
    BOLTZMANN * REFERENCE_TEMPERATURE_K * delta_f * db_to_linear(noise_figure_db)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadarParams {
    pub f_c: f64,
    pub tx_power_dbm: f64,
    pub tx_gain_db: f64,
    pub rx_gain_db: f64,
    /// Complex noise variance per resource element, watts.
    pub noise_power: f64,
}

impl Default for RadarParams {
    fn default() -> Self {
        RadarParams {
            f_c: 26e9,
            tx_power_dbm: 30.0,
            tx_gain_db: 18.0,
            rx_gain_db: 18.0,
            noise_power: thermal_noise_per_re(120e3, 8.0),
        }
    }
}

impl RadarParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_c > 0.0 && self.f_c.is_finite()) {
            return Err(Error::param("f_c", "must be positive"));
        }
        if !(self.noise_power >= 0.0 && self.noise_power.is_finite()) {
            return Err(Error::param("noise_power", "must be non-negative"));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.f_c
    }

    /// Amplitude of one PRS resource element when the total transmit power
    /// is shared by `active_subcarriers` subcarriers.
    pub fn re_amplitude(&self, active_subcarriers: usize) -> f64 {
        (dbm_to_watts(self.tx_power_dbm) / active_subcarriers.max(1) as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReflectionCenter {
    /// Position in the vehicle frame (x forward, y left), meters.
    #[serde(rename = "offset_m")]
    pub offset: Vec2,
    #[serde(rename = "rcs_m2")]
    pub rcs: f64,
    /// Vehicle-frame azimuth of the illuminating ray (BS to center) around
    /// which the center reflects.
    #[serde(rename = "visibility_center_rad")]
    pub visibility_center: f64,
    #[serde(rename = "visibility_halfwidth_rad")]
    pub visibility_halfwidth: f64,
}

impl ReflectionCenter {
    pub fn validate(&self) -> Result<()> {
        if !(self.rcs > 0.0) {
            return Err(Error::param("rcs_m2", "must be positive"));
        }
        if !(0.0..=PI).contains(&self.visibility_halfwidth) {
            return Err(Error::param("visibility_halfwidth_rad", "must lie in [0, pi]"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Vehicle {
    pub id: String,
    #[serde(rename = "position_m")]
    pub position: Vec2,
    #[serde(rename = "velocity_mps")]
    pub velocity: Vec2,
    #[serde(rename = "heading_rad")]
    pub heading: f64,
    pub centers: Vec<ReflectionCenter>,
}

impl Vehicle {
    pub fn validate(&self) -> Result<()> {
        if self.centers.is_empty() {
            return Err(Error::Config(format!(
                "vehicle {} has no reflection centers",
                self.id
            )));
        }
        self.centers.iter().try_for_each(ReflectionCenter::validate)
    }
}

/// A reflection center resolved into world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldCenter {
    pub index: usize,
    pub position: Vec2,
    pub velocity: Vec2,
    pub rcs: f64,
}

/// Centers whose incidence angle lies inside their visibility arc.
pub fn visible_centers(vehicle: &Vehicle, bs_position: Vec2) -> Vec<WorldCenter> {
    vehicle
        .centers
        .iter()
        .enumerate()
        .filter_map(|(index, center)| {
            let position = vehicle.position + center.offset.rotated(vehicle.heading);
            let incidence = (position - bs_position).azimuth() - vehicle.heading;
            let off_axis = wrap_angle(incidence - center.visibility_center).abs();
            (off_axis <= center.visibility_halfwidth).then_some(WorldCenter {
                index,
                position,
                velocity: vehicle.velocity,
                rcs: center.rcs,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClutterPoint {
    #[serde(rename = "position_m")]
    pub position: Vec2,
    #[serde(rename = "rcs_m2")]
    pub rcs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EchoPath {
    pub alpha: f64,
    pub tau: f64,
    pub doppler: f64,
    /// `-2 pi f_c tau`, wrapped into `[-pi, pi]`.
    pub carrier_phase: f64,
}

impl EchoPath {
    /// Path with the carrier phase implied by its delay.
    pub fn new(alpha: f64, tau: f64, doppler: f64, f_c: f64) -> Self {
        EchoPath {
            alpha,
            tau,
            doppler,
            carrier_phase: carrier_phase(f_c, tau),
        }
    }

    pub fn range(&self) -> f64 {
        self.tau * SPEED_OF_LIGHT / 2.0
    }
}

fn carrier_phase(f_c: f64, tau: f64) -> f64 {
    let cycles = f_c * tau;
    -TAU * (cycles - cycles.round())
}

/// Echo parameters of a point scatterer seen from `bs`.
pub fn path_params(
    bs: Vec2,
    position: Vec2,
    rcs: f64,
    velocity: Vec2,
    radar: &RadarParams,
) -> Result<EchoPath> {
    let los = position - bs;
    let range = los.norm();
    if !(range > 0.0) {
        return Err(Error::ColocatedTarget);
    }
    let lambda = radar.wavelength();
    let closing_speed = -velocity.dot(los * (1.0 / range));
    let gains = db_to_linear(radar.tx_gain_db) * db_to_linear(radar.rx_gain_db);
    let alpha =
        (gains * lambda * lambda * rcs / ((4.0 * PI).powi(3) * range.powi(4))).sqrt();
    let tau = 2.0 * range / SPEED_OF_LIGHT;
    Ok(EchoPath::new(alpha, tau, 2.0 * closing_speed / lambda, radar.f_c))
}

/// `exp(j 2 pi x)` evaluated on the fractional part of `x`.
#[inline]
fn cis_cycles(x: f64) -> Complex64 {
    Complex64::from_polar(1.0, TAU * (x - x.round()))
}

/// Channel coefficient of `path` on resource element `(n, m)`.
pub fn effective_channel(path: &EchoPath, n: usize, m: usize, meta: &WaveformMeta) -> Complex64 {
    Complex64::from_polar(path.alpha, path.carrier_phase)
        * cis_cycles(-(n as f64) * meta.delta_f * path.tau)
        * cis_cycles(m as f64 * meta.t_sym * path.doppler)
}

/// Noiseless channel of all `paths` over an `n_sc x n_sy` grid.
pub fn channel_grid(paths: &[EchoPath], n_sc: usize, n_sy: usize, meta: &WaveformMeta) -> Array2<Complex64> {
    let mut h = Array2::<Complex64>::zeros((n_sc, n_sy));
    let mut delay = vec![Complex64::default(); n_sc];
    let mut doppler = vec![Complex64::default(); n_sy];
    for path in paths {
        let c = Complex64::from_polar(path.alpha, path.carrier_phase);
        for (n, d) in delay.iter_mut().enumerate() {
            *d = c * cis_cycles(-(n as f64) * meta.delta_f * path.tau);
        }
        for (m, d) in doppler.iter_mut().enumerate() {
            *d = cis_cycles(m as f64 * meta.t_sym * path.doppler);
        }
        for (n, mut row) in h.outer_iter_mut().enumerate() {
            let a = delay[n];
            for (v, b) in row.iter_mut().zip(&doppler) {
                *v += a * b;
            }
        }
    }
    h
}

/// Complex Gaussian noise with variance `noise_power` per element.
///
/// Column `m` is drawn from its own ChaCha stream, so every element depends
/// only on `(seed, m, n)`.
pub fn noise_grid(n_sc: usize, n_sy: usize, noise_power: f64, seed: u64) -> Array2<Complex64> {
    let mut w = Array2::<Complex64>::zeros((n_sc, n_sy));
    if noise_power == 0.0 {
        return w;
    }
    let scale = (noise_power / 2.0).sqrt();
    for (m, mut column) in w.columns_mut().into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(m as u64);
        for v in column.iter_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *v = Complex64::new(re * scale, im * scale);
        }
    }
    w
}

/// Received grid `y = a s (h_clutter + sum h_l) + w`.
///
/// `tx` carries unit-magnitude symbols; `a` is the per-RE amplitude for
/// `active_subcarriers` (see [`RadarParams::re_amplitude`]).
pub fn synthesize_rx(
    tx: &OfdmGrid,
    paths: &[EchoPath],
    clutter: &[EchoPath],
    radar: &RadarParams,
    active_subcarriers: usize,
    noise_seed: u64,
) -> Result<OfdmGrid> {
    radar.validate()?;
    let (n_sc, n_sy) = tx.dims();
    let amplitude = radar.re_amplitude(active_subcarriers);
    let all: Vec<EchoPath> = clutter.iter().chain(paths).copied().collect();
    let h = channel_grid(&all, n_sc, n_sy, &tx.meta);
    let mut y = noise_grid(n_sc, n_sy, radar.noise_power, noise_seed);
    ndarray::Zip::from(&mut y)
        .and(&tx.values)
        .and(&h)
        .for_each(|y, &s, &h| {
            if s != Complex64::default() {
                *y += s * amplitude * h;
            }
        });
    Ok(OfdmGrid { values: y, meta: tx.meta })
}
