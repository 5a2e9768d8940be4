//! Two-dimensional complex approximate message passing (2D-CAMP).
//!
//! Each iteration forms a noisy delay-Doppler estimate from the residual,
//! estimates the noise level from the median magnitude, soft-thresholds,
//! and updates the residual with the Onsager correction
//! `(||X_t||_0 / (N_sc N_sy)) E_{t-1}`.

use crate::error::{Error, Result};
use crate::prs::ResourceSet;
use crate::specest::{ChannelEstimate, RangeDopplerMap};
use crate::transform::{transpose, DelayDopplerTransform};
use crate::waveform::WaveformMeta;
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::SQRT_2;
use std::io::Write;

/// Lower bound on the threshold noise level, relative to `max |X~_t|`.
///
/// Keeps transform round-off (~1e-16) from surviving thresholding when the
/// median magnitude is itself round-off, as on exactly sparse noiseless input.
pub const SIGMA_FLOOR_REL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualVariant {
    /// Re-project the estimate of the current iteration.
    #[default]
    CurrentEstimate,
    /// Re-project the previous iteration's estimate.
    LiteralPrevious,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseEstimator {
    /// `median(|X~|) / sqrt(2)`.
    MedianSqrt2,
    /// `median(|X~|) / sqrt(ln 2)`: the standard deviation of circular
    /// Gaussian noise, so that `tau = sqrt(-ln p)` yields false-alarm rate `p`.
    #[default]
    MedianSqrtLn2,
}

impl NoiseEstimator {
    pub fn divisor(self) -> f64 {
        match self {
            NoiseEstimator::MedianSqrt2 => SQRT_2,
            NoiseEstimator::MedianSqrtLn2 => std::f64::consts::LN_2.sqrt(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CampConfig {
    pub tau: f64,
    #[serde(rename = "iterations")]
    pub n_iter: usize,
    pub residual_variant: ResidualVariant,
    /// Divisor applied to the median magnitude.
    pub noise_estimator: NoiseEstimator,
    /// Stop when `||X_t - X_{t-1}|| / ||X_t||` falls below this; 0 disables.
    pub stop_tol: f64,
}

impl Default for CampConfig {
    fn default() -> Self {
        CampConfig {
            tau: 3.4,
            n_iter: 50,
            residual_variant: ResidualVariant::CurrentEstimate,
            noise_estimator: NoiseEstimator::MedianSqrtLn2,
            stop_tol: 0.0,
        }
    }
}

impl CampConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::param("tau", "must be positive"));
        }
        if self.n_iter == 0 {
            return Err(Error::param("iterations", "must be >= 1"));
        }
        if !(self.stop_tol >= 0.0) {
            return Err(Error::param("stop_tol", "must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub sigma: f64,
    pub threshold: f64,
    pub support: usize,
    pub residual_energy: f64,
    pub relative_change: f64,
}

/// Sparse delay-Doppler estimate (unshifted, `[delay, doppler]` indexing).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMap {
    pub values: Array2<Complex64>,
    pub iterations_run: usize,
    pub final_sigma: f64,
    pub support_size: usize,
    pub diagnostics: Vec<IterationStats>,
    pub meta: WaveformMeta,
}

impl SparseMap {
    /// Writes the per-iteration diagnostics as CSV.
    pub fn write_diagnostics_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iteration,sigma,threshold,support,residual_energy,relative_change")?;
        for s in &self.diagnostics {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                s.iteration, s.sigma, s.threshold, s.support, s.residual_energy, s.relative_change
            )?;
        }
        Ok(())
    }
}

/// Magnitude shrinkage by `lambda`, preserving phase.
#[inline]
pub fn soft_threshold(x: Complex64, lambda: f64) -> Complex64 {
    let mag = x.norm();
    if mag > lambda {
        x * ((mag - lambda) / mag)
    } else {
        Complex64::default()
    }
}

/// Threshold multiplier for a target false-alarm probability, `sqrt(-ln p)`.
pub fn tau_from_pfa(p_fa: f64) -> Result<f64> {
    if !(p_fa > 0.0 && p_fa < 1.0) {
        return Err(Error::InvalidProbability(p_fa));
    }
    Ok((-p_fa.ln()).sqrt())
}

/// Lower median of `values`; reorders the slice.
pub(crate) fn lower_median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let idx = (values.len() - 1) / 2;
    let (_, median, _) = values.select_nth_unstable_by(idx, f64::total_cmp);
    *median
}

/// Runs 2D-CAMP on a masked channel estimate.
pub fn camp_run(h: &ChannelEstimate, alloc: &ResourceSet, cfg: &CampConfig) -> Result<SparseMap> {
    cfg.validate()?;
    if alloc.dims() != h.dims() {
        return Err(Error::DimensionMismatch {
            expected: h.dims(),
            actual: alloc.dims(),
        });
    }
    let (n_sc, n_sy) = h.dims();
    let (n, m) = (n_sc, n_sy);
    let cells = (n_sc * n_sy) as f64;
    let mask = alloc.mask();
    let mask = mask.as_slice().expect("standard layout");
    let data = h.values().as_standard_layout().into_owned();
    let data = data.as_slice().expect("standard layout");

    // Delay-Doppler planes are kept transposed (Doppler-major) so each
    // transform needs only one transpose.
    let mut transform = DelayDopplerTransform::new(n_sc, n_sy, n, m);
    let zero = Complex64::default();
    let mut estimate = vec![zero; n * m];
    let mut previous = match cfg.residual_variant {
        ResidualVariant::CurrentEstimate => Vec::new(),
        ResidualVariant::LiteralPrevious => vec![zero; n * m],
    };
    let mut noisy = vec![zero; n * m];
    let mut residual = data.to_vec();
    let mut projection = vec![zero; n_sc * n_sy];
    let mut magnitudes = vec![0.0; n * m];
    let mut diagnostics = Vec::with_capacity(cfg.n_iter);
    let divisor_sq = cfg.noise_estimator.divisor().powi(2);
    let mut sigma = 0.0;
    let mut support = 0;

    for iteration in 1..=cfg.n_iter {
        // X~_t = F(E_{t-1}) + X_{t-1}
        transform.forward_transposed(&residual, &mut noisy);
        let mut peak_sq: f64 = 0.0;
        for ((v, x), slot) in noisy.iter_mut().zip(&estimate).zip(magnitudes.iter_mut()) {
            *v += x;
            *slot = v.norm_sqr();
            peak_sq = peak_sq.max(*slot);
        }
        if !peak_sq.is_finite() {
            return Err(Error::NonFinite { iteration, what: "noisy estimate" });
        }
        // the median of |x|^2 is the square of the median of |x|
        let sigma_sq = (lower_median(&mut magnitudes) / divisor_sq).max(SIGMA_FLOOR_REL * SIGMA_FLOOR_REL * peak_sq);
        sigma = sigma_sq.sqrt();
        let threshold = cfg.tau * sigma;
        let threshold_sq = threshold * threshold;

        if cfg.residual_variant == ResidualVariant::LiteralPrevious {
            previous.copy_from_slice(&estimate);
        }
        support = 0;
        let mut change = 0.0;
        let mut estimate_energy = 0.0;
        for (x, v) in estimate.iter_mut().zip(&noisy) {
            let mag_sq = v.norm_sqr();
            let next = if mag_sq > threshold_sq {
                support += 1;
                let mag = mag_sq.sqrt();
                *v * ((mag - threshold) / mag)
            } else {
                zero
            };
            change += (next - *x).norm_sqr();
            estimate_energy += next.norm_sqr();
            *x = next;
        }

        let reprojected = match cfg.residual_variant {
            ResidualVariant::CurrentEstimate => &estimate,
            ResidualVariant::LiteralPrevious => &previous,
        };
        transform.adjoint_transposed(reprojected, &mut projection);

        // E_t = H - 1_P A(X) + (||X_t||_0 / (N_sc N_sy)) E_{t-1}
        let onsager = support as f64 / cells;
        let mut residual_energy = 0.0;
        for (((e, &y), &p), &inside) in residual.iter_mut().zip(data).zip(&projection).zip(mask) {
            let fit = if inside { p } else { zero };
            *e = y - fit + *e * onsager;
            residual_energy += e.norm_sqr();
        }
        if !residual_energy.is_finite() {
            return Err(Error::NonFinite { iteration, what: "residual" });
        }
        let relative_change = if estimate_energy > 0.0 {
            (change / estimate_energy).sqrt()
        } else if change == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        diagnostics.push(IterationStats {
            iteration,
            sigma,
            threshold,
            support,
            residual_energy,
            relative_change,
        });
        if cfg.stop_tol > 0.0 && relative_change < cfg.stop_tol {
            break;
        }
    }

    let mut values = Array2::<Complex64>::zeros((n, m));
    transpose(&estimate, m, n, values.as_slice_mut().expect("standard layout"));
    Ok(SparseMap {
        values,
        iterations_run: diagnostics.len(),
        final_sigma: sigma,
        support_size: support,
        diagnostics,
        meta: *h.meta(),
    })
}

/// `|X|^2` with the periodogram's axis conventions.
pub fn camp_to_map(x: &SparseMap) -> RangeDopplerMap {
    let power = x.values.mapv(|v| v.norm_sqr());
    RangeDopplerMap::from_unshifted(&power, &x.meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn soft_threshold_cases() {
        let y = soft_threshold(Complex64::new(3.0, 4.0), 1.0);
        assert_relative_eq!(y.re, 2.4, epsilon = 1e-15);
        assert_relative_eq!(y.im, 3.2, epsilon = 1e-15);
        assert_eq!(soft_threshold(Complex64::new(0.5, 0.0), 1.0), Complex64::default());
        assert_eq!(soft_threshold(Complex64::new(1.0, 0.0), 1.0), Complex64::default());
        let x = Complex64::new(-0.3, 7.0);
        assert_eq!(soft_threshold(x, 0.0), x);
        assert_eq!(soft_threshold(Complex64::default(), 0.0), Complex64::default());
    }

    #[test]
    fn tau_values() {
        assert_relative_eq!(tau_from_pfa((-16f64).exp()).unwrap(), 4.0, epsilon = 1e-12);
        assert_relative_eq!(tau_from_pfa(1e-7).unwrap(), 4.0147, epsilon = 1e-4);
        let near_one = tau_from_pfa(1.0 - 1e-12).unwrap();
        assert!(near_one > 0.0 && near_one < 1e-5);
        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(tau_from_pfa(bad).is_err());
        }
    }

    #[test]
    fn median_is_lower() {
        assert_eq!(lower_median(&mut [4.0, 1.0, 3.0, 2.0]), 2.0);
        assert_eq!(lower_median(&mut [5.0, 1.0, 3.0]), 3.0);
        assert_eq!(lower_median(&mut []), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(CampConfig { tau: 0.0, ..CampConfig::default() }.validate().is_err());
        assert!(CampConfig { n_iter: 0, ..CampConfig::default() }.validate().is_err());
        assert!(CampConfig::default().validate().is_ok());
    }

    #[test]
    fn map_of_single_entry() {
        let mut values = Array2::zeros((4, 4));
        values[[1, 0]] = Complex64::new(2.0, 0.0);
        let sparse = SparseMap {
            values,
            iterations_run: 1,
            final_sigma: 0.0,
            support_size: 1,
            diagnostics: vec![],
            meta: WaveformMeta::default(),
        };
        let map = camp_to_map(&sparse);
        // zero Doppler lands in column 2 after centering
        assert_eq!(map.power[[1, 2]], 4.0);
        assert_eq!(map.power.iter().filter(|&&p| p > 0.0).count(), 1);
    }
}
