//! OFDM numerology shared by every grid in the pipeline.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Normal cyclic-prefix overhead relative to the useful symbol length.
pub const NORMAL_CP_RATIO: f64 = 0.0703;

/// Grid metadata: subcarrier spacing, symbol duration (with CP) and carrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaveformMeta {
    pub delta_f: f64,
    pub t_sym: f64,
    pub f_c: f64,
}

impl Default for WaveformMeta {
    fn default() -> Self {
        WaveformMeta {
            delta_f: 120e3,
            t_sym: (1.0 + NORMAL_CP_RATIO) / 120e3,
            f_c: 26e9,
        }
    }
}

impl WaveformMeta {
    pub fn new(f_c: f64, delta_f: f64, cp_ratio: f64) -> Result<Self> {
        let meta = WaveformMeta {
            delta_f,
            t_sym: (1.0 + cp_ratio) / delta_f,
            f_c,
        };
        if !(cp_ratio > 0.0) {
            return Err(Error::param("cp_ratio", "must be positive"));
        }
        meta.validate()?;
        Ok(meta)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta_f > 0.0 && self.delta_f.is_finite()) {
            return Err(Error::param("delta_f", "must be positive"));
        }
        if !(self.t_sym > 1.0 / self.delta_f) {
            return Err(Error::param("t_sym", "must exceed 1/delta_f"));
        }
        if !(self.f_c > 0.0 && self.f_c.is_finite()) {
            return Err(Error::param("f_c", "must be positive"));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.f_c
    }

    /// Range covered by one bin of an `n`-point delay transform.
    pub fn range_resolution(&self, n: usize) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.delta_f * n as f64)
    }

    /// Radial speed covered by one bin of an `m`-point Doppler transform.
    pub fn velocity_resolution(&self, m: usize) -> f64 {
        self.wavelength() / (2.0 * self.t_sym * m as f64)
    }
}

/// Waveform section of a run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Waveform {
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub num_subcarriers: usize,
    pub num_symbols: usize,
    pub cp_ratio: f64,
}

impl Default for Waveform {
    fn default() -> Self {
        Waveform {
            carrier_hz: 26e9,
            subcarrier_spacing_hz: 120e3,
            num_subcarriers: 1620,
            num_symbols: 336,
            cp_ratio: NORMAL_CP_RATIO,
        }
    }
}

impl Waveform {
    pub fn meta(&self) -> Result<WaveformMeta> {
        WaveformMeta::new(self.carrier_hz, self.subcarrier_spacing_hz, self.cp_ratio)
    }

    pub fn cpi(&self) -> f64 {
        self.num_symbols as f64 * (1.0 + self.cp_ratio) / self.subcarrier_spacing_hz
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_cpi_is_about_three_ms() {
        let cpi = Waveform::default().cpi();
        assert!((cpi - 3.0e-3).abs() < 0.01e-3, "{cpi}");
    }

    #[test]
    fn resolutions() {
        let meta = WaveformMeta::default();
        assert!((meta.range_resolution(1620) - 0.77107).abs() < 1e-5);
        assert!((meta.velocity_resolution(336) - 1.92377).abs() < 1e-5);
    }

    #[test]
    fn rejects_bad_numerology() {
        assert!(WaveformMeta::new(26e9, 0.0, 0.07).is_err());
        assert!(WaveformMeta::new(-1.0, 120e3, 0.07).is_err());
        assert!(WaveformMeta::new(26e9, 120e3, 0.0).is_err());
    }
}
