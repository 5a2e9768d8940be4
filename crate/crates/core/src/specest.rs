//! Channel estimation and periodogram range-Doppler maps.

use crate::error::{Error, Result};
use crate::prs::{OfdmGrid, ResourceSet};
use crate::transform::{fftshift_columns, DelayDopplerTransform};
use crate::waveform::WaveformMeta;
use ndarray::Array2;
use num_complex::Complex64;

/// dB value assigned to exactly-zero cells.
pub const DEFAULT_FLOOR_DB: f64 = -100.0;

/// Per-RE channel estimate, exactly zero outside the allocation.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    values: Array2<Complex64>,
    alloc: ResourceSet,
    meta: WaveformMeta,
}

impl ChannelEstimate {
    /// Wraps `values`, zeroing every element outside `alloc`.
    pub fn from_masked(mut values: Array2<Complex64>, alloc: ResourceSet, meta: WaveformMeta) -> Result<Self> {
        if values.dim() != alloc.dims() {
            return Err(Error::DimensionMismatch {
                expected: alloc.dims(),
                actual: values.dim(),
            });
        }
        let mask = alloc.mask();
        ndarray::Zip::from(&mut values).and(&mask).for_each(|v, &keep| {
            if !keep {
                *v = Complex64::default();
            }
        });
        Ok(ChannelEstimate { values, alloc, meta })
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    pub fn alloc(&self) -> &ResourceSet {
        &self.alloc
    }

    pub fn meta(&self) -> &WaveformMeta {
        &self.meta
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dim()
    }
}

/// `h = y / s` on the allocation, zero elsewhere.
pub fn estimate_channel(rx: &OfdmGrid, tx: &OfdmGrid, alloc: &ResourceSet) -> Result<ChannelEstimate> {
    if rx.dims() != tx.dims() {
        return Err(Error::DimensionMismatch {
            expected: tx.dims(),
            actual: rx.dims(),
        });
    }
    if rx.dims() != alloc.dims() {
        return Err(Error::DimensionMismatch {
            expected: alloc.dims(),
            actual: rx.dims(),
        });
    }
    let mut values = Array2::<Complex64>::zeros(rx.dims());
    for re in alloc.entries() {
        let s = tx.values[[re.n, re.m]];
        if s == Complex64::default() {
            return Err(Error::ZeroPilot { n: re.n, m: re.m });
        }
        values[[re.n, re.m]] = rx.values[[re.n, re.m]] / s;
    }
    Ok(ChannelEstimate {
        values,
        alloc: alloc.clone(),
        meta: rx.meta,
    })
}

/// Power over range bins (rows) and Doppler bins (columns, zero
/// velocity at column `M / 2`).
#[derive(Debug, Clone, PartialEq)]
pub struct RangeDopplerMap {
    pub power: Array2<f64>,
    pub range_bin: f64,
    pub velocity_bin: f64,
    pub normalized: bool,
    pub floor_db: f64,
}

impl RangeDopplerMap {
    /// Builds a map from unshifted delay-Doppler power.
    pub fn from_unshifted(power: &Array2<f64>, meta: &WaveformMeta) -> Self {
        let (n, m) = power.dim();
        RangeDopplerMap {
            power: fftshift_columns(power),
            range_bin: meta.range_resolution(n),
            velocity_bin: meta.velocity_resolution(m),
            normalized: false,
            floor_db: DEFAULT_FLOOR_DB,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.power.dim()
    }

    pub fn max(&self) -> f64 {
        self.power.iter().copied().fold(0.0, f64::max)
    }

    /// Doppler column holding zero velocity.
    pub fn zero_doppler_column(&self) -> usize {
        self.power.ncols() / 2
    }

    pub fn bin_to_physical(&self, range_idx: usize, doppler_idx: usize) -> Result<(f64, f64)> {
        let (n, m) = self.dims();
        if range_idx >= n || doppler_idx >= m {
            return Err(Error::BinOutOfBounds {
                range: range_idx,
                doppler: doppler_idx,
                n,
                m,
            });
        }
        let centered = doppler_idx as f64 - self.zero_doppler_column() as f64;
        Ok((range_idx as f64 * self.range_bin, centered * self.velocity_bin))
    }

    /// Fractional (range, doppler column) position of a physical point.
    pub fn physical_to_bin(&self, range_m: f64, velocity_mps: f64) -> (f64, f64) {
        (
            range_m / self.range_bin,
            velocity_mps / self.velocity_bin + self.zero_doppler_column() as f64,
        )
    }

    pub fn normalize(&self) -> Result<RangeDopplerMap> {
        let max = self.max();
        if !(max > 0.0) {
            return Err(Error::EmptyMap);
        }
        Ok(RangeDopplerMap {
            power: self.power.mapv(|p| p / max),
            normalized: true,
            ..self.clone()
        })
    }

    /// Power in dB relative to the map maximum, zero cells at `floor_db`.
    pub fn to_db(&self) -> Array2<f64> {
        let max = self.max();
        let floor = self.floor_db;
        self.power.mapv(|p| {
            if p > 0.0 && max > 0.0 {
                (10.0 * (p / max).log10()).max(floor)
            } else {
                floor
            }
        })
    }
}

/// Free-function form of [`RangeDopplerMap::normalize`].
pub fn normalize(map: &RangeDopplerMap) -> Result<RangeDopplerMap> {
    map.normalize()
}

pub fn bin_to_physical(map: &RangeDopplerMap, range_idx: usize, doppler_idx: usize) -> Result<(f64, f64)> {
    map.bin_to_physical(range_idx, doppler_idx)
}

/// `|F_m{F_n^-1{H}}|^2` zero-padded to `n x m`.
pub fn periodogram(h: &ChannelEstimate, n: usize, m: usize) -> Result<RangeDopplerMap> {
    let (n_sc, n_sy) = h.dims();
    if n < n_sc || m < n_sy {
        return Err(Error::param(
            "fft size",
            format!("{n}x{m} is smaller than the {n_sc}x{n_sy} grid"),
        ));
    }
    let mut transform = DelayDopplerTransform::new(n_sc, n_sy, n, m);
    let x = transform.forward(h.values());
    let power = x.mapv(|v| v.norm_sqr());
    Ok(RangeDopplerMap::from_unshifted(&power, h.meta()))
}
