//! PRS comb allocation and transmit-grid generation.
//!
//! A PRS resource is a `K_c x K_c` comb pattern tiled `12 * N_RB / K_c`
//! times along frequency and `F` times along time, with `K_c * (g - 1)`
//! blank symbols between time repetitions.

mod gold;

pub use gold::{qpsk, GoldSequence};

use crate::error::{Error, Result};
use crate::waveform::WaveformMeta;
use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;

pub const SUBCARRIERS_PER_RB: usize = 12;
pub const COMB_SIZES: [usize; 4] = [2, 4, 6, 12];

/// Relative subcarrier offset used by each symbol of the comb pattern.
pub fn comb_offsets(comb_size: usize) -> Result<&'static [usize]> {
    match comb_size {
        2 => Ok(&[0, 1]),
        4 => Ok(&[0, 2, 1, 3]),
        6 => Ok(&[0, 3, 1, 4, 2, 5]),
        12 => Ok(&[0, 6, 3, 9, 1, 7, 4, 10, 2, 8, 5, 11]),
        other => Err(Error::InvalidCombSize(other)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrsConfig {
    pub comb_size: usize,
    pub time_gap: usize,
    pub repetition_factor: usize,
    pub num_rb: usize,
    pub start_symbol: usize,
    pub sequence_seed: u64,
}

impl Default for PrsConfig {
    fn default() -> Self {
        PrsConfig {
            comb_size: 12,
            time_gap: 1,
            repetition_factor: 28,
            num_rb: 135,
            start_symbol: 0,
            sequence_seed: 0,
        }
    }
}

impl PrsConfig {
    pub fn validate(&self) -> Result<()> {
        comb_offsets(self.comb_size)?;
        if self.time_gap == 0 {
            return Err(Error::InvalidPrsConfig("time_gap must be >= 1".into()));
        }
        if self.repetition_factor == 0 {
            return Err(Error::InvalidPrsConfig(
                "repetition_factor must be >= 1".into(),
            ));
        }
        if self.num_rb == 0 {
            return Err(Error::InvalidPrsConfig("num_rb must be >= 1".into()));
        }
        Ok(())
    }

    pub fn bandwidth_subcarriers(&self) -> usize {
        SUBCARRIERS_PER_RB * self.num_rb
    }

    /// Number of symbols from the first to the last PRS symbol, inclusive.
    pub fn time_span(&self) -> usize {
        let f = self.repetition_factor;
        self.comb_size * (f + (f - 1) * (self.time_gap - 1))
    }

    pub fn num_resource_elements(&self) -> usize {
        self.bandwidth_subcarriers() * self.repetition_factor
    }

    /// Checks that the allocation fits an `n_sc x n_sy` grid.
    pub fn check_fits(&self, n_sc: usize, n_sy: usize) -> Result<()> {
        self.validate()?;
        if self.bandwidth_subcarriers() > n_sc {
            return Err(Error::AllocationOutOfBounds(format!(
                "12*N_RB = {} subcarriers exceed grid width {}",
                self.bandwidth_subcarriers(),
                n_sc
            )));
        }
        if self.start_symbol + self.time_span() > n_sy {
            return Err(Error::AllocationOutOfBounds(format!(
                "PRS occupies symbols {}..{} but grid has {} symbols",
                self.start_symbol,
                self.start_symbol + self.time_span(),
                n_sy
            )));
        }
        Ok(())
    }
}

/// One resource element: subcarrier `n`, symbol `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Re {
    pub n: usize,
    pub m: usize,
}

/// The set of resource elements carrying PRS, sorted by (symbol, subcarrier).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResourceSet {
    entries: Vec<Re>,
    n_sc: usize,
    n_sy: usize,
}

impl ResourceSet {
    /// Builds a set from arbitrary entries; duplicates are merged.
    pub fn from_entries(
        entries: impl IntoIterator<Item = Re>,
        n_sc: usize,
        n_sy: usize,
    ) -> Result<Self> {
        let mut entries: Vec<Re> = entries.into_iter().collect();
        if let Some(re) = entries.iter().find(|re| re.n >= n_sc || re.m >= n_sy) {
            return Err(Error::AllocationOutOfBounds(format!(
                "({}, {}) outside {}x{} grid",
                re.n, re.m, n_sc, n_sy
            )));
        }
        entries.sort_unstable_by_key(|re| (re.m, re.n));
        entries.dedup();
        Ok(ResourceSet {
            entries,
            n_sc,
            n_sy,
        })
    }

    /// Every resource element of the grid.
    pub fn full(n_sc: usize, n_sy: usize) -> Self {
        let entries = (0..n_sy)
            .flat_map(|m| (0..n_sc).map(move |n| Re { n, m }))
            .collect();
        ResourceSet {
            entries,
            n_sc,
            n_sy,
        }
    }

    pub fn empty(n_sc: usize, n_sy: usize) -> Self {
        ResourceSet {
            entries: Vec::new(),
            n_sc,
            n_sy,
        }
    }

    pub fn entries(&self) -> &[Re] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.n_sc, self.n_sy)
    }

    pub fn density(&self) -> f64 {
        self.entries.len() as f64 / (self.n_sc * self.n_sy) as f64
    }

    pub fn contains(&self, n: usize, m: usize) -> bool {
        self.entries
            .binary_search_by_key(&(m, n), |re| (re.m, re.n))
            .is_ok()
    }

    /// Indicator matrix of the allocation.
    pub fn mask(&self) -> Array2<bool> {
        let mut mask = Array2::from_elem((self.n_sc, self.n_sy), false);
        for re in &self.entries {
            mask[[re.n, re.m]] = true;
        }
        mask
    }

    /// Writes the allocation as `n,m` CSV rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "n,m")?;
        for re in &self.entries {
            writeln!(out, "{},{}", re.n, re.m)?;
        }
        Ok(())
    }
}

/// Tiles the comb pattern of `cfg` over an `n_sc x n_sy` grid.
pub fn generate_allocation(cfg: &PrsConfig, n_sc: usize, n_sy: usize) -> Result<ResourceSet> {
    cfg.check_fits(n_sc, n_sy)?;
    let offsets = comb_offsets(cfg.comb_size)?;
    let k = cfg.comb_size;
    let per_symbol = cfg.bandwidth_subcarriers() / k;
    let mut entries = Vec::with_capacity(cfg.num_resource_elements());
    for rep in 0..cfg.repetition_factor {
        let base = cfg.start_symbol + rep * k * cfg.time_gap;
        for (j, &offset) in offsets.iter().enumerate() {
            let m = base + j;
            entries.extend((0..per_symbol).map(|i| Re { n: offset + i * k, m }));
        }
    }
    // Generated in (m, n) order already.
    Ok(ResourceSet {
        entries,
        n_sc,
        n_sy,
    })
}

/// Complex resource grid, subcarriers along rows and symbols along columns.
#[derive(Debug, Clone, PartialEq)]
pub struct OfdmGrid {
    pub values: Array2<Complex64>,
    pub meta: WaveformMeta,
}

impl OfdmGrid {
    pub fn zeros(n_sc: usize, n_sy: usize, meta: WaveformMeta) -> Self {
        OfdmGrid {
            values: Array2::zeros((n_sc, n_sy)),
            meta,
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        self.values.dim()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        OfdmGrid {
            values: self.values.mapv(|v| v * factor),
            meta: self.meta,
        }
    }
}

/// Fills the allocated resource elements with Gold-sequence QPSK symbols.
///
/// Symbols are drawn in allocation order, one continuous sequence per grid.
pub fn generate_prs_symbols(seed: u64, alloc: &ResourceSet, meta: WaveformMeta) -> OfdmGrid {
    let (n_sc, n_sy) = alloc.dims();
    let mut grid = OfdmGrid::zeros(n_sc, n_sy, meta);
    let mut seq = GoldSequence::new(seed);
    for re in alloc.entries() {
        grid.values[[re.n, re.m]] = seq.next_qpsk();
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    fn cfg(comb_size: usize, num_rb: usize, time_gap: usize, rep: usize) -> PrsConfig {
        PrsConfig {
            comb_size,
            time_gap,
            repetition_factor: rep,
            num_rb,
            start_symbol: 0,
            sequence_seed: 0,
        }
    }

    #[test]
    fn offset_tables() {
        assert_eq!(comb_offsets(2).unwrap(), &[0, 1]);
        assert_eq!(comb_offsets(4).unwrap(), &[0, 2, 1, 3]);
        assert_eq!(
            comb_offsets(12).unwrap(),
            &[0, 6, 3, 9, 1, 7, 4, 10, 2, 8, 5, 11]
        );
        for k in COMB_SIZES {
            let mut seen: Vec<usize> = comb_offsets(k).unwrap().to_vec();
            seen.sort_unstable();
            assert_eq!(seen, (0..k).collect::<Vec<_>>());
        }
    }

    #[test]
    fn rejects_bad_comb() {
        for k in [0, 1, 3, 5, 8, 24] {
            assert!(matches!(comb_offsets(k), Err(Error::InvalidCombSize(_))));
        }
        assert!(generate_allocation(&cfg(3, 1, 1, 1), 12, 6).is_err());
    }

    #[test]
    fn comb2_single_rb() {
        let set = generate_allocation(&cfg(2, 1, 1, 1), 12, 2).unwrap();
        assert_eq!(set.len(), 12);
        for re in set.entries() {
            assert_eq!(re.n % 2, re.m, "{re:?}");
        }
        let sym0: Vec<usize> = set.entries().iter().filter(|r| r.m == 0).map(|r| r.n).collect();
        assert_eq!(sym0, vec![0, 2, 4, 6, 8, 10]);
    }

    #[test]
    fn full_size_default() {
        let set = generate_allocation(&PrsConfig::default(), 1620, 336).unwrap();
        assert_eq!(set.len(), 45360);
        let symbols: HashSet<usize> = set.entries().iter().map(|r| r.m).collect();
        assert_eq!(symbols.len(), 336);
    }

    #[test]
    fn time_gap_leaves_blank_symbols() {
        let c = cfg(4, 2, 2, 2);
        assert_eq!(c.time_span(), 12);
        let set = generate_allocation(&c, 24, 12).unwrap();
        let symbols: HashSet<usize> = set.entries().iter().map(|r| r.m).collect();
        let expected: HashSet<usize> = [0, 1, 2, 3, 8, 9, 10, 11].into_iter().collect();
        assert_eq!(symbols, expected);
        assert_eq!(set.len(), 12 * 2 * 2);
    }

    #[test]
    fn start_symbol_shifts_pattern() {
        let mut c = cfg(2, 1, 1, 1);
        c.start_symbol = 3;
        let set = generate_allocation(&c, 12, 5).unwrap();
        assert!(set.entries().iter().all(|r| r.m == 3 || r.m == 4));
        c.start_symbol = 4;
        assert!(matches!(
            generate_allocation(&c, 12, 5),
            Err(Error::AllocationOutOfBounds(_))
        ));
    }

    #[test]
    fn rejects_too_wide() {
        assert!(matches!(
            generate_allocation(&cfg(4, 2, 1, 1), 12, 8),
            Err(Error::AllocationOutOfBounds(_))
        ));
    }

    #[test]
    fn k12_estimate_sparsity() {
        // only 1/12 of a fully tiled grid is occupied
        let set = generate_allocation(&cfg(12, 2, 1, 2), 24, 24).unwrap();
        let grid = generate_prs_symbols(1, &set, WaveformMeta::default());
        let zeros = grid.values.iter().filter(|v| v.norm() == 0.0).count();
        assert_eq!(zeros * 12, 24 * 24 * 11);
    }

    #[test]
    fn prs_symbols_empty_alloc() {
        let set = ResourceSet::empty(8, 4);
        let grid = generate_prs_symbols(5, &set, WaveformMeta::default());
        assert!(grid.values.iter().all(|v| *v == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn prs_symbols_deterministic_and_unit() {
        let set = generate_allocation(&cfg(4, 3, 1, 2), 48, 8).unwrap();
        let a = generate_prs_symbols(77, &set, WaveformMeta::default());
        let b = generate_prs_symbols(77, &set, WaveformMeta::default());
        assert_eq!(a, b);
        let mask = set.mask();
        for ((n, m), v) in a.values.indexed_iter() {
            if mask[[n, m]] {
                assert!((v.norm() - 1.0).abs() < 1e-15);
            } else {
                assert_eq!(v.re.to_bits(), 0);
                assert_eq!(v.im.to_bits(), 0);
            }
        }
    }

    #[test]
    fn from_entries_checks_bounds() {
        assert!(ResourceSet::from_entries([Re { n: 4, m: 0 }], 4, 4).is_err());
        let set = ResourceSet::from_entries([Re { n: 1, m: 1 }, Re { n: 1, m: 1 }], 4, 4).unwrap();
        assert_eq!(set.len(), 1);
        assert!(set.contains(1, 1));
        assert!(!set.contains(1, 0));
    }

    #[test]
    fn csv_export() {
        let set = generate_allocation(&cfg(2, 1, 1, 1), 12, 2).unwrap();
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("n,m"));
        assert_eq!(lines.next(), Some("0,0"));
        assert_eq!(text.lines().count(), 13);
    }
}
