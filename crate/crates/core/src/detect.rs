//! Cell-averaging CFAR on range-Doppler maps and scoring against ground truth.

use crate::error::{Error, Result};
use crate::specest::RangeDopplerMap;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CfarConfig {
    #[serde(rename = "guard_cells")]
    pub guard: (usize, usize),
    #[serde(rename = "training_cells")]
    pub train: (usize, usize),
    pub p_fa: f64,
    /// Lower bound on the training mean, relative to the map maximum.
    pub floor: f64,
}

impl Default for CfarConfig {
    fn default() -> Self {
        CfarConfig {
            guard: (2, 2),
            train: (8, 4),
            p_fa: 1e-7,
            floor: 1e-8,
        }
    }
}

impl CfarConfig {
    /// Half-extent of the full window (guard + training) per axis.
    pub fn half_window(&self) -> (usize, usize) {
        (self.guard.0 + self.train.0, self.guard.1 + self.train.1)
    }

    /// Training cells of an untruncated window.
    pub fn training_cells(&self) -> usize {
        let (wr, wd) = self.half_window();
        (2 * wr + 1) * (2 * wd + 1) - (2 * self.guard.0 + 1) * (2 * self.guard.1 + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.training_cells() == 0 {
            return Err(Error::param("training_cells", "window has no training cells"));
        }
        if !(self.p_fa > 0.0 && self.p_fa < 1.0) {
            return Err(Error::InvalidProbability(self.p_fa));
        }
        if !(self.floor >= 0.0 && self.floor.is_finite()) {
            return Err(Error::param("floor", "must be non-negative"));
        }
        Ok(())
    }
}

/// CA-CFAR scaling `N (p^{-1/N} - 1)` for exponentially distributed power.
pub fn cfar_alpha(n_train: usize, p_fa: f64) -> Result<f64> {
    if n_train == 0 {
        return Err(Error::param("n_train", "must be >= 1"));
    }
    if !(p_fa > 0.0 && p_fa < 1.0) {
        return Err(Error::InvalidProbability(p_fa));
    }
    let n = n_train as f64;
    Ok(n * (-p_fa.ln() / n).exp_m1())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub range_bin: usize,
    pub doppler_bin: usize,
    /// Power relative to the map maximum.
    pub power: f64,
    pub range_m: f64,
    pub velocity_mps: f64,
}

/// Sums of `width`-wide windows centred on every column, wrapping around.
fn circular_window_sums(row: &[f64], half: usize, out: &mut [f64]) {
    let m = row.len();
    for (j, slot) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for k in 0..=2 * half {
            acc += row[(j + m + k - half) % m];
        }
        *slot = acc;
    }
}

/// Two-dimensional cell-averaging CFAR.
///
/// The training window wraps along Doppler and is truncated at the range
/// edges, with the scaling recomputed for the cells actually present.
pub fn cfar_detect(map: &RangeDopplerMap, cfg: &CfarConfig) -> Result<Vec<Detection>> {
    cfg.validate()?;
    let (n, m) = map.dims();
    let (wr, wd) = cfg.half_window();
    if n <= 2 * wr + 1 || m <= 2 * wd + 1 {
        return Err(Error::DegenerateWindow {
            window: (2 * wr + 1, 2 * wd + 1),
            n,
            m,
        });
    }
    let (gr, gd) = cfg.guard;
    let peak = map.max();
    if !(peak > 0.0) {
        return Ok(Vec::new());
    }
    let floor = cfg.floor * peak;

    let mut outer_h = Array2::<f64>::zeros((n, m));
    let mut inner_h = Array2::<f64>::zeros((n, m));
    for i in 0..n {
        let row = map.power.row(i);
        let row = row.as_slice().expect("standard layout");
        circular_window_sums(row, wd, outer_h.row_mut(i).into_slice().expect("standard layout"));
        circular_window_sums(row, gd, inner_h.row_mut(i).into_slice().expect("standard layout"));
    }

    // alpha depends only on the number of rows the window keeps
    let mut alphas = vec![0.0; 2 * wr + 2];
    let inner_width = 2 * gd + 1;
    let outer_width = 2 * wd + 1;

    let mut detections = Vec::new();
    for i in 0..n {
        let outer_rows = i.saturating_sub(wr)..(i + wr + 1).min(n);
        let inner_rows = i.saturating_sub(gr)..(i + gr + 1).min(n);
        let count = outer_rows.len() * outer_width - inner_rows.len() * inner_width;
        let alpha = match alphas[outer_rows.len()] {
            a if a > 0.0 => a,
            _ => {
                let a = cfar_alpha(count, cfg.p_fa)?;
                alphas[outer_rows.len()] = a;
                a
            }
        };
        for j in 0..m {
            let cell = map.power[[i, j]];
            if cell <= floor * alpha {
                continue;
            }
            let outer: f64 = outer_rows.clone().map(|r| outer_h[[r, j]]).sum();
            let inner: f64 = inner_rows.clone().map(|r| inner_h[[r, j]]).sum();
            let mean = ((outer - inner) / count as f64).max(0.0);
            if cell > alpha * mean.max(floor) {
                let (range_m, velocity_mps) = map.bin_to_physical(i, j)?;
                detections.push(Detection {
                    range_bin: i,
                    doppler_bin: j,
                    power: cell / peak,
                    range_m,
                    velocity_mps,
                });
            }
        }
    }
    Ok(detections)
}

/// A ground-truth reflection center in map coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub label: String,
    pub range_m: f64,
    pub velocity_mps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthMatch {
    pub label: String,
    pub range_bin: i64,
    pub doppler_bin: i64,
    pub detected: bool,
    /// Euclidean distance in bins to the nearest detection, if any.
    pub nearest_distance_bins: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchReport {
    pub n_truth: usize,
    pub n_detected_truth: usize,
    pub n_false: usize,
    pub tol_bins: usize,
    pub truths: Vec<TruthMatch>,
}

fn circular_delta(a: i64, b: i64, m: i64) -> i64 {
    let d = (a - b).rem_euclid(m);
    d.min(m - d)
}

/// Scores detections against truths; tolerance applies per axis in bins.
pub fn match_detections(
    dets: &[Detection],
    truths: &[Truth],
    map: &RangeDopplerMap,
    tol_bins: usize,
) -> MatchReport {
    let m = map.dims().1 as i64;
    let tol = tol_bins as i64;
    let truth_bins: Vec<(i64, i64)> = truths
        .iter()
        .map(|t| {
            let (r, d) = map.physical_to_bin(t.range_m, t.velocity_mps);
            (r.round() as i64, (d.round() as i64).rem_euclid(m))
        })
        .collect();
    let offset = |det: &Detection, bin: (i64, i64)| {
        (
            (det.range_bin as i64 - bin.0).abs(),
            circular_delta(det.doppler_bin as i64, bin.1, m),
        )
    };

    let mut detected = vec![false; truths.len()];
    let mut n_false = 0;
    for det in dets {
        let best = truth_bins
            .iter()
            .enumerate()
            .filter_map(|(k, &bin)| {
                let (dr, dd) = offset(det, bin);
                (dr <= tol && dd <= tol).then_some((k, dr * dr + dd * dd))
            })
            .min_by_key(|&(_, d2)| d2);
        match best {
            Some((k, _)) => detected[k] = true,
            None => n_false += 1,
        }
    }

    let truth_matches = truths
        .iter()
        .zip(&truth_bins)
        .zip(&detected)
        .map(|((t, &bin), &hit)| TruthMatch {
            label: t.label.clone(),
            range_bin: bin.0,
            doppler_bin: bin.1,
            detected: hit,
            nearest_distance_bins: dets
                .iter()
                .map(|d| {
                    let (dr, dd) = offset(d, bin);
                    ((dr * dr + dd * dd) as f64).sqrt()
                })
                .min_by(f64::total_cmp),
        })
        .collect();

    MatchReport {
        n_truth: truths.len(),
        n_detected_truth: detected.iter().filter(|&&d| d).count(),
        n_false,
        tol_bins,
        truths: truth_matches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specest::DEFAULT_FLOOR_DB;
    use approx::assert_relative_eq;

    fn map(power: Array2<f64>) -> RangeDopplerMap {
        RangeDopplerMap {
            power,
            range_bin: 1.0,
            velocity_bin: 1.0,
            normalized: false,
            floor_db: DEFAULT_FLOOR_DB,
        }
    }

    #[test]
    fn alpha_values() {
        assert_relative_eq!(cfar_alpha(1, 0.5).unwrap(), 1.0, epsilon = 1e-15);
        let big = cfar_alpha(1_000_000, 1e-3).unwrap();
        assert!((big / 6.9078 - 1.0).abs() < 1e-3, "{big}");
        assert!(cfar_alpha(10, 1.0 - 1e-12).unwrap() < 1e-10);
        assert!(cfar_alpha(0, 0.1).is_err());
        assert!(cfar_alpha(4, 0.0).is_err());
        assert!(cfar_alpha(4, 1.0).is_err());
    }

    #[test]
    fn zero_map_no_detections() {
        let dets = cfar_detect(&map(Array2::zeros((40, 20))), &CfarConfig::default()).unwrap();
        assert!(dets.is_empty());
    }

    #[test]
    fn impulse_detected_once() {
        let mut p = Array2::zeros((40, 20));
        p[[17, 3]] = 2.5;
        let dets = cfar_detect(&map(p), &CfarConfig::default()).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!((dets[0].range_bin, dets[0].doppler_bin), (17, 3));
        assert_eq!(dets[0].power, 1.0);
    }

    #[test]
    fn impulse_at_range_edge() {
        let mut p = Array2::from_elem((40, 20), 1e-3);
        p[[0, 19]] = 1.0;
        let dets = cfar_detect(&map(p), &CfarConfig::default()).unwrap();
        assert_eq!(dets.len(), 1);
        assert_eq!((dets[0].range_bin, dets[0].doppler_bin), (0, 19));
    }

    #[test]
    fn degenerate_window_rejected() {
        let cfg = CfarConfig::default();
        assert!(matches!(
            cfar_detect(&map(Array2::zeros((21, 20))), &cfg),
            Err(Error::DegenerateWindow { .. })
        ));
        assert!(matches!(
            cfar_detect(&map(Array2::zeros((40, 13))), &cfg),
            Err(Error::DegenerateWindow { .. })
        ));
        let no_train = CfarConfig { train: (0, 0), ..cfg };
        assert!(no_train.validate().is_err());
    }

    #[test]
    fn doppler_window_wraps() {
        // a bright cell at the Doppler edge masks a weaker one across the wrap
        let mut p = Array2::from_elem((40, 20), 1e-6);
        p[[20, 0]] = 1.0;
        p[[20, 16]] = 2e-4;
        let cfg = CfarConfig { guard: (1, 1), train: (2, 3), p_fa: 1e-2, floor: 0.0 };
        let dets = cfar_detect(&map(p), &cfg).unwrap();
        assert!(dets.iter().all(|d| d.doppler_bin != 16));
        assert!(dets.iter().any(|d| d.doppler_bin == 0));
    }

    fn det(r: usize, d: usize) -> Detection {
        Detection { range_bin: r, doppler_bin: d, power: 1.0, range_m: r as f64, velocity_mps: 0.0 }
    }

    fn truth(range: f64, doppler_col: f64, m: usize) -> Truth {
        Truth { label: "t".into(), range_m: range, velocity_mps: doppler_col - (m / 2) as f64 }
    }

    #[test]
    fn matching_cases() {
        let rd = map(Array2::zeros((50, 20)));
        let t = vec![truth(10.0, 5.0, 20)];
        let empty = match_detections(&[], &t, &rd, 2);
        assert_eq!((empty.n_detected_truth, empty.n_false), (0, 0));
        assert_eq!(empty.truths[0].nearest_distance_bins, None);

        let exact = match_detections(&[det(10, 5)], &t, &rd, 0);
        assert_eq!((exact.n_detected_truth, exact.n_false), (1, 0));

        let far = match_detections(&[det(12, 5)], &t, &rd, 1);
        assert_eq!((far.n_detected_truth, far.n_false), (0, 1));
        assert_eq!(far.truths[0].nearest_distance_bins, Some(2.0));
    }

    #[test]
    fn detection_matches_nearest_truth_only() {
        let rd = map(Array2::zeros((50, 20)));
        let t = vec![truth(10.0, 5.0, 20), truth(12.0, 5.0, 20)];
        let r = match_detections(&[det(12, 5), det(13, 5)], &t, &rd, 2);
        assert_eq!(r.n_detected_truth, 1);
        assert!(r.truths[1].detected);
        assert_eq!(r.n_false, 0);
    }

    #[test]
    fn matching_wraps_doppler() {
        let rd = map(Array2::zeros((50, 20)));
        let t = vec![truth(10.0, 19.0, 20)];
        let r = match_detections(&[det(10, 0)], &t, &rd, 1);
        assert_eq!(r.n_detected_truth, 1);
    }
}
