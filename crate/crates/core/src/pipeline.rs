//! End-to-end runs: config, simulation, both estimators, detection, scoring
//! and the comparison and comb-size studies built on them.

use crate::camp::{camp_run, camp_to_map, CampConfig, SparseMap};
use crate::channel::{synthesize_rx, thermal_noise_per_re, EchoPath, RadarParams};
use crate::detect::{cfar_detect, match_detections, CfarConfig, Detection, MatchReport, Truth};
use crate::error::{Error, Result};
use crate::export::{write_json, write_map_csv, write_map_pgm};
use crate::prs::{generate_allocation, generate_prs_symbols, OfdmGrid, PrsConfig, ResourceSet};
use crate::scenario::{Scenario, Target};
use crate::specest::{estimate_channel, periodogram, ChannelEstimate, RangeDopplerMap};
use crate::waveform::{Waveform, WaveformMeta};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

/// Transmit chain and receiver noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarSection {
    pub tx_power_dbm: f64,
    pub tx_gain_db: f64,
    pub rx_gain_db: f64,
    /// Per-RE complex noise variance; when absent, thermal noise at
    /// `noise_figure_db` is used.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub noise_power_w: Option<f64>,
    pub noise_figure_db: f64,
}

impl Default for RadarSection {
    fn default() -> Self {
        RadarSection {
            tx_power_dbm: 30.0,
            tx_gain_db: 18.0,
            rx_gain_db: 18.0,
            noise_power_w: None,
            noise_figure_db: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PeriodogramSection {
    /// FFT size over grid size, per axis.
    pub padding: [usize; 2],
}

impl Default for PeriodogramSection {
    fn default() -> Self {
        PeriodogramSection { padding: [1, 1] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub noise_seed: u64,
    /// Scenario file; the bundled scene when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scenario: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub match_tol_bins: usize,
    pub waveform: Waveform,
    pub prs: PrsConfig,
    pub radar: RadarSection,
    pub periodogram: PeriodogramSection,
    pub camp: CampConfig,
    pub cfar: CfarConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            noise_seed: 1,
            scenario: None,
            output_dir: PathBuf::from("out"),
            match_tol_bins: 2,
            waveform: Waveform::default(),
            prs: PrsConfig::default(),
            radar: RadarSection::default(),
            periodogram: PeriodogramSection::default(),
            camp: CampConfig::default(),
            cfar: CfarConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse {
            format: "toml",
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; a relative scenario path resolves against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<RunConfig> {
        let mut cfg = RunConfig::from_toml(&std::fs::read_to_string(path)?)?;
        if let (Some(scenario), Some(dir)) = (&cfg.scenario, path.parent()) {
            if scenario.is_relative() {
                cfg.scenario = Some(dir.join(scenario));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse {
            format: "toml",
            reason: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.waveform;
        w.meta()?;
        if w.num_subcarriers == 0 || w.num_symbols == 0 {
            return Err(Error::param("waveform", "grid must be non-empty"));
        }
        self.prs.check_fits(w.num_subcarriers, w.num_symbols)?;
        self.radar_params()?.validate()?;
        if !self.radar.noise_figure_db.is_finite() {
            return Err(Error::param("radar.noise_figure_db", "must be finite"));
        }
        if self.periodogram.padding.contains(&0) {
            return Err(Error::param("periodogram.padding", "factors must be >= 1"));
        }
        self.camp.validate()?;
        self.cfar.validate()?;
        Ok(())
    }

    pub fn meta(&self) -> Result<WaveformMeta> {
        self.waveform.meta()
    }

    pub fn radar_params(&self) -> Result<RadarParams> {
        let noise_power = match self.radar.noise_power_w {
            Some(p) => p,
            None => thermal_noise_per_re(self.waveform.subcarrier_spacing_hz, self.radar.noise_figure_db),
        };
        let radar = RadarParams {
            f_c: self.waveform.carrier_hz,
            tx_power_dbm: self.radar.tx_power_dbm,
            tx_gain_db: self.radar.tx_gain_db,
            rx_gain_db: self.radar.rx_gain_db,
            noise_power,
        };
        radar.validate()?;
        Ok(radar)
    }

    pub fn load_scenario(&self) -> Result<Scenario> {
        match &self.scenario {
            Some(path) => Scenario::load(path),
            None => Ok(Scenario::bundled()),
        }
    }

    pub fn periodogram_size(&self) -> (usize, usize) {
        let [p, q] = self.periodogram.padding;
        (self.waveform.num_subcarriers * p, self.waveform.num_symbols * q)
    }

    /// Same bandwidth and CPI with another comb size: `N_RB` is kept and
    /// `F` rescaled so the comb still spans the original symbol range.
    pub fn with_comb_size(&self, comb_size: usize) -> Result<RunConfig> {
        let mut cfg = self.clone();
        let span = self.prs.time_span();
        let gap = self.prs.time_gap;
        // span = K (F + (F - 1)(g - 1)) = K (F g - g + 1)
        let per_comb = span / comb_size;
        let repetition = (per_comb + gap - 1) / gap;
        cfg.prs.comb_size = comb_size;
        cfg.prs.repetition_factor = repetition.max(1);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Everything the estimators need from one simulated CPI.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub meta: WaveformMeta,
    pub alloc: ResourceSet,
    /// Unit-magnitude PRS symbols.
    pub tx: OfdmGrid,
    pub rx: OfdmGrid,
    pub estimate: ChannelEstimate,
    pub targets: Vec<Target>,
    pub clutter: Vec<EchoPath>,
}

impl Simulation {
    pub fn truths(&self) -> Vec<Truth> {
        self.targets.iter().map(|t| t.truth.clone()).collect()
    }

    /// Index of the target with the smallest echo amplitude.
    pub fn weakest_target(&self) -> Option<usize> {
        self.targets
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.path.alpha.total_cmp(&b.1.path.alpha))
            .map(|(i, _)| i)
    }
}

pub fn simulate(cfg: &RunConfig, scenario: &Scenario) -> Result<Simulation> {
    cfg.validate()?;
    let meta = cfg.meta()?;
    let radar = cfg.radar_params()?;
    let (n_sc, n_sy) = (cfg.waveform.num_subcarriers, cfg.waveform.num_symbols);
    let alloc = generate_allocation(&cfg.prs, n_sc, n_sy)?;
    let tx = generate_prs_symbols(cfg.prs.sequence_seed, &alloc, meta);
    let targets = scenario.targets(&radar)?;
    let clutter = scenario.clutter_paths(&radar)?;
    let paths: Vec<EchoPath> = targets.iter().map(|t| t.path).collect();
    let active = cfg.prs.bandwidth_subcarriers();
    let rx = synthesize_rx(&tx, &paths, &clutter, &radar, active, cfg.noise_seed)?;
    let estimate = estimate_channel(&rx, &tx.scaled(radar.re_amplitude(active)), &alloc)?;
    Ok(Simulation {
        meta,
        alloc,
        tx,
        rx,
        estimate,
        targets,
        clutter,
    })
}

/// Normalized map of one estimator with its detections and scores.
#[derive(Debug, Clone)]
pub struct EstimatorOutput {
    pub map: RangeDopplerMap,
    pub detections: Vec<Detection>,
    pub report: MatchReport,
    /// Per truth: largest relative power within the match tolerance.
    pub truth_powers: Vec<f64>,
    /// Median of the nonzero cells, relative to the peak.
    pub noise_floor: f64,
}

fn median_nonzero(map: &RangeDopplerMap) -> f64 {
    let mut cells: Vec<f64> = map.power.iter().copied().filter(|&p| p > 0.0).collect();
    crate::camp::lower_median(&mut cells)
}

/// Largest power within `tol` bins of `truth` (Doppler wraps).
pub fn power_near(map: &RangeDopplerMap, truth: &Truth, tol: usize) -> f64 {
    let (n, m) = map.dims();
    let (r, d) = map.physical_to_bin(truth.range_m, truth.velocity_mps);
    let (r, d) = (r.round() as i64, d.round() as i64);
    let tol = tol as i64;
    let mut best: f64 = 0.0;
    for i in (r - tol).max(0)..=(r + tol).min(n as i64 - 1) {
        for j in d - tol..=d + tol {
            best = best.max(map.power[[i as usize, j.rem_euclid(m as i64) as usize]]);
        }
    }
    best
}

fn score(map: RangeDopplerMap, sim: &Simulation, cfg: &RunConfig) -> Result<EstimatorOutput> {
    let map = if map.max() > 0.0 { map.normalize()? } else { map };
    let detections = cfar_detect(&map, &cfg.cfar)?;
    let truths = sim.truths();
    let report = match_detections(&detections, &truths, &map, cfg.match_tol_bins);
    let truth_powers = truths.iter().map(|t| power_near(&map, t, cfg.match_tol_bins)).collect();
    let noise_floor = median_nonzero(&map);
    Ok(EstimatorOutput {
        map,
        detections,
        report,
        truth_powers,
        noise_floor,
    })
}

pub fn run_periodogram(sim: &Simulation, cfg: &RunConfig) -> Result<EstimatorOutput> {
    let (n, m) = cfg.periodogram_size();
    score(periodogram(&sim.estimate, n, m)?, sim, cfg)
}

pub fn run_camp(sim: &Simulation, cfg: &RunConfig) -> Result<(EstimatorOutput, SparseMap)> {
    let sparse = camp_run(&sim.estimate, &sim.alloc, &cfg.camp)?;
    let out = score(camp_to_map(&sparse), sim, cfg)?;
    Ok((out, sparse))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub report: MatchReport,
    pub n_detections: usize,
    pub truth_relative_power_db: Vec<Option<f64>>,
    pub noise_floor_db: Option<f64>,
}

fn to_db(p: f64) -> Option<f64> {
    (p > 0.0).then(|| 10.0 * p.log10())
}

impl EstimatorSummary {
    pub fn from_output(out: &EstimatorOutput) -> Self {
        EstimatorSummary {
            report: out.report.clone(),
            n_detections: out.detections.len(),
            truth_relative_power_db: out.truth_powers.iter().map(|&p| to_db(p)).collect(),
            noise_floor_db: to_db(out.noise_floor),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub noise_seed: u64,
    pub truths: Vec<Truth>,
    pub periodogram: EstimatorSummary,
    pub camp: EstimatorSummary,
}

/// Periodogram and CAMP on the same simulated input.
pub fn compare_estimators(cfg: &RunConfig) -> Result<Comparison> {
    let scenario = cfg.load_scenario()?;
    compare_on(cfg, &scenario)
}

pub fn compare_on(cfg: &RunConfig, scenario: &Scenario) -> Result<Comparison> {
    let sim = simulate(cfg, scenario)?;
    let pg = run_periodogram(&sim, cfg)?;
    let (camp, _) = run_camp(&sim, cfg)?;
    Ok(Comparison {
        noise_seed: cfg.noise_seed,
        truths: sim.truths(),
        periodogram: EstimatorSummary::from_output(&pg),
        camp: EstimatorSummary::from_output(&camp),
    })
}

/// [`compare_on`] for each noise seed, in parallel.
pub fn compare_seeds(cfg: &RunConfig, scenario: &Scenario, seeds: &[u64]) -> Result<Vec<Comparison>> {
    seeds
        .par_iter()
        .map(|&seed| {
            let cfg = RunConfig {
                noise_seed: seed,
                ..cfg.clone()
            };
            compare_on(&cfg, scenario)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub comb_size: usize,
    pub num_rb: usize,
    pub repetition_factor: usize,
    pub resource_elements: usize,
    pub periodogram_detected: usize,
    pub camp: EstimatorSummary,
    pub weakest_label: Option<String>,
    /// Relative CAMP power of the weakest target, linear.
    pub weakest_relative_power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub noise_seed: u64,
    pub rows: Vec<SweepRow>,
}

/// One CPI per comb size at constant bandwidth; returns the CAMP map of each.
pub fn sweep_comb_maps(
    cfg: &RunConfig,
    scenario: &Scenario,
    combs: &[usize],
) -> Result<(SweepReport, Vec<RangeDopplerMap>)> {
    let results: Vec<(SweepRow, RangeDopplerMap)> = combs
        .par_iter()
        .map(|&k| {
            let cfg = cfg.with_comb_size(k)?;
            let sim = simulate(&cfg, scenario)?;
            let pg = run_periodogram(&sim, &cfg)?;
            let (camp, _) = run_camp(&sim, &cfg)?;
            let weakest = sim.weakest_target();
            let row = SweepRow {
                comb_size: k,
                num_rb: cfg.prs.num_rb,
                repetition_factor: cfg.prs.repetition_factor,
                resource_elements: sim.alloc.len(),
                periodogram_detected: pg.report.n_detected_truth,
                camp: EstimatorSummary::from_output(&camp),
                weakest_label: weakest.map(|i| sim.targets[i].truth.label.clone()),
                weakest_relative_power: weakest.map_or(0.0, |i| camp.truth_powers[i]),
            };
            Ok((row, camp.map))
        })
        .collect::<Result<_>>()?;
    let (rows, maps) = results.into_iter().unzip();
    Ok((
        SweepReport {
            noise_seed: cfg.noise_seed,
            rows,
        },
        maps,
    ))
}

pub fn sweep_comb(cfg: &RunConfig, combs: &[usize]) -> Result<SweepReport> {
    let scenario = cfg.load_scenario()?;
    Ok(sweep_comb_maps(cfg, &scenario, combs)?.0)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn finish(mut w: BufWriter<File>) -> Result<()> {
    w.flush()?;
    Ok(())
}

/// Writes `<prefix>_map.csv`, `<prefix>_map.pgm`, `<prefix>_detections.json`
/// and `<prefix>_report.json`.
pub fn write_estimator(dir: &Path, prefix: &str, out: &EstimatorOutput) -> Result<()> {
    let mut w = create(dir, &format!("{prefix}_map.csv"))?;
    write_map_csv(&out.map, &mut w)?;
    finish(w)?;
    let mut w = create(dir, &format!("{prefix}_map.pgm"))?;
    write_map_pgm(&out.map, &mut w)?;
    finish(w)?;
    let mut w = create(dir, &format!("{prefix}_detections.json"))?;
    write_json(&out.detections, &mut w)?;
    finish(w)?;
    let mut w = create(dir, &format!("{prefix}_report.json"))?;
    write_json(&out.report, &mut w)?;
    finish(w)
}

pub fn write_camp_diagnostics(dir: &Path, sparse: &SparseMap) -> Result<()> {
    let mut w = create(dir, "camp_diagnostics.csv")?;
    sparse.write_diagnostics_csv(&mut w)?;
    finish(w)
}

/// Writes the simulation inputs: `truths.json`, `allocation.csv` and
/// `channel_estimate.csv` (`n,m,re,im` over the allocation).
pub fn write_simulation(dir: &Path, sim: &Simulation) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = create(dir, "truths.json")?;
    write_json(&sim.truths(), &mut w)?;
    finish(w)?;
    let mut w = create(dir, "allocation.csv")?;
    sim.alloc.write_csv(&mut w)?;
    finish(w)?;
    let mut w = create(dir, "channel_estimate.csv")?;
    writeln!(w, "n,m,re,im")?;
    let h = sim.estimate.values();
    for re in sim.alloc.entries() {
        let v = h[[re.n, re.m]];
        writeln!(w, "{},{},{},{}", re.n, re.m, v.re, v.im)?;
    }
    finish(w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub grid: (usize, usize),
    pub resource_elements: usize,
    pub periodogram_dims: (usize, usize),
    pub periodogram: EstimatorSummary,
    pub camp: EstimatorSummary,
    pub camp_iterations: usize,
    pub camp_support: usize,
}

/// Full pipeline; writes all artifacts into `cfg.output_dir`.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunSummary> {
    let scenario = cfg.load_scenario()?;
    let sim = simulate(cfg, &scenario)?;
    let dir = cfg.output_dir.as_path();
    write_simulation(dir, &sim)?;
    let pg = run_periodogram(&sim, cfg)?;
    write_estimator(dir, "periodogram", &pg)?;
    let (camp, sparse) = run_camp(&sim, cfg)?;
    write_estimator(dir, "camp", &camp)?;
    write_camp_diagnostics(dir, &sparse)?;
    let summary = RunSummary {
        grid: sim.estimate.dims(),
        resource_elements: sim.alloc.len(),
        periodogram_dims: pg.map.dims(),
        periodogram: EstimatorSummary::from_output(&pg),
        camp: EstimatorSummary::from_output(&camp),
        camp_iterations: sparse.iterations_run,
        camp_support: sparse.support_size,
    };
    let mut w = create(dir, "summary.json")?;
    write_json(&summary, &mut w)?;
    finish(w)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trip() {
        let cfg = RunConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn empty_config_is_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn field_errors_name_the_field() {
        let err = RunConfig::from_toml("[camp]\ntau = -1.0\niterations = 5\n").unwrap_err();
        assert!(err.to_string().contains("tau"), "{err}");
        let err = RunConfig::from_toml("[prs]\ncomb_size = 5\nrepetition_factor = 1\nnum_rb = 1\n").unwrap_err();
        assert!(err.to_string().contains("comb size"), "{err}");
        let err = RunConfig::from_toml("[periodogram]\npadding = [0, 1]\n").unwrap_err();
        assert!(err.to_string().contains("padding"), "{err}");
        assert!(RunConfig::from_toml("bogus = 1\n").is_err());
    }

    #[test]
    fn oversized_prs_rejected() {
        let text = "[prs]\ncomb_size = 12\nrepetition_factor = 29\nnum_rb = 135\n";
        assert!(RunConfig::from_toml(text).is_err());
        let text = "[prs]\ncomb_size = 12\nrepetition_factor = 28\nnum_rb = 136\n";
        assert!(RunConfig::from_toml(text).is_err());
    }

    #[test]
    fn comb_rescaling_keeps_span() {
        let cfg = RunConfig::default();
        for (k, f) in [(2, 168), (4, 84), (6, 56), (12, 28)] {
            let c = cfg.with_comb_size(k).unwrap();
            assert_eq!(c.prs.repetition_factor, f);
            assert_eq!(c.prs.num_rb, 135);
            assert_eq!(c.prs.time_span(), 336);
        }
    }

    #[test]
    fn thermal_noise_default() {
        let cfg = RunConfig::default();
        let r = cfg.radar_params().unwrap();
        assert!((r.noise_power - thermal_noise_per_re(120e3, 8.0)).abs() < 1e-30);
        let cfg = RunConfig::from_toml("[radar]\nnoise_power_w = 2e-12\n").unwrap();
        assert_eq!(cfg.radar_params().unwrap().noise_power, 2e-12);
    }
}
