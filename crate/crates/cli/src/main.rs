//! `combsense`: simulate PRS sensing scenes and estimate range-Doppler maps.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use combsense::detect::{cfar_detect, match_detections};
use combsense::export::{read_map_csv, write_json, write_map_csv, write_map_pgm};
use combsense::pipeline::{
    compare_on, run_camp, run_periodogram, run_pipeline, simulate, sweep_comb_maps, write_camp_diagnostics,
    write_estimator, write_simulation, RunConfig,
};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "combsense", version, about = "PRS-based OFDM sensing: periodogram and 2D-CAMP range-Doppler maps")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Noise seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Periodogram zero-padding factor, applied to both axes.
    #[arg(long, global = true)]
    padding: Option<usize>,
    /// CAMP threshold multiplier.
    #[arg(long, global = true)]
    tau: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Full pipeline: both estimators, detections, reports, diagnostics.
    Run,
    /// Simulate the scene; write truths, allocation and channel estimate.
    Simulate,
    /// Periodogram map with CFAR detections.
    Periodogram,
    /// 2D-CAMP map with CFAR detections and iteration diagnostics.
    Camp,
    /// CFAR detection and scoring on a saved map CSV.
    Detect {
        /// Map written by `periodogram` or `camp`.
        #[arg(long)]
        map: PathBuf,
    },
    /// Periodogram and CAMP side by side on the same input.
    Compare,
    /// CAMP maps across comb sizes at constant bandwidth.
    SweepComb {
        #[arg(long, value_delimiter = ',', default_value = "2,4,6,12")]
        combs: Vec<usize>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

fn load_config(o: &Overrides) -> Result<RunConfig> {
    let mut cfg = match &o.config {
        Some(path) => RunConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = o.seed {
        cfg.noise_seed = seed;
    }
    if let Some(out) = &o.out {
        cfg.output_dir = out.clone();
    }
    if let Some(p) = o.padding {
        cfg.periodogram.padding = [p, p];
    }
    if let Some(tau) = o.tau {
        cfg.camp.tau = tau;
    }
    cfg.validate().context("invalid configuration")?;
    Ok(cfg)
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli.overrides)?;
    let dir = cfg.output_dir.clone();
    let mut stdout = std::io::stdout().lock();
    match cli.command {
        Command::Config => {
            write!(stdout, "{}", cfg.to_toml()?)?;
        }
        Command::Run => {
            std::fs::create_dir_all(&dir)?;
            let summary = run_pipeline(&cfg)?;
            write_json(&summary, &mut stdout)?;
        }
        Command::Simulate => {
            let sim = simulate(&cfg, &cfg.load_scenario()?)?;
            write_simulation(&dir, &sim)?;
            let (n_sc, n_sy) = sim.estimate.dims();
            writeln!(
                stdout,
                "grid {n_sc}x{n_sy}, {} PRS resource elements, {} visible centers, {} clutter points",
                sim.alloc.len(),
                sim.targets.len(),
                sim.clutter.len()
            )?;
        }
        Command::Periodogram => {
            let sim = simulate(&cfg, &cfg.load_scenario()?)?;
            std::fs::create_dir_all(&dir)?;
            let out = run_periodogram(&sim, &cfg)?;
            write_estimator(&dir, "periodogram", &out)?;
            write_json(&out.report, &mut stdout)?;
        }
        Command::Camp => {
            let sim = simulate(&cfg, &cfg.load_scenario()?)?;
            std::fs::create_dir_all(&dir)?;
            let (out, sparse) = run_camp(&sim, &cfg)?;
            write_estimator(&dir, "camp", &out)?;
            write_camp_diagnostics(&dir, &sparse)?;
            write_json(&out.report, &mut stdout)?;
        }
        Command::Detect { map } => {
            let file = File::open(&map).with_context(|| format!("opening {}", map.display()))?;
            let rd = read_map_csv(BufReader::new(file))?;
            let radar = cfg.radar_params()?;
            let truths: Vec<_> = cfg
                .load_scenario()?
                .targets(&radar)?
                .into_iter()
                .map(|t| t.truth)
                .collect();
            let dets = cfar_detect(&rd, &cfg.cfar)?;
            let report = match_detections(&dets, &truths, &rd, cfg.match_tol_bins);
            let stem = map
                .file_stem()
                .and_then(|s| s.to_str())
                .unwrap_or("map")
                .trim_end_matches("_map");
            let mut w = create(&dir, &format!("{stem}_detections.json"))?;
            write_json(&dets, &mut w)?;
            w.flush()?;
            let mut w = create(&dir, &format!("{stem}_report.json"))?;
            write_json(&report, &mut w)?;
            w.flush()?;
            write_json(&report, &mut stdout)?;
        }
        Command::Compare => {
            let comparison = compare_on(&cfg, &cfg.load_scenario()?)?;
            let mut w = create(&dir, "comparison.json")?;
            write_json(&comparison, &mut w)?;
            w.flush()?;
            writeln!(stdout, "{:<8} {:>12} {:>12}", "center", "periodogram", "camp")?;
            let fmt = |p: Option<f64>| p.map_or_else(|| "-".to_string(), |v| format!("{v:.1} dB"));
            for (k, t) in comparison.truths.iter().enumerate() {
                writeln!(
                    stdout,
                    "{:<8} {:>12} {:>12}",
                    t.label,
                    fmt(comparison.periodogram.truth_relative_power_db[k]),
                    fmt(comparison.camp.truth_relative_power_db[k])
                )?;
            }
            writeln!(
                stdout,
                "detected {:>17} {:>12}",
                comparison.periodogram.report.n_detected_truth, comparison.camp.report.n_detected_truth
            )?;
        }
        Command::SweepComb { combs } => {
            if combs.is_empty() {
                bail!("--combs needs at least one comb size");
            }
            let (report, maps) = sweep_comb_maps(&cfg, &cfg.load_scenario()?, &combs)?;
            for (row, map) in report.rows.iter().zip(&maps) {
                let mut w = create(&dir, &format!("camp_map_k{}.csv", row.comb_size))?;
                write_map_csv(map, &mut w)?;
                w.flush()?;
                let mut w = create(&dir, &format!("camp_map_k{}.pgm", row.comb_size))?;
                write_map_pgm(map, &mut w)?;
                w.flush()?;
            }
            let mut w = create(&dir, "sweep.json")?;
            write_json(&report, &mut w)?;
            w.flush()?;
            writeln!(stdout, "{:>4} {:>6} {:>4} {:>8} {:>10} {:>14}", "K_c", "N_RB", "F", "detected", "pg detected", "weakest (dB)")?;
            for row in &report.rows {
                let weakest = if row.weakest_relative_power > 0.0 {
                    format!("{:.1}", 10.0 * row.weakest_relative_power.log10())
                } else {
                    "-".to_string()
                };
                writeln!(
                    stdout,
                    "{:>4} {:>6} {:>4} {:>8} {:>10} {:>14}",
                    row.comb_size,
                    row.num_rb,
                    row.repetition_factor,
                    row.camp.report.n_detected_truth,
                    row.periodogram_detected,
                    weakest
                )?;
            }
        }
    }
    stdout.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
