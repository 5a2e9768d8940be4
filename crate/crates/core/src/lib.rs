//! PRS-based monostatic OFDM sensing: comb-structured transmit grids,
//! point-scatterer echo synthesis, periodogram and 2D-CAMP range-Doppler
//! estimation, and CA-CFAR detection.

pub mod camp;
pub mod channel;
pub mod detect;
pub mod error;
pub mod export;
pub mod geometry;
pub mod pipeline;
pub mod prs;
pub mod scenario;
pub mod specest;
pub mod transform;
pub mod waveform;

pub use camp::{
    camp_run, camp_to_map, soft_threshold, tau_from_pfa, CampConfig, IterationStats, NoiseEstimator, ResidualVariant,
    SparseMap,
};
pub use channel::{
    effective_channel, path_params, synthesize_rx, visible_centers, ClutterPoint, EchoPath, RadarParams,
    ReflectionCenter, Vehicle,
};
pub use detect::{cfar_alpha, cfar_detect, match_detections, CfarConfig, Detection, MatchReport, Truth};
pub use error::{Error, Result};
pub use export::{read_map_csv, write_json, write_map_csv, write_map_pgm};
pub use geometry::Vec2;
pub use pipeline::{
    compare_estimators, run_pipeline, simulate, sweep_comb, Comparison, EstimatorOutput, RunConfig, RunSummary, Simulation,
    SweepReport,
};
pub use prs::{comb_offsets, generate_allocation, generate_prs_symbols, OfdmGrid, PrsConfig, Re, ResourceSet};
pub use scenario::{Scenario, Target};
pub use specest::{estimate_channel, periodogram, ChannelEstimate, RangeDopplerMap};
pub use waveform::{Waveform, WaveformMeta, SPEED_OF_LIGHT};
