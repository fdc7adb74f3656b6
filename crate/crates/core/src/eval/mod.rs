//! Evaluation harness: synthetic and on-disk datasets, a frame-by-frame
//! runner, absolute pose error, and plot-ready reports.

mod ape;
pub mod csvio;
mod dataset;
mod report;
mod runner;
mod simulate;

pub use ape::{ape, ape_within, ApeStats};
pub use dataset::{
    quantize, read_scan, scan_path, write_scan, Dataset, DatasetMeta, LidarMeta, PriorRecord,
    ScanSource, SensorFrame, FORMAT_VERSION,
};
pub use report::{
    estimate_trajectory, frame_row, pretty_json, write_reports, Percentiles, Summary,
    TimingSummary, FRAME_COLUMNS, MAP_SIZE_COLUMNS,
};
pub use runner::{exit_code, load_dataset, run, RunOutput, Runner};
pub use simulate::{integrate_gyro, scene_for, simulate_dataset, trajectory_for};

use crate::config::Config;
use crate::sim::TrajectoryPreset;
use crate::{Error, Result};

pub const PRESETS: [&str; 6] = [
    "static",
    "line",
    "corridor",
    "corridor-loop",
    "loop",
    "figure-eight",
];

/// A ready-to-run simulation. `corridor` is the straight `line` run and
/// `loop` the `corridor-loop` run.
pub fn preset(name: &str) -> Result<Config> {
    let mut cfg = Config::default();
    let (trajectory, speed) = match name {
        "static" => (TrajectoryPreset::Static, 0.0),
        "line" | "corridor" => (TrajectoryPreset::Line, 1.0),
        "corridor-loop" | "loop" => (TrajectoryPreset::CorridorLoop, 2.0),
        "figure-eight" => (TrajectoryPreset::FigureEight, 1.0),
        other => {
            return Err(Error::Config(format!(
                "unknown preset {other:?} (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    };
    cfg.sim.trajectory = trajectory;
    cfg.sim.speed = speed;
    Ok(cfg)
}
