use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use super::ape::ApeStats;
use super::csvio::{self, sig9};
use crate::pipeline::{FrameReport, StageOutcome};
use crate::sim::TrajectorySample;
use crate::Result;

/// Column order of `frames.csv`. Every run writes exactly these columns.
pub const FRAME_COLUMNS: [&str; 38] = [
    "frame",
    "t",
    "tx",
    "ty",
    "tz",
    "qx",
    "qy",
    "qz",
    "qw",
    "source",
    "degraded",
    "healthy_feeds",
    "raw_points",
    "filtered_points",
    "voxel_leaf",
    "valid_normals",
    "s2s_iterations",
    "s2s_converged",
    "s2s_fitness",
    "s2s_correspondences",
    "s2m_iterations",
    "s2m_converged",
    "s2m_fitness",
    "s2m_correspondences",
    "s2m_rotation_change",
    "gate_accepted",
    "gate_streak",
    "map_alive",
    "map_allocated",
    "map_bytes",
    "slid",
    "t_callback",
    "t_preprocess",
    "t_normals",
    "t_scan_to_scan",
    "t_scan_to_submap",
    "t_map_update",
    "odometry_delay",
];

pub const MAP_SIZE_COLUMNS: [&str; 5] = ["frame", "t", "alive", "allocated", "bytes"];

/// Run-level results that depend only on the inputs, never on wall-clock time.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub frames: usize,
    pub map_backend: String,
    pub ape: Option<ApeStats>,
    pub final_error_pct: Option<f64>,
    pub peak_alive_map_points: usize,
    pub final_alive_map_points: usize,
    pub peak_allocated_map_points: usize,
    pub slides: usize,
    pub degraded_frames: usize,
    pub gate_rejections: usize,
    pub pose_sources: BTreeMap<String, usize>,
    pub mean_filtered_points: f64,
    pub mean_voxel_leaf: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Percentiles {
    pub mean: f64,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

impl Percentiles {
    /// Nearest-rank percentiles. All zeros for an empty input.
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let rank = |p: f64| v[((p * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
        Self {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            p50: rank(0.5),
            p90: rank(0.9),
            p99: rank(0.99),
            max: v[v.len() - 1],
        }
    }
}

/// Wall-clock stage timings in seconds. Varies from run to run.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TimingSummary {
    pub callback: Percentiles,
    pub preprocess: Percentiles,
    pub normals: Percentiles,
    pub scan_to_scan: Percentiles,
    pub scan_to_submap: Percentiles,
    pub map_update: Percentiles,
    pub odometry_delay: Percentiles,
}

impl TimingSummary {
    pub fn of(reports: &[FrameReport]) -> Self {
        let col = |f: fn(&FrameReport) -> f64| {
            Percentiles::of(&reports.iter().map(f).collect::<Vec<_>>())
        };
        Self {
            callback: col(|r| r.timings.callback),
            preprocess: col(|r| r.timings.preprocess),
            normals: col(|r| r.timings.normals),
            scan_to_scan: col(|r| r.timings.scan_to_scan),
            scan_to_submap: col(|r| r.timings.scan_to_submap),
            map_update: col(|r| r.timings.map_update),
            odometry_delay: col(|r| r.odometry_delay),
        }
    }
}

impl Summary {
    pub fn of(reports: &[FrameReport], ape: Option<ApeStats>, map_backend: &str) -> Self {
        let n = reports.len().max(1) as f64;
        let mut pose_sources = BTreeMap::new();
        for r in reports {
            *pose_sources
                .entry(r.source.as_str().to_string())
                .or_insert(0) += 1;
        }
        Self {
            frames: reports.len(),
            map_backend: map_backend.to_string(),
            final_error_pct: ape.map(|a| a.final_error_pct()),
            ape,
            peak_alive_map_points: reports.iter().map(|r| r.map.alive).max().unwrap_or(0),
            final_alive_map_points: reports.last().map_or(0, |r| r.map.alive),
            peak_allocated_map_points: reports.iter().map(|r| r.map.allocated).max().unwrap_or(0),
            slides: reports.iter().filter(|r| r.slid).count(),
            degraded_frames: reports.iter().filter(|r| r.degraded).count(),
            gate_rejections: reports
                .iter()
                .filter(|r| r.gate_accepted == Some(false))
                .count(),
            pose_sources,
            mean_filtered_points: reports
                .iter()
                .map(|r| r.filtered_points as f64)
                .sum::<f64>()
                / n,
            mean_voxel_leaf: reports.iter().map(|r| r.voxel_leaf).sum::<f64>() / n,
        }
    }
}

fn stage_fields(s: &Option<StageOutcome>, with_rotation: bool) -> Vec<String> {
    let mut out = match s {
        Some(s) => vec![
            s.iterations.to_string(),
            s.converged.to_string(),
            sig9(s.fitness),
            s.correspondences.to_string(),
        ],
        None => vec![String::new(); 4],
    };
    if with_rotation {
        out.push(
            s.as_ref()
                .map_or(String::new(), |s| sig9(s.rotation_change)),
        );
    }
    out
}

pub fn frame_row(r: &FrameReport) -> Vec<String> {
    let mut row: Vec<String> = csvio::pose_row(r.timestamp, &r.pose)
        .into_iter()
        .map(sig9)
        .collect();
    row.insert(0, r.frame.to_string());
    row.push(r.source.as_str().to_string());
    row.push(r.degraded.to_string());
    row.push(r.healthy_feeds.to_string());
    row.push(r.raw_points.to_string());
    row.push(r.filtered_points.to_string());
    row.push(sig9(r.voxel_leaf));
    row.push(r.valid_normals.to_string());
    row.extend(stage_fields(&r.scan_to_scan, false));
    row.extend(stage_fields(&r.scan_to_submap, true));
    row.push(r.gate_accepted.map_or(String::new(), |g| g.to_string()));
    row.push(r.gate_streak.to_string());
    row.push(r.map.alive.to_string());
    row.push(r.map.allocated.to_string());
    row.push(r.map.bytes.to_string());
    row.push(r.slid.to_string());
    let t = &r.timings;
    for v in [
        t.callback,
        t.preprocess,
        t.normals,
        t.scan_to_scan,
        t.scan_to_submap,
        t.map_update,
        r.odometry_delay,
    ] {
        row.push(sig9(v));
    }
    row
}

pub fn estimate_trajectory(reports: &[FrameReport]) -> Vec<TrajectorySample> {
    reports
        .iter()
        .map(|r| TrajectorySample {
            timestamp: r.timestamp,
            pose: r.pose,
        })
        .collect()
}

/// Writes `frames.csv`, `map_size.csv`, `trajectory_est.csv`,
/// `trajectory_gt.csv`, `summary.json` and `timing.json` into `dir`.
pub fn write_reports(
    dir: &Path,
    reports: &[FrameReport],
    ground_truth: &[TrajectorySample],
    summary: &Summary,
    timing: &TimingSummary,
) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let rows: Vec<Vec<String>> = reports.iter().map(frame_row).collect();
    csvio::write_text_table(&dir.join("frames.csv"), &FRAME_COLUMNS, &rows)?;
    let sizes: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            vec![
                r.frame.to_string(),
                sig9(r.timestamp),
                r.map.alive.to_string(),
                r.map.allocated.to_string(),
                r.map.bytes.to_string(),
            ]
        })
        .collect();
    csvio::write_text_table(&dir.join("map_size.csv"), &MAP_SIZE_COLUMNS, &sizes)?;
    csvio::write_trajectory(
        &dir.join("trajectory_est.csv"),
        &estimate_trajectory(reports),
    )?;
    csvio::write_trajectory(&dir.join("trajectory_gt.csv"), ground_truth)?;
    std::fs::write(dir.join("summary.json"), pretty_json(summary) + "\n")?;
    std::fs::write(dir.join("timing.json"), pretty_json(timing) + "\n")?;
    Ok(())
}

pub fn pretty_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report types serialize")
}
