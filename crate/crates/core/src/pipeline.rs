//! Per-scan odometry: preprocess, match against the previous scan, refine
//! against the sliding map, then grow the map.
//!
//! The pipeline always emits a pose. When a stage cannot run or fails, the
//! motion estimate falls back to the external prior, then to the previous
//! frame's motion, then to standing still, and the report is flagged.

use std::time::Instant;

use serde::Serialize;

use crate::config::PipelineConfig;
use crate::geometry::{se3_apply, Point3, PointCloud, Pose};
use crate::map::{MapStore, MemoryStats};
use crate::preprocess::{
    adaptive_voxel_filter, body_filter, merge_clouds, motion_deskew, AdaptiveVoxelState, ImuSample,
    LidarFeed,
};
use crate::registration::{
    gicp_align, rotational_gate, RegistrationResult, ScanTarget, MIN_SOURCE_NORMALS,
};
use crate::{Error, Result};

/// One sweep from one lidar. Point timestamps are offsets from `scan_start`.
#[derive(Clone, Debug)]
pub struct LidarFrame {
    pub feed: LidarFeed,
    pub cloud: PointCloud,
    pub scan_start: f64,
    pub scan_end: f64,
}

/// Motion since the previous scan from a non-lidar source.
#[derive(Clone, Debug, PartialEq)]
pub struct ExternalPrior {
    /// Previous body pose to current body pose.
    pub delta: Pose,
    pub source: String,
    pub timestamp: f64,
}

impl ExternalPrior {
    pub fn new(delta: Pose, source: impl Into<String>, timestamp: f64) -> Result<Self> {
        if !delta.is_finite() || !timestamp.is_finite() {
            return Err(Error::invalid("external prior must be finite"));
        }
        Ok(Self {
            delta,
            source: source.into(),
            timestamp,
        })
    }
}

/// Which estimate produced the frame's pose.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PoseSource {
    Bootstrap,
    ScanToMap,
    ScanToScan,
    Prior,
    ConstantVelocity,
    Hold,
}

impl PoseSource {
    pub fn as_str(self) -> &'static str {
        match self {
            PoseSource::Bootstrap => "bootstrap",
            PoseSource::ScanToMap => "scan_to_map",
            PoseSource::ScanToScan => "scan_to_scan",
            PoseSource::Prior => "prior",
            PoseSource::ConstantVelocity => "constant_velocity",
            PoseSource::Hold => "hold",
        }
    }
}

/// Wall-clock seconds per stage. `callback` spans the whole call.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct StageTimings {
    pub callback: f64,
    pub preprocess: f64,
    pub normals: f64,
    pub scan_to_scan: f64,
    pub scan_to_submap: f64,
    pub map_update: f64,
}

impl StageTimings {
    pub fn stage_sum(&self) -> f64 {
        self.preprocess + self.normals + self.scan_to_scan + self.scan_to_submap + self.map_update
    }
}

/// Summary of one registration stage.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StageOutcome {
    pub converged: bool,
    pub iterations: usize,
    pub fitness: f64,
    pub rotation_change: f64,
    pub correspondences: usize,
    pub failure: Option<String>,
}

impl From<&RegistrationResult> for StageOutcome {
    fn from(r: &RegistrationResult) -> Self {
        Self {
            converged: r.converged,
            iterations: r.iterations,
            fitness: r.fitness,
            rotation_change: r.rotation_change,
            correspondences: r.correspondences,
            failure: r.failure.clone(),
        }
    }
}

impl StageOutcome {
    fn error(e: &Error) -> Self {
        Self {
            converged: false,
            iterations: 0,
            fitness: f64::INFINITY,
            rotation_change: 0.0,
            correspondences: 0,
            failure: Some(e.to_string()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameReport {
    pub frame: usize,
    /// Latest scan end among the frame's feeds.
    pub timestamp: f64,
    /// World from body.
    pub pose: Pose,
    pub source: PoseSource,
    pub degraded: bool,
    pub healthy_feeds: usize,
    pub raw_points: usize,
    pub filtered_points: usize,
    pub voxel_leaf: f64,
    pub valid_normals: usize,
    pub scan_to_scan: Option<StageOutcome>,
    pub scan_to_submap: Option<StageOutcome>,
    /// `None` when the scan-to-map stage did not produce a result.
    pub gate_accepted: Option<bool>,
    /// Consecutive frames whose scan-to-map result was gated out.
    pub gate_streak: usize,
    pub map: MemoryStats,
    pub slid: bool,
    pub timings: StageTimings,
    /// Seconds from the scan end to the report, in dataset time.
    pub odometry_delay: f64,
}

struct PreviousScan {
    /// Body frame, with normals; the map received it at the current pose.
    cloud: PointCloud,
    target: ScanTarget,
}

pub struct OdometryState {
    config: PipelineConfig,
    pose: Pose,
    map: Option<MapStore>,
    previous: Option<PreviousScan>,
    voxel: AdaptiveVoxelState,
    last_delta: Option<Pose>,
    gate_streak: usize,
    frames: usize,
}

impl std::fmt::Debug for OdometryState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OdometryState")
            .field("pose", &self.pose)
            .field("frames", &self.frames)
            .field("voxel", &self.voxel)
            .field("map", &self.map)
            .finish()
    }
}

fn seconds(since: Instant) -> f64 {
    since.elapsed().as_secs_f64()
}

impl OdometryState {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        let voxel = config.preprocess.voxel_state()?;
        Ok(Self {
            config,
            pose: Pose::identity(),
            map: None,
            previous: None,
            voxel,
            last_delta: None,
            gate_streak: 0,
            frames: 0,
        })
    }

    /// Sets the starting pose and centers the map window on it.
    pub fn bootstrap(&mut self, initial_pose: Pose) -> Result<()> {
        if self.map.is_some() {
            return Err(Error::AlreadyInitialized);
        }
        if !initial_pose.is_finite() {
            return Err(Error::invalid("initial pose must be finite"));
        }
        self.map = Some(MapStore::new(
            self.config.map.clone(),
            *initial_pose.translation(),
        )?);
        self.pose = initial_pose;
        Ok(())
    }

    pub fn is_initialized(&self) -> bool {
        self.map.is_some()
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn pose(&self) -> &Pose {
        &self.pose
    }

    pub fn map(&self) -> Option<&MapStore> {
        self.map.as_ref()
    }

    pub fn map_mut(&mut self) -> Option<&mut MapStore> {
        self.map.as_mut()
    }

    pub fn voxel_state(&self) -> &AdaptiveVoxelState {
        &self.voxel
    }

    /// The preprocessed scan of the last frame, in the body frame.
    pub fn last_scan(&self) -> Option<&PointCloud> {
        self.previous.as_ref().map(|p| &p.cloud)
    }

    pub fn frames_processed(&self) -> usize {
        self.frames
    }

    /// Runs one scan through the pipeline. Bootstraps at the identity pose
    /// if [`bootstrap`](Self::bootstrap) was not called.
    pub fn process_scan(
        &mut self,
        frames: &[LidarFrame],
        imu: &[ImuSample],
        prior: Option<&ExternalPrior>,
        now: f64,
    ) -> Result<FrameReport> {
        let start = Instant::now();
        if frames.is_empty() {
            return Err(Error::invalid(
                "process_scan needs at least one lidar frame",
            ));
        }
        if !self.is_initialized() {
            self.bootstrap(Pose::identity())?;
        }
        let mut timings = StageTimings::default();
        let scan_end = frames
            .iter()
            .map(|f| f.scan_end)
            .fold(f64::NEG_INFINITY, f64::max);

        let stage = Instant::now();
        let healthy_feeds = frames.iter().filter(|f| f.feed.is_healthy(now)).count();
        let mut deskewed = Vec::with_capacity(frames.len());
        for f in frames {
            deskewed.push((f.feed.clone(), self.deskew(f, imu)?));
        }
        let merged = merge_clouds(&deskewed, now);
        let raw_points = merged.len();
        let filtered = match self.config.preprocess.body_half_extents() {
            Some(h) => body_filter(&merged, &h),
            None => merged,
        };
        let (scan, next_voxel) = adaptive_voxel_filter(&filtered, &self.voxel);
        let voxel_leaf = self.voxel.d_leaf;
        self.voxel = next_voxel;
        timings.preprocess = seconds(stage);

        let stage = Instant::now();
        let k = self.config.normals.normal_k;
        let scan = if scan.len() > k {
            self.config
                .normals
                .estimator()
                .estimate(&scan, &Point3::zeros())?
        } else {
            scan
        };
        let valid_normals = scan.valid_normal_count();
        timings.normals = seconds(stage);

        let mut report = FrameReport {
            frame: self.frames,
            timestamp: scan_end,
            pose: self.pose,
            source: PoseSource::Hold,
            degraded: false,
            healthy_feeds,
            raw_points,
            filtered_points: scan.len(),
            voxel_leaf,
            valid_normals,
            scan_to_scan: None,
            scan_to_submap: None,
            gate_accepted: None,
            gate_streak: self.gate_streak,
            map: MemoryStats::default(),
            slid: false,
            timings,
            odometry_delay: 0.0,
        };
        self.frames += 1;

        if valid_normals < MIN_SOURCE_NORMALS {
            // Nothing usable to register or map: coast on the fallback chain.
            let (delta, source) = self.fallback_delta(prior);
            self.apply_delta(&delta);
            report.source = source;
            report.degraded = true;
        } else if self.previous.is_none() {
            report.source = PoseSource::Bootstrap;
            self.update_map(&scan, &mut report)?;
        } else {
            self.register(&scan, prior, &mut report)?;
            self.update_map(&scan, &mut report)?;
        }

        report.pose = self.pose;
        report.gate_streak = self.gate_streak;
        report.map = self
            .map
            .as_ref()
            .map(MapStore::memory_stats)
            .unwrap_or_default();
        report.timings.callback = seconds(start);
        report.odometry_delay = (now - scan_end).max(0.0) + report.timings.callback;
        Ok(report)
    }

    fn deskew(&self, f: &LidarFrame, imu: &[ImuSample]) -> Result<PointCloud> {
        if !self.config.preprocess.deskew || imu.is_empty() || f.cloud.timestamps().is_none() {
            return Ok(f.cloud.clone());
        }
        // Gyro rates are in the body frame; de-skew works in the sensor frame.
        let to_sensor = f.feed.extrinsic.rotation().inverse();
        let local: Vec<ImuSample> = imu
            .iter()
            .map(|s| ImuSample {
                angular_velocity: to_sensor * s.angular_velocity,
                ..*s
            })
            .collect();
        motion_deskew(&f.cloud, &local, f.scan_start, f.scan_end)
    }

    fn fallback_delta(&self, prior: Option<&ExternalPrior>) -> (Pose, PoseSource) {
        if let Some(p) = prior {
            (p.delta, PoseSource::Prior)
        } else if let Some(v) = self.last_delta {
            (v, PoseSource::ConstantVelocity)
        } else {
            (Pose::identity(), PoseSource::Hold)
        }
    }

    fn apply_delta(&mut self, delta: &Pose) {
        self.pose = (self.pose * *delta).renormalized();
        self.last_delta = Some(*delta);
    }

    fn register(
        &mut self,
        scan: &PointCloud,
        prior: Option<&ExternalPrior>,
        report: &mut FrameReport,
    ) -> Result<()> {
        let gicp = &self.config.gicp;
        let previous = self
            .previous
            .as_ref()
            .expect("previous scan present after the first frame");

        let stage = Instant::now();
        let seed = prior.map_or_else(Pose::identity, |p| p.delta);
        let s2s = gicp_align(scan, &previous.target, &seed, gicp);
        report.timings.scan_to_scan = seconds(stage);
        let (delta, mut source) = match &s2s {
            Ok(r) if r.is_success() => (r.pose, PoseSource::ScanToScan),
            _ => {
                report.degraded = true;
                self.fallback_delta(prior)
            }
        };
        report.scan_to_scan = Some(match &s2s {
            Ok(r) => r.into(),
            Err(e) => StageOutcome::error(e),
        });

        let stage = Instant::now();
        let s2s_pose = (self.pose * delta).renormalized();
        let map = self.map.as_ref().expect("map exists once initialized");
        let s2m = gicp_align(scan, map, &s2s_pose, gicp);
        report.timings.scan_to_submap = seconds(stage);
        let mut new_pose = s2s_pose;
        match &s2m {
            Ok(r) if r.is_success() => {
                let accept = rotational_gate(r, gicp);
                report.gate_accepted = Some(accept);
                if accept {
                    new_pose = r.pose;
                    source = PoseSource::ScanToMap;
                    self.gate_streak = 0;
                } else {
                    self.gate_streak += 1;
                }
            }
            _ => report.degraded = true,
        }
        report.scan_to_submap = Some(match &s2m {
            Ok(r) => r.into(),
            Err(e) => StageOutcome::error(e),
        });

        let delta = self.pose.inverse() * new_pose;
        self.apply_delta(&delta);
        report.source = source;
        Ok(())
    }

    fn update_map(&mut self, scan: &PointCloud, report: &mut FrameReport) -> Result<()> {
        let stage = Instant::now();
        let map = self.map.as_mut().expect("map exists once initialized");
        map.insert_scan(&se3_apply(&self.pose, scan))?;
        report.slid = map.slide_window(self.pose.translation());
        self.previous = Some(PreviousScan {
            target: ScanTarget::new(scan)?,
            cloud: scan.clone(),
        });
        report.timings.map_update = seconds(stage);
        Ok(())
    }
}
