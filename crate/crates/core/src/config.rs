//! The single TOML document that configures a run. Every table is optional
//! and every key falls back to its default.
//!
//! ```toml
//! [preprocess]
//! n_desired = 3000
//! body_box = [0.4, 0.3, 0.3]
//!
//! [[preprocess.feeds]]
//! id = "top"
//! timeout_s = 0.5
//! extrinsic = { translation = [0.0, 0.0, 0.2], rpy_deg = [0.0, 0.0, 0.0] }
//!
//! [gicp]
//! threads = 4
//!
//! [map]
//! map_backend = "mto"
//!
//! [run]
//! mode = "simulate"
//! out = "out/corridor"
//!
//! [sim]
//! trajectory = "line"
//! frames = 100
//! ```

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::geometry::Pose;
use crate::map::MapConfig;
use crate::normals::{NormalEstimator, DEFAULT_NORMAL_K};
use crate::preprocess::{AdaptiveVoxelState, LidarFeed};
use crate::registration::GicpConfig;
use crate::sim::{LidarModel, LoopCourse, TrajectoryPreset};
use crate::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub preprocess: PreprocessConfig,
    pub normals: NormalsConfig,
    pub gicp: GicpConfig,
    pub map: MapConfig,
    pub run: RunConfig,
    pub sim: SimConfig,
}

impl Config {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.pipeline().validate()?;
        self.sim.validate()
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            preprocess: self.preprocess.clone(),
            normals: self.normals.clone(),
            gicp: self.gicp.clone(),
            map: self.map.clone(),
        }
    }
}

/// The subset of [`Config`] the odometry pipeline reads.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub normals: NormalsConfig,
    pub gicp: GicpConfig,
    pub map: MapConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.preprocess.voxel_state()?;
        self.preprocess.lidar_feeds()?;
        if let Some(b) = self.preprocess.body_box {
            if b.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::Config(format!(
                    "preprocess.body_box must be non-negative, got {b:?}"
                )));
            }
        }
        if self.normals.normal_k < 3 {
            return Err(Error::Config("normals.normal_k must be at least 3".into()));
        }
        if self
            .normals
            .max_surface_variation
            .is_some_and(|v| !(v > 0.0))
        {
            return Err(Error::Config(
                "normals.max_surface_variation must be positive".into(),
            ));
        }
        if self.normals.threads == 0 {
            return Err(Error::Config("normals.threads must be at least 1".into()));
        }
        self.gicp.validate()?;
        if !(self.map.window_half_extent > 0.0 && self.map.octree_leaf > 0.0) {
            return Err(Error::Config("map sizes must be positive".into()));
        }
        if !(self.map.margin() >= 0.0 && self.map.margin() < self.map.window_half_extent) {
            return Err(Error::Config(
                "map.slide_margin_m must lie in [0, window_half_extent_m)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub n_desired: usize,
    pub alpha: f64,
    pub d_init: f64,
    pub d_min: f64,
    pub d_max: f64,
    /// Half extents of the robot's own box in the body frame.
    pub body_box: Option<[f64; 3]>,
    pub deskew: bool,
    pub feeds: Vec<FeedConfig>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            n_desired: 3000,
            alpha: 1.0,
            d_init: 0.25,
            d_min: 0.01,
            d_max: 2.0,
            body_box: None,
            deskew: true,
            feeds: vec![FeedConfig::default()],
        }
    }
}

impl PreprocessConfig {
    pub fn voxel_state(&self) -> Result<AdaptiveVoxelState> {
        AdaptiveVoxelState::new(
            self.d_init,
            self.n_desired,
            self.d_min,
            self.d_max,
            self.alpha,
        )
        .map_err(|e| Error::Config(format!("preprocess: {e}")))
    }

    pub fn body_half_extents(&self) -> Option<Vector3<f64>> {
        self.body_box.map(Vector3::from)
    }

    pub fn lidar_feeds(&self) -> Result<Vec<LidarFeed>> {
        if self.feeds.is_empty() {
            return Err(Error::Config(
                "preprocess.feeds must list at least one lidar".into(),
            ));
        }
        self.feeds
            .iter()
            .map(|f| {
                LidarFeed::new(f.id.clone(), f.extrinsic.pose(), f.timeout_s)
                    .map_err(|e| Error::Config(format!("feed {:?}: {e}", f.id)))
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedConfig {
    pub id: String,
    pub extrinsic: Extrinsic,
    pub timeout_s: f64,
}

impl Default for FeedConfig {
    fn default() -> Self {
        Self {
            id: "lidar0".into(),
            extrinsic: Extrinsic::default(),
            timeout_s: 0.5,
        }
    }
}

/// Sensor-to-body transform as translation plus roll/pitch/yaw in degrees.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Extrinsic {
    pub translation: [f64; 3],
    pub rpy_deg: [f64; 3],
}

impl Extrinsic {
    pub fn pose(&self) -> Pose {
        let [r, p, y] = self.rpy_deg.map(f64::to_radians);
        Pose::from_euler(r, p, y, Vector3::from(self.translation))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NormalsConfig {
    pub normal_k: usize,
    pub threads: usize,
    /// Drop normals whose neighborhood has `lambda_min / trace` above this.
    pub max_surface_variation: Option<f64>,
}

impl NormalsConfig {
    pub fn estimator(&self) -> NormalEstimator {
        NormalEstimator {
            k: self.normal_k,
            threads: self.threads,
            max_surface_variation: self.max_surface_variation,
        }
    }
}

impl Default for NormalsConfig {
    fn default() -> Self {
        Self {
            normal_k: DEFAULT_NORMAL_K,
            threads: 1,
            max_surface_variation: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunMode {
    #[default]
    Simulate,
    Replay,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: RunMode,
    /// Dataset directory read in replay mode.
    pub dataset: Option<PathBuf>,
    /// Report directory.
    pub out: PathBuf,
    /// In simulate mode, also write the generated dataset here.
    pub save_dataset: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            mode: RunMode::Simulate,
            dataset: None,
            out: PathBuf::from("out"),
            save_dataset: None,
        }
    }
}

/// Where the per-frame prior handed to the pipeline comes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorSource {
    #[default]
    None,
    /// Rotation integrated from the gyro, zero translation.
    Gyro,
    /// Ground-truth delta with Gaussian noise, standing in for wheel odometry.
    Odometry,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    /// `room`, `corridor` or `loop`; chosen from the trajectory when absent.
    pub scene: Option<String>,
    pub trajectory: TrajectoryPreset,
    pub speed: f64,
    pub frames: usize,
    pub seed: u64,
    pub range_noise: f64,
    /// Move the sensor during each sweep, producing motion distortion.
    pub sweep_motion: bool,
    pub imu_rate: f64,
    pub prior: PriorSource,
    /// Per-frame standard deviation of odometry prior noise, meters and radians.
    pub prior_noise: [f64; 2],
    pub corridor_length: Option<f64>,
    pub course: LoopCourse,
    pub lidar: LidarModel,
    pub threads: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            scene: None,
            trajectory: TrajectoryPreset::Line,
            speed: 1.0,
            frames: 100,
            seed: 0,
            range_noise: 0.0,
            sweep_motion: true,
            imu_rate: 200.0,
            prior: PriorSource::None,
            prior_noise: [0.005, 0.001],
            corridor_length: None,
            course: LoopCourse::default(),
            lidar: LidarModel::default(),
            threads: 1,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.lidar.validate()?;
        if self.frames == 0 {
            return Err(Error::Config("sim.frames must be at least 1".into()));
        }
        if !(self.speed >= 0.0 && self.speed.is_finite()) {
            return Err(Error::Config(format!(
                "sim.speed must be non-negative, got {}",
                self.speed
            )));
        }
        if !(self.range_noise >= 0.0) || self.prior_noise.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config(
                "sim noise levels must be non-negative".into(),
            ));
        }
        if !(self.imu_rate > 0.0) {
            return Err(Error::Config("sim.imu_rate must be positive".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("sim.threads must be at least 1".into()));
        }
        let c = &self.course;
        if !(c.length > 0.0
            && c.width > 0.0
            && c.half_width > 0.0
            && c.corner_radius > c.half_width)
        {
            return Err(Error::Config(
                "sim.course needs positive sides and corner_radius > half_width".into(),
            ));
        }
        if let Some(name) = &self.scene {
            if !matches!(name.as_str(), "room" | "corridor" | "loop") {
                return Err(Error::Config(format!("unknown scene {name:?}")));
            }
        }
        Ok(())
    }

    pub fn scene_name(&self) -> &str {
        match (&self.scene, self.trajectory) {
            (Some(s), _) => s,
            (None, TrajectoryPreset::Line) => "corridor",
            (None, TrajectoryPreset::CorridorLoop) => "loop",
            (None, TrajectoryPreset::Static | TrajectoryPreset::FigureEight) => "room",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let cfg = Config::from_toml_str("").unwrap();
        assert_eq!(cfg, Config::default());
        assert_eq!(cfg.gicp.max_iterations, 20);
        assert_eq!(cfg.gicp.max_corr_dist, 0.3);
        assert_eq!(cfg.gicp.step_tolerance, 1e-10);
        assert_eq!(cfg.gicp.rot_fitness_threshold, 0.005);
        assert_eq!(cfg.map.window_half_extent, 25.0);
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg = Config::default();
        cfg.map.backend = crate::map::MapBackendKind::Mto;
        cfg.sim.trajectory = TrajectoryPreset::FigureEight;
        cfg.preprocess.body_box = Some([0.5, 0.4, 0.3]);
        let back = Config::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn reads_documented_keys() {
        let cfg = Config::from_toml_str(
            r#"
            [preprocess]
            n_desired = 1000
            [[preprocess.feeds]]
            id = "front"
            timeout_s = 0.2
            extrinsic = { translation = [0.3, 0.0, 0.1], rpy_deg = [0.0, 0.0, 90.0] }
            [normals]
            normal_k = 12
            [gicp]
            threads = 4
            rotational_gate = false
            [map]
            map_backend = "mto"
            window_half_extent_m = 10.0
            slide_margin_m = 1.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.preprocess.n_desired, 1000);
        let feeds = cfg.preprocess.lidar_feeds().unwrap();
        assert_eq!(feeds[0].id, "front");
        assert!((feeds[0].extrinsic.rotation_angle() - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        assert_eq!(cfg.normals.normal_k, 12);
        assert_eq!(cfg.map.margin(), 1.0);
    }

    #[test]
    fn rejects_bad_documents() {
        for doc in [
            "[gicp]\nmax_iterations = 0",
            "[gicp]\nbogus = 1",
            "[preprocess]\nalpha = 2.0",
            "[preprocess]\nfeeds = []",
            "[map]\nmap_backend = \"btree\"",
            "[map]\nslide_margin_m = 30.0",
            "[sim]\nframes = 0",
            "[sim]\nscene = \"moon\"",
            "not toml at all [",
        ] {
            assert!(
                matches!(Config::from_toml_str(doc), Err(Error::Config(_))),
                "{doc}"
            );
        }
    }
}
