use nalgebra::{UnitQuaternion, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::dataset::{
    quantize, Dataset, DatasetMeta, LidarMeta, PriorRecord, ScanSource, FORMAT_VERSION,
};
use crate::config::{Config, PriorSource};
use crate::geometry::{PointCloud, Pose};
use crate::preprocess::ImuSample;
use crate::sim::{add_range_noise, simulate_sweep, SceneSpec, Trajectory, TrajectoryPreset};
use crate::{Error, Result};

/// Extra corridor beyond the distance the line trajectory covers.
const CORRIDOR_SLACK_M: f64 = 10.0;

struct SimScans {
    scene: SceneSpec,
    trajectory: Trajectory,
    lidars: Vec<LidarMeta>,
    meta_period: f64,
    t0: f64,
    sweep_motion: bool,
    range_noise: f64,
    seed: u64,
    threads: usize,
}

impl ScanSource for SimScans {
    fn scan(&self, frame: usize) -> Result<Vec<PointCloud>> {
        let start = self.t0 + self.meta_period * frame as f64;
        let end = start + self.meta_period;
        let clouds = self
            .lidars
            .iter()
            .enumerate()
            .map(|(j, l)| {
                let extrinsic = l.extrinsic.pose();
                let cloud = simulate_sweep(
                    &self.scene,
                    &l.model,
                    start,
                    |t| {
                        let t = if self.sweep_motion { t } else { end };
                        self.trajectory.pose_at(t) * extrinsic
                    },
                    self.threads,
                );
                let mut rng = ChaCha8Rng::seed_from_u64(frame_seed(self.seed, frame, j));
                quantize(&add_range_noise(&cloud, self.range_noise, &mut rng))
            })
            .collect();
        Ok(clouds)
    }
}

fn frame_seed(seed: u64, frame: usize, lidar: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ ((frame as u64) << 8 | lidar as u64)
}

/// The scene a simulated run drives through.
pub fn scene_for(config: &Config) -> Result<SceneSpec> {
    let sim = &config.sim;
    match sim.scene_name() {
        "room" => Ok(SceneSpec::room()),
        "corridor" => {
            let covered = sim.speed * sim.lidar.scan_period * sim.frames as f64;
            let length = sim
                .corridor_length
                .unwrap_or(covered + CORRIDOR_SLACK_M)
                .max(10.0);
            Ok(SceneSpec::corridor(length, sim.seed))
        }
        "loop" => Ok(SceneSpec::loop_corridor(&sim.course, sim.seed)),
        other => Err(Error::Config(format!("unknown scene {other:?}"))),
    }
}

pub fn trajectory_for(config: &Config) -> Result<Trajectory> {
    Ok(Trajectory::new(config.sim.trajectory, config.sim.speed)?.with_course(config.sim.course))
}

/// Builds a synthetic dataset described by `config.sim`, with one lidar per
/// configured feed. Scans are ray-cast lazily when read.
pub fn simulate_dataset(config: &Config) -> Result<Dataset> {
    config.validate()?;
    let sim = &config.sim;
    let scene = scene_for(config)?;
    let trajectory = trajectory_for(config)?;
    let period = sim.lidar.scan_period;
    let t0 = 0.0;
    let frames = sim.frames;
    let lidars: Vec<LidarMeta> = config
        .preprocess
        .feeds
        .iter()
        .map(|f| LidarMeta {
            id: f.id.clone(),
            model: sim.lidar,
            extrinsic: f.extrinsic,
            timeout_s: f.timeout_s,
        })
        .collect();

    let t_end = t0 + period * frames as f64;
    let imu = trajectory.imu(t0, t_end, sim.imu_rate);
    let ground_truth: Vec<_> = trajectory.samples(t0 + period, period, frames);
    let priors = make_priors(config, &imu, &ground_truth);
    let prior_source = match sim.prior {
        PriorSource::None => None,
        PriorSource::Gyro => Some("gyro".to_string()),
        PriorSource::Odometry => Some("wheel-inertial".to_string()),
    };
    let description = format!(
        "simulated {} trajectory at {} m/s through the {} scene, seed {}",
        sim.trajectory,
        sim.speed,
        sim.scene_name(),
        sim.seed
    );
    let meta = DatasetMeta {
        format_version: FORMAT_VERSION,
        lidars: lidars.clone(),
        frames,
        t0,
        scan_period: period,
        prior_source,
        description,
    };
    let scans = SimScans {
        scene,
        trajectory,
        lidars,
        meta_period: period,
        t0,
        sweep_motion: sim.sweep_motion && sim.trajectory != TrajectoryPreset::Static,
        range_noise: sim.range_noise,
        seed: sim.seed,
        threads: sim.threads,
    };
    Ok(Dataset::new(
        meta,
        imu,
        ground_truth,
        priors,
        Box::new(scans),
    ))
}

fn make_priors(
    config: &Config,
    imu: &[ImuSample],
    gt: &[crate::sim::TrajectorySample],
) -> Vec<PriorRecord> {
    let sim = &config.sim;
    match sim.prior {
        PriorSource::None => Vec::new(),
        PriorSource::Gyro => gt
            .windows(2)
            .enumerate()
            .map(|(i, w)| PriorRecord {
                frame: i + 1,
                timestamp: w[1].timestamp,
                delta: Pose::new(
                    integrate_gyro(imu, w[0].timestamp, w[1].timestamp),
                    Default::default(),
                ),
            })
            .collect(),
        PriorSource::Odometry => {
            let mut rng = ChaCha8Rng::seed_from_u64(sim.seed ^ 0x0D0_ED0);
            let [sigma_t, sigma_r] = sim.prior_noise;
            gt.windows(2)
                .enumerate()
                .map(|(i, w)| {
                    let mut n = || -> f64 { StandardNormal.sample(&mut rng) };
                    let noise = Vector6::new(
                        sigma_r * n(),
                        sigma_r * n(),
                        sigma_r * n(),
                        sigma_t * n(),
                        sigma_t * n(),
                        sigma_t * n(),
                    );
                    let truth = w[0].pose.inverse() * w[1].pose;
                    PriorRecord {
                        frame: i + 1,
                        timestamp: w[1].timestamp,
                        delta: truth * Pose::exp(&noise),
                    }
                })
                .collect()
        }
    }
}

/// Body rotation over `[t0, t1]` from piecewise-constant gyro rates.
pub fn integrate_gyro(imu: &[ImuSample], t0: f64, t1: f64) -> UnitQuaternion<f64> {
    if imu.is_empty() || !(t1 > t0) {
        return UnitQuaternion::identity();
    }
    let rate_at =
        |t: f64| imu[imu.partition_point(|s| s.timestamp <= t).saturating_sub(1)].angular_velocity;
    let mut knots = vec![t0];
    knots.extend(
        imu.iter()
            .map(|s| s.timestamp)
            .filter(|&t| t > t0 && t < t1),
    );
    knots.push(t1);
    knots.windows(2).fold(UnitQuaternion::identity(), |q, w| {
        q * UnitQuaternion::from_scaled_axis(rate_at(w[0]) * (w[1] - w[0]))
    })
}
