use nalgebra::Vector3;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::SceneSpec;
use crate::geometry::{Point3, PointCloud, Pose};
use crate::parallel::par_map;
use crate::{Error, Result};

/// Spinning multi-beam lidar. Beams are spread evenly over a vertical field
/// of view centered on the horizon; columns are fired in azimuth order over
/// one scan period.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LidarModel {
    pub channels: usize,
    /// Radians between columns.
    pub horizontal_resolution: f64,
    /// Full vertical field of view, radians.
    pub vertical_fov: f64,
    pub min_range: f64,
    pub max_range: f64,
    /// Seconds per revolution.
    pub scan_period: f64,
}

impl Default for LidarModel {
    fn default() -> Self {
        Self::vlp16()
    }
}

impl LidarModel {
    pub fn vlp16() -> Self {
        Self {
            channels: 16,
            horizontal_resolution: 0.2f64.to_radians(),
            vertical_fov: 30f64.to_radians(),
            min_range: 0.3,
            max_range: 100.0,
            scan_period: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.channels >= 1
            && self.horizontal_resolution > 0.0
            && self.horizontal_resolution <= std::f64::consts::TAU
            && (0.0..std::f64::consts::PI).contains(&self.vertical_fov)
            && self.min_range >= 0.0
            && self.max_range > self.min_range
            && self.scan_period > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid lidar model {self:?}")))
        }
    }

    pub fn columns(&self) -> usize {
        (std::f64::consts::TAU / self.horizontal_resolution)
            .round()
            .max(1.0) as usize
    }

    fn elevation(&self, ring: usize) -> f64 {
        if self.channels == 1 {
            0.0
        } else {
            -self.vertical_fov / 2.0 + self.vertical_fov * ring as f64 / (self.channels - 1) as f64
        }
    }

    /// Unit beam direction in the sensor frame.
    pub fn direction(&self, column: usize, ring: usize) -> Vector3<f64> {
        let az = column as f64 * self.horizontal_resolution;
        let el = self.elevation(ring);
        Vector3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin())
    }

    /// Offset of a column from the start of the sweep.
    pub fn column_time(&self, column: usize) -> f64 {
        self.scan_period * column as f64 / self.columns() as f64
    }
}

/// Casts one sweep. The sensor pose may move during the sweep; each point
/// is expressed in the sensor frame at the instant its beam fired, and its
/// timestamp is the offset from `t_start`.
pub fn simulate_sweep(
    scene: &SceneSpec,
    lidar: &LidarModel,
    t_start: f64,
    sensor_pose: impl Fn(f64) -> Pose + Sync,
    threads: usize,
) -> PointCloud {
    let columns = lidar.columns();
    let per_column = par_map(columns, threads, |c| {
        let dt = lidar.column_time(c);
        let pose = sensor_pose(t_start + dt);
        let origin = *pose.translation();
        let mut hits = Vec::new();
        for ring in 0..lidar.channels {
            let d = lidar.direction(c, ring);
            if let Some(r) = scene.cast(&origin, &pose.transform_vector(&d)) {
                if r >= lidar.min_range && r <= lidar.max_range {
                    hits.push((d * r, dt));
                }
            }
        }
        hits
    });
    let (points, stamps): (Vec<Point3>, Vec<f64>) = per_column.into_iter().flatten().unzip();
    PointCloud::new(points)
        .with_timestamps(stamps)
        .expect("one timestamp per point")
        .with_frame_id("sensor")
}

/// One sweep from a fixed pose.
pub fn simulate_scan(scene: &SceneSpec, pose: &Pose, lidar: &LidarModel) -> PointCloud {
    simulate_sweep(scene, lidar, 0.0, |_| *pose, 1)
}

/// Perturbs every range by zero-mean Gaussian noise, moving points along
/// their beams.
pub fn add_range_noise(cloud: &PointCloud, sigma: f64, rng: &mut impl Rng) -> PointCloud {
    if !(sigma > 0.0) {
        return cloud.clone();
    }
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    let mut out = cloud.clone();
    for p in out.points_mut() {
        let r = p.norm();
        if r > 0.0 {
            *p *= 1.0 + normal.sample(rng) / r;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Primitive;

    fn cube() -> SceneSpec {
        SceneSpec::new(vec![Primitive::Box {
            min: Point3::new(-5.0, -5.0, -5.0),
            max: Point3::new(5.0, 5.0, 5.0),
        }])
        .unwrap()
    }

    #[test]
    fn horizon_axis_beams_hit_at_five_meters() {
        let lidar = LidarModel {
            channels: 3,
            horizontal_resolution: std::f64::consts::FRAC_PI_2,
            vertical_fov: std::f64::consts::FRAC_PI_2,
            ..LidarModel::vlp16()
        };
        let cloud = simulate_scan(&cube(), &Pose::identity(), &lidar);
        assert_eq!(cloud.len(), 12);
        let horizon: Vec<_> = cloud
            .points()
            .iter()
            .filter(|p| p.z.abs() < 1e-12)
            .collect();
        assert_eq!(horizon.len(), 4);
        for p in horizon {
            assert!((p.norm() - 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn timestamps_follow_azimuth() {
        let lidar = LidarModel::vlp16();
        let cloud = simulate_scan(&SceneSpec::room(), &Pose::identity(), &lidar);
        let t = cloud.timestamps().unwrap();
        assert!(t.windows(2).all(|w| w[0] <= w[1]));
        assert!(t[0] >= 0.0 && *t.last().unwrap() < lidar.scan_period);
        assert_eq!(lidar.columns(), 1800);
    }

    #[test]
    fn yaw_by_whole_columns_permutes_points() {
        let lidar = LidarModel::vlp16();
        let scene = SceneSpec::room();
        let shift = 45;
        let yaw = shift as f64 * lidar.horizontal_resolution;
        let pose = Pose::from_euler(0.0, 0.0, yaw, Vector3::new(0.0, 0.0, 1.2));
        let a = simulate_scan(
            &scene,
            &Pose::from_translation(Vector3::new(0.0, 0.0, 1.2)),
            &lidar,
        );
        let b = simulate_scan(&scene, &pose, &lidar);
        assert_eq!(a.len(), b.len());
        let world_b: Vec<Point3> = b.points().iter().map(|p| pose.transform_point(p)).collect();
        let tree = crate::index::StaticKdTree::build(a.points());
        for p in &world_b {
            let q = p - Vector3::new(0.0, 0.0, 1.2);
            let (_, d2) = tree.nearest(&q).unwrap();
            assert!(d2 < 1e-18, "{d2}");
        }
    }

    #[test]
    fn hits_lie_on_surfaces_from_any_pose() {
        let lidar = LidarModel::vlp16();
        let scene = SceneSpec::room();
        let pose = Pose::from_euler(0.05, -0.03, 0.7, Vector3::new(0.8, -0.4, 1.1));
        let cloud = simulate_scan(&scene, &pose, &lidar);
        assert!(cloud.len() > 20_000);
        let o = *pose.translation();
        for p in cloud.points().iter().step_by(97) {
            let w = pose.transform_point(p);
            let d = (w - o).normalize();
            let r = scene.cast(&o, &d).unwrap();
            assert!((r - (w - o).norm()).abs() < 1e-9);
        }
    }

    #[test]
    fn moving_sweep_uses_per_beam_pose() {
        let lidar = LidarModel::vlp16();
        let scene = SceneSpec::room();
        let at = |t: f64| Pose::from_translation(Vector3::new(t, 0.0, 1.0));
        let cloud = simulate_sweep(&scene, &lidar, 0.0, at, 2);
        let stamps = cloud.timestamps().unwrap();
        for (p, t) in cloud.points().iter().zip(stamps).step_by(101) {
            let pose = at(*t);
            let w = pose.transform_point(p);
            let d = (w - pose.translation()).normalize();
            assert!((scene.cast(pose.translation(), &d).unwrap() - p.norm()).abs() < 1e-9);
        }
    }
}
