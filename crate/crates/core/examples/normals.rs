//! PCA normals on a ray-cast scan, oriented toward the sensor.

use loam_kit::geometry::{Point3, Pose};
use loam_kit::normals::NormalEstimator;
use loam_kit::preprocess::voxel_downsample;
use loam_kit::sim::{simulate_scan, LidarModel, SceneSpec};
use nalgebra::Vector3;

fn main() -> loam_kit::Result<()> {
    let pose = Pose::from_translation(Vector3::new(0.0, 0.0, 1.0));
    let scan = voxel_downsample(
        &simulate_scan(&SceneSpec::room(), &pose, &LidarModel::vlp16()),
        0.1,
    );
    for cut in [None, Some(0.01)] {
        let estimator = NormalEstimator {
            max_surface_variation: cut,
            ..NormalEstimator::new(10)
        };
        let cloud = estimator.estimate(&scan, &Point3::zeros())?;
        let facing = cloud
            .points()
            .iter()
            .zip(cloud.normals().unwrap())
            .filter_map(|(p, n)| n.map(|n| n.as_vector().dot(p) <= 0.0))
            .filter(|&f| f)
            .count();
        println!(
            "variation cut {cut:?}: {} of {} points have normals, {facing} face the sensor",
            cloud.valid_normal_count(),
            cloud.len()
        );
    }
    Ok(())
}
