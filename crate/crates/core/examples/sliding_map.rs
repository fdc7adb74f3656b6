//! A robot-centered map window sliding along a corridor, for both backends.

use loam_kit::geometry::{se3_apply, Point3, Pose};
use loam_kit::map::{MapBackendKind, MapConfig, MapStore};
use loam_kit::normals::NormalEstimator;
use loam_kit::preprocess::voxel_downsample;
use loam_kit::sim::{simulate_scan, LidarModel, SceneSpec};
use nalgebra::Vector3;

fn main() -> loam_kit::Result<()> {
    let scene = SceneSpec::corridor(120.0, 3);
    let lidar = LidarModel::vlp16();
    for backend in [MapBackendKind::Mto, MapBackendKind::Ikd] {
        let config = MapConfig {
            backend,
            window_half_extent: 15.0,
            ..MapConfig::default()
        };
        let mut map = MapStore::new(config, Point3::zeros())?;
        println!("{backend}:");
        for step in 0..=20 {
            let pose = Pose::from_translation(Vector3::new(step as f64 * 5.0, 0.0, 1.0));
            let scan = voxel_downsample(&simulate_scan(&scene, &pose, &lidar), 0.2);
            let scan = NormalEstimator::new(10).estimate(&scan, &Point3::zeros())?;
            map.insert_scan(&se3_apply(&pose, &scan))?;
            if map.slide_window(pose.translation()) {
                map.wait_for_rebuild();
            }
            if step % 4 == 0 {
                let m = map.memory_stats();
                println!(
                    "  x = {:>5.1}  alive {:>6}  allocated {:>6}  slides {}",
                    pose.translation().x,
                    m.alive,
                    m.allocated,
                    map.slide_count()
                );
            }
        }
    }
    Ok(())
}
