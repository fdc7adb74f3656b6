//! The voxel leaf controller tracking a target point count while the scene
//! changes from a small room to a long corridor.

use loam_kit::geometry::Pose;
use loam_kit::preprocess::{adaptive_voxel_filter, AdaptiveVoxelState};
use loam_kit::sim::{simulate_scan, LidarModel, SceneSpec};
use nalgebra::Vector3;

fn main() -> loam_kit::Result<()> {
    let room = SceneSpec::room();
    let corridor = SceneSpec::corridor(60.0, 7);
    let lidar = LidarModel::vlp16();
    let mut state = AdaptiveVoxelState::new(0.25, 2000, 0.01, 2.0, 0.5)?;
    println!("frame scene     raw  kept  leaf");
    for frame in 0..16 {
        let (name, scene, at) = if frame < 8 {
            ("room", &room, Vector3::new(0.0, 0.0, 1.0))
        } else {
            ("corridor", &corridor, Vector3::new(20.0, 0.0, 1.0))
        };
        let scan = simulate_scan(scene, &Pose::from_translation(at), &lidar);
        let leaf = state.d_leaf;
        let (kept, next) = adaptive_voxel_filter(&scan, &state);
        println!(
            "{frame:>5} {name:<8} {:>5} {:>5} {leaf:.3}",
            scan.len(),
            kept.len()
        );
        state = next;
    }
    Ok(())
}
