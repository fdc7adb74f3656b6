//! Recovers a known rigid motion between two views of a room.

use loam_kit::geometry::{se3_apply, Point3, Pose};
use loam_kit::normals::NormalEstimator;
use loam_kit::preprocess::voxel_downsample;
use loam_kit::registration::{gicp_align, GicpConfig, ScanTarget};
use loam_kit::sim::{simulate_scan, LidarModel, SceneSpec};
use nalgebra::Vector3;

fn main() -> loam_kit::Result<()> {
    let view = Pose::from_translation(Vector3::new(0.0, 0.0, 1.0));
    let scan = voxel_downsample(
        &simulate_scan(&SceneSpec::room(), &view, &LidarModel::vlp16()),
        0.1,
    );
    let target = NormalEstimator::new(10).estimate(&scan, &Point3::zeros())?;
    let truth = Pose::from_euler(0.02, -0.03, 0.12, Vector3::new(0.15, -0.08, 0.05));
    let source = se3_apply(&truth.inverse(), &target);

    let result = gicp_align(
        &source,
        &ScanTarget::new(&target)?,
        &Pose::identity(),
        &GicpConfig::default(),
    )?;
    for (i, it) in result.trace.iter().enumerate() {
        println!(
            "iter {i:>2}: cost {:.6e} -> {:.6e}  lambda {:.0e}  {}",
            it.cost,
            it.cost_after,
            it.lambda,
            if it.accepted { "accepted" } else { "rejected" }
        );
    }
    let (dt, dr) = result.pose.difference(&truth);
    println!(
        "converged {} in {} iterations; error {dt:.2e} m, {:.2e} deg",
        result.converged,
        result.iterations,
        dr.to_degrees()
    );
    Ok(())
}
