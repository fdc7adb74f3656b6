//! Absolute pose error of a trajectory with a small heading offset.

use loam_kit::eval::ape;
use loam_kit::geometry::Pose;
use loam_kit::sim::TrajectorySample;
use nalgebra::Vector3;

fn main() -> loam_kit::Result<()> {
    let gt: Vec<TrajectorySample> = (0..=50)
        .map(|i| TrajectorySample {
            timestamp: i as f64 * 0.1,
            pose: Pose::from_translation(Vector3::new(i as f64 * 0.2, 0.0, 0.0)),
        })
        .collect();
    // Same motion, but yawed 1 degree after the first pose.
    let yaw = Pose::from_euler(0.0, 0.0, 1f64.to_radians(), Vector3::zeros());
    let est: Vec<TrajectorySample> = gt
        .iter()
        .map(|s| TrajectorySample {
            timestamp: s.timestamp,
            pose: yaw * s.pose,
        })
        .collect();
    let stats = ape(&est, &gt)?;
    println!("{stats:#?}");
    println!("final error {:.3}% of distance", stats.final_error_pct());
    Ok(())
}
