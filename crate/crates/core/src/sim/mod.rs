//! Synthetic worlds for testing: analytic scenes, a spinning lidar that
//! ray-casts them exactly, and smooth trajectories with matching IMU data.

mod lidar;
mod scene;
mod trajectory;

pub use lidar::{add_range_noise, simulate_scan, simulate_sweep, LidarModel};
pub use scene::{LoopCourse, Primitive, SceneSpec};
pub use trajectory::{Trajectory, TrajectoryPreset, TrajectorySample};
