//! Point-cloud preprocessing: gyro de-skew, multi-lidar merge with a
//! timeout health gate, robot body removal and the adaptive voxel filter.

mod deskew;
mod merge;
mod voxel;

pub use deskew::{motion_deskew, ImuSample};
pub use merge::{body_filter, merge_clouds, LidarFeed};
pub use voxel::{adaptive_voxel_filter, voxel_downsample, AdaptiveVoxelState};
