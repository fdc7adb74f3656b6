use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::geometry::{se3_apply, PointCloud, Pose};

/// One lidar stream with its sensor-to-body extrinsic and health timeout.
#[derive(Clone, Debug, PartialEq)]
pub struct LidarFeed {
    pub id: String,
    pub extrinsic: Pose,
    pub last_msg_time: f64,
    timeout: f64,
}

impl LidarFeed {
    pub fn new(id: impl Into<String>, extrinsic: Pose, timeout: f64) -> Result<Self> {
        if !(timeout > 0.0) {
            return Err(Error::invalid(format!(
                "lidar timeout must be positive, got {timeout}"
            )));
        }
        Ok(Self {
            id: id.into(),
            extrinsic,
            last_msg_time: f64::NEG_INFINITY,
            timeout,
        })
    }

    pub fn timeout(&self) -> f64 {
        self.timeout
    }

    /// A feed is healthy while its last message is no older than the timeout.
    pub fn is_healthy(&self, now: f64) -> bool {
        now - self.last_msg_time <= self.timeout
    }
}

/// Concatenates every healthy feed's cloud after mapping it into the body
/// frame. Stale feeds are skipped; if none are healthy the result is empty.
pub fn merge_clouds(frames: &[(LidarFeed, PointCloud)], now: f64) -> PointCloud {
    let mut merged = PointCloud::default().with_frame_id("body");
    for (feed, cloud) in frames.iter().filter(|(f, _)| f.is_healthy(now)) {
        merged.extend_from(&se3_apply(&feed.extrinsic, cloud));
    }
    merged
}

/// Drops points inside the closed box `|x| <= hx, |y| <= hy, |z| <= hz`.
pub fn body_filter(cloud: &PointCloud, half_extents: &Vector3<f64>) -> PointCloud {
    let pts = cloud.points();
    cloud.retain_indices(|i| {
        let p = pts[i];
        !(p.x.abs() <= half_extents.x && p.y.abs() <= half_extents.y && p.z.abs() <= half_extents.z)
    })
}
